//! P1 finite elements for `-div(κ ∇w) + ρ w = f` with Dirichlet data.
//!
//! Mass terms use vertex (lumped) quadrature, so `∫ ρ φ_i φ_j` is diagonal
//! with entries `ρ_i m_i`, `m_i = Σ_{T∋i} |T|/3`. Every bilinear form in the
//! crate is evaluated with exactly these rules; identities between DtN
//! pairings and volume integrals are therefore exact up to solver tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TriangleMesh};
use crate::quadrature;

/// Symmetric sparse matrix in compressed-row form over the mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Zero matrix with the vertex-adjacency pattern of `mesh`.
    fn with_mesh_pattern(mesh: &TriangleMesh) -> Self {
        let n = mesh.num_vertices();
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &[a, b] in mesh.edges() {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(n + 2 * mesh.edges().len());
        row_ptr.push(0);
        for mut row in neighbours {
            row.sort_unstable();
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self { row_ptr, col_idx, values }
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.position(i, j).expect("entry outside the mesh pattern");
        self.values[p] += v;
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `max |A_ij − A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Add `ρ_i m_i` to the diagonal.
    fn add_lumped_mass(&mut self, mesh: &TriangleMesh, rho: &[f64]) {
        for (i, (&r, &m)) in rho.iter().zip(mesh.lumped_mass()).enumerate() {
            self.add(i, i, r * m);
        }
    }
}

/// Per-edge weights `W_e` of the unit-conductivity P1 stiffness matrix,
/// `K₀ = Σ_e W_e (e_i − e_j)(e_i − e_j)ᵀ`, aligned with `mesh.edges()`.
/// These are the cotangent weights summed over the triangles sharing `e`.
pub fn stiffness_edge_weights(mesh: &TriangleMesh) -> Vec<f64> {
    let mut weights = vec![0.0; mesh.edges().len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let grads = mesh.basis_gradients(t);
        let area = mesh.triangle_areas()[t];
        for a in 0..3 {
            for b in (a + 1)..3 {
                let (i, j) = (tri[a], tri[b]);
                let key = [i.min(j), i.max(j)];
                let e = mesh.edges().binary_search(&key).expect("edge of a triangle");
                weights[e] -= area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
            }
        }
    }
    weights
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

fn check_rho(rho: &[f64]) -> Result<()> {
    if let Some(k) = rho.iter().position(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidArgument(format!("rho[{k}] = {} is negative", rho[k])));
    }
    Ok(())
}

/// Standard P1 assembly with elementwise-constant `kappa` and lumped `rho`.
pub fn assemble(mesh: &TriangleMesh, kappa: &[f64], rho: &[f64]) -> Result<SparseOperator> {
    check_len("kappa", kappa.len(), mesh.triangles().len())?;
    check_len("rho", rho.len(), mesh.num_vertices())?;
    if let Some(t) = kappa.iter().position(|k| !(*k > 0.0)) {
        return Err(Error::InvalidArgument(format!("kappa[{t}] = {} is not positive", kappa[t])));
    }
    check_rho(rho)?;
    let mut op = SparseOperator::with_mesh_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let grads = mesh.basis_gradients(t);
        let scale = kappa[t] * mesh.triangle_areas()[t];
        for a in 0..3 {
            for b in 0..3 {
                op.add(tri[a], tri[b], scale * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]));
            }
        }
    }
    op.add_lumped_mass(mesh, rho);
    Ok(op)
}

/// P1 stiffness with a conductivity per mesh edge:
/// `K = Σ_e κ_e W_e (e_i − e_j)(e_i − e_j)ᵀ + diag(ρ m)`.
/// With constant `κ_e` this is the standard P1 matrix. With `κ_e` the secant
/// mean of `a` along the edge, `K(u) u = K₀ A(u)` holds exactly.
pub fn assemble_edge(mesh: &TriangleMesh, edge_kappa: &[f64], rho: &[f64]) -> Result<SparseOperator> {
    EdgeStiffness::new(mesh).assemble(mesh, edge_kappa, rho)
}

/// Cached edge weights and matrix slots for repeated edge-conductivity
/// assembly on one mesh.
#[derive(Debug, Clone)]
pub struct EdgeStiffness {
    weights: Vec<f64>,
    pattern: SparseOperator,
    // CSR positions of (i,i), (j,j), (i,j), (j,i) per edge.
    slots: Vec<[usize; 4]>,
    diag: Vec<usize>,
    k0: SparseOperator,
}

impl EdgeStiffness {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let weights = stiffness_edge_weights(mesh);
        let pattern = SparseOperator::with_mesh_pattern(mesh);
        let pos = |i, j| pattern.position(i, j).expect("mesh edge in pattern");
        let slots = mesh.edges().iter().map(|&[i, j]| [pos(i, i), pos(j, j), pos(i, j), pos(j, i)]).collect();
        let diag = (0..mesh.num_vertices()).map(|i| pos(i, i)).collect();
        let mut out = Self { weights, k0: pattern.clone(), pattern, slots, diag };
        out.k0 = out.fill(&vec![1.0; mesh.edges().len()], None);
        out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unit-conductivity stiffness `K₀` in edge form.
    pub fn laplace(&self) -> &SparseOperator {
        &self.k0
    }

    fn fill(&self, edge_kappa: &[f64], mass: Option<(&[f64], &[f64])>) -> SparseOperator {
        let mut op = self.pattern.clone();
        for ((s, &w), &k) in self.slots.iter().zip(&self.weights).zip(edge_kappa) {
            let v = k * w;
            op.values[s[0]] += v;
            op.values[s[1]] += v;
            op.values[s[2]] -= v;
            op.values[s[3]] -= v;
        }
        if let Some((rho, m)) = mass {
            for ((&d, &r), &m) in self.diag.iter().zip(rho).zip(m) {
                op.values[d] += r * m;
            }
        }
        op
    }

    pub fn assemble(&self, mesh: &TriangleMesh, edge_kappa: &[f64], rho: &[f64]) -> Result<SparseOperator> {
        check_len("edge kappa", edge_kappa.len(), self.weights.len())?;
        check_len("rho", rho.len(), mesh.num_vertices())?;
        if let Some(e) = edge_kappa.iter().position(|k| !(*k > 0.0)) {
            return Err(Error::InvalidArgument(format!("edge kappa[{e}] = {} is not positive", edge_kappa[e])));
        }
        check_rho(rho)?;
        Ok(self.fill(edge_kappa, Some((rho, mesh.lumped_mass()))))
    }
}

/// Unit-conductivity stiffness matrix `K₀` (no mass term).
pub fn laplace(mesh: &TriangleMesh) -> SparseOperator {
    let kappa = vec![1.0; mesh.triangles().len()];
    let rho = vec![0.0; mesh.num_vertices()];
    assemble(mesh, &kappa, &rho).expect("unit conductivity is admissible")
}

/// Nodal field on a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self { values: vec![0.0; mesh.num_vertices()] }
    }

    pub fn from_fn(mesh: &TriangleMesh, f: impl Fn(Point) -> f64) -> Self {
        Self { values: mesh.vertices().iter().map(|&p| f(p)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn trace(&self, mesh: &TriangleMesh) -> BoundaryDatum {
        BoundaryDatum { values: mesh.boundary_vertices().iter().map(|&v| self.values[v]).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Values at the boundary vertices, in boundary traversal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDatum {
    pub values: Vec<f64>,
}

impl BoundaryDatum {
    pub fn new(mesh: &TriangleMesh, values: Vec<f64>) -> Result<Self> {
        check_len("boundary datum", values.len(), mesh.num_boundary_vertices())?;
        Ok(Self { values })
    }

    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self { values: vec![0.0; mesh.num_boundary_vertices()] }
    }

    pub fn constant(mesh: &TriangleMesh, value: f64) -> Self {
        Self { values: vec![value; mesh.num_boundary_vertices()] }
    }

    /// Sample `f(x, s)` at the boundary vertices, `s` the normalised
    /// arclength from the loop start.
    pub fn from_fn(mesh: &TriangleMesh, f: impl Fn(Point, f64) -> f64) -> Self {
        let values = mesh.boundary_vertices().iter().zip(mesh.boundary_arclength()).map(|(&v, &s)| f(mesh.vertex(v), s)).collect();
        Self { values }
    }

    pub fn scaled(&self, tau: f64) -> Self {
        Self { values: self.values.iter().map(|v| tau * v).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Full-length vertex vector carrying the datum on the boundary and zero inside.
    pub fn extend_by_zero(&self, mesh: &TriangleMesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.num_vertices()];
        for (&v, &g) in mesh.boundary_vertices().iter().zip(&self.values) {
            out[v] = g;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Stop once `‖r‖ ≤ rel_tol · ‖b‖`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG on the unknowns flagged `free`; the other
/// entries of `x` are held at zero.
fn pcg(op: &SparseOperator, rhs: &[f64], free: &[bool], x: &mut [f64], opts: CgOptions) -> Result<CgStats> {
    let n = rhs.len();
    let diag = op.diagonal();
    let inv_diag: Vec<f64> = diag.iter().zip(free).map(|(&d, &f)| if f { 1.0 / d } else { 0.0 }).collect();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let masked_apply = |v: &[f64], out: &mut [f64]| {
        op.matvec(v, out);
        for (o, &f) in out.iter_mut().zip(free) {
            if !f {
                *o = 0.0;
            }
        }
    };

    let b_norm = rhs.iter().zip(free).filter(|(_, &f)| f).map(|(b, _)| b * b).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v = 0.0);
    if b_norm == 0.0 {
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r: Vec<f64> = rhs.iter().zip(free).map(|(&b, &f)| if f { b } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        masked_apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgDidNotConverge { iterations: it, residual: dot(&r, &r).sqrt() / b_norm });
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= opts.rel_tol {
            return Ok(CgStats { iterations: it, relative_residual: res });
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::CgDidNotConverge { iterations: opts.max_iter, residual: dot(&r, &r).sqrt() / b_norm })
}

/// Dirichlet solve with an assembled load vector: interior rows of
/// `op · u = load`, boundary values `u = g`. Boundary columns are moved to
/// the right-hand side so the interior system stays symmetric.
pub fn solve_dirichlet_load(
    mesh: &TriangleMesh,
    op: &SparseOperator,
    g: &BoundaryDatum,
    load: &[f64],
    opts: CgOptions,
) -> Result<(ScalarField, CgStats)> {
    check_len("operator", op.dim(), mesh.num_vertices())?;
    check_len("boundary datum", g.len(), mesh.num_boundary_vertices())?;
    check_len("load", load.len(), mesh.num_vertices())?;
    let lifted = g.extend_by_zero(mesh);
    let k_lift = op.apply(&lifted);
    let free: Vec<bool> = mesh.boundary_vertex_flags().iter().map(|b| !b).collect();
    let rhs: Vec<f64> = load.iter().zip(&k_lift).map(|(l, k)| l - k).collect();
    let mut x = vec![0.0; mesh.num_vertices()];
    let stats = pcg(op, &rhs, &free, &mut x, opts)?;
    for (xi, &l) in x.iter_mut().zip(&lifted) {
        *xi += l;
    }
    Ok((ScalarField::new(x), stats))
}

/// Dirichlet solve with a nodal source `f` (lumped load `m_i f_i`).
pub fn solve_dirichlet(mesh: &TriangleMesh, op: &SparseOperator, g: &BoundaryDatum, f: &[f64]) -> Result<ScalarField> {
    solve_dirichlet_with(mesh, op, g, f, CgOptions::default()).map(|(u, _)| u)
}

pub fn solve_dirichlet_with(
    mesh: &TriangleMesh,
    op: &SparseOperator,
    g: &BoundaryDatum,
    f: &[f64],
    opts: CgOptions,
) -> Result<(ScalarField, CgStats)> {
    check_len("source", f.len(), mesh.num_vertices())?;
    let load: Vec<f64> = f.iter().zip(mesh.lumped_mass()).map(|(f, m)| f * m).collect();
    solve_dirichlet_load(mesh, op, g, &load, opts)
}

/// Discrete harmonic extension of `g` (unit conductivity, no mass term).
pub fn harmonic_extension(mesh: &TriangleMesh, g: &BoundaryDatum) -> Result<ScalarField> {
    let zero = vec![0.0; mesh.num_vertices()];
    solve_dirichlet(mesh, &laplace(mesh), g, &zero)
}

/// Lumped `L²` norm `(Σ m_i v_i²)^{1/2}`.
pub fn l2_norm(mesh: &TriangleMesh, v: &[f64]) -> f64 {
    v.iter().zip(mesh.lumped_mass()).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

/// Lumped `L²` distance between two nodal fields.
pub fn l2_distance(mesh: &TriangleMesh, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(mesh.lumped_mass()).map(|((x, y), m)| m * (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `H¹` norm of a P1 field: `(∫|∇v|² + Σ m_i v_i²)^{1/2}`.
pub fn h1_norm(mesh: &TriangleMesh, k0: &SparseOperator, v: &[f64]) -> f64 {
    (k0.bilinear(v, v) + l2_norm(mesh, v).powi(2)).sqrt()
}

/// `‖v_h − u‖_{L²}` against an exact function, by the seven-point rule on
/// each triangle.
pub fn l2_error_exact(mesh: &TriangleMesh, v: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let mut total = 0.0;
    for tri in mesh.triangles() {
        let pts = tri.map(|k| mesh.vertex(k));
        total += quadrature::integrate_triangle(&pts, &|p, l: [f64; 3]| {
            let vh = l[0] * v[tri[0]] + l[1] * v[tri[1]] + l[2] * v[tri[2]];
            (vh - exact(p)).powi(2)
        });
    }
    total.sqrt()
}

/// `|v_h − u|_{H¹}` against an exact gradient.
pub fn h1_seminorm_error_exact(mesh: &TriangleMesh, v: &[f64], grad: impl Fn(Point) -> Point) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.basis_gradients(t);
        let gh = [0, 1].map(|d| (0..3).map(|a| g[a][d] * v[tri[a]]).sum::<f64>());
        let pts = tri.map(|k| mesh.vertex(k));
        total += quadrature::integrate_triangle(&pts, &|p, _| {
            let ge = grad(p);
            (gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2)
        });
    }
    total.sqrt()
}

/// Surrogate for `‖g‖_{H^{1/2}(∂Ω)}`: the `H¹` norm of the discrete harmonic
/// extension of `g`.
pub fn h_half_norm(mesh: &TriangleMesh, g: &BoundaryDatum) -> Result<f64> {
    let k0 = laplace(mesh);
    let zero = vec![0.0; mesh.num_vertices()];
    let ext = solve_dirichlet(mesh, &k0, g, &zero)?;
    Ok(h1_norm(mesh, &k0, &ext.values))
}

/// Write `vertex,x,y,value` rows.
pub fn write_field_csv(mesh: &TriangleMesh, field: &ScalarField, mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "vertex,x,y,value")?;
    for (v, (p, val)) in mesh.vertices().iter().zip(&field.values).enumerate() {
        writeln!(out, "{v},{:.17e},{:.17e},{:.17e}", p[0], p[1], val)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Region;

    fn square(n: usize) -> TriangleMesh {
        TriangleMesh::generate(Region::UnitSquare, n).unwrap()
    }

    #[test]
    fn single_element_stiffness() {
        let mesh = TriangleMesh::from_parts(Region::UnitSquare, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let op = assemble(&mesh, &[1.0], &[0.0; 3]).unwrap();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                assert!((op.get(i, j) - w).abs() < 1e-15, "({i},{j})");
            }
        }
        let edge_op = assemble_edge(&mesh, &[1.0; 3], &[0.0; 3]).unwrap();
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                assert!((edge_op.get(i, j) - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_kappa() {
        let mesh = square(2);
        let mut kappa = vec![1.0; mesh.triangles().len()];
        kappa[3] = 0.0;
        assert!(assemble(&mesh, &kappa, &[0.0; 9]).is_err());
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_symmetric() {
        for region in [Region::UnitSquare, Region::UnitDisk] {
            let mesh = TriangleMesh::generate(region, 5).unwrap();
            let k0 = laplace(&mesh);
            assert!(k0.row_sums().iter().all(|s| s.abs() < 1e-12));
            assert!(k0.max_asymmetry() < 1e-12);
            let e = assemble_edge(&mesh, &vec![1.0; mesh.edges().len()], &vec![0.0; mesh.num_vertices()]).unwrap();
            for i in 0..mesh.num_vertices() {
                for (j, v) in k0.row(i) {
                    assert!((e.get(i, j) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn harmonic_xy_reproduced_at_vertices() {
        let mesh = square(8);
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] * p[1]);
        let u = harmonic_extension(&mesh, &g).unwrap();
        for (p, v) in mesh.vertices().iter().zip(&u.values) {
            assert!((v - p[0] * p[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let mesh = TriangleMesh::generate(Region::UnitDisk, 6).unwrap();
        let u = harmonic_extension(&mesh, &BoundaryDatum::constant(&mesh, 2.5)).unwrap();
        assert!(u.values.iter().all(|v| (v - 2.5).abs() < 1e-10));
    }

    #[test]
    fn galerkin_orthogonality_and_max_principle() {
        let mesh = square(12);
        let n = mesh.num_vertices();
        let rho: Vec<f64> = mesh.vertices().iter().map(|p| 1.0 + p[0]).collect();
        let op = assemble(&mesh, &vec![1.0; mesh.triangles().len()], &rho).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| (3.0 * p[0]).sin() + p[1] * p[1]);
        let u = solve_dirichlet(&mesh, &op, &g, &vec![0.0; n]).unwrap();
        let r = op.apply(&u.values);
        for (v, rv) in r.iter().enumerate() {
            if !mesh.is_boundary(v) {
                assert!(rv.abs() <= 1e-9);
            }
        }
        let (gmin, gmax) = g.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(u.min() >= gmin.min(0.0) - 1e-12 && u.max() <= gmax.max(0.0) + 1e-12);
    }

    #[test]
    fn h_half_norm_examples() {
        let mesh = TriangleMesh::generate(Region::UnitDisk, 8).unwrap();
        assert_eq!(h_half_norm(&mesh, &BoundaryDatum::zeros(&mesh)).unwrap(), 0.0);
        let one = h_half_norm(&mesh, &BoundaryDatum::constant(&mesh, 1.0)).unwrap();
        assert!((one - mesh.area().sqrt()).abs() < 1e-10);
        assert!((one - std::f64::consts::PI.sqrt()).abs() < 2e-2);
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] - 0.3 * p[1] * p[1]);
        let base = h_half_norm(&mesh, &g).unwrap();
        for tau in [-2.0, 0.5, 3.0] {
            let scaled = h_half_norm(&mesh, &g.scaled(tau)).unwrap();
            assert!((scaled - tau.abs() * base).abs() <= 1e-12 * (1.0 + scaled));
        }
    }

    #[test]
    fn field_csv_layout() {
        let mesh = square(2);
        let mut buf = Vec::new();
        write_field_csv(&mesh, &ScalarField::zeros(&mesh), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("vertex,x,y,value\n0,0.00000000000000000e0,"));
    }

    #[test]
    fn manufactured_solution_rates() {
        use std::f64::consts::PI;
        let exact = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
        let grad = |p: Point| [PI * (PI * p[0]).cos() * (PI * p[1]).sin(), PI * (PI * p[0]).sin() * (PI * p[1]).cos()];
        let (mut hs, mut l2, mut h1) = (Vec::new(), Vec::new(), Vec::new());
        for n in [8, 16, 32, 64] {
            let mesh = square(n);
            let op = assemble(&mesh, &vec![1.0; mesh.triangles().len()], &vec![1.0; mesh.num_vertices()]).unwrap();
            let f: Vec<f64> = mesh.vertices().iter().map(|&p| (2.0 * PI * PI + 1.0) * exact(p)).collect();
            let u = solve_dirichlet(&mesh, &op, &BoundaryDatum::zeros(&mesh), &f).unwrap();
            hs.push(mesh.max_diameter());
            l2.push(l2_error_exact(&mesh, &u.values, exact));
            h1.push(h1_seminorm_error_exact(&mesh, &u.values, grad));
        }
        for o in crate::stats::observed_orders(&hs, &l2) {
            assert!((o - 2.0).abs() <= 0.2, "L2 order {o}");
        }
        for o in crate::stats::observed_orders(&hs, &h1) {
            assert!((o - 1.0).abs() <= 0.2, "H1 order {o}");
        }
    }
}
