//! Discrete Dirichlet-to-Neumann maps.
//!
//! A response is the vector of weak conormal pairings
//! `⟨a(u)∂ₙu, φ_i⟩ = ∫ a(u)∇u·∇φ_i + c u φ_i` over the boundary hat
//! functions, evaluated with the assembly quadrature. With edge secant
//! conductivities this is the boundary part of `K₀ A(u) + M c u`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientA, CoefficientC};
use crate::error::{Error, Result};
use crate::fem::{BoundaryDatum, ScalarField};
use crate::io::{self, Table};
use crate::mesh::TriangleMesh;
use crate::solver::{Forward, SolveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtnResponse {
    /// One entry per boundary vertex, in boundary traversal order.
    pub pairings: Vec<f64>,
}

impl DtnResponse {
    pub fn zeros(n: usize) -> Self {
        Self { pairings: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.pairings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairings.is_empty()
    }

    /// `⟨Λg, h⟩` for `h` given by its nodal boundary values.
    pub fn pair(&self, h: &BoundaryDatum) -> f64 {
        self.pairings.iter().zip(&h.values).map(|(a, b)| a * b).sum()
    }

    pub fn difference(&self, other: &DtnResponse) -> DtnResponse {
        Self { pairings: self.pairings.iter().zip(&other.pairings).map(|(a, b)| a - b).collect() }
    }

    pub fn scaled(&self, s: f64) -> DtnResponse {
        Self { pairings: self.pairings.iter().map(|a| s * a).collect() }
    }

    /// Dual-norm surrogate `(Σ r_i² / m_i)^{1/2}` with lumped boundary masses.
    pub fn dual_norm(&self, mesh: &TriangleMesh) -> f64 {
        self.pairings.iter().zip(boundary_mass(mesh)).map(|(r, m)| r * r / m).sum::<f64>().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.pairings.iter().map(|r| r * r).sum()
    }
}

/// Lumped boundary mass per boundary vertex: half the length of each
/// adjacent boundary edge.
pub fn boundary_mass(mesh: &TriangleMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_boundary_vertices()];
    for e in mesh.boundary_edges() {
        for &v in &e.vertices {
            let k = mesh.boundary_position(v).expect("edge vertex on the boundary");
            m[k] += 0.5 * e.length;
        }
    }
    m
}

fn restrict_to_boundary(mesh: &TriangleMesh, full: &[f64]) -> DtnResponse {
    DtnResponse { pairings: mesh.boundary_vertices().iter().map(|&v| full[v]).collect() }
}

/// Pairings of an already solved field `u`.
pub fn conormal_pairings(fwd: &Forward<'_>, a: &CoefficientA, c: &CoefficientC, u: &ScalarField) -> DtnResponse {
    restrict_to_boundary(fwd.mesh(), &fwd.residual(a, c, &u.values))
}

/// Solve the quasilinear problem by Picard iteration and return the response
/// together with the solution.
pub fn dtn_apply_with(fwd: &Forward<'_>, a: &CoefficientA, c: &CoefficientC, g: &BoundaryDatum) -> Result<(DtnResponse, ScalarField)> {
    let (u, _) = fwd.picard(a, c, g)?;
    Ok((conormal_pairings(fwd, a, c, &u), u))
}

pub fn dtn_apply(mesh: &TriangleMesh, a: &CoefficientA, c: &CoefficientC, g: &BoundaryDatum) -> Result<DtnResponse> {
    let fwd = Forward::new(mesh, SolveOptions::default())?;
    Ok(dtn_apply_with(&fwd, a, c, g)?.0)
}

/// Pairings of a linear solve `v` of `-a₀Δv + cv = 0`.
pub fn linear_pairings(fwd: &Forward<'_>, a0: f64, c: &CoefficientC, v: &[f64]) -> DtnResponse {
    let mesh = fwd.mesh();
    let mut r = fwd.laplace().apply(v);
    for (k, rk) in r.iter_mut().enumerate() {
        *rk = a0 * *rk + c.values()[k] * mesh.lumped_mass()[k] * v[k];
    }
    restrict_to_boundary(mesh, &r)
}

/// `Λ*_{a₀,c} g` by one linear solve.
pub fn linear_response(fwd: &Forward<'_>, a0: f64, c: &CoefficientC, g: &BoundaryDatum) -> Result<DtnResponse> {
    let v = fwd.solve_linear(a0, c, g)?;
    Ok(linear_pairings(fwd, a0, c, &v.values))
}

/// Dense matrix of the linear DtN map over the boundary hat basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDtnMatrix {
    matrix: DMatrix<f64>,
}

impl LinearDtnMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, g: &BoundaryDatum) -> DtnResponse {
        let x = nalgebra::DVector::from_column_slice(&g.values);
        DtnResponse { pairings: (&self.matrix * x).iter().copied().collect() }
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn to_table(&self) -> Table {
        io::matrix_table(self.dim(), self.dim(), |i, j| self.matrix[(i, j)])
    }
}

fn check_a0(a0: f64, alpha: f64) -> Result<()> {
    if !(a0 >= alpha && a0 <= 1.0 / alpha) {
        return Err(Error::Admissibility(format!("a(0) = {a0} outside [{alpha}, {}]", 1.0 / alpha)));
    }
    Ok(())
}

/// Column `j` is the response to the `j`-th boundary hat function.
pub fn dtn_linearized_with(fwd: &Forward<'_>, a0: f64, c: &CoefficientC) -> Result<LinearDtnMatrix> {
    check_a0(a0, c.alpha())?;
    let mesh = fwd.mesh();
    let nb = mesh.num_boundary_vertices();
    let columns = (0..nb)
        .into_par_iter()
        .map(|j| {
            let mut g = BoundaryDatum::zeros(mesh);
            g.values[j] = 1.0;
            linear_response(fwd, a0, c, &g)
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = DMatrix::from_fn(nb, nb, |i, j| columns[j].pairings[i]);
    Ok(LinearDtnMatrix { matrix })
}

pub fn dtn_linearized(mesh: &TriangleMesh, a0: f64, c: &CoefficientC) -> Result<LinearDtnMatrix> {
    dtn_linearized_with(&Forward::new(mesh, SolveOptions::default())?, a0, c)
}

/// Table `(tau, deviation)` with deviation the dual-norm distance between
/// `τ⁻¹ Λ_{a,c}(τ g*)` and `Λ*_{a(0),c} g*`. The nonlinear tolerance is
/// scaled by `τ` so the solver error stays below the deviation.
pub fn linearization_limit(
    mesh: &TriangleMesh,
    a: &CoefficientA,
    c: &CoefficientC,
    g_star: &BoundaryDatum,
    taus: &[f64],
    opts: SolveOptions,
) -> Result<Table> {
    if taus.iter().any(|&t| !(t > 0.0)) || taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("tau sequence must be positive and decreasing".into()));
    }
    let a0 = a.eval(0.0);
    let base = Forward::new(mesh, opts)?;
    let reference = linear_response(&base, a0, c, g_star)?;
    let deviations = taus
        .par_iter()
        .map(|&tau| {
            let fwd = Forward::new(mesh, opts.with_tol(opts.tol * tau))?;
            let (r, _) = dtn_apply_with(&fwd, a, c, &g_star.scaled(tau))?;
            Ok(r.scaled(1.0 / tau).difference(&reference).dual_norm(mesh))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut table = Table::new(["tau", "deviation"]);
    for (&t, d) in taus.iter().zip(deviations) {
        table.push(vec![t, d]);
    }
    Ok(table)
}

/// Geometric sequence `1, ½, …, 2^{-k}`.
pub fn default_taus(k: usize) -> Vec<f64> {
    (0..=k).map(|i| 0.5f64.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Region;
    use crate::stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> TriangleMesh {
        TriangleMesh::generate(Region::UnitSquare, n).unwrap()
    }

    fn lipschitz_a() -> CoefficientA {
        CoefficientA::new(vec![-1.0, 0.0, 1.0], vec![0.6, 1.0, 1.5], 0.5).unwrap()
    }

    #[test]
    fn zero_data_zero_response() {
        let mesh = square(6);
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let r = dtn_apply(&mesh, &lipschitz_a(), &c, &BoundaryDatum::zeros(&mesh)).unwrap();
        assert!(r.pairings.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_cosine_flux() {
        let mesh = TriangleMesh::generate(Region::UnitDisk, 48).unwrap();
        let a0 = 1.6;
        let a = CoefficientA::constant(a0, 0.5).unwrap();
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0]);
        let r = dtn_apply(&mesh, &a, &c, &g).unwrap();
        let got = r.pair(&g);
        let want = a0 * std::f64::consts::PI;
        assert!((got - want).abs() <= 0.02 * want, "{got} vs {want}");
    }

    #[test]
    fn responses_are_deterministic() {
        let mesh = square(8);
        let c = CoefficientC::from_fn(&mesh, 0.5, |p| p[0] * p[1]).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |_, s| (6.0 * s).sin());
        let r1 = dtn_apply(&mesh, &lipschitz_a(), &c, &g).unwrap();
        let r2 = dtn_apply(&mesh, &lipschitz_a(), &c, &g).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn linear_matrix_scales_with_a0_and_is_symmetric() {
        let mesh = square(8);
        let c = CoefficientC::zero(&mesh, 0.4).unwrap();
        let m1 = dtn_linearized(&mesh, 1.0, &c).unwrap();
        let m2 = dtn_linearized(&mesh, 2.0, &c).unwrap();
        assert!((m2.matrix() - m1.matrix() * 2.0).amax() <= 1e-10);
        let c = CoefficientC::from_fn(&mesh, 0.4, |p| 1.0 + p[0]).unwrap();
        let m = dtn_linearized(&mesh, 1.3, &c).unwrap();
        assert!(m.max_asymmetry() <= 1e-9);
    }

    #[test]
    fn matrix_matches_direct_solves() {
        let mesh = square(8);
        let c = CoefficientC::from_fn(&mesh, 0.4, |p| 2.0 * p[1]).unwrap();
        let m = dtn_linearized(&mesh, 1.3, &c).unwrap();
        let one = BoundaryDatum::constant(&mesh, 1.0);
        let a = CoefficientA::constant(1.3, 0.4).unwrap();
        let direct = dtn_apply(&mesh, &a, &c, &one).unwrap();
        let via = m.apply(&one);
        assert!(via.difference(&direct).pairings.iter().all(|d| d.abs() <= 1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nb = mesh.num_boundary_vertices();
        let g = BoundaryDatum::new(&mesh, (0..nb).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let h = BoundaryDatum::new(&mesh, (0..nb).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        assert!((m.apply(&g).pair(&h) - m.apply(&h).pair(&g)).abs() <= 1e-9);
    }

    #[test]
    fn rejects_inadmissible_a0() {
        let mesh = square(4);
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        assert!(matches!(dtn_linearized(&mesh, 3.0, &c), Err(Error::Admissibility(_))));
    }

    #[test]
    fn boundary_mass_sums_to_perimeter() {
        for region in [Region::UnitSquare, Region::UnitDisk] {
            let mesh = TriangleMesh::generate(region, 10).unwrap();
            let total: f64 = boundary_mass(&mesh).iter().sum();
            assert!((total - mesh.perimeter()).abs() < 1e-12);
        }
    }

    #[test]
    fn linearization_constant_a_is_exact() {
        let mesh = square(10);
        let a = CoefficientA::constant(1.2, 0.5).unwrap();
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |_, s| (2.0 * std::f64::consts::PI * s).cos());
        let t = linearization_limit(&mesh, &a, &c, &g, &default_taus(8), SolveOptions::default()).unwrap();
        assert!(t.column("deviation").unwrap().iter().all(|&d| d <= 1e-9));
    }

    #[test]
    fn linearization_rate_is_first_order() {
        let mesh = square(10);
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |_, s| 1.0 + (2.0 * std::f64::consts::PI * s).cos());
        let t = linearization_limit(&mesh, &lipschitz_a(), &c, &g, &default_taus(8), SolveOptions::default()).unwrap();
        let taus = t.column("tau").unwrap();
        let dev = t.column("deviation").unwrap();
        assert!(dev.windows(2).all(|w| w[1] <= w[0]));
        assert!(stats::loglog_slope(&taus[1..], &dev[1..]) >= 0.8);
    }

    #[test]
    fn rejects_increasing_taus() {
        let mesh = square(4);
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let g = BoundaryDatum::zeros(&mesh);
        assert!(linearization_limit(&mesh, &lipschitz_a(), &c, &g, &[0.5, 1.0], SolveOptions::default()).is_err());
    }
}
