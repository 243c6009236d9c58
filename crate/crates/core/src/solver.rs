//! Quasilinear forward solves.
//!
//! Two independent routes to `-div(a(u)∇u) + cu = 0`, `u = g`:
//!
//! - **Picard**: freeze the conductivity at the current iterate, solve the
//!   linear problem, relax. Each edge carries the secant mean
//!   `κ_e = (A(u_i) − A(u_j)) / (u_i − u_j)` of `a` along it, so a fixed
//!   point satisfies `K₀ A(u) + M c u = 0` exactly.
//! - **Kirchhoff**: solve the semilinear `K₀ U + M c H(U) = 0` with
//!   `U = A(g)` on the boundary, then return `u = H(U)`.
//!
//! Both discretize the same equation, so they agree to solver tolerance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientA, CoefficientC};
use crate::error::{Error, Result};
use crate::fem::{self, BoundaryDatum, CgOptions, EdgeStiffness, ScalarField, SparseOperator};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolvePath {
    PicardDirect,
    KirchhoffSemilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `L²` norm of the last fixed-point update.
    pub final_update_norm: f64,
    /// Euclidean norm of the discrete residual on interior rows.
    pub residual_norm: f64,
    pub path: SolvePath,
    /// Relaxation factor in effect at the end.
    pub damping: f64,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} after {} iterations: update {:.3e}, residual {:.3e}, damping {}",
            self.path, self.iterations, self.final_update_norm, self.residual_norm, self.damping
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation θ ∈ (0, 1]; halved whenever the update grows.
    pub damping: f64,
    pub cg: CgOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, damping: 1.0, cg: CgOptions::default() }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// Reusable forward-solve context for one mesh.
#[derive(Debug, Clone)]
pub struct Forward<'m> {
    mesh: &'m TriangleMesh,
    stiffness: EdgeStiffness,
    opts: SolveOptions,
}

impl<'m> Forward<'m> {
    pub fn new(mesh: &'m TriangleMesh, opts: SolveOptions) -> Result<Self> {
        opts.validate()?;
        Ok(Self { mesh, stiffness: EdgeStiffness::new(mesh), opts })
    }

    pub fn mesh(&self) -> &'m TriangleMesh {
        self.mesh
    }

    pub fn options(&self) -> SolveOptions {
        self.opts
    }

    pub fn stiffness(&self) -> &EdgeStiffness {
        &self.stiffness
    }

    /// `K₀`, the unit-conductivity stiffness matrix.
    pub fn laplace(&self) -> &SparseOperator {
        self.stiffness.laplace()
    }

    fn check(&self, c: &CoefficientC, g: &BoundaryDatum) -> Result<()> {
        c.check_mesh(self.mesh)?;
        if g.len() != self.mesh.num_boundary_vertices() {
            return Err(Error::InvalidArgument(format!(
                "boundary datum has {} values, mesh has {} boundary vertices",
                g.len(),
                self.mesh.num_boundary_vertices()
            )));
        }
        Ok(())
    }

    /// Operator `K(u) + M c` with edge conductivities from `u`.
    pub fn operator_at(&self, a: &CoefficientA, c: &CoefficientC, u: &[f64]) -> Result<SparseOperator> {
        let kappa: Vec<f64> = self.mesh.edges().iter().map(|&[i, j]| a.mean_between(u[i], u[j])).collect();
        self.stiffness.assemble(self.mesh, &kappa, c.values())
    }

    /// Operator `a₀ K₀ + M ρ` for a linear problem.
    pub fn linear_operator(&self, a0: f64, rho: &[f64]) -> Result<SparseOperator> {
        if !(a0 > 0.0) {
            return Err(Error::InvalidArgument(format!("conductivity must be positive, got {a0}")));
        }
        self.stiffness.assemble(self.mesh, &vec![a0; self.mesh.edges().len()], rho)
    }

    /// Solve `-a₀Δv + cv = 0`, `v = g`.
    pub fn solve_linear(&self, a0: f64, c: &CoefficientC, g: &BoundaryDatum) -> Result<ScalarField> {
        self.check(c, g)?;
        let op = self.linear_operator(a0, c.values())?;
        let zero = vec![0.0; self.mesh.num_vertices()];
        Ok(fem::solve_dirichlet_with(self.mesh, &op, g, &zero, self.opts.cg)?.0)
    }

    /// Residual `K₀ A(u) + M c u` on every vertex. Interior entries vanish at a
    /// solution; boundary entries are the conormal pairings.
    pub fn residual(&self, a: &CoefficientA, c: &CoefficientC, u: &[f64]) -> Vec<f64> {
        let big_u: Vec<f64> = u.iter().map(|&v| a.primitive(v)).collect();
        let mut r = self.laplace().apply(&big_u);
        for (k, ri) in r.iter_mut().enumerate() {
            *ri += c.values()[k] * self.mesh.lumped_mass()[k] * u[k];
        }
        r
    }

    fn interior_norm(&self, r: &[f64]) -> f64 {
        r.iter().zip(self.mesh.boundary_vertex_flags()).filter(|(_, &b)| !b).map(|(v, _)| v * v).sum::<f64>().sqrt()
    }

    pub fn picard(&self, a: &CoefficientA, c: &CoefficientC, g: &BoundaryDatum) -> Result<(ScalarField, SolveReport)> {
        self.picard_from(a, c, g, None)
    }

    /// Damped Picard iteration `u ← u + θ (T u − u)` from an optional start
    /// (its boundary values are replaced by `g`).
    pub fn picard_from(
        &self,
        a: &CoefficientA,
        c: &CoefficientC,
        g: &BoundaryDatum,
        start: Option<&[f64]>,
    ) -> Result<(ScalarField, SolveReport)> {
        self.check(c, g)?;
        let mesh = self.mesh;
        let zero = vec![0.0; mesh.num_vertices()];
        let mut u = match start {
            Some(s) if s.len() == mesh.num_vertices() => s.to_vec(),
            Some(s) => return Err(Error::InvalidArgument(format!("start field has length {}", s.len()))),
            None => zero.clone(),
        };
        for (&v, &gv) in mesh.boundary_vertices().iter().zip(&g.values) {
            u[v] = gv;
        }

        let mut theta = self.opts.damping;
        let mut previous = f64::INFINITY;
        for it in 1..=self.opts.max_iter {
            let op = self.operator_at(a, c, &u)?;
            let (tu, _) = fem::solve_dirichlet_with(mesh, &op, g, &zero, self.opts.cg)?;
            // T does not depend on its argument when a is constant.
            let update = if a.is_constant() { 0.0 } else { fem::l2_distance(mesh, &tu.values, &u) };
            if update <= self.opts.tol {
                let residual_norm = self.interior_norm(&self.residual(a, c, &tu.values));
                let report =
                    SolveReport { iterations: it, final_update_norm: update, residual_norm, path: SolvePath::PicardDirect, damping: theta };
                return Ok((tu, report));
            }
            if update > previous && theta > MIN_DAMPING {
                theta *= 0.5;
            }
            previous = update;
            for (ui, ti) in u.iter_mut().zip(&tu.values) {
                *ui += theta * (ti - *ui);
            }
        }
        let residual_norm = self.interior_norm(&self.residual(a, c, &u));
        Err(Error::NonConvergence {
            report: Box::new(SolveReport {
                iterations: self.opts.max_iter,
                final_update_norm: previous,
                residual_norm,
                path: SolvePath::PicardDirect,
                damping: theta,
            }),
        })
    }

    /// Kirchhoff route. Returns `u = H(U)` and the report; `U` itself is
    /// available through [`Forward::kirchhoff_potential`].
    pub fn kirchhoff(&self, a: &CoefficientA, c: &CoefficientC, g: &BoundaryDatum) -> Result<(ScalarField, SolveReport)> {
        let (big_u, report) = self.kirchhoff_potential(a, c, g)?;
        Ok((big_u.map(|v| a.inverse_primitive(v)), report))
    }

    /// Solve `K₀ U + M c H(U) = 0`, `U = A(g)`, by a shifted fixed point:
    /// `(K₀ + M c H'(Uⁿ)) Uⁿ⁺¹ = M c (H'(Uⁿ) Uⁿ − H(Uⁿ))`. The step is halved
    /// while the residual grows.
    pub fn kirchhoff_potential(&self, a: &CoefficientA, c: &CoefficientC, g: &BoundaryDatum) -> Result<(ScalarField, SolveReport)> {
        self.check(c, g)?;
        let mesh = self.mesh;
        let n = mesh.num_vertices();
        let big_g = g.map(|v| a.primitive(v));
        let k0 = self.laplace();
        let residual = |big_u: &[f64]| -> f64 {
            let mut r = k0.apply(big_u);
            for k in 0..n {
                r[k] += c.values()[k] * mesh.lumped_mass()[k] * a.inverse_primitive(big_u[k]);
            }
            self.interior_norm(&r)
        };

        let zero = vec![0.0; n];
        let (mut big_u, _) = fem::solve_dirichlet_with(mesh, k0, &big_g, &zero, self.opts.cg)?;
        if c.values().iter().all(|&v| v == 0.0) {
            let report = SolveReport {
                iterations: 1,
                final_update_norm: 0.0,
                residual_norm: residual(&big_u.values),
                path: SolvePath::KirchhoffSemilinear,
                damping: 1.0,
            };
            return Ok((big_u, report));
        }

        let mut res = residual(&big_u.values);
        let mut theta = self.opts.damping;
        let mut last_update = f64::INFINITY;
        for it in 1..=self.opts.max_iter {
            let dh: Vec<f64> = big_u.values.iter().map(|&v| a.inverse_derivative(v)).collect();
            let rho: Vec<f64> = c.values().iter().zip(&dh).map(|(c, d)| c * d).collect();
            let f: Vec<f64> = (0..n).map(|k| c.values()[k] * (dh[k] * big_u.values[k] - a.inverse_primitive(big_u.values[k]))).collect();
            let op = self.stiffness.assemble(mesh, &vec![1.0; mesh.edges().len()], &rho)?;
            let (next, _) = fem::solve_dirichlet_with(mesh, &op, &big_g, &f, self.opts.cg)?;

            let mut step = theta;
            let mut trial: Vec<f64>;
            let mut trial_res;
            loop {
                trial = big_u.values.iter().zip(&next.values).map(|(u, v)| u + step * (v - u)).collect();
                trial_res = residual(&trial);
                if trial_res <= res || step <= MIN_DAMPING {
                    break;
                }
                step *= 0.5;
            }
            if step < theta {
                theta = step;
            }
            last_update = fem::l2_distance(mesh, &trial, &big_u.values);
            big_u = ScalarField::new(trial);
            res = trial_res;
            if last_update <= self.opts.tol {
                let report = SolveReport {
                    iterations: it,
                    final_update_norm: last_update,
                    residual_norm: res,
                    path: SolvePath::KirchhoffSemilinear,
                    damping: theta,
                };
                return Ok((big_u, report));
            }
        }
        Err(Error::NonConvergence {
            report: Box::new(SolveReport {
                iterations: self.opts.max_iter,
                final_update_norm: last_update,
                residual_norm: res,
                path: SolvePath::KirchhoffSemilinear,
                damping: theta,
            }),
        })
    }
}

pub fn solve_quasilinear_picard(
    mesh: &TriangleMesh,
    a: &CoefficientA,
    c: &CoefficientC,
    g: &BoundaryDatum,
    opts: SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    Forward::new(mesh, opts)?.picard(a, c, g)
}

pub fn solve_quasilinear_kirchhoff(
    mesh: &TriangleMesh,
    a: &CoefficientA,
    c: &CoefficientC,
    g: &BoundaryDatum,
    opts: SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    Forward::new(mesh, opts)?.kirchhoff(a, c, g)
}

/// Largest pairwise `L²` distance between Picard solutions started from
/// each of `starts`.
pub fn uniqueness_check(
    mesh: &TriangleMesh,
    a: &CoefficientA,
    c: &CoefficientC,
    g: &BoundaryDatum,
    starts: &[ScalarField],
    opts: SolveOptions,
) -> Result<f64> {
    let fwd = Forward::new(mesh, opts)?;
    let solutions = starts.iter().map(|s| fwd.picard_from(a, c, g, Some(&s.values)).map(|(u, _)| u)).collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for (i, ui) in solutions.iter().enumerate() {
        for uj in &solutions[i + 1..] {
            worst = worst.max(fem::l2_distance(mesh, &ui.values, &uj.values));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Region;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> TriangleMesh {
        TriangleMesh::generate(Region::UnitSquare, n).unwrap()
    }

    fn saturating_a() -> CoefficientA {
        let grid: Vec<f64> = (0..=80).map(|k| -5.0 + 0.125 * k as f64).collect();
        CoefficientA::from_fn(grid, 0.5, |u| 1.0 + u * u / (1.0 + u * u)).unwrap()
    }

    #[test]
    fn constant_a_converges_in_one_iteration() {
        let mesh = square(8);
        let a = CoefficientA::constant(1.7, 0.5).unwrap();
        let c = CoefficientC::from_fn(&mesh, 0.5, |p| p[0]).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] + 2.0 * p[1]);
        let (u, report) = solve_quasilinear_picard(&mesh, &a, &c, &g, SolveOptions::default()).unwrap();
        assert_eq!(report.iterations, 1);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let v = fwd.solve_linear(1.7, &c, &g).unwrap();
        assert!(fem::l2_distance(&mesh, &u.values, &v.values) < 1e-14);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = square(6);
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let (u, _) = solve_quasilinear_picard(&mesh, &saturating_a(), &c, &BoundaryDatum::zeros(&mesh), SolveOptions::default()).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_values_are_exact() {
        let mesh = square(8);
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |_, s| (2.0 * std::f64::consts::PI * s).sin());
        let (u, report) = solve_quasilinear_picard(&mesh, &saturating_a(), &c, &g, SolveOptions::default()).unwrap();
        assert_eq!(u.trace(&mesh), g);
        assert!(report.final_update_norm <= 1e-10);
    }

    #[test]
    fn picard_and_kirchhoff_agree() {
        let mesh = square(16);
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0]);
        let a = saturating_a();
        let opts = SolveOptions::default();
        let (u, _) = solve_quasilinear_picard(&mesh, &a, &c, &g, opts).unwrap();
        let (w, kr) = solve_quasilinear_kirchhoff(&mesh, &a, &c, &g, opts).unwrap();
        assert_eq!(kr.iterations, 1);
        assert!(fem::l2_distance(&mesh, &u.values, &w.values) <= 5e-8);

        let c = CoefficientC::from_fn(&mesh, 0.5, |p| 1.5 + 0.5 * (3.0 * p[0]).sin()).unwrap();
        let fwd = Forward::new(&mesh, opts).unwrap();
        let (u, _) = fwd.picard(&a, &c, &g).unwrap();
        let (big_u, _) = fwd.kirchhoff_potential(&a, &c, &g).unwrap();
        let au: Vec<f64> = u.values.iter().map(|&v| a.primitive(v)).collect();
        assert!(fem::l2_distance(&mesh, &au, &big_u.values) <= 10.0 * opts.tol);
    }

    #[test]
    fn kirchhoff_with_constant_a_is_linear_solve() {
        let mesh = square(10);
        let a = CoefficientA::constant(0.8, 0.5).unwrap();
        let c = CoefficientC::constant(&mesh, 2.0, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[1] * p[1]);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let (u, _) = fwd.kirchhoff(&a, &c, &g).unwrap();
        let v = fwd.solve_linear(0.8, &c, &g).unwrap();
        assert!(fem::l2_distance(&mesh, &u.values, &v.values) <= 1e-10);
    }

    #[test]
    fn interior_residual_vanishes_at_solution() {
        let mesh = square(12);
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| 1.5 * p[0] - p[1]);
        let (_, report) = solve_quasilinear_picard(&mesh, &saturating_a(), &c, &g, SolveOptions::default()).unwrap();
        assert!(report.residual_norm < 1e-9, "{report}");
    }

    #[test]
    fn rejects_bad_options() {
        let mesh = square(4);
        for opts in [SolveOptions { tol: 0.0, ..Default::default() }, SolveOptions { damping: 1.5, ..Default::default() }] {
            assert!(matches!(Forward::new(&mesh, opts), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn non_convergence_carries_report() {
        let mesh = square(8);
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| 3.0 * p[0]);
        let opts = SolveOptions { max_iter: 2, ..Default::default() };
        match solve_quasilinear_picard(&mesh, &saturating_a(), &c, &g, opts) {
            Err(Error::NonConvergence { report }) => assert_eq!(report.iterations, 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn uniqueness_from_several_starts() {
        let mesh = square(10);
        let a = saturating_a();
        let c = CoefficientC::constant(&mesh, 0.5, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] - p[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let random = ScalarField::new((0..mesh.num_vertices()).map(|_| rng.random_range(-2.0..2.0)).collect());
        let starts = [ScalarField::zeros(&mesh), random.clone(), random.map(|v| -v)];
        let opts = SolveOptions::default();
        assert!(uniqueness_check(&mesh, &a, &c, &g, &starts, opts).unwrap() <= 10.0 * opts.tol);
        assert_eq!(uniqueness_check(&mesh, &a, &c, &g, &[random.clone(), random], opts).unwrap(), 0.0);
    }

    #[test]
    fn damped_iteration_reaches_same_field() {
        let mesh = square(10);
        let a = saturating_a();
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] * p[1]);
        let opts = SolveOptions::default();
        let (u1, _) = solve_quasilinear_picard(&mesh, &a, &c, &g, opts).unwrap();
        let (u2, _) = solve_quasilinear_picard(&mesh, &a, &c, &g, SolveOptions { damping: 0.5, ..opts }).unwrap();
        assert!(fem::l2_distance(&mesh, &u1.values, &u2.values) <= 10.0 * opts.tol);
    }

    #[test]
    fn apriori_ratio_is_stable_under_scaling() {
        let mesh = square(12);
        let a = saturating_a();
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |_, s| (2.0 * std::f64::consts::PI * s).cos());
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let ratio = |tau: f64| {
            let gt = g.scaled(tau);
            let (u, _) = fwd.picard(&a, &c, &gt).unwrap();
            fem::h1_norm(&mesh, fwd.laplace(), &u.values) / fem::h_half_norm(&mesh, &gt).unwrap()
        };
        let base = ratio(1.0);
        for k in 1..=8 {
            let r = ratio(0.5f64.powi(k));
            assert!(r <= 2.0 * base && r >= 0.5 * base, "tau = 2^-{k}: {r} vs {base}");
        }
    }
}
