use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{projected_gauss_newton, squared, DriverOptions, Misfit, Observation, ReconReport, Stage};
use crate::coeffs::{CoefficientA, CoefficientC};
use crate::dtn;
use crate::error::{Error, Result};
use crate::fem::{self, BoundaryDatum, SparseOperator};
use crate::solver::Forward;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuOptions {
    /// Weight of the squared second differences of the knot values.
    pub beta: f64,
    pub max_iter: usize,
    /// Stop once the normalised misfit falls below this.
    pub tol: f64,
    pub max_backtracks: usize,
}

impl Default for AuOptions {
    fn default() -> Self {
        Self { beta: 1e-6, max_iter: 30, tol: 1e-14, max_backtracks: 20 }
    }
}

/// Forward fields and residuals of every datum at one knot vector.
#[derive(Debug, Clone)]
pub struct AuState {
    pub fields: Vec<Vec<f64>>,
    /// Measured residual of every datum.
    pub residuals: Vec<Vec<f64>>,
    pub misfit: f64,
    pub penalty: f64,
}

impl AuState {
    pub fn objective(&self) -> f64 {
        self.misfit + self.penalty
    }

    /// Smallest and largest value over all solved fields.
    pub fn range(&self) -> (f64, f64) {
        self.fields.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)))
    }
}

/// Knot `k` is swept when the support of its hat function, `(u_{k-1},
/// u_{k+1})` with the end knots extended to infinity, meets `[u_min, u_max]`.
/// Other knot values do not enter any forward solve.
pub fn swept_knots(u_grid: &[f64], u_min: f64, u_max: f64) -> Vec<bool> {
    let n = u_grid.len();
    (0..n)
        .map(|k| {
            let lo = if k == 0 { f64::NEG_INFINITY } else { u_grid[k - 1] };
            let hi = if k + 1 == n { f64::INFINITY } else { u_grid[k + 1] };
            lo < u_max && hi > u_min
        })
        .collect()
}

fn second_difference_penalty(p: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; p.len()];
    for k in 1..p.len().saturating_sub(1) {
        let d = p[k - 1] - 2.0 * p[k] + p[k + 1];
        value += d * d;
        grad[k - 1] += 2.0 * d;
        grad[k] -= 4.0 * d;
        grad[k + 1] += 2.0 * d;
    }
    (value, grad)
}

struct Model<'a, 'm> {
    fwd: &'a Forward<'m>,
    obs: &'a Observation,
    misfit: &'a Misfit,
    c: &'a CoefficientC,
    template: &'a CoefficientA,
    beta: f64,
    energy: f64,
}

impl Model<'_, '_> {
    fn coefficient(&self, p: &[f64]) -> Result<CoefficientA> {
        self.template.with_values(p.to_vec())
    }

    // Linearised operator K₀ + M diag(c / a(u)) at a solved field.
    fn linearization(&self, a: &CoefficientA, u: &[f64]) -> Result<SparseOperator> {
        let rho: Vec<f64> = u.iter().zip(self.c.values()).map(|(&u, &c)| c / a.eval(u)).collect();
        let ones = vec![1.0; self.fwd.mesh().edges().len()];
        self.fwd.stiffness().assemble(self.fwd.mesh(), &ones, &rho)
    }

    // Columns ∂A(u_i)/∂p_k over all vertices.
    fn weights(&self, a: &CoefficientA, u: &[f64]) -> Vec<Vec<f64>> {
        u.iter().map(|&v| a.primitive_weights(v)).collect()
    }

    /// Sensitivities `∂F_j/∂p_k` for the listed knots, stacked over `j`.
    fn jacobian(&self, p: &[f64], st: &AuState, free: &[usize]) -> Result<DMatrix<f64>> {
        let a = self.coefficient(p)?;
        let mesh = self.fwd.mesh();
        let nm = self.misfit.len();
        let k0 = self.fwd.laplace();
        let blocks = st
            .fields
            .par_iter()
            .map(|u| {
                let op = self.linearization(&a, u)?;
                let w = self.weights(&a, u);
                let zero_b = BoundaryDatum::zeros(mesh);
                free.iter()
                    .map(|&k| {
                        let psi: Vec<f64> = w.iter().map(|row| row[k]).collect();
                        let load: Vec<f64> = k0.apply(&psi).iter().map(|v| -v).collect();
                        let (y, _) = fem::solve_dirichlet_load(mesh, &op, &zero_b, &load, self.fwd.options().cg)?;
                        let s: Vec<f64> = psi.iter().zip(&y.values).map(|(a, b)| a + b).collect();
                        let ks = k0.apply(&s);
                        let pairings = dtn::DtnResponse { pairings: mesh.boundary_vertices().iter().map(|&v| ks[v]).collect() };
                        Ok(self.misfit.measure(&pairings))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut jac = DMatrix::zeros(nm * st.fields.len(), free.len());
        for (j, cols) in blocks.iter().enumerate() {
            for (col, values) in cols.iter().enumerate() {
                for (i, v) in values.iter().enumerate() {
                    jac[(j * nm + i, col)] = *v;
                }
            }
        }
        Ok(jac)
    }
}

impl Stage for Model<'_, '_> {
    type State = AuState;

    fn objective(&self, st: &AuState) -> f64 {
        st.objective()
    }

    fn misfit(&self, st: &AuState) -> f64 {
        st.misfit
    }

    // Picard starts from the fields of `warm` when given.
    fn state(&self, p: &[f64], warm: Option<&AuState>) -> Result<AuState> {
        let a = self.coefficient(p)?;
        let solved = (0..self.obs.len())
            .into_par_iter()
            .map(|j| {
                let g = &self.obs.boundary_data[j];
                let (u, _) = self.fwd.picard_from(&a, self.c, g, warm.map(|w| w.fields[j].as_slice()))?;
                let res = self.misfit.measure(&dtn::conormal_pairings(self.fwd, &a, self.c, &u).difference(&self.obs.responses[j]));
                Ok((u.values, res))
            })
            .collect::<Result<Vec<_>>>()?;
        let (fields, residuals): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
        let misfit = 0.5 * residuals.iter().map(|r| squared(r)).sum::<f64>() / self.energy;
        let penalty = 0.5 * self.beta * second_difference_penalty(p).0;
        Ok(AuState { fields, residuals, misfit, penalty })
    }

    /// Adjoint gradient: with `z_j` solving the linearised problem with the
    /// residual as boundary data, `∂φ/∂p_k = Σ_j (K₀ z_j) · ∂A(u_j)/∂p_k / E`.
    fn gradient(&self, p: &[f64], st: &AuState) -> Result<Vec<f64>> {
        let a = self.coefficient(p)?;
        let mesh = self.fwd.mesh();
        let nk = p.len();
        let parts = st
            .fields
            .par_iter()
            .zip(&st.residuals)
            .map(|(u, r)| {
                let op = self.linearization(&a, u)?;
                let zero = vec![0.0; mesh.num_vertices()];
                let (z, _) = fem::solve_dirichlet_load(mesh, &op, &self.misfit.back(r), &zero, self.fwd.options().cg)?;
                let kz = self.fwd.laplace().apply(&z.values);
                let mut g = vec![0.0; nk];
                for (w, kzi) in self.weights(&a, u).iter().zip(&kz) {
                    for (gk, wk) in g.iter_mut().zip(w) {
                        *gk += kzi * wk;
                    }
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, pen) = second_difference_penalty(p);
        let mut grad: Vec<f64> = pen.iter().map(|g| 0.5 * self.beta * g).collect();
        for part in parts {
            for (g, q) in grad.iter_mut().zip(part) {
                *g += q / self.energy;
            }
        }
        Ok(grad)
    }

    // Gauss–Newton matrix JᵀJ/E plus the penalty Hessian β D²ᵀD².
    fn normal_matrix(&self, p: &[f64], st: &AuState, vars: &[usize]) -> Result<DMatrix<f64>> {
        let jac = self.jacobian(p, st, vars)?;
        let mut h = jac.transpose() * &jac / self.energy;
        for (a, &ka) in vars.iter().enumerate() {
            let mut e = vec![0.0; p.len()];
            e[ka] = 1.0;
            let (_, col) = second_difference_penalty(&e);
            for (b, &kb) in vars.iter().enumerate() {
                h[(b, a)] += 0.5 * self.beta * col[kb];
            }
        }
        Ok(h)
    }
}

fn check(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, c: &CoefficientC, beta: f64) -> Result<f64> {
    if obs.mesh.vertices() != fwd.mesh().vertices() {
        return Err(Error::InvalidArgument("observation lives on a different mesh".into()));
    }
    misfit.check(fwd.mesh())?;
    c.check_mesh(fwd.mesh())?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    let energy = misfit.energy(obs);
    if energy == 0.0 {
        return Err(Error::FlatObjective("all responses vanish".into()));
    }
    Ok(energy)
}

/// `½ Σ_j ‖F_j(a) − obs_j‖² / E + ½ β ‖D² a‖²` over the knot values of `a`.
pub fn au_objective(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, c: &CoefficientC, a: &CoefficientA, beta: f64) -> Result<f64> {
    let energy = check(fwd, obs, misfit, c, beta)?;
    let model = Model { fwd, obs, misfit, c, template: a, beta, energy };
    Ok(model.state(a.a_values(), None)?.objective())
}

/// Gradient of [`au_objective`] with respect to every knot value.
pub fn au_gradient(
    fwd: &Forward<'_>,
    obs: &Observation,
    misfit: &Misfit,
    c: &CoefficientC,
    a: &CoefficientA,
    beta: f64,
) -> Result<Vec<f64>> {
    let energy = check(fwd, obs, misfit, c, beta)?;
    let model = Model { fwd, obs, misfit, c, template: a, beta, energy };
    let st = model.state(a.a_values(), None)?;
    model.gradient(a.a_values(), &st)
}

/// Projected Gauss–Newton over the knot values of `a`. The knot at `u = 0`
/// keeps its initial value, and so does every unswept knot; the latter are
/// listed in the report.
pub fn recover_au(
    fwd: &Forward<'_>,
    obs: &Observation,
    misfit: &Misfit,
    c: &CoefficientC,
    initial: &CoefficientA,
    opts: AuOptions,
) -> Result<(CoefficientA, ReconReport)> {
    let energy = check(fwd, obs, misfit, c, opts.beta)?;
    let grid = initial.u_grid();
    let pinned = grid.iter().position(|&u| u == 0.0).ok_or_else(|| Error::InvalidArgument("the knot grid must contain u = 0".into()))?;
    let alpha = initial.alpha();
    let model = Model { fwd, obs, misfit, c, template: initial, beta: opts.beta, energy };

    let p = initial.a_values().to_vec();
    let (u_min, u_max) = model.state(&p, None)?.range();
    let swept = swept_knots(grid, u_min, u_max);
    let unswept: Vec<usize> = (0..grid.len()).filter(|&k| !swept[k]).collect();
    let free: Vec<usize> = (0..grid.len()).filter(|&k| swept[k] && k != pinned).collect();
    let driver =
        DriverOptions { max_iter: opts.max_iter, tol: opts.tol, max_backtracks: opts.max_backtracks, lower: alpha, upper: 1.0 / alpha };
    let out = projected_gauss_newton(&model, p, &free, driver)?;
    let report = ReconReport {
        iterations: out.iterations,
        misfit_history: out.history,
        beta: opts.beta,
        parameter_error: None,
        unswept_knots: unswept,
    };
    Ok((initial.with_values(out.x)?, report))
}

/// Largest knot error over the swept knots.
pub fn swept_knot_error(got: &CoefficientA, truth: &CoefficientA, report: &ReconReport) -> f64 {
    got.u_grid()
        .iter()
        .enumerate()
        .filter(|(k, _)| !report.unswept_knots.contains(k))
        .map(|(_, &u)| (got.eval(u) - truth.eval(u)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::CgOptions;
    use crate::mesh::{Region, TriangleMesh};
    use crate::recon::pipeline::default_large_data;
    use crate::solver::SolveOptions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(step: f64) -> Vec<f64> {
        let n = (2.0 / step).round() as usize;
        (0..=n).map(|k| -1.0 + k as f64 * step).collect()
    }

    fn truth(step: f64) -> CoefficientA {
        CoefficientA::from_fn(grid(step), 0.5, |u| 1.0 + 0.5 * u.clamp(0.0, 1.0)).unwrap()
    }

    fn setup(n: usize, amplitudes: &[f64], opts: SolveOptions) -> (TriangleMesh, CoefficientC, Observation) {
        let mesh = TriangleMesh::generate(Region::UnitSquare, n).unwrap();
        let c = CoefficientC::constant(&mesh, 0.5, 0.5).unwrap();
        let data = default_large_data(&mesh, 2, amplitudes);
        let obs = Observation::synthesize(mesh.clone(), &truth(0.25), &c, data, opts).unwrap();
        (mesh, c, obs)
    }

    #[test]
    fn swept_knots_follow_hat_supports() {
        let g = [-1.0, -0.5, 0.0, 0.5, 1.0];
        assert_eq!(swept_knots(&g, -0.1, 0.1), vec![false, true, true, true, false]);
        assert_eq!(swept_knots(&g, 0.0, 0.5), vec![false, false, true, true, false]);
        assert_eq!(swept_knots(&g, -3.0, 3.0), vec![true; 5]);
    }

    #[test]
    fn adjoint_gradient_matches_central_differences() {
        let opts = SolveOptions { tol: 1e-13, cg: CgOptions { rel_tol: 1e-15, max_iter: 20000 }, ..Default::default() };
        let (mesh, c, obs) = setup(8, &[0.5, 1.0], opts);
        let fwd = Forward::new(&mesh, opts).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let a = CoefficientA::from_fn(grid(0.25), 0.5, |u| 1.1 + 0.2 * u + 0.1 * u * u).unwrap();
        let beta = 1e-3;
        let grad = au_gradient(&fwd, &obs, &misfit, &c, &a, beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let dir: Vec<f64> = (0..grad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = 1e-4;
            let shifted = |s: f64| a.with_values(a.a_values().iter().zip(&dir).map(|(v, d)| v + s * d).collect()).unwrap();
            let fd = (au_objective(&fwd, &obs, &misfit, &c, &shifted(h), beta).unwrap()
                - au_objective(&fwd, &obs, &misfit, &c, &shifted(-h), beta).unwrap())
                / (2.0 * h);
            let adj: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            assert!((fd - adj).abs() <= 1e-4 * adj.abs(), "fd {fd} adjoint {adj}");
        }
    }

    #[test]
    fn truth_as_start_takes_no_iterations() {
        let (mesh, c, obs) = setup(6, &[0.5], SolveOptions::default());
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let opts = AuOptions { beta: 0.0, ..Default::default() };
        let (a, report) = recover_au(&fwd, &obs, &misfit, &c, &truth(0.25), opts).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.misfit_history[0] <= 1e-14);
        assert_eq!(a, truth(0.25));
    }

    #[test]
    fn small_data_leave_upper_knots_unswept() {
        let (mesh, c, obs) = setup(6, &[0.05, 0.1], SolveOptions::default());
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let start = CoefficientA::constant(1.0, 0.5).unwrap().with_grid(grid(0.1)).unwrap();
        let (_, report) = recover_au(&fwd, &obs, &misfit, &c, &start, AuOptions::default()).unwrap();
        let g = grid(0.1);
        for (k, &u) in g.iter().enumerate() {
            if u > 0.2 + 1e-12 {
                assert!(report.unswept_knots.contains(&k), "knot {u} should be unswept");
            }
        }
    }

    #[test]
    fn recovers_knots_without_guard() {
        let (mesh, c, obs) = setup(12, &[0.25, 0.5, 1.0], SolveOptions::default());
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let start = CoefficientA::constant(1.0, 0.5).unwrap().with_grid(grid(0.25)).unwrap();
        let (a, report) = recover_au(&fwd, &obs, &misfit, &c, &start, AuOptions::default()).unwrap();
        let err = swept_knot_error(&a, &truth(0.25), &report);
        assert!(err < 5e-2, "max knot error {err}, {report:?}");
        for w in report.misfit_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
