use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{projected_gauss_newton, squared, DriverOptions, Misfit, Observation, ReconReport, Stage};
use crate::coeffs::CoefficientC;
use crate::dtn;
use crate::error::{Error, Result};
use crate::fem;
use crate::solver::Forward;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct COptions {
    /// Weight of `‖∇c‖²`.
    pub beta: f64,
    pub max_iter: usize,
    /// Stop once the normalised misfit falls below this.
    pub tol: f64,
    pub max_backtracks: usize,
}

impl Default for COptions {
    fn default() -> Self {
        Self { beta: 1e-6, max_iter: 40, tol: 1e-14, max_backtracks: 20 }
    }
}

struct Model<'a, 'm> {
    fwd: &'a Forward<'m>,
    obs: &'a Observation,
    misfit: &'a Misfit,
    a0: f64,
    alpha: f64,
    beta: f64,
    energy: f64,
}

struct State {
    fields: Vec<Vec<f64>>,
    // Measured residual of every datum.
    residuals: Vec<Vec<f64>>,
    misfit: f64,
    penalty: f64,
}

impl Model<'_, '_> {
    fn coefficient(&self, c: &[f64]) -> Result<CoefficientC> {
        CoefficientC::new(c.to_vec(), self.alpha)
    }
}

impl Stage for Model<'_, '_> {
    type State = State;

    fn objective(&self, st: &State) -> f64 {
        st.misfit + st.penalty
    }

    fn misfit(&self, st: &State) -> f64 {
        st.misfit
    }

    fn state(&self, c: &[f64], _warm: Option<&State>) -> Result<State> {
        let cc = self.coefficient(c)?;
        let solved = self
            .obs
            .boundary_data
            .par_iter()
            .zip(&self.obs.responses)
            .map(|(g, r)| {
                let v = self.fwd.solve_linear(self.a0, &cc, g)?;
                let res = self.misfit.measure(&dtn::linear_pairings(self.fwd, self.a0, &cc, &v.values).difference(r));
                Ok((v.values, res))
            })
            .collect::<Result<Vec<_>>>()?;
        let (fields, residuals): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
        let misfit = 0.5 * residuals.iter().map(|r| squared(r)).sum::<f64>() / self.energy;
        let penalty = 0.5 * self.beta * self.fwd.laplace().bilinear(c, c);
        Ok(State { fields, residuals, misfit, penalty })
    }

    /// One adjoint solve per datum: `z_j` has boundary data `Σ_l r_jl h_l`,
    /// and `∂φ/∂c_k = Σ_j m_k v_jk z_jk / E + β (K₀ c)_k`.
    fn gradient(&self, c: &[f64], st: &State) -> Result<Vec<f64>> {
        let mesh = self.fwd.mesh();
        let cc = self.coefficient(c)?;
        let parts = st
            .residuals
            .par_iter()
            .zip(&st.fields)
            .map(|(r, v)| {
                let z = self.fwd.solve_linear(self.a0, &cc, &self.misfit.back(r))?;
                Ok(v.iter().zip(&z.values).zip(mesh.lumped_mass()).map(|((v, z), m)| m * v * z).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut grad = self.fwd.laplace().apply(c);
        grad.iter_mut().for_each(|g| *g *= self.beta);
        for p in parts {
            for (g, q) in grad.iter_mut().zip(p) {
                *g += q / self.energy;
            }
        }
        Ok(grad)
    }

    // The sensitivity of ⟨F_j, h_l⟩ to c_k is m_k v_jk w_lk, with w_l the
    // solution for the test trace h_l. Hence the Gauss–Newton matrix
    // (m mᵀ) ∘ (VᵀV) ∘ (WᵀW) / E + β K₀.
    fn normal_matrix(&self, c: &[f64], st: &State, vars: &[usize]) -> Result<DMatrix<f64>> {
        let mesh = self.fwd.mesh();
        let n = mesh.num_vertices();
        let cc = self.coefficient(c)?;
        let tests =
            self.misfit.tests().par_iter().map(|h| self.fwd.solve_linear(self.a0, &cc, h).map(|f| f.values)).collect::<Result<Vec<_>>>()?;
        let w = DMatrix::from_fn(tests.len(), n, |l, k| tests[l][k]);
        let v = DMatrix::from_fn(st.fields.len(), n, |j, k| st.fields[j][k]);
        let p = w.transpose() * &w;
        let q = v.transpose() * &v;
        let m = mesh.lumped_mass();
        let mut h = DMatrix::from_fn(n, n, |k, l| m[k] * m[l] * p[(k, l)] * q[(k, l)] / self.energy);
        for k in 0..n {
            for (l, kw) in self.fwd.laplace().row(k) {
                h[(k, l)] += self.beta * kw;
            }
        }
        Ok(DMatrix::from_fn(vars.len(), vars.len(), |a, b| h[(vars[a], vars[b])]))
    }
}

fn check(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, a0: f64, beta: f64) -> Result<f64> {
    if obs.mesh.vertices() != fwd.mesh().vertices() {
        return Err(Error::InvalidArgument("observation lives on a different mesh".into()));
    }
    misfit.check(fwd.mesh())?;
    if !(a0 > 0.0) {
        return Err(Error::InvalidArgument(format!("a0 must be positive, got {a0}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    let energy = misfit.energy(obs);
    if energy == 0.0 {
        return Err(Error::FlatObjective("all responses vanish".into()));
    }
    Ok(energy)
}

/// `½ Σ_j ‖F_j(c) − obs_j‖² / E + ½ β cᵀK₀c`, with `F_j` the linear model
/// at `a₀` and both sides measured by `misfit`.
pub fn c_objective(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, a0: f64, c: &CoefficientC, beta: f64) -> Result<f64> {
    let energy = check(fwd, obs, misfit, a0, beta)?;
    let model = Model { fwd, obs, misfit, a0, alpha: c.alpha(), beta, energy };
    let st = model.state(c.values(), None)?;
    Ok(model.objective(&st))
}

/// Gradient of [`c_objective`] by one adjoint solve per datum.
pub fn c_gradient(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, a0: f64, c: &CoefficientC, beta: f64) -> Result<Vec<f64>> {
    let energy = check(fwd, obs, misfit, a0, beta)?;
    let model = Model { fwd, obs, misfit, a0, alpha: c.alpha(), beta, energy };
    let st = model.state(c.values(), None)?;
    model.gradient(c.values(), &st)
}

/// Projected Gauss–Newton for nodal `c` with `a(0)` fixed.
pub fn recover_c(
    fwd: &Forward<'_>,
    obs: &Observation,
    misfit: &Misfit,
    a0: f64,
    initial: &CoefficientC,
    opts: COptions,
) -> Result<(CoefficientC, ReconReport)> {
    let energy = check(fwd, obs, misfit, a0, opts.beta)?;
    initial.check_mesh(fwd.mesh())?;
    let alpha = initial.alpha();
    let model = Model { fwd, obs, misfit, a0, alpha, beta: opts.beta, energy };
    let vars: Vec<usize> = (0..initial.len()).collect();
    let driver =
        DriverOptions { max_iter: opts.max_iter, tol: opts.tol, max_backtracks: opts.max_backtracks, lower: 0.0, upper: 1.0 / alpha };
    let out = projected_gauss_newton(&model, initial.values().to_vec(), &vars, driver)?;
    let report = ReconReport {
        iterations: out.iterations,
        misfit_history: out.history,
        beta: opts.beta,
        parameter_error: None,
        unswept_knots: Vec::new(),
    };
    Ok((CoefficientC::new(out.x, alpha)?, report))
}

/// Relative lumped `L²` error of a recovered `c`.
pub fn c_relative_error(fwd: &Forward<'_>, got: &CoefficientC, truth: &CoefficientC) -> f64 {
    let mesh = fwd.mesh();
    fem::l2_distance(mesh, got.values(), truth.values()) / fem::l2_norm(mesh, truth.values()).max(f64::MIN_POSITIVE)
}
