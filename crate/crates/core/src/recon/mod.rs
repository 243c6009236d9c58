//! Staged recovery of `a(0)`, `c(x)` and `a(u)` from boundary data.
//!
//! Every stage fits discrete DtN responses by least squares:
//!
//! - [`recover_a0`]: golden-section search of the linear model on
//!   small-amplitude data.
//! - [`recover_c`]: projected Gauss–Newton on nodal `c` with a gradient
//!   penalty; gradients by one adjoint solve per datum.
//! - [`recover_au`]: projected Gauss–Newton on the knot values of `a`, with
//!   `a(0)` pinned and a second-difference penalty.
//!
//! Misfits are normalised by `Σ_j ‖obs_j‖²`, so the regularization weights
//! do not depend on the data amplitude.

mod a0;
mod au;
mod c;
mod pipeline;

pub use a0::{a0_objective, recover_a0, A0Estimate};
pub use au::{au_gradient, au_objective, recover_au, swept_knot_error, swept_knots, AuOptions, AuState};
pub use c::{c_gradient, c_objective, c_relative_error, recover_c, COptions};
pub use pipeline::{
    default_large_data, default_small_data, gradient_check, run_pipeline, synthesize, CProfile, GradientCheck, PipelineConfig,
    PipelineResult,
};

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientA, CoefficientC};
use crate::dtn::{self, DtnResponse};
use crate::error::{Error, Result};
use crate::fem::BoundaryDatum;
use crate::mesh::{MeshDocument, TriangleMesh};
use crate::solver::{Forward, SolveOptions};

/// Boundary data, measured responses and the mesh they live on.
#[derive(Debug, Clone)]
pub struct Observation {
    pub mesh: TriangleMesh,
    pub boundary_data: Vec<BoundaryDatum>,
    pub responses: Vec<DtnResponse>,
    /// Relative noise level the responses were perturbed with.
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationDocument {
    pub boundary_data: Vec<Vec<f64>>,
    pub responses: Vec<Vec<f64>>,
    pub mesh: MeshDocument,
    pub noise: f64,
}

impl Observation {
    /// Noise-free synthetic responses of the quasilinear problem.
    pub fn synthesize(
        mesh: TriangleMesh,
        a: &CoefficientA,
        c: &CoefficientC,
        boundary_data: Vec<BoundaryDatum>,
        opts: SolveOptions,
    ) -> Result<Self> {
        let responses = {
            let fwd = Forward::new(&mesh, opts)?;
            boundary_data.par_iter().map(|g| dtn::dtn_apply_with(&fwd, a, c, g).map(|(r, _)| r)).collect::<Result<Vec<_>>>()?
        };
        Ok(Self { mesh, boundary_data, responses, noise: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.boundary_data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary_data.is_empty()
    }

    /// Add Gaussian noise to every pairing, with standard deviation
    /// `sigma · rms(R_j)` per datum.
    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for r in &mut self.responses {
            let rms = (r.squared_norm() / r.len().max(1) as f64).sqrt();
            for p in &mut r.pairings {
                *p += sigma * rms * unit.sample(&mut rng);
            }
        }
        self.noise = sigma;
        Ok(self)
    }

    /// Keep the data with index in `keep`.
    pub fn subset(&self, keep: impl Fn(usize, &BoundaryDatum) -> bool) -> Self {
        let (mut data, mut resp) = (Vec::new(), Vec::new());
        for (j, (g, r)) in self.boundary_data.iter().zip(&self.responses).enumerate() {
            if keep(j, g) {
                data.push(g.clone());
                resp.push(r.clone());
            }
        }
        Self { mesh: self.mesh.clone(), boundary_data: data, responses: resp, noise: self.noise }
    }

    /// Combine consecutive data pairs `(g, −g)` into `g` with response
    /// `(R(g) − R(−g)) / 2`, cancelling every even-order term of the map.
    pub fn odd_part(&self) -> Result<Self> {
        if !self.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument("odd part needs data in (g, -g) pairs".into()));
        }
        let (mut data, mut resp) = (Vec::new(), Vec::new());
        for j in (0..self.len()).step_by(2) {
            let (g, h) = (&self.boundary_data[j], &self.boundary_data[j + 1]);
            if g.values.iter().zip(&h.values).any(|(x, y)| x + y != 0.0) {
                return Err(Error::InvalidArgument(format!("data {j} and {} are not a (g, -g) pair", j + 1)));
            }
            data.push(g.clone());
            let (r, s) = (&self.responses[j], &self.responses[j + 1]);
            resp.push(DtnResponse { pairings: r.pairings.iter().zip(&s.pairings).map(|(a, b)| 0.5 * (a - b)).collect() });
        }
        Ok(Self { mesh: self.mesh.clone(), boundary_data: data, responses: resp, noise: self.noise })
    }

    pub fn max_amplitude(&self) -> f64 {
        self.boundary_data.iter().map(BoundaryDatum::max_abs).fold(0.0, f64::max)
    }

    /// `Σ_j ‖obs_j‖²`.
    pub fn energy(&self) -> f64 {
        self.responses.iter().map(DtnResponse::squared_norm).sum()
    }

    /// Transfer the observation to a coarser nested mesh. Boundary values are
    /// read off at the shared vertices. Each coarse pairing is the fine
    /// response tested against the coarse boundary hat function, which is
    /// piecewise linear on the fine boundary.
    pub fn restrict_to(&self, coarse: &TriangleMesh) -> Result<Self> {
        let transfer = BoundaryTransfer::new(&self.mesh, coarse)?;
        let boundary_data = self.boundary_data.iter().map(|g| transfer.restrict_datum(g)).collect();
        let responses = self.responses.iter().map(|r| transfer.restrict_response(r)).collect();
        Ok(Self { mesh: coarse.clone(), boundary_data, responses, noise: self.noise })
    }

    pub fn to_document(&self) -> ObservationDocument {
        ObservationDocument {
            boundary_data: self.boundary_data.iter().map(|g| g.values.clone()).collect(),
            responses: self.responses.iter().map(|r| r.pairings.clone()).collect(),
            mesh: self.mesh.to_document(),
            noise: self.noise,
        }
    }

    pub fn from_document(doc: &ObservationDocument) -> Result<Self> {
        let mesh = TriangleMesh::from_document(&doc.mesh)?;
        if doc.boundary_data.len() != doc.responses.len() {
            return Err(Error::InvalidArgument("boundary_data and responses differ in length".into()));
        }
        let nb = mesh.num_boundary_vertices();
        let boundary_data = doc.boundary_data.iter().map(|v| BoundaryDatum::new(&mesh, v.clone())).collect::<Result<Vec<_>>>()?;
        let responses = doc
            .responses
            .iter()
            .map(|v| {
                if v.len() != nb {
                    return Err(Error::InvalidArgument(format!("response has {} entries, expected {nb}", v.len())));
                }
                Ok(DtnResponse { pairings: v.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mesh, boundary_data, responses, noise: doc.noise })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// Traces of `Re` and `Im` of `((z − z₀)/ρ)^k`, `k = 1..=degree`, after the
/// constant, with `z₀` the region centroid and `ρ` the largest distance from
/// it to a boundary vertex. All have unit maximum modulus.
pub fn harmonic_traces(mesh: &TriangleMesh, degree: usize) -> Vec<BoundaryDatum> {
    let z0 = mesh.region().centroid();
    let rho = mesh
        .boundary_vertices()
        .iter()
        .map(|&v| {
            let p = mesh.vertex(v);
            (p[0] - z0[0]).hypot(p[1] - z0[1])
        })
        .fold(0.0, f64::max);
    let mut out = vec![BoundaryDatum::constant(mesh, 1.0)];
    for k in 1..=degree {
        let power = move |p: [f64; 2]| {
            let (x, y) = ((p[0] - z0[0]) / rho, (p[1] - z0[1]) / rho);
            let (r, t) = (x.hypot(y).powi(k as i32), k as f64 * y.atan2(x));
            (r * t.cos(), r * t.sin())
        };
        out.push(BoundaryDatum::from_fn(mesh, |p, _| power(p).0));
        out.push(BoundaryDatum::from_fn(mesh, |p, _| power(p).1));
    }
    out
}

/// Responses are compared through their pairings with a fixed set of
/// smooth test traces, `⟨R, h_l⟩`. Nodal pairings next to corners carry
/// O(h) relative discretization errors; the tested pairings converge at
/// O(h²).
#[derive(Debug, Clone)]
pub struct Misfit {
    tests: Vec<BoundaryDatum>,
}

impl Misfit {
    pub fn new(tests: Vec<BoundaryDatum>) -> Result<Self> {
        if tests.is_empty() {
            return Err(Error::InvalidArgument("misfit needs at least one test trace".into()));
        }
        Ok(Self { tests })
    }

    /// Test traces from [`harmonic_traces`].
    pub fn harmonic(mesh: &TriangleMesh, degree: usize) -> Self {
        Self { tests: harmonic_traces(mesh, degree) }
    }

    pub fn tests(&self) -> &[BoundaryDatum] {
        &self.tests
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// `(⟨r, h_l⟩)_l`.
    pub fn measure(&self, r: &DtnResponse) -> Vec<f64> {
        self.tests.iter().map(|h| r.pair(h)).collect()
    }

    /// `Σ_l m_l h_l`, the boundary datum of the adjoint problem.
    pub fn back(&self, m: &[f64]) -> BoundaryDatum {
        let mut out = vec![0.0; self.tests[0].len()];
        for (h, &w) in self.tests.iter().zip(m) {
            for (o, v) in out.iter_mut().zip(&h.values) {
                *o += w * v;
            }
        }
        BoundaryDatum { values: out }
    }

    /// `Σ_j ‖measure(obs_j)‖²`.
    pub fn energy(&self, obs: &Observation) -> f64 {
        obs.responses.iter().map(|r| self.measure(r).iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub(crate) fn check(&self, mesh: &TriangleMesh) -> Result<()> {
        if self.tests.iter().any(|h| h.len() != mesh.num_boundary_vertices()) {
            return Err(Error::InvalidArgument("test traces do not match the mesh boundary".into()));
        }
        Ok(())
    }
}

pub(crate) fn squared(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Boundary transfer between a coarse mesh and a refinement of it. The
/// coarse boundary hats are piecewise linear in arclength along the fine
/// boundary.
#[derive(Debug, Clone)]
pub struct BoundaryTransfer {
    coarse_in_fine: Vec<usize>,
    // For every fine boundary vertex, (coarse index, hat value) pairs.
    weights: Vec<Vec<(usize, f64)>>,
}

impl BoundaryTransfer {
    pub fn new(fine: &TriangleMesh, coarse: &TriangleMesh) -> Result<Self> {
        let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let fine_pos: HashMap<(i64, i64), usize> =
            fine.boundary_vertices().iter().enumerate().map(|(k, &v)| (key(fine.vertex(v)), k)).collect();
        let nbf = fine.num_boundary_vertices();
        let nbc = coarse.num_boundary_vertices();
        let mut coarse_in_fine = Vec::with_capacity(nbc);
        for &v in coarse.boundary_vertices() {
            let k = fine_pos.get(&key(coarse.vertex(v))).copied().ok_or_else(|| {
                Error::InvalidMesh(format!("coarse boundary vertex {:?} is not a fine boundary vertex", coarse.vertex(v)))
            })?;
            coarse_in_fine.push(k);
        }

        let mut weights: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nbf];
        let bverts = fine.boundary_vertices();
        let seg = |a: usize, b: usize| {
            let (p, q) = (fine.vertex(bverts[a]), fine.vertex(bverts[b]));
            (p[0] - q[0]).hypot(p[1] - q[1])
        };
        for ci in 0..nbc {
            let (start, end) = (coarse_in_fine[ci], coarse_in_fine[(ci + 1) % nbc]);
            let steps = (end + nbf - start) % nbf;
            let lengths: Vec<f64> = (0..steps).map(|t| seg((start + t) % nbf, (start + t + 1) % nbf)).collect();
            let total: f64 = lengths.iter().sum();
            let mut acc = 0.0;
            weights[start].push((ci, 1.0));
            for (t, len) in lengths.iter().enumerate().take(steps.saturating_sub(1)) {
                acc += len;
                let k = (start + t + 1) % nbf;
                let w = acc / total;
                weights[k].push((ci, 1.0 - w));
                weights[k].push(((ci + 1) % nbc, w));
            }
        }
        Ok(Self { coarse_in_fine, weights })
    }

    /// Values at the shared vertices.
    pub fn restrict_datum(&self, g: &BoundaryDatum) -> BoundaryDatum {
        BoundaryDatum { values: self.coarse_in_fine.iter().map(|&k| g.values[k]).collect() }
    }

    /// Pairings against the coarse hats.
    pub fn restrict_response(&self, r: &DtnResponse) -> DtnResponse {
        let mut out = vec![0.0; self.coarse_in_fine.len()];
        for (ws, p) in self.weights.iter().zip(&r.pairings) {
            for &(ci, w) in ws {
                out[ci] += w * p;
            }
        }
        DtnResponse { pairings: out }
    }

    /// Piecewise linear interpolation of a coarse datum onto the fine boundary.
    pub fn prolong_datum(&self, g: &BoundaryDatum) -> BoundaryDatum {
        BoundaryDatum { values: self.weights.iter().map(|ws| ws.iter().map(|&(ci, w)| w * g.values[ci]).sum()).collect() }
    }
}

/// Outcome of one Gauss–Newton stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub misfit_history: Vec<f64>,
    pub beta: f64,
    /// Error against ground truth when one was supplied.
    pub parameter_error: Option<f64>,
    /// Knots of `a` that no forward solution reached.
    pub unswept_knots: Vec<usize>,
}

/// One stage of the staged recovery, seen by the shared Gauss–Newton driver.
pub(crate) trait Stage {
    type State;
    fn state(&self, x: &[f64], warm: Option<&Self::State>) -> Result<Self::State>;
    fn objective(&self, st: &Self::State) -> f64;
    fn misfit(&self, st: &Self::State) -> f64;
    /// Gradient of the objective with respect to every parameter.
    fn gradient(&self, x: &[f64], st: &Self::State) -> Result<Vec<f64>>;
    /// Gauss–Newton matrix restricted to the listed parameters.
    fn normal_matrix(&self, x: &[f64], st: &Self::State, vars: &[usize]) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DriverOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub max_backtracks: usize,
    pub lower: f64,
    pub upper: f64,
}

pub(crate) struct DriverOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Projected Gauss–Newton over the parameters `vars`, the others held fixed.
/// Parameters sitting on a bound with the gradient pointing outwards are
/// frozen for the step. If Armijo backtracking rejects the Gauss–Newton
/// direction, steepest descent is tried before giving up.
pub(crate) fn projected_gauss_newton<S: Stage>(stage: &S, x0: Vec<f64>, vars: &[usize], opts: DriverOptions) -> Result<DriverOutcome> {
    let mut x = x0;
    let mut st = stage.state(&x, None)?;
    let mut history = vec![stage.objective(&st)];
    let mut iterations = 0;
    let project = |v: f64| v.clamp(opts.lower, opts.upper);
    while iterations < opts.max_iter && stage.misfit(&st) > opts.tol && !vars.is_empty() {
        let grad = stage.gradient(&x, &st)?;
        let h = stage.normal_matrix(&x, &st, vars)?;
        let span = opts.upper - opts.lower;
        let work: Vec<usize> = (0..vars.len())
            .filter(|&a| {
                let (k, v) = (vars[a], x[vars[a]]);
                !((v <= opts.lower + 1e-12 * span && grad[k] > 0.0) || (v >= opts.upper - 1e-12 * span && grad[k] < 0.0))
            })
            .collect();
        if work.is_empty() {
            break;
        }
        let mut hw = DMatrix::from_fn(work.len(), work.len(), |a, b| h[(work[a], work[b])]);
        let shift = 1e-12 * (0..hw.nrows()).map(|k| hw[(k, k)]).fold(0.0, f64::max);
        for k in 0..hw.nrows() {
            hw[(k, k)] += shift;
        }
        let rhs = DVector::from_iterator(work.len(), work.iter().map(|&a| -grad[vars[a]]));
        let gn = hw.clone().cholesky().ok_or_else(|| Error::Factorization("Gauss–Newton matrix".into()))?.solve(&rhs);
        let spread = |step: &[f64]| {
            let mut dir = vec![0.0; x.len()];
            for (s, &a) in step.iter().zip(&work) {
                dir[vars[a]] = *s;
            }
            dir
        };
        // Fallback: steepest descent, largest component a tenth of the box.
        let gmax = rhs.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let scaled: Vec<f64> = rhs.iter().map(|g| 0.1 * span * g / gmax).collect();
        let f0 = stage.objective(&st);
        let mut accepted = None;
        for dir in [spread(gn.as_slice()), spread(&scaled)] {
            if let Some(found) =
                armijo(&x, f0, &grad, &dir, vars, project, |t| stage.state(t, Some(&st)), |s| stage.objective(s), opts.max_backtracks)?
            {
                accepted = Some(found);
                break;
            }
        }
        iterations += 1;
        match accepted {
            Some((next, next_state)) => {
                let f1 = stage.objective(&next_state);
                x = next;
                st = next_state;
                history.push(f1);
                if f0 - f1 <= 1e-10 * f0 {
                    break;
                }
            }
            None => {
                // A stalled search whose predicted gain is below the forward-solve
                // noise floor is convergence.
                let predicted: f64 = work.iter().enumerate().map(|(i, &a)| -grad[vars[a]] * gn[i]).sum();
                if predicted <= 1e-8 * f0 {
                    break;
                }
                return Err(Error::LineSearch { iteration: iterations, backtracks: opts.max_backtracks });
            }
        }
    }
    Ok(DriverOutcome { x, iterations, history })
}

// Armijo backtracking (factor ½) on the projected path x + t·dir.
#[allow(clippy::too_many_arguments)]
fn armijo<T>(
    x: &[f64],
    fx: f64,
    grad: &[f64],
    dir: &[f64],
    vars: &[usize],
    project: impl Fn(f64) -> f64,
    mut state: impl FnMut(&[f64]) -> Result<T>,
    objective: impl Fn(&T) -> f64,
    max_backtracks: usize,
) -> Result<Option<(Vec<f64>, T)>> {
    let mut t = 1.0;
    for _ in 0..=max_backtracks {
        let mut trial = x.to_vec();
        for &k in vars {
            trial[k] = project(x[k] + t * dir[k]);
        }
        let descent: f64 = vars.iter().map(|&k| grad[k] * (trial[k] - x[k])).sum();
        // Forward solves can fail far from the data; that rejects the step.
        match state(&trial) {
            Ok(st) => {
                let ft = objective(&st);
                if ft <= fx + 1e-4 * descent && ft <= fx {
                    return Ok(Some((trial, st)));
                }
            }
            Err(e) if e.is_solver_failure() => {}
            Err(e) => return Err(e),
        }
        t *= 0.5;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Region;

    #[test]
    fn restriction_matches_coarse_pairings_for_linear_responses() {
        // Fine responses m_k f(x_k) approximate ∫ φ_k f; restricted, they
        // should approximate ∫ φ_i f for the coarse hats up to O(h²).
        let coarse = TriangleMesh::generate(Region::UnitSquare, 8).unwrap();
        let fine = coarse.refine().unwrap();
        let f = |p: [f64; 2]| p[0] + 2.0 * p[1];
        let lumped = DtnResponse {
            pairings: dtn::boundary_mass(&fine).iter().zip(fine.boundary_vertices()).map(|(m, &v)| m * f(fine.vertex(v))).collect(),
        };
        let obs = Observation {
            boundary_data: vec![BoundaryDatum::from_fn(&fine, |p, _| f(p))],
            responses: vec![lumped],
            mesh: fine,
            noise: 0.0,
        };
        let r = obs.restrict_to(&coarse).unwrap();
        assert_eq!(r.boundary_data[0], BoundaryDatum::from_fn(&coarse, |p, _| f(p)));
        let total_fine: f64 = obs.responses[0].pairings.iter().sum();
        let total_coarse: f64 = r.responses[0].pairings.iter().sum();
        assert!((total_fine - total_coarse).abs() < 1e-12);
        // ∫ φ_i f over an edge (i, j) of length L is L (2 f_i + f_j) / 6.
        let mut exact = vec![0.0; coarse.num_boundary_vertices()];
        for e in coarse.boundary_edges() {
            let [i, j] = e.vertices;
            let (fi, fj) = (f(coarse.vertex(i)), f(coarse.vertex(j)));
            exact[coarse.boundary_position(i).unwrap()] += e.length * (2.0 * fi + fj) / 6.0;
            exact[coarse.boundary_position(j).unwrap()] += e.length * (2.0 * fj + fi) / 6.0;
        }
        let h = 1.0 / 16.0;
        for (a, b) in r.responses[0].pairings.iter().zip(&exact) {
            assert!((a - b).abs() <= h * h, "{a} vs {b}");
        }
    }

    #[test]
    fn restriction_on_disk() {
        let coarse = TriangleMesh::generate(Region::UnitDisk, 6).unwrap();
        let fine = coarse.refine().unwrap();
        let nb = fine.num_boundary_vertices();
        let obs = Observation {
            boundary_data: vec![BoundaryDatum::constant(&fine, 1.0)],
            responses: vec![DtnResponse { pairings: vec![1.0; nb] }],
            mesh: fine,
            noise: 0.0,
        };
        let r = obs.restrict_to(&coarse).unwrap();
        // Coarse hats form a partition of unity on the fine boundary.
        let total: f64 = r.responses[0].pairings.iter().sum();
        assert!((total - nb as f64).abs() < 1e-12);
    }

    #[test]
    fn noise_is_seeded() {
        let mesh = TriangleMesh::generate(Region::UnitSquare, 4).unwrap();
        let nb = mesh.num_boundary_vertices();
        let obs = Observation {
            boundary_data: vec![BoundaryDatum::zeros(&mesh)],
            responses: vec![DtnResponse { pairings: (0..nb).map(|k| k as f64).collect() }],
            mesh,
            noise: 0.0,
        };
        let a = obs.clone().with_noise(0.01, 5).unwrap();
        let b = obs.clone().with_noise(0.01, 5).unwrap();
        let c = obs.clone().with_noise(0.01, 6).unwrap();
        assert_eq!(a.responses, b.responses);
        assert_ne!(a.responses, c.responses);
        assert_ne!(a.responses, obs.responses);
    }

    #[test]
    fn observation_json_round_trip() {
        let mesh = TriangleMesh::generate(Region::UnitSquare, 3).unwrap();
        let a = CoefficientA::constant(1.0, 0.5).unwrap();
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let data = vec![BoundaryDatum::from_fn(&mesh, |p, _| p[0])];
        let obs = Observation::synthesize(mesh, &a, &c, data, SolveOptions::default()).unwrap();
        let back = Observation::from_json(&obs.to_json().unwrap()).unwrap();
        assert_eq!(back.responses, obs.responses);
        assert_eq!(back.boundary_data, obs.boundary_data);
        let text = obs.to_json().unwrap();
        for key in ["boundary_data", "responses", "mesh", "noise"] {
            assert!(text.contains(&format!("\"{key}\"")));
        }
    }
}
