use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::a0::{recover_a0, A0Estimate};
use super::au::{au_gradient, au_objective, recover_au, swept_knot_error, AuOptions};
use super::c::{c_gradient, c_objective, c_relative_error, recover_c, COptions};
use super::{harmonic_traces, BoundaryTransfer, Misfit, Observation, ReconReport};
use crate::coeffs::{CoefficientA, CoefficientC};
use crate::error::Result;
use crate::fem::{BoundaryDatum, CgOptions};
use crate::mesh::{Point, Region, TriangleMesh};
use crate::solver::{Forward, SolveOptions};

/// Small-amplitude data: every trace of [`harmonic_traces`] up to `degree`,
/// scaled by `amp`, as consecutive `(g, −g)` pairs.
pub fn default_small_data(mesh: &TriangleMesh, degree: usize, amp: f64) -> Vec<BoundaryDatum> {
    harmonic_traces(mesh, degree).iter().flat_map(|h| [h.scaled(amp), h.scaled(-amp)]).collect()
}

/// Large-amplitude data: each amplitude times the traces up to `degree`.
pub fn default_large_data(mesh: &TriangleMesh, degree: usize, amplitudes: &[f64]) -> Vec<BoundaryDatum> {
    let shapes = harmonic_traces(mesh, degree);
    amplitudes.iter().flat_map(|&t| shapes.iter().map(move |g| g.scaled(t))).collect()
}

/// Ground-truth profile for `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CProfile {
    Constant {
        value: f64,
    },
    /// `constant + gradient·x`
    Affine {
        constant: f64,
        gradient: Point,
    },
    /// `amplitude · exp(−width |x − center|²)`
    Bump {
        amplitude: f64,
        center: Point,
        width: f64,
    },
}

impl CProfile {
    pub fn eval(&self, p: Point) -> f64 {
        match *self {
            CProfile::Constant { value } => value,
            CProfile::Affine { constant, gradient } => constant + gradient[0] * p[0] + gradient[1] * p[1],
            CProfile::Bump { amplitude, center, width } => {
                amplitude * (-width * ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2))).exp()
            }
        }
    }

    pub fn on(&self, mesh: &TriangleMesh, alpha: f64) -> Result<CoefficientC> {
        CoefficientC::from_fn(mesh, alpha, |p| self.eval(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub region: Region,
    /// Inversion mesh resolution.
    pub resolution: usize,
    /// Synthesize data one refinement level above the inversion mesh.
    pub guard: bool,
    pub a_truth: CoefficientA,
    pub c_truth: CProfile,
    pub small_amplitude: f64,
    /// Highest harmonic degree of the small-amplitude data.
    pub small_degree: usize,
    /// Highest harmonic degree of the test traces for the `a(0)` and `c` misfits.
    pub small_test_degree: usize,
    pub large_amplitudes: Vec<f64>,
    /// Highest harmonic degree of the large-amplitude data.
    pub large_degree: usize,
    /// Highest harmonic degree of the test traces for the `a(u)` misfit.
    pub large_test_degree: usize,
    /// Knots of the recovered `a`; must contain `0`.
    pub a_grid: Vec<f64>,
    pub a0_tol: f64,
    pub c_options: COptions,
    pub a_options: AuOptions,
    /// Give the `a(0)` stage the true `c`, as its precondition asks. When
    /// false, the `a(0)` and `c` stages alternate for `rounds` passes,
    /// starting from `c = 0`.
    pub c_known: bool,
    pub rounds: usize,
    pub noise: f64,
    pub seed: u64,
    pub solve: SolveOptions,
}

fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let a_truth =
            CoefficientA::from_fn(uniform_grid(-1.0, 1.0, 0.25), 0.5, |u| 1.0 + 0.5 * u.clamp(0.0, 1.0)).expect("admissible default");
        Self {
            region: Region::UnitSquare,
            resolution: 32,
            guard: true,
            a_truth,
            c_truth: CProfile::Bump { amplitude: 0.5, center: [0.5, 0.5], width: 8.0 },
            small_amplitude: 1e-3,
            // Higher-degree data carry less information on c and a(u)
            // relative to the coarse/fine discretization mismatch.
            small_degree: 1,
            small_test_degree: 4,
            large_amplitudes: vec![0.25, 0.5, 1.0],
            large_degree: 1,
            large_test_degree: 2,
            a_grid: uniform_grid(-1.0, 1.0, 0.25),
            a0_tol: 1e-6,
            c_options: COptions::default(),
            a_options: AuOptions::default(),
            c_known: true,
            rounds: 2,
            noise: 0.0,
            seed: 0,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub a0: A0Estimate,
    pub a0_error: f64,
    pub a0_history: Vec<f64>,
    pub c_values: Vec<f64>,
    pub c_error: f64,
    pub c_report: ReconReport,
    pub a: CoefficientA,
    pub a_error: f64,
    pub a_report: ReconReport,
    pub data_resolution: usize,
}

/// Synthesize observations for `cfg` on the inversion mesh, returning the
/// small-amplitude (odd part) and large-amplitude sets and the resolution
/// the data were computed at. With the guard on, the boundary data are
/// piecewise linear on the inversion mesh boundary and the responses come
/// from its refinement.
pub fn synthesize(cfg: &PipelineConfig, mesh: &TriangleMesh) -> Result<(Observation, Observation, usize)> {
    let alpha = cfg.a_truth.alpha();
    let small = default_small_data(mesh, cfg.small_degree, cfg.small_amplitude);
    let large = default_large_data(mesh, cfg.large_degree, &cfg.large_amplitudes);
    let (small, large, resolution) = if cfg.guard {
        let fine = mesh.refine()?;
        let transfer = BoundaryTransfer::new(&fine, mesh)?;
        let c_fine = cfg.c_truth.on(&fine, alpha)?;
        let prolong = |data: Vec<BoundaryDatum>| data.iter().map(|g| transfer.prolong_datum(g)).collect::<Vec<_>>();
        let small = Observation::synthesize(fine.clone(), &cfg.a_truth, &c_fine, prolong(small), cfg.solve)?;
        let large = Observation::synthesize(fine, &cfg.a_truth, &c_fine, prolong(large), cfg.solve)?;
        (small, large, 2 * cfg.resolution)
    } else {
        let c = cfg.c_truth.on(mesh, alpha)?;
        let small = Observation::synthesize(mesh.clone(), &cfg.a_truth, &c, small, cfg.solve)?;
        let large = Observation::synthesize(mesh.clone(), &cfg.a_truth, &c, large, cfg.solve)?;
        (small, large, cfg.resolution)
    };
    let (small, large) = if cfg.noise > 0.0 {
        (small.with_noise(cfg.noise, cfg.seed)?, large.with_noise(cfg.noise, cfg.seed.wrapping_add(1))?)
    } else {
        (small, large)
    };
    let (small, large) = if cfg.guard { (small.restrict_to(mesh)?, large.restrict_to(mesh)?) } else { (small, large) };
    Ok((small.odd_part()?, large, resolution))
}

/// Staged recovery `a(0) → c → a(u)` against a known ground truth.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineResult> {
    let mesh = TriangleMesh::generate(cfg.region, cfg.resolution)?;
    let alpha = cfg.a_truth.alpha();
    let (small, large, data_resolution) = synthesize(cfg, &mesh)?;
    let fwd = Forward::new(&mesh, cfg.solve)?;
    let small_misfit = Misfit::harmonic(&mesh, cfg.small_test_degree);
    let large_misfit = Misfit::harmonic(&mesh, cfg.large_test_degree);
    let c_true = cfg.c_truth.on(&mesh, alpha)?;
    let a0_true = cfg.a_truth.eval(0.0);

    let mut c = CoefficientC::zero(&mesh, alpha)?;
    let mut a0_history = Vec::new();
    let mut a0 = None;
    let mut c_report = None;
    let rounds = if cfg.c_known { 1 } else { cfg.rounds.max(1) };
    for _ in 0..rounds {
        let prior = if cfg.c_known { &c_true } else { &c };
        let est = recover_a0(&fwd, &small, &small_misfit, prior, cfg.a0_tol)?;
        a0_history.push(est.a0);
        let (next, report) = recover_c(&fwd, &small, &small_misfit, est.a0, &c, cfg.c_options)?;
        c = next;
        a0 = Some(est);
        c_report = Some(report);
    }
    let a0 = a0.expect("at least one round");
    let c_error = c_relative_error(&fwd, &c, &c_true);
    let mut c_report = c_report.expect("at least one round");
    c_report.parameter_error = Some(c_error);

    let start = CoefficientA::constant(a0.a0, alpha)?.with_grid(cfg.a_grid.clone())?;
    let (a, mut a_report) = recover_au(&fwd, &large, &large_misfit, &c, &start, cfg.a_options)?;
    let a_error = swept_knot_error(&a, &cfg.a_truth, &a_report);
    a_report.parameter_error = Some(a_error);

    Ok(PipelineResult {
        a0,
        a0_error: (a0.a0 - a0_true).abs(),
        a0_history,
        c_values: c.values().to_vec(),
        c_error,
        c_report,
        a,
        a_error,
        a_report,
        data_resolution,
    })
}

/// Relative gaps `|fd − adj| / |adj|` between adjoint directional
/// derivatives and central differences, one per random direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub c: Vec<f64>,
    pub a: Vec<f64>,
}

impl GradientCheck {
    pub fn max(&self) -> f64 {
        self.c.iter().chain(&self.a).fold(0.0, |m, &v| m.max(v))
    }
}

/// Check both adjoint gradients on a `resolution` mesh without the guard,
/// at points away from the truth, with tight solver tolerances.
pub fn gradient_check(cfg: &PipelineConfig, resolution: usize, directions: usize, seed: u64) -> Result<GradientCheck> {
    let mesh = TriangleMesh::generate(cfg.region, resolution)?;
    let alpha = cfg.a_truth.alpha();
    let opts = SolveOptions { tol: 1e-13, cg: CgOptions { rel_tol: 1e-15, max_iter: 20_000 }, ..cfg.solve };
    let fwd = Forward::new(&mesh, opts)?;
    let c_true = cfg.c_truth.on(&mesh, alpha)?;
    let a0 = cfg.a_truth.eval(0.0);
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = |fd: f64, adj: f64| (fd - adj).abs() / adj.abs();

    let small = default_small_data(&mesh, cfg.small_degree.max(1), cfg.small_amplitude);
    let obs = Observation::synthesize(mesh.clone(), &cfg.a_truth, &c_true, small, opts)?.odd_part()?;
    let misfit = Misfit::harmonic(&mesh, cfg.small_test_degree);
    let beta = cfg.c_options.beta;
    let at = CoefficientC::projected(c_true.values().iter().map(|v| 0.5 * v + 0.2).collect(), alpha)?;
    let grad = c_gradient(&fwd, &obs, &misfit, a0, &at, beta)?;
    let mut c_gaps = Vec::with_capacity(directions);
    for _ in 0..directions {
        let dir: Vec<f64> = (0..at.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| CoefficientC::new(at.values().iter().zip(&dir).map(|(v, d)| v + s * d).collect(), alpha);
        let fd = (c_objective(&fwd, &obs, &misfit, a0, &shifted(h)?, beta)? - c_objective(&fwd, &obs, &misfit, a0, &shifted(-h)?, beta)?)
            / (2.0 * h);
        c_gaps.push(gap(fd, grad.iter().zip(&dir).map(|(g, d)| g * d).sum()));
    }

    let large = default_large_data(&mesh, cfg.large_degree, &cfg.large_amplitudes);
    let obs = Observation::synthesize(mesh.clone(), &cfg.a_truth, &c_true, large, opts)?;
    let misfit = Misfit::harmonic(&mesh, cfg.large_test_degree);
    let beta = cfg.a_options.beta;
    let at = CoefficientA::from_fn(cfg.a_grid.clone(), alpha, |u| (a0 + 0.2 * u + 0.1 * u * u).clamp(alpha, 1.0 / alpha))?;
    let grad = au_gradient(&fwd, &obs, &misfit, &c_true, &at, beta)?;
    let mut a_gaps = Vec::with_capacity(directions);
    for _ in 0..directions {
        let dir: Vec<f64> = (0..grad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| at.with_values(at.a_values().iter().zip(&dir).map(|(v, d)| v + s * d).collect());
        let fd = (au_objective(&fwd, &obs, &misfit, &c_true, &shifted(h)?, beta)?
            - au_objective(&fwd, &obs, &misfit, &c_true, &shifted(-h)?, beta)?)
            / (2.0 * h);
        a_gaps.push(gap(fd, grad.iter().zip(&dir).map(|(g, d)| g * d).sum()));
    }
    Ok(GradientCheck { c: c_gaps, a: a_gaps })
}
