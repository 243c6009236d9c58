//! Experiment configuration files.
//!
//! A config is one JSON object. The top level names the experiment and
//! carries the shared pieces (mesh, coefficients, solver options, seed);
//! `params` holds the experiment-specific block, parsed once the
//! experiment is known so that typos are reported with their path.

use std::path::PathBuf;

use dtnlab_core::mesh::Point;
use dtnlab_core::probes::{flat_side, HarmonicTest, SingularProbe};
use dtnlab_core::recon::{CProfile, PipelineConfig};
use dtnlab_core::{BoundaryDatum, CoefficientA, CoefficientC, Region, SolveOptions, TriangleMesh};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Dtn,
    Linearize,
    ProbeA0,
    ProbeAu,
    CapCheck,
    IdentityCheck,
    Reconstruct,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Dtn => "dtn",
            ExperimentKind::Linearize => "linearize",
            ExperimentKind::ProbeA0 => "probe-a0",
            ExperimentKind::ProbeAu => "probe-au",
            ExperimentKind::CapCheck => "cap-check",
            ExperimentKind::IdentityCheck => "identity-check",
            ExperimentKind::Reconstruct => "reconstruct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default = "default_region")]
    pub region: Region,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_region() -> Region {
    Region::UnitSquare
}

fn default_resolution() -> usize {
    16
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { region: default_region(), resolution: default_resolution() }
    }
}

impl MeshSpec {
    pub fn build(&self) -> Result<TriangleMesh, CliError> {
        Ok(TriangleMesh::generate(self.region, self.resolution)?)
    }
}

fn default_alpha() -> f64 {
    0.5
}

/// Coefficient `a(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ASpec {
    Constant {
        value: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Knot table, interpolated linearly.
    Table {
        u_grid: Vec<f64>,
        a_values: Vec<f64>,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// `base + slope·(clamp(u, from, to) − from)` sampled on `lo..=hi` with
    /// spacing `step`.
    Clamped {
        base: f64,
        slope: f64,
        from: f64,
        to: f64,
        lo: f64,
        hi: f64,
        step: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

impl Default for ASpec {
    fn default() -> Self {
        ASpec::Constant { value: 1.0, alpha: default_alpha() }
    }
}

impl ASpec {
    pub fn alpha(&self) -> f64 {
        match *self {
            ASpec::Constant { alpha, .. } | ASpec::Table { alpha, .. } | ASpec::Clamped { alpha, .. } => alpha,
        }
    }

    pub fn build(&self) -> Result<CoefficientA, CliError> {
        Ok(match self {
            ASpec::Constant { value, alpha } => CoefficientA::constant(*value, *alpha)?,
            ASpec::Table { u_grid, a_values, alpha } => CoefficientA::new(u_grid.clone(), a_values.clone(), *alpha)?,
            &ASpec::Clamped { base, slope, from, to, lo, hi, step, alpha } => {
                if !(step > 0.0 && hi > lo && to >= from) {
                    return Err(CliError::Config(format!("clamped coefficient needs step > 0, hi > lo and to ≥ from; got {self:?}")));
                }
                let n = ((hi - lo) / step).round() as usize;
                let grid = (0..=n).map(|k| lo + k as f64 * step).collect();
                CoefficientA::from_fn(grid, alpha, |u| base + slope * (u.clamp(from, to) - from))?
            }
        })
    }
}

pub fn build_c(spec: &CProfile, mesh: &TriangleMesh, alpha: f64) -> Result<CoefficientC, CliError> {
    Ok(spec.on(mesh, alpha)?)
}

/// Boundary data. `s` below is arclength normalised to `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Constant {
        value: f64,
    },
    /// `constant + gradient·x`
    Affine {
        constant: f64,
        gradient: Point,
    },
    /// `amplitude · Re/Im (z − z₀)^degree` with `z₀` the region centroid.
    Harmonic {
        degree: u32,
        #[serde(default)]
        imaginary: bool,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `offset + amplitude · cos(2π·mode·s + phase)`
    Fourier {
        mode: u32,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        phase: f64,
    },
    /// High value on a cap of radius `r` around `anchor`, low value beyond
    /// `s`, linear in between.
    Cap {
        anchor: Point,
        r: f64,
        s: f64,
        g_high: f64,
        g_low: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DataSpec {
    pub fn build(&self, mesh: &TriangleMesh) -> Result<BoundaryDatum, CliError> {
        let z0 = mesh.region().centroid();
        Ok(match *self {
            DataSpec::Constant { value } => BoundaryDatum::constant(mesh, value),
            DataSpec::Affine { constant, gradient } => {
                BoundaryDatum::from_fn(mesh, |p, _| constant + gradient[0] * p[0] + gradient[1] * p[1])
            }
            DataSpec::Harmonic { degree, imaginary, amplitude } => {
                let h = HarmonicTest::Polynomial { degree, imaginary };
                BoundaryDatum::from_fn(mesh, |p, _| amplitude * h.value([p[0] - z0[0], p[1] - z0[1]]).expect("polynomial"))
            }
            DataSpec::Fourier { mode, amplitude, offset, phase } => {
                BoundaryDatum::from_fn(mesh, |_, s| offset + amplitude * (2.0 * std::f64::consts::PI * mode as f64 * s + phase).cos())
            }
            DataSpec::Cap { anchor, r, s, g_high, g_low } => {
                dtnlab_core::probes::CapDatum::new(anchor, r, s, g_high, g_low)?.to_boundary(mesh)
            }
        })
    }
}

/// Harmonic test functions `λ` for the identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaSpec {
    Constant {
        value: f64,
    },
    Polynomial {
        degree: u32,
        #[serde(default)]
        imaginary: bool,
    },
    /// Normal derivative of the fundamental solution with its source at
    /// distance `eps` outside the boundary point `anchor`.
    Dipole {
        anchor: Point,
        eps: f64,
    },
}

impl LambdaSpec {
    pub fn build(&self, region: Region) -> Result<HarmonicTest, CliError> {
        Ok(match *self {
            LambdaSpec::Constant { value } => HarmonicTest::Constant { value },
            LambdaSpec::Polynomial { degree, imaginary } => HarmonicTest::Polynomial { degree, imaginary },
            LambdaSpec::Dipole { anchor, eps } => {
                let normal = match region {
                    Region::UnitSquare => flat_side(region, anchor)?.0,
                    Region::UnitDisk => {
                        let r = (anchor[0] * anchor[0] + anchor[1] * anchor[1]).sqrt();
                        [anchor[0] / r, anchor[1] / r]
                    }
                };
                HarmonicTest::Probe { probe: SingularProbe::normal_derivative(anchor, normal, eps)? }
            }
        })
    }
}

/// Top level of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub mesh: MeshSpec,
    /// `a`, or `a₁` where two coefficients are compared.
    #[serde(default)]
    pub a: ASpec,
    /// `a₂`; defaults to `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<ASpec>,
    #[serde(default = "zero_c")]
    pub c: CProfile,
    /// `c₂`; defaults to `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<CProfile>,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn zero_c() -> CProfile {
    CProfile::Constant { value: 0.0 }
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            mesh: MeshSpec::default(),
            a: ASpec::default(),
            a2: None,
            c: zero_c(),
            c2: None,
            solve: SolveOptions::default(),
            params: empty_object(),
            output: None,
            seed: 0,
        }
    }

    pub fn with_params<P: Serialize>(mut self, params: &P) -> Self {
        self.params = serde_json::to_value(params).expect("parameters serialize");
        self
    }

    /// Parse a config, reporting the failing field path and position.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            CliError::Parse { path: e.path().to_string(), line: inner.line(), column: inner.column(), message: inner.to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Experiment-specific parameters.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P, CliError> {
        serde_path_to_error::deserialize(&self.params).map_err(|e| CliError::Parse {
            path: format!("params.{}", e.path()),
            line: 0,
            column: 0,
            message: e.inner().to_string(),
        })
    }

    pub fn a1(&self) -> &ASpec {
        &self.a
    }

    pub fn a2(&self) -> &ASpec {
        self.a2.as_ref().unwrap_or(&self.a)
    }

    pub fn c1(&self) -> &CProfile {
        &self.c
    }

    pub fn c2(&self) -> &CProfile {
        self.c2.as_ref().unwrap_or(&self.c)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.mesh.resolution < 2 || self.mesh.resolution > 512 {
            return Err(CliError::Config(format!("mesh.resolution must lie in [2, 512], got {}", self.mesh.resolution)));
        }
        if !self.params.is_object() {
            return Err(CliError::Config("params must be a JSON object".into()));
        }
        Ok(())
    }
}

// Parameter blocks, one per experiment. Every tolerance is a field so a
// suite can tighten or relax it.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveParams {
    /// Explicit boundary data, solved by both routes.
    pub data: Vec<DataSpec>,
    /// Additional random admissible `(a, c, g)` triples drawn from the seed.
    pub random_cases: usize,
    /// Bound on the L² distance between the two routes.
    pub tol: f64,
    /// Resolutions for a manufactured-solution study of the linear kernel.
    pub manufactured: Vec<usize>,
    pub expected_order: f64,
    pub order_band: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { data: vec![], random_cases: 0, tol: 5e-8, manufactured: vec![], expected_order: 2.0, order_band: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtnParams {
    pub data: Vec<DataSpec>,
    /// Bound on the relative symmetry and superposition defects.
    pub tol: f64,
    /// Also write the full linearized DtN matrix.
    pub matrix: bool,
}

impl Default for DtnParams {
    fn default() -> Self {
        Self {
            data: vec![
                DataSpec::Constant { value: 1.0 },
                DataSpec::Harmonic { degree: 1, imaginary: false, amplitude: 1.0 },
                DataSpec::Harmonic { degree: 2, imaginary: true, amplitude: 1.0 },
                DataSpec::Fourier { mode: 1, amplitude: 1.0, offset: 0.0, phase: 0.0 },
                DataSpec::Fourier { mode: 3, amplitude: 0.5, offset: 0.2, phase: 1.0 },
            ],
            tol: 1e-9,
            matrix: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizeParams {
    pub data: DataSpec,
    /// Explicit decreasing `τ`; otherwise `1, ½, …, 2^{-halvings}`.
    pub taus: Option<Vec<f64>>,
    pub halvings: usize,
    /// Bound on the deviation when `a` is constant.
    pub exact_tol: f64,
    pub min_slope: f64,
    /// Number of trailing `τ` over which the deviation must not increase.
    pub monotone_tail: usize,
}

impl Default for LinearizeParams {
    fn default() -> Self {
        Self {
            data: DataSpec::Fourier { mode: 1, amplitude: 1.0, offset: 1.0, phase: 0.0 },
            taus: None,
            halvings: 8,
            exact_tol: 1e-9,
            min_slope: 0.8,
            monotone_tail: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeA0Params {
    pub anchor: Point,
    /// Unit direction from the anchor to the source.
    pub direction: Point,
    pub distances: Vec<f64>,
    /// `L` in `log(|x − y| / L)`.
    pub length_scale: f64,
    pub residual_tol: f64,
    /// Check the blow-up dichotomy as well as the residual.
    pub dichotomy: bool,
    pub max_low_ratio: f64,
}

impl Default for ProbeA0Params {
    fn default() -> Self {
        Self {
            anchor: [0.5, 0.0],
            direction: [0.0, -1.0],
            distances: dtnlab_core::probes::default_distances(),
            length_scale: 2.0,
            residual_tol: 1e-6,
            dichotomy: true,
            max_low_ratio: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeAuParams {
    pub anchor: Point,
    pub g_low: f64,
    pub g_high: f64,
    pub eps: Vec<f64>,
    pub slope_target: f64,
    pub slope_band: f64,
    pub max_final_ring_ratio: f64,
    pub volume_factor: f64,
    pub cap_tol: f64,
    pub identity_tol: f64,
}

impl Default for ProbeAuParams {
    fn default() -> Self {
        Self {
            anchor: [0.5, 0.0],
            g_low: 0.5,
            g_high: 1.0,
            eps: dtnlab_core::probes::default_eps(),
            slope_target: -1.0,
            slope_band: 0.2,
            max_final_ring_ratio: 0.1,
            volume_factor: 2.0,
            cap_tol: 1e-8,
            identity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapCheckParams {
    pub r: Vec<f64>,
    pub eps: Vec<f64>,
    pub tol: f64,
}

impl Default for CapCheckParams {
    fn default() -> Self {
        Self { r: vec![0.1, 0.5, 1.0], eps: vec![0.05, 0.2, 1.0], tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentityParams {
    pub data: Vec<DataSpec>,
    pub tests: Vec<LambdaSpec>,
    pub tol: f64,
}

impl Default for IdentityParams {
    fn default() -> Self {
        Self {
            data: vec![
                DataSpec::Affine { constant: 0.0, gradient: [1.0, 0.5] },
                DataSpec::Cap { anchor: [0.5, 0.0], r: 0.1, s: 0.2, g_high: 1.0, g_low: 0.5 },
            ],
            tests: vec![
                LambdaSpec::Constant { value: 1.0 },
                LambdaSpec::Polynomial { degree: 2, imaginary: false },
                LambdaSpec::Polynomial { degree: 3, imaginary: true },
                LambdaSpec::Dipole { anchor: [0.5, 0.0], eps: 0.1 },
                LambdaSpec::Dipole { anchor: [0.5, 0.0], eps: 0.025 },
            ],
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructParams {
    /// Everything but the mesh, which comes from the top level, and the
    /// seed. `a` and `c` at the top level are ignored; the ground truth
    /// lives here.
    pub pipeline: PipelineConfig,
    pub a0_tol: f64,
    pub c_tol: f64,
    pub a_tol: f64,
    pub gradient_tol: f64,
    pub gradient_resolution: usize,
    pub gradient_directions: usize,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            a0_tol: 1e-3,
            c_tol: 0.1,
            a_tol: 5e-2,
            gradient_tol: 1e-4,
            gradient_resolution: 8,
            gradient_directions: 5,
        }
    }
}
