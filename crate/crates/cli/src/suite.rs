//! The verification suite: a list of named experiment configs, each tied
//! to an acceptance criterion, run in order with failures collected.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dtnlab_core::recon::CProfile;
use dtnlab_core::Region;
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::report::Assertion;
use crate::{exit_code_for, run_in, CliError, EXIT_ASSERTION, EXIT_OK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    /// Unique; also the output subdirectory.
    pub name: String,
    pub criterion: u32,
    /// Wall-clock budget, checked as an extra assertion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Replaces every entry's seed.
    #[serde(default)]
    pub seed: u64,
    pub entries: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub name: String,
    pub criterion: u32,
    pub experiment: String,
    pub status: Status,
    pub assertions: Vec<Assertion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_code: i32,
    pub seconds: f64,
    /// Table name and path of every CSV written.
    pub tables: Vec<(String, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub passed: bool,
    pub entries: Vec<EntryReport>,
}

impl SuiteReport {
    /// 0 if everything passed, else the code of the first problem in the
    /// order config error, solver failure, assertion failure.
    pub fn exit_code(&self) -> i32 {
        let codes: Vec<i32> = self.entries.iter().map(|e| e.exit_code).collect();
        [crate::EXIT_CONFIG, crate::EXIT_SOLVER, EXIT_ASSERTION].into_iter().find(|c| codes.contains(c)).unwrap_or(EXIT_OK)
    }

    pub fn criteria(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.entries.iter().map(|e| e.criterion).collect();
        c.dedup();
        c
    }

    pub fn criterion_passed(&self, criterion: u32) -> bool {
        self.entries.iter().filter(|e| e.criterion == criterion).all(|e| e.status == Status::Pass)
    }
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let suite: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            CliError::Parse { path: e.path().to_string(), line: inner.line(), column: inner.column(), message: inner.to_string() }
        })?;
        let mut names: Vec<&str> = suite.entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("suite entry names must be unique".into()));
        }
        Ok(suite)
    }
}

/// Run every entry in order into `out/<name>/`, then write
/// `out/verify-all.json`.
pub fn verify_all(suite: &SuiteConfig, out: &Path, threads: Option<usize>) -> Result<SuiteReport, CliError> {
    std::fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(suite.entries.len());
    for entry in &suite.entries {
        let mut cfg = entry.config.clone();
        cfg.seed = suite.seed;
        let start = Instant::now();
        let result = run_in(&cfg, &out.join(&entry.name), threads);
        let seconds = start.elapsed().as_secs_f64();
        let report = match result {
            Ok(run) => {
                let mut assertions = run.summary.assertions.clone();
                if let Some(budget) = entry.max_seconds {
                    assertions.push(Assertion::at_most(format!("runtime <= {budget} s"), "runtime budget", seconds, budget));
                }
                let passed = assertions.iter().all(|a| a.passed);
                EntryReport {
                    name: entry.name.clone(),
                    criterion: entry.criterion,
                    experiment: cfg.experiment.name().into(),
                    status: if passed { Status::Pass } else { Status::Fail },
                    assertions,
                    error: None,
                    exit_code: if passed { EXIT_OK } else { EXIT_ASSERTION },
                    seconds,
                    tables: run.tables,
                }
            }
            Err(e) => EntryReport {
                name: entry.name.clone(),
                criterion: entry.criterion,
                experiment: cfg.experiment.name().into(),
                status: Status::Error,
                assertions: vec![],
                error: Some(e.to_string()),
                exit_code: exit_code_for(&e),
                seconds,
                tables: vec![],
            },
        };
        entries.push(report);
    }
    let report = SuiteReport { seed: suite.seed, passed: entries.iter().all(|e| e.status == Status::Pass), entries };
    std::fs::write(out.join("verify-all.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(report)
}

fn entry(name: &str, criterion: u32, max_seconds: f64, config: ExperimentConfig) -> SuiteEntry {
    SuiteEntry { name: name.into(), criterion, max_seconds: Some(max_seconds), config }
}

fn mesh(region: Region, resolution: usize) -> MeshSpec {
    MeshSpec { region, resolution }
}

fn table_a(u: &[f64], a: &[f64]) -> ASpec {
    ASpec::Table { u_grid: u.to_vec(), a_values: a.to_vec(), alpha: 0.5 }
}

fn const_a(value: f64) -> ASpec {
    ASpec::Constant { value, alpha: 0.5 }
}

fn affine(constant: f64, gx: f64, gy: f64) -> CProfile {
    CProfile::Affine { constant, gradient: [gx, gy] }
}

fn constant(value: f64) -> CProfile {
    CProfile::Constant { value }
}

/// The acceptance matrix, in dependency order: discretization, forward
/// solver, DtN map, linearization, the two probe mechanisms with their
/// identities, then reconstruction.
pub fn default_suite() -> SuiteConfig {
    use ExperimentKind::*;
    let square = Region::UnitSquare;
    let mut entries = Vec::new();

    let manufactured = SolveParams { manufactured: vec![8, 16, 32, 64], ..Default::default() };
    entries.push(entry("manufactured-convergence", 2, 60.0, ExperimentConfig::new(Solve).with_params(&manufactured)));

    let random = SolveParams { random_cases: 5, ..Default::default() };
    entries.push(entry(
        "kirchhoff-equivalence",
        1,
        30.0,
        ExperimentConfig { mesh: mesh(square, 32), ..ExperimentConfig::new(Solve) }.with_params(&random),
    ));

    let ramp = ASpec::Clamped { base: 1.0, slope: 0.5, from: 0.0, to: 1.0, lo: -2.0, hi: 2.0, step: 0.25, alpha: 0.5 };
    entries.push(entry(
        "conormal-identity",
        3,
        30.0,
        ExperimentConfig { mesh: mesh(square, 16), a: ramp.clone(), c: affine(1.0, 1.0, 0.0), ..ExperimentConfig::new(Dtn) }
            .with_params(&DtnParams::default()),
    ));

    let constant_case =
        LinearizeParams { data: DataSpec::Fourier { mode: 1, amplitude: 1.0, offset: 0.0, phase: 0.0 }, ..Default::default() };
    entries.push(entry(
        "linearization-constant-a",
        4,
        60.0,
        ExperimentConfig { mesh: mesh(square, 16), a: const_a(1.2), c: constant(1.0), ..ExperimentConfig::new(Linearize) }
            .with_params(&constant_case),
    ));
    entries.push(entry(
        "linearization-lipschitz-a",
        4,
        60.0,
        ExperimentConfig {
            mesh: mesh(square, 16),
            a: table_a(&[-1.0, 0.0, 1.0], &[0.6, 1.0, 1.5]),
            c: constant(1.0),
            ..ExperimentConfig::new(Linearize)
        }
        .with_params(&LinearizeParams::default()),
    ));

    // Five coefficient pairs for the linear orthogonality relation, the
    // first with nothing to tell apart.
    let residual_only = ProbeA0Params { dichotomy: false, ..Default::default() };
    let pairs = [
        ("orthogonality-identical", square, const_a(1.0), const_a(1.0), constant(0.5), constant(0.5)),
        ("orthogonality-a0-only", square, const_a(1.0), const_a(1.5), constant(0.0), constant(0.0)),
        ("orthogonality-c-only", square, const_a(1.0), const_a(1.0), affine(1.0, 1.0, 0.0), constant(0.5)),
        ("orthogonality-both", square, const_a(1.2), const_a(0.9), affine(1.0, 1.0, 0.0), constant(0.5)),
        ("orthogonality-disk", Region::UnitDisk, const_a(0.8), const_a(1.3), affine(1.0, 0.0, 0.5), constant(1.0)),
    ];
    for (name, region, a1, a2, c1, c2) in pairs {
        let params = if region == Region::UnitDisk {
            ProbeA0Params { anchor: [1.0, 0.0], direction: [1.0, 0.0], ..residual_only.clone() }
        } else {
            residual_only.clone()
        };
        entries.push(entry(
            name,
            5,
            20.0,
            ExperimentConfig { mesh: mesh(region, 32), a: a1, a2: Some(a2), c: c1, c2: Some(c2), ..ExperimentConfig::new(ProbeA0) }
                .with_params(&params),
        ));
    }

    entries.push(entry(
        "a0-dichotomy",
        6,
        120.0,
        ExperimentConfig {
            mesh: mesh(square, 32),
            a: const_a(1.2),
            a2: Some(const_a(0.9)),
            c: affine(1.0, 1.0, 0.0),
            c2: Some(constant(0.5)),
            ..ExperimentConfig::new(ProbeA0)
        }
        .with_params(&ProbeA0Params::default()),
    ));

    entries.push(entry("cap-integrals", 7, 10.0, ExperimentConfig::new(CapCheck).with_params(&CapCheckParams::default())));

    let step = table_a(&[0.0, 1.0], &[1.0, 1.5]);
    let smooth = ASpec::Table {
        u_grid: (0..=16).map(|k| -2.0 + 0.25 * k as f64).collect(),
        a_values: (0..=16)
            .map(|k| {
                let u = -2.0 + 0.25 * k as f64;
                1.0 + 0.4 * u / (1.0 + u * u)
            })
            .collect(),
        alpha: 0.5,
    };
    let identity_cases = [
        ("identity-ramp-vs-constant", step.clone(), const_a(1.0), affine(1.0, 0.0, 1.0)),
        ("identity-two-nonlinear", smooth, ramp, CProfile::Bump { amplitude: 1.5, center: [0.4, 0.6], width: 6.0 }),
        ("identity-no-potential", step.clone(), const_a(0.8), constant(0.0)),
    ];
    for (name, a1, a2, c) in identity_cases {
        entries.push(entry(
            name,
            8,
            60.0,
            ExperimentConfig { mesh: mesh(square, 16), a: a1, a2: Some(a2), c, ..ExperimentConfig::new(IdentityCheck) }
                .with_params(&IdentityParams::default()),
        ));
    }

    entries.push(entry(
        "au-mechanism",
        9,
        180.0,
        ExperimentConfig { mesh: mesh(square, 32), a: step, a2: Some(const_a(1.0)), c: constant(1.0), ..ExperimentConfig::new(ProbeAu) }
            .with_params(&ProbeAuParams::default()),
    ));

    entries.push(entry(
        "reconstruction",
        10,
        600.0,
        ExperimentConfig { mesh: mesh(square, 32), ..ExperimentConfig::new(Reconstruct) }.with_params(&ReconstructParams::default()),
    ));

    SuiteConfig { seed: 0, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_round_trips_and_covers_ten_criteria() {
        let suite = default_suite();
        let text = serde_json::to_string_pretty(&suite).unwrap();
        let back = SuiteConfig::from_json(&text).unwrap();
        assert_eq!(back, suite);
        let mut criteria: Vec<u32> = suite.entries.iter().map(|e| e.criterion).collect();
        criteria.dedup();
        criteria.sort_unstable();
        assert_eq!(criteria, (1..=10).collect::<Vec<_>>());
        for e in &suite.entries {
            assert!(e.config.params.is_object());
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut suite = default_suite();
        suite.entries.truncate(1);
        suite.entries.push(suite.entries[0].clone());
        let text = serde_json::to_string(&suite).unwrap();
        assert!(matches!(SuiteConfig::from_json(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn tightened_tolerance_fails_only_its_entry() {
        let dir = tempfile::tempdir().unwrap();
        let caps = ExperimentConfig::new(ExperimentKind::CapCheck);
        let strict = caps.clone().with_params(&CapCheckParams { tol: 0.0, ..Default::default() });
        let suite = SuiteConfig {
            seed: 0,
            entries: vec![
                SuiteEntry { name: "strict".into(), criterion: 7, max_seconds: None, config: strict },
                SuiteEntry {
                    name: "default".into(),
                    criterion: 7,
                    max_seconds: None,
                    config: caps.with_params(&CapCheckParams::default()),
                },
            ],
        };
        let report = verify_all(&suite, dir.path(), Some(2)).unwrap();
        assert_eq!(report.entries[0].status, Status::Fail);
        assert_eq!(report.entries[1].status, Status::Pass);
        assert_eq!(report.exit_code(), EXIT_ASSERTION);
        assert!(dir.path().join("verify-all.json").exists());
    }

    #[test]
    fn entry_errors_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = ExperimentConfig::new(ExperimentKind::Solve);
        let suite = SuiteConfig {
            seed: 0,
            entries: vec![
                SuiteEntry { name: "bad".into(), criterion: 1, max_seconds: None, config: bad },
                SuiteEntry {
                    name: "caps".into(),
                    criterion: 7,
                    max_seconds: None,
                    config: ExperimentConfig::new(ExperimentKind::CapCheck),
                },
            ],
        };
        let report = verify_all(&suite, dir.path(), None).unwrap();
        assert_eq!(report.entries[0].status, Status::Error);
        assert_eq!(report.entries[1].status, Status::Pass);
        assert_eq!(report.exit_code(), crate::EXIT_CONFIG);
    }
}
