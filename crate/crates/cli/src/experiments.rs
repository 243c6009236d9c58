//! One function per experiment kind. Each returns its tables and the
//! assertions the summary reports.

use std::f64::consts::PI;

use dtnlab_core::dtn::{self, linear_response};
use dtnlab_core::fem::{self, assemble, h1_seminorm_error_exact, l2_error_exact, solve_dirichlet};
use dtnlab_core::io::{matrix_table, Table};
use dtnlab_core::mesh::Point;
use dtnlab_core::probes::{self, au_identity_check, cap_integral_2d_flat, cap_integral_3d_flat};
use dtnlab_core::recon::{gradient_check, run_pipeline};
use dtnlab_core::stats::{loglog_slope, observed_orders};
use dtnlab_core::{BoundaryDatum, CoefficientA, CoefficientC, Forward, TriangleMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::report::{Assertion, Outcome};
use crate::CliError;

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cfg.experiment {
        ExperimentKind::Solve => solve(cfg),
        ExperimentKind::Dtn => dtn_map(cfg),
        ExperimentKind::Linearize => linearize(cfg),
        ExperimentKind::ProbeA0 => probe_a0(cfg),
        ExperimentKind::ProbeAu => probe_au(cfg),
        ExperimentKind::CapCheck => cap_check(cfg),
        ExperimentKind::IdentityCheck => identity_check(cfg),
        ExperimentKind::Reconstruct => reconstruct(cfg),
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    // NaN must not hide behind f64::max.
    values.into_iter().fold(0.0, |m: f64, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}

/// Random admissible triple: `a(u) = 1 + A sin(ωu + φ)` with `A ≤ ½`,
/// `c = c₀ + c₁ sin(k₁x + φ₁) cos(k₂y + φ₂)` in `[0, 2]`, and `g` a shifted
/// arclength cosine of mode 1 to 3.
fn random_case(rng: &mut ChaCha8Rng, mesh: &TriangleMesh, alpha: f64) -> Result<(CoefficientA, CoefficientC, BoundaryDatum), CliError> {
    let (amp, omega, phase) = (rng.random_range(0.0..0.5), rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI));
    let grid: Vec<f64> = (0..=48).map(|k| -3.0 + 0.125 * k as f64).collect();
    let a = CoefficientA::from_fn(grid, alpha, |u| 1.0 + amp * (omega * u + phase).sin())?;
    let (c0, c1) = (rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
    let (k1, k2, p1, p2) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(0.0..PI), rng.random_range(0.0..PI));
    let c = CoefficientC::from_fn(mesh, alpha, |p| c0 + c1 * (k1 * p[0] + p1).sin() * (k2 * p[1] + p2).cos())?;
    let (mode, gamp, offset, gphase) =
        (rng.random_range(1..=3u32), rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI));
    let g = BoundaryDatum::from_fn(mesh, |_, s| offset + gamp * (2.0 * PI * mode as f64 * s + gphase).cos());
    Ok((a, c, g))
}

fn solve(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: SolveParams = cfg.params()?;
    let mut assertions = Vec::new();
    let mut tables = Vec::new();
    let mut details = serde_json::Map::new();

    if !p.data.is_empty() || p.random_cases > 0 {
        let mesh = cfg.mesh.build()?;
        let fwd = Forward::new(&mesh, cfg.solve)?;
        let a = cfg.a.build()?;
        let c = build_c(&cfg.c, &mesh, a.alpha())?;
        let mut cases = Vec::new();
        for d in &p.data {
            cases.push((a.clone(), c.clone(), d.build(&mesh)?));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..p.random_cases {
            cases.push(random_case(&mut rng, &mesh, a.alpha())?);
        }
        let results = cases
            .par_iter()
            .map(|(a, c, g)| {
                let (u, pr) = fwd.picard(a, c, g)?;
                let (w, kr) = fwd.kirchhoff(a, c, g)?;
                Ok((u, pr, w, kr))
            })
            .collect::<Result<Vec<_>, dtnlab_core::Error>>()?;
        let mut summary = Table::new(["case", "picard_iterations", "kirchhoff_iterations", "picard_residual", "l2_distance"]);
        let mut fields = Table::new(["case", "x", "y", "u_picard", "u_kirchhoff"]);
        let mut distances = Vec::new();
        for (k, (u, pr, w, kr)) in results.iter().enumerate() {
            let dist = fem::l2_distance(&mesh, &u.values, &w.values);
            distances.push(dist);
            summary.push(vec![k as f64, pr.iterations as f64, kr.iterations as f64, pr.residual_norm, dist]);
            for (v, pt) in mesh.vertices().iter().enumerate() {
                fields.push(vec![k as f64, pt[0], pt[1], u.values[v], w.values[v]]);
            }
        }
        assertions.push(Assertion::at_most(
            format!("L2 distance between Picard and Kirchhoff routes <= {:e} over {} cases", p.tol, cases.len()),
            "Kirchhoff transform equivalence u = H(U)",
            max_of(distances.iter().copied()),
            p.tol,
        ));
        tables.push(("cases".to_string(), summary));
        tables.push(("fields".to_string(), fields));
        details.insert("l2_distances".into(), json!(distances));
    }

    if !p.manufactured.is_empty() {
        if p.manufactured.len() < 2 {
            return Err(CliError::Config("params.manufactured needs at least two resolutions".into()));
        }
        let exact = |q: Point| (PI * q[0]).sin() * (PI * q[1]).sin();
        let grad = |q: Point| [PI * (PI * q[0]).cos() * (PI * q[1]).sin(), PI * (PI * q[0]).sin() * (PI * q[1]).cos()];
        let rows = p
            .manufactured
            .par_iter()
            .map(|&n| {
                let mesh = TriangleMesh::generate(cfg.mesh.region, n)?;
                let op = assemble(&mesh, &vec![1.0; mesh.triangles().len()], &vec![1.0; mesh.num_vertices()])?;
                let f: Vec<f64> = mesh.vertices().iter().map(|&q| (2.0 * PI * PI + 1.0) * exact(q)).collect();
                let g = BoundaryDatum::from_fn(&mesh, |q, _| exact(q));
                let u = solve_dirichlet(&mesh, &op, &g, &f)?;
                Ok((n, mesh.max_diameter(), l2_error_exact(&mesh, &u.values, exact), h1_seminorm_error_exact(&mesh, &u.values, grad)))
            })
            .collect::<Result<Vec<_>, dtnlab_core::Error>>()?;
        let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let l2: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let h1: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let orders = observed_orders(&h, &l2);
        let h1_orders = observed_orders(&h, &h1);
        let mut t = Table::new(["resolution", "h", "l2_error", "h1_error", "l2_order", "h1_order"]);
        for (k, r) in rows.iter().enumerate() {
            let o = if k == 0 { f64::NAN } else { orders[k - 1] };
            let o1 = if k == 0 { f64::NAN } else { h1_orders[k - 1] };
            t.push(vec![r.0 as f64, r.1, r.2, r.3, o, o1]);
        }
        let worst = orders.iter().copied().fold(p.expected_order, |m, o| {
            if o.is_nan() || m.is_nan() || (o - p.expected_order).abs() > (m - p.expected_order).abs() {
                if m.is_nan() {
                    m
                } else {
                    o
                }
            } else {
                m
            }
        });
        assertions.push(Assertion::within(
            format!("L2 order {} ± {} over {} refinements", p.expected_order, p.order_band, orders.len()),
            "P1 Galerkin approximation of the linear kernel",
            worst,
            p.expected_order,
            p.order_band,
        ));
        tables.push(("convergence".to_string(), t));
        details.insert("l2_orders".into(), json!(orders));
    }
    if assertions.is_empty() {
        return Err(CliError::Config("solve needs params.data, params.random_cases or params.manufactured".into()));
    }
    Ok(Outcome { assertions, tables, details: details.into() })
}

fn dtn_map(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: DtnParams = cfg.params()?;
    if p.data.len() < 2 {
        return Err(CliError::Config("params.data needs at least two boundary data".into()));
    }
    let mesh = cfg.mesh.build()?;
    let fwd = Forward::new(&mesh, cfg.solve)?;
    let a = cfg.a.build()?;
    let c = build_c(&cfg.c, &mesh, a.alpha())?;
    let a0 = a.eval(0.0);
    let data = p.data.iter().map(|d| d.build(&mesh)).collect::<Result<Vec<_>, _>>()?;
    let n = data.len();

    let linear = data.par_iter().map(|g| linear_response(&fwd, a0, &c, g)).collect::<Result<Vec<_>, _>>()?;
    let nonlinear = data.par_iter().map(|g| dtn::dtn_apply_with(&fwd, &a, &c, g).map(|r| r.0)).collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let sums = pairs
        .par_iter()
        .map(|&(i, j)| {
            let g = BoundaryDatum { values: data[i].values.iter().zip(&data[j].values).map(|(x, y)| x + y).collect() };
            linear_response(&fwd, a0, &c, &g)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let pairing = matrix_table(n, n, |i, j| linear[i].pair(&data[j]));
    let scale = max_of(pairing.rows.iter().flatten().map(|v| v.abs()));
    let asym = max_of((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (pairing.rows[i][j] - pairing.rows[j][i]).abs()));
    let superposition = max_of(pairs.iter().zip(&sums).map(|(&(i, j), s)| {
        let defect = s.difference(&linear[i]).difference(&linear[j]).squared_norm().sqrt();
        defect / (linear[i].squared_norm().sqrt() + linear[j].squared_norm().sqrt())
    }));

    let mut responses = Table::new(
        ["s", "x", "y"]
            .into_iter()
            .map(String::from)
            .chain((0..n).flat_map(|j| [format!("g{j}"), format!("linear{j}"), format!("nonlinear{j}")])),
    );
    let arclength = mesh.boundary_arclength();
    for (b, &v) in mesh.boundary_vertices().iter().enumerate() {
        let q = mesh.vertex(v);
        let mut row = vec![arclength[b], q[0], q[1]];
        for j in 0..n {
            row.extend([data[j].values[b], linear[j].pairings[b], nonlinear[j].pairings[b]]);
        }
        responses.push(row);
    }
    let mut tables = vec![("pairings".to_string(), pairing), ("responses".to_string(), responses)];
    if p.matrix {
        tables.push(("matrix".to_string(), dtn::dtn_linearized_with(&fwd, a0, &c)?.to_table()));
    }
    let assertions = vec![
        Assertion::at_most(
            format!("pairing matrix symmetric to {:e} relative", p.tol),
            "conormal pairing of the linear DtN map is symmetric",
            if scale > 0.0 { asym / scale } else { asym },
            p.tol,
        ),
        Assertion::at_most(
            format!("superposition defect <= {:e} relative", p.tol),
            "linearity of the linear DtN map",
            superposition,
            p.tol,
        ),
    ];
    Ok(Outcome { assertions, tables, details: json!({ "a0": a0, "asymmetry": asym, "superposition": superposition }) })
}

fn linearize(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: LinearizeParams = cfg.params()?;
    let mesh = cfg.mesh.build()?;
    let a = cfg.a.build()?;
    let c = build_c(&cfg.c, &mesh, a.alpha())?;
    let g = p.data.build(&mesh)?;
    let taus = p.taus.clone().unwrap_or_else(|| dtn::default_taus(p.halvings));
    let table = dtn::linearization_limit(&mesh, &a, &c, &g, &taus, cfg.solve)?;
    let dev = table.column("deviation").expect("deviation column");
    let taus = table.column("tau").expect("tau column");
    let mut assertions = Vec::new();
    let anchor = "small-amplitude limit of the scaled DtN map";
    if a.is_constant() {
        assertions.push(Assertion::at_most(
            format!("deviation <= {:e} at all tau", p.exact_tol),
            anchor,
            max_of(dev.iter().copied()),
            p.exact_tol,
        ));
    } else {
        if dev.len() < p.monotone_tail.max(3) {
            return Err(CliError::Config(format!("need at least {} tau values", p.monotone_tail.max(3))));
        }
        let tail = &dev[dev.len() - p.monotone_tail..];
        assertions.push(Assertion::holds(
            format!("deviation nonincreasing over the last {} tau", p.monotone_tail),
            anchor,
            tail.windows(2).all(|w| w[1] <= w[0]),
        ));
        assertions.push(Assertion::at_least(
            format!("log-log slope >= {}", p.min_slope),
            anchor,
            loglog_slope(&taus[1..], &dev[1..]),
            p.min_slope,
        ));
    }
    Ok(Outcome { assertions, tables: vec![("deviation".to_string(), table)], details: json!({ "a0": a.eval(0.0) }) })
}

fn probe_a0(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: ProbeA0Params = cfg.params()?;
    let mesh = cfg.mesh.build()?;
    let fwd = Forward::new(&mesh, cfg.solve)?;
    let (a1, a2) = (cfg.a1().build()?, cfg.a2().build()?);
    let c1 = build_c(cfg.c1(), &mesh, a1.alpha())?;
    let c2 = build_c(cfg.c2(), &mesh, a2.alpha())?;
    let rows =
        probes::a0_dichotomy_sweep(&fwd, (a1.eval(0.0), &c1), (a2.eval(0.0), &c2), p.anchor, p.direction, &p.distances, p.length_scale)?;
    let mut assertions = vec![Assertion::at_most(
        format!("orthogonality relative residual <= {:e}", p.residual_tol),
        "orthogonality relation for the linear DtN difference",
        max_of(rows.iter().map(|r| r.residual)),
        p.residual_tol,
    )];
    if p.dichotomy {
        let anchor = "singular-probe dichotomy for a(0)";
        assertions.push(Assertion::holds(
            "I_grad strictly increasing as d decreases",
            anchor,
            rows.windows(2).all(|w| w[1].i_grad > w[0].i_grad),
        ));
        let low: Vec<f64> = rows.iter().map(|r| r.i_low).collect();
        let (lo, hi) = low.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assertions.push(Assertion::at_most(format!("I_low max/min <= {}", p.max_low_ratio), anchor, hi / lo, p.max_low_ratio));
    }
    Ok(Outcome { assertions, tables: vec![("sweep".to_string(), probes::a0_sweep_table(&rows))], details: json!({}) })
}

fn probe_au(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: ProbeAuParams = cfg.params()?;
    if p.eps.len() < 3 {
        return Err(CliError::Config("params.eps needs at least three values".into()));
    }
    let mesh = cfg.mesh.build()?;
    let fwd = Forward::new(&mesh, cfg.solve)?;
    let (a1, a2) = (cfg.a1().build()?, cfg.a2().build()?);
    let c = build_c(cfg.c1(), &mesh, a1.alpha())?;
    let rows = probes::au_dichotomy_sweep(&fwd, &a1, &a2, &c, p.anchor, p.g_low, p.g_high, &p.eps)?;
    let anchor = "singular-probe mechanism for a(u)";
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let cap: Vec<f64> = rows.iter().map(|r| r.cap_term).collect();
    let vol: Vec<f64> = rows.iter().map(|r| r.volume_term.abs()).collect();
    let (lo, hi) = vol.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let assertions = vec![
        Assertion::within(
            format!("cap term log-log slope {} ± {}", p.slope_target, p.slope_band),
            anchor,
            loglog_slope(&eps[1..], &cap[1..]),
            p.slope_target,
            p.slope_band,
        ),
        Assertion::holds("ring/cap ratio decreasing in eps", anchor, rows.windows(2).all(|w| w[1].ring_ratio < w[0].ring_ratio)),
        Assertion::at_most(
            format!("final ring/cap ratio < {}", p.max_final_ring_ratio),
            anchor,
            rows.last().expect("rows").ring_ratio,
            p.max_final_ring_ratio,
        ),
        Assertion::at_most(format!("volume term max/min <= {}", p.volume_factor), anchor, hi / lo, p.volume_factor),
        Assertion::at_most(
            format!("cap closed form vs quadrature <= {:e} relative", p.cap_tol),
            "closed-form cap integral on a flat boundary",
            max_of(rows.iter().map(|r| (r.cap_quadrature - r.cap_term).abs() / r.cap_term.abs())),
            p.cap_tol,
        ),
        Assertion::at_most(
            format!("identity relative residual <= {:e}", p.identity_tol),
            "nonlinear orthogonality identity",
            max_of(rows.iter().map(|r| r.identity_residual)),
            p.identity_tol,
        ),
    ];
    Ok(Outcome { assertions, tables: vec![("sweep".to_string(), probes::au_sweep_table(&rows))], details: json!({}) })
}

fn cap_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: CapCheckParams = cfg.params()?;
    let grid: Vec<(f64, f64)> = p.r.iter().flat_map(|&r| p.eps.iter().map(move |&e| (r, e))).collect();
    if grid.is_empty() {
        return Err(CliError::Config("params.r and params.eps must be nonempty".into()));
    }
    let rows = grid
        .par_iter()
        .map(|&(r, eps)| Ok((r, eps, cap_integral_2d_flat(r, eps)?, cap_integral_3d_flat(r, eps)?)))
        .collect::<Result<Vec<_>, dtnlab_core::Error>>()?;
    let mut t = Table::new(["dimension", "r", "eps", "closed_form", "quadrature", "gap"]);
    let (mut gap2, mut gap3) = (Vec::new(), Vec::new());
    for (r, eps, two, three) in &rows {
        gap2.push((two.quadrature - two.closed_form).abs());
        gap3.push((three.quadrature - three.closed_form).abs());
        t.push(vec![2.0, *r, *eps, two.closed_form, two.quadrature, *gap2.last().expect("pushed")]);
    }
    for ((r, eps, _, three), gap) in rows.iter().zip(&gap3) {
        t.push(vec![3.0, *r, *eps, three.closed_form, three.quadrature, *gap]);
    }
    let assertions = vec![
        Assertion::at_most(
            format!("3D cap closed form -r^2/(r^2+eps^2)^(3/2) vs quadrature <= {:e}", p.tol),
            "cap integral of the dipole flux in three dimensions",
            max_of(gap3.iter().copied()),
            p.tol,
        ),
        Assertion::at_most(
            format!("2D cap closed form -2r/(r^2+eps^2) vs quadrature <= {:e}", p.tol),
            "cap integral of the dipole flux in two dimensions",
            max_of(gap2.iter().copied()),
            p.tol,
        ),
    ];
    Ok(Outcome { assertions, tables: vec![("caps".to_string(), t)], details: json!({}) })
}

fn identity_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: IdentityParams = cfg.params()?;
    if p.data.is_empty() || p.tests.is_empty() {
        return Err(CliError::Config("params.data and params.tests must be nonempty".into()));
    }
    let mesh = cfg.mesh.build()?;
    let fwd = Forward::new(&mesh, cfg.solve)?;
    let (a1, a2) = (cfg.a1().build()?, cfg.a2().build()?);
    let c = build_c(cfg.c1(), &mesh, a1.alpha())?;
    let data = p.data.iter().map(|d| d.build(&mesh)).collect::<Result<Vec<_>, _>>()?;
    let tests = p.tests.iter().map(|l| l.build(mesh.region())).collect::<Result<Vec<_>, _>>()?;
    let cases: Vec<(usize, usize)> = (0..data.len()).flat_map(|i| (0..tests.len()).map(move |k| (i, k))).collect();
    let terms =
        cases.par_iter().map(|&(i, k)| au_identity_check(&fwd, &a1, &a2, &c, &data[i], &tests[k])).collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(["datum", "test", "lhs", "volume", "boundary", "boundary_quadrature", "volume_analytic", "residual"]);
    for (&(i, k), r) in cases.iter().zip(&terms) {
        t.push(vec![i as f64, k as f64, r.lhs, r.volume, r.boundary, r.boundary_quadrature, r.volume_analytic, r.residual]);
    }
    let assertions = vec![Assertion::at_most(
        format!("identity relative residual <= {:e} over {} cases", p.tol, cases.len()),
        "nonlinear orthogonality identity",
        max_of(terms.iter().map(|r| r.residual)),
        p.tol,
    )];
    Ok(Outcome { assertions, tables: vec![("identity".to_string(), t)], details: json!({}) })
}

fn reconstruct(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p: ReconstructParams = cfg.params()?;
    let mut pipeline = p.pipeline.clone();
    pipeline.region = cfg.mesh.region;
    pipeline.resolution = cfg.mesh.resolution;
    pipeline.seed = cfg.seed;
    pipeline.solve = cfg.solve;
    let result = run_pipeline(&pipeline)?;
    let grads = gradient_check(&pipeline, p.gradient_resolution, p.gradient_directions, cfg.seed)?;

    let nonincreasing = |h: &[f64]| h.windows(2).all(|w| w[1] <= w[0]);
    let assertions = vec![
        Assertion::at_most(format!("a(0) error <= {:e}", p.a0_tol), "recovery of a(0) from the linear DtN map", result.a0_error, p.a0_tol),
        Assertion::at_most(format!("c relative L2 error <= {}", p.c_tol), "recovery of c from the linear DtN map", result.c_error, p.c_tol),
        Assertion::at_most(
            format!("a(u) swept-knot max error <= {:e}", p.a_tol),
            "recovery of a(u) from the nonlinear DtN map",
            result.a_error,
            p.a_tol,
        ),
        Assertion::at_most(
            format!("adjoint gradients match central differences to {:e}", p.gradient_tol),
            "adjoint of the linearized forward map",
            grads.max(),
            p.gradient_tol,
        ),
        Assertion::holds(
            "misfit histories nonincreasing",
            "line search descent",
            nonincreasing(&result.c_report.misfit_history) && nonincreasing(&result.a_report.misfit_history),
        ),
    ];

    let mesh = TriangleMesh::generate(pipeline.region, pipeline.resolution)?;
    let c_true = pipeline.c_truth.on(&mesh, pipeline.a_truth.alpha())?;
    let mut c_table = Table::new(["x", "y", "c_recovered", "c_true"]);
    for (v, q) in mesh.vertices().iter().enumerate() {
        c_table.push(vec![q[0], q[1], result.c_values[v], c_true.values()[v]]);
    }
    let mut a_table = Table::new(["u", "a_recovered", "a_true", "swept"]);
    for (k, (&u, &v)) in result.a.u_grid().iter().zip(result.a.a_values()).enumerate() {
        a_table.push(vec![u, v, pipeline.a_truth.eval(u), f64::from(u8::from(!result.a_report.unswept_knots.contains(&k)))]);
    }
    let history = |h: &[f64]| {
        let mut t = Table::new(["iteration", "objective"]);
        for (k, &v) in h.iter().enumerate() {
            t.push(vec![k as f64, v]);
        }
        t
    };
    let mut grad_table = Table::new(["stage", "direction", "relative_gap"]);
    for (stage, gaps) in [(0.0, &grads.c), (1.0, &grads.a)] {
        for (k, &g) in gaps.iter().enumerate() {
            grad_table.push(vec![stage, k as f64, g]);
        }
    }
    let tables = vec![
        ("c".to_string(), c_table),
        ("a".to_string(), a_table),
        ("c-history".to_string(), history(&result.c_report.misfit_history)),
        ("a-history".to_string(), history(&result.a_report.misfit_history)),
        ("gradient-check".to_string(), grad_table),
    ];
    let details = json!({
        "a0": result.a0,
        "a0_error": result.a0_error,
        "c_error": result.c_error,
        "a_error": result.a_error,
        "c_report": result.c_report,
        "a_report": result.a_report,
        "data_resolution": result.data_resolution,
        "gradient_check": grads,
    });
    Ok(Outcome { assertions, tables, details })
}
