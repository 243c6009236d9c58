//! Singular probes and the identities they drive.
//!
//! - Fundamental solutions `Φ_y = log|x − y|` with the source outside the
//!   domain, and the dipole probe `λ^ε = n·∇Φ_{y^ε}`, `y^ε = x̄ + εn`.
//! - The cap datum: `ḡ` on a boundary disk of radius `r` around `x̄`, `g̲`
//!   beyond `s`, linear in between.
//! - Cap integrals of `∂ₙλ^ε` over flat boundary pieces, in closed form and
//!   by independent quadrature.
//! - The two blow-up sweeps and the nonlinear orthogonality identity
//!   `⟨(Λ₁ − Λ₂)g, λ⟩ = ∫ c(u₁ − u₂)λ + ∫_{∂Ω} (A₁(g) − A₂(g)) ∂ₙλ`.
//!
//! In the identity check the boundary term is evaluated in its discrete form
//! `Σ_B (A₁(g) − A₂(g))_i (K₀λ_h)_i` with `λ_h` the discrete harmonic
//! extension of the trace of `λ`. That makes the identity hold to solver
//! precision. The same term with the analytic `∂ₙλ` by edgewise quadrature
//! is reported alongside and agrees up to discretization error.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{primitive_b, CoefficientA, CoefficientC};
use crate::dtn::{self, conormal_pairings};
use crate::error::{Error, Result};
use crate::fem::{self, BoundaryDatum, ScalarField};
use crate::io::Table;
use crate::mesh::{Point, Region, TriangleMesh};
use crate::quadrature::{self, GaussRule};
use crate::solver::Forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeKind {
    /// `log|x − y|`.
    Fundamental2D,
    /// `n·∇ log|x − y| = n·(x − y)/|x − y|²`.
    NormalDerivative2D,
    /// `n·∇ |x − y|⁻¹` in three dimensions.
    NormalDerivative3DFlat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularProbe {
    pub kind: ProbeKind,
    /// Source point; the third component is ignored by the 2D kinds.
    pub source: [f64; 3],
    /// Direction `n` of the dipole kinds.
    pub normal: [f64; 3],
    /// Length unit `L` of the logarithm, `Φ_y = log(|x − y| / L)`. Any `L`
    /// gives a fundamental solution; it only shifts `Φ_y` by a constant.
    #[serde(default = "unit_scale")]
    pub length_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("offset must be positive, got {eps}")));
    }
    Ok(())
}

impl SingularProbe {
    pub fn fundamental(y: Point) -> Self {
        Self::fundamental_scaled(y, 1.0)
    }

    pub fn fundamental_scaled(y: Point, length_scale: f64) -> Self {
        Self { kind: ProbeKind::Fundamental2D, source: [y[0], y[1], 0.0], normal: [0.0; 3], length_scale }
    }

    /// `λ^ε` for the anchor `x̄` with outward unit normal `n`.
    pub fn normal_derivative(anchor: Point, normal: Point, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            kind: ProbeKind::NormalDerivative2D,
            source: [anchor[0] + eps * normal[0], anchor[1] + eps * normal[1], 0.0],
            normal: [normal[0], normal[1], 0.0],
            length_scale: 1.0,
        })
    }

    /// `λ^ε` for the flat boundary `{z = 0}` of `{z > 0}`, outward normal
    /// `(0, 0, −1)`.
    pub fn normal_derivative_3d_flat(anchor: [f64; 2], eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            kind: ProbeKind::NormalDerivative3DFlat,
            source: [anchor[0], anchor[1], -eps],
            normal: [0.0, 0.0, -1.0],
            length_scale: 1.0,
        })
    }

    pub fn source_2d(&self) -> Point {
        [self.source[0], self.source[1]]
    }

    fn offset_2d(&self, x: Point) -> Result<(f64, f64, f64)> {
        if self.kind == ProbeKind::NormalDerivative3DFlat {
            return Err(Error::InvalidArgument("three-dimensional probe evaluated at a 2D point".into()));
        }
        let (dx, dy) = (x[0] - self.source[0], x[1] - self.source[1]);
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            return Err(Error::Singularity);
        }
        Ok((dx, dy, r2))
    }

    pub fn value(&self, x: Point) -> Result<f64> {
        let (dx, dy, r2) = self.offset_2d(x)?;
        Ok(match self.kind {
            ProbeKind::Fundamental2D => 0.5 * r2.ln() - self.length_scale.ln(),
            _ => (self.normal[0] * dx + self.normal[1] * dy) / r2,
        })
    }

    pub fn gradient(&self, x: Point) -> Result<Point> {
        let (dx, dy, r2) = self.offset_2d(x)?;
        Ok(match self.kind {
            ProbeKind::Fundamental2D => [dx / r2, dy / r2],
            _ => {
                let nd = self.normal[0] * dx + self.normal[1] * dy;
                let r4 = r2 * r2;
                [self.normal[0] / r2 - 2.0 * nd * dx / r4, self.normal[1] / r2 - 2.0 * nd * dy / r4]
            }
        })
    }

    fn offset_3d(&self, x: [f64; 3]) -> Result<([f64; 3], f64)> {
        if self.kind != ProbeKind::NormalDerivative3DFlat {
            return Err(Error::InvalidArgument("2D probe evaluated at a 3D point".into()));
        }
        let d = [x[0] - self.source[0], x[1] - self.source[1], x[2] - self.source[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if r2 == 0.0 {
            return Err(Error::Singularity);
        }
        Ok((d, r2))
    }

    /// `λ(x) = −n·(x − y)/|x − y|³`.
    pub fn value_3d(&self, x: [f64; 3]) -> Result<f64> {
        let (d, r2) = self.offset_3d(x)?;
        let nd: f64 = (0..3).map(|k| self.normal[k] * d[k]).sum();
        Ok(-nd / (r2 * r2.sqrt()))
    }

    pub fn gradient_3d(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let (d, r2) = self.offset_3d(x)?;
        let nd: f64 = (0..3).map(|k| self.normal[k] * d[k]).sum();
        let r3 = r2 * r2.sqrt();
        let r5 = r3 * r2;
        Ok([0, 1, 2].map(|k| -self.normal[k] / r3 + 3.0 * nd * d[k] / r5))
    }
}

/// Harmonic test functions for the identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HarmonicTest {
    Constant {
        value: f64,
    },
    /// `Re (x+iy)^k` or `Im (x+iy)^k`.
    Polynomial {
        degree: u32,
        imaginary: bool,
    },
    Probe {
        probe: SingularProbe,
    },
}

fn complex_pow(x: f64, y: f64, k: u32) -> (f64, f64) {
    let (mut re, mut im) = (1.0, 0.0);
    for _ in 0..k {
        (re, im) = (re * x - im * y, re * y + im * x);
    }
    (re, im)
}

impl HarmonicTest {
    pub fn value(&self, x: Point) -> Result<f64> {
        match *self {
            HarmonicTest::Constant { value } => Ok(value),
            HarmonicTest::Polynomial { degree, imaginary } => {
                let (re, im) = complex_pow(x[0], x[1], degree);
                Ok(if imaginary { im } else { re })
            }
            HarmonicTest::Probe { probe } => probe.value(x),
        }
    }

    pub fn gradient(&self, x: Point) -> Result<Point> {
        match *self {
            HarmonicTest::Constant { .. } => Ok([0.0, 0.0]),
            HarmonicTest::Polynomial { degree: 0, .. } => Ok([0.0, 0.0]),
            HarmonicTest::Polynomial { degree, imaginary } => {
                let (re, im) = complex_pow(x[0], x[1], degree - 1);
                let (re, im) = (degree as f64 * re, degree as f64 * im);
                Ok(if imaginary { [im, re] } else { [re, -im] })
            }
            HarmonicTest::Probe { probe } => probe.gradient(x),
        }
    }
}

/// Piecewise boundary datum around an anchor point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapDatum {
    pub anchor: Point,
    pub r: f64,
    pub s: f64,
    /// `ḡ`, the value on the cap.
    pub g_high: f64,
    /// `g̲`, the value away from it.
    pub g_low: f64,
}

impl CapDatum {
    pub fn new(anchor: Point, r: f64, s: f64, g_high: f64, g_low: f64) -> Result<Self> {
        if !(r > 0.0 && r < s) {
            return Err(Error::InvalidArgument(format!("cap radii must satisfy 0 < r < s, got r = {r}, s = {s}")));
        }
        Ok(Self { anchor, r, s, g_high, g_low })
    }

    /// Value at distance `t = |x − x̄|`.
    pub fn at_distance(&self, t: f64) -> f64 {
        if t <= self.r {
            self.g_high
        } else if t >= self.s {
            self.g_low
        } else {
            ((t - self.r) * self.g_low + (self.s - t) * self.g_high) / (self.s - self.r)
        }
    }

    pub fn evaluate(&self, x: Point) -> f64 {
        self.at_distance(((x[0] - self.anchor[0]).powi(2) + (x[1] - self.anchor[1]).powi(2)).sqrt())
    }

    pub fn to_boundary(&self, mesh: &TriangleMesh) -> BoundaryDatum {
        BoundaryDatum::from_fn(mesh, |p, _| self.evaluate(p))
    }
}

/// Closed form and quadrature for a flat 3D cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapIntegral3d {
    /// `−r²/(r² + ε²)^{3/2}`.
    pub closed_form: f64,
    /// `∫_{|x−x̄|<r} ∂ₙλ^ε ds` by polar quadrature.
    pub quadrature_raw: f64,
    /// `−quadrature_raw / 2π`, the normalization under which the closed
    /// form is stated.
    pub quadrature: f64,
}

pub fn cap_integral_3d_closed(r: f64, eps: f64) -> f64 {
    -r * r / (r * r + eps * eps).powf(1.5)
}

pub fn cap_integral_3d_flat(r: f64, eps: f64) -> Result<CapIntegral3d> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("cap radius must be positive, got {r}")));
    }
    let probe = SingularProbe::normal_derivative_3d_flat([0.0, 0.0], eps)?;
    let angular = GaussRule::new(16);
    let flux = |t: f64, theta: f64| -> f64 {
        let g = probe.gradient_3d([t * theta.cos(), t * theta.sin(), 0.0]).expect("source is off the plane");
        (0..3).map(|k| probe.normal[k] * g[k]).sum::<f64>() * t
    };
    let raw = quadrature::integrate_adaptive(|t| angular.integrate(0.0, 2.0 * PI, |th| flux(t, th)), 0.0, r, 1e-14);
    Ok(CapIntegral3d { closed_form: cap_integral_3d_closed(r, eps), quadrature_raw: raw, quadrature: -raw / (2.0 * PI) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapIntegral2d {
    /// `−2r/(r² + ε²)`.
    pub closed_form: f64,
    pub quadrature: f64,
}

pub fn cap_integral_2d_closed(r: f64, eps: f64) -> f64 {
    -2.0 * r / (r * r + eps * eps)
}

/// `∫_{r<|t|<s} ∂ₙλ^ε dt` on a flat 2D boundary, in closed form.
pub fn ring_integral_2d_closed(r: f64, s: f64, eps: f64) -> f64 {
    cap_integral_2d_closed(s, eps) - cap_integral_2d_closed(r, eps)
}

// ∂ₙλ^ε along the flat line through the origin with outward normal (0,−1).
fn flat_flux_2d(eps: f64) -> Result<impl Fn(f64) -> f64> {
    let n = [0.0, -1.0];
    let probe = SingularProbe::normal_derivative([0.0, 0.0], n, eps)?;
    Ok(move |t: f64| {
        let g = probe.gradient([t, 0.0]).expect("source is off the line");
        n[0] * g[0] + n[1] * g[1]
    })
}

pub fn cap_integral_2d_flat(r: f64, eps: f64) -> Result<CapIntegral2d> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("cap radius must be positive, got {r}")));
    }
    let flux = flat_flux_2d(eps)?;
    let quadrature = quadrature::integrate_adaptive(&flux, -r, r, 1e-14);
    Ok(CapIntegral2d { closed_form: cap_integral_2d_closed(r, eps), quadrature })
}

/// Outward unit normal and tangent of the flat side of the unit square
/// whose interior contains `anchor`, with the distance from `anchor` to
/// the nearer end of that side.
pub fn flat_side(region: Region, anchor: Point) -> Result<(Point, Point, f64)> {
    if region != Region::UnitSquare {
        return Err(Error::InvalidArgument("flat-boundary constructions need the unit square".into()));
    }
    let [x, y] = anchor;
    let tol = 1e-12;
    let inside = |v: f64| v > tol && v < 1.0 - tol;
    let room = |v: f64| v.min(1.0 - v);
    if y.abs() <= tol && inside(x) {
        Ok(([0.0, -1.0], [1.0, 0.0], room(x)))
    } else if (y - 1.0).abs() <= tol && inside(x) {
        Ok(([0.0, 1.0], [-1.0, 0.0], room(x)))
    } else if x.abs() <= tol && inside(y) {
        Ok(([-1.0, 0.0], [0.0, -1.0], room(y)))
    } else if (x - 1.0).abs() <= tol && inside(y) {
        Ok(([1.0, 0.0], [0.0, 1.0], room(y)))
    } else {
        Err(Error::InvalidArgument(format!("anchor {anchor:?} is not interior to a side of the unit square")))
    }
}

/// One row of the `a(0)` dichotomy sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A0SweepRow {
    pub distance: f64,
    /// `∫ ∇v₁·∇v₂`.
    pub i_grad: f64,
    /// `∫ v₁ v₂`.
    pub i_low: f64,
    /// `∫ |∇Φ_y|²` by adaptive quadrature.
    pub grad_phi_exact: f64,
    /// `⟨(Λ*₁ − Λ*₂)g, g⟩` with `g` the trace of `Φ_y`.
    pub lhs: f64,
    /// `(a₁(0) − a₂(0)) I_grad + ∫ (c₁ − c₂) v₁ v₂`.
    pub rhs: f64,
    pub residual: f64,
}

pub fn relative_residual(lhs: f64, rhs_terms: &[f64]) -> f64 {
    let rhs: f64 = rhs_terms.iter().sum();
    let scale = rhs_terms.iter().fold(lhs.abs(), |m, v| m.max(v.abs()));
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// `∫_Ω |∇Φ_y|²` over the mesh triangles.
pub fn gradient_energy_exact(mesh: &TriangleMesh, y: Point) -> f64 {
    mesh.triangles()
        .par_iter()
        .map(|tri| {
            let pts = tri.map(|k| mesh.vertex(k));
            let f = |p: Point, _l: [f64; 3]| 1.0 / ((p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2));
            quadrature::integrate_triangle_adaptive(&pts, &f, 1e-12, 12)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// For each distance `d`, put `y = anchor + d·direction` and solve
/// `-a_i(0)Δv_i + c_i v_i = 0`, `v_i = Φ_y` on `∂Ω`. Equivalently
/// `v_i = Φ_y + w_i` with `w_i` the zero-trace correction.
pub fn a0_dichotomy_sweep(
    fwd: &Forward<'_>,
    first: (f64, &CoefficientC),
    second: (f64, &CoefficientC),
    anchor: Point,
    direction: Point,
    distances: &[f64],
    length_scale: f64,
) -> Result<Vec<A0SweepRow>> {
    if !(length_scale > 0.0) {
        return Err(Error::InvalidArgument(format!("length scale must be positive, got {length_scale}")));
    }
    let mesh = fwd.mesh();
    let ((a1, c1), (a2, c2)) = (first, second);
    distances
        .par_iter()
        .map(|&d| {
            let y = [anchor[0] + d * direction[0], anchor[1] + d * direction[1]];
            if !(d > 0.0) || mesh.boundary_distance(y) <= 0.0 {
                return Err(Error::InvalidArgument(format!("source {y:?} is not outside the closed domain")));
            }
            let probe = SingularProbe::fundamental_scaled(y, length_scale);
            let g = BoundaryDatum::from_fn(mesh, |p, _| probe.value(p).expect("source outside"));
            let v1 = fwd.solve_linear(a1, c1, &g)?;
            let v2 = fwd.solve_linear(a2, c2, &g)?;
            let r1 = dtn::linear_pairings(fwd, a1, c1, &v1.values);
            let r2 = dtn::linear_pairings(fwd, a2, c2, &v2.values);
            let i_grad = fwd.laplace().bilinear(&v1.values, &v2.values);
            let m = mesh.lumped_mass();
            let i_low: f64 = (0..m.len()).map(|k| m[k] * v1.values[k] * v2.values[k]).sum();
            let c_term: f64 = (0..m.len()).map(|k| (c1.values()[k] - c2.values()[k]) * m[k] * v1.values[k] * v2.values[k]).sum();
            let lhs = r1.difference(&r2).pair(&g);
            let terms = [(a1 - a2) * i_grad, c_term];
            Ok(A0SweepRow {
                distance: d,
                i_grad,
                i_low,
                grad_phi_exact: gradient_energy_exact(mesh, y),
                lhs,
                rhs: terms.iter().sum(),
                residual: relative_residual(lhs, &terms),
            })
        })
        .collect()
}

pub fn a0_sweep_table(rows: &[A0SweepRow]) -> Table {
    let mut t = Table::new(["d", "i_grad", "i_low", "grad_phi_exact", "lhs", "rhs", "residual"]);
    for r in rows {
        t.push(vec![r.distance, r.i_grad, r.i_low, r.grad_phi_exact, r.lhs, r.rhs, r.residual]);
    }
    t
}

/// `d_k = 0.5·2^{-k}`, `k = 0..5`.
pub fn default_distances() -> Vec<f64> {
    (0..6).map(|k| 0.5 * 0.5f64.powi(k)).collect()
}

/// `ε_k = 0.2·2^{-k}`, `k = 0..4`.
pub fn default_eps() -> Vec<f64> {
    (0..5).map(|k| 0.2 * 0.5f64.powi(k)).collect()
}

/// Terms of the nonlinear orthogonality identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityTerms {
    /// `⟨(Λ₁ − Λ₂)g, λ_D⟩` from the conormal pairings.
    pub lhs: f64,
    /// `Σ c_i m_i (u₁ − u₂)_i λ_h,i`.
    pub volume: f64,
    /// `Σ_B (A₁(g) − A₂(g))_i (K₀λ_h)_i`.
    pub boundary: f64,
    /// `∫_{∂Ω} (A₁(g) − A₂(g)) ∂ₙλ ds` with the analytic normal derivative
    /// and the datum interpolated linearly along each edge.
    pub boundary_quadrature: f64,
    /// Volume term with the analytic `λ` at the vertices.
    pub volume_analytic: f64,
    /// `|lhs − volume − boundary|` relative to the largest term, or to
    /// `Σ_B |Δr_i λ_i|` when the terms themselves cancel.
    pub residual: f64,
}

/// Solved pair of quasilinear problems sharing `c` and `g`.
pub struct SolvedPair {
    pub u1: ScalarField,
    pub u2: ScalarField,
    pub lhs_pairings: dtn::DtnResponse,
}

pub fn solve_pair(fwd: &Forward<'_>, a1: &CoefficientA, a2: &CoefficientA, c: &CoefficientC, g: &BoundaryDatum) -> Result<SolvedPair> {
    let (u1, _) = fwd.picard(a1, c, g)?;
    let (u2, _) = fwd.picard(a2, c, g)?;
    let r1 = conormal_pairings(fwd, a1, c, &u1);
    let r2 = conormal_pairings(fwd, a2, c, &u2);
    Ok(SolvedPair { u1, u2, lhs_pairings: r1.difference(&r2) })
}

/// Evaluate every term of the identity for one harmonic `λ`, given the two
/// solved problems.
pub fn identity_terms(
    fwd: &Forward<'_>,
    a1: &CoefficientA,
    a2: &CoefficientA,
    c: &CoefficientC,
    g: &BoundaryDatum,
    pair: &SolvedPair,
    lambda: &HarmonicTest,
) -> Result<IdentityTerms> {
    let mesh = fwd.mesh();
    let trace = BoundaryDatum::from_fn(mesh, |p, _| lambda.value(p).unwrap_or(f64::NAN));
    if trace.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singularity);
    }
    let lambda_h = fem::harmonic_extension(mesh, &trace)?;
    let k_lambda = fwd.laplace().apply(&lambda_h.values);
    let diff_a: Vec<f64> = g.values.iter().map(|&v| a1.primitive(v) - a2.primitive(v)).collect();

    let lhs = pair.lhs_pairings.pair(&trace);
    let lhs_magnitude: f64 = pair.lhs_pairings.pairings.iter().zip(&trace.values).map(|(r, l)| (r * l).abs()).sum();
    let boundary: f64 = mesh.boundary_vertices().iter().zip(&diff_a).map(|(&v, d)| d * k_lambda[v]).sum();
    let m = mesh.lumped_mass();
    let du: Vec<f64> = pair.u1.values.iter().zip(&pair.u2.values).map(|(a, b)| a - b).collect();
    let volume: f64 = (0..m.len()).map(|k| c.values()[k] * m[k] * du[k] * lambda_h.values[k]).sum();
    let volume_analytic: f64 =
        (0..m.len()).filter(|&k| du[k] != 0.0).map(|k| c.values()[k] * m[k] * du[k] * lambda.value(mesh.vertex(k)).unwrap_or(0.0)).sum();

    let mut boundary_quadrature = 0.0;
    for e in mesh.boundary_edges() {
        let [i, j] = e.vertices;
        let (pi, pj) = (mesh.vertex(i), mesh.vertex(j));
        let di = diff_a[mesh.boundary_position(i).expect("boundary vertex")];
        let dj = diff_a[mesh.boundary_position(j).expect("boundary vertex")];
        let f = |t: f64| {
            let p = [pi[0] + t * (pj[0] - pi[0]), pi[1] + t * (pj[1] - pi[1])];
            let gr = lambda.gradient(p).unwrap_or([0.0, 0.0]);
            ((1.0 - t) * di + t * dj) * (gr[0] * e.normal[0] + gr[1] * e.normal[1])
        };
        boundary_quadrature += e.length * quadrature::integrate_adaptive(f, 0.0, 1.0, 1e-13);
    }
    Ok(IdentityTerms {
        lhs,
        volume,
        boundary,
        boundary_quadrature,
        volume_analytic,
        residual: (lhs - volume - boundary).abs()
            / [lhs.abs(), volume.abs(), boundary.abs(), lhs_magnitude].into_iter().fold(f64::MIN_POSITIVE, f64::max),
    })
}

pub fn au_identity_check(
    fwd: &Forward<'_>,
    a1: &CoefficientA,
    a2: &CoefficientA,
    c: &CoefficientC,
    g: &BoundaryDatum,
    lambda: &HarmonicTest,
) -> Result<IdentityTerms> {
    let pair = solve_pair(fwd, a1, a2, c, g)?;
    identity_terms(fwd, a1, a2, c, g, &pair, lambda)
}

/// One row of the `a(u)` blow-up sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuSweepRow {
    pub eps: f64,
    pub r: f64,
    pub s: f64,
    /// `−B(ḡ)·2r/(r² + ε²)`.
    pub cap_term: f64,
    /// `B(ḡ) ∫_{|t|<r} ∂ₙλ^ε` by quadrature.
    pub cap_quadrature: f64,
    /// `∫_{r<|t|<s} B(g) ∂ₙλ^ε` by quadrature.
    pub ring_term: f64,
    pub ring_ratio: f64,
    pub volume_term: f64,
    pub volume_analytic: f64,
    pub boundary_term: f64,
    pub lhs: f64,
    pub identity_residual: f64,
    /// `∫_Ω |λ^ε|`.
    pub lambda_l1: f64,
}

/// `∫_Ω |λ|` over the mesh triangles by adaptive quadrature.
pub fn probe_l1_norm(mesh: &TriangleMesh, probe: &SingularProbe) -> f64 {
    mesh.triangles()
        .par_iter()
        .map(|tri| {
            let pts = tri.map(|k| mesh.vertex(k));
            let f = |p: Point, _l: [f64; 3]| probe.value(p).map_or(0.0, f64::abs);
            quadrature::integrate_triangle_adaptive(&pts, &f, 1e-12, 10)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

#[allow(clippy::too_many_arguments)]
pub fn au_dichotomy_sweep(
    fwd: &Forward<'_>,
    a1: &CoefficientA,
    a2: &CoefficientA,
    c: &CoefficientC,
    anchor: Point,
    g_low: f64,
    g_high: f64,
    eps_sequence: &[f64],
) -> Result<Vec<AuSweepRow>> {
    let mesh = fwd.mesh();
    let (normal, _tangent, room) = flat_side(mesh.region(), anchor)?;
    eps_sequence
        .par_iter()
        .map(|&eps| {
            let (r, s) = (eps, eps + eps.powi(3));
            if !(eps > 0.0) || s >= room {
                return Err(Error::InvalidArgument(format!("eps = {eps} gives a cap larger than the flat side")));
            }
            let cap = CapDatum::new(anchor, r, s, g_high, g_low)?;
            let g = cap.to_boundary(mesh);
            let probe = SingularProbe::normal_derivative(anchor, normal, eps)?;
            let lambda = HarmonicTest::Probe { probe };
            let terms = au_identity_check(fwd, a1, a2, c, &g, &lambda)?;

            let b = |u: f64| primitive_b(a1, a2, g_low, u);
            let flux = flat_flux_2d(eps)?;
            let cap_quadrature = b(g_high) * quadrature::integrate_adaptive(&flux, -r, r, 1e-14);
            let ring_side = |t: f64| b(cap.at_distance(t)) * flux(t);
            let ring_term =
                quadrature::integrate_adaptive(ring_side, r, s, 1e-16) + quadrature::integrate_adaptive(|t| ring_side(-t), r, s, 1e-16);
            let cap_term = -b(g_high) * 2.0 * r / (r * r + eps * eps);
            Ok(AuSweepRow {
                eps,
                r,
                s,
                cap_term,
                cap_quadrature,
                ring_term,
                ring_ratio: ring_term.abs() / cap_term.abs(),
                volume_term: terms.volume,
                volume_analytic: terms.volume_analytic,
                boundary_term: terms.boundary,
                lhs: terms.lhs,
                identity_residual: terms.residual,
                lambda_l1: probe_l1_norm(mesh, &probe),
            })
        })
        .collect()
}

pub fn au_sweep_table(rows: &[AuSweepRow]) -> Table {
    let mut t = Table::new([
        "eps",
        "r",
        "s",
        "cap_term",
        "cap_quadrature",
        "ring_term",
        "ring_ratio",
        "volume_term",
        "volume_analytic",
        "boundary_term",
        "lhs",
        "identity_residual",
        "lambda_l1",
    ]);
    for w in rows {
        t.push(vec![
            w.eps,
            w.r,
            w.s,
            w.cap_term,
            w.cap_quadrature,
            w.ring_term,
            w.ring_ratio,
            w.volume_term,
            w.volume_analytic,
            w.boundary_term,
            w.lhs,
            w.identity_residual,
            w.lambda_l1,
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolveOptions;
    use crate::stats;

    fn square(n: usize) -> TriangleMesh {
        TriangleMesh::generate(Region::UnitSquare, n).unwrap()
    }

    fn a_pair() -> (CoefficientA, CoefficientA) {
        let a1 = CoefficientA::new(vec![0.0, 1.0], vec![1.0, 1.5], 0.5).unwrap();
        let a2 = CoefficientA::constant(1.0, 0.5).unwrap();
        (a1, a2)
    }

    #[test]
    fn probe_values() {
        assert_eq!(SingularProbe::fundamental([2.0, 0.0]).value([1.0, 0.0]).unwrap(), 0.0);
        let (eps, t) = (0.3, 0.7);
        let p = SingularProbe::normal_derivative([0.0, 0.0], [0.0, 1.0], eps).unwrap();
        let want = -eps / (t * t + eps * eps);
        assert!((p.value([t, 0.0]).unwrap() - want).abs() < 1e-15);
        assert!(matches!(p.value([0.0, eps]), Err(Error::Singularity)));
        assert!(SingularProbe::normal_derivative([0.0, 0.0], [0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-6;
        let probes = [SingularProbe::fundamental([0.5, -0.2]), SingularProbe::normal_derivative([0.5, 0.0], [0.0, -1.0], 0.1).unwrap()];
        for p in probes {
            let x = [0.3, 0.4];
            let g = p.gradient(x).unwrap();
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (p.value(xp).unwrap() - p.value(xm).unwrap()) / (2.0 * h);
                assert!((fd - g[d]).abs() < 1e-6 * (1.0 + g[d].abs()));
            }
        }
        let p3 = SingularProbe::normal_derivative_3d_flat([0.0, 0.0], 0.4).unwrap();
        let x = [0.2, -0.1, 0.3];
        let g = p3.gradient_3d(x).unwrap();
        for d in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            let fd = (p3.value_3d(xp).unwrap() - p3.value_3d(xm).unwrap()) / (2.0 * h);
            assert!((fd - g[d]).abs() < 1e-6 * (1.0 + g[d].abs()));
        }
    }

    #[test]
    fn harmonic_polynomial_gradients() {
        let h = 1e-6;
        for degree in 0..5 {
            for imaginary in [false, true] {
                let f = HarmonicTest::Polynomial { degree, imaginary };
                let x = [0.3, -0.7];
                let g = f.gradient(x).unwrap();
                let fd = [
                    (f.value([x[0] + h, x[1]]).unwrap() - f.value([x[0] - h, x[1]]).unwrap()) / (2.0 * h),
                    (f.value([x[0], x[1] + h]).unwrap() - f.value([x[0], x[1] - h]).unwrap()) / (2.0 * h),
                ];
                assert!((fd[0] - g[0]).abs() < 1e-8 && (fd[1] - g[1]).abs() < 1e-8, "degree {degree}");
            }
        }
    }

    #[test]
    fn probe_fields_are_discretely_harmonic() {
        let probe = SingularProbe::fundamental([0.5, -0.5]);
        let mut worst = Vec::new();
        for n in [32, 64, 128] {
            let mesh = square(n);
            let phi = ScalarField::from_fn(&mesh, |p| probe.value(p).unwrap());
            let r = fem::laplace(&mesh).apply(&phi.values);
            let w = (0..mesh.num_vertices())
                .filter(|&v| !mesh.is_boundary(v))
                .map(|v| (r[v] / mesh.lumped_mass()[v]).abs())
                .fold(0.0, f64::max);
            worst.push(w);
        }
        for pair in worst.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order > 1.75, "order {order}");
        }
    }

    #[test]
    fn cap_datum_formula() {
        let cap = CapDatum::new([0.5, 0.0], 0.1, 0.2, 1.0, 0.5).unwrap();
        assert_eq!(cap.evaluate([0.6, 0.0]), 1.0);
        assert!((cap.evaluate([0.65, 0.0]) - 0.75).abs() < 1e-15);
        assert_eq!(cap.evaluate([0.9, 0.0]), 0.5);
        assert!(CapDatum::new([0.5, 0.0], 0.2, 0.2, 1.0, 0.5).is_err());
    }

    #[test]
    fn cap_integral_3d_example() {
        let c = cap_integral_3d_flat(1.0, 1.0).unwrap();
        assert!((c.closed_form + 0.353_553_390_593_273_8).abs() < 1e-15);
        assert!((c.quadrature - c.closed_form).abs() < 1e-8);
        // The literal surface integral carries the 2π of the polar measure
        // and the opposite sign.
        assert!((c.quadrature_raw - 2.0 * PI / 8f64.sqrt()).abs() < 1e-8);
        for eps in [0.1, 0.01] {
            assert!((cap_integral_3d_closed(eps, eps) + 1.0 / (8f64.sqrt() * eps)).abs() < 1e-9 / eps);
        }
    }

    #[test]
    fn cap_integral_2d_examples() {
        let c = cap_integral_2d_flat(1.0, 1.0).unwrap();
        assert_eq!(c.closed_form, -1.0);
        assert!((c.quadrature + 1.0).abs() < 1e-10);
        for eps in [0.2, 0.05] {
            assert!((cap_integral_2d_closed(eps, eps) + 1.0 / eps).abs() < 1e-12 / eps);
            let ring = ring_integral_2d_closed(eps, eps + eps.powi(3), eps);
            assert!(ring.abs() <= cap_integral_2d_closed(eps, eps).abs());
        }
    }

    #[test]
    fn flat_side_lookup() {
        let (n, t, room) = flat_side(Region::UnitSquare, [0.5, 0.0]).unwrap();
        assert_eq!((n, t, room), ([0.0, -1.0], [1.0, 0.0], 0.5));
        assert!(flat_side(Region::UnitSquare, [0.0, 0.0]).is_err());
        assert!(flat_side(Region::UnitDisk, [1.0, 0.0]).is_err());
    }

    #[test]
    fn a0_sweep_without_potential_reduces_to_phi() {
        let mesh = square(32);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        let rows = a0_dichotomy_sweep(&fwd, (1.0, &c), (1.5, &c), [0.5, 0.0], [0.0, -1.0], &[0.5, 0.25], 1.0).unwrap();
        for r in &rows {
            assert!((r.i_grad - r.grad_phi_exact).abs() <= 0.02 * r.grad_phi_exact, "{r:?}");
            assert!(r.residual <= 1e-8);
        }
    }

    #[test]
    fn a0_sweep_rejects_interior_source() {
        let mesh = square(8);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        assert!(a0_dichotomy_sweep(&fwd, (1.0, &c), (1.5, &c), [0.5, 0.0], [0.0, 1.0], &[0.25], 1.0).is_err());
    }

    #[test]
    fn a0_sweep_dichotomy() {
        let mesh = square(32);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let c1 = CoefficientC::from_fn(&mesh, 0.5, |p| 1.0 + p[0]).unwrap();
        let c2 = CoefficientC::constant(&mesh, 0.5, 0.5).unwrap();
        let rows = a0_dichotomy_sweep(&fwd, (1.2, &c1), (0.9, &c2), [0.5, 0.0], [0.0, -1.0], &default_distances(), 2.0).unwrap();
        assert!(rows.windows(2).all(|w| w[1].i_grad > w[0].i_grad));
        let low: Vec<f64> = rows.iter().map(|r| r.i_low).collect();
        let (lo, hi) = low.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo <= 4.0, "{low:?}");
        assert!(rows.iter().all(|r| r.residual <= 1e-7));
    }

    #[test]
    fn identity_terms_vanish_for_equal_coefficients() {
        let mesh = square(16);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let (a1, _) = a_pair();
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0]);
        let t = au_identity_check(&fwd, &a1, &a1, &c, &g, &HarmonicTest::Polynomial { degree: 2, imaginary: false }).unwrap();
        assert!(t.lhs.abs() <= 1e-9 && t.volume.abs() <= 1e-9 && t.boundary.abs() <= 1e-9);
    }

    #[test]
    fn identity_specializations() {
        let mesh = square(16);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let (a1, a2) = a_pair();
        let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] + 0.5 * p[1]);
        // No potential: only the boundary term survives.
        let c0 = CoefficientC::zero(&mesh, 0.5).unwrap();
        let t = au_identity_check(&fwd, &a1, &a2, &c0, &g, &HarmonicTest::Polynomial { degree: 3, imaginary: true }).unwrap();
        assert_eq!(t.volume, 0.0);
        assert!((t.lhs - t.boundary).abs() <= 1e-6 * t.lhs.abs());
        // Constant λ: only the volume term survives.
        let c = CoefficientC::from_fn(&mesh, 0.5, |p| 1.0 + p[1]).unwrap();
        let t = au_identity_check(&fwd, &a1, &a2, &c, &g, &HarmonicTest::Constant { value: 1.0 }).unwrap();
        assert!(t.boundary.abs() <= 1e-12);
        assert!((t.lhs - t.volume).abs() <= 1e-6 * t.lhs.abs());
    }

    #[test]
    fn analytic_boundary_term_converges() {
        let (a1, a2) = a_pair();
        let lambda = HarmonicTest::Polynomial { degree: 2, imaginary: true };
        let mut gaps = Vec::new();
        for n in [8, 16, 32] {
            let mesh = square(n);
            let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
            let c = CoefficientC::zero(&mesh, 0.5).unwrap();
            let g = BoundaryDatum::from_fn(&mesh, |p, _| p[0] * p[1] + p[0]);
            let t = au_identity_check(&fwd, &a1, &a2, &c, &g, &lambda).unwrap();
            assert!(t.residual <= 1e-8);
            gaps.push((t.boundary - t.boundary_quadrature).abs());
        }
        assert!(gaps[2] < gaps[1] && gaps[1] < gaps[0], "{gaps:?}");
    }

    #[test]
    fn au_sweep_mechanism() {
        let mesh = square(32);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let (a1, a2) = a_pair();
        let c = CoefficientC::constant(&mesh, 1.0, 0.5).unwrap();
        let rows = au_dichotomy_sweep(&fwd, &a1, &a2, &c, [0.5, 0.0], 0.5, 1.0, &default_eps()).unwrap();
        let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let cap: Vec<f64> = rows.iter().map(|r| r.cap_term).collect();
        assert!((stats::loglog_slope(&eps[1..], &cap[1..]) + 1.0).abs() <= 0.2);
        assert!(rows.windows(2).all(|w| w[1].ring_ratio < w[0].ring_ratio));
        assert!(rows.last().unwrap().ring_ratio < 0.1);
        for r in &rows {
            assert!((r.cap_quadrature - r.cap_term).abs() <= 1e-8 * r.cap_term.abs());
            assert!(r.identity_residual <= 1e-6, "{r:?}");
        }
        let vol: Vec<f64> = rows.iter().map(|r| r.volume_term.abs()).collect();
        let (lo, hi) = vol.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi <= 2.0 * lo, "{vol:?}");
    }

    #[test]
    fn au_sweep_rejects_large_caps() {
        let mesh = square(8);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let (a1, a2) = a_pair();
        let c = CoefficientC::zero(&mesh, 0.5).unwrap();
        assert!(au_dichotomy_sweep(&fwd, &a1, &a2, &c, [0.5, 0.0], 0.5, 1.0, &[0.6]).is_err());
    }
}
