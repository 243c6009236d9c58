//! Admissible coefficient pairs `(a, c)`.
//!
//! `a(u)` is piecewise linear on a knot grid and clamped to its end values
//! outside the grid, so `α ≤ a ≤ 1/α` on all of ℝ as soon as it holds at the
//! knots. The Kirchhoff primitive `A(u) = ∫₀ᵘ a` is then piecewise quadratic
//! and is integrated and inverted in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TriangleMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientADocument", into = "CoefficientADocument")]
pub struct CoefficientA {
    u_grid: Vec<f64>,
    a_values: Vec<f64>,
    alpha: f64,
    // F(u_k) = ∫_{u_0}^{u_k} a
    cumulative: Vec<f64>,
    // F(0)
    offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CoefficientADocument {
    alpha: f64,
    u_grid: Vec<f64>,
    a_values: Vec<f64>,
}

impl TryFrom<CoefficientADocument> for CoefficientA {
    type Error = Error;
    fn try_from(doc: CoefficientADocument) -> Result<Self> {
        CoefficientA::new(doc.u_grid, doc.a_values, doc.alpha)
    }
}

impl From<CoefficientA> for CoefficientADocument {
    fn from(a: CoefficientA) -> Self {
        CoefficientADocument { alpha: a.alpha, u_grid: a.u_grid, a_values: a.a_values }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Admissibility(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

impl CoefficientA {
    pub fn new(u_grid: Vec<f64>, a_values: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if u_grid.is_empty() || u_grid.len() != a_values.len() {
            return Err(Error::Admissibility(format!(
                "u_grid ({}) and a_values ({}) must be non-empty and of equal length",
                u_grid.len(),
                a_values.len()
            )));
        }
        if u_grid.iter().any(|u| !u.is_finite()) || u_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Admissibility("u_grid must be finite and strictly increasing".into()));
        }
        for (k, &a) in a_values.iter().enumerate() {
            if !(a >= alpha && a <= 1.0 / alpha) {
                return Err(Error::Admissibility(format!("a_values[{k}] = {a} outside [{alpha}, {}]", 1.0 / alpha)));
            }
        }
        let mut cumulative = Vec::with_capacity(u_grid.len());
        cumulative.push(0.0);
        for k in 1..u_grid.len() {
            let h = u_grid[k] - u_grid[k - 1];
            cumulative.push(cumulative[k - 1] + 0.5 * h * (a_values[k - 1] + a_values[k]));
        }
        let mut coeff = Self { u_grid, a_values, alpha, cumulative, offset: 0.0 };
        coeff.offset = coeff.raw_primitive(0.0);
        Ok(coeff)
    }

    pub fn constant(value: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value], alpha)
    }

    /// Sample `f` at the knots.
    pub fn from_fn(u_grid: Vec<f64>, alpha: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = u_grid.iter().map(|&u| f(u)).collect();
        Self::new(u_grid, values, alpha)
    }

    /// Same knots, new values.
    pub fn with_values(&self, a_values: Vec<f64>) -> Result<Self> {
        Self::new(self.u_grid.clone(), a_values, self.alpha)
    }

    /// Resample onto new knots.
    pub fn with_grid(&self, u_grid: Vec<f64>) -> Result<Self> {
        Self::from_fn(u_grid, self.alpha, |u| self.eval(u))
    }

    pub fn u_grid(&self) -> &[f64] {
        &self.u_grid
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a_values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_constant(&self) -> bool {
        self.a_values.iter().all(|&a| a == self.a_values[0])
    }

    // Segment containing u, and the offset t = u - u_k. Outside the grid the
    // index is clamped and t measures the distance to the end knot.
    fn segment(&self, u: f64) -> (usize, f64) {
        let n = self.u_grid.len();
        if n == 1 || u <= self.u_grid[0] {
            return (0, u - self.u_grid[0]);
        }
        if u >= self.u_grid[n - 1] {
            return (n - 1, u - self.u_grid[n - 1]);
        }
        let k = self.u_grid.partition_point(|&x| x <= u) - 1;
        (k, u - self.u_grid[k])
    }

    pub fn eval(&self, u: f64) -> f64 {
        let n = self.u_grid.len();
        let (k, t) = self.segment(u);
        if k == n - 1 || (k == 0 && t <= 0.0) {
            return self.a_values[k];
        }
        let h = self.u_grid[k + 1] - self.u_grid[k];
        let w = t / h;
        (1.0 - w) * self.a_values[k] + w * self.a_values[k + 1]
    }

    // ∫_{u_0}^{u} a, with the clamped extension.
    fn raw_primitive(&self, u: f64) -> f64 {
        let n = self.u_grid.len();
        let (k, t) = self.segment(u);
        if k == n - 1 || (k == 0 && t <= 0.0) {
            return self.cumulative[k] + self.a_values[k] * t;
        }
        let h = self.u_grid[k + 1] - self.u_grid[k];
        let slope = (self.a_values[k + 1] - self.a_values[k]) / h;
        self.cumulative[k] + self.a_values[k] * t + 0.5 * slope * t * t
    }

    /// Kirchhoff primitive `A(u) = ∫₀ᵘ a(s) ds`.
    pub fn primitive(&self, u: f64) -> f64 {
        self.raw_primitive(u) - self.offset
    }

    /// `H = A⁻¹`, by closed-form inversion of the per-segment quadratic.
    pub fn inverse_primitive(&self, big_u: f64) -> f64 {
        let target = big_u + self.offset;
        let n = self.u_grid.len();
        if n == 1 || target <= 0.0 {
            return self.u_grid[0] + target / self.a_values[0];
        }
        if target >= self.cumulative[n - 1] {
            return self.u_grid[n - 1] + (target - self.cumulative[n - 1]) / self.a_values[n - 1];
        }
        let k = self.cumulative.partition_point(|&f| f <= target) - 1;
        let h = self.u_grid[k + 1] - self.u_grid[k];
        let slope = (self.a_values[k + 1] - self.a_values[k]) / h;
        let r = target - self.cumulative[k];
        // Root of slope/2 t² + a_k t - r = 0, written without cancellation.
        let a_k = self.a_values[k];
        let disc = (a_k * a_k + 2.0 * slope * r).max(0.0);
        let t = 2.0 * r / (a_k + disc.sqrt());
        self.u_grid[k] + t.clamp(0.0, h)
    }

    /// `H'(U) = 1 / a(H(U))`.
    pub fn inverse_derivative(&self, big_u: f64) -> f64 {
        1.0 / self.eval(self.inverse_primitive(big_u))
    }

    /// Mean of `a` over the interval between `u1` and `u2` (the secant slope
    /// of `A`); `a(u1)` when they coincide.
    pub fn mean_between(&self, u1: f64, u2: f64) -> f64 {
        let du = u2 - u1;
        if du.abs() <= 1e-13 * (1.0 + u1.abs().max(u2.abs())) {
            return self.eval(0.5 * (u1 + u2));
        }
        (self.raw_primitive(u2) - self.raw_primitive(u1)) / du
    }

    /// Coefficients `w_k` with `A(u) = Σ_k w_k a_values[k]`. `A` is linear in
    /// the knot values; `w_k = ∫₀ᵘ ℓ_k` for the clamped hat functions `ℓ_k`.
    pub fn primitive_weights(&self, u: f64) -> Vec<f64> {
        let n = self.u_grid.len();
        let (lo, hi, sign) = if u >= 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
        (0..n).map(|k| sign * self.hat_integral(k, lo, hi)).collect()
    }

    // ∫_lo^hi ℓ_k for lo ≤ hi.
    fn hat_integral(&self, k: usize, lo: f64, hi: f64) -> f64 {
        let g = &self.u_grid;
        let n = g.len();
        let mut total = 0.0;
        // Linear piece on [x0, x1] with values v0 -> v1, clipped to [lo, hi].
        let mut piece = |x0: f64, x1: f64, v0: f64, v1: f64| {
            let (a, b) = (x0.max(lo), x1.min(hi));
            if b > a {
                let val = |x: f64| {
                    if x1.is_infinite() || x0.is_infinite() {
                        v0
                    } else {
                        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
                    }
                };
                total += 0.5 * (b - a) * (val(a) + val(b));
            }
        };
        if n == 1 {
            piece(f64::NEG_INFINITY, f64::INFINITY, 1.0, 1.0);
            return total;
        }
        if k == 0 {
            piece(f64::NEG_INFINITY, g[0], 1.0, 1.0);
        } else {
            piece(g[k - 1], g[k], 0.0, 1.0);
        }
        if k == n - 1 {
            piece(g[n - 1], f64::INFINITY, 1.0, 1.0);
        } else {
            piece(g[k], g[k + 1], 1.0, 0.0);
        }
        total
    }
}

/// `B(u) = (A₁(u) − A₁(u_low)) − (A₂(u) − A₂(u_low)) = ∫_{u_low}^{u} (a₁ − a₂)`.
pub fn primitive_b(a1: &CoefficientA, a2: &CoefficientA, u_low: f64, u: f64) -> f64 {
    (a1.primitive(u) - a1.primitive(u_low)) - (a2.primitive(u) - a2.primitive(u_low))
}

/// Nodal absorption coefficient, aligned with the mesh vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientCDocument", into = "CoefficientCDocument")]
pub struct CoefficientC {
    values: Vec<f64>,
    alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CoefficientCDocument {
    alpha: f64,
    c_values: Vec<f64>,
}

impl TryFrom<CoefficientCDocument> for CoefficientC {
    type Error = Error;
    fn try_from(doc: CoefficientCDocument) -> Result<Self> {
        CoefficientC::new(doc.c_values, doc.alpha)
    }
}

impl From<CoefficientC> for CoefficientCDocument {
    fn from(c: CoefficientC) -> Self {
        CoefficientCDocument { alpha: c.alpha, c_values: c.values }
    }
}

impl CoefficientC {
    pub fn new(values: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        for (k, &c) in values.iter().enumerate() {
            if !(c >= 0.0 && c <= 1.0 / alpha) {
                return Err(Error::Admissibility(format!("c_values[{k}] = {c} outside [0, {}]", 1.0 / alpha)));
            }
        }
        Ok(Self { values, alpha })
    }

    pub fn zero(mesh: &TriangleMesh, alpha: f64) -> Result<Self> {
        Self::new(vec![0.0; mesh.num_vertices()], alpha)
    }

    pub fn constant(mesh: &TriangleMesh, value: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![value; mesh.num_vertices()], alpha)
    }

    pub fn from_fn(mesh: &TriangleMesh, alpha: f64, f: impl Fn(Point) -> f64) -> Result<Self> {
        Self::new(mesh.vertices().iter().map(|&p| f(p)).collect(), alpha)
    }

    /// Clamp arbitrary values into `[0, 1/α]`.
    pub fn projected(values: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let cap = 1.0 / alpha;
        Self::new(values.into_iter().map(|c| c.clamp(0.0, cap)).collect(), alpha)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_mesh(&self, mesh: &TriangleMesh) -> Result<()> {
        if self.values.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "c has {} values but the mesh has {} vertices",
                self.values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> CoefficientA {
        CoefficientA::new(vec![0.0, 1.0], vec![1.0, 2.0], 0.5).unwrap()
    }

    #[test]
    fn primitive_examples() {
        let two = CoefficientA::constant(2.0, 0.5).unwrap();
        assert_eq!(two.primitive(3.0), 6.0);
        assert_eq!(two.inverse_primitive(6.0), 3.0);
        assert!((ramp().primitive(1.0) - 1.5).abs() < 1e-15);
        assert!((ramp().inverse_primitive(1.5) - 1.0).abs() < 1e-15);
        assert_eq!(ramp().primitive(0.0), 0.0);
        assert_eq!(ramp().inverse_primitive(0.0), 0.0);
        // clamped extension: a = 2 beyond u = 1, a = 1 below 0
        assert!((ramp().primitive(2.0) - 3.5).abs() < 1e-15);
        assert!((ramp().primitive(-1.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn primitive_b_examples() {
        let two = CoefficientA::constant(2.0, 0.5).unwrap();
        let one = CoefficientA::constant(1.0, 0.5).unwrap();
        assert_eq!(primitive_b(&two, &one, 0.0, 1.0), 1.0);
        assert_eq!(primitive_b(&two, &two, -0.3, 0.7), 0.0);
        assert!((primitive_b(&ramp(), &one, 0.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn b_increasing_when_a1_above_a2() {
        let a1 = CoefficientA::from_fn((0..=10).map(|k| k as f64 * 0.2).collect(), 0.2, |u| 1.5 + 0.2 * u.sin()).unwrap();
        let a2 = CoefficientA::constant(1.0, 0.2).unwrap();
        let samples: Vec<f64> = (0..=40).map(|k| primitive_b(&a1, &a2, 0.0, k as f64 * 0.05)).collect();
        assert_eq!(samples[0], 0.0);
        assert!(samples.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_inadmissible() {
        assert!(CoefficientA::new(vec![0.0, 1.0], vec![1.0, 3.0], 0.5).is_err());
        assert!(CoefficientA::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.5).is_err());
        assert!(CoefficientA::new(vec![0.0], vec![1.0], 0.0).is_err());
        assert!(CoefficientC::new(vec![0.0, -0.1], 0.5).is_err());
        assert!(CoefficientC::new(vec![0.0, 2.5], 0.5).is_err());
    }

    #[test]
    fn json_schema() {
        let a: CoefficientA = serde_json::from_str(r#"{"alpha": 0.5, "u_grid": [0, 1], "a_values": [1, 2]}"#).unwrap();
        assert_eq!(a, ramp());
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("\"u_grid\"") && text.contains("\"a_values\"") && !text.contains("cumulative"));
        assert!(serde_json::from_str::<CoefficientA>(r#"{"alpha": 0.5, "u_grid": [0, 1], "a_values": [1, 9]}"#).is_err());
        let c: CoefficientC = serde_json::from_str(r#"{"alpha": 0.5, "c_values": [0, 1, 2]}"#).unwrap();
        assert_eq!(c.values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn primitive_weights_reproduce_primitive() {
        let a = CoefficientA::new(vec![-1.0, -0.25, 0.5, 2.0], vec![1.2, 0.7, 1.9, 1.1], 0.4).unwrap();
        for u in [-3.0, -1.0, -0.6, 0.0, 0.2, 0.5, 1.4, 2.0, 4.5] {
            let w = a.primitive_weights(u);
            let via: f64 = w.iter().zip(a.a_values()).map(|(w, v)| w * v).sum();
            assert!((via - a.primitive(u)).abs() < 1e-13, "u = {u}: {via} vs {}", a.primitive(u));
        }
    }

    fn admissible_a() -> impl Strategy<Value = CoefficientA> {
        (0.1f64..0.9, prop::collection::vec((0.05f64..1.0, 0.0f64..1.0), 1..8), -3.0f64..0.0).prop_map(|(alpha, segs, start)| {
            let mut grid = Vec::new();
            let mut u = start;
            let mut vals = Vec::new();
            for (h, t) in segs {
                grid.push(u);
                vals.push(alpha + t * (1.0 / alpha - alpha));
                u += h;
            }
            CoefficientA::new(grid, vals, alpha).unwrap()
        })
    }

    proptest! {
        #[test]
        fn primitive_bi_lipschitz(a in admissible_a(), pts in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 100)) {
            let alpha = a.alpha();
            for (u1, u2) in pts {
                let d = (a.primitive(u2) - a.primitive(u1)).abs();
                let du = (u2 - u1).abs();
                prop_assert!(d >= alpha * du * (1.0 - 1e-12) - 1e-14);
                prop_assert!(d <= du / alpha * (1.0 + 1e-12) + 1e-14);
            }
        }

        #[test]
        fn difference_quotient_bounds(a in admissible_a(), us in prop::collection::vec(-6.0f64..6.0, 100)) {
            let alpha = a.alpha();
            let h = 1e-6;
            for u in us {
                let q = (a.primitive(u + h) - a.primitive(u)) / h;
                prop_assert!(q >= alpha - 1e-8 && q <= 1.0 / alpha + 1e-8);
            }
        }

        #[test]
        fn inverse_round_trip(a in admissible_a(), u in -8.0f64..8.0) {
            let back = a.inverse_primitive(a.primitive(u));
            prop_assert!((back - u).abs() <= 1e-12 * (1.0 + u.abs()), "{} vs {}", back, u);
        }
    }
}
