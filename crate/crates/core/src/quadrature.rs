//! Quadrature rules: Gauss–Legendre on intervals (fixed and adaptive), a
//! degree-5 seven-point rule on triangles with adaptive subdivision.

use crate::mesh::Point;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed Gauss–Legendre rule mapped to `[a, b]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
    }
}

/// Adaptive Gauss–Legendre: bisect until the 10-point rule agrees with the
/// sum over the two halves to `tol` (absolute, split across subintervals).
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = GaussRule::new(10);
    let whole = rule.integrate(a, b, &f);
    adaptive_step(&rule, &f, a, b, whole, tol, 0)
}

fn adaptive_step(rule: &GaussRule, f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let left = rule.integrate(a, m, f);
    let right = rule.integrate(m, b, f);
    // Below a few ulps of the panel sum the estimate is rounding noise.
    let floor = 8.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth >= 40 || (left + right - whole).abs() <= tol.max(floor) {
        return left + right;
    }
    adaptive_step(rule, f, a, m, left, 0.5 * tol, depth + 1) + adaptive_step(rule, f, m, b, right, 0.5 * tol, depth + 1)
}

// Dunavant degree-5 rule: barycentric points and weights (summing to 1).
const A1: f64 = 0.059_715_871_789_769_82;
const B1: f64 = 0.470_142_064_105_115_1;
const A2: f64 = 0.797_426_985_353_087_3;
const B2: f64 = 0.101_286_507_323_456_3;
const W0: f64 = 0.225;
const W1: f64 = 0.132_394_152_788_506_2;
const W2: f64 = 0.125_939_180_544_827_1;

const SEVEN_POINT: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
    ([A1, B1, B1], W1),
    ([B1, A1, B1], W1),
    ([B1, B1, A1], W1),
    ([A2, B2, B2], W2),
    ([B2, A2, B2], W2),
    ([B2, B2, A2], W2),
];

fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1])).abs()
}

/// Seven-point rule on one triangle; `f` receives the point and its
/// barycentric coordinates.
pub fn integrate_triangle(tri: &[Point; 3], f: &impl Fn(Point, [f64; 3]) -> f64) -> f64 {
    let area = triangle_area(tri);
    SEVEN_POINT
        .iter()
        .map(|(l, w)| {
            let p = [l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0], l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1]];
            w * f(p, *l)
        })
        .sum::<f64>()
        * area
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Adaptive seven-point integration: a triangle is split into its four
/// midpoint children until the children agree with the parent to `tol`.
/// Barycentric coordinates passed to `f` refer to the original triangle.
pub fn integrate_triangle_adaptive(tri: &[Point; 3], f: &impl Fn(Point, [f64; 3]) -> f64, tol: f64, max_depth: usize) -> f64 {
    let bary = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let whole = integrate_sub(tri, &bary, f);
    adapt_triangle(tri, &bary, f, whole, tol, max_depth)
}

fn integrate_sub(tri: &[Point; 3], bary: &[[f64; 3]; 3], f: &impl Fn(Point, [f64; 3]) -> f64) -> f64 {
    integrate_triangle(tri, &|p, l: [f64; 3]| {
        let lam = [0, 1, 2].map(|k| l[0] * bary[0][k] + l[1] * bary[1][k] + l[2] * bary[2][k]);
        f(p, lam)
    })
}

fn adapt_triangle(tri: &[Point; 3], bary: &[[f64; 3]; 3], f: &impl Fn(Point, [f64; 3]) -> f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let mid3 = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    let (p, b) = (tri, bary);
    let pm = [midpoint(p[0], p[1]), midpoint(p[1], p[2]), midpoint(p[2], p[0])];
    let bm = [mid3(b[0], b[1]), mid3(b[1], b[2]), mid3(b[2], b[0])];
    let children: [([Point; 3], [[f64; 3]; 3]); 4] = [
        ([p[0], pm[0], pm[2]], [b[0], bm[0], bm[2]]),
        ([pm[0], p[1], pm[1]], [bm[0], b[1], bm[1]]),
        ([pm[2], pm[1], p[2]], [bm[2], bm[1], b[2]]),
        ([pm[0], pm[1], pm[2]], [bm[0], bm[1], bm[2]]),
    ];
    let parts: Vec<f64> = children.iter().map(|(t, l)| integrate_sub(t, l, f)).collect();
    let sum: f64 = parts.iter().sum();
    if depth == 0 || (sum - whole).abs() <= tol {
        return sum;
    }
    children.iter().zip(&parts).map(|((t, l), &w)| adapt_triangle(t, l, f, w, 0.25 * tol, depth - 1)).sum()
}
