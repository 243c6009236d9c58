//! Shared fixtures for the benchmarks in `benches/`.

use std::f64::consts::PI;

use dtnlab_core::{BoundaryDatum, CoefficientA, CoefficientC, Region, TriangleMesh};

/// A nonlinear problem on the unit square at resolution `n`: a ramp `a(u)`,
/// a smooth potential and a single-mode boundary datum.
pub struct Problem {
    pub mesh: TriangleMesh,
    pub a: CoefficientA,
    pub c: CoefficientC,
    pub g: BoundaryDatum,
}

impl Problem {
    pub fn new(n: usize) -> Self {
        let mesh = TriangleMesh::generate(Region::UnitSquare, n).expect("mesh");
        let grid: Vec<f64> = (0..=16).map(|k| -2.0 + 0.25 * k as f64).collect();
        let a = CoefficientA::from_fn(grid, 0.5, |u| 1.0 + 0.5 * u.clamp(0.0, 1.0)).expect("a");
        let c = CoefficientC::from_fn(&mesh, 0.5, |p| 1.0 + 0.5 * p[0] * p[1]).expect("c");
        let g = BoundaryDatum::from_fn(&mesh, |_, s| (2.0 * PI * s).cos());
        Self { mesh, a, c, g }
    }
}
