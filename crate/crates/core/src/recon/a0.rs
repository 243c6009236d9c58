use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{squared, Misfit, Observation};
use crate::coeffs::CoefficientC;
use crate::dtn;
use crate::error::{Error, Result};
use crate::solver::Forward;

/// Largest boundary amplitude accepted as linear-regime data.
pub const SMALL_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A0Estimate {
    pub a0: f64,
    /// Normalised misfit at the minimiser.
    pub objective: f64,
    pub evaluations: usize,
}

/// `Σ_j ‖Λ*_{a₀,c} g_j − obs_j‖² / Σ_j ‖obs_j‖²`, responses measured by `misfit`.
pub fn a0_objective(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, c: &CoefficientC, a0: f64) -> Result<f64> {
    let energy = misfit.energy(obs);
    let total = obs
        .boundary_data
        .par_iter()
        .zip(&obs.responses)
        .map(|(g, r)| dtn::linear_response(fwd, a0, c, g).map(|f| squared(&misfit.measure(&f.difference(r)))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(total / energy)
}

/// Golden-section search for `a(0)` over `[α, 1/α]` (α from `c`), to `tol`
/// in `a₀`.
pub fn recover_a0(fwd: &Forward<'_>, obs: &Observation, misfit: &Misfit, c: &CoefficientC, tol: f64) -> Result<A0Estimate> {
    misfit.check(fwd.mesh())?;
    if obs.is_empty() {
        return Err(Error::InvalidArgument("no boundary data".into()));
    }
    if obs.max_amplitude() > SMALL_AMPLITUDE {
        return Err(Error::InvalidArgument(format!("max |g| = {} exceeds the linear-regime bound {SMALL_AMPLITUDE}", obs.max_amplitude())));
    }
    if misfit.energy(obs) == 0.0 {
        return Err(Error::FlatObjective("all responses vanish".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let alpha = c.alpha();
    let (mut lo, mut hi) = (alpha, 1.0 / alpha);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| a0_objective(fwd, obs, misfit, c, x);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let (first1, first2) = (f1, f2);
    let mut evaluations = 2;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    if first1 == first2 && f1 == f2 && f1 == first1 {
        return Err(Error::FlatObjective("objective does not depend on a(0)".into()));
    }
    let a0 = 0.5 * (lo + hi);
    let objective = f(a0)?;
    Ok(A0Estimate { a0, objective, evaluations: evaluations + 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientA;
    use crate::fem::BoundaryDatum;
    use crate::mesh::{Region, TriangleMesh};
    use crate::recon::pipeline::default_small_data;
    use crate::solver::SolveOptions;

    fn setup(n: usize) -> (TriangleMesh, CoefficientC) {
        let mesh = TriangleMesh::generate(Region::UnitSquare, n).unwrap();
        let c = CoefficientC::from_fn(&mesh, 0.5, |p| 0.5 + p[0] * p[1]).unwrap();
        (mesh, c)
    }

    #[test]
    fn recovers_a0_without_guard() {
        let (mesh, c) = setup(16);
        let a = CoefficientA::from_fn(vec![-1.0, 0.0, 1.0], 0.5, |u| 1.3 + 0.4 * u).unwrap();
        let data = default_small_data(&mesh, 3, 0.01);
        let obs = Observation::synthesize(mesh.clone(), &a, &c, data, SolveOptions::default()).unwrap().odd_part().unwrap();
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let est = recover_a0(&fwd, &obs, &misfit, &c, 1e-6).unwrap();
        assert!((est.a0 - 1.3).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn argmin_is_invariant_under_data_scaling() {
        let (mesh, c) = setup(8);
        let a = CoefficientA::constant(0.9, 0.5).unwrap();
        let data = default_small_data(&mesh, 2, 0.01);
        let obs = Observation::synthesize(mesh.clone(), &a, &c, data, SolveOptions::default()).unwrap().with_noise(0.05, 3).unwrap();
        // The linear model is homogeneous, so doubling data and responses
        // quadruples the misfit without moving its minimiser.
        let mut doubled = obs.clone();
        for (g, r) in doubled.boundary_data.iter_mut().zip(&mut doubled.responses) {
            *g = g.scaled(2.0);
            *r = r.scaled(2.0);
        }
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let one = recover_a0(&fwd, &obs, &misfit, &c, 1e-6).unwrap();
        let two = recover_a0(&fwd, &doubled, &misfit, &c, 1e-6).unwrap();
        assert!((one.a0 - two.a0).abs() < 1e-6);
        assert!(one.a0 != 0.9);
    }

    #[test]
    fn flat_and_oversized_data_rejected() {
        let (mesh, c) = setup(4);
        let fwd = Forward::new(&mesh, SolveOptions::default()).unwrap();
        let misfit = Misfit::harmonic(&mesh, 3);
        let nb = mesh.num_boundary_vertices();
        let zero = Observation {
            boundary_data: vec![BoundaryDatum::zeros(&mesh)],
            responses: vec![dtn::DtnResponse::zeros(nb)],
            mesh: mesh.clone(),
            noise: 0.0,
        };
        assert!(matches!(recover_a0(&fwd, &zero, &misfit, &c, 1e-6), Err(Error::FlatObjective(_))));
        let big = Observation { boundary_data: vec![BoundaryDatum::constant(&mesh, 0.5)], ..zero };
        assert!(matches!(recover_a0(&fwd, &big, &misfit, &c, 1e-6), Err(Error::InvalidArgument(_))));
    }
}
