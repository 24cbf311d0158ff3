//! Gaussian perturbation of the mean knot vector. Sample 0 is always the
//! unperturbed mean, so the warm start itself competes in every batch and
//! the best-sample cost can never exceed it.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::MpcError;
use crate::spline::KnotVector;

/// Draw `n` knot vectors around `mean` with the given diagonal covariance
/// (variance per action dimension, shared across knots). Knot values are
/// not clamped here — the legal-action box applies after spline evaluation.
pub fn sample_action_sequences<R: Rng>(
    mean: &KnotVector,
    cov: [f64; 2],
    n: usize,
    rng: &mut R,
) -> Result<Vec<KnotVector>, MpcError> {
    if n == 0 {
        return Err(MpcError::BadConfig("sample count must be >= 1".into()));
    }
    for v in cov {
        if !(v.is_finite() && v > 0.0) {
            return Err(MpcError::BadConfig(format!(
                "sampling covariance must be positive definite, got {cov:?}"
            )));
        }
    }
    let std = [cov[0].sqrt(), cov[1].sqrt()];
    let mut out = Vec::with_capacity(n);
    out.push(mean.clone());
    for _ in 1..n {
        let knots = mean
            .knots()
            .iter()
            .map(|k| {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                [k[0] + std[0] * z0, k[1] + std[1] * z1]
            })
            .collect();
        out.push(
            KnotVector::new(knots, mean.horizon())
                .expect("perturbing finite knots keeps them finite"),
        );
    }
    Ok(out)
}
