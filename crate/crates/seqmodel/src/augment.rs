//! Train-time robustness augmentation: mask out, add noise, attack.
//!
//! All three act on the *history* of a window only; future actions, target
//! states and the ground-truth anchor are never touched. Masking drops
//! context tokens from cross-attention (the returned visibility vector),
//! noise perturbs history values at a per-window sampled scale, and attack
//! overwrites single dimensions with values tens of standard deviations out
//! of range, emulating gross state-estimation faults.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use simcar::{Action, State, WindowSample};

use crate::error::ModelError;
use crate::norm::{NormStats, ACT_DIM, STATE_DIM};

/// Dimensions an attack may overwrite. Heading is excluded because angles
/// wrap back into (-pi, pi], and actions because they clamp to the legal
/// box — neither can represent an out-of-range value, mirroring how real
/// estimator faults hit the unbounded channels.
pub const ATTACK_DIMS: [usize; 5] = [0, 1, 3, 4, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub mask_enable: bool,
    /// Independent drop probability per context token.
    pub mask_prob: f64,
    pub noise_enable: bool,
    /// Per-dimension noise-scale ceiling, in training-set standard
    /// deviations: six state dimensions then two action dimensions. The
    /// actual scale of each window is drawn uniformly from [0, max].
    pub noise_eps_max: [f64; STATE_DIM + ACT_DIM],
    pub attack_enable: bool,
    /// Probability that a history token gets one dimension overwritten.
    pub attack_prob: f64,
    /// |z-score| range of attack values, in standard deviations.
    pub attack_magnitude: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mask_enable: true,
            mask_prob: 0.1,
            noise_enable: true,
            noise_eps_max: [0.1; STATE_DIM + ACT_DIM],
            attack_enable: true,
            attack_prob: 0.03,
            attack_magnitude: (10.0, 100.0),
        }
    }
}

impl AugmentConfig {
    /// Everything switched off: augment becomes the identity.
    pub fn disabled() -> Self {
        AugmentConfig {
            mask_enable: false,
            noise_enable: false,
            attack_enable: false,
            ..AugmentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.mask_prob) || !(0.0..=1.0).contains(&self.attack_prob) {
            return Err(ModelError::Config(format!(
                "augment probabilities must lie in [0, 1]: mask {} attack {}",
                self.mask_prob, self.attack_prob
            )));
        }
        if self.noise_eps_max.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(ModelError::Config(
                "noise_eps_max entries must be finite and non-negative".into(),
            ));
        }
        let (lo, hi) = self.attack_magnitude;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(ModelError::Config(format!(
                "attack magnitude range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Apply the enabled corruptions to a copy of `sample`. Returns the
/// corrupted window and the cross-attention visibility vector over its
/// 2s-1 context tokens (true = visible). At least one token always stays
/// visible; when every token is drawn masked, the anchor state token is
/// re-exposed.
pub fn augment<R: Rng>(
    sample: &WindowSample,
    cfg: &AugmentConfig,
    stats: &NormStats,
    rng: &mut R,
) -> Result<(WindowSample, Vec<bool>), ModelError> {
    cfg.validate()?;
    let mut out = sample.clone();
    let s = out.hist_states.len();
    let ctx_len = 2 * s - 1;
    let mut mask = vec![true; ctx_len];

    if cfg.mask_enable && cfg.mask_prob > 0.0 {
        for vis in mask.iter_mut() {
            if rng.gen::<f64>() < cfg.mask_prob {
                *vis = false;
            }
        }
        if mask.iter().all(|v| !v) {
            mask[ctx_len - 1] = true;
        }
    }

    if cfg.noise_enable {
        // One scale draw per window and dimension: sigma_d ~ U(0, eps_max_d),
        // i.e. the configured value bounds the noise std from above.
        let sigma: [f64; STATE_DIM + ACT_DIM] =
            std::array::from_fn(|d| rng.gen::<f64>() * cfg.noise_eps_max[d]);
        for x in out.hist_states.iter_mut() {
            let mut raw = x.to_array();
            for (d, v) in raw.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *v += z * sigma[d] * stats.state_std[d];
            }
            *x = State::new(raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]);
        }
        for a in out.hist_actions.iter_mut() {
            let zt: f64 = StandardNormal.sample(rng);
            let zs: f64 = StandardNormal.sample(rng);
            *a = Action::new(
                a.throttle() + zt * sigma[STATE_DIM] * stats.act_std[0],
                a.steer() + zs * sigma[STATE_DIM + 1] * stats.act_std[1],
            );
        }
    }

    if cfg.attack_enable && cfg.attack_prob > 0.0 {
        let (lo, hi) = cfg.attack_magnitude;
        // Anchor read once, before any attack lands: position overwrites are
        // expressed in its frame so the attacked feature dimension carries a
        // z-score of exactly +-z (velocities are absolute features, so a
        // mean-relative overwrite is exact for them as well).
        let anchor = *out.hist_states.last().expect("history is non-empty");
        let (asin, acos) = anchor.psi.sin_cos();
        let last = out.hist_states.len() - 1;
        for (i, x) in out.hist_states.iter_mut().enumerate() {
            if rng.gen::<f64>() >= cfg.attack_prob {
                continue;
            }
            // The newest state defines the relative frame; overwriting its
            // position would displace every token's feature instead of its
            // own, so the anchor draws only velocity dimensions (where the
            // overwrite is exact in feature space too).
            let dims: &[usize] = if i == last {
                &ATTACK_DIMS[2..]
            } else {
                &ATTACK_DIMS
            };
            let d = dims[rng.gen_range(0..dims.len())];
            let z = rng.gen_range(lo..=hi);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut raw = x.to_array();
            let mag = sign * z * stats.state_std[d];
            match d {
                0 => {
                    raw[0] = anchor.px + acos * mag;
                    raw[1] = anchor.py + asin * mag;
                }
                1 => {
                    raw[0] = anchor.px - asin * mag;
                    raw[1] = anchor.py + acos * mag;
                }
                _ => raw[d] = stats.state_mean[d] + mag,
            }
            *x = State::new(raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]);
        }
    }

    Ok((out, mask))
}
