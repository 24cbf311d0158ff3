//! Action parameterization: `k` spline knots per action dimension at
//! uniform time indices over the rollout horizon, interpolated by a natural
//! cubic spline (vanishing second derivative at both ends). Evaluations
//! outside the knot range clamp to the end knots; legal-action clamping
//! happens only after spline evaluation so the knot space stays linear.

use simcar::Action;

use crate::error::MpcError;

/// One candidate plan: knot values for (throttle, steer) over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<[f64; 2]>,
    horizon: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<[f64; 2]>, horizon: usize) -> Result<Self, MpcError> {
        if knots.is_empty() || knots.len() > horizon {
            return Err(MpcError::BadConfig(format!(
                "knot count {} must lie in [1, horizon={horizon}]",
                knots.len()
            )));
        }
        if knots.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MpcError::BadConfig("knot values must be finite".into()));
        }
        Ok(KnotVector { knots, horizon })
    }

    pub fn constant(n_knots: usize, horizon: usize, value: [f64; 2]) -> Result<Self, MpcError> {
        KnotVector::new(vec![value; n_knots], horizon)
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn knots(&self) -> &[[f64; 2]] {
        &self.knots
    }

    /// Uniform knot spacing in control periods (0 when there is one knot).
    pub fn spacing(&self) -> f64 {
        if self.knots.len() < 2 {
            0.0
        } else {
            (self.horizon - 1) as f64 / (self.knots.len() - 1) as f64
        }
    }

    /// Time index of knot `j`.
    pub fn knot_time(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    /// Raw spline value at a continuous time index. Out-of-range times
    /// clamp to the end knots; evaluation at a knot time returns that
    /// knot's value exactly.
    pub fn value_at(&self, tau: f64) -> [f64; 2] {
        let m = self.second_derivatives();
        self.value_with(&m, tau)
    }

    /// Raw spline values on the integer control grid 0..horizon-1.
    pub fn evaluate_raw(&self) -> Vec<[f64; 2]> {
        let m = self.second_derivatives();
        (0..self.horizon)
            .map(|t| self.value_with(&m, t as f64))
            .collect()
    }

    /// Control-grid actions, clamped to the legal action box.
    pub fn evaluate_actions(&self, steer_limit: f64) -> Vec<Action> {
        self.evaluate_raw()
            .into_iter()
            .map(|[thr, st]| Action::clamped_to(thr, st, steer_limit))
            .collect()
    }

    /// Receding-horizon shift: every knot resampled one control period
    /// later (the tail clamps to the final knot). The first knot of the
    /// result is therefore exactly the spline value at time 1.
    pub fn shift_one(&self) -> KnotVector {
        let m = self.second_derivatives();
        let knots = (0..self.knots.len())
            .map(|j| self.value_with(&m, self.knot_time(j) + 1.0))
            .collect();
        KnotVector {
            knots,
            horizon: self.horizon,
        }
    }

    /// Convex (or affine) combination of equally shaped knot vectors.
    pub fn weighted_average(samples: &[KnotVector], weights: &[f64]) -> Result<Self, MpcError> {
        let first = samples.first().ok_or_else(|| {
            MpcError::BadConfig("weighted average needs at least one sample".into())
        })?;
        if samples.len() != weights.len() {
            return Err(MpcError::BadConfig(format!(
                "{} samples but {} weights",
                samples.len(),
                weights.len()
            )));
        }
        let mut knots = vec![[0.0f64; 2]; first.knots.len()];
        for (s, w) in samples.iter().zip(weights) {
            debug_assert_eq!(s.knots.len(), first.knots.len());
            debug_assert_eq!(s.horizon, first.horizon);
            for (acc, k) in knots.iter_mut().zip(&s.knots) {
                acc[0] += w * k[0];
                acc[1] += w * k[1];
            }
        }
        Ok(KnotVector {
            knots,
            horizon: first.horizon,
        })
    }

    /// Natural-spline second derivatives per dimension (zero at both ends),
    /// from the standard tridiagonal system for uniform knot spacing.
    fn second_derivatives(&self) -> Vec<[f64; 2]> {
        let k = self.knots.len();
        let mut m = vec![[0.0f64; 2]; k];
        if k < 3 {
            return m; // constant or linear: the spline is exactly linear
        }
        let h = self.spacing();
        let n = k - 2; // interior unknowns; M_{i-1} + 4 M_i + M_{i+1} = rhs_i
        for dim in 0..2 {
            let y = |i: usize| self.knots[i][dim];
            let mut diag = vec![4.0f64; n];
            let mut rhs = vec![0.0f64; n];
            for (i, r) in rhs.iter_mut().enumerate() {
                *r = 6.0 * (y(i + 2) - 2.0 * y(i + 1) + y(i)) / (h * h);
            }
            // Thomas forward sweep (sub- and super-diagonals are all 1).
            for i in 1..n {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0f64; n];
            sol[n - 1] = rhs[n - 1] / diag[n - 1];
            for i in (0..n - 1).rev() {
                sol[i] = (rhs[i] - sol[i + 1]) / diag[i];
            }
            for (i, s) in sol.iter().enumerate() {
                m[i + 1][dim] = *s;
            }
        }
        m
    }

    fn value_with(&self, m: &[[f64; 2]], tau: f64) -> [f64; 2] {
        let k = self.knots.len();
        if k == 1 {
            return self.knots[0];
        }
        let h = self.spacing();
        let t_max = self.knot_time(k - 1);
        let tau = tau.clamp(0.0, t_max);
        // Exact knot hits return the stored value bitwise.
        let nearest = (tau / h).round();
        if nearest >= 0.0 && (nearest as usize) < k && tau == nearest * h {
            return self.knots[nearest as usize];
        }
        let j = ((tau / h).floor() as usize).min(k - 2);
        let t0 = self.knot_time(j);
        let t1 = self.knot_time(j + 1);
        let a = (t1 - tau) / h;
        let b = (tau - t0) / h;
        let h2 = h * h / 6.0;
        let mut out = [0.0f64; 2];
        for dim in 0..2 {
            out[dim] = a * self.knots[j][dim]
                + b * self.knots[j + 1][dim]
                + ((a * a * a - a) * m[j][dim] + (b * b * b - b) * m[j + 1][dim]) * h2;
        }
        out
    }
}

/// Spline evaluation as a legal action: raw interpolation, then the action
/// box (throttle ±1, steering ±`steer_limit`).
pub fn spline_eval(knots: &KnotVector, tau: f64, steer_limit: f64) -> Action {
    let [thr, st] = knots.value_at(tau);
    Action::clamped_to(thr, st, steer_limit)
}
