use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dbm::GRAVITY;
use crate::error::SimError;
use crate::state::State;

/// One reference waypoint: world position plus the target speed there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub px: f64,
    pub py: f64,
    pub speed: f64,
}

/// A reference path at (near-)uniform arc-length spacing with a speed
/// profile that respects the lateral-acceleration cap used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrack {
    pub waypoints: Vec<Waypoint>,
    pub closed: bool,
    pub spacing: f64,
}

/// Geometric shape family for [`synthesize_track`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrackShape {
    /// Closed loop: jittered control points on a circle, smoothed by a
    /// periodic cubic spline.
    Loop {
        base_radius: f64,
        radius_jitter: f64,
        n_control: usize,
    },
    /// Open straight segment along +x from the origin.
    Straight { length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub shape: TrackShape,
    /// Nominal arc-length gap between waypoints, meters.
    pub spacing: f64,
    /// Cruise target speed is drawn uniformly from this range per track.
    pub speed_range: (f64, f64),
    /// Friction assumed for the lateral-acceleration speed cap.
    pub friction: f64,
    pub min_turn_radius: f64,
    /// Longitudinal acceleration bound used to smooth the speed profile.
    pub accel_limit: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            shape: TrackShape::Loop {
                base_radius: 4.0,
                radius_jitter: 0.35,
                n_control: 8,
            },
            spacing: 0.25,
            speed_range: (1.0, 3.0),
            friction: 0.8,
            min_turn_radius: 0.8,
            accel_limit: 2.0,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(SimError::BadConfig(format!(
                "spacing {} must be > 0",
                self.spacing
            )));
        }
        let (lo, hi) = self.speed_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(SimError::BadConfig(format!(
                "speed range ({lo}, {hi}) must be ordered and positive"
            )));
        }
        if !(self.friction.is_finite() && self.friction > 0.0 && self.friction <= 2.0) {
            return Err(SimError::BadConfig(format!(
                "friction {} must lie in (0, 2]",
                self.friction
            )));
        }
        if !(self.min_turn_radius.is_finite() && self.min_turn_radius > 0.0) {
            return Err(SimError::BadConfig(format!(
                "min turn radius {} must be > 0",
                self.min_turn_radius
            )));
        }
        if !(self.accel_limit.is_finite() && self.accel_limit > 0.0) {
            return Err(SimError::BadConfig(format!(
                "accel limit {} must be > 0",
                self.accel_limit
            )));
        }
        match self.shape {
            TrackShape::Loop {
                base_radius,
                radius_jitter,
                n_control,
            } => {
                if n_control < 4 {
                    return Err(SimError::BadConfig(format!(
                        "loop needs >= 4 control points, got {n_control}"
                    )));
                }
                if !(0.0..1.0).contains(&radius_jitter) {
                    return Err(SimError::BadConfig(format!(
                        "radius jitter {radius_jitter} must lie in [0, 1)"
                    )));
                }
                // A loop whose whole scale is below the minimum turn radius
                // cannot satisfy the curvature bound.
                if base_radius * (1.0 - radius_jitter) <= self.min_turn_radius {
                    return Err(SimError::BadConfig(format!(
                        "base radius {base_radius} too small for min turn radius {}",
                        self.min_turn_radius
                    )));
                }
            }
            TrackShape::Straight { length } => {
                if !(length.is_finite() && length >= 9.0 * self.spacing) {
                    return Err(SimError::BadConfig(format!(
                        "straight length {length} must cover at least 10 waypoints at spacing {}",
                        self.spacing
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Tridiagonal solve for a system with unit off-diagonals and the given
/// main diagonal (Thomas elimination).
fn thomas_unit_offdiag(diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = 1.0 / diag[0];
    dp[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - cp[i - 1];
        cp[i] = 1.0 / m;
        dp[i] = (rhs[i] - dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Periodic natural cubic spline second derivatives for uniform parameter
/// spacing: cyclic tridiagonal system (1, 4, 1) solved by Thomas elimination
/// plus a Sherman-Morrison rank-one correction for the wrap entries.
fn periodic_spline_m(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    assert!(n >= 3);
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let prev = p[(i + n - 1) % n];
            let next = p[(i + 1) % n];
            6.0 * (prev - 2.0 * p[i] + next)
        })
        .collect();
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    let x = thomas_unit_offdiag(&diag, &d);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = 1.0;
    let z = thomas_unit_offdiag(&diag, &u);
    let fact = (x[0] + x[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
    (0..n).map(|i| x[i] - fact * z[i]).collect()
}

fn spline_eval(p: &[f64], m: &[f64], seg: usize, t: f64) -> f64 {
    let n = p.len();
    let j = (seg + 1) % n;
    let a = 1.0 - t;
    m[seg] * a * a * a / 6.0 + m[j] * t * t * t / 6.0 + (p[seg] - m[seg] / 6.0) * a
        + (p[j] - m[j] / 6.0) * t
}

/// Unsigned Menger curvature of the circle through three points.
fn menger_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let ab = ((b.0 - a.0), (b.1 - a.1));
    let bc = ((c.0 - b.0), (c.1 - b.1));
    let ac = ((c.0 - a.0), (c.1 - a.1));
    let cross = (ab.0 * bc.1 - ab.1 * bc.0).abs();
    let la = (ab.0 * ab.0 + ab.1 * ab.1).sqrt();
    let lb = (bc.0 * bc.0 + bc.1 * bc.1).sqrt();
    let lc = (ac.0 * ac.0 + ac.1 * ac.1).sqrt();
    let denom = la * lb * lc;
    if denom < 1e-12 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

const DENSE_PER_SEGMENT: usize = 64;
const MAX_ATTEMPTS: usize = 24;

/// Synthesize one reference track. Loop shapes retry with shrinking jitter
/// until the curvature bound holds; the speed profile caps lateral
/// acceleration at `friction * g` and smooths longitudinally.
pub fn synthesize_track<R: Rng>(rng: &mut R, cfg: &TrackConfig) -> Result<ReferenceTrack, SimError> {
    cfg.validate()?;
    match cfg.shape {
        TrackShape::Straight { length } => {
            let m = (length / cfg.spacing).round() as usize + 1;
            let cruise = draw_cruise(rng, cfg.speed_range);
            let waypoints = (0..m)
                .map(|i| Waypoint {
                    px: i as f64 * cfg.spacing,
                    py: 0.0,
                    speed: cruise,
                })
                .collect();
            Ok(ReferenceTrack {
                waypoints,
                closed: false,
                spacing: cfg.spacing,
            })
        }
        TrackShape::Loop {
            base_radius,
            radius_jitter,
            n_control,
        } => {
            let mut jitter = radius_jitter;
            for _ in 0..MAX_ATTEMPTS {
                let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n_control)
                    .map(|i| {
                        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_control as f64;
                        let r = base_radius * (1.0 + rng.gen_range(-jitter..=jitter));
                        (r * theta.cos(), r * theta.sin())
                    })
                    .unzip();
                let cruise = draw_cruise(rng, cfg.speed_range);
                if let Some(track) = build_loop(&xs, &ys, cruise, cfg) {
                    return Ok(track);
                }
                jitter *= 0.8;
            }
            Err(SimError::TrackSynthesis(format!(
                "curvature bound 1/{} not met after {MAX_ATTEMPTS} attempts",
                cfg.min_turn_radius
            )))
        }
    }
}

fn draw_cruise<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn build_loop(xs: &[f64], ys: &[f64], cruise: f64, cfg: &TrackConfig) -> Option<ReferenceTrack> {
    let mx = periodic_spline_m(xs);
    let my = periodic_spline_m(ys);
    let n = xs.len();
    let mut dense = Vec::with_capacity(n * DENSE_PER_SEGMENT);
    for seg in 0..n {
        for j in 0..DENSE_PER_SEGMENT {
            let t = j as f64 / DENSE_PER_SEGMENT as f64;
            dense.push((spline_eval(xs, &mx, seg, t), spline_eval(ys, &my, seg, t)));
        }
    }
    // Cumulative arc length over the closed dense polyline.
    let nd = dense.len();
    let mut cum = Vec::with_capacity(nd + 1);
    cum.push(0.0);
    for i in 0..nd {
        let a = dense[i];
        let b = dense[(i + 1) % nd];
        let d = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        cum.push(cum[i] + d);
    }
    let total = *cum.last().unwrap();
    let m = (total / cfg.spacing).round() as usize;
    if m < 10 {
        return None;
    }
    let spacing_eff = total / m as f64;
    // Spacing must stay near nominal; an extreme shape could stretch it.
    if (spacing_eff - cfg.spacing).abs() > 0.2 * cfg.spacing {
        return None;
    }
    let mut points = Vec::with_capacity(m);
    let mut cursor = 0usize;
    for i in 0..m {
        let s = i as f64 * spacing_eff;
        while cursor + 1 < cum.len() && cum[cursor + 1] < s {
            cursor += 1;
        }
        let seg_len = cum[cursor + 1] - cum[cursor];
        let t = if seg_len > 1e-12 {
            (s - cum[cursor]) / seg_len
        } else {
            0.0
        };
        let a = dense[cursor % nd];
        let b = dense[(cursor + 1) % nd];
        points.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }

    let kappa: Vec<f64> = (0..m)
        .map(|i| {
            let a = points[(i + m - 1) % m];
            let b = points[i];
            let c = points[(i + 1) % m];
            menger_curvature(a, b, c)
        })
        .collect();
    if kappa.iter().any(|k| *k > 1.0 / cfg.min_turn_radius) {
        return None;
    }

    let cap = cfg.friction * GRAVITY;
    let mut speed: Vec<f64> = kappa
        .iter()
        .map(|k| {
            if *k < 1e-9 {
                cruise
            } else {
                cruise.min((cap / k).sqrt())
            }
        })
        .collect();
    // Two wrap-around forward/backward passes bound |dv^2/ds| by 2a.
    for _ in 0..2 {
        for i in 0..m {
            let j = (i + 1) % m;
            let vmax = (speed[i] * speed[i] + 2.0 * cfg.accel_limit * spacing_eff).sqrt();
            speed[j] = speed[j].min(vmax);
        }
        for i in (0..m).rev() {
            let j = (i + 1) % m;
            let vmax = (speed[j] * speed[j] + 2.0 * cfg.accel_limit * spacing_eff).sqrt();
            speed[i] = speed[i].min(vmax);
        }
    }

    let waypoints = points
        .iter()
        .zip(&speed)
        .map(|(&(px, py), &speed)| Waypoint { px, py, speed })
        .collect();
    Some(ReferenceTrack {
        waypoints,
        closed: true,
        spacing: spacing_eff,
    })
}

impl ReferenceTrack {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        if self.closed {
            self.spacing * self.len() as f64
        } else {
            self.spacing * (self.len().saturating_sub(1)) as f64
        }
    }

    /// Index of the waypoint closest to a world position. Brute force; the
    /// desk-scale tracks hold a few hundred waypoints.
    pub fn nearest_index(&self, px: f64, py: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, w) in self.waypoints.iter().enumerate() {
            let d = (w.px - px).powi(2) + (w.py - py).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Point on the waypoint polyline roughly `dist` meters ahead of the
    /// waypoint nearest to (px, py), walking forward along the track. Open
    /// tracks clamp at the final waypoint.
    pub fn lookahead_point(&self, px: f64, py: f64, dist: f64) -> (f64, f64) {
        let start = self.nearest_index(px, py);
        let mut remaining = dist;
        let mut i = start;
        loop {
            let next = if self.closed {
                (i + 1) % self.len()
            } else if i + 1 < self.len() {
                i + 1
            } else {
                let w = &self.waypoints[i];
                return (w.px, w.py);
            };
            let a = &self.waypoints[i];
            let b = &self.waypoints[next];
            let seg = ((b.px - a.px).powi(2) + (b.py - a.py).powi(2)).sqrt();
            if seg >= remaining && seg > 1e-12 {
                let t = remaining / seg;
                return (a.px + t * (b.px - a.px), a.py + t * (b.py - a.py));
            }
            remaining -= seg;
            i = next;
            if i == start {
                // Lookahead longer than the whole loop; return where we are.
                let w = &self.waypoints[i];
                return (w.px, w.py);
            }
        }
    }

    /// Signed lateral offset from the track (positive to the left of travel
    /// direction), measured against the segment at the nearest waypoint.
    pub fn lateral_error(&self, state: &State) -> f64 {
        let i = self.nearest_index(state.px, state.py);
        let next = if self.closed {
            (i + 1) % self.len()
        } else {
            (i + 1).min(self.len() - 1)
        };
        let (a, b) = (&self.waypoints[i], &self.waypoints[next]);
        let (tx, ty) = (b.px - a.px, b.py - a.py);
        let norm = (tx * tx + ty * ty).sqrt();
        if norm < 1e-12 {
            return ((state.px - a.px).powi(2) + (state.py - a.py).powi(2)).sqrt();
        }
        ((state.py - a.py) * tx - (state.px - a.px) * ty) / norm
    }

    pub fn target_speed(&self, index: usize) -> f64 {
        self.waypoints[index % self.len()].speed
    }

    /// Initial pose for an episode: at waypoint 0, heading along the track.
    pub fn start_state(&self) -> State {
        let a = &self.waypoints[0];
        let b = &self.waypoints[1 % self.len()];
        let psi = (b.py - a.py).atan2(b.px - a.px);
        State::new(a.px, a.py, psi, 0.0, 0.0, 0.0)
    }
}
