//! Reference lookup with forward-progress monotonicity: the cursor walks
//! the track by nearest-point matching inside a forward window and never
//! snaps backward, so self-crossing or tightly folded tracks cannot yank
//! the reference behind the vehicle. Closed tracks continue across laps
//! through a virtual (unwrapped) waypoint index.

use simcar::ReferenceTrack;

use crate::cost::RefPoint;

/// Segments scanned ahead of the cursor when re-matching the vehicle.
const FORWARD_WINDOW: usize = 32;
/// Segments scanned behind the cursor (projection only; the cursor itself
/// never moves backward).
const BACK_WINDOW: usize = 1;

/// Monotone position along the track, in fractional waypoint units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackCursor {
    u: f64,
}

impl Default for TrackCursor {
    fn default() -> Self {
        TrackCursor::at_start()
    }
}

impl TrackCursor {
    pub fn at_start() -> Self {
        TrackCursor { u: 0.0 }
    }

    /// Virtual waypoint index (keeps growing across laps on closed tracks).
    pub fn position(&self) -> f64 {
        self.u
    }

    /// Re-match the cursor to the vehicle position. Projects onto the
    /// segments in a window around the current cursor and keeps the best,
    /// but never moves backward.
    pub fn advance_to(&mut self, track: &ReferenceTrack, px: f64, py: f64) {
        let n = track.len();
        if n < 2 {
            return;
        }
        let base = self.u.floor() as i64 - BACK_WINDOW as i64;
        let mut best_u = self.u;
        let mut best_d = f64::INFINITY;
        for off in 0..(FORWARD_WINDOW + BACK_WINDOW + 1) {
            let j = base + off as i64;
            let (a, b) = match segment(track, j) {
                Some(seg) => seg,
                None => continue,
            };
            let (ax, ay) = a;
            let (bx, by) = b;
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            if len2 < 1e-18 {
                continue;
            }
            let t = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
            let (cx, cy) = (ax + t * dx, ay + t * dy);
            let d = (px - cx).powi(2) + (py - cy).powi(2);
            if d < best_d {
                best_d = d;
                best_u = j as f64 + t;
            }
        }
        if best_u > self.u {
            self.u = best_u;
        }
    }

    /// Reference points for the next `h` control periods: the cursor's
    /// position advanced by the local target speed each step, so the t-th
    /// point is where the vehicle should be after `t+1` periods.
    pub fn reference_horizon(
        &self,
        track: &ReferenceTrack,
        h: usize,
        dt: f64,
    ) -> Vec<RefPoint> {
        let mut s = self.u;
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let here = interp(track, s);
            s += here.speed * dt / track.spacing;
            out.push(interp(track, s));
        }
        out
    }
}

/// Segment endpoints for a virtual index: wraps on closed tracks, `None`
/// outside an open track's range.
fn segment(track: &ReferenceTrack, j: i64) -> Option<((f64, f64), (f64, f64))> {
    let n = track.len() as i64;
    let idx = if track.closed {
        j.rem_euclid(n)
    } else {
        if j < 0 || j + 1 >= n {
            return None;
        }
        j
    };
    let a = &track.waypoints[idx as usize];
    let b = &track.waypoints[((idx + 1) % n) as usize];
    Some(((a.px, a.py), (b.px, b.py)))
}

/// Reference sample at a virtual waypoint index: interpolated position and
/// speed, heading from the local segment direction. Open tracks clamp at
/// the final waypoint (keeping the last segment's heading).
pub fn interp(track: &ReferenceTrack, u: f64) -> RefPoint {
    let n = track.len();
    debug_assert!(n >= 2, "reference tracks hold at least two waypoints");
    let (i, frac) = if track.closed {
        let base = u.rem_euclid(n as f64);
        let i = (base.floor() as usize).min(n - 1);
        (i, base - i as f64)
    } else {
        let clamped = u.clamp(0.0, (n - 1) as f64);
        let i = (clamped.floor() as usize).min(n - 2);
        (i, clamped - i as f64)
    };
    let a = &track.waypoints[i];
    let b = &track.waypoints[(i + 1) % n];
    RefPoint {
        px: a.px + frac * (b.px - a.px),
        py: a.py + frac * (b.py - a.py),
        psi: (b.py - a.py).atan2(b.px - a.px),
        speed: a.speed + frac * (b.speed - a.speed),
    }
}
