use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Frame, Vec2};
use crate::error::VelocityError;

/// Default exponential smoothing coefficient for estimated velocities.
pub const DEFAULT_SMOOTHING: f64 = 0.5;

fn check_smoothing(alpha: f64) -> Result<(), VelocityError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(VelocityError::BadSmoothing(alpha))
    }
}

/// Exponentially smoothed finite-difference velocity over a track history
/// of `(timestamp, position)` samples.
///
/// The first finite difference seeds the estimate; later differences are
/// blended in with weight `smoothing`. Samples that repeat the previous
/// timestamp are skipped.
pub fn estimate_velocity(history: &[(f64, Vec2)], smoothing: f64) -> Result<Vec2, VelocityError> {
    check_smoothing(smoothing)?;
    let mut iter = history.iter();
    let &(mut t_prev, mut p_prev) = iter.next().ok_or(VelocityError::Undefined)?;
    let mut v: Option<Vec2> = None;
    for &(t, p) in iter {
        let dt = t - t_prev;
        if dt == 0.0 {
            continue;
        }
        let raw = (p - p_prev) * (1.0 / dt);
        v = Some(match v {
            None => raw,
            Some(prev) => raw * smoothing + prev * (1.0 - smoothing),
        });
        t_prev = t;
        p_prev = p;
    }
    v.ok_or(VelocityError::Undefined)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrackKinematics {
    t: f64,
    position: Vec2,
    velocity: Option<Vec2>,
    last_frame: u64,
}

/// Incremental form of [`estimate_velocity`], keyed by track id.
///
/// Fills in velocities for objects that arrive without one. Objects that
/// already carry a velocity keep it, but still update the history so a
/// later gap in the velocity field is bridged smoothly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityTracker {
    smoothing: f64,
    tracks: BTreeMap<u64, TrackKinematics>,
}

impl VelocityTracker {
    pub fn new(smoothing: f64) -> Result<Self, VelocityError> {
        check_smoothing(smoothing)?;
        Ok(Self { smoothing, tracks: BTreeMap::new() })
    }

    /// Feed one sample and return the current estimate for the track.
    pub fn update(&mut self, track_id: u64, frame_index: u64, t: f64, position: Vec2) -> Option<Vec2> {
        let alpha = self.smoothing;
        match self.tracks.get_mut(&track_id) {
            None => {
                self.tracks.insert(track_id, TrackKinematics { t, position, velocity: None, last_frame: frame_index });
                None
            }
            Some(k) => {
                k.last_frame = frame_index;
                let dt = t - k.t;
                if dt == 0.0 {
                    return k.velocity;
                }
                let raw = (position - k.position) * (1.0 / dt);
                k.velocity = Some(match k.velocity {
                    None => raw,
                    Some(prev) => raw * alpha + prev * (1.0 - alpha),
                });
                k.t = t;
                k.position = position;
                k.velocity
            }
        }
    }

    /// Update every object in the frame and fill missing velocities.
    pub fn fill_frame(&mut self, frame: &mut Frame) {
        for obj in &mut frame.objects {
            let est = self.update(obj.track_id, frame.frame_index, frame.timestamp, obj.ground_position());
            if obj.velocity.is_none() {
                obj.velocity = est;
            }
        }
    }

    /// Forget tracks whose last sample is `stale_frames` or more before `current_frame`.
    pub fn prune(&mut self, current_frame: u64, stale_frames: u64) {
        self.tracks.retain(|_, k| current_frame.saturating_sub(k.last_frame) < stale_frames);
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_track_is_zero() {
        let h = [(0.0, Vec2::new(3.0, 4.0)), (0.1, Vec2::new(3.0, 4.0))];
        assert_eq!(estimate_velocity(&h, 0.5).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn single_difference_with_full_weight() {
        let h = [(0.0, Vec2::ZERO), (0.1, Vec2::new(1.0, 0.0))];
        let v = estimate_velocity(&h, 1.0).unwrap();
        assert!((v.x - 10.0).abs() < 1e-12 && v.y == 0.0);
    }

    #[test]
    fn constant_acceleration_matches_direct_recursion() {
        // oracle: spell out the recursion over the sampled differences
        let (a, v0, dt) = (2.0_f64, 5.0_f64, 0.04_f64);
        let samples: Vec<(f64, Vec2)> = (0..20)
            .map(|k| {
                let t = k as f64 * dt;
                (t, Vec2::new(v0 * t + 0.5 * a * t * t, -0.5 * t))
            })
            .collect();
        let diffs: Vec<(f64, f64)> = samples
            .windows(2)
            .map(|w| {
                let h = w[1].0 - w[0].0;
                ((w[1].1.x - w[0].1.x) / h, (w[1].1.y - w[0].1.y) / h)
            })
            .collect();
        let mut expected = diffs[0];
        for d in &diffs[1..] {
            expected = (0.5 * d.0 + 0.5 * expected.0, 0.5 * d.1 + 0.5 * expected.1);
        }
        let v = estimate_velocity(&samples, 0.5).unwrap();
        assert!((v.x - expected.0).abs() < 1e-9);
        assert!((v.y - expected.1).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples_or_bad_alpha() {
        assert_eq!(estimate_velocity(&[(0.0, Vec2::ZERO)], 0.5), Err(VelocityError::Undefined));
        assert_eq!(estimate_velocity(&[], 0.5), Err(VelocityError::Undefined));
        // repeated timestamp only
        assert_eq!(
            estimate_velocity(&[(1.0, Vec2::ZERO), (1.0, Vec2::new(1.0, 1.0))], 0.5),
            Err(VelocityError::Undefined)
        );
        assert_eq!(
            estimate_velocity(&[(0.0, Vec2::ZERO), (1.0, Vec2::ZERO)], 0.0),
            Err(VelocityError::BadSmoothing(0.0))
        );
    }

    #[test]
    fn zero_delta_samples_are_skipped() {
        let h = [(0.0, Vec2::ZERO), (0.0, Vec2::new(50.0, 0.0)), (1.0, Vec2::new(2.0, 0.0))];
        assert_eq!(estimate_velocity(&h, 0.3).unwrap(), Vec2::new(2.0, 0.0));
    }

    #[test]
    fn tracker_agrees_with_batch_estimate() {
        let samples: Vec<(f64, Vec2)> = (0..15)
            .map(|k| {
                let t = k as f64 * 0.1;
                (t, Vec2::new(t * t * 3.0, (t * 2.0).sin()))
            })
            .collect();
        let mut tracker = VelocityTracker::new(0.3).unwrap();
        let mut last = None;
        for (k, &(t, p)) in samples.iter().enumerate() {
            last = tracker.update(42, k as u64, t, p);
        }
        let batch = estimate_velocity(&samples, 0.3).unwrap();
        let inc = last.unwrap();
        assert!((inc.x - batch.x).abs() < 1e-12 && (inc.y - batch.y).abs() < 1e-12);

        tracker.prune(14 + 5, 5);
        assert!(tracker.is_empty());
    }
}
