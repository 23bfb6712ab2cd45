//! The 26-value observation: 24 lidar ranges, goal distance, heading error.

use std::f64::consts::{PI, TAU};

use crate::world::{Goal, Pose, LIDAR_BEAMS};
use crate::{Error, Result};

pub const STATE_DIM: usize = LIDAR_BEAMS + 2;
pub const GOAL_DISTANCE_INDEX: usize = LIDAR_BEAMS;
pub const HEADING_INDEX: usize = LIDAR_BEAMS + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    /// Assembles `[scan.., distance, heading]` without validating the scan.
    pub fn from_parts(scan: &[f64], goal_distance: f64, heading_error: f64) -> Result<Self> {
        if scan.len() != LIDAR_BEAMS {
            return Err(Error::Shape(format!(
                "scan has {} beams, state needs {LIDAR_BEAMS}",
                scan.len()
            )));
        }
        let mut v = [0.0; STATE_DIM];
        v[..LIDAR_BEAMS].copy_from_slice(scan);
        v[GOAL_DISTANCE_INDEX] = goal_distance;
        v[HEADING_INDEX] = heading_error;
        Ok(StateVector(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scan(&self) -> &[f64] {
        &self.0[..LIDAR_BEAMS]
    }

    pub fn goal_distance(&self) -> f64 {
        self.0[GOAL_DISTANCE_INDEX]
    }

    pub fn heading_error(&self) -> f64 {
        self.0[HEADING_INDEX]
    }

    /// Rescales ranges by `max_range`, distance by `distance_scale` and heading by pi.
    pub fn normalized(&self, max_range: f64, distance_scale: f64) -> Self {
        let mut v = self.0;
        for r in &mut v[..LIDAR_BEAMS] {
            *r /= max_range;
        }
        v[GOAL_DISTANCE_INDEX] /= distance_scale;
        v[HEADING_INDEX] /= PI;
        StateVector(v)
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Wraps a finite angle into (-pi, pi].
pub(crate) fn wrap_to_pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Wraps `x` into (-pi, pi]; `-pi` maps to `pi`.
pub fn wrap_angle(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("angle {x}")));
    }
    Ok(wrap_to_pi(x))
}

pub fn goal_distance(pose: Pose, goal: Goal) -> f64 {
    pose.position().distance(goal.position())
}

/// Bearing to the goal relative to the robot heading, in (-pi, pi].
pub fn heading_error(pose: Pose, goal: Goal) -> Result<f64> {
    let dx = goal.x - pose.x;
    let dy = goal.y - pose.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::invalid(
            "heading undefined: pose coincides with goal",
        ));
    }
    wrap_angle(dy.atan2(dx) - pose.yaw)
}

/// Raw (un-normalized) state in the fixed order `[scan(0..23), D_c, theta_h]`.
pub fn build_state(scan: &[f64], pose: Pose, goal: Goal) -> Result<StateVector> {
    if scan.len() != LIDAR_BEAMS {
        return Err(Error::Shape(format!(
            "scan has {} beams, state needs {LIDAR_BEAMS}",
            scan.len()
        )));
    }
    StateVector::from_parts(scan, goal_distance(pose, goal), heading_error(pose, goal)?)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(wrap_angle(1.5 * PI).unwrap(), -FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn heading_examples() {
        let o = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(heading_error(o, Goal { x: 1.0, y: 0.0 }).unwrap(), 0.0);
        assert_abs_diff_eq!(
            heading_error(o, Goal { x: 0.0, y: 1.0 }).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        let back = Pose::new(0.0, 0.0, PI);
        assert_eq!(heading_error(back, Goal { x: 1.0, y: 0.0 }).unwrap(), PI);
        assert!(heading_error(o, Goal { x: 0.0, y: 0.0 }).is_err());
    }

    #[test]
    fn distance_examples() {
        let g = |x, y| Goal { x, y };
        assert_eq!(goal_distance(Pose::new(0.0, 0.0, 0.0), g(0.0, 0.0)), 0.0);
        assert_eq!(goal_distance(Pose::new(0.0, 0.0, 0.0), g(3.0, 4.0)), 5.0);
        assert_abs_diff_eq!(
            goal_distance(Pose::new(1.0, 1.0, 0.0), g(2.0, 2.0)),
            SQRT_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn build_state_layout() {
        let scan = [3.5; LIDAR_BEAMS];
        let o = Pose::new(0.0, 0.0, 0.0);
        let s = build_state(&scan, o, Goal { x: 1.0, y: 0.0 }).unwrap();
        let mut want = [3.5; STATE_DIM];
        want[24] = 1.0;
        want[25] = 0.0;
        assert_eq!(s.0, want);
        let s = build_state(&scan, o, Goal { x: 0.0, y: 1.0 }).unwrap();
        assert_abs_diff_eq!(s.0[25], FRAC_PI_2, epsilon = 1e-15);
        assert!(build_state(&scan[..23], o, Goal { x: 1.0, y: 0.0 }).is_err());
    }

    #[test]
    fn permuting_scan_only_permutes_ranges() {
        let scan: Vec<f64> = (0..24).map(|i| 0.2 + 0.1 * i as f64).collect();
        let mut rev = scan.clone();
        rev.reverse();
        let o = Pose::new(0.3, -0.2, 0.4);
        let g = Goal { x: 1.0, y: 1.0 };
        let a = build_state(&scan, o, g).unwrap();
        let b = build_state(&rev, o, g).unwrap();
        assert_eq!(a.0[24..], b.0[24..]);
        assert_eq!(b.scan(), rev.as_slice());
    }

    proptest! {
        #[test]
        fn wrap_is_congruent_and_in_range(x in -1e4f64..1e4) {
            let w = wrap_angle(x).unwrap();
            prop_assert!(w > -PI && w <= PI);
            let k = ((x - w) / TAU).round();
            prop_assert!((x - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn heading_shifts_with_yaw(
            x in -2.0f64..2.0, y in -2.0f64..2.0, yaw in -PI..PI,
            gx in -2.0f64..2.0, gy in -2.0f64..2.0, delta in -10.0f64..10.0,
        ) {
            let g = Goal { x: gx, y: gy };
            prop_assume!((gx - x).hypot(gy - y) > 1e-6);
            let base = heading_error(Pose::new(x, y, yaw), g).unwrap();
            let turned = heading_error(Pose::new(x, y, yaw + delta), g).unwrap();
            let want = wrap_angle(base - delta).unwrap();
            let diff = wrap_to_pi(turned - want).abs();
            prop_assert!(diff < 1e-9, "turned {turned} want {want}");
        }

        #[test]
        fn state_tail_bounds(
            x in -2.0f64..2.0, y in -2.0f64..2.0, yaw in -10.0f64..10.0,
            gx in -2.0f64..2.0, gy in -2.0f64..2.0,
        ) {
            prop_assume!((gx - x).hypot(gy - y) > 0.0);
            let s = build_state(&[1.0; LIDAR_BEAMS], Pose::new(x, y, yaw), Goal { x: gx, y: gy }).unwrap();
            prop_assert!(s.heading_error().abs() <= PI);
            prop_assert!(s.goal_distance() >= 0.0);
        }
    }
}
