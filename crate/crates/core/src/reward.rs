//! Shaped step reward `R = R_d * R_theta` and terminal rewards.

use std::f64::consts::{FRAC_PI_8, PI};

use crate::state::wrap_to_pi;
use crate::{Error, Result};

pub const NUM_ACTIONS: usize = 5;

/// How an episode (or a step) ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Goal => "goal",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "goal" => Ok(Outcome::Goal),
            "collision" => Ok(Outcome::Collision),
            "timeout" => Ok(Outcome::Timeout),
            other => Err(Error::invalid(format!("unknown outcome `{other}`"))),
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub goal_reward: f64,
    pub collision_reward: f64,
    pub timeout_reward: f64,
    /// Peak of the angular factor, reached when the prospective heading is 0.
    pub angle_scale: f64,
    /// Upper bound on the exponent of the distance factor.
    pub distance_exponent_cap: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            goal_reward: 200.0,
            collision_reward: -200.0,
            timeout_reward: -200.0,
            angle_scale: 5.0,
            distance_exponent_cap: 8.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.goal_reward > 0.0 && self.collision_reward < 0.0 && self.timeout_reward < 0.0) {
            return Err(Error::Config(
                "need goal_reward > 0 > collision_reward and timeout_reward < 0".into(),
            ));
        }
        if !(self.angle_scale > 0.0) {
            return Err(Error::Config("angle_scale must be positive".into()));
        }
        if !(self.distance_exponent_cap > 0.0) {
            return Err(Error::Config(
                "distance_exponent_cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    /// Heading error when the action was chosen.
    pub heading_error: f64,
    pub action: usize,
    /// Distance to goal after the step.
    pub current_distance: f64,
    /// Distance to goal at the start of the episode.
    pub initial_distance: f64,
}

/// Heading offset credited to `action`: `(action - 2) * pi/8`.
pub fn action_offset(action: usize) -> Result<f64> {
    if action >= NUM_ACTIONS {
        return Err(Error::invalid(format!(
            "action {action} out of range 0..{NUM_ACTIONS}"
        )));
    }
    Ok((action as f64 - 2.0) * FRAC_PI_8)
}

/// Heading error the robot would have after turning by the action's offset.
pub fn prospective_heading(heading_error: f64, action: usize) -> Result<f64> {
    Ok(wrap_to_pi(heading_error - action_offset(action)?))
}

/// `angle_scale * (1 - 2|theta|/pi)`: non-negative exactly when |theta| <= pi/2.
pub fn angular_reward(theta: f64, cfg: &RewardConfig) -> f64 {
    cfg.angle_scale * (1.0 - 2.0 * theta.abs() / PI)
}

/// `2^min(D_g / D_c, cap)`: above 2 when closer than at the start, in (1, 2] otherwise.
pub fn distance_reward(current: f64, initial: f64, cfg: &RewardConfig) -> Result<f64> {
    if !(current > 0.0 && initial > 0.0) {
        return Err(Error::invalid(format!(
            "distances must be positive (current {current}, initial {initial})"
        )));
    }
    Ok((initial / current).min(cfg.distance_exponent_cap).exp2())
}

pub fn step_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> Result<f64> {
    let theta = prospective_heading(inputs.heading_error, inputs.action)?;
    let rd = distance_reward(inputs.current_distance, inputs.initial_distance, cfg)?;
    Ok(rd * angular_reward(theta, cfg))
}

pub fn terminal_reward(outcome: Outcome, cfg: &RewardConfig) -> f64 {
    match outcome {
        Outcome::Goal => cfg.goal_reward,
        Outcome::Collision => cfg.collision_reward,
        Outcome::Timeout => cfg.timeout_reward,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn prospective_heading_examples() {
        assert_eq!(prospective_heading(0.0, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(
            prospective_heading(FRAC_PI_4, 4).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            prospective_heading(-FRAC_PI_8, 1).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert!(prospective_heading(0.0, 5).is_err());
    }

    #[test]
    fn angular_examples() {
        assert_abs_diff_eq!(angular_reward(FRAC_PI_2, &cfg()), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(angular_reward(-FRAC_PI_2, &cfg()), 0.0, epsilon = 1e-15);
        assert_eq!(angular_reward(0.0, &cfg()), 5.0);
        assert_eq!(angular_reward(PI, &cfg()), -5.0);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_reward(1.3, 1.3, &cfg()).unwrap(), 2.0);
        assert_abs_diff_eq!(
            distance_reward(2.0, 1.0, &cfg()).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(distance_reward(0.01, 1.0, &cfg()).unwrap(), 256.0);
        assert!(distance_reward(0.0, 1.0, &cfg()).is_err());
        assert!(distance_reward(1.0, -1.0, &cfg()).is_err());
    }

    #[test]
    fn step_examples() {
        let r = |h, a, dc, dg| {
            step_reward(
                &RewardInputs {
                    heading_error: h,
                    action: a,
                    current_distance: dc,
                    initial_distance: dg,
                },
                &cfg(),
            )
            .unwrap()
        };
        assert_eq!(r(0.0, 2, 1.0, 1.0), 10.0);
        assert_abs_diff_eq!(r(FRAC_PI_2, 2, 0.7, 1.9), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r(FRAC_PI_2 + FRAC_PI_8, 3, 1.0, 1.0), 0.0, epsilon = 1e-12);
        assert_eq!(r(PI, 2, 1.0, 1.0), -10.0);
    }

    #[test]
    fn terminal_values() {
        assert_eq!(terminal_reward(Outcome::Goal, &cfg()), 200.0);
        assert_eq!(terminal_reward(Outcome::Collision, &cfg()), -200.0);
        assert_eq!(terminal_reward(Outcome::Timeout, &cfg()), -200.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = RewardConfig {
            timeout_reward: 1.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = RewardConfig {
            angle_scale: 0.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn outcome_strings() {
        for o in [Outcome::Goal, Outcome::Collision, Outcome::Timeout] {
            assert_eq!(o.as_str().parse::<Outcome>().unwrap(), o);
        }
    }

    proptest! {
        #[test]
        fn angular_is_symmetric(t in -PI..PI) {
            prop_assert_eq!(angular_reward(t, &cfg()), angular_reward(-t, &cfg()));
        }

        #[test]
        fn distance_decreases_below_cap(dg in 0.1f64..3.0, a in 0.05f64..5.0, b in 0.05f64..5.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(dg / lo < 8.0);
            prop_assert!(distance_reward(lo, dg, &cfg()).unwrap() > distance_reward(hi, dg, &cfg()).unwrap());
        }

        #[test]
        fn best_action_is_nearest_offset(h in -PI..PI, dc in 0.1f64..3.0, dg in 0.1f64..3.0) {
            let gaps: Vec<f64> = (0..NUM_ACTIONS)
                .map(|a| wrap_to_pi(h - action_offset(a).unwrap()).abs())
                .collect();
            let mut sorted = gaps.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted[1] - sorted[0] > 1e-9);
            let nearest = (0..NUM_ACTIONS).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).unwrap();
            let rewards: Vec<f64> = (0..NUM_ACTIONS)
                .map(|a| step_reward(&RewardInputs { heading_error: h, action: a, current_distance: dc, initial_distance: dg }, &cfg()).unwrap())
                .collect();
            let best = (0..NUM_ACTIONS).fold(0, |best, a| if rewards[a] > rewards[best] { a } else { best });
            prop_assert_eq!(best, nearest);
        }
    }
}
