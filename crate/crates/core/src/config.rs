//! `key = value` run configuration files.
//!
//! Hyperparameter keys: `episode_step target_update discount_factor
//! learning_rate epsilon epsilon_decay epsilon_min batch_size train_start
//! memory`. Run keys: `rule map episodes seed dt goal_reward collision_reward
//! timeout_reward angle_scale distance_exponent_cap normalize_state
//! checkpoint_every out_dir`. Unknown keys are rejected; missing keys keep
//! their defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::harness::RunConfig;
use crate::world::WorldMap;
use crate::{Error, Result};

pub const KEYS: [&str; 23] = [
    "episode_step",
    "target_update",
    "discount_factor",
    "learning_rate",
    "epsilon",
    "epsilon_decay",
    "epsilon_min",
    "batch_size",
    "train_start",
    "memory",
    "rule",
    "map",
    "episodes",
    "seed",
    "dt",
    "goal_reward",
    "collision_reward",
    "timeout_reward",
    "angle_scale",
    "distance_exponent_cap",
    "normalize_state",
    "checkpoint_every",
    "out_dir",
];

pub const EFFECTIVE_CONFIG: &str = "effective_config";

/// Splits config text into `(key, value)` pairs, rejecting unknown or repeated keys.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!(
                "line {}: unknown key `{key}`",
                n + 1
            )));
        }
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                n + 1
            )));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for `{key}`: {value:?}")))
}

/// Sets one key on `cfg`. `map` loads the named map file.
pub fn apply(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let h = &mut cfg.hyper;
    let r = &mut cfg.reward;
    match key {
        "episode_step" => h.episode_step = parse_value(key, value)?,
        "target_update" => h.target_update = parse_value(key, value)?,
        "discount_factor" => h.discount_factor = parse_value(key, value)?,
        "learning_rate" => h.learning_rate = parse_value(key, value)?,
        "epsilon" => h.epsilon = parse_value(key, value)?,
        "epsilon_decay" => h.epsilon_decay = parse_value(key, value)?,
        "epsilon_min" => h.epsilon_min = parse_value(key, value)?,
        "batch_size" => h.batch_size = parse_value(key, value)?,
        "train_start" => h.train_start = parse_value(key, value)?,
        "memory" => h.memory = parse_value(key, value)?,
        "rule" => cfg.rule = value.parse()?,
        "map" => {
            if value.is_empty() || value == "default" {
                cfg.map = WorldMap::default();
                cfg.map_path = None;
            } else {
                let path = PathBuf::from(value);
                cfg.map = WorldMap::load(&path)?;
                cfg.map_path = Some(path);
            }
        }
        "episodes" => cfg.episodes = parse_value(key, value)?,
        "seed" => cfg.seed = parse_value(key, value)?,
        "dt" => cfg.dt = parse_value(key, value)?,
        "goal_reward" => r.goal_reward = parse_value(key, value)?,
        "collision_reward" => r.collision_reward = parse_value(key, value)?,
        "timeout_reward" => r.timeout_reward = parse_value(key, value)?,
        "angle_scale" => r.angle_scale = parse_value(key, value)?,
        "distance_exponent_cap" => r.distance_exponent_cap = parse_value(key, value)?,
        "normalize_state" => cfg.normalize_state = parse_value(key, value)?,
        "checkpoint_every" => cfg.checkpoint_every = parse_value(key, value)?,
        "out_dir" => cfg.out_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
        other => return Err(Error::Config(format!("unknown key `{other}`"))),
    }
    Ok(())
}

/// Applies config text on top of `base`.
pub fn apply_text(base: RunConfig, text: &str) -> Result<RunConfig> {
    let mut cfg = base;
    for (k, v) in parse_pairs(text)? {
        apply(&mut cfg, &k, &v)?;
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    apply_text(RunConfig::default(), text)
}

/// Reads a config file; errors name the path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Every key with its effective value, in [`KEYS`] order.
pub fn effective_config(cfg: &RunConfig) -> String {
    let h = &cfg.hyper;
    let r = &cfg.reward;
    let map = cfg.map_path.as_ref().map_or_else(
        || "default".to_string(),
        |p| {
            std::fs::canonicalize(p)
                .unwrap_or_else(|_| p.clone())
                .display()
                .to_string()
        },
    );
    let out_dir = cfg
        .out_dir
        .as_ref()
        .map_or_else(String::new, |p| p.display().to_string());
    let values: [String; 23] = [
        h.episode_step.to_string(),
        h.target_update.to_string(),
        h.discount_factor.to_string(),
        h.learning_rate.to_string(),
        h.epsilon.to_string(),
        h.epsilon_decay.to_string(),
        h.epsilon_min.to_string(),
        h.batch_size.to_string(),
        h.train_start.to_string(),
        h.memory.to_string(),
        cfg.rule.to_string(),
        map,
        cfg.episodes.to_string(),
        cfg.seed.to_string(),
        cfg.dt.to_string(),
        r.goal_reward.to_string(),
        r.collision_reward.to_string(),
        r.timeout_reward.to_string(),
        r.angle_scale.to_string(),
        r.distance_exponent_cap.to_string(),
        cfg.normalize_state.to_string(),
        cfg.checkpoint_every.to_string(),
        out_dir,
    ];
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
