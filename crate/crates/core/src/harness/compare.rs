use std::fmt::Write as _;

use super::{moving_average, train_many, EpisodeResult, RunConfig};
use crate::agent::TargetRule;
use crate::checkpoint::fmt_f64;
use crate::exec::Exec;
use crate::{Error, Result};

pub const COMPARISON_WINDOW: usize = 50;
/// Episodes averaged for the per-rule summary.
pub const SUMMARY_TAIL: usize = 100;
pub const COMPARISON_HEADER: &str =
    "episode,reward_vanilla,reward_double,movavg_vanilla,movavg_double";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub episode: u64,
    pub reward_vanilla: f64,
    pub reward_double: f64,
    pub movavg_vanilla: f64,
    pub movavg_double: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub vanilla: Vec<EpisodeResult>,
    pub double: Vec<EpisodeResult>,
    pub rows: Vec<ComparisonRow>,
    /// Mean reward over the last [`SUMMARY_TAIL`] episodes.
    pub final_mean_vanilla: f64,
    pub final_mean_double: f64,
}

impl Comparison {
    pub fn double_at_least_vanilla(&self) -> bool {
        self.final_mean_double >= self.final_mean_vanilla
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARISON_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.episode,
                fmt_f64(r.reward_vanilla),
                fmt_f64(r.reward_double),
                fmt_f64(r.movavg_vanilla),
                fmt_f64(r.movavg_double)
            );
        }
        out
    }
}

/// Mean of the last `tail` values (all of them if shorter).
pub(crate) fn tail_mean(xs: &[f64], tail: usize) -> f64 {
    let lo = xs.len().saturating_sub(tail);
    let slice = &xs[lo..];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Trains the same configuration under both target rules with identical seeds.
/// The arms write nothing to disk; the caller owns the outputs.
pub fn compare_rules(cfg: &RunConfig, exec: Exec) -> Result<Comparison> {
    let arm = |rule| RunConfig {
        rule,
        out_dir: None,
        ..cfg.clone()
    };
    let mut reports = train_many(
        vec![arm(TargetRule::VanillaMax), arm(TargetRule::DoubleQ)],
        exec,
    )
    .into_iter();
    let vanilla = reports.next().unwrap()?.results;
    let double = reports.next().unwrap()?.results;

    let rv: Vec<f64> = vanilla.iter().map(|r| r.total_reward).collect();
    let rd: Vec<f64> = double.iter().map(|r| r.total_reward).collect();
    let mv = moving_average(&rv, COMPARISON_WINDOW)?;
    let md = moving_average(&rd, COMPARISON_WINDOW)?;
    let rows = (0..rv.len())
        .map(|i| ComparisonRow {
            episode: vanilla[i].index,
            reward_vanilla: rv[i],
            reward_double: rd[i],
            movavg_vanilla: mv[i],
            movavg_double: md[i],
        })
        .collect();
    Ok(Comparison {
        final_mean_vanilla: tail_mean(&rv, SUMMARY_TAIL),
        final_mean_double: tail_mean(&rd, SUMMARY_TAIL),
        vanilla,
        double,
        rows,
    })
}

pub fn read_comparison_csv(text: &str) -> Result<Vec<ComparisonRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::invalid("empty CSV"))?;
    if header.trim() != COMPARISON_HEADER {
        return Err(Error::invalid(format!(
            "unexpected comparison header {header:?}"
        )));
    }
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(Error::invalid(format!("bad comparison row {line:?}")));
            }
            let f = |i: usize| {
                cells[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number {:?}", cells[i])))
            };
            Ok(ComparisonRow {
                episode: cells[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad episode {:?}", cells[0])))?,
                reward_vanilla: f(1)?,
                reward_double: f(2)?,
                movavg_vanilla: f(3)?,
                movavg_double: f(4)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_mean_examples() {
        assert_eq!(tail_mean(&[1.0, 2.0, 3.0], 2), 2.5);
        assert_eq!(tail_mean(&[1.0, 2.0, 3.0], 100), 2.0);
    }

    #[test]
    fn small_comparison_schema() {
        let cfg = RunConfig {
            episodes: 3,
            record_wall_time: false,
            ..RunConfig::desk_scale(7)
        };
        let c = compare_rules(&cfg, Exec::default()).unwrap();
        assert_eq!(c.rows.len(), 3);
        let parsed = read_comparison_csv(&c.to_csv()).unwrap();
        assert_eq!(parsed, c.rows);
        assert_eq!(parsed[0].movavg_vanilla, parsed[0].reward_vanilla);
        let again = compare_rules(&cfg, Exec::Sequential).unwrap();
        assert_eq!(again.to_csv(), c.to_csv());
    }
}
