//! Minimal SVG line charts for reward curves.

use std::fmt::Write as _;

use crate::harness::{moving_average, read_episode_csv, ComparisonRow, COMPARISON_WINDOW};
use crate::Result;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter().copied());
        let (x0, x1) = padded_range(all().map(|p| p.0));
        let (y0, y1) = padded_range(all().map(|p| p.1));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                px(xv),
                HEIGHT - BOTTOM + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                LEFT - 6.0,
                py(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-name="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                escape(&s.name),
                s.color,
                pts.join(" ")
            );
            if let [(x, y)] = s.points[..] {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{}"/>"#,
                    px(x),
                    py(y),
                    s.color
                );
            }
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{3}" stroke-width="2"/><text x="{4}" y="{5}" font-family="sans-serif" font-size="12">{6}</text>"#,
                LEFT + 10.0,
                ly,
                LEFT + 30.0,
                s.color,
                LEFT + 36.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Total reward and its moving average from an episode CSV.
pub fn episode_chart(csv_text: &str) -> Result<LineChart> {
    let rows = read_episode_csv(csv_text)?;
    let rewards: Vec<f64> = rows.iter().map(|r| r.total_reward).collect();
    let smooth = if rewards.is_empty() {
        Vec::new()
    } else {
        moving_average(&rewards, COMPARISON_WINDOW)?
    };
    let xs = rows.iter().map(|r| r.index as f64);
    Ok(LineChart {
        title: "Total reward per episode".into(),
        x_label: "episode".into(),
        y_label: "total reward".into(),
        series: vec![
            Series {
                name: "total_reward".into(),
                color: "#9ecae1",
                points: xs.clone().zip(rewards.iter().copied()).collect(),
            },
            Series {
                name: format!("moving average ({COMPARISON_WINDOW})"),
                color: "#08519c",
                points: xs.zip(smooth).collect(),
            },
        ],
    })
}

/// The two moving-average curves of a rule comparison.
pub fn comparison_chart(rows: &[ComparisonRow]) -> LineChart {
    let xs = || rows.iter().map(|r| r.episode as f64);
    LineChart {
        title: format!("DQN vs Double DQN, moving average ({COMPARISON_WINDOW})"),
        x_label: "episode".into(),
        y_label: "total reward".into(),
        series: vec![
            Series {
                name: "dqn".into(),
                color: "#d62728",
                points: xs().zip(rows.iter().map(|r| r.movavg_vanilla)).collect(),
            },
            Series {
                name: "ddqn".into(),
                color: "#1f77b4",
                points: xs().zip(rows.iter().map(|r| r.movavg_double)).collect(),
            },
        ],
    }
}
