//! Plain-text checkpoints.
//!
//! ```text
//! ddqn-nav-checkpoint
//! schema 1
//! layers 26 64 64 5
//! seed 42
//! episodes 300
//! global_step 51234
//! epsilon 5.0000000000000003e-2
//! optimizer_steps 51234
//! params 0 weights          # one line per output row, `inputs` values each
//! ...
//! params 0 bias             # one line, `outputs` values
//! ...
//! moments 0 weights         # RMSProp mean squares, same layout
//! ...
//! end
//! ```
//!
//! Every float is written with 17 significant digits, so parsing the text
//! reproduces the original bits.

use std::fmt::Write as _;
use std::path::Path;

use crate::net::{Layer, NetworkParams, NetworkSpec, OptimizerState};
use crate::{Error, Result};

pub const MAGIC: &str = "ddqn-nav-checkpoint";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub episodes: u64,
    pub global_step: u64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub optimizer: OptimizerState,
    pub meta: CheckpointMeta,
}

/// Formats with 17 significant digits (one before the point, sixteen after).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let spec = self.params.spec();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "schema {SCHEMA_VERSION}");
        let sizes: Vec<String> = spec.layer_sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "layers {}", sizes.join(" "));
        let _ = writeln!(out, "seed {}", self.meta.seed);
        let _ = writeln!(out, "episodes {}", self.meta.episodes);
        let _ = writeln!(out, "global_step {}", self.meta.global_step);
        let _ = writeln!(out, "epsilon {}", fmt_f64(self.meta.epsilon));
        let _ = writeln!(out, "optimizer_steps {}", self.optimizer.steps);
        write_block(&mut out, "params", &self.params);
        write_block(&mut out, "moments", &self.optimizer.mean_sq);
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Schema(format!("unexpected end of file, expected {what}")))
        };
        if next("magic")? != MAGIC {
            return Err(Error::Schema("not a checkpoint file".into()));
        }
        let version: u32 = field(next("schema")?, "schema")?;
        if version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema version {version}, expected {SCHEMA_VERSION}"
            )));
        }
        let sizes = next("layers")?
            .strip_prefix("layers ")
            .ok_or_else(|| Error::Schema("expected `layers`".into()))?
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::Schema(format!("bad layer size {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = NetworkSpec { layer_sizes: sizes };
        spec.validate()
            .map_err(|e| Error::Schema(format!("bad layer sizes: {e}")))?;
        let meta = CheckpointMeta {
            seed: field(next("seed")?, "seed")?,
            episodes: field(next("episodes")?, "episodes")?,
            global_step: field(next("global_step")?, "global_step")?,
            epsilon: field(next("epsilon")?, "epsilon")?,
        };
        let opt_steps: u64 = field(next("optimizer_steps")?, "optimizer_steps")?;
        let params = read_block(&mut next, "params", &spec)?;
        let mean_sq = read_block(&mut next, "moments", &spec)?;
        if next("end")? != "end" {
            return Err(Error::Schema("missing `end` trailer".into()));
        }
        Ok(Checkpoint {
            params,
            optimizer: OptimizerState {
                mean_sq,
                steps: opt_steps,
            },
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Loads and checks that the stored network matches `spec`.
    pub fn load_for(path: impl AsRef<Path>, spec: &NetworkSpec) -> Result<Self> {
        let ckpt = Self::load(path)?;
        let stored = ckpt.params.spec();
        if &stored != spec {
            return Err(Error::Shape(format!(
                "checkpoint layers {:?} do not match {:?}",
                stored.layer_sizes, spec.layer_sizes
            )));
        }
        Ok(ckpt)
    }
}

fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Schema(format!("expected `{key}`, found {line:?}")))?;
    rest.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("bad value for `{key}`: {rest:?}")))
}

fn write_block(out: &mut String, tag: &str, params: &NetworkParams) {
    for (i, layer) in params.layers.iter().enumerate() {
        let _ = writeln!(out, "{tag} {i} weights");
        for row in layer.weights.chunks_exact(layer.inputs) {
            write_row(out, row);
        }
        let _ = writeln!(out, "{tag} {i} bias");
        write_row(out, &layer.bias);
    }
}

fn write_row(out: &mut String, row: &[f64]) {
    let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

fn read_block<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    tag: &str,
    spec: &NetworkSpec,
) -> Result<NetworkParams> {
    let mut layers = Vec::new();
    for (i, w) in spec.layer_sizes.windows(2).enumerate() {
        let (inputs, outputs) = (w[0], w[1]);
        let mut layer = Layer::zeros(inputs, outputs);
        expect(next(tag)?, &format!("{tag} {i} weights"))?;
        for r in 0..outputs {
            let row = parse_row(next("weight row")?, inputs)?;
            layer.weights[r * inputs..(r + 1) * inputs].copy_from_slice(&row);
        }
        expect(next(tag)?, &format!("{tag} {i} bias"))?;
        layer.bias = parse_row(next("bias row")?, outputs)?;
        layers.push(layer);
    }
    Ok(NetworkParams { layers })
}

fn expect(line: &str, want: &str) -> Result<()> {
    if line == want {
        Ok(())
    } else {
        Err(Error::Schema(format!("expected `{want}`, found {line:?}")))
    }
}

fn parse_row(line: &str, len: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Schema(format!("bad number {t:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if row.len() != len {
        return Err(Error::Schema(format!(
            "row has {} values, expected {len}",
            row.len()
        )));
    }
    Ok(row)
}
