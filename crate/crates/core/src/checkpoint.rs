//! Plain-text network checkpoints.
//!
//! ```text
//! arcpinn-checkpoint 1
//! scalar f64
//! activation gelu
//! topology 4 64 64 64 64 1
//! gain 1.48
//! t_ambient 25
//! delta_t 2000
//! extents 40 6 4 3
//! params 12865
//! <one value per line, flat layout: per layer W row-major then b>
//! ```
//!
//! Values use the shortest representation that parses back to the same bits,
//! so a write/read cycle is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::mlp::{MlpParams, OutputTransform};
use crate::real::Real;

const MAGIC: &str = "arcpinn-checkpoint";
const VERSION: u32 = 1;

/// Network parameters together with the output transform they were trained
/// with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub params: MlpParams<S>,
    pub transform: OutputTransform<S>,
}

impl<S: Real> Checkpoint<S> {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let t = &self.transform;
        let mut out = String::new();
        let join = |v: &[String]| v.join(" ");
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "scalar {}", S::NAME);
        let _ = writeln!(out, "activation {}", p.activation.name());
        let topo: Vec<String> = p.topology().iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "topology {}", join(&topo));
        let _ = writeln!(out, "gain {}", p.gain);
        let _ = writeln!(out, "t_ambient {}", t.t_ambient);
        let _ = writeln!(out, "delta_t {}", t.delta_t);
        let ext: Vec<String> = t.extents.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "extents {}", join(&ext));
        let _ = writeln!(out, "params {}", p.len());
        for v in p.values() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<Vec<String>> {
            let (n, line) = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(format!("line {}: expected `{key}`", n + 1)));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let version = header(MAGIC)?;
        if version != [VERSION.to_string()] {
            return Err(bad(format!("unsupported version {version:?}")));
        }
        let scalar = header("scalar")?;
        if scalar != [S::NAME] {
            return Err(bad(format!("file holds {scalar:?} values, reader expects {}", S::NAME)));
        }
        let act = header("activation")?;
        let activation = act
            .first()
            .and_then(|a| Activation::from_name(a))
            .ok_or_else(|| bad(format!("unknown activation {act:?}")))?;
        let topology: Vec<usize> = parse_all(&header("topology")?)?;
        let gain: f64 = one(&header("gain")?)?;
        let t_ambient: S = one(&header("t_ambient")?)?;
        let delta_t: S = one(&header("delta_t")?)?;
        let ext: Vec<S> = parse_all(&header("extents")?)?;
        let n: usize = one(&header("params")?)?;
        if ext.len() != 4 {
            return Err(bad("extents needs four values".to_string()));
        }
        let values: Vec<S> = lines
            .map(|(i, l)| l.trim().parse().map_err(|_| bad(format!("line {}: bad value `{l}`", i + 1))))
            .collect::<Result<_>>()?;
        if values.len() != n {
            return Err(bad(format!("expected {n} parameters, found {}", values.len())));
        }
        let mut params = MlpParams::from_values(&topology, activation, values)?;
        params.gain = gain;
        Ok(Self {
            params,
            transform: OutputTransform {
                t_ambient,
                delta_t,
                extents: [ext[0], ext[1], ext[2], ext[3]],
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Scalar name (`f32` or `f64`) recorded in a checkpoint file.
pub fn checkpoint_scalar(text: &str) -> Result<&str> {
    let mut lines = text.lines();
    if !lines.next().is_some_and(|l| l.starts_with(MAGIC)) {
        return Err(Error::Checkpoint("not a checkpoint file".to_string()));
    }
    lines
        .next()
        .and_then(|l| l.strip_prefix("scalar "))
        .map(str::trim)
        .ok_or_else(|| Error::Checkpoint("missing `scalar` line".to_string()))
}

fn parse_all<T: std::str::FromStr>(parts: &[String]) -> Result<Vec<T>> {
    parts
        .iter()
        .map(|p| p.parse().map_err(|_| Error::Checkpoint(format!("bad number `{p}`"))))
        .collect()
}

fn one<T: std::str::FromStr>(parts: &[String]) -> Result<T> {
    match parts {
        [p] => p.parse().map_err(|_| Error::Checkpoint(format!("bad number `{p}`"))),
        _ => Err(Error::Checkpoint(format!("expected one value, got {parts:?}"))),
    }
}
