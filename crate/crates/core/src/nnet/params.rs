//! Named parameter sets and their checkpoint file format.
//!
//! Checkpoints are plain text:
//!
//! ```text
//! crowdtrack-params 1
//! meta <key> <value>
//! param <name> <rows> <cols>
//! <row values, space separated>
//! ...
//! end
//! ```
//!
//! `meta` lines come first, then one `param` block per tensor in
//! registration order. Every value is written with 17 significant digits
//! (`{:.16e}`), which is enough to reproduce each `f64` bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "crowdtrack-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, usize>,
    meta: BTreeMap<String, String>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Config(format!("invalid parameter name `{name}`")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.grads.push(Tensor::zeros(value.rows(), value.cols()));
        self.values.push(value);
        Ok(())
    }

    /// Registers a tensor drawn uniformly from `[-bound, bound]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<()> {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor::from_vec(rows, cols, data)?)
    }

    /// Registers a weight matrix with the `±sqrt(1 / fan_in)` initialisation.
    pub fn insert_fan_in<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<()> {
        self.insert_uniform(name, fan_in, fan_out, (1.0 / fan_in as f64).sqrt(), rng)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.grads[i])
    }

    pub(crate) fn value_at(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub(crate) fn value_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    pub(crate) fn grad_at(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }

    pub(crate) fn grad_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.grads[i]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for (name, t) in self.names.iter().zip(&self.values) {
            let _ = writeln!(s, "param {name} {} {}", t.rows(), t.cols());
            for r in 0..t.rows() {
                let line: Vec<String> = t.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_checkpoint_str(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (n, header) = lines.next().ok_or_else(|| err(1, "empty checkpoint".into()))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(CHECKPOINT_MAGIC) {
            return Err(err(n, "not a parameter checkpoint".into()));
        }
        match hp.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(CHECKPOINT_VERSION) => {}
            other => return Err(err(n, format!("unsupported checkpoint version {other:?}"))),
        }

        let mut params = Params::new();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| err(n, "meta without key".into()))?;
                    let value = parts.next().unwrap_or("");
                    params.set_meta(key, value);
                }
                Some("param") => {
                    let name = parts.next().ok_or_else(|| err(n, "param without name".into()))?;
                    let dims: Vec<usize> = parts
                        .next()
                        .unwrap_or("")
                        .split_whitespace()
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(n, format!("bad shape: {e}")))?;
                    let [rows, cols] = dims[..] else {
                        return Err(err(n, "param needs rows and cols".into()));
                    };
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rn, row) = lines.next().ok_or_else(|| err(n, "truncated param".into()))?;
                        let before = data.len();
                        for tok in row.split_whitespace() {
                            data.push(
                                tok.parse::<f64>()
                                    .map_err(|e| err(rn, format!("bad value `{tok}`: {e}")))?,
                            );
                        }
                        if data.len() - before != cols {
                            return Err(err(rn, format!("expected {cols} values")));
                        }
                    }
                    params
                        .insert(name, Tensor::from_vec(rows, cols, data)?)
                        .map_err(|e| err(n, e.to_string()))?;
                }
                Some("end") => {
                    ended = true;
                    break;
                }
                Some("") | None => {}
                Some(other) => return Err(err(n, format!("unexpected record `{other}`"))),
            }
        }
        if !ended {
            return Err(err(text.lines().count(), "missing `end`".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, &path.display().to_string())
    }
}
