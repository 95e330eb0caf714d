//! Interaction-aware one-step motion prediction.
//!
//! Every non-dead tracklet contributes one row: its box at `t-1` and its
//! offset from `t-2` to `t-1`. Self-attention over the rows yields a dense
//! influence matrix; a cascade of asymmetric convolutions over that matrix
//! decides which influences are significant (the mask); the surviving
//! attention weights, row-normalised, fuse the offsets of influencing
//! tracklets, and a small MLP turns the fused offsets into per-tracklet
//! predictions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{apply_offset, BBox, Offset};
use crate::nnet::{sigmoid, Axis, Graph, Params, Tensor, Var};
use crate::trackstore::TrackStore;

/// Frame size used to normalise pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameDims {
    pub width: f64,
    pub height: f64,
}

impl FrameDims {
    pub const fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn normalize_box(&self, b: &BBox) -> [f64; 4] {
        [b.x / self.width, b.y / self.height, b.w / self.width, b.h / self.height]
    }

    pub fn denormalize_box(&self, v: &[f64]) -> BBox {
        BBox::new(
            v[0] * self.width,
            v[1] * self.height,
            v[2] * self.width,
            v[3] * self.height,
        )
    }

    pub fn normalize_offset(&self, o: &Offset) -> [f64; 4] {
        [
            o.dx / self.width,
            o.dy / self.height,
            o.dw / self.width,
            o.dh / self.height,
        ]
    }

    pub fn denormalize_offset(&self, v: &[f64]) -> Offset {
        Offset::new(
            v[0] * self.width,
            v[1] * self.height,
            v[2] * self.width,
            v[3] * self.height,
        )
    }
}

impl Default for FrameDims {
    fn default() -> Self {
        Self::new(1920.0, 1080.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionConfig {
    /// Embedding width `D`.
    pub dim: usize,
    /// Kernel length of the asymmetric convolutions.
    pub kappa: usize,
    /// Number of convolution layers in the mask cascade.
    pub layers: usize,
    /// Mask threshold on the sigmoid of the cascade output.
    pub xi: f64,
    /// Normalised offsets are multiplied by this before entering the network
    /// and predicted offsets are divided by it on the way out.
    pub offset_scale: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            kappa: 3,
            layers: 2,
            xi: 0.6,
            offset_scale: 100.0,
        }
    }
}

impl InteractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa.is_multiple_of(2) {
            return Err(Error::Config(format!("kappa must be odd, got {}", self.kappa)));
        }
        if self.dim == 0 || !(0.0..=1.0).contains(&self.xi) || !(self.offset_scale > 0.0) {
            return Err(Error::Config(format!("invalid interaction config {self:?}")));
        }
        Ok(())
    }
}

/// The `M x 8` network input plus the bookkeeping to map outputs back.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionInput {
    /// Normalised box at `t-1` followed by the scaled normalised offset.
    pub features: Tensor,
    /// Scaled normalised offsets (`M x 4`), the right-hand side of the fusion.
    pub offsets: Tensor,
    /// Pixel boxes at `t-1`.
    pub prev_boxes: Vec<BBox>,
    pub row_ids: Vec<u64>,
    pub dims: FrameDims,
}

impl InteractionInput {
    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    /// Builds the input from per-row `(box at t-1, offset t-2 -> t-1)` pairs.
    pub fn from_rows(rows: &[(u64, BBox, Offset)], dims: FrameDims, offset_scale: f64) -> Result<Self> {
        let mut ids: Vec<u64> = rows.iter().map(|r| r.0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != rows.len() {
            return Err(Error::Data("duplicate row ids in interaction input".into()));
        }
        let mut features = Tensor::zeros(rows.len(), 8);
        let mut offsets = Tensor::zeros(rows.len(), 4);
        for (i, (_, b, o)) in rows.iter().enumerate() {
            let nb = dims.normalize_box(b);
            let no = dims.normalize_offset(o).map(|v| v * offset_scale);
            features.row_mut(i)[..4].copy_from_slice(&nb);
            features.row_mut(i)[4..].copy_from_slice(&no);
            offsets.row_mut(i).copy_from_slice(&no);
        }
        Ok(Self {
            features,
            offsets,
            prev_boxes: rows.iter().map(|r| r.1).collect(),
            row_ids: rows.iter().map(|r| r.0).collect(),
            dims,
        })
    }

    /// Normalised `t-1` boxes, `M x 4`.
    pub fn prev_normalized(&self) -> Tensor {
        let mut t = Tensor::zeros(self.len(), 4);
        for (i, b) in self.prev_boxes.iter().enumerate() {
            t.row_mut(i).copy_from_slice(&self.dims.normalize_box(b));
        }
        t
    }
}

/// One row per non-dead tracklet (alive and lost), in id order. Tracklets
/// with a single history entry get a zero offset.
pub fn build_input(store: &TrackStore, dims: FrameDims, offset_scale: f64) -> Result<InteractionInput> {
    let rows: Vec<(u64, BBox, Offset)> = store.iter().map(|t| (t.id, t.newest().bbox, t.last_offset)).collect();
    InteractionInput::from_rows(&rows, dims, offset_scale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrices {
    pub attention: Tensor,
    pub cascade: Tensor,
    pub mask: Tensor,
    pub adjacency: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Pixel offsets from the `t-1` boxes.
    pub offsets: Vec<Offset>,
    pub boxes: Vec<BBox>,
    /// Rows whose composed box had to be clamped.
    pub clamped: Vec<bool>,
}

impl Prediction {
    pub fn empty() -> Self {
        Self {
            offsets: Vec::new(),
            boxes: Vec::new(),
            clamped: Vec::new(),
        }
    }
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub attention: Var,
    pub cascade: Var,
    pub adjacency: Var,
    /// Scaled normalised offsets, `M x 4`.
    pub offsets: Var,
    /// Normalised predicted boxes at `t`, `M x 4`.
    pub coords: Var,
}

const P: &str = "intr";

fn pname(suffix: &str) -> String {
    format!("{P}.{suffix}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionModel {
    pub config: InteractionConfig,
    pub params: Params,
}

impl InteractionModel {
    /// Freshly initialised weights: fan-in uniform for linear maps, centre-tap
    /// kernels for the mask cascade, near-zero output layer.
    pub fn new(config: InteractionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let mut p = Params::new();
        p.insert_fan_in(&pname("embed.w"), 8, d, &mut rng)?;
        p.insert(&pname("embed.b"), Tensor::zeros(1, d))?;
        p.insert_fan_in(&pname("query.w"), d, d, &mut rng)?;
        p.insert(&pname("query.b"), Tensor::zeros(1, d))?;
        p.insert_fan_in(&pname("key.w"), d, d, &mut rng)?;
        p.insert(&pname("key.b"), Tensor::zeros(1, d))?;
        let mut centre = Tensor::zeros(1, config.kappa);
        centre.set(0, config.kappa / 2, 1.0);
        for l in 0..config.layers {
            p.insert(&pname(&format!("cascade.{l}.row")), centre.clone())?;
            p.insert(&pname(&format!("cascade.{l}.col")), centre.clone())?;
            p.insert(&pname(&format!("cascade.{l}.slope")), Tensor::scalar(0.25))?;
        }
        p.insert_fan_in(&pname("graph.w"), 4, d, &mut rng)?;
        p.insert(&pname("graph.b"), Tensor::zeros(1, d))?;
        p.insert(&pname("graph.slope"), Tensor::scalar(0.25))?;
        p.insert_fan_in(&pname("mlp.0.w"), d, d, &mut rng)?;
        p.insert(&pname("mlp.0.b"), Tensor::zeros(1, d))?;
        p.insert(&pname("mlp.slope"), Tensor::scalar(0.25))?;
        p.insert_uniform(&pname("mlp.1.w"), d, 4, 1e-2, &mut rng)?;
        p.insert(&pname("mlp.1.b"), Tensor::zeros(1, 4))?;
        let mut model = Self { config, params: p };
        model.write_meta();
        Ok(model)
    }

    fn write_meta(&mut self) {
        let c = self.config.clone();
        self.params.set_meta("module", "interaction");
        self.params.set_meta("dim", c.dim);
        self.params.set_meta("kappa", c.kappa);
        self.params.set_meta("layers", c.layers);
        self.params.set_meta("xi", format!("{:.17e}", c.xi));
        self.params.set_meta("offset_scale", format!("{:.17e}", c.offset_scale));
    }

    /// Rebuilds a model from checkpointed parameters.
    pub fn from_params(params: Params) -> Result<Self> {
        if params.meta_value("module") != Some("interaction") {
            return Err(Error::Config("checkpoint is not an interaction model".into()));
        }
        let num = |k: &str| -> Result<f64> {
            params
                .meta_value(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("checkpoint lacks meta `{k}`")))
        };
        let config = InteractionConfig {
            dim: num("dim")? as usize,
            kappa: num("kappa")? as usize,
            layers: num("layers")? as usize,
            xi: num("xi")?,
            offset_scale: num("offset_scale")?,
        };
        config.validate()?;
        let reference = Self::new(config.clone(), 0)?;
        for name in reference.params.names() {
            let want = reference.params.get(name).map(Tensor::shape);
            if params.get(name).map(Tensor::shape) != want {
                return Err(Error::Config(format!(
                    "checkpoint parameter `{name}` missing or misshapen"
                )));
            }
        }
        Ok(Self { config, params })
    }

    /// Builds the forward pass on `g`, reading weights from `params` (which
    /// may differ from `self.params`, e.g. during gradient checks).
    pub fn forward(&self, g: &mut Graph, params: &Params, input: &InteractionInput) -> Result<(ForwardVars, Tensor)> {
        if input.is_empty() {
            return Err(Error::Data("interaction forward on an empty input".into()));
        }
        let c = &self.config;
        let w = |g: &mut Graph, s: &str| g.param(params, &pname(s));

        let x = g.constant(input.features.clone());
        let (we, be) = (w(g, "embed.w")?, w(g, "embed.b")?);
        let e = g.linear(x, we, be)?;
        let (wq, bq) = (w(g, "query.w")?, w(g, "query.b")?);
        let q = g.linear(e, wq, bq)?;
        let (wk, bk) = (w(g, "key.w")?, w(g, "key.b")?);
        let k = g.linear(e, wk, bk)?;
        let kt = g.transpose(k);
        let logits = g.matmul(q, kt)?;
        let attention = g.softmax_rows(logits, (c.dim as f64).sqrt())?;

        let mut a = attention;
        for l in 0..c.layers {
            let kr = w(g, &format!("cascade.{l}.row"))?;
            let kc = w(g, &format!("cascade.{l}.col"))?;
            let slope = w(g, &format!("cascade.{l}.slope"))?;
            let along_cols = g.conv(a, kr, Axis::Cols)?;
            let along_rows = g.conv(a, kc, Axis::Rows)?;
            let s = g.add(along_cols, along_rows)?;
            a = g.prelu(s, slope)?;
        }
        let cascade = a;

        let mask = significance_mask(g.value(cascade), c.xi);
        let mask_var = g.constant(mask.clone());
        let kept = g.mul(attention, mask_var)?;
        let adjacency = g.row_normalize(kept)?;

        let o = g.constant(input.offsets.clone());
        let fused = g.matmul(adjacency, o)?;
        let (wg, bg, sg) = (w(g, "graph.w")?, w(g, "graph.b")?, w(g, "graph.slope")?);
        let h = g.linear(fused, wg, bg)?;
        let h = g.prelu(h, sg)?;
        let (w0, b0, sm) = (w(g, "mlp.0.w")?, w(g, "mlp.0.b")?, w(g, "mlp.slope")?);
        let h = g.linear(h, w0, b0)?;
        let h = g.prelu(h, sm)?;
        let (w1, b1) = (w(g, "mlp.1.w")?, w(g, "mlp.1.b")?);
        let offsets = g.linear(h, w1, b1)?;

        let step = g.affine(offsets, 1.0 / c.offset_scale, 0.0);
        let prev = g.constant(input.prev_normalized());
        let coords = g.add(prev, step)?;
        Ok((
            ForwardVars {
                attention,
                cascade,
                adjacency,
                offsets,
                coords,
            },
            mask,
        ))
    }

    /// Runs the module and returns the interaction matrices and the
    /// per-row predictions for frame `t`.
    pub fn infer(&self, input: &InteractionInput) -> Result<(InteractionMatrices, Prediction)> {
        if input.is_empty() {
            let empty = Tensor::zeros(0, 0);
            return Ok((
                InteractionMatrices {
                    attention: empty.clone(),
                    cascade: empty.clone(),
                    mask: empty.clone(),
                    adjacency: empty,
                },
                Prediction::empty(),
            ));
        }
        let mut g = Graph::new();
        let (vars, mask) = self.forward(&mut g, &self.params, input)?;
        let matrices = InteractionMatrices {
            attention: g.value(vars.attention).clone(),
            cascade: g.value(vars.cascade).clone(),
            mask,
            adjacency: g.value(vars.adjacency).clone(),
        };
        let pred = self.compose(input, g.value(vars.offsets));
        Ok((matrices, pred))
    }

    /// Turns scaled normalised offsets into pixel offsets and boxes.
    pub fn compose(&self, input: &InteractionInput, offsets: &Tensor) -> Prediction {
        let mut pred = Prediction::empty();
        for (i, prev) in input.prev_boxes.iter().enumerate() {
            let scaled: Vec<f64> = offsets.row(i).iter().map(|v| v / self.config.offset_scale).collect();
            let o = input.dims.denormalize_offset(&scaled);
            let (b, clamped) = apply_offset(prev, &o);
            pred.offsets.push(o);
            pred.boxes.push(b);
            pred.clamped.push(clamped);
        }
        pred
    }

    /// Predicts frame-`t` boxes for every non-dead tracklet in `store`.
    pub fn predict_store(&self, store: &TrackStore, dims: FrameDims) -> Result<(Vec<u64>, Prediction)> {
        let input = build_input(store, dims, self.config.offset_scale)?;
        let (_, pred) = self.infer(&input)?;
        Ok((input.row_ids, pred))
    }
}

/// `1` where `sigmoid(cascade) > xi` (strictly), `0` elsewhere; the diagonal
/// is always kept.
pub fn significance_mask(cascade: &Tensor, xi: f64) -> Tensor {
    let mut m = cascade.map(|v| if sigmoid(v) > xi { 1.0 } else { 0.0 });
    for i in 0..m.rows().min(m.cols()) {
        m.set(i, i, 1.0);
    }
    m
}
