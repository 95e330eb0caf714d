//! Long-range re-identification of lost tracklets.
//!
//! A lost tracklet is summarised by its last thirty observed locations, each
//! row `(t, x, y, w, h)`. Temporal convolutions with channel mixing, one
//! convolution across the attribute axis and pooling turn the window into a
//! trajectory feature. A candidate detection is described together with its
//! difference to the tracklet's last observed location. A small head scores
//! each (tracklet, detection) pair; confident pairs are matched greedily and
//! the occlusion gap is filled by correcting the recorded predictions with
//! the terminal prediction error, spread linearly over the gap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection, MIN_EXTENT};
use crate::interaction::FrameDims;
use crate::nnet::{Axis, Graph, Params, Pool, Tensor, Var};
use crate::trackstore::{Tracklet, WINDOW_LEN};

#[derive(Clone, Debug, PartialEq)]
pub struct RefindConfig {
    /// Feature width `D`.
    pub dim: usize,
    /// Channel widths of the temporal convolutions, ending in `dim`.
    pub time_channels: Vec<usize>,
    pub kappa: usize,
    pub window: usize,
    pub pool: Pool,
    /// Frame gaps are divided by this to land in `[0, 1]`.
    pub time_scale: f64,
}

impl Default for RefindConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            time_channels: vec![16, 32],
            kappa: 3,
            window: WINDOW_LEN,
            pool: Pool::Mean,
            time_scale: 120.0,
        }
    }
}

impl RefindConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa.is_multiple_of(2) {
            return Err(Error::Config(format!("kappa must be odd, got {}", self.kappa)));
        }
        if self.time_channels.last() != Some(&self.dim) {
            return Err(Error::Config("last temporal channel width must equal dim".into()));
        }
        if self.window == 0 || !(self.time_scale > 0.0) {
            return Err(Error::Config(format!("invalid refind config {self:?}")));
        }
        Ok(())
    }
}

/// Encodes one location as `(gap / time_scale, x/W, y/H, w/W, h/H)`.
pub fn encode_location(frame: u32, b: &BBox, current_frame: u32, dims: FrameDims, time_scale: f64) -> [f64; 5] {
    let gap = current_frame as f64 - frame as f64;
    let n = dims.normalize_box(b);
    [gap / time_scale, n[0], n[1], n[2], n[3]]
}

/// Windows of the lost tracklets, already normalised.
#[derive(Clone, Debug, PartialEq)]
pub struct LostWindowBatch {
    /// One `window x 5` tensor per tracklet.
    pub windows: Vec<Tensor>,
    pub tracklet_ids: Vec<u64>,
    /// Last observed `(frame, box)` per tracklet.
    pub last_alive: Vec<(u32, BBox)>,
}

impl LostWindowBatch {
    pub fn len(&self) -> usize {
        self.tracklet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklet_ids.is_empty()
    }

    pub fn from_tracklets<'a>(
        tracklets: impl IntoIterator<Item = &'a Tracklet>,
        current_frame: u32,
        dims: FrameDims,
        config: &RefindConfig,
    ) -> Result<Self> {
        let mut batch = Self {
            windows: Vec::new(),
            tracklet_ids: Vec::new(),
            last_alive: Vec::new(),
        };
        for t in tracklets {
            let window = t.history_window(config.window)?;
            batch.push_window(t.id, &window, current_frame, dims, config.time_scale)?;
        }
        Ok(batch)
    }

    /// Adds a window given as `(frame, box)` pairs, oldest first.
    pub fn push_window(
        &mut self,
        id: u64,
        window: &[(u32, BBox)],
        current_frame: u32,
        dims: FrameDims,
        time_scale: f64,
    ) -> Result<()> {
        let rows: Vec<[f64; 5]> = window
            .iter()
            .map(|(f, b)| encode_location(*f, b, current_frame, dims, time_scale))
            .collect();
        let last = *window
            .last()
            .ok_or_else(|| Error::Data(format!("empty window for tracklet {id}")))?;
        self.windows.push(Tensor::from_rows(&rows)?);
        self.tracklet_ids.push(id);
        self.last_alive.push(last);
        Ok(())
    }
}

/// Unmatched detections of the current frame, already normalised.
#[derive(Clone, Debug, PartialEq)]
pub struct RestDetBatch {
    pub dets: Vec<[f64; 5]>,
    /// Index of each row in the frame's detection list.
    pub det_refs: Vec<usize>,
}

impl RestDetBatch {
    pub fn new(dets: &[(usize, Detection)], dims: FrameDims, time_scale: f64) -> Self {
        Self {
            dets: dets
                .iter()
                .map(|(_, d)| encode_location(d.frame, &d.bbox, d.frame, dims, time_scale))
                .collect(),
            det_refs: dets.iter().map(|(i, _)| *i).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dets.is_empty()
    }
}

/// Concatenation of a detection row and its difference to the last observed
/// location of the tracklet (the last window row).
pub fn pair_input(det: &[f64; 5], window: &Tensor) -> [f64; 10] {
    let last = window.row(window.rows() - 1);
    let mut out = [0.0; 10];
    out[..5].copy_from_slice(det);
    for k in 0..5 {
        out[5 + k] = det[k] - last[k];
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationResult {
    pub scores: Tensor,
    /// `(tracklet id, detection index, score)`.
    pub matches: Vec<(u64, usize, f64)>,
}

const P: &str = "refind";

fn pname(suffix: &str) -> String {
    format!("{P}.{suffix}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefindModel {
    pub config: RefindConfig,
    pub params: Params,
}

impl RefindModel {
    pub fn new(config: RefindConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        let mut c_in = 5;
        for (l, &c_out) in config.time_channels.iter().enumerate() {
            p.insert_fan_in(&pname(&format!("time.{l}.w")), config.kappa * c_in, c_out, &mut rng)?;
            p.insert(&pname(&format!("time.{l}.b")), Tensor::zeros(1, c_out))?;
            p.insert(&pname(&format!("time.{l}.slope")), Tensor::scalar(0.25))?;
            c_in = c_out;
        }
        let d = config.dim;
        p.insert_uniform(
            &pname("attr.kernel"),
            1,
            config.kappa,
            (1.0 / config.kappa as f64).sqrt(),
            &mut rng,
        )?;
        p.insert(&pname("attr.slope"), Tensor::scalar(0.25))?;
        p.insert_fan_in(&pname("det.w"), 10, d, &mut rng)?;
        p.insert(&pname("det.b"), Tensor::zeros(1, d))?;
        p.insert_fan_in(&pname("head.0.w"), 2 * d, d, &mut rng)?;
        p.insert(&pname("head.0.b"), Tensor::zeros(1, d))?;
        p.insert(&pname("head.slope"), Tensor::scalar(0.25))?;
        p.insert_fan_in(&pname("head.1.w"), d, 1, &mut rng)?;
        p.insert(&pname("head.1.b"), Tensor::zeros(1, 1))?;
        let mut model = Self { config, params: p };
        model.write_meta();
        Ok(model)
    }

    fn write_meta(&mut self) {
        let c = self.config.clone();
        let channels: Vec<String> = c.time_channels.iter().map(|v| v.to_string()).collect();
        self.params.set_meta("module", "refind");
        self.params.set_meta("dim", c.dim);
        self.params.set_meta("time_channels", channels.join(","));
        self.params.set_meta("kappa", c.kappa);
        self.params.set_meta("window", c.window);
        self.params.set_meta("pool", c.pool.name());
        self.params.set_meta("time_scale", format!("{:.17e}", c.time_scale));
    }

    pub fn set_time_scale(&mut self, time_scale: f64) {
        self.config.time_scale = time_scale;
        self.write_meta();
    }

    pub fn from_params(params: Params) -> Result<Self> {
        if params.meta_value("module") != Some("refind") {
            return Err(Error::Config("checkpoint is not a refind model".into()));
        }
        let get = |k: &str| {
            params
                .meta_value(k)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks meta `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad meta `{k}`")))
        };
        let time_channels = get("time_channels")?
            .split(',')
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config("bad meta `time_channels`".into()))?;
        let config = RefindConfig {
            dim: num("dim")? as usize,
            time_channels,
            kappa: num("kappa")? as usize,
            window: num("window")? as usize,
            pool: Pool::parse(get("pool")?).ok_or_else(|| Error::Config("bad meta `pool`".into()))?,
            time_scale: num("time_scale")?,
        };
        config.validate()?;
        let reference = Self::new(config.clone(), 0)?;
        for name in reference.params.names() {
            if params.get(name).map(Tensor::shape) != reference.params.get(name).map(Tensor::shape) {
                return Err(Error::Config(format!(
                    "checkpoint parameter `{name}` missing or misshapen"
                )));
            }
        }
        Ok(Self { config, params })
    }

    /// Trajectory features, one `1 x D` row per window stacked to `S x D`.
    pub fn traj_features(&self, g: &mut Graph, params: &Params, windows: &[Tensor]) -> Result<Var> {
        let c = &self.config;
        let mut rows = Vec::with_capacity(windows.len());
        for w in windows {
            if w.shape() != (c.window, 5) {
                return Err(Error::shape("traj_features", format!("window {:?}", w.shape())));
            }
            let mut x = g.constant(w.clone());
            for l in 0..c.time_channels.len() {
                let unfolded = g.unfold_rows(x, c.kappa)?;
                let wt = g.param(params, &pname(&format!("time.{l}.w")))?;
                let bt = g.param(params, &pname(&format!("time.{l}.b")))?;
                let st = g.param(params, &pname(&format!("time.{l}.slope")))?;
                let y = g.linear(unfolded, wt, bt)?;
                x = g.prelu(y, st)?;
            }
            let k = g.param(params, &pname("attr.kernel"))?;
            let sa = g.param(params, &pname("attr.slope"))?;
            let y = g.conv(x, k, Axis::Cols)?;
            let y = g.prelu(y, sa)?;
            rows.push(c.pool.apply(g, y)?);
        }
        if rows.is_empty() {
            return Ok(g.constant(Tensor::zeros(0, c.dim)));
        }
        g.concat_rows(&rows)
    }

    /// Pair features from `P x 10` pair inputs.
    pub fn det_features(&self, g: &mut Graph, params: &Params, pairs: &Tensor) -> Result<Var> {
        if pairs.cols() != 10 {
            return Err(Error::shape("det_features", format!("{:?}", pairs.shape())));
        }
        let x = g.constant(pairs.clone());
        let w = g.param(params, &pname("det.w"))?;
        let b = g.param(params, &pname("det.b"))?;
        g.linear(x, w, b)
    }

    /// Scores (`P x 1`, in `(0, 1)`) for pairs `(traj row pair_rows[p], dete row p)`.
    pub fn correlate(&self, g: &mut Graph, params: &Params, traj: Var, dete: Var, pair_rows: &[usize]) -> Result<Var> {
        let gathered = g.gather_rows(traj, pair_rows)?;
        let f = g.concat_cols(gathered, dete)?;
        let w0 = g.param(params, &pname("head.0.w"))?;
        let b0 = g.param(params, &pname("head.0.b"))?;
        let s = g.param(params, &pname("head.slope"))?;
        let h = g.linear(f, w0, b0)?;
        let h = g.prelu(h, s)?;
        let w1 = g.param(params, &pname("head.1.w"))?;
        let b1 = g.param(params, &pname("head.1.b"))?;
        let logit = g.linear(h, w1, b1)?;
        Ok(g.sigmoid(logit))
    }

    /// Full forward pass for explicit pairs `(window index, detection row)`.
    pub fn forward_pairs(
        &self,
        g: &mut Graph,
        params: &Params,
        windows: &[Tensor],
        pairs: &[(usize, [f64; 5])],
    ) -> Result<Var> {
        let traj = self.traj_features(g, params, windows)?;
        let rows: Vec<[f64; 10]> = pairs.iter().map(|(w, d)| pair_input(d, &windows[*w])).collect();
        let dete = self.det_features(g, params, &Tensor::from_rows(&rows)?)?;
        let idx: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        self.correlate(g, params, traj, dete, &idx)
    }

    /// `S x U` correlation scores.
    pub fn score_matrix(&self, lost: &LostWindowBatch, dets: &RestDetBatch) -> Result<Tensor> {
        let (s, u) = (lost.len(), dets.len());
        if s == 0 || u == 0 {
            return Ok(Tensor::zeros(s, u));
        }
        let pairs: Vec<(usize, [f64; 5])> = (0..s).flat_map(|i| dets.dets.iter().map(move |d| (i, *d))).collect();
        let mut g = Graph::new();
        let scores = self.forward_pairs(&mut g, &self.params, &lost.windows, &pairs)?;
        Tensor::from_vec(s, u, g.value(scores).data().to_vec())
    }

    /// Scores all pairs and keeps greedy matches at or above `threshold`.
    pub fn correlate_and_match(
        &self,
        lost: &LostWindowBatch,
        dets: &RestDetBatch,
        threshold: f64,
    ) -> Result<CorrelationResult> {
        let scores = self.score_matrix(lost, dets)?;
        let matches = greedy_match(&scores, threshold)
            .into_iter()
            .map(|m| (lost.tracklet_ids[m.row], dets.det_refs[m.col], m.score))
            .collect();
        Ok(CorrelationResult { scores, matches })
    }
}

/// Repeatedly takes the largest remaining score that reaches `threshold`,
/// removing its row and column. Ties go to the lower row, then lower column.
pub fn greedy_match(scores: &Tensor, threshold: f64) -> Vec<Match> {
    let mut cand: Vec<Match> = (0..scores.rows())
        .flat_map(|r| (0..scores.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| scores.get(r, c) >= threshold)
        .map(|(row, col)| Match {
            row,
            col,
            score: scores.get(row, col),
        })
        .collect();
    cand.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.row.cmp(&b.row))
            .then(a.col.cmp(&b.col))
    });
    let mut row_used = vec![false; scores.rows()];
    let mut col_used = vec![false; scores.cols()];
    let mut out = Vec::new();
    for m in cand {
        if !row_used[m.row] && !col_used[m.col] {
            row_used[m.row] = true;
            col_used[m.col] = true;
            out.push(m);
        }
    }
    out
}

/// Corrects occlusion-period predictions: every prediction at frame `tp`
/// moves by `(d - p_end) * (tp - t1) / (t2 - t1)`, where `t1` is the last
/// observed frame, `t2` the frame of the matched detection `d` and `p_end`
/// the prediction made for `t2`.
pub fn compensate(predictions: &[(u32, BBox)], t1: u32, t2: u32, p_end: &BBox, d: &BBox) -> Vec<(u32, BBox)> {
    let err = [d.x - p_end.x, d.y - p_end.y, d.w - p_end.w, d.h - p_end.h];
    let span = (t2 - t1) as f64;
    predictions
        .iter()
        .map(|(tp, p)| {
            let f = (*tp as f64 - t1 as f64) / span;
            let b = BBox::new(
                p.x + err[0] * f,
                p.y + err[1] * f,
                (p.w + err[2] * f).max(MIN_EXTENT),
                (p.h + err[3] * f).max(MIN_EXTENT),
            );
            (*tp, b)
        })
        .collect()
}

/// Backfills a lost tracklet matched to `det`, then appends `det` and marks
/// it alive. `predicted_at_det` is the motion prediction for `det.frame`.
/// Returns the corrected boxes of the occlusion gap.
pub fn error_compensate(tracklet: &mut Tracklet, det: &Detection, predicted_at_det: &BBox) -> Result<Vec<(u32, BBox)>> {
    let preds = tracklet.occlusion_predictions();
    if preds.is_empty() {
        tracklet.update_alive(det)?;
        return Ok(Vec::new());
    }
    if !tracklet.is_lost() {
        return Err(Error::Contract(format!("tracklet {} is not lost", tracklet.id)));
    }
    let t2 = det.frame;
    let t1 = preds[0].0 - 1;
    if preds.last().map(|p| p.0 + 1) != Some(t2) {
        return Err(Error::Contract(format!(
            "tracklet {}: predictions do not reach frame {}",
            tracklet.id,
            t2 - 1
        )));
    }
    let corrected = compensate(&preds, t1, t2, predicted_at_det, &det.bbox);
    tracklet.replace_predictions(&corrected)?;
    tracklet.update_alive(det)?;
    Ok(corrected)
}
