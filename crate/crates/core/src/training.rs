//! Losses, sample construction and training loops for both learned modules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evalio::mot::MotRow;
use crate::geometry::{iou, offset_between, BBox};
use crate::interaction::{FrameDims, InteractionInput, InteractionModel};
use crate::kalman::KfState;
use crate::nnet::{grad_check, Adam, GradCheckReport, Graph, Params, Sgd, Tensor, Var};
use crate::refind::{encode_location, RefindModel};

/// Ground truth per identity: frame -> box.
pub type Trajectories = BTreeMap<u64, BTreeMap<u32, BBox>>;

/// Scored ground-truth rows grouped by id (ids must be positive).
pub fn trajectories_from_rows(rows: &[MotRow]) -> Result<Trajectories> {
    let mut out: Trajectories = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_scored_gt()) {
        if r.id < 1 {
            return Err(Error::Data(format!(
                "ground truth row at frame {} has id {}",
                r.frame, r.id
            )));
        }
        out.entry(r.id as u64).or_default().insert(r.frame, r.bbox());
    }
    Ok(out)
}

/// `mean(1 - IoU^2)` over rows of predicted (`M x 4`) and target boxes.
pub fn intr_loss(g: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
    let ious = g.iou_rows(pred, target)?;
    let sq = g.mul(ious, ious)?;
    let m = g.mean_all(sq)?;
    Ok(g.affine(m, -1.0, 1.0))
}

/// Mean binary cross-entropy with clamped scores.
pub fn corr_loss(g: &mut Graph, scores: Var, labels: &[f64]) -> Result<Var> {
    g.bce(scores, labels)
}

/// Three consecutive frames of the identities visible in all of them.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrSample {
    /// The supervised frame `t`.
    pub frame: u32,
    pub ids: Vec<u64>,
    pub boxes_t2: Vec<BBox>,
    pub boxes_t1: Vec<BBox>,
    pub boxes_t: Vec<BBox>,
}

impl IntrSample {
    pub fn input(&self, dims: FrameDims, offset_scale: f64) -> Result<InteractionInput> {
        let rows: Vec<_> = self
            .ids
            .iter()
            .zip(self.boxes_t2.iter().zip(&self.boxes_t1))
            .map(|(id, (a, b))| (*id, *b, offset_between(a, b)))
            .collect();
        InteractionInput::from_rows(&rows, dims, offset_scale)
    }

    pub fn target(&self, dims: FrameDims) -> Result<Tensor> {
        let rows: Vec<[f64; 4]> = self.boxes_t.iter().map(|b| dims.normalize_box(b)).collect();
        Tensor::from_rows(&rows)
    }
}

/// One sample per frame `t` with at least one identity present at `t-2`,
/// `t-1` and `t`, in frame order.
pub fn build_intr_samples(gt: &Trajectories) -> Vec<IntrSample> {
    build_intr_samples_observed(gt, gt)
}

/// Like [`build_intr_samples`], but the `t-2` and `t-1` boxes come from
/// `observed` (for example detections labelled with their true identity)
/// while the target at `t` comes from `gt`.
pub fn build_intr_samples_observed(observed: &Trajectories, gt: &Trajectories) -> Vec<IntrSample> {
    let frames: BTreeSet<u32> = gt.values().flat_map(|t| t.keys().copied()).collect();
    let mut out = Vec::new();
    for &t in &frames {
        if t < 3 {
            continue;
        }
        let mut s = IntrSample {
            frame: t,
            ids: Vec::new(),
            boxes_t2: Vec::new(),
            boxes_t1: Vec::new(),
            boxes_t: Vec::new(),
        };
        for (id, obs) in observed {
            let Some(target) = gt.get(id).and_then(|g| g.get(&t)) else {
                continue;
            };
            if let (Some(a), Some(b)) = (obs.get(&(t - 2)), obs.get(&(t - 1))) {
                s.ids.push(*id);
                s.boxes_t2.push(*a);
                s.boxes_t1.push(*b);
                s.boxes_t.push(*target);
            }
        }
        if !s.ids.is_empty() {
            out.push(s);
        }
    }
    out
}

/// Mean `1 - IoU^2` of the constant-velocity guess `b_{t-1} + (b_{t-1} - b_{t-2})`.
pub fn constant_velocity_loss(samples: &[IntrSample]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in samples {
        for ((a, b), c) in s.boxes_t2.iter().zip(&s.boxes_t1).zip(&s.boxes_t) {
            let p = BBox::new(2.0 * b.x - a.x, 2.0 * b.y - a.y, 2.0 * b.w - a.w, 2.0 * b.h - a.h);
            total += 1.0 - iou(&p, c).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrSample {
    /// Thirty `(frame, box)` locations ending at the tracklet's last sighting.
    pub window: Vec<(u32, BBox)>,
    pub det_frame: u32,
    pub det: BBox,
    pub label: f64,
}

impl CorrSample {
    pub fn encode(&self, dims: FrameDims, time_scale: f64) -> Result<(Tensor, [f64; 5])> {
        let rows: Vec<[f64; 5]> = self
            .window
            .iter()
            .map(|(f, b)| encode_location(*f, b, self.det_frame, dims, time_scale))
            .collect();
        Ok((
            Tensor::from_rows(&rows)?,
            encode_location(self.det_frame, &self.det, self.det_frame, dims, time_scale),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrSampling {
    pub positives: usize,
    pub negatives_per_positive: usize,
    /// Occlusion gaps are drawn uniformly from `1..=max_gap`.
    pub max_gap: u32,
    pub window: usize,
    pub seed: u64,
}

impl Default for CorrSampling {
    fn default() -> Self {
        Self {
            positives: 2000,
            negatives_per_positive: 1,
            max_gap: 120,
            window: crate::trackstore::WINDOW_LEN,
            seed: 0,
        }
    }
}

/// The last `n` boxes of `traj` at or before `end`, left-padded with the earliest.
fn window_at(traj: &BTreeMap<u32, BBox>, end: u32, n: usize) -> Vec<(u32, BBox)> {
    let mut w: Vec<(u32, BBox)> = traj.range(..=end).rev().take(n).map(|(f, b)| (*f, *b)).collect();
    if let Some(&first) = w.last() {
        while w.len() < n {
            w.push(first);
        }
    }
    w.reverse();
    w
}

/// Positive pairs join a window ending at `tau` with the same identity at
/// `tau + gap`; each negative replaces the detection by another identity's
/// box at that frame.
pub fn build_corr_samples(gt: &Trajectories, cfg: &CorrSampling) -> Result<Vec<CorrSample>> {
    if cfg.negatives_per_positive > 0 && gt.len() < 2 {
        return Err(Error::Data("negative pairs need at least two trajectories".into()));
    }
    if cfg.max_gap == 0 || cfg.window == 0 {
        return Err(Error::Config("max_gap and window must be positive".into()));
    }
    let mut by_frame: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for (id, t) in gt {
        for f in t.keys() {
            by_frame.entry(*f).or_default().push(*id);
        }
    }
    let ids: Vec<u64> = gt.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.positives * (1 + cfg.negatives_per_positive));
    let mut made = 0;
    let mut attempts = 0usize;
    while made < cfg.positives {
        attempts += 1;
        if attempts > 100 * cfg.positives.max(1) + 1000 {
            return Err(Error::Data("ground truth too short to draw correlation samples".into()));
        }
        let id = ids[rng.random_range(0..ids.len())];
        let traj = &gt[&id];
        let frames: Vec<u32> = traj.keys().copied().collect();
        let tau = frames[rng.random_range(0..frames.len())];
        let gap = rng.random_range(1..=cfg.max_gap);
        let Some(&det) = traj.get(&(tau + gap)) else {
            continue;
        };
        let others: Vec<u64> = by_frame[&(tau + gap)].iter().copied().filter(|o| *o != id).collect();
        if cfg.negatives_per_positive > 0 && others.is_empty() {
            continue;
        }
        let window = window_at(traj, tau, cfg.window);
        out.push(CorrSample {
            window: window.clone(),
            det_frame: tau + gap,
            det,
            label: 1.0,
        });
        for _ in 0..cfg.negatives_per_positive {
            let o = others[rng.random_range(0..others.len())];
            out.push(CorrSample {
                window: window.clone(),
                det_frame: tau + gap,
                det: gt[&o][&(tau + gap)],
                label: 0.0,
            });
        }
        made += 1;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, momentum: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(lr, momentum)),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr)),
        }
    }

    fn step(&mut self, p: &mut Params) {
        match self {
            Optimizer::Sgd(o) => o.step(p),
            Optimizer::Adam(o) => o.step(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    /// Multiply the learning rate by `lr_decay` every `decay_every` epochs (0: never).
    pub decay_every: usize,
    pub lr_decay: f64,
    pub seed: u64,
    /// Check gradients on one sample before training.
    pub grad_check: bool,
    /// Where the last good parameters go if the loss diverges.
    pub rescue_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 30,
            batch_size: 16,
            patience: 5,
            decay_every: 0,
            lr_decay: 0.5,
            seed: 0,
            grad_check: true,
            rescue_path: None,
        }
    }
}

/// Largest relative gradient error tolerated by the pre-training gate.
pub const GRAD_CHECK_TOL: f64 = 1e-4;
const GRAD_CHECK_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean IoU (interaction) or accuracy (refind) on the validation split.
    pub val_metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Params,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    pub grad_check: Option<GradCheckReport>,
}

impl TrainOutcome {
    pub fn curve_tsv(&self) -> String {
        let mut s = String::from("epoch\tloss\tval_loss\tval_metric\n");
        for e in &self.curve {
            let _ = writeln!(
                s,
                "{}\t{:.8}\t{:.8}\t{:.6}",
                e.epoch, e.train_loss, e.val_loss, e.val_metric
            );
        }
        s
    }
}

/// Generic loop: `loss_of(params, batch)` builds one batch loss on a graph.
fn run_training<S>(
    mut params: Params,
    train: &[S],
    cfg: &TrainConfig,
    mut batch_loss: impl FnMut(&mut Graph, &Params, &[&S]) -> Result<Var>,
    mut validate: impl FnMut(&Params) -> Result<(f64, f64)>,
) -> Result<(Params, Vec<EpochStats>, usize)> {
    if train.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (v0, _) = validate(&params)?;
    let mut best = (v0, params.clone(), 0usize);
    let mut curve = Vec::new();
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        if cfg.decay_every > 0 && epoch > 1 && (epoch - 1) % cfg.decay_every == 0 {
            let decay = |lr: &mut f64| *lr *= cfg.lr_decay;
            match &mut opt {
                Optimizer::Sgd(o) => decay(&mut o.lr),
                Optimizer::Adam(o) => decay(&mut o.lr),
            }
        }
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let items: Vec<&S> = chunk.iter().map(|&i| &train[i]).collect();
            params.zero_grad();
            let mut g = Graph::new();
            let loss = batch_loss(&mut g, &params, &items)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                if let Some(p) = &cfg.rescue_path {
                    best.1.save(p)?;
                }
                return Err(Error::NonFiniteLoss { epoch });
            }
            g.backward(loss)?;
            g.accumulate_param_grads(&mut params);
            opt.step(&mut params);
            total += lv;
            batches += 1;
        }
        if !params.all_finite() {
            if let Some(p) = &cfg.rescue_path {
                best.1.save(p)?;
            }
            return Err(Error::NonFiniteLoss { epoch });
        }
        let (val_loss, val_metric) = validate(&params)?;
        curve.push(EpochStats {
            epoch,
            train_loss: total / batches as f64,
            val_loss,
            val_metric,
        });
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, curve, best.2))
}

fn intr_batch_loss(model: &InteractionModel, g: &mut Graph, params: &Params, batch: &[&IntrSample]) -> Result<Var> {
    let dims = model_dims(&model.params);
    let mut losses = Vec::with_capacity(batch.len());
    for s in batch {
        let input = s.input(dims, model.config.offset_scale)?;
        let (vars, _) = model.forward(g, params, &input)?;
        losses.push(intr_loss(g, vars.coords, &s.target(dims)?)?);
    }
    let stacked = g.concat_rows(&losses)?;
    g.mean_all(stacked)
}

/// Frame size the model was trained for (stored in its metadata).
pub fn model_dims(p: &Params) -> FrameDims {
    let get = |k: &str, d: f64| p.meta_value(k).and_then(|v| v.parse().ok()).unwrap_or(d);
    let def = FrameDims::default();
    FrameDims::new(get("frame_width", def.width), get("frame_height", def.height))
}

/// Mean IoU of the module's one-step predictions over `samples`.
pub fn intr_mean_iou(model: &InteractionModel, samples: &[IntrSample], dims: FrameDims) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for s in samples {
        let (_, pred) = model.infer(&s.input(dims, model.config.offset_scale)?)?;
        for (p, t) in pred.boxes.iter().zip(&s.boxes_t) {
            total += iou(p, t);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Trains the interaction module on `train`, early-stopping on `val` loss.
pub fn train_interaction(
    model: &InteractionModel,
    dims: FrameDims,
    train: &[IntrSample],
    val: &[IntrSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut model = model.clone();
    model.params.set_meta("frame_width", dims.width);
    model.params.set_meta("frame_height", dims.height);
    let grad = if cfg.grad_check {
        // the smallest scene keeps per-entry gradients well above finite-difference roundoff
        let s = train
            .iter()
            .min_by_key(|s| s.ids.len())
            .ok_or_else(|| Error::Data("no training samples".into()))?;
        let report = grad_check(&model.params, GRAD_CHECK_EPS, |g, p| {
            intr_batch_loss(&model, g, p, &[s])
        })?;
        if report.max_rel_error >= GRAD_CHECK_TOL {
            return Err(Error::Contract(format!(
                "gradient check failed: {:.3e} at {}[{}] (backprop {:e}, numeric {:e})",
                report.max_rel_error,
                report.worst_param,
                report.worst_index,
                report.worst_analytic,
                report.worst_numeric
            )));
        }
        Some(report)
    } else {
        None
    };
    let val_set = if val.is_empty() { train } else { val };
    let eval_model = model.clone();
    let (params, curve, best_epoch) = run_training(
        model.params.clone(),
        train,
        cfg,
        |g, p, b| intr_batch_loss(&model, g, p, b),
        |p| {
            let m = InteractionModel {
                params: p.clone(),
                ..eval_model.clone()
            };
            let mut g = Graph::new();
            let refs: Vec<&IntrSample> = val_set.iter().collect();
            let mut loss = 0.0;
            for chunk in refs.chunks(64) {
                let l = intr_batch_loss(&m, &mut g, p, chunk)?;
                loss += g.value(l).item() * chunk.len() as f64;
                g = Graph::new();
            }
            Ok((loss / refs.len() as f64, intr_mean_iou(&m, val_set, dims)?))
        },
    )?;
    Ok(TrainOutcome {
        params,
        curve,
        best_epoch,
        grad_check: grad,
    })
}

fn corr_batch_loss(
    model: &RefindModel,
    g: &mut Graph,
    params: &Params,
    batch: &[&CorrSample],
    dims: FrameDims,
) -> Result<Var> {
    let mut windows = Vec::with_capacity(batch.len());
    let mut pairs = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for (i, s) in batch.iter().enumerate() {
        let (w, d) = s.encode(dims, model.config.time_scale)?;
        windows.push(w);
        pairs.push((i, d));
        labels.push(s.label);
    }
    let scores = model.forward_pairs(g, params, &windows, &pairs)?;
    corr_loss(g, scores, &labels)
}

/// Scores for `samples` in order.
pub fn corr_scores(model: &RefindModel, samples: &[CorrSample], dims: FrameDims) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let mut windows = Vec::new();
        let mut pairs = Vec::new();
        for (i, s) in chunk.iter().enumerate() {
            let (w, d) = s.encode(dims, model.config.time_scale)?;
            windows.push(w);
            pairs.push((i, d));
        }
        let mut g = Graph::new();
        let v = model.forward_pairs(&mut g, &model.params, &windows, &pairs)?;
        out.extend_from_slice(g.value(v).data());
    }
    Ok(out)
}

/// Fraction of samples classified correctly when scores `>= threshold` mean "same".
pub fn corr_accuracy(model: &RefindModel, samples: &[CorrSample], dims: FrameDims, threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let scores = corr_scores(model, samples, dims)?;
    let correct = scores
        .iter()
        .zip(samples)
        .filter(|(c, s)| (**c >= threshold) == (s.label > 0.5))
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains the refind module; the validation metric is accuracy at `threshold`.
pub fn train_refind(
    model: &RefindModel,
    dims: FrameDims,
    train: &[CorrSample],
    val: &[CorrSample],
    threshold: f64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut model = model.clone();
    model.params.set_meta("frame_width", dims.width);
    model.params.set_meta("frame_height", dims.height);
    let grad = if cfg.grad_check {
        let probe: Vec<&CorrSample> = train.iter().take(4).collect();
        if probe.is_empty() {
            return Err(Error::Data("no training samples".into()));
        }
        let report = grad_check(&model.params, GRAD_CHECK_EPS, |g, p| {
            corr_batch_loss(&model, g, p, &probe, dims)
        })?;
        if report.max_rel_error >= GRAD_CHECK_TOL {
            return Err(Error::Contract(format!(
                "gradient check failed: {:.3e} at {}[{}] (backprop {:e}, numeric {:e})",
                report.max_rel_error,
                report.worst_param,
                report.worst_index,
                report.worst_analytic,
                report.worst_numeric
            )));
        }
        Some(report)
    } else {
        None
    };
    let val_set = if val.is_empty() { train } else { val };
    let eval_model = model.clone();
    let (params, curve, best_epoch) = run_training(
        model.params.clone(),
        train,
        cfg,
        |g, p, b| corr_batch_loss(&model, g, p, b, dims),
        |p| {
            let m = RefindModel {
                params: p.clone(),
                ..eval_model.clone()
            };
            let mut loss = 0.0;
            for chunk in val_set.chunks(256) {
                let mut g = Graph::new();
                let refs: Vec<&CorrSample> = chunk.iter().collect();
                let l = corr_batch_loss(&m, &mut g, p, &refs, dims)?;
                loss += g.value(l).item() * chunk.len() as f64;
            }
            Ok((
                loss / val_set.len() as f64,
                corr_accuracy(&m, val_set, dims, threshold)?,
            ))
        },
    )?;
    Ok(TrainOutcome {
        params,
        curve,
        best_epoch,
        grad_check: grad,
    })
}

/// Mean one-step IoU of a Kalman filter fed ground truth, scored on the
/// same `(id, t)` pairs as [`build_intr_samples`].
pub fn kf_one_step_iou(gt: &Trajectories) -> Result<f64> {
    kf_one_step_iou_observed(gt, gt)
}

/// Each id's filter starts at its first observed frame, is updated with
/// every observed box and restarts after a gap; its prediction for `t` is
/// scored against `gt` on the pairs used by [`build_intr_samples_observed`].
pub fn kf_one_step_iou_observed(observed: &Trajectories, gt: &Trajectories) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (id, obs) in observed {
        let Some(truth) = gt.get(id) else { continue };
        let mut kf: Option<(KfState, u32, u32)> = None;
        for f in obs
            .keys()
            .copied()
            .chain(truth.keys().copied())
            .collect::<BTreeSet<u32>>()
        {
            if let Some((state, last, run)) = kf.as_mut() {
                if *last + 1 != f {
                    kf = None;
                } else {
                    *state = state.predict();
                    if *run >= 2 {
                        if let Some(t) = truth.get(&f) {
                            total += iou(&state.bbox(), t);
                            n += 1;
                        }
                    }
                }
            }
            match (obs.get(&f), kf.as_mut()) {
                (Some(b), Some((state, last, run))) => {
                    *state = state.update(b)?;
                    *last = f;
                    *run += 1;
                }
                (Some(b), None) => kf = Some((KfState::initiate(b), f, 1)),
                (None, _) => kf = None,
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Splits `items` into (train, held-out) with a seeded shuffle.
pub fn split<T: Clone>(items: &[T], held_out: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((items.len() as f64) * held_out).round() as usize;
    let val = idx[..k].iter().map(|&i| items[i].clone()).collect();
    let train = idx[k..].iter().map(|&i| items[i].clone()).collect();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::InteractionConfig;
    use crate::refind::RefindConfig;

    fn straight(id_count: u64, frames: u32) -> Trajectories {
        (1..=id_count)
            .map(|id| {
                let t = (1..=frames)
                    .map(|f| {
                        (
                            f,
                            BBox::new(100.0 * id as f64 + 2.0 * f as f64, 300.0 + 50.0 * id as f64, 30.0, 70.0),
                        )
                    })
                    .collect();
                (id, t)
            })
            .collect()
    }

    #[test]
    fn intr_loss_examples() {
        let mut g = Graph::new();
        let t = Tensor::from_rows(&[[0.5, 0.5, 0.2, 0.2]]).unwrap();
        let p = g.constant(t.clone());
        let l = intr_loss(&mut g, p, &t).unwrap();
        assert!(g.value(l).item().abs() < 1e-12);
        let far = g.constant(Tensor::from_rows(&[[0.9, 0.9, 0.05, 0.05]]).unwrap());
        let l = intr_loss(&mut g, far, &t).unwrap();
        assert_eq!(g.value(l).item(), 1.0);
        // two 2x2 squares shifted by 1: IoU = 2 / 6
        let a = Tensor::from_rows(&[[1.0, 1.0, 2.0, 2.0]]).unwrap();
        let b = g.constant(Tensor::from_rows(&[[2.0, 1.0, 2.0, 2.0]]).unwrap());
        let l = intr_loss(&mut g, b, &a).unwrap();
        assert!((g.value(l).item() - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn corr_loss_examples() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::from_rows(&[[0.5]]).unwrap());
        let l1 = corr_loss(&mut g, c, &[1.0]).unwrap();
        let l0 = corr_loss(&mut g, c, &[0.0]).unwrap();
        assert!((g.value(l1).item() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g.value(l0).item() - std::f64::consts::LN_2).abs() < 1e-12);
        let hi = g.constant(Tensor::from_rows(&[[1.0 - 1e-7]]).unwrap());
        let l = corr_loss(&mut g, hi, &[1.0]).unwrap();
        assert!(g.value(l).item() < 1e-6);
    }

    #[test]
    fn intr_samples_slide_and_respect_covisibility() {
        assert_eq!(build_intr_samples(&straight(1, 5)).len(), 3);
        assert!(build_intr_samples(&BTreeMap::new()).is_empty());
        let mut gt = straight(2, 5);
        gt.get_mut(&2).unwrap().remove(&4);
        let s = build_intr_samples(&gt);
        let at5 = s.iter().find(|s| s.frame == 5).unwrap();
        assert_eq!(at5.ids, vec![1]);
    }

    #[test]
    fn corr_samples_are_balanced_and_seeded() {
        let gt = straight(4, 80);
        let cfg = CorrSampling {
            positives: 50,
            max_gap: 30,
            seed: 9,
            ..CorrSampling::default()
        };
        let a = build_corr_samples(&gt, &cfg).unwrap();
        assert_eq!(a, build_corr_samples(&gt, &cfg).unwrap());
        let pos = a.iter().filter(|s| s.label == 1.0).count();
        assert_eq!(pos * 2, a.len());
        for s in &a {
            assert_eq!(s.window.len(), 30);
            assert!(s.det_frame > s.window.last().unwrap().0);
            assert!(s.det_frame - s.window.last().unwrap().0 <= 30);
        }
        let three = CorrSampling {
            negatives_per_positive: 2,
            ..cfg.clone()
        };
        let b = build_corr_samples(&gt, &three).unwrap();
        assert_eq!(b.iter().filter(|s| s.label == 1.0).count() * 3, b.len());
        assert!(build_corr_samples(&straight(1, 80), &cfg).is_err());
    }

    #[test]
    fn zero_lr_keeps_params() {
        let gt = straight(3, 12);
        let samples = build_intr_samples(&gt);
        let model = InteractionModel::new(InteractionConfig::default(), 1).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 1,
            grad_check: false,
            ..TrainConfig::default()
        };
        let out = train_interaction(&model, FrameDims::default(), &samples, &[], &cfg).unwrap();
        for n in model.params.names() {
            assert_eq!(out.params.get(n), model.params.get(n));
        }
    }

    #[test]
    fn refind_gate_and_one_epoch() {
        let gt = straight(4, 60);
        let samples = build_corr_samples(
            &gt,
            &CorrSampling {
                positives: 20,
                max_gap: 20,
                ..CorrSampling::default()
            },
        )
        .unwrap();
        let model = RefindModel::new(
            RefindConfig {
                dim: 8,
                time_channels: vec![4, 8],
                ..RefindConfig::default()
            },
            2,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train_refind(&model, FrameDims::default(), &samples, &[], 0.9, &cfg).unwrap();
        assert!(out.grad_check.as_ref().unwrap().max_rel_error < GRAD_CHECK_TOL);
        assert!(!out.curve.is_empty());
        assert!(out.curve_tsv().starts_with("epoch\tloss"));
    }

    #[test]
    fn kf_is_near_perfect_on_straight_lines() {
        let v = kf_one_step_iou(&straight(2, 200)).unwrap();
        assert!(v > 0.9 && v <= 1.0);
    }
}
