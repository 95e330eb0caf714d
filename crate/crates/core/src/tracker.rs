//! Per-frame orchestration: motion prediction, two-stage IoU association,
//! learned refind of lost tracklets, and lifecycle bookkeeping.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::assign::{assign, FORBIDDEN};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Detection};
use crate::interaction::{FrameDims, InteractionModel};
use crate::kalman::KfState;
use crate::nnet::Tensor;
use crate::refind::{error_compensate, LostWindowBatch, RefindModel, RestDetBatch};
use crate::trackstore::{EntryKind, TrackStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Kalman-filter prediction, IoU association only.
    BaselineKf,
    /// Interaction-module prediction, IoU association only.
    Interaction,
    /// Interaction-module prediction plus learned refind.
    InteractionRefind,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::BaselineKf, Mode::Interaction, Mode::InteractionRefind];

    pub fn name(self) -> &'static str {
        match self {
            Mode::BaselineKf => "baseline_kf",
            Mode::Interaction => "interaction",
            Mode::InteractionRefind => "interaction+refind",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub high_thresh: f64,
    pub low_thresh: f64,
    pub iou_reject: f64,
    pub init_score: f64,
    pub max_lost_age: u32,
    pub refind_thresh: f64,
    pub mask_xi: f64,
    pub mode: Mode,
    pub dims: FrameDims,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            high_thresh: 0.6,
            low_thresh: 0.1,
            iou_reject: 0.2,
            init_score: 0.7,
            max_lost_age: 60,
            refind_thresh: 0.9,
            mask_xi: 0.6,
            mode: Mode::InteractionRefind,
            dims: FrameDims::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("high_thresh", self.high_thresh),
            ("low_thresh", self.low_thresh),
            ("iou_reject", self.iou_reject),
            ("init_score", self.init_score),
            ("refind_thresh", self.refind_thresh),
            ("mask_xi", self.mask_xi),
        ];
        for (k, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k} = {v} is outside [0, 1]")));
            }
        }
        if self.low_thresh >= self.high_thresh {
            return Err(Error::Config("low_thresh must be below high_thresh".into()));
        }
        if self.max_lost_age < 1 {
            return Err(Error::Config("max_lost_age must be at least 1".into()));
        }
        if !(self.dims.width > 0.0 && self.dims.height > 0.0) {
            return Err(Error::Config("frame dims must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major 2x3 affine map applied to predicted boxes before association.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine(pub [[f64; 3]; 2]);

impl Affine {
    pub fn apply(&self, b: &BBox) -> BBox {
        let m = &self.0;
        BBox::new(
            m[0][0] * b.x + m[0][1] * b.y + m[0][2],
            m[1][0] * b.x + m[1][1] * b.y + m[1][2],
            b.w * m[0][0].abs(),
            b.h * m[1][1].abs(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
    /// Detection score for observed rows, `-1` for compensated ones.
    pub score: f64,
    pub kind: EntryKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub first: usize,
    pub second: usize,
    pub refind: usize,
    pub spawned: usize,
    pub newly_lost: usize,
    pub reaped: usize,
    pub compensated_rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub frame: u32,
    pub rows: Vec<TrackRow>,
    pub counts: StageCounts,
}

/// Learned models used by the non-baseline modes.
#[derive(Clone, Copy, Debug, Default)]
pub struct Models<'a> {
    pub interaction: Option<&'a InteractionModel>,
    pub refind: Option<&'a RefindModel>,
}

pub struct Tracker<'a> {
    config: TrackerConfig,
    interaction: Option<InteractionModel>,
    refind: Option<&'a RefindModel>,
    store: TrackStore,
    kf: HashMap<u64, KfState>,
    last_frame: Option<u32>,
    transform: Option<Affine>,
}

impl<'a> Tracker<'a> {
    pub fn new(config: TrackerConfig, models: Models<'a>) -> Result<Self> {
        config.validate()?;
        let needs_intr = config.mode != Mode::BaselineKf;
        let interaction = match (needs_intr, models.interaction) {
            (true, None) => return Err(Error::Config(format!("mode {} needs interaction weights", config.mode))),
            (true, Some(m)) => {
                let mut m = m.clone();
                m.config.xi = config.mask_xi;
                Some(m)
            }
            (false, _) => None,
        };
        let refind = match (config.mode, models.refind) {
            (Mode::InteractionRefind, None) => {
                return Err(Error::Config("mode interaction+refind needs refind weights".into()))
            }
            (Mode::InteractionRefind, Some(r)) => Some(r),
            _ => None,
        };
        Ok(Self {
            config,
            interaction,
            refind,
            store: TrackStore::new(),
            kf: HashMap::new(),
            last_frame: None,
            transform: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn store(&self) -> &TrackStore {
        &self.store
    }

    /// Sets the camera transform for the next `step` only.
    pub fn set_frame_transform(&mut self, t: Option<Affine>) {
        self.transform = t;
    }

    fn predict(&self) -> Result<BTreeMap<u64, BBox>> {
        let mut out = BTreeMap::new();
        if self.store.is_empty() {
            return Ok(out);
        }
        match &self.interaction {
            None => {
                for id in self.store.ids() {
                    let kf = self
                        .kf
                        .get(&id)
                        .ok_or_else(|| Error::Contract(format!("no filter for tracklet {id}")))?;
                    out.insert(id, kf.predict().bbox());
                }
            }
            Some(model) => {
                let (ids, pred) = model.predict_store(&self.store, self.config.dims)?;
                out.extend(ids.into_iter().zip(pred.boxes));
            }
        }
        if let Some(t) = self.transform {
            for b in out.values_mut() {
                *b = t.apply(b);
            }
        }
        Ok(out)
    }

    fn associate(
        &self,
        tracks: &[u64],
        preds: &BTreeMap<u64, BBox>,
        dets: &[Detection],
        cols: &[usize],
    ) -> Vec<(u64, usize)> {
        if tracks.is_empty() || cols.is_empty() {
            return Vec::new();
        }
        let mut cost = Tensor::zeros(tracks.len(), cols.len());
        for (r, id) in tracks.iter().enumerate() {
            for (c, &d) in cols.iter().enumerate() {
                let v = iou(&preds[id], &dets[d].bbox);
                cost.set(r, c, if v < self.config.iou_reject { FORBIDDEN } else { 1.0 - v });
            }
        }
        assign(&cost)
            .pairs
            .into_iter()
            .map(|(r, c)| (tracks[r], cols[c]))
            .collect()
    }

    /// Processes the detections of `frame`. Frames must arrive consecutively.
    pub fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<FrameResult> {
        if let Some(prev) = self.last_frame {
            if frame != prev + 1 {
                return Err(Error::Data(format!("frame {frame} does not follow frame {prev}")));
            }
        }
        for d in dets {
            if d.frame != frame {
                return Err(Error::Data(format!(
                    "detection of frame {} passed to frame {frame}",
                    d.frame
                )));
            }
            d.validate()?;
        }
        self.last_frame = Some(frame);
        let cfg = self.config.clone();
        let mut counts = StageCounts::default();
        let mut rows = Vec::new();

        // 1. predictions
        let preds = self.predict()?;
        self.transform = None;
        let was_alive: Vec<u64> = self.store.alive_ids();

        let high: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score >= cfg.high_thresh).collect();
        let low: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].score >= cfg.low_thresh && dets[i].score < cfg.high_thresh)
            .collect();

        // 2. high-score detections against every tracklet
        let all_ids = self.store.ids();
        let first = self.associate(&all_ids, &preds, dets, &high);
        counts.first = first.len();
        let mut matched: BTreeMap<u64, usize> = first.into_iter().collect();

        // 3. low-score detections against the remaining previously-alive tracklets
        let rest_alive: Vec<u64> = was_alive
            .iter()
            .copied()
            .filter(|id| !matched.contains_key(id))
            .collect();
        let second = self.associate(&rest_alive, &preds, dets, &low);
        counts.second = second.len();
        matched.extend(second);

        // 4. updates
        for (&id, &d) in &matched {
            self.revive(id, &dets[d], &preds[&id], &mut rows, &mut counts)?;
        }

        // 5. unmatched tracklets
        for id in all_ids.iter().filter(|id| !matched.contains_key(id)) {
            let t = self.store.get_mut(*id).expect("id from store");
            if t.is_alive() {
                counts.newly_lost += 1;
            }
            t.mark_lost(preds[id])?;
            if let Some(kf) = self.kf.get_mut(id) {
                *kf = kf.predict();
            }
        }

        let used: Vec<bool> = {
            let mut u = vec![false; dets.len()];
            for &d in matched.values() {
                u[d] = true;
            }
            u
        };
        let mut rest_high: Vec<usize> = high.iter().copied().filter(|&d| !used[d]).collect();

        // 6. refind
        if let Some(model) = self.refind {
            let lost_ids = self.store.lost_ids();
            if !lost_ids.is_empty() && !rest_high.is_empty() {
                let lost = LostWindowBatch::from_tracklets(
                    lost_ids.iter().map(|id| self.store.get(*id).expect("id from store")),
                    frame,
                    cfg.dims,
                    &model.config,
                )?;
                let cand: Vec<(usize, Detection)> = rest_high.iter().map(|&d| (d, dets[d])).collect();
                let batch = RestDetBatch::new(&cand, cfg.dims, model.config.time_scale);
                let result = model.correlate_and_match(&lost, &batch, cfg.refind_thresh)?;
                for (id, d, _) in result.matches {
                    let t = self.store.get_mut(id).expect("id from store");
                    let p = t
                        .pop_prediction_at(frame)
                        .ok_or_else(|| Error::Contract(format!("tracklet {id} has no prediction at {frame}")))?;
                    if t.is_alive() {
                        counts.newly_lost -= 1;
                    }
                    self.revive(id, &dets[d], &p, &mut rows, &mut counts)?;
                    counts.refind += 1;
                    rest_high.retain(|&x| x != d);
                }
            }
        }

        // 7. births
        for d in rest_high {
            if let Some(id) = self.store.spawn(&dets[d], cfg.init_score) {
                counts.spawned += 1;
                if cfg.mode == Mode::BaselineKf {
                    self.kf.insert(id, KfState::initiate(&dets[d].bbox));
                }
                rows.push(TrackRow {
                    frame,
                    id,
                    bbox: dets[d].bbox,
                    score: dets[d].score,
                    kind: EntryKind::Observed,
                });
            }
        }

        // 8. deaths
        for id in self.store.reap(frame, cfg.max_lost_age) {
            self.kf.remove(&id);
            counts.reaped += 1;
        }

        rows.sort_by_key(|r| (r.frame, r.id));
        Ok(FrameResult { frame, rows, counts })
    }

    /// Appends a matched detection, backfilling the occlusion gap of a lost
    /// tracklet first.
    fn revive(
        &mut self,
        id: u64,
        det: &Detection,
        predicted: &BBox,
        rows: &mut Vec<TrackRow>,
        counts: &mut StageCounts,
    ) -> Result<()> {
        let t = self.store.get_mut(id).expect("id from store");
        let backfill = if t.is_lost() {
            error_compensate(t, det, predicted)?
        } else {
            t.update_alive(det)?;
            Vec::new()
        };
        counts.compensated_rows += backfill.len();
        for (f, b) in backfill {
            rows.push(TrackRow {
                frame: f,
                id,
                bbox: b,
                score: -1.0,
                kind: EntryKind::Compensated,
            });
        }
        rows.push(TrackRow {
            frame: det.frame,
            id,
            bbox: det.bbox,
            score: det.score,
            kind: EntryKind::Observed,
        });
        if let Some(kf) = self.kf.get_mut(&id) {
            // the filter was advanced to the previous frame by step 5
            *kf = kf.predict().update(&det.bbox)?;
        }
        Ok(())
    }
}

/// Tracks a whole detection stream. Frames without detections between the
/// first and last detected frame are processed as empty frames.
pub fn run_sequence(dets: &[Detection], config: &TrackerConfig, models: Models<'_>) -> Result<Vec<TrackRow>> {
    let mut tracker = Tracker::new(config.clone(), models)?;
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        by_frame.entry(d.frame).or_default().push(*d);
    }
    let (Some(&first), Some(&last)) = (by_frame.keys().next(), by_frame.keys().next_back()) else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for frame in first..=last {
        let frame_dets = by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        rows.extend(tracker.step(frame, frame_dets)?.rows);
    }
    rows.sort_by_key(|r| (r.frame, r.id));
    Ok(rows)
}
