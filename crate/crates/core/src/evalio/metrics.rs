//! CLEAR MOT counts, IDF1 and crowd-stratified MOTA.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::assign::{assign, FORBIDDEN};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::nnet::Tensor;

use super::mot::MotRow;

pub const DEFAULT_IOU_MATCH: f64 = 0.5;
pub const CROWD_VISIBILITY: f64 = 0.25;

type Frames = BTreeMap<u32, Vec<(i64, BBox)>>;

fn frames_of(rows: &[MotRow], gt: bool) -> Frames {
    let mut f: Frames = BTreeMap::new();
    for r in rows.iter().filter(|r| !gt || r.is_scored_gt()) {
        f.entry(r.frame).or_default().push((r.id, r.bbox()));
    }
    // sorting makes every metric independent of file order
    for v in f.values_mut() {
        v.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.x.total_cmp(&b.1.x))
                .then(a.1.y.total_cmp(&b.1.y))
        });
    }
    f
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClearReport {
    pub num_gt: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub frag: usize,
}

impl ClearReport {
    /// `1 - (FP + FN + IDs) / num_gt`, with an empty ground truth counted as one box.
    pub fn mota(&self) -> f64 {
        1.0 - (self.fp + self.fn_ + self.ids) as f64 / self.num_gt.max(1) as f64
    }

    pub fn merge(&self, o: &ClearReport) -> ClearReport {
        ClearReport {
            num_gt: self.num_gt + o.num_gt,
            matches: self.matches + o.matches,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            ids: self.ids + o.ids,
            frag: self.frag + o.frag,
        }
    }
}

fn clear_frames(gt: &Frames, hyp: &Frames, thr: f64, stratum: Option<&BTreeSet<i64>>) -> ClearReport {
    let counted = |id: i64| stratum.is_none_or(|s| s.contains(&id));
    let mut rep = ClearReport::default();
    let mut mapping: HashMap<i64, i64> = HashMap::new();
    let mut last_status: HashMap<i64, bool> = HashMap::new();
    let mut ever: HashMap<i64, bool> = HashMap::new();
    let empty = Vec::new();
    let frames: BTreeSet<u32> = gt.keys().chain(hyp.keys()).copied().collect();
    for f in frames {
        let g = gt.get(&f).unwrap_or(&empty);
        let h = hyp.get(&f).unwrap_or(&empty);
        let mut g_match: Vec<Option<usize>> = vec![None; g.len()];
        let mut h_used = vec![false; h.len()];
        // keep established correspondences that still overlap enough
        for (gi, (gid, gb)) in g.iter().enumerate() {
            if let Some(&hid) = mapping.get(gid) {
                if let Some(hi) = (0..h.len()).find(|&k| !h_used[k] && h[k].0 == hid && iou(gb, &h[k].1) >= thr) {
                    g_match[gi] = Some(hi);
                    h_used[hi] = true;
                }
            }
        }
        let free_g: Vec<usize> = (0..g.len()).filter(|&i| g_match[i].is_none()).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let mut cost = Tensor::zeros(free_g.len(), free_h.len());
            for (r, &gi) in free_g.iter().enumerate() {
                for (c, &hi) in free_h.iter().enumerate() {
                    let v = iou(&g[gi].1, &h[hi].1);
                    cost.set(r, c, if v >= thr { 1.0 - v } else { FORBIDDEN });
                }
            }
            for (r, c) in assign(&cost).pairs {
                let (gi, hi) = (free_g[r], free_h[c]);
                g_match[gi] = Some(hi);
                h_used[hi] = true;
                let (gid, hid) = (g[gi].0, h[hi].0);
                if mapping.get(&gid).is_some_and(|&m| m != hid) && counted(gid) {
                    rep.ids += 1;
                }
            }
        }
        for (gi, (gid, _)) in g.iter().enumerate() {
            let matched = g_match[gi].is_some();
            if let Some(hi) = g_match[gi] {
                mapping.insert(*gid, h[hi].0);
            }
            if counted(*gid) {
                rep.num_gt += 1;
                if matched {
                    rep.matches += 1;
                    if last_status.get(gid) == Some(&false) && ever.get(gid) == Some(&true) {
                        rep.frag += 1;
                    }
                    ever.insert(*gid, true);
                } else {
                    rep.fn_ += 1;
                }
            }
            last_status.insert(*gid, matched);
        }
        rep.fp += h_used.iter().filter(|u| !**u).count();
    }
    rep
}

/// Standard CLEAR matching: correspondences persist while their IoU stays
/// at or above `thr`, the rest are assigned optimally per frame.
pub fn clear_metrics(gt: &[MotRow], hyp: &[MotRow], thr: f64) -> ClearReport {
    clear_frames(&frames_of(gt, true), &frames_of(hyp, false), thr, None)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdReport {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl IdReport {
    pub fn idf1(&self) -> f64 {
        let denom = 2 * self.idtp + self.idfp + self.idfn;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        }
    }

    pub fn merge(&self, o: &IdReport) -> IdReport {
        IdReport {
            idtp: self.idtp + o.idtp,
            idfp: self.idfp + o.idfp,
            idfn: self.idfn + o.idfn,
        }
    }
}

/// Per (gt id, hyp id): frames where both exist and overlap by at least `thr`.
pub fn id_overlap_counts(gt: &[MotRow], hyp: &[MotRow], thr: f64) -> (Vec<i64>, Vec<i64>, Vec<Vec<usize>>) {
    let (gf, hf) = (frames_of(gt, true), frames_of(hyp, false));
    let gids: Vec<i64> = gf
        .values()
        .flatten()
        .map(|p| p.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let hids: Vec<i64> = hf
        .values()
        .flatten()
        .map(|p| p.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let gi: HashMap<i64, usize> = gids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let hi: HashMap<i64, usize> = hids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut counts = vec![vec![0usize; hids.len()]; gids.len()];
    for (f, g) in &gf {
        let Some(h) = hf.get(f) else { continue };
        for (gid, gb) in g {
            for (hid, hb) in h {
                if iou(gb, hb) >= thr {
                    counts[gi[gid]][hi[hid]] += 1;
                }
            }
        }
    }
    (gids, hids, counts)
}

/// Identity scores under the one-to-one gt/hyp id mapping that maximises
/// identity true positives over the whole sequence.
pub fn idf1(gt: &[MotRow], hyp: &[MotRow], thr: f64) -> IdReport {
    let (gids, hids, counts) = id_overlap_counts(gt, hyp, thr);
    let n_gt = gt.iter().filter(|r| r.is_scored_gt()).count();
    let n_hyp = hyp.len();
    let mut idtp = 0;
    if !gids.is_empty() && !hids.is_empty() {
        let max = counts.iter().flatten().copied().max().unwrap_or(0) as f64;
        let mut cost = Tensor::zeros(gids.len(), hids.len());
        for (r, row) in counts.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                cost.set(r, c, max - v as f64);
            }
        }
        idtp = assign(&cost).pairs.iter().map(|&(r, c)| counts[r][c]).sum();
    }
    IdReport {
        idtp,
        idfp: n_hyp - idtp,
        idfn: n_gt - idtp,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub clear: ClearReport,
    pub id: IdReport,
}

impl MetricsReport {
    pub fn mota(&self) -> f64 {
        self.clear.mota()
    }

    pub fn idf1(&self) -> f64 {
        self.id.idf1()
    }

    pub fn merge(&self, o: &MetricsReport) -> MetricsReport {
        MetricsReport {
            clear: self.clear.merge(&o.clear),
            id: self.id.merge(&o.id),
        }
    }

    pub const TSV_HEADER: &'static str = "name\tMOTA\tIDF1\tFP\tFN\tIDs\tFrag\tnum_gt";

    pub fn tsv_row(&self, name: &str) -> String {
        format!(
            "{name}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\t{}",
            self.mota(),
            self.idf1(),
            self.clear.fp,
            self.clear.fn_,
            self.clear.ids,
            self.clear.frag,
            self.clear.num_gt
        )
    }
}

pub fn evaluate(gt: &[MotRow], hyp: &[MotRow]) -> MetricsReport {
    MetricsReport {
        clear: clear_metrics(gt, hyp, DEFAULT_IOU_MATCH),
        id: idf1(gt, hyp, DEFAULT_IOU_MATCH),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CrowdMota {
    EmptyStratum,
    Stratum { ids: Vec<i64>, report: ClearReport },
}

impl CrowdMota {
    pub fn mota(&self) -> Option<f64> {
        match self {
            CrowdMota::EmptyStratum => None,
            CrowdMota::Stratum { report, .. } => Some(report.mota()),
        }
    }
}

/// Ids with at least `min_duration` consecutive frames below [`CROWD_VISIBILITY`].
pub fn crowd_stratum(gt: &[MotRow], min_duration: u32) -> Result<Vec<i64>> {
    let mut per_id: BTreeMap<i64, Vec<(u32, f64)>> = BTreeMap::new();
    for r in gt.iter().filter(|r| r.is_scored_gt()) {
        if !r.has_visibility() {
            return Err(Error::Data(format!(
                "ground truth row at frame {} lacks visibility",
                r.frame
            )));
        }
        per_id.entry(r.id).or_default().push((r.frame, r.visibility));
    }
    let mut ids = Vec::new();
    for (id, mut v) in per_id {
        v.sort_by_key(|p| p.0);
        let (mut run, mut best, mut prev) = (0u32, 0u32, None);
        for (f, vis) in v {
            run = if vis < CROWD_VISIBILITY {
                if prev.is_some_and(|p: u32| p + 1 == f) && run > 0 {
                    run + 1
                } else {
                    1
                }
            } else {
                0
            };
            best = best.max(run);
            prev = Some(f);
        }
        if best >= min_duration.max(1) {
            ids.push(id);
        }
    }
    Ok(ids)
}

/// MOTA restricted to the crowd stratum. Hypotheses are matched against the
/// full ground truth; misses and switches count for stratum ids only, and
/// hypotheses matched to other ids are not false positives.
pub fn crowd_mota(gt: &[MotRow], hyp: &[MotRow], min_duration: u32) -> Result<CrowdMota> {
    let ids = crowd_stratum(gt, min_duration)?;
    if ids.is_empty() {
        return Ok(CrowdMota::EmptyStratum);
    }
    let set: BTreeSet<i64> = ids.iter().copied().collect();
    let report = clear_frames(
        &frames_of(gt, true),
        &frames_of(hyp, false),
        DEFAULT_IOU_MATCH,
        Some(&set),
    );
    Ok(CrowdMota::Stratum { ids, report })
}
