//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use crowdtrack::evalio::{ClearReport, IdReport, MotRow};
use crowdtrack::nnet::Tensor;
use crowdtrack::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes straight to the process stderr so the line survives test output capture.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion:>2}: {verdict}  {detail}");
}

pub fn report_skip(criterion: u32, detail: &str) {
    let _ = writeln!(std::io::stderr(), "criterion {criterion:>2}: SKIP  {detail}");
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Independent IoU on corner coordinates.
pub fn corner_iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = (a.x - a.w / 2.0, a.y - a.h / 2.0, a.x + a.w / 2.0, a.y + a.h / 2.0);
    let (bx0, by0, bx1, by1) = (b.x - b.w / 2.0, b.y - b.h / 2.0, b.x + b.w / 2.0, b.y + b.h / 2.0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    // ordered selections of k distinct values from 0..n
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n, k - 1) {
        for v in 0..n {
            if !p.contains(&v) {
                let mut q = p.clone();
                q.push(v);
                out.push(q);
            }
        }
    }
    out
}

/// Minimum total cost over all assignments matching every row (rows <= cols)
/// or every column (rows > cols).
pub fn brute_min_cost(cost: &Tensor) -> f64 {
    let (n, m) = cost.shape();
    let at = |r: usize, c: usize| if n <= m { cost.get(r, c) } else { cost.get(c, r) };
    let (small, large) = (n.min(m), n.max(m));
    permutations(large, small)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| at(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

type Frames = BTreeMap<u32, Vec<(i64, BBox)>>;

fn frames(rows: &[MotRow], gt: bool) -> Frames {
    let mut f: Frames = BTreeMap::new();
    for r in rows {
        if gt && r.score == 0.0 {
            continue;
        }
        let b = BBox::new(r.left + r.width / 2.0, r.top + r.height / 2.0, r.width, r.height);
        f.entry(r.frame).or_default().push((r.id, b));
    }
    f
}

/// Best matching of free gt rows to free hyp rows: most pairs with IoU at
/// least `thr`, then least total `1 - IoU`. Found by exhaustive search.
fn best_matching(g: &[BBox], h: &[BBox], thr: f64) -> Vec<(usize, usize)> {
    fn rec(
        i: usize,
        g: &[BBox],
        h: &[BBox],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (usize, f64, Vec<(usize, usize)>),
    ) {
        if i == g.len() {
            let cost: f64 = cur.iter().map(|&(a, b)| 1.0 - corner_iou(&g[a], &h[b])).sum();
            if cur.len() > best.0 || (cur.len() == best.0 && cost < best.1 - 1e-12) {
                *best = (cur.len(), cost, cur.clone());
            }
            return;
        }
        rec(i + 1, g, h, thr, used, cur, best);
        for j in 0..h.len() {
            if !used[j] && corner_iou(&g[i], &h[j]) >= thr {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, g, h, thr, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY, Vec::new());
    rec(0, g, h, thr, &mut vec![false; h.len()], &mut Vec::new(), &mut best);
    best.2
}

/// CLEAR MOT counts by the textbook procedure with exhaustive per-frame matching.
pub fn brute_clear(gt: &[MotRow], hyp: &[MotRow], thr: f64) -> ClearReport {
    let (gf, hf) = (frames(gt, true), frames(hyp, false));
    let all: BTreeSet<u32> = gf.keys().chain(hf.keys()).copied().collect();
    let mut mapping: HashMap<i64, i64> = HashMap::new();
    let mut tracked_before: HashMap<i64, bool> = HashMap::new();
    let mut was_matched: HashMap<i64, bool> = HashMap::new();
    let mut rep = ClearReport::default();
    for f in all {
        let g = gf.get(&f).cloned().unwrap_or_default();
        let h = hf.get(&f).cloned().unwrap_or_default();
        let mut gm: Vec<Option<usize>> = vec![None; g.len()];
        let mut hu = vec![false; h.len()];
        for (i, (gid, gb)) in g.iter().enumerate() {
            if let Some(hid) = mapping.get(gid) {
                if let Some(j) = h.iter().position(|(id, hb)| id == hid && corner_iou(gb, hb) >= thr) {
                    if !hu[j] {
                        gm[i] = Some(j);
                        hu[j] = true;
                    }
                }
            }
        }
        let fg: Vec<usize> = (0..g.len()).filter(|&i| gm[i].is_none()).collect();
        let fh: Vec<usize> = (0..h.len()).filter(|&j| !hu[j]).collect();
        let gb: Vec<BBox> = fg.iter().map(|&i| g[i].1).collect();
        let hb: Vec<BBox> = fh.iter().map(|&j| h[j].1).collect();
        for (a, b) in best_matching(&gb, &hb, thr) {
            let (i, j) = (fg[a], fh[b]);
            gm[i] = Some(j);
            hu[j] = true;
            if let Some(prev) = mapping.get(&g[i].0) {
                if *prev != h[j].0 {
                    rep.ids += 1;
                }
            }
        }
        for (i, (gid, _)) in g.iter().enumerate() {
            rep.num_gt += 1;
            match gm[i] {
                Some(j) => {
                    rep.matches += 1;
                    if tracked_before.get(gid) == Some(&true) && was_matched.get(gid) == Some(&false) {
                        rep.frag += 1;
                    }
                    tracked_before.insert(*gid, true);
                    mapping.insert(*gid, h[j].0);
                    was_matched.insert(*gid, true);
                }
                None => {
                    rep.fn_ += 1;
                    was_matched.insert(*gid, false);
                }
            }
        }
        rep.fp += hu.iter().filter(|u| !**u).count();
    }
    rep
}

/// IDF1 counts by enumerating every one-to-one gt/hyp identity mapping.
pub fn brute_idf1(gt: &[MotRow], hyp: &[MotRow], thr: f64) -> IdReport {
    let (gf, hf) = (frames(gt, true), frames(hyp, false));
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
    let overlap = |gid: i64, hid: i64| -> usize {
        gf.iter()
            .filter_map(|(f, g)| {
                let gb = g.iter().find(|p| p.0 == gid)?.1;
                let hb = hf.get(f)?.iter().find(|p| p.0 == hid)?.1;
                (corner_iou(&gb, &hb) >= thr).then_some(1)
            })
            .sum()
    };
    // assign each gt id a distinct hyp id or nothing
    fn rec(i: usize, gids: &[i64], hids: &[i64], used: &mut Vec<bool>, ov: &dyn Fn(i64, i64) -> usize) -> usize {
        if i == gids.len() {
            return 0;
        }
        let mut best = rec(i + 1, gids, hids, used, ov);
        for j in 0..hids.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(ov(gids[i], hids[j]) + rec(i + 1, gids, hids, used, ov));
                used[j] = false;
            }
        }
        best
    }
    let idtp = rec(0, &gids, &hids, &mut vec![false; hids.len()], &overlap);
    let n_gt: usize = gf.values().map(Vec::len).sum();
    let n_hyp: usize = hf.values().map(Vec::len).sum();
    IdReport {
        idtp,
        idfp: n_hyp - idtp,
        idfn: n_gt - idtp,
    }
}

/// A small random tracking fixture: a few walkers as ground truth, and a
/// hypothesis with jitter, dropouts, identity swaps and stray boxes.
pub fn random_fixture(seed: u64) -> (Vec<MotRow>, Vec<MotRow>) {
    let mut r = rng(seed);
    let n_ids = r.random_range(1..=4);
    let frames = r.random_range(3..=15);
    let mut gt = Vec::new();
    let mut hyp = Vec::new();
    let starts: Vec<(f64, f64, f64)> = (0..n_ids)
        .map(|_| {
            (
                r.random_range(50.0..250.0),
                r.random_range(50.0..150.0),
                r.random_range(-12.0..12.0),
            )
        })
        .collect();
    let mut label: Vec<i64> = (0..n_ids as i64).map(|i| 10 + i).collect();
    for f in 1..=frames {
        if n_ids >= 2 && r.random_bool(0.15) {
            let (a, b) = (r.random_range(0..n_ids), r.random_range(0..n_ids));
            label.swap(a, b);
        }
        if r.random_bool(0.1) {
            let k = r.random_range(0..n_ids);
            label[k] = 100 + f as i64;
        }
        for (k, &(x0, y0, vx)) in starts.iter().enumerate() {
            if r.random_bool(0.1) {
                continue;
            }
            let b = BBox::new(x0 + vx * f as f64, y0, 30.0, 60.0);
            let consider = if r.random_bool(0.05) { 0.0 } else { 1.0 };
            let mut row = MotRow::gt(f, k as i64 + 1, &b, 1.0);
            row.score = consider;
            gt.push(row);
            if r.random_bool(0.15) {
                continue;
            }
            let j = BBox::new(
                b.x + r.random_range(-14.0..14.0),
                b.y + r.random_range(-10.0..10.0),
                30.0,
                60.0,
            );
            hyp.push(MotRow::det(f, label[k], &j, 0.9));
        }
        if r.random_bool(0.2) {
            let b = BBox::new(r.random_range(0.0..400.0), r.random_range(0.0..200.0), 30.0, 60.0);
            hyp.push(MotRow::det(f, 500 + f as i64, &b, 0.5));
        }
    }
    (gt, hyp)
}
