//! Tracklet lifecycle and history buffers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{offset_between, BBox, Detection, Offset};

/// Default number of alive locations kept for long-range matching.
pub const WINDOW_LEN: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrackState {
    Alive,
    Lost,
    Dead,
}

/// How a history entry came to be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryKind {
    /// A matched detection.
    Observed,
    /// A motion prediction recorded while the tracklet was lost.
    Predicted,
    /// A prediction corrected after the tracklet was found again.
    Compensated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub frame: u32,
    pub bbox: BBox,
    pub kind: EntryKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub id: u64,
    pub state: TrackState,
    pub birth_frame: u32,
    pub lost_frame: Option<u32>,
    history: Vec<HistoryEntry>,
    pub last_offset: Offset,
}

impl Tracklet {
    fn new(id: u64, det: &Detection) -> Self {
        Self {
            id,
            state: TrackState::Alive,
            birth_frame: det.frame,
            lost_frame: None,
            history: vec![HistoryEntry {
                frame: det.frame,
                bbox: det.bbox,
                kind: EntryKind::Observed,
            }],
            last_offset: Offset::ZERO,
        }
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn newest(&self) -> &HistoryEntry {
        // history is never empty
        self.history.last().expect("tracklet history is never empty")
    }

    pub fn newest_frame(&self) -> u32 {
        self.newest().frame
    }

    /// The most recent matched detection.
    pub fn last_observed(&self) -> Option<&HistoryEntry> {
        self.history.iter().rev().find(|e| e.kind == EntryKind::Observed)
    }

    pub fn is_alive(&self) -> bool {
        self.state == TrackState::Alive
    }

    pub fn is_lost(&self) -> bool {
        self.state == TrackState::Lost
    }

    fn recompute_offset(&mut self) {
        let n = self.history.len();
        self.last_offset = if n >= 2 {
            offset_between(&self.history[n - 2].bbox, &self.history[n - 1].bbox)
        } else {
            Offset::ZERO
        };
    }

    /// Appends a matched detection for the next frame and marks the tracklet alive.
    pub fn update_alive(&mut self, det: &Detection) -> Result<()> {
        if self.state == TrackState::Dead {
            return Err(Error::Contract(format!("tracklet {} is dead", self.id)));
        }
        let expected = self.newest_frame() + 1;
        if det.frame != expected {
            return Err(Error::Contract(format!(
                "tracklet {}: detection at frame {} but next frame is {}",
                self.id, det.frame, expected
            )));
        }
        self.history.push(HistoryEntry {
            frame: det.frame,
            bbox: det.bbox,
            kind: EntryKind::Observed,
        });
        self.state = TrackState::Alive;
        self.lost_frame = None;
        self.recompute_offset();
        Ok(())
    }

    /// Records the motion prediction for the next frame and marks the tracklet lost.
    pub fn mark_lost(&mut self, predicted: BBox) -> Result<()> {
        if self.state == TrackState::Dead {
            return Err(Error::Contract(format!("tracklet {} is dead", self.id)));
        }
        let frame = self.newest_frame() + 1;
        self.history.push(HistoryEntry {
            frame,
            bbox: predicted,
            kind: EntryKind::Predicted,
        });
        if self.state == TrackState::Alive {
            self.state = TrackState::Lost;
            self.lost_frame = Some(frame);
        }
        self.recompute_offset();
        Ok(())
    }

    /// Removes and returns the newest prediction if it belongs to `frame`.
    pub fn pop_prediction_at(&mut self, frame: u32) -> Option<BBox> {
        let e = self.history.last()?;
        if e.frame == frame && e.kind == EntryKind::Predicted && self.history.len() > 1 {
            let e = self.history.pop()?;
            if self.lost_frame == Some(frame) {
                // the tracklet was alive until this very frame
                self.state = TrackState::Alive;
                self.lost_frame = None;
            }
            self.recompute_offset();
            Some(e.bbox)
        } else {
            None
        }
    }

    /// Frames and boxes of the trailing run of predictions.
    pub fn occlusion_predictions(&self) -> Vec<(u32, BBox)> {
        self.history
            .iter()
            .rev()
            .take_while(|e| e.kind == EntryKind::Predicted)
            .map(|e| (e.frame, e.bbox))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect()
    }

    /// Overwrites the trailing predictions with corrected boxes (same frames,
    /// same order) and flags them as compensated.
    pub fn replace_predictions(&mut self, corrected: &[(u32, BBox)]) -> Result<()> {
        let n = corrected.len();
        let start = self
            .history
            .len()
            .checked_sub(n)
            .ok_or_else(|| Error::Contract(format!("tracklet {}: too many corrected boxes", self.id)))?;
        for (entry, (frame, bbox)) in self.history[start..].iter_mut().zip(corrected) {
            if entry.frame != *frame || entry.kind != EntryKind::Predicted {
                return Err(Error::Contract(format!(
                    "tracklet {}: no prediction recorded at frame {}",
                    self.id, frame
                )));
            }
            entry.bbox = *bbox;
            entry.kind = EntryKind::Compensated;
        }
        self.recompute_offset();
        Ok(())
    }

    /// The last `n` observed locations, oldest first. Shorter histories are
    /// left-padded by repeating the earliest observed entry.
    pub fn history_window(&self, n: usize) -> Result<Vec<(u32, BBox)>> {
        let mut observed: Vec<(u32, BBox)> = self
            .history
            .iter()
            .rev()
            .filter(|e| e.kind == EntryKind::Observed)
            .take(n)
            .map(|e| (e.frame, e.bbox))
            .collect();
        let Some(&earliest) = observed.last() else {
            return Err(Error::Contract(format!("tracklet {} has no observed entries", self.id)));
        };
        while observed.len() < n {
            observed.push(earliest);
        }
        observed.reverse();
        Ok(observed)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Contract(format!("tracklet {}: {msg}", self.id)));
        if self.history.is_empty() {
            return fail("empty history".into());
        }
        if self.history[0].frame != self.birth_frame {
            return fail("history does not start at birth".into());
        }
        for w in self.history.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return fail(format!("gap between frames {} and {}", w[0].frame, w[1].frame));
            }
        }
        if self.history[0].kind != EntryKind::Observed {
            return fail("first entry is not observed".into());
        }
        match self.state {
            TrackState::Alive => {
                if self.newest().kind != EntryKind::Observed {
                    return fail("alive but newest entry is not observed".into());
                }
                if self.lost_frame.is_some() {
                    return fail("alive with a lost frame".into());
                }
            }
            TrackState::Lost => {
                let Some(lf) = self.lost_frame else {
                    return fail("lost without a lost frame".into());
                };
                let tail_ok = self
                    .history
                    .iter()
                    .filter(|e| e.frame >= lf)
                    .all(|e| e.kind == EntryKind::Predicted);
                let before = self.history.iter().find(|e| e.frame + 1 == lf);
                if !tail_ok || before.map(|e| e.kind) == Some(EntryKind::Predicted) {
                    return fail("lost tail is not a run of predictions".into());
                }
            }
            TrackState::Dead => {}
        }
        Ok(())
    }
}

/// All non-dead tracklets of one sequence.
#[derive(Clone, Debug, Default)]
pub struct TrackStore {
    tracklets: BTreeMap<u64, Tracklet>,
    next_id: u64,
}

impl TrackStore {
    pub fn new() -> Self {
        Self {
            tracklets: BTreeMap::new(),
            next_id: 1,
        }
    }

    /// Starts a tracklet from `det` if its score reaches `init_threshold`.
    pub fn spawn(&mut self, det: &Detection, init_threshold: f64) -> Option<u64> {
        if det.score < init_threshold {
            return None;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.tracklets.insert(id, Tracklet::new(id, det));
        Some(id)
    }

    pub fn get(&self, id: u64) -> Option<&Tracklet> {
        self.tracklets.get(&id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut Tracklet> {
        self.tracklets.get_mut(&id)
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    /// Non-dead tracklets in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.values()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.tracklets.keys().copied().collect()
    }

    pub fn alive_ids(&self) -> Vec<u64> {
        self.iter().filter(|t| t.is_alive()).map(|t| t.id).collect()
    }

    pub fn lost_ids(&self) -> Vec<u64> {
        self.iter().filter(|t| t.is_lost()).map(|t| t.id).collect()
    }

    /// Removes tracklets lost for more than `max_lost_age` frames.
    pub fn reap(&mut self, current_frame: u32, max_lost_age: u32) -> Vec<u64> {
        let expired: Vec<u64> = self
            .iter()
            .filter(|t| match (t.state, t.lost_frame) {
                (TrackState::Lost, Some(lf)) => current_frame.saturating_sub(lf) > max_lost_age,
                _ => false,
            })
            .map(|t| t.id)
            .collect();
        for id in &expired {
            if let Some(mut t) = self.tracklets.remove(id) {
                t.state = TrackState::Dead;
            }
        }
        expired
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (id, t) in &self.tracklets {
            if *id != t.id {
                return Err(Error::Contract(format!("tracklet {} stored under id {id}", t.id)));
            }
            if *id >= self.next_id {
                return Err(Error::Contract(format!("id {id} was never issued")));
            }
            if t.state == TrackState::Dead {
                return Err(Error::Contract(format!("dead tracklet {id} still stored")));
            }
            t.check_invariants()?;
        }
        Ok(())
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }
}
