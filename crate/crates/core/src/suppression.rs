//! Track post-processing: temporal NMS over volume IoU, short-track removal
//! and static-content removal.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::flow::{FlowError, FlowField, FlowProvider};
use crate::geometry::viou;
use crate::scalar::Real;
use crate::track::Track;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionConfig {
    /// Tracks whose vIoU with a better track exceeds this are dropped.
    pub nms_viou: f64,
    /// Shortest track kept, in frames.
    pub min_length: usize,
    /// Tracks whose mean flow magnitude is below this (px/frame) are dropped.
    pub static_thresh: f64,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self {
            nms_viou: 0.5,
            min_length: 10,
            static_thresh: 1.0,
        }
    }
}

impl SuppressionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.nms_viou > 0.0 && self.nms_viou <= 1.0) {
            return Err(format!("nms_viou must lie in (0, 1], got {}", self.nms_viou));
        }
        if self.min_length == 0 {
            return Err("min_length must be at least 1".into());
        }
        if self.static_thresh.is_nan() || self.static_thresh < 0.0 {
            return Err(format!("static_thresh must be >= 0, got {}", self.static_thresh));
        }
        Ok(())
    }
}

/// Greedy NMS: take the best remaining track (highest `rank_score`, lower
/// id on ties) and drop every other track whose vIoU with it exceeds
/// `threshold`. Survivors come back best first.
pub fn temporal_nms<T: Real>(mut tracks: Vec<Track<T>>, threshold: T) -> Vec<Track<T>> {
    tracks.sort_by(|a, b| {
        b.rank_score
            .partial_cmp(&a.rank_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut kept: Vec<Track<T>> = Vec::new();
    for t in tracks {
        if kept.iter().all(|k| viou(k, &t) <= threshold) {
            kept.push(t);
        }
    }
    kept
}

pub fn filter_short<T>(tracks: Vec<Track<T>>, min_length: usize) -> Vec<Track<T>> {
    tracks
        .into_iter()
        .filter(|t| t.entries.len() >= min_length)
        .collect()
}

/// Mean over a track's entries of the mean flow magnitude inside each box.
///
/// The entry at frame `f` reads the field of pair `f -> f + 1`, falling back
/// to `f - 1 -> f` when that pair does not exist (the last frame of a
/// video). Entries whose box lies wholly outside the field are skipped; a
/// track with no measurable entry scores 0.
pub fn track_motion<T: Real>(
    tracks: &[Track<T>],
    flows: &dyn FlowProvider<T>,
) -> Result<Vec<T>, FlowError> {
    let mut by_frame: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (ei, e) in t.entries.iter().enumerate() {
            by_frame.entry(e.frame).or_default().push((ti, ei));
        }
    }

    let mut sums = vec![(T::zero(), 0usize); tracks.len()];
    for (frame, members) in by_frame {
        let field = field_for_entry(flows, frame)?;
        let Some(field) = field else {
            for (ti, _) in members {
                sums[ti].1 += 1;
            }
            continue;
        };
        for (ti, ei) in members {
            match field.mean_magnitude(&tracks[ti].entries[ei].bbox) {
                Ok(m) => {
                    sums[ti].0 = sums[ti].0 + m;
                    sums[ti].1 += 1;
                }
                Err(FlowError::EmptySupport { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(s, n)| if n == 0 { T::zero() } else { s / T::from_usize(n) })
        .collect())
}

fn field_for_entry<T: Real>(
    flows: &dyn FlowProvider<T>,
    frame: u32,
) -> Result<Option<Arc<FlowField<T>>>, FlowError> {
    match flows.field(frame) {
        Err(FlowError::MissingFlow { .. }) if frame > 0 => flows.field(frame - 1),
        other => other,
    }
}

/// Drops tracks whose mean flow magnitude is strictly below `static_thresh`.
pub fn filter_static<T: Real>(
    tracks: Vec<Track<T>>,
    flows: &dyn FlowProvider<T>,
    static_thresh: T,
) -> Result<Vec<Track<T>>, FlowError> {
    let motion = track_motion(&tracks, flows)?;
    Ok(tracks
        .into_iter()
        .zip(motion)
        .filter(|(_, m)| *m >= static_thresh)
        .map(|(t, _)| t)
        .collect())
}
