//! Links per-frame proposals into tracks.
//!
//! Each transition `i -> i + 1` walks the live tracks oldest first. A track's
//! reference box is moved by the mean flow inside it and compared against
//! every unclaimed proposal of the next frame; the best IoU above
//! `theta_tau` extends the track. The time-to-live counter goes up by one
//! (capped at `gamma`) on a match and down by one on a miss, and the track
//! ends when it reaches zero. While a track is missing, its reference keeps
//! drifting with the flow. Unclaimed proposals seed new tracks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{offset_or_zero, FlowError, FlowField, FlowProvider};
use crate::geometry::{iou, BBox};
use crate::io::FrameProposals;
use crate::scalar::Real;
use crate::track::{Track, TrackEntry};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("no flow for frame pair {frame} -> {}", frame + 1)]
    MissingFlow { frame: u32 },
    #[error(transparent)]
    Flow(FlowError),
    #[error("frames must be strictly increasing: {prev} then {next}")]
    NonMonotonicFrames { prev: u32, next: u32 },
    #[error("frames from several videos ({0} and {1}) passed to one build")]
    MixedVideos(String, String),
    #[error("entries at frames {before} and {after} leave no gap to fill")]
    NotAGap { before: u32, after: u32 },
    #[error("invalid builder config: {0}")]
    Config(String),
}

impl From<FlowError> for BuildError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::MissingFlow { frame } => BuildError::MissingFlow { frame },
            other => BuildError::Flow(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuilderConfig {
    /// Minimum IoU (exclusive) for a match.
    pub theta_tau: f64,
    /// Initial and maximum time-to-live.
    pub gamma: u32,
    /// Proposals considered per frame.
    pub top_k: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            theta_tau: 0.5,
            gamma: 5,
            top_k: 25,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.theta_tau > 0.0 && self.theta_tau < 1.0) {
            return Err(BuildError::Config(format!(
                "theta_tau must lie in (0, 1), got {}",
                self.theta_tau
            )));
        }
        if self.gamma == 0 {
            return Err(BuildError::Config("gamma must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(BuildError::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

struct LiveTrack<T> {
    id: u64,
    entries: Vec<TrackEntry<T>>,
    /// Last matched box, displaced by the flow accumulated since.
    reference: BBox<T>,
    ttl: u32,
}

/// Runs the linking loop over the frames of one video and returns the
/// finalized tracks ordered by id.
pub fn build_tracks<T: Real>(
    frames: &[FrameProposals<T>],
    flows: &dyn FlowProvider<T>,
    cfg: &BuilderConfig,
) -> Result<Vec<Track<T>>, BuildError> {
    cfg.validate()?;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    for pair in frames.windows(2) {
        if pair[1].video_id != pair[0].video_id {
            return Err(BuildError::MixedVideos(
                pair[0].video_id.clone(),
                pair[1].video_id.clone(),
            ));
        }
        if pair[1].frame <= pair[0].frame {
            return Err(BuildError::NonMonotonicFrames {
                prev: pair[0].frame,
                next: pair[1].frame,
            });
        }
    }
    let video = first.video_id.clone();
    let theta = T::from_f64(cfg.theta_tau);
    let last_frame = frames.last().map(|f| f.frame).unwrap_or(first.frame);

    let mut next_id = 0u64;
    let mut live: Vec<LiveTrack<T>> = Vec::new();
    let mut finished: Vec<LiveTrack<T>> = Vec::new();
    let mut seed = |live: &mut Vec<LiveTrack<T>>, frame: u32, k: usize, b: &BBox<T>| {
        live.push(LiveTrack {
            id: next_id,
            entries: vec![TrackEntry::matched(frame, *b, None, Some(k as u32))],
            reference: *b,
            ttl: cfg.gamma,
        });
        next_id += 1;
    };

    for (k, b) in first.boxes.iter().take(cfg.top_k).enumerate() {
        seed(&mut live, first.frame, k, b);
    }

    let mut cursor = 1;
    for frame in first.frame + 1..=last_frame {
        let candidates: &[BBox<T>] = match frames.get(cursor) {
            Some(fp) if fp.frame == frame => {
                cursor += 1;
                &fp.boxes[..fp.boxes.len().min(cfg.top_k)]
            }
            _ => &[],
        };
        let field: Option<Arc<FlowField<T>>> = flows.field(frame - 1)?;
        let mut consumed = vec![false; candidates.len()];

        let mut survivors = Vec::with_capacity(live.len());
        for mut track in live.drain(..) {
            let (ox, oy) = offset_or_zero(field.as_deref(), &track.reference);
            let probe = track.reference.shifted(ox, oy);

            let mut best: Option<(usize, T)> = None;
            for (k, cand) in candidates.iter().enumerate() {
                if consumed[k] {
                    continue;
                }
                let v = iou(&probe, cand);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }

            match best {
                Some((k, v)) if v > theta => {
                    consumed[k] = true;
                    let cand = candidates[k];
                    track
                        .entries
                        .push(TrackEntry::matched(frame, cand, Some(v), Some(k as u32)));
                    track.reference = cand;
                    track.ttl = (track.ttl + 1).min(cfg.gamma);
                }
                _ => {
                    track.reference = probe;
                    track.ttl -= 1;
                }
            }

            if track.ttl == 0 {
                finished.push(track);
            } else {
                survivors.push(track);
            }
        }
        live = survivors;

        for (k, cand) in candidates.iter().enumerate() {
            if !consumed[k] {
                seed(&mut live, frame, k, cand);
            }
        }
    }
    finished.append(&mut live);

    let mut tracks = finished
        .into_iter()
        .map(|t| finalize(t, &video))
        .collect::<Result<Vec<_>, _>>()?;
    tracks.sort_by_key(|t| t.id);
    Ok(tracks)
}

fn finalize<T: Real>(live: LiveTrack<T>, video: &str) -> Result<Track<T>, BuildError> {
    let mut entries = Vec::with_capacity(live.entries.len());
    let mut it = live.entries.into_iter();
    let mut prev = it.next().expect("live tracks hold their seed entry");
    for next in it {
        if next.frame - prev.frame >= 2 {
            let fill = interpolate_gap(&prev, &next)?;
            entries.push(prev);
            entries.extend(fill);
        } else {
            entries.push(prev);
        }
        prev = next;
    }
    entries.push(prev);
    let mut track = Track::from_entries(live.id, video, entries);
    track.refresh_scores();
    Ok(track)
}

/// Linearly interpolated entries for every frame strictly between `before`
/// and `after`. Interpolated boxes carry score 0.
pub fn interpolate_gap<T: Real>(
    before: &TrackEntry<T>,
    after: &TrackEntry<T>,
) -> Result<Vec<TrackEntry<T>>, BuildError> {
    if after.frame < before.frame + 2 {
        return Err(BuildError::NotAGap {
            before: before.frame,
            after: after.frame,
        });
    }
    let span = T::from_usize((after.frame - before.frame) as usize);
    let (a, b) = (&before.bbox, &after.bbox);
    let lerp = |p: T, q: T, k: T| p + (q - p) * k / span;
    Ok((before.frame + 1..after.frame)
        .map(|frame| {
            let k = T::from_usize((frame - before.frame) as usize);
            TrackEntry::interpolated(
                frame,
                BBox::unscored(lerp(a.x, b.x, k), lerp(a.y, b.y, k), lerp(a.w, b.w, k), lerp(a.h, b.h, k)),
            )
        })
        .collect())
}
