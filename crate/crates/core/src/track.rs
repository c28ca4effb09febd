//! Track and track-entry types shared by the builder, the post-processing
//! stages and the file formats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::{mean, Real, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// A proposal box that was seeded or matched.
    Matched,
    /// A box filled in by linear interpolation across a gap.
    Interpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry<T> {
    pub frame: u32,
    #[serde(rename = "box")]
    pub bbox: BBox<T>,
    pub provenance: Provenance,
    /// IoU of the (motion-compensated) reference against this box. Absent on
    /// the seed entry and on interpolated entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_iou: Option<T>,
    /// Position of the box among its frame's proposals (descending score).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal: Option<u32>,
}

impl<T> TrackEntry<T> {
    pub fn matched(frame: u32, bbox: BBox<T>, match_iou: Option<T>, proposal: Option<u32>) -> Self {
        Self {
            frame,
            bbox,
            provenance: Provenance::Matched,
            match_iou,
            proposal,
        }
    }

    pub fn interpolated(frame: u32, bbox: BBox<T>) -> Self {
        Self {
            frame,
            bbox,
            provenance: Provenance::Interpolated,
            match_iou: None,
            proposal: None,
        }
    }

    #[inline]
    pub fn is_matched(&self) -> bool {
        self.provenance == Provenance::Matched
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackError {
    #[error("track {0} has no entries")]
    Empty(u64),
    #[error("track {id}: frame {frame} does not follow frame {prev} (tracks must be gapless)")]
    Gap { id: u64, prev: u32, frame: u32 },
    #[error("track {0} must start and end on matched entries")]
    UnmatchedEnd(u64),
    #[error("track {id}: interpolated entry at frame {frame} carries match data")]
    InterpolatedWithMatch { id: u64, frame: u32 },
    #[error("track {id}: invalid box at frame {frame}: {reason}")]
    InvalidBox { id: u64, frame: u32, reason: String },
}

/// A gapless, time-indexed run of boxes believed to follow one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track<T> {
    pub id: u64,
    pub video: String,
    pub entries: Vec<TrackEntry<T>>,
    /// Mean proposal score over matched entries.
    pub e_score: T,
    /// Mean match IoU; 0 when the track never matched.
    pub i_score: T,
    /// Weighted combination of the two, filled in by ranking.
    pub rank_score: T,
}

impl<T: Scalar> Track<T> {
    /// Track with zeroed score components. Call [`Track::refresh_scores`]
    /// (float scalars) to fill `e_score`/`i_score`.
    pub fn from_entries(id: u64, video: impl Into<String>, entries: Vec<TrackEntry<T>>) -> Self {
        Self {
            id,
            video: video.into(),
            entries,
            e_score: T::zero(),
            i_score: T::zero(),
            rank_score: T::zero(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.entries.first().map(|e| e.frame)
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.entries.last().map(|e| e.frame)
    }

    pub fn entry_at(&self, frame: u32) -> Option<&TrackEntry<T>> {
        self.entries
            .binary_search_by_key(&frame, |e| e.frame)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn box_at(&self, frame: u32) -> Option<&BBox<T>> {
        self.entry_at(frame).map(|e| &e.bbox)
    }

    pub fn matched(&self) -> impl Iterator<Item = &TrackEntry<T>> {
        self.entries.iter().filter(|e| e.is_matched())
    }

    /// Checks the finalized-track invariants: nonempty, gapless, matched at
    /// both ends, interpolated entries free of match data, valid boxes.
    pub fn validate(&self) -> Result<(), TrackError> {
        let (Some(first), Some(last)) = (self.entries.first(), self.entries.last()) else {
            return Err(TrackError::Empty(self.id));
        };
        if !first.is_matched() || !last.is_matched() {
            return Err(TrackError::UnmatchedEnd(self.id));
        }
        for pair in self.entries.windows(2) {
            if pair[1].frame != pair[0].frame + 1 {
                return Err(TrackError::Gap {
                    id: self.id,
                    prev: pair[0].frame,
                    frame: pair[1].frame,
                });
            }
        }
        for e in &self.entries {
            if !e.is_matched() && (e.match_iou.is_some() || e.proposal.is_some()) {
                return Err(TrackError::InterpolatedWithMatch {
                    id: self.id,
                    frame: e.frame,
                });
            }
            e.bbox.validate().map_err(|err| TrackError::InvalidBox {
                id: self.id,
                frame: e.frame,
                reason: err.to_string(),
            })?;
        }
        Ok(())
    }
}

impl<T: Real> Track<T> {
    /// Recomputes `e_score` (mean score of matched boxes) and `i_score`
    /// (mean match IoU, 0 without matches).
    pub fn refresh_scores(&mut self) {
        self.e_score = mean(self.matched().map(|e| e.bbox.score)).unwrap_or_else(T::zero);
        self.i_score = mean(self.entries.iter().filter_map(|e| e.match_iou)).unwrap_or_else(T::zero);
    }
}
