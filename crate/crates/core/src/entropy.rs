//! Classifier-entropy objectness: a confident (low-entropy) class
//! distribution marks a box as object-like, a spread-out one as background.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::track::{Track, TrackEntry};

/// Allowed deviation of a probability vector's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("{0}: probability vectors need at least 2 classes")]
    TooFewClasses(BoxRef),
    #[error("{at}: probability {value} at class {class} is negative or not finite")]
    BadProbability { at: BoxRef, class: usize, value: f64 },
    #[error("{at}: probabilities sum to {sum}")]
    BadSum { at: BoxRef, sum: f64 },
    #[error("entropy evaluation needs at least one vector")]
    EmptySelection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    #[inline]
    fn log<T: Real>(self, x: T) -> T {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e" | "natural" | "nat" => Ok(LogBase::Natural),
            "2" | "two" | "bit" => Ok(LogBase::Two),
            "10" | "ten" => Ok(LogBase::Ten),
            other => Err(format!("unknown log base {other:?} (use e, 2 or 10)")),
        }
    }
}

/// Identifies the classified box: a proposal of one frame of one video.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoxRef {
    pub video: String,
    pub frame: u32,
    pub proposal: u32,
}

impl BoxRef {
    pub fn new(video: impl Into<String>, frame: u32, proposal: u32) -> Self {
        Self {
            video: video.into(),
            frame,
            proposal,
        }
    }
}

impl std::fmt::Display for BoxRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.video, self.frame, self.proposal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T> {
    pub box_ref: BoxRef,
    pub probs: Vec<T>,
}

impl<T: Real> ProbVector<T> {
    pub fn new(box_ref: BoxRef, probs: Vec<T>) -> Result<Self, EntropyError> {
        let v = Self { box_ref, probs };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), EntropyError> {
        if self.probs.len() < 2 {
            return Err(EntropyError::TooFewClasses(self.box_ref.clone()));
        }
        let mut sum = 0f64;
        for (class, &p) in self.probs.iter().enumerate() {
            let p = p.to_f64_lossy();
            if !(p >= 0.0 && p.is_finite()) {
                return Err(EntropyError::BadProbability {
                    at: self.box_ref.clone(),
                    class,
                    value: p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(EntropyError::BadSum {
                at: self.box_ref.clone(),
                sum,
            });
        }
        Ok(())
    }
}

/// `-Σ p log p` in nats, with `0 log 0 = 0`.
pub fn shannon_entropy<T: Real>(p: &ProbVector<T>) -> Result<T, EntropyError> {
    shannon_entropy_in(p, LogBase::Natural)
}

pub fn shannon_entropy_in<T: Real>(p: &ProbVector<T>, base: LogBase) -> Result<T, EntropyError> {
    p.validate()?;
    let h = p
        .probs
        .iter()
        .filter(|&&x| x > T::zero())
        .fold(T::zero(), |acc, &x| acc - x * base.log(x));
    // Rounding can leave -0 or a hair below zero for one-hot inputs.
    Ok(h.max(T::zero()))
}

/// The matched entry with the highest proposal score, earliest frame on ties.
pub fn track_representative<T: Real>(track: &Track<T>) -> Option<&TrackEntry<T>> {
    track.matched().fold(None, |best: Option<&TrackEntry<T>>, e| match best {
        Some(b) if b.bbox.score >= e.bbox.score => Some(b),
        _ => Some(e),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub box_ref: BoxRef,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub base: LogBase,
    pub mean: f64,
    pub count: usize,
    pub items: Vec<ReportItem>,
}

impl EntropyReport {
    /// Mean entropy per caller-chosen group (class label, video, ...).
    pub fn grouped<K: Ord>(&self, mut key: impl FnMut(&BoxRef) -> K) -> BTreeMap<K, GroupStat> {
        let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
        for item in &self.items {
            let slot = acc.entry(key(&item.box_ref)).or_insert((0.0, 0));
            slot.0 += item.entropy;
            slot.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (s, n))| {
                (
                    k,
                    GroupStat {
                        mean: s / n as f64,
                        count: n,
                    },
                )
            })
            .collect()
    }
}

pub fn evaluate<T: Real>(selection: &[ProbVector<T>], base: LogBase) -> Result<EntropyReport, EntropyError> {
    if selection.is_empty() {
        return Err(EntropyError::EmptySelection);
    }
    let items = selection
        .iter()
        .map(|p| {
            Ok(ReportItem {
                box_ref: p.box_ref.clone(),
                entropy: shannon_entropy_in(p, base)?.to_f64_lossy(),
            })
        })
        .collect::<Result<Vec<_>, EntropyError>>()?;
    let mean = items.iter().map(|i| i.entropy).sum::<f64>() / items.len() as f64;
    Ok(EntropyReport {
        base,
        mean,
        count: items.len(),
        items,
    })
}
