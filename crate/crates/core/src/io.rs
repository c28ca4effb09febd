//! Text formats: proposals in, tracks in/out, classifier probabilities in/out,
//! and the run manifest written next to every output.
//!
//! All formats are UTF-8, line-feed terminated, with `.` as the decimal
//! separator. Blank lines and lines starting with `#` are ignored in the
//! whitespace-separated formats.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::builder::BuilderConfig;
use crate::entropy::{BoxRef, EntropyError, LogBase, ProbVector};
use crate::geometry::BBox;
use crate::scalar::Real;
use crate::suppression::SuppressionConfig;
use crate::track::{Track, TrackError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: video {video:?} goes back from frame {prev} to {next}")]
    NonMonotonicFrames {
        line: usize,
        video: String,
        prev: u32,
        next: u32,
    },
    #[error("line {line}: {error}")]
    InvalidTrack { line: usize, error: TrackError },
    #[error("line {line}: {error}")]
    InvalidProbs { line: usize, error: EntropyError },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IoError {
    fn parse(line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse {
            line,
            msg: msg.into(),
        }
    }
}

/// All retained proposals of one frame, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameProposals<T> {
    pub video_id: String,
    pub frame: u32,
    pub boxes: Vec<BBox<T>>,
    /// Raw (pre-normalization) score range of the whole video.
    pub raw_score_range: (T, T),
}

impl<T: Real> FrameProposals<T> {
    /// Frame with already-normalized boxes, sorted here by descending score.
    pub fn new(video_id: impl Into<String>, frame: u32, mut boxes: Vec<BBox<T>>) -> Self {
        sort_by_score(&mut boxes);
        Self {
            video_id: video_id.into(),
            frame,
            boxes,
            raw_score_range: (T::zero(), T::one()),
        }
    }
}

fn sort_by_score<T: Real>(boxes: &mut [BBox<T>]) {
    boxes.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
}

fn significant_lines<R: BufRead>(r: R) -> impl Iterator<Item = (usize, io::Result<String>)> {
    r.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| match l {
        Ok(s) => {
            let t = s.trim();
            !t.is_empty() && !t.starts_with('#')
        }
        Err(_) => true,
    })
}

fn field<F: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<F, IoError> {
    let tok = tok.ok_or_else(|| IoError::parse(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| IoError::parse(line, format!("bad {what} {tok:?}")))
}

fn finite(v: f64, line: usize, what: &str) -> Result<f64, IoError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IoError::parse(line, format!("{what} is not finite")))
    }
}

/// Reads `video frame x y w h score` records.
///
/// Scores are min-max normalized to `[0, 1]` per video (a video whose boxes
/// all share one score maps to 1), each frame is sorted by descending score
/// and cut to `top_k` boxes. Frames come back grouped by video in order of
/// first appearance, ascending within a video. Within a video, frame
/// indices must not decrease from one record to the next.
pub fn read_proposals<T: Real, R: BufRead>(r: R, top_k: usize) -> Result<Vec<FrameProposals<T>>, IoError> {
    struct Raw {
        frame: u32,
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        score: f64,
    }
    let mut videos: Vec<(String, Vec<Raw>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();

    for (line, text) in significant_lines(r) {
        let text = text?;
        let mut toks = text.split_whitespace();
        let video: String = field(toks.next(), line, "video id")?;
        let frame: u32 = field(toks.next(), line, "frame index")?;
        let mut num = |what| -> Result<f64, IoError> { finite(field(toks.next(), line, what)?, line, what) };
        let (x, y, w, h, score) = (num("x")?, num("y")?, num("w")?, num("h")?, num("score")?);
        if toks.next().is_some() {
            return Err(IoError::parse(line, "trailing fields"));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(IoError::parse(line, format!("box extent must be positive (w={w}, h={h})")));
        }
        let slot = *index.entry(video.clone()).or_insert_with(|| {
            videos.push((video.clone(), Vec::new()));
            videos.len() - 1
        });
        let records = &mut videos[slot].1;
        if let Some(prev) = records.last() {
            if frame < prev.frame {
                return Err(IoError::NonMonotonicFrames {
                    line,
                    video,
                    prev: prev.frame,
                    next: frame,
                });
            }
        }
        records.push(Raw {
            frame,
            x,
            y,
            w,
            h,
            score,
        });
    }
    if videos.is_empty() {
        return Err(IoError::parse(0, "no proposal records"));
    }

    let mut out = Vec::new();
    for (video, records) in videos {
        let lo = records.iter().map(|r| r.score).fold(f64::INFINITY, f64::min);
        let hi = records.iter().map(|r| r.score).fold(f64::NEG_INFINITY, f64::max);
        let normalize = |s: f64| if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
        for chunk in records.chunk_by(|a, b| a.frame == b.frame) {
            let mut boxes: Vec<BBox<T>> = chunk
                .iter()
                .map(|r| BBox {
                    x: T::from_f64(r.x),
                    y: T::from_f64(r.y),
                    w: T::from_f64(r.w),
                    h: T::from_f64(r.h),
                    score: T::from_f64(normalize(r.score)),
                })
                .collect();
            sort_by_score(&mut boxes);
            boxes.truncate(top_k);
            out.push(FrameProposals {
                video_id: video.clone(),
                frame: chunk[0].frame,
                boxes,
                raw_score_range: (T::from_f64(lo), T::from_f64(hi)),
            });
        }
    }
    Ok(out)
}

pub fn load_proposals<T: Real>(path: &Path, top_k: usize) -> Result<Vec<FrameProposals<T>>, IoError> {
    read_proposals(BufReader::new(File::open(path)?), top_k)
}

/// Writes frames as proposal records, scores as stored.
pub fn write_proposals<T: Real + std::fmt::Display, W: Write>(
    frames: &[FrameProposals<T>],
    mut w: W,
) -> Result<(), IoError> {
    for fp in frames {
        for b in &fp.boxes {
            writeln!(w, "{} {} {} {} {} {} {}", fp.video_id, fp.frame, b.x, b.y, b.w, b.h, b.score)?;
        }
    }
    Ok(())
}

/// Splits a frame list into runs of the same video.
pub fn split_videos<T>(frames: &[FrameProposals<T>]) -> Vec<&[FrameProposals<T>]> {
    frames.chunk_by(|a, b| a.video_id == b.video_id).collect()
}

/// One JSON object per line, one line per track.
pub fn write_tracks<T: Serialize, W: Write>(tracks: &[Track<T>], mut w: W) -> Result<(), IoError> {
    for t in tracks {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads and validates a tracks file: every track must be gapless and start
/// and end on a matched entry.
pub fn read_tracks<T: Real + DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<Track<T>>, IoError> {
    let mut out = Vec::new();
    for (line, text) in significant_lines(r) {
        let text = text?;
        let track: Track<T> = serde_json::from_str(&text).map_err(|e| IoError::parse(line, e.to_string()))?;
        track
            .validate()
            .map_err(|error| IoError::InvalidTrack { line, error })?;
        out.push(track);
    }
    Ok(out)
}

pub fn save_tracks<T: Serialize>(tracks: &[Track<T>], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tracks(tracks, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_tracks<T: Real + DeserializeOwned>(path: &Path) -> Result<Vec<Track<T>>, IoError> {
    read_tracks(BufReader::new(File::open(path)?))
}

/// Classifier outputs keyed by box.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable<T> {
    pub n_classes: usize,
    pub records: BTreeMap<BoxRef, ProbVector<T>>,
}

impl<T> ProbTable<T> {
    pub fn get(&self, key: &BoxRef) -> Option<&ProbVector<T>> {
        self.records.get(key)
    }
}

/// Reads `NPROB <N>` followed by `video frame proposal p1 .. pN` records.
/// A repeated key keeps the last record.
pub fn read_probs<T: Real, R: BufRead>(r: R) -> Result<ProbTable<T>, IoError> {
    let mut lines = significant_lines(r);
    let (line, header) = lines.next().ok_or_else(|| IoError::parse(0, "empty probability file"))?;
    let header = header?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("NPROB") {
        return Err(IoError::parse(line, "expected header `NPROB <N>`"));
    }
    let n: usize = field(toks.next(), line, "class count")?;
    if n < 2 || toks.next().is_some() {
        return Err(IoError::parse(line, "header needs a class count of at least 2"));
    }

    let mut records = BTreeMap::new();
    for (line, text) in lines {
        let text = text?;
        let mut toks = text.split_whitespace();
        let video: String = field(toks.next(), line, "video id")?;
        let frame: u32 = field(toks.next(), line, "frame index")?;
        let proposal: u32 = field(toks.next(), line, "box index")?;
        let probs = toks
            .map(|t| {
                t.parse::<f64>()
                    .map(T::from_f64)
                    .map_err(|_| IoError::parse(line, format!("bad probability {t:?}")))
            })
            .collect::<Result<Vec<T>, _>>()?;
        if probs.len() != n {
            return Err(IoError::parse(line, format!("expected {n} probabilities, found {}", probs.len())));
        }
        let key = BoxRef::new(video, frame, proposal);
        let v = ProbVector::new(key.clone(), probs).map_err(|error| IoError::InvalidProbs { line, error })?;
        records.insert(key, v);
    }
    Ok(ProbTable { n_classes: n, records })
}

pub fn load_probs<T: Real>(path: &Path) -> Result<ProbTable<T>, IoError> {
    read_probs(BufReader::new(File::open(path)?))
}

pub fn write_probs<T: Real + std::fmt::Display, W: Write>(
    n_classes: usize,
    vectors: &[ProbVector<T>],
    mut w: W,
) -> Result<(), IoError> {
    writeln!(w, "NPROB {n_classes}")?;
    for v in vectors {
        write!(w, "{} {} {}", v.box_ref.video, v.box_ref.frame, v.box_ref.proposal)?;
        for p in &v.probs {
            write!(w, " {p}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce an output: the full configuration, the
/// tool version and content hashes of the inputs. Equal manifests imply
/// byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub builder: BuilderConfig,
    pub suppression: SuppressionConfig,
    pub lambda: f64,
    pub log_base: LogBase,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            builder: BuilderConfig::default(),
            suppression: SuppressionConfig::default(),
            lambda: 0.5,
            log_base: LogBase::Natural,
            options: BTreeMap::new(),
            inputs: Vec::new(),
        }
    }

    pub fn with_option(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.to_string(), value.to_string());
        self
    }

    /// Records `path` with its content hash (see [`digest_path`]).
    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: digest_path(path)?,
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Sidecar manifest path for an output: `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's bytes; for a directory, SHA-256 over its sorted
/// regular files as `name NUL digest NUL` pairs.
pub fn digest_path(path: &Path) -> io::Result<String> {
    if path.is_dir() {
        let mut names: Vec<(String, PathBuf)> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
            .collect();
        names.sort();
        let mut h = Sha256::new();
        for (name, p) in names {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(digest_path(&p)?.as_bytes());
            h.update([0]);
        }
        Ok(hex(&h.finalize()))
    } else {
        Ok(hex(&Sha256::digest(std::fs::read(path)?)))
    }
}
