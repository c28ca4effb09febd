//! End-to-end processing of one video: build, drop short tracks, drop
//! static tracks, score and rank, then temporal NMS.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{build_tracks, BuildError, BuilderConfig};
use crate::flow::{FlowError, FlowProvider};
use crate::io::FrameProposals;
use crate::ranking::rank_tracks;
use crate::scalar::Real;
use crate::suppression::{filter_short, filter_static, temporal_nms, SuppressionConfig};
use crate::track::Track;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl PipelineError {
    /// Frame pair whose flow was unavailable, if that is what failed.
    pub fn missing_flow(&self) -> Option<u32> {
        match self {
            PipelineError::Build(BuildError::MissingFlow { frame })
            | PipelineError::Flow(FlowError::MissingFlow { frame }) => Some(*frame),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub builder: BuilderConfig,
    pub suppression: SuppressionConfig,
    /// Weight of the mean proposal score against the mean match IoU.
    pub lambda: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            builder: BuilderConfig::default(),
            suppression: SuppressionConfig::default(),
            lambda: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.builder.validate()?;
        self.suppression.validate().map_err(PipelineError::Config)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PipelineError::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Tracks that survive every stage, best first.
pub fn run_pipeline<T: Real>(
    frames: &[FrameProposals<T>],
    flows: &dyn FlowProvider<T>,
    cfg: &PipelineConfig,
) -> Result<Vec<Track<T>>, PipelineError> {
    cfg.validate()?;
    let tracks = build_tracks(frames, flows, &cfg.builder)?;
    finish_tracks(tracks, flows, cfg)
}

/// The post-build stages, split out so alternative builders can share them.
pub fn finish_tracks<T: Real>(
    tracks: Vec<Track<T>>,
    flows: &dyn FlowProvider<T>,
    cfg: &PipelineConfig,
) -> Result<Vec<Track<T>>, PipelineError> {
    let s = &cfg.suppression;
    let tracks = filter_short(tracks, s.min_length);
    let tracks = filter_static(tracks, flows, T::from_f64(s.static_thresh))?;
    let tracks = rank_tracks(tracks, T::from_f64(cfg.lambda));
    Ok(temporal_nms(tracks, T::from_f64(s.nms_viou)))
}
