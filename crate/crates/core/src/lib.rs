//! Unsupervised spatio-temporal object proposals.
//!
//! Per-frame proposal boxes are linked into tracks by flow-compensated IoU
//! matching with a time-to-live counter, gaps are filled by linear
//! interpolation, and the result is pruned (length, static content,
//! temporal NMS) and ranked. Proposal quality can then be scored without
//! annotations through the entropy of a classifier's output.
//!
//! The numeric code is generic over the scalar type; the aliases below fix
//! it to `f64` for everyday use.

pub mod builder;
pub mod entropy;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod ranking;
pub mod scalar;
pub mod suppression;
pub mod synth;
pub mod track;

pub use builder::{build_tracks, interpolate_gap, BuildError, BuilderConfig};
pub use entropy::{
    evaluate, shannon_entropy, shannon_entropy_in, track_representative, BoxRef, EntropyError,
    EntropyReport, LogBase, ProbVector,
};
pub use flow::{estimate_flow, FlowDir, FlowError, FlowField, FlowProvider, FlowSequence, ImageGrid, ZeroFlow};
pub use geometry::{iou, viou, BBox, GeometryError};
pub use io::{FrameProposals, IoError, RunManifest};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError};
pub use ranking::{rank_tracks, score_track};
pub use scalar::{Real, Scalar};
pub use suppression::{filter_short, filter_static, temporal_nms, SuppressionConfig};
pub use track::{Provenance, Track, TrackEntry, TrackError};

pub type Box64 = BBox<f64>;
pub type Box32 = BBox<f32>;
pub type Track64 = Track<f64>;
pub type Track32 = Track<f32>;
pub type TrackEntry64 = TrackEntry<f64>;
pub type FlowField64 = FlowField<f64>;
pub type FlowField32 = FlowField<f32>;
pub type FrameProposals64 = FrameProposals<f64>;
pub type ProbVector64 = ProbVector<f64>;
