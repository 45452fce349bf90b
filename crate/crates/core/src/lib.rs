//! Online multiple-object tracking by detection.
//!
//! Detections are matched to tracklets with an affinity that blends box
//! overlap and a learned appearance metric, both gated. Tracklets that go
//! unmatched can be recovered by searching around their prediction for the
//! best appearance match, and tracklets separated by occlusion are merged
//! periodically. Confirmed states are emitted after a fixed delay.
//!
//! ```
//! use sdmt_core::{BoundingBox, Detection, Embedding, NullProvider, Tracker, TrackerConfig};
//!
//! let mut tracker = Tracker::new(TrackerConfig::default());
//! for frame in 1..=10 {
//!     let bbox = BoundingBox::new(100.0 + frame as f64, 50.0, 40.0, 80.0).unwrap();
//!     let det = Detection::new(frame, bbox, 0.9).with_embedding(Embedding::basis(0));
//!     tracker.process_frame(frame, &[det], &NullProvider).unwrap();
//! }
//! let flushed: usize = tracker.finalize().iter().map(|r| r.tracks.len()).sum();
//! assert_eq!(flushed, 10);
//! ```

pub mod affinity;
pub mod assignment;
pub mod association;
pub mod config;
pub mod detection;
pub mod embedding;
pub mod geometry;
pub mod io;
pub mod lifecycle;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod tracklet;

pub use config::{ConfigError, TrackerConfig};
pub use detection::{Detection, DetectionSource};
pub use embedding::{Embedding, EMBEDDING_DIM};
pub use geometry::{iou, BoundingBox};
pub use io::provider::{EmbeddingProvider, NullProvider, ProviderCapabilities};
pub use metrics::{evaluate, EvalReport, TrackSet};
pub use motion::NoiseConfig;
pub use pipeline::{run_sequence, EmittedState, FrameResult, Tracker};
pub use tracklet::{StateOrigin, TrackId, TrackStatus};
