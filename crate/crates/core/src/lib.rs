//! Streaming accident detection over roadside trajectory data.
//!
//! Frames flow through [`pipeline::Detector`]: velocities are filled in,
//! the six maneuver rules are evaluated per vehicle ([`rules`]), and the
//! [`classifier`] turns per-frame outcomes into accident, standing-vehicle
//! and breakdown events. External detector output is confirmed and
//! clustered by [`fusion`]. [`simulator`] generates scenarios with analytic
//! ground truth and [`evaluation`] scores predictions against it.

pub mod classifier;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod event;
pub mod fusion;
pub mod ingest;
pub mod pipeline;
pub mod rules;
pub mod simulator;
pub mod trajectory;

pub use classifier::{ClassifierConfig, ClassifierState};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use event::{EventType, TrafficEvent};
pub use fusion::FusionConfig;
pub use pipeline::Detector;
pub use rules::{RuleConfig, RuleEvaluation};
pub use trajectory::{Category, Frame, LaneMap, TrackedObject, Vec2};
