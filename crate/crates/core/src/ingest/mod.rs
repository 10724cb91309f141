//! Readers for OpenLABEL annotations and the JSONL trajectory stream.

mod openlabel;
mod stats;
mod stream;

pub use openlabel::{parse_openlabel, OpenLabelDocument, DEFAULT_FRAME_PERIOD, INTERNED_ID_BASE};
pub use stats::{compute_stats, DatasetStats, RawCounts};
pub use stream::{
    frame_to_line, parse_frame_line, parse_trajectory_stream, write_frames, TrajectoryReader, NOMINAL_PERIOD,
};
