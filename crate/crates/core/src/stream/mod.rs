//! Class-incremental stream generator with repetition.
//!
//! A stream is controlled by four parameters: its length `N`, the experience
//! size `S`, the first-occurrence distribution and the per-class repetition
//! probabilities. See [`Stream::generate`].

mod assign;
mod config;
mod format;
mod schedule;
mod stats;

pub use assign::{assign_samples, class_quotas, Experience, Stream};
pub use config::{FirstOccurrenceDist, Preset, RepetitionSpec, Scale, StreamConfig};
pub use format::{deserialize_stream, pack_bits, serialize_stream, unpack_bits, FORMAT_VERSION};
pub use schedule::{
    build_schedule, realize_repetition_probs, sample_first_occurrences, ClassSchedule, Fixup,
};
pub use stats::{stream_stats, StreamStats};
