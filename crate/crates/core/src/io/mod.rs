//! Metric persistence and parameter snapshots.

pub mod metrics;
pub mod snapshot;

pub use metrics::{FileSink, MemorySink, MetricRecord, MetricSink, NullSink, CSV_HEADER};
pub use snapshot::{Snapshot, Tensor};
