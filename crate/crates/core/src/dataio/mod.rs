//! Dataset ingestion (IDX, synthetic blobs), batching and CSV metrics.

mod dataset;
pub mod idx;
mod metrics;

pub use dataset::{load_idx, load_idx_with, synthetic_gaussian, Batch, BatchIterator, Dataset, Normalization};
pub use metrics::{write_metrics, write_metrics_to, Cell};
