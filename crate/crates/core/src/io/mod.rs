pub mod config;
pub mod dataset;
pub mod output;
pub mod svg;

pub use config::{GridSpec, RunConfig};
pub use dataset::{read_dataset, ColumnSelector, Dataset, ReadOptions};
pub use output::{emit, fmt_f64, fmt_opt, to_json, Table};
