//! Configuration, CSV ingestion, result documents and the command line.

pub mod cli;
pub mod config;
pub mod csv_load;
pub mod report;

pub use config::{AnalysisConfig, ScenarioFile};
pub use csv_load::{load_csv, load_csv_bytes, LoadedData};
pub use report::{format_p, Metadata, OutputFormat, ResultDocument};
