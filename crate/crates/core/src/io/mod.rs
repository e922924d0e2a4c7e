//! Configuration documents, data ingestion, output tables and the
//! command pipelines built on them.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod output;

pub use config::RunConfig;
pub use ingest::{ingest, DataSpec, DyadDataset, LinkRule, Regressor};
