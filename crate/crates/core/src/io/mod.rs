pub mod config;
pub mod dataset;
pub mod experiment;
pub mod ieee39;
pub mod report;
