//! Synthetic data generation and the experiment driver.

pub mod experiment;
pub mod metrics;
pub mod plot;
pub mod synthetic;
