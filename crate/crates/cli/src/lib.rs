//! Driver for the laboratory: configuration, stage orchestration, reports
//! and plot data.

pub mod config;
pub mod pipeline;
pub mod plots;
pub mod report;
