pub mod circle_flow;
pub mod datasets;
pub mod distributions;
pub mod experiments;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod theory_demos;
pub mod topology_metrics;
