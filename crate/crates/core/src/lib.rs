pub mod analysis;
pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod embedding;
pub mod graph;
pub mod model;
pub mod synthetic;
pub mod training;
