pub mod cli;
pub mod data;
pub mod ensemble;
pub mod labels;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod synthetic;
pub mod tags;
pub mod trainer;

pub use tags::{Stream, Tag};
