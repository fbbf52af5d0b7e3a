pub mod bev;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod heads;
pub mod labeler;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod sim;
pub mod srp;
pub mod topology;

pub use error::{Error, Result};
