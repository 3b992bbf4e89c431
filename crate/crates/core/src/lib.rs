pub mod error;
pub mod agent;
pub mod config;
pub mod envs;
pub mod metrics;
pub mod ndmath;
pub mod posterior;
pub mod presets;
pub mod runner;
pub mod trainer;

pub use error::{Error, Result};
