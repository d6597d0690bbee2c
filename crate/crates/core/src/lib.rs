pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod groups;
pub mod noise;
pub mod numerics;
pub mod statistics;
pub mod theory;
pub mod validation;

pub use error::{Error, Result};
