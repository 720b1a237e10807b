pub mod channel;
pub mod diffnet;
pub mod harness;
pub mod policy;
pub mod pruning;
pub mod quantizer;
pub mod semloss;
pub mod splitmodel;
pub mod trainer;
mod error;

pub use error::{Error, Result};
