pub mod error;
pub mod geometry;
pub mod worldsim;
pub mod scorer;
pub mod uncertainty;
pub mod deploy;
pub mod evalharness;

pub use error::{Error, Result};
