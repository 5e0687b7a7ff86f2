pub mod certify;
pub mod config;
pub mod error;
pub mod geometry;
pub mod inner;
pub mod jet;
pub mod outer;
pub mod shaping;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
