pub mod certificate;
pub mod diff;
pub mod error;
mod lp;
pub mod lab;
pub mod model;
pub mod qualification;
pub mod truncation;

pub use error::{Error, Result};
