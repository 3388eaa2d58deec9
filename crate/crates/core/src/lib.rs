pub mod dynamics;
pub mod error;
pub mod pmp;
pub mod regulators;
pub mod riccati;
pub mod so3;

pub use error::{Error, Result};
