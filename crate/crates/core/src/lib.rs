pub mod bench;
pub mod designs;
pub mod error;
pub mod iv;
pub mod kernels;
pub mod linalg;

pub use error::{KivError, Result};
