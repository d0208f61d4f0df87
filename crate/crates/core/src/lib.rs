pub mod archspace;
pub mod complexity;
pub mod diststat;
pub mod error;
pub mod exec;
pub mod nascell;
pub mod pool;
pub mod space;

pub use error::{Error, Result};
