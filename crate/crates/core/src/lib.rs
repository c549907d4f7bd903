pub mod cli;
pub mod error;
pub mod fourier;
pub mod kwapien;
pub mod norms;
pub mod padic;
pub mod probe;
pub mod stepfn;

pub use error::{Error, Result};
