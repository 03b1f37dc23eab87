pub mod cli;
pub mod control;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod pdap;
pub mod quadrature;
pub mod subproblem;
pub mod time;
pub mod wave;

pub use error::{Error, Result};
