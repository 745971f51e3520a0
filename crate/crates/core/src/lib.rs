pub mod config;
pub mod diffusion;
pub mod dns;
pub mod error;
pub mod field;
pub mod fvgrid;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod stokes;
pub mod linalg;
pub mod macro_flow;
pub mod macro_oxygen;
pub mod pipeline;

pub use error::{Error, ErrorCategory, Result};
