pub mod bbox;
pub mod cli;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod io;
pub mod objectives;
pub mod pipeline;
pub mod synthetic;
pub mod torus;
pub mod transforms;

pub use error::{Error, Result};
