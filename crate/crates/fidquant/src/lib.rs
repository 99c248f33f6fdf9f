pub mod error;
pub mod ft;
pub mod harness;
pub mod inference;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod quantify;
mod seed;
pub mod species;

pub use error::{Error, Result};
