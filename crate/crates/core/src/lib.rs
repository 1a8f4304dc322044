pub mod analysis;
pub mod data;
pub mod error;
pub mod io;
pub mod math;
pub mod model;
pub mod run;
pub mod selfcheck;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
