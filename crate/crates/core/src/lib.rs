pub mod augmentor;
pub mod downstream;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pono;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Element, PadMode, Rng, Shape, Tape, Tensor, Var};
