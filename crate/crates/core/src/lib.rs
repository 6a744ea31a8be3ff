pub mod affine;
pub mod coeff;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod fem;
pub mod plot;
pub mod reduction;
pub mod resnet;
pub mod sensing;
pub mod training;

pub use error::{Error, Result};
