pub mod burgers;
pub mod cell;
pub mod elastic;
pub mod error;
pub mod fields;
pub mod gamma;
pub mod korn;
pub mod linalg;
pub mod measure;
pub mod mesh;
pub mod phi;
pub mod sim;
pub mod quadrature;

pub use error::{Error, Result};
