pub mod bayes;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod nonlinear;
pub mod obf;
pub mod pipeline;
pub mod projection;
pub mod rsvd;
pub mod rte;
pub mod sobolev;

pub use error::{Error, Result};
