pub mod abstractverify;
pub mod cli;
pub mod dostrace;
pub mod error;
pub mod growth;
pub mod lattice;
pub mod numeric;
pub mod operators;
pub mod roeindex;
pub mod seqspace;

pub use error::{Error, Result};
