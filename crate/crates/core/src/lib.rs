pub mod disorder;
pub mod energy;
pub mod error;
pub mod excitation;
pub mod experiment;
pub mod fluctuation;
pub mod lattice;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
