pub mod bounds;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lattice;
pub mod spectra;
pub mod special;
pub mod symbol;

pub use error::{Error, Result};
