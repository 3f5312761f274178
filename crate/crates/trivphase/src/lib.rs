pub mod channel;
pub mod choi;
pub mod checks;
pub mod classical;
pub mod cli;
pub mod circuit;
pub mod covering;
pub mod error;
pub mod existence;
pub mod factory;
pub mod io;
pub mod lattice;
pub mod learner;
pub mod linalg;
pub mod pipeline;
pub mod recovery;
pub mod sdp;
pub mod shadows;
pub mod state;

pub use error::{Error, Result};
