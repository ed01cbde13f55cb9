pub mod bundle;
pub mod codec;
pub mod config;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prox;
pub mod sequence;
pub mod solver;
pub mod spectral;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
