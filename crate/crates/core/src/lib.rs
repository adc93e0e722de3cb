pub mod dataset;
pub mod error;
pub mod fid;
pub mod imgcore;
pub mod learner;
pub mod metrics;
pub mod perturb;
pub mod sensitivity;
pub mod synth;

pub use error::{Error, Result};
