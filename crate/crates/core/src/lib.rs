pub mod affinity;
pub mod cluster;
pub mod embed;
pub mod error;
pub mod gmm_model;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod sdp_solver;

pub use error::{Error, Result};
