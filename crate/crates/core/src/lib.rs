//! Informativity tests and certified controller synthesis from noisy
//! input-output or input-state data under cross-covariance noise bounds.

// Links the system OpenBLAS used by the SDP backend.
extern crate openblas_src;

pub mod data_model;
pub mod error;
pub mod experiments;
pub mod informativity;
pub mod lifting;
pub mod linalg;
pub mod sdp;
pub mod verification;

pub use error::{Error, Result};
pub use linalg::Mat;
