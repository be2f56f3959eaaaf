//! Limited-angle fan-beam CT reconstruction with a low-resolution image prior.
//!
//! The crate is organised bottom-up:
//!
//! + [`geometry`]: scan geometry, image and sinogram rasters
//! + [`operators`]: exact ray-driven projector, explicit system matrix, down-sampling
//! + [`conditioning`]: dense SVD, pseudoinverse and generalized condition numbers
//! + [`classical`]: filtered back-projection
//! + [`variational`]: TV proximal operator, primal-dual TV and the prior-constrained solver
//! + [`simulation`]: phantoms and noise models
//! + [`metrics`]: RMSE, PSNR, SSIM
//! + [`io`]: binary array files, PGM export, CSV helpers
//! + [`config`], [`cli`]: experiment runner

pub mod classical;
pub mod cli;
pub mod conditioning;
pub mod config;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod simulation;
pub mod variational;

pub use error::{Error, Result};
pub use geometry::{Image, ScanGeometry, Sinogram};
