//! Functional Tucker decomposition (FTD) and tensor subspace classification.
//!
//! The crate covers:
//!
//! * [`tensor`]: dense column-major tensors, unfoldings and mode products;
//! * [`linalg`]: truncated SVD, symmetric eigendecomposition, SPD and
//!   least-squares solvers;
//! * [`kernel`]: Gaussian kernels and Gram matrices on design grids;
//! * [`tucker`]: truncated HOSVD and Tucker reconstruction;
//! * [`ftd`]: the functional Tucker model with an RKHS-valued last mode,
//!   fitted by alternating least squares;
//! * [`classify`]: HOSVD class bases, residual classification, and domain
//!   transfer through FTD reconstructions on a new grid;
//! * [`metrics`], [`datagen`] and [`io`]: evaluation, synthetic data and file
//!   formats;
//! * [`experiment`]: the equal-domain and transfer-domain digit experiment.

pub mod classify;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod ftd;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use ftd::{FtdConfig, FtdModel};
pub use kernel::{DesignGrid, KernelSpec};
pub use tensor::{DenseTensor, Matrix};
pub use tucker::TuckerFactors;
