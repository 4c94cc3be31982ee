//! Rectangular free probability for discrete singular-value laws.
//!
//! The crate computes the analytic machinery attached to singular values of
//! large rectangular random matrices with aspect ratio `lambda = n/m`:
//!
//! * [`measure`]: finitely supported laws, their moments, the squared-moment
//!   generating function and the Cauchy transform;
//! * [`transforms`]: the rectangular R-transform `C`, the diffeomorphism `H`
//!   it is built from, the limit of normalized spherical integrals and its
//!   closed form;
//! * [`series`]: truncated power series, rectangular cumulants and the
//!   rectangular free convolution at the level of moment sequences;
//! * [`mc`]: Monte Carlo counterparts — spherical integral estimators, Haar
//!   sampling, sums of randomly rotated matrices — used to check the analytic
//!   layer against simulation;
//! * [`verify`]: the acceptance suite tying the two layers together.
//!
//! Monte Carlo routines are deterministic given a seed: every sample draws
//! from its own counter-derived substream, so results do not depend on thread
//! scheduling. The `RECTFREE_THREADS` environment variable caps parallelism
//! (unset or `0` runs sequentially); the `parallel` feature (default on)
//! compiles the rayon path.

pub mod error;
pub mod mc;
pub mod measure;
pub mod numeric;
pub mod series;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use mc::{MatrixModel, McEstimate, ScalarField};
pub use measure::DiscreteMeasure;
pub use series::{rect_cumulants, rect_free_convolve, PowerSeries};
pub use transforms::{classical_r, t_ratio, t_ratio_inv, TransformContext};
