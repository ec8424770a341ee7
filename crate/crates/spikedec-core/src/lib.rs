//! Recovery of point sources (complex amplitudes and torus locations) from
//! band-limited Fourier samples, by preconditioned gradient descent on the
//! nonconvex least-squares residual.
//!
//! The crate is organized around the pipeline:
//!
//! * [`kernel`] — the normalized Fejér kernel `F_N`, its first three
//!   derivatives, and certified bounds on absolute sums of sampled kernel
//!   values over well-separated location sets.
//! * [`model`] — spike parameters, the sampling operator, the least-squares
//!   loss and its analytic gradient, plus a plain-text instance format.
//! * [`model::hessian`] — the structured decomposition of the loss Hessian
//!   and the scaled-deviation quantity that governs local contraction.
//! * [`gd`] — the preconditioned descent iteration (invariant and adaptive
//!   preconditioners), the weighted error metric, and predicted rates.
//! * [`init`] — grid-based spectral initialization by orthogonal matching
//!   pursuit.
//! * [`assign`] — optimal spike-to-truth matching for error metrics.
//!
//! All functions here are pure: they share no global state and are safe to
//! call concurrently.

pub mod assign;
pub mod gd;
pub mod init;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod torus;

pub use num_complex::Complex64;
