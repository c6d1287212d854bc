//! Quasi-periodic response solutions of the strongly dissipative oscillator
//!
//! ```text
//!     ε ẍ + ẋ + ε g(x) = ε f(ωt),        ω = (1, α),  α irrational,
//! ```
//!
//! solved as `x(t) = c + ζ + u(ωt)` with `u` a zero-mean quasi-periodic
//! function carrying the same two frequencies as the forcing.
//!
//! The crate is organized around the analysis pipeline:
//!
//! - [`contfrac`]: certified continued-fraction arithmetic for α — convergents
//!   in exact integers, rigorous enclosures of α, small divisors ω·ν with
//!   certified sign and relative error, best-approximation brute force.
//! - [`admissible`]: the ε-interval sets on which the response solution is
//!   constructed — per-convergent intervals, their merged closures, hole
//!   detection in both log-endpoint and growth-condition form, and frequency
//!   classification (Diophantine fit, Bryuno partial sums).
//! - [`fourier`]: dense two-index Fourier fields with aliasing-free products
//!   (FFT grid path plus a direct convolution oracle), composition with the
//!   nonlinearity g, sup norms, and decay-rate fits.
//! - [`solver`]: the spectral Galerkin solver — a damped Newton iteration for
//!   the nonzero-mode (range) equation, bisection of the zero-mode
//!   (bifurcation) equation in ζ, and independent time-domain validation of
//!   the assembled solution against the original ODE.
//! - [`trees`]: the labelled-tree expansion of the solution coefficients —
//!   enumeration, values with sharp scale partition, self-energy clusters and
//!   their resummed kernel 𝓜, plus a bookkeeping fixed-point oracle that
//!   recomputes every series coefficient by an independent route.
//! - [`simulate`]: stiff implicit integrators (midpoint, Euler) for
//!   cross-validating the spectral solution in the time domain.
//! - [`report`]: deterministic JSON/CSV emission (fixed field order, fixed
//!   float formatting) for all report types.

pub mod admissible;
pub mod contfrac;
pub mod fourier;
pub mod solver;
pub mod report;
pub mod simulate;
pub mod trees;
