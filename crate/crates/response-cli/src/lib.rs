//! Command-line front end for the response-solution toolkit.
//!
//! The binary exposes four commands over a single JSON experiment config:
//!
//! - `classify` — continued-fraction growth and small-divisor diagnostics
//!   for the frequency ratio α;
//! - `admissible` — the admissible ε-interval construction, merged runs,
//!   and any gaps between consecutive intervals;
//! - `solve` — the quasi-periodic response solution at fixed ε, optionally
//!   cross-checked against a time-domain integration;
//! - `trees` — the series coefficients u^{(k)}_ν by direct enumeration,
//!   against an order-by-order fixed-point oracle.
//!
//! Reports are deterministic: the same config yields byte-identical JSON
//! (floats rendered with 17 significant digits) and CSV artifacts.

pub mod commands;
pub mod config;
