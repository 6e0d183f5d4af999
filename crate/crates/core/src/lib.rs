//! Numerical core for single-mode, two-parameter sensing with grid and
//! number-phase oscillator states.
//!
//! The crate is `no_std` with `alloc`. Transcendental functions come from
//! `libm` through `num_traits::Float` (newer toolchains also provide them
//! inherently, hence the allowed imports). Randomness comes from
//! caller-supplied seeded streams (see [`rng`]).
//!
//! Layout:
//! - [`fock`]: truncated Fock-space states and dense operators.
//! - [`states`]: grid and number-phase state constructors and metrics.
//! - [`circuit`]: phase-estimation rounds on ancilla ⊗ oscillator, and the
//!   closed-form outcome models.
//! - [`estimation`]: Fourier-series Bayesian phase estimation.
//! - [`fisher`]: Fisher-information analysis, bounds and baselines.
//! - [`pulses`]: Magnus analysis of the detuned sideband interaction.
#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose: it rejects NaN with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod circuit;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod fock;
pub mod linalg;
pub mod pulses;
pub mod rng;
pub mod special;
pub mod states;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Modular length √(2π) of the square grid.
pub const GRID_LENGTH: f64 = 2.506_628_274_631_000_2;

/// √π, the lattice spacing of grid-state characteristic functions.
pub const SQRT_PI: f64 = 1.772_453_850_905_516;
