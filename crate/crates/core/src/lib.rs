//! Numerical certification toolkit for gradient-free nonlinear potential
//! theory.
//!
//! The library works with reduced 2-jets `(r, A)` in `R x S(N)` (the
//! first-order slot is absent by design) and with set-valued constraint
//! maps `x -> Theta(x)` given through continuous defining functions
//! `Theta(x) = { g(x; r, A) >= 0 }`. On top of that it provides
//!
//! * symmetric eigenvalue machinery and reproducible jet sampling
//!   ([`jets`], [`sampling`]),
//! * single-fiber set algebra with Dirichlet duality and sampled identity
//!   checks ([`constraint`]),
//! * translation-continuity certification, windowed Hausdorff estimates,
//!   truncation and bounded-harmonic constructions for x-dependent maps
//!   ([`map`]),
//! * built-in model operators (Monge-Ampere variants, special Lagrangian,
//!   a linear zeroth-order example) with structural-condition certification
//!   ([`operators`]),
//! * special Lagrangian phase analysis: phase intervals, eigenvalue bounds
//!   and the explicit discontinuity witnesses ([`slag`]),
//! * grid-level potential theory: discrete jets, sup-convolution,
//!   subaffine checks, the zero maximum principle and the comparison
//!   harness ([`grid`]).
//!
//! Grid checks operate on twice-differentiable or semiconvex samples and
//! certify necessary conditions of the continuum statements; a grid pass is
//! evidence, not proof. Every report states its sample budget and seed, and
//! identical configurations reproduce identical reports.

pub mod constraint;
pub mod error;
pub mod grid;
pub mod jets;
pub mod map;
pub mod operators;
pub mod sampling;
pub mod slag;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
