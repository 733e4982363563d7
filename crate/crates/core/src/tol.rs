//! Numerical tolerances, named and fixed in one place.
//!
//! The hierarchy is deliberate: constructors are strictest (1e-12), exact
//! identities get one order of slack (1e-10), and inequality checks use the
//! same 1e-10 slack. Double precision over chains up to n = 10^5 accumulates
//! roundoff below these levels by a comfortable margin.

/// Row sums and distribution masses must be within this of 1 at construction.
pub const ROW_SUM: f64 = 1e-12;

/// Slack for exact identities (decomposition, rearrangement, marginal
/// consistency).
pub const IDENTITY: f64 = 1e-10;

/// Additive slack for inequality checks (contraction products, variance
/// bounds, oscillation estimates).
pub const SLACK: f64 = 1e-10;

/// Slack for the contraction product and dual estimates, which involve only
/// a handful of operations.
pub const PRODUCT_SLACK: f64 = 1e-12;

/// Centering residual: a centered function's mean under its marginal.
pub const CENTERING: f64 = 1e-12;

/// Oscillation threshold that truncates the resolvent series.
pub const SERIES_OSC: f64 = 1e-14;

/// Total-variation threshold that stops invariant-distribution iteration.
pub const INVARIANT_TV: f64 = 1e-14;

/// Residual allowed on a resolvent solve: ||(I-P)u - f||_inf.
pub const POISSON_RESIDUAL: f64 = 1e-10;
