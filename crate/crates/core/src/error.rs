use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
///
/// Construction errors (bad distributions, bad kernels, dimension mismatches)
/// are strict: inputs are rejected rather than silently repaired, because a
/// renormalized bad input hides the bug that produced it. Format diagnostics
/// carry enough position information (column, step index, field name) to point
/// at the offending spot in a document.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid distribution: {detail}")]
    BadDistribution { detail: String },

    #[error("invalid stochastic kernel: {detail}")]
    BadKernel { detail: String },

    #[error("invalid chain spec: {detail}")]
    BadChain { detail: String },

    #[error("state {state} has zero mass in {context}")]
    ZeroMassState { state: usize, context: &'static str },

    /// V(S_n) is zero (or numerically indistinguishable from zero), so
    /// normalized quantities are undefined.
    #[error("degenerate chain: V(S_n) = 0, normalized quantities undefined")]
    DegenerateVariance,

    /// The kernel does not contract strictly enough for iterative solves.
    #[error("kernel is not strictly contracting (delta = {delta}); iteration would not converge")]
    NotContracting { delta: f64 },

    #[error("path enumeration over {states}^{length} paths exceeds the budget of {budget}")]
    PathBudget {
        states: usize,
        length: usize,
        budget: u64,
    },

    #[error("n = {n} exceeds the exact-computation cap {cap}; raise the cap or estimate by sampling")]
    ExactCapExceeded { n: usize, cap: usize },

    #[error("too few samples for a distribution fit: {count} < {minimum}")]
    TooFewSamples { count: usize, minimum: usize },

    #[error("alpha must lie in (0, 1/2], got {alpha}")]
    BadAlpha { alpha: f64 },

    #[error("exponent must lie in (0, 1), got {exponent}")]
    BadExponent { exponent: f64 },

    // --- chain-spec document diagnostics ---
    #[error("syntax error in {context} at column {col}: found {found}, expected {}", expected.join(" | "))]
    Syntax {
        context: String,
        col: usize,
        found: String,
        expected: Vec<String>,
    },

    #[error("unknown variable `{name}` in {context} at column {col} (only `i` and `n` are defined)")]
    UnknownVariable {
        name: String,
        context: String,
        col: usize,
    },

    #[error("unknown function `{name}` in {context} at column {col}")]
    UnknownFunction {
        name: String,
        context: String,
        col: usize,
    },

    #[error("function `{name}` in {context} takes {expected} argument(s), got {found}")]
    ArityMismatch {
        name: String,
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("variable `{name}` is not allowed in {field}")]
    VariableNotAllowed { name: String, field: String },

    #[error("schedule rule {rule} references undefined kernel `{name}`")]
    UndefinedKernel { name: String, rule: usize },

    #[error("schedule is not exhaustive: the last rule must be the literal `true`")]
    NonExhaustiveSchedule,

    #[error("unknown state label `{label}`")]
    UnknownState { label: String },

    #[error("division by zero in {context} at i = {}, n = {n}", i.map(|v| v.to_string()).unwrap_or_else(|| "-".into()))]
    DivisionByZero {
        context: String,
        i: Option<u64>,
        n: u64,
    },

    #[error("type mismatch in {context}: expected {expected}, found {found}")]
    TypeMismatch {
        context: String,
        expected: &'static str,
        found: &'static str,
    },

    /// An evaluated kernel row failed the stochastic-matrix invariants.
    #[error("kernel `{kernel}` row {row} invalid at step i = {step}: {detail}")]
    BadRow {
        kernel: String,
        step: usize,
        row: usize,
        detail: String,
    },

    #[error("invalid document: {detail}")]
    Document { detail: String },
}
