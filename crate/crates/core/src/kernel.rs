//! Finite stochastic-matrix algebra.
//!
//! A [`StochasticKernel`] is a row-stochastic matrix: row = source state,
//! column = target state. The central quantity is the contraction coefficient
//! delta(pi), the maximum total-variation distance between two rows; its
//! complement alpha(pi) = 1 - delta(pi) drives every bound in the rest of the
//! crate. Total variation on finite states is half the L1 distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Max - min of a vector; 0 for empty input.
pub fn oscillation(u: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in u {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Half the L1 distance between two weight vectors.
///
/// For probability vectors this is the total-variation distance; for a signed
/// difference of measures it is the variation norm used in the dual estimate.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// A probability distribution on the finite state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates and renormalizes. Entries must be nonnegative and sum to 1
    /// within [`tol::ROW_SUM`]; anything further off is rejected, not repaired.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::BadDistribution {
                detail: "empty weight vector".into(),
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(Error::BadDistribution {
                    detail: format!("weight {w} at state {i} is not nonnegative"),
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol::ROW_SUM {
            return Err(Error::BadDistribution {
                detail: format!("weights sum to {sum}, not 1"),
            });
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Ok(Self { weights })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform distribution needs at least one state");
        Self {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn point_mass(size: usize, state: usize) -> Self {
        assert!(state < size, "point mass outside the state space");
        let mut weights = vec![0.0; size];
        weights[state] = 1.0;
        Self { weights }
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mass at one state.
    pub fn weight(&self, state: usize) -> f64 {
        self.weights[state]
    }

    /// mu pi: the one-step image of this distribution.
    pub fn propagate(&self, k: &StochasticKernel) -> Result<Distribution> {
        if k.size() != self.size() {
            return Err(Error::DimensionMismatch {
                context: "apply_measure",
                expected: self.size(),
                found: k.size(),
            });
        }
        let s = self.size();
        let mut out = vec![0.0; s];
        for (x, &mass) in self.weights.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (y, &p) in k.row(x).iter().enumerate() {
                out[y] += mass * p;
            }
        }
        // Renormalize: products of many kernels drift at the last-ulp level.
        Distribution::new(out)
    }

    /// E[u(X)] under this distribution.
    pub fn expect(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.size());
        self.weights.iter().zip(u).map(|(w, v)| w * v).sum()
    }

    /// Variance of u(X) under this distribution, clamped at 0.
    pub fn variance(&self, u: &[f64]) -> f64 {
        let mean = self.expect(u);
        let v: f64 = self
            .weights
            .iter()
            .zip(u)
            .map(|(w, x)| w * (x - mean) * (x - mean))
            .sum();
        v.max(0.0)
    }

    pub fn tv(&self, other: &Distribution) -> f64 {
        tv_distance(&self.weights, &other.weights)
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Distribution::new(weights)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Vec<f64> {
        d.weights
    }
}

/// A row-stochastic matrix over S states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StochasticKernel {
    rows: Vec<Vec<f64>>,
}

impl StochasticKernel {
    /// Validates and renormalizes rows. Every entry must be nonnegative and
    /// every row must sum to 1 within [`tol::ROW_SUM`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = rows.len();
        if s == 0 {
            return Err(Error::BadKernel {
                detail: "empty matrix".into(),
            });
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(Error::BadKernel {
                    detail: format!("row {x} has length {}, expected {s}", row.len()),
                });
            }
            for (y, &p) in row.iter().enumerate() {
                if !(p >= 0.0) {
                    return Err(Error::BadKernel {
                        detail: format!("entry ({x},{y}) = {p} is not nonnegative"),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol::ROW_SUM {
                return Err(Error::BadKernel {
                    detail: format!("row {x} sums to {sum}, not 1"),
                });
            }
        }
        let rows = rows
            .into_iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|p| p / sum).collect()
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn identity(size: usize) -> Self {
        assert!(size > 0);
        let rows = (0..size)
            .map(|x| {
                let mut row = vec![0.0; size];
                row[x] = 1.0;
                row
            })
            .collect();
        Self { rows }
    }

    /// The two-state symmetric flip matrix Q(p) = [[1-p, p], [p, 1-p]].
    pub fn two_state_flip(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::BadKernel {
                detail: format!("flip probability {p} outside [0, 1]"),
            });
        }
        Ok(Self {
            rows: vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
        })
    }

    /// A kernel whose rows are all equal to `row` (a rank-one kernel; its
    /// contraction coefficient is 0 and each step is independent of the last).
    pub fn rank_one(row: &Distribution) -> Self {
        Self {
            rows: vec![row.weights().to_vec(); row.size()],
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// The contraction coefficient delta: the maximum total-variation
    /// distance between two rows, by exhaustive row-pair scan. O(S^3), fine
    /// for the small state spaces this crate targets.
    pub fn contraction(&self) -> f64 {
        let mut delta: f64 = 0.0;
        for a in 0..self.rows.len() {
            for b in (a + 1)..self.rows.len() {
                delta = delta.max(tv_distance(&self.rows[a], &self.rows[b]));
            }
        }
        // TV of probability vectors can exceed 1 only by roundoff.
        delta.min(1.0)
    }

    /// alpha = 1 - delta.
    pub fn alpha(&self) -> f64 {
        1.0 - self.contraction()
    }

    /// Matrix product: the two-step kernel. Satisfies
    /// contraction(a.compose(b)) <= contraction(a) * contraction(b).
    pub fn compose(&self, other: &StochasticKernel) -> Result<StochasticKernel> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch {
                context: "compose",
                expected: self.size(),
                found: other.size(),
            });
        }
        let s = self.size();
        let mut rows = vec![vec![0.0; s]; s];
        for x in 0..s {
            for y in 0..s {
                let p = self.rows[x][y];
                if p == 0.0 {
                    continue;
                }
                for z in 0..s {
                    rows[x][z] += p * other.rows[y][z];
                }
            }
        }
        StochasticKernel::new(rows)
    }

    /// mu pi; see [`Distribution::propagate`].
    pub fn apply_measure(&self, mu: &Distribution) -> Result<Distribution> {
        mu.propagate(self)
    }

    /// pi u: (pi u)(x) = sum_y pi(x,y) u(y). Satisfies
    /// Osc(pi u) <= delta(pi) * Osc(u).
    pub fn apply_function(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.size() {
            return Err(Error::DimensionMismatch {
                context: "apply_function",
                expected: self.size(),
                found: u.len(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().zip(u).map(|(p, v)| p * v).sum())
            .collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for StochasticKernel {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        StochasticKernel::new(rows)
    }
}

impl From<StochasticKernel> for Vec<Vec<f64>> {
    fn from(k: StochasticKernel) -> Vec<Vec<f64>> {
        k.rows
    }
}

/// The time-reversed kernel of `k` started from `alpha`.
///
/// With beta = alpha k the destination law, the reversal is
/// rev(y, x) = alpha(x) k(x, y) / beta(y). Every destination state must have
/// positive mass; a zero-mass destination row is undefined and is reported as
/// an error rather than silently dropped — the caller must restrict the state
/// space explicitly.
pub fn reverse_kernel(alpha: &Distribution, k: &StochasticKernel) -> Result<StochasticKernel> {
    if alpha.size() != k.size() {
        return Err(Error::DimensionMismatch {
            context: "reverse_kernel",
            expected: alpha.size(),
            found: k.size(),
        });
    }
    let s = k.size();
    let beta = alpha.propagate(k)?;
    for y in 0..s {
        if beta.weight(y) <= 0.0 {
            return Err(Error::ZeroMassState {
                state: y,
                context: "reverse_kernel destination",
            });
        }
    }
    let mut rows = vec![vec![0.0; s]; s];
    for y in 0..s {
        for x in 0..s {
            rows[y][x] = alpha.weight(x) * k.row(x)[y] / beta.weight(y);
        }
    }
    StochasticKernel::new(rows)
}

/// A probability measure on pairs (x1, x2) with its two marginals.
///
/// The marginals are stored redundantly for O(1) access; their consistency
/// with the joint is a construction invariant, not recomputed per call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMeasure {
    joint: Vec<Vec<f64>>,
    marginal_src: Distribution,
    marginal_dst: Distribution,
}

impl PairMeasure {
    /// Builds from a joint mass matrix (rows = x1, columns = x2). Total mass
    /// must be 1 within [`tol::ROW_SUM`].
    pub fn from_joint(joint: Vec<Vec<f64>>) -> Result<Self> {
        let s = joint.len();
        if s == 0 {
            return Err(Error::BadDistribution {
                detail: "empty joint matrix".into(),
            });
        }
        for (x, row) in joint.iter().enumerate() {
            if row.len() != s {
                return Err(Error::BadDistribution {
                    detail: format!("joint row {x} has length {}, expected {s}", row.len()),
                });
            }
            for (y, &p) in row.iter().enumerate() {
                if !(p >= 0.0) {
                    return Err(Error::BadDistribution {
                        detail: format!("joint mass ({x},{y}) = {p} is not nonnegative"),
                    });
                }
            }
        }
        let total: f64 = joint.iter().flatten().sum();
        if (total - 1.0).abs() > tol::ROW_SUM {
            return Err(Error::BadDistribution {
                detail: format!("joint mass sums to {total}, not 1"),
            });
        }
        let joint: Vec<Vec<f64>> = joint
            .into_iter()
            .map(|row| row.into_iter().map(|p| p / total).collect())
            .collect();
        let src: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
        let mut dst = vec![0.0; s];
        for row in &joint {
            for (y, &p) in row.iter().enumerate() {
                dst[y] += p;
            }
        }
        Ok(Self {
            joint,
            marginal_src: Distribution::new(src)?,
            marginal_dst: Distribution::new(dst)?,
        })
    }

    /// The law of (X1, X2) when X1 ~ alpha and X2 | X1 ~ k(X1, ·).
    pub fn from_source_and_kernel(alpha: &Distribution, k: &StochasticKernel) -> Result<Self> {
        if alpha.size() != k.size() {
            return Err(Error::DimensionMismatch {
                context: "pair measure",
                expected: alpha.size(),
                found: k.size(),
            });
        }
        let joint = (0..alpha.size())
            .map(|x| k.row(x).iter().map(|&p| alpha.weight(x) * p).collect())
            .collect();
        Self::from_joint(joint)
    }

    pub fn size(&self) -> usize {
        self.joint.len()
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    pub fn marginal_src(&self) -> &Distribution {
        &self.marginal_src
    }

    pub fn marginal_dst(&self) -> &Distribution {
        &self.marginal_dst
    }

    /// The forward conditional kernel pi(x, ·) = joint row x, normalized.
    /// Requires every source state to carry mass.
    pub fn forward_kernel(&self) -> Result<StochasticKernel> {
        let s = self.size();
        let mut rows = vec![vec![0.0; s]; s];
        for x in 0..s {
            let mass = self.marginal_src.weight(x);
            if mass <= 0.0 {
                return Err(Error::ZeroMassState {
                    state: x,
                    context: "pair measure source",
                });
            }
            for y in 0..s {
                rows[x][y] = self.joint[x][y] / mass;
            }
        }
        StochasticKernel::new(rows)
    }

    /// E[f(X1) g(X2)] under the joint law.
    pub fn expect_product(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (x, row) in self.joint.iter().enumerate() {
            for (y, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    acc += p * f[x] * g[y];
                }
            }
        }
        acc
    }
}

/// Outcome of the sqrt(delta) covariance inequality check.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceCheck {
    /// |E[f̄(X1) ḡ(X2)]| with f centered under the source marginal and g
    /// under the destination marginal.
    pub lhs: f64,
    /// sqrt(delta(pi)) * ||f̄||_L2(src) * ||ḡ||_L2(dst).
    pub rhs: f64,
    /// Contraction coefficient of the forward conditional kernel.
    pub delta: f64,
    pub pass: bool,
}

/// Checks |Cov(f(X1), g(X2))| <= sqrt(delta(pi)) ||f̄|| ||ḡ|| where pi is the
/// forward conditional of the pair measure and the norms are L2 under the
/// respective marginals.
pub fn check_covariance_inequality(
    lambda: &PairMeasure,
    f: &[f64],
    g: &[f64],
) -> Result<CovarianceCheck> {
    let s = lambda.size();
    if f.len() != s || g.len() != s {
        return Err(Error::DimensionMismatch {
            context: "check_covariance_inequality",
            expected: s,
            found: if f.len() != s { f.len() } else { g.len() },
        });
    }
    let pi = lambda.forward_kernel()?;
    let delta = pi.contraction();

    let f_mean = lambda.marginal_src().expect(f);
    let g_mean = lambda.marginal_dst().expect(g);
    let fc: Vec<f64> = f.iter().map(|v| v - f_mean).collect();
    let gc: Vec<f64> = g.iter().map(|v| v - g_mean).collect();

    let lhs = lambda.expect_product(&fc, &gc).abs();
    let f_norm = lambda.marginal_src().expect(&fc.iter().map(|v| v * v).collect::<Vec<_>>());
    let g_norm = lambda.marginal_dst().expect(&gc.iter().map(|v| v * v).collect::<Vec<_>>());
    let rhs = delta.sqrt() * f_norm.max(0.0).sqrt() * g_norm.max(0.0).sqrt();

    Ok(CovarianceCheck {
        lhs,
        rhs,
        delta,
        pass: lhs <= rhs + tol::SLACK,
    })
}

/// Outcome of the pairwise second-moment lower bound check.
#[derive(Debug, Clone, Serialize)]
pub struct PairBoundCheck {
    /// E[(f(X1) - g(X2))^2].
    pub lhs: f64,
    /// alpha of the forward conditional kernel.
    pub alpha: f64,
    /// alpha * V(f(X1)).
    pub rhs_f: f64,
    /// alpha * V(g(X2)).
    pub rhs_g: f64,
    pub pass_f: bool,
    pub pass_g: bool,
    pub pass: bool,
}

/// Checks E[(f(X1) - g(X2))^2] >= alpha(pi) V(f) and >= alpha(pi) V(g),
/// with variances under the respective marginals. With delta(pi) = 1 the
/// bound is vacuous and the record passes.
pub fn check_pair_bound(lambda: &PairMeasure, f: &[f64], g: &[f64]) -> Result<PairBoundCheck> {
    let s = lambda.size();
    if f.len() != s || g.len() != s {
        return Err(Error::DimensionMismatch {
            context: "check_pair_bound",
            expected: s,
            found: if f.len() != s { f.len() } else { g.len() },
        });
    }
    let pi = lambda.forward_kernel()?;
    let alpha = pi.alpha();

    let mut lhs = 0.0;
    for (x, row) in lambda.joint().iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p != 0.0 {
                let d = f[x] - g[y];
                lhs += p * d * d;
            }
        }
    }
    let rhs_f = alpha * lambda.marginal_src().variance(f);
    let rhs_g = alpha * lambda.marginal_dst().variance(g);
    let pass_f = lhs + tol::SLACK >= rhs_f;
    let pass_g = lhs + tol::SLACK >= rhs_g;

    Ok(PairBoundCheck {
        lhs,
        alpha,
        rhs_f,
        rhs_g,
        pass_f,
        pass_g,
        pass: pass_f && pass_g,
    })
}
