//! Ground truth by brute force: enumerate every path of a small chain and sum
//! statistic * path weight directly.
//!
//! Nothing here shares code with the recursive machinery it certifies — the
//! only ingredients are the path weight initial(x_0) * prod kernel_i(x_i,
//! x_{i+1}) and compensated summation. Exponential in n, so guarded by
//! [`PATH_BUDGET`].

use crate::chain::ChainSpec;
use crate::error::{Error, Result};

/// Enumeration refuses state_count^n beyond this.
pub const PATH_BUDGET: u64 = 10_000_000;

fn check_budget(spec: &ChainSpec) -> Result<()> {
    let s = spec.state_count() as u64;
    let mut total: u64 = 1;
    for _ in 0..spec.n() {
        total = match total.checked_mul(s) {
            Some(t) if t <= PATH_BUDGET => t,
            _ => {
                return Err(Error::PathBudget {
                    states: spec.state_count(),
                    length: spec.n(),
                    budget: PATH_BUDGET,
                })
            }
        };
    }
    Ok(())
}

/// Kahan-compensated accumulator; enumeration order then cannot matter at
/// double precision.
#[derive(Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Calls `visit(path, weight)` for every path with nonzero weight, in
/// lexicographic order. Paths are 0-indexed state sequences of length n.
pub fn for_each_path(
    spec: &ChainSpec,
    visit: &mut dyn FnMut(&[usize], f64),
) -> Result<()> {
    check_budget(spec)?;
    let n = spec.n();
    let mut path = vec![0usize; n];

    fn descend(
        spec: &ChainSpec,
        path: &mut Vec<usize>,
        depth: usize,
        weight: f64,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if depth == spec.n() {
            visit(path, weight);
            return;
        }
        for x in 0..spec.state_count() {
            let w = if depth == 0 {
                spec.initial().weight(x)
            } else {
                weight * spec.kernel(depth - 1).row(path[depth - 1])[x]
            };
            if w == 0.0 {
                continue;
            }
            path[depth] = x;
            descend(spec, path, depth + 1, w, visit);
        }
    }

    descend(spec, &mut path, 0, 1.0, visit);
    Ok(())
}

/// E[statistic(X_0, ..., X_{n-1})] as an exact weighted sum over all paths.
pub fn enumerate_paths_oracle<F>(spec: &ChainSpec, statistic: F) -> Result<f64>
where
    F: Fn(&[usize]) -> f64,
{
    let mut acc = CompensatedSum::default();
    for_each_path(spec, &mut |path, w| acc.add(w * statistic(path)))?;
    Ok(acc.value())
}

/// E[statistic | X_k = x] for every state x, `None` where P(X_k = x) = 0.
pub fn conditional_expectation<F>(
    spec: &ChainSpec,
    k: usize,
    statistic: F,
) -> Result<Vec<Option<f64>>>
where
    F: Fn(&[usize]) -> f64,
{
    assert!(k < spec.n(), "conditioning time outside the chain");
    let s = spec.state_count();
    let mut num = vec![CompensatedSum::default(); s];
    let mut den = vec![CompensatedSum::default(); s];
    for_each_path(spec, &mut |path, w| {
        num[path[k]].add(w * statistic(path));
        den[path[k]].add(w);
    })?;
    Ok((0..s)
        .map(|x| {
            let mass = den[x].value();
            if mass > 0.0 {
                Some(num[x].value() / mass)
            } else {
                None
            }
        })
        .collect())
}

/// Marginal law of each X_k as path sums: a cross-check for the forward
/// recursion, not a use of it.
pub fn oracle_marginals(spec: &ChainSpec) -> Result<Vec<Vec<f64>>> {
    let n = spec.n();
    let s = spec.state_count();
    let mut acc = vec![vec![CompensatedSum::default(); s]; n];
    for_each_path(spec, &mut |path, w| {
        for (k, &x) in path.iter().enumerate() {
            acc[k][x].add(w);
        }
    })?;
    Ok(acc
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.value()).collect())
        .collect())
}

/// The path sum S_n = sum_i f_i(x_i).
pub fn path_sum(spec: &ChainSpec, path: &[usize]) -> f64 {
    path.iter()
        .enumerate()
        .map(|(i, &x)| spec.function(i)[x])
        .sum()
}

/// (E[S_n], V(S_n)) by direct enumeration: mean first, then the centered
/// second moment so the variance is a sum of nonnegative terms.
pub fn oracle_mean_variance(spec: &ChainSpec) -> Result<(f64, f64)> {
    let mean = enumerate_paths_oracle(spec, |p| path_sum(spec, p))?;
    let var = enumerate_paths_oracle(spec, |p| {
        let d = path_sum(spec, p) - mean;
        d * d
    })?;
    Ok((mean, var))
}
