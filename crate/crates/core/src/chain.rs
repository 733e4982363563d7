//! One non-homogeneous chain of length n, and families of them indexed by n.
//!
//! A [`ChainSpec`] bundles the initial distribution, the n-1 transition
//! kernels and the n observation functions f_i. The per-chain scalars
//! alpha_n = min_i alpha(kernel_i) and C_n = max |f_i| are what every bound
//! downstream is phrased in. [`ArraySchemeFamily`] wraps a rule n -> ChainSpec
//! so sweeps over n (gate tables, variance profiles) have a single entry
//! point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Distribution, StochasticKernel};

/// A finite-state non-homogeneous Markov chain of length n with one
/// observation function per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    states: Vec<String>,
    n: usize,
    initial: Distribution,
    kernels: Vec<StochasticKernel>,
    functions: Vec<Vec<f64>>,
}

impl ChainSpec {
    /// Validates dimensions: `kernels.len() = n - 1`, `functions.len() = n`,
    /// and every kernel and function vector sized to the state count.
    pub fn new(
        states: Vec<String>,
        initial: Distribution,
        kernels: Vec<StochasticKernel>,
        functions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let s = states.len();
        if s == 0 {
            return Err(Error::BadChain {
                detail: "no states".into(),
            });
        }
        if initial.size() != s {
            return Err(Error::BadChain {
                detail: format!("initial distribution has {} states, labels list {s}", initial.size()),
            });
        }
        let n = functions.len();
        if n == 0 {
            return Err(Error::BadChain {
                detail: "a chain needs at least one step (no functions given)".into(),
            });
        }
        if kernels.len() + 1 != n {
            return Err(Error::BadChain {
                detail: format!("{} kernels for {n} functions; need exactly n - 1", kernels.len()),
            });
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.size() != s {
                return Err(Error::BadChain {
                    detail: format!("kernel {i} is {0}x{0}, state space has {s} states", k.size()),
                });
            }
        }
        for (i, f) in functions.iter().enumerate() {
            if f.len() != s {
                return Err(Error::BadChain {
                    detail: format!("function {i} has {} entries, state space has {s}", f.len()),
                });
            }
            if let Some(bad) = f.iter().find(|v| !v.is_finite()) {
                return Err(Error::BadChain {
                    detail: format!("function {i} contains non-finite value {bad}"),
                });
            }
        }
        Ok(Self {
            states,
            n,
            initial,
            kernels,
            functions,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    pub fn kernels(&self) -> &[StochasticKernel] {
        &self.kernels
    }

    /// The kernel carrying step index i to i+1, 0-indexed: `kernel(i)` moves
    /// X_i to X_{i+1}.
    pub fn kernel(&self, i: usize) -> &StochasticKernel {
        &self.kernels[i]
    }

    pub fn functions(&self) -> &[Vec<f64>] {
        &self.functions
    }

    pub fn function(&self, i: usize) -> &[f64] {
        &self.functions[i]
    }

    /// The laws of X_0, ..., X_{n-1} by the forward recursion
    /// mu_{i+1} = mu_i kernel_i. Each step renormalizes, so products of many
    /// kernels cannot drift away from total mass 1.
    pub fn marginals(&self) -> Vec<Distribution> {
        let mut out = Vec::with_capacity(self.n);
        out.push(self.initial.clone());
        for k in &self.kernels {
            let next = out
                .last()
                .unwrap()
                .propagate(k)
                .expect("kernel dimensions checked at construction");
            out.push(next);
        }
        out
    }

    /// Per-chain scalars; see [`ChainScalars`].
    pub fn scalars(&self) -> ChainScalars {
        let alpha_n = self
            .kernels
            .iter()
            .map(|k| k.alpha())
            .fold(f64::INFINITY, f64::min);
        // A single-step chain has no kernels; every bound involving alpha_n
        // is vacuous there, and alpha_n = 1 keeps them trivially true.
        let alpha_n = if self.kernels.is_empty() { 1.0 } else { alpha_n };
        let c_n = self
            .functions
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        let marginals = self.marginals();
        let variances: Vec<f64> = marginals
            .iter()
            .zip(&self.functions)
            .map(|(mu, f)| mu.variance(f))
            .collect();
        let sum_variances = variances.iter().sum();
        ChainScalars {
            alpha_n,
            c_n,
            variances,
            sum_variances,
        }
    }
}

/// The scalars a chain's bounds are phrased in.
#[derive(Debug, Clone, Serialize)]
pub struct ChainScalars {
    /// min over steps of alpha(kernel); 1 for a single-step chain.
    pub alpha_n: f64,
    /// max over steps and states of |f_i(x)|.
    pub c_n: f64,
    /// V(f_i(X_i)) under the marginal law of X_i, one entry per step.
    pub variances: Vec<f64>,
    pub sum_variances: f64,
}

/// Homogeneous assembly: every kernel equal to `p`, every function equal to
/// `f`.
pub fn build_homogeneous(
    p: &StochasticKernel,
    f: &[f64],
    n: usize,
    initial: &Distribution,
) -> Result<ChainSpec> {
    if f.len() != p.size() || initial.size() != p.size() {
        return Err(Error::DimensionMismatch {
            context: "build_homogeneous",
            expected: p.size(),
            found: if f.len() != p.size() {
                f.len()
            } else {
                initial.size()
            },
        });
    }
    if n == 0 {
        return Err(Error::BadChain {
            detail: "chain length must be at least 1".into(),
        });
    }
    let states = (1..=p.size()).map(|i| format!("s{i}")).collect();
    ChainSpec::new(
        states,
        initial.clone(),
        vec![p.clone(); n - 1],
        vec![f.to_vec(); n],
    )
}

/// Which of the three blocks a transition of the anomalous two-state example
/// falls in. With b = floor(1/alpha): steps before the first multiple of b
/// are slow flips Q(alpha), steps at multiples of b are fair coins Q(1/2),
/// and everything else is a fast flip Q(1 - alpha).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DobrushinRegime {
    Slow,
    Coin,
    Fast,
}

/// Regime of the 1-based transition index `i` (the kernel carrying X_i to
/// X_{i+1}) for block size `b`.
pub fn dobrushin_regime(i: usize, b: usize) -> DobrushinRegime {
    if i < b {
        DobrushinRegime::Slow
    } else if i % b == 0 {
        DobrushinRegime::Coin
    } else {
        DobrushinRegime::Fast
    }
}

/// The two-state chain whose sum of state-1 indicators has an anomalous
/// limit: long stretches of nearly-deterministic kernels separated by fair
/// coins that wipe the state out.
///
/// States are "1" and "2"; f_i is the indicator of state "1"; the start is
/// uniform. `alpha` must lie in (0, 1/2]. With b = floor(1/alpha), transition
/// i (1-based) uses Q(alpha) for i < b, Q(1/2) when b divides i, and
/// Q(1 - alpha) otherwise. When b >= n the whole horizon is the slow block.
pub fn build_dobrushin_example(n: usize, alpha: f64) -> Result<ChainSpec> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::BadAlpha { alpha });
    }
    if n < 2 {
        return Err(Error::BadChain {
            detail: "the example needs n >= 2".into(),
        });
    }
    let b = (1.0 / alpha).floor() as usize;
    let slow = StochasticKernel::two_state_flip(alpha)?;
    let coin = StochasticKernel::two_state_flip(0.5)?;
    // Q(1 - alpha) written directly so its entries are exactly {alpha,
    // 1 - alpha}, bit-identical to the slow kernel's entries swapped.
    let fast = StochasticKernel::new(vec![vec![alpha, 1.0 - alpha], vec![1.0 - alpha, alpha]])?;
    let kernels = (1..n)
        .map(|i| match dobrushin_regime(i, b) {
            DobrushinRegime::Slow => slow.clone(),
            DobrushinRegime::Coin => coin.clone(),
            DobrushinRegime::Fast => fast.clone(),
        })
        .collect();
    let functions = vec![vec![1.0, 0.0]; n];
    ChainSpec::new(
        vec!["1".into(), "2".into()],
        Distribution::uniform(2),
        kernels,
        functions,
    )
}

/// A rule producing one chain per n: the scheme over which sweeps run.
/// Generators must be deterministic in n so sweeps are reproducible.
pub struct ArraySchemeFamily {
    description: String,
    generator: Box<dyn Fn(usize) -> Result<ChainSpec> + Send + Sync>,
}

impl ArraySchemeFamily {
    pub fn new<F>(description: impl Into<String>, generator: F) -> Self
    where
        F: Fn(usize) -> Result<ChainSpec> + Send + Sync + 'static,
    {
        Self {
            description: description.into(),
            generator: Box::new(generator),
        }
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn generate(&self, n: usize) -> Result<ChainSpec> {
        let spec = (self.generator)(n)?;
        if spec.n() != n {
            return Err(Error::BadChain {
                detail: format!("family `{}` produced length {} for n = {n}", self.description, spec.n()),
            });
        }
        Ok(spec)
    }

    /// The anomalous example with alpha_n = n^(-exponent). The exponent must
    /// lie in (0, 1); members with n^(-exponent) > 1/2 (small n) fail to
    /// generate, which sweeps report per-n rather than fatally.
    pub fn dobrushin_power(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(Error::BadExponent { exponent });
        }
        Ok(Self::new(
            format!("two-state anomalous example, alpha_n = n^-{exponent}"),
            move |n| build_dobrushin_example(n, (n as f64).powf(-exponent)),
        ))
    }
}

impl std::fmt::Debug for ArraySchemeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ArraySchemeFamily")
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginals_of_homogeneous_flip_stay_uniform() {
        let q = StochasticKernel::two_state_flip(0.3).unwrap();
        let spec = build_homogeneous(&q, &[1.0, 0.0], 6, &Distribution::uniform(2)).unwrap();
        for mu in spec.marginals() {
            assert!((mu.weight(0) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_chain_marginal_is_initial() {
        let spec = ChainSpec::new(
            vec!["a".into(), "b".into()],
            Distribution::new(vec![0.3, 0.7]).unwrap(),
            vec![],
            vec![vec![1.0, 2.0]],
        )
        .unwrap();
        let ms = spec.marginals();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0], *spec.initial());
        assert_eq!(spec.scalars().alpha_n, 1.0);
    }

    #[test]
    fn marginals_match_composed_kernels() {
        let a = StochasticKernel::new(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let b = StochasticKernel::new(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        let spec = ChainSpec::new(
            vec!["a".into(), "b".into()],
            Distribution::new(vec![0.6, 0.4]).unwrap(),
            vec![a.clone(), b.clone()],
            vec![vec![0.0, 0.0]; 3],
        )
        .unwrap();
        let ms = spec.marginals();
        let direct = spec.initial().propagate(&a.compose(&b).unwrap()).unwrap();
        assert!(ms[2].tv(&direct) < 1e-12);
    }

    #[test]
    fn scalars_constant_functions_have_zero_variance() {
        let q = StochasticKernel::two_state_flip(0.25).unwrap();
        let spec = build_homogeneous(&q, &[3.0, 3.0], 5, &Distribution::uniform(2)).unwrap();
        let sc = spec.scalars();
        assert_eq!(sc.sum_variances, 0.0);
        assert_eq!(sc.c_n, 3.0);
    }

    #[test]
    fn dobrushin_example_scalars() {
        let n = 40;
        let alpha = 0.25;
        let spec = build_dobrushin_example(n, alpha).unwrap();
        let sc = spec.scalars();
        assert_eq!(sc.c_n, 1.0);
        // alpha(Q(p)) = 2p for p <= 1/2, so the chain scalar is 2 * alpha.
        assert_eq!(sc.alpha_n, 2.0 * alpha);
        // Uniform start and doubly stochastic kernels keep every marginal
        // uniform, so each indicator variance is exactly 1/4.
        for v in &sc.variances {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn dobrushin_example_regimes_at_quarter() {
        // b = 4: transition 2 slow, 4 coin, 6 fast.
        let spec = build_dobrushin_example(12, 0.25).unwrap();
        let q_slow = StochasticKernel::two_state_flip(0.25).unwrap();
        let q_coin = StochasticKernel::two_state_flip(0.5).unwrap();
        assert_eq!(spec.kernel(1), &q_slow); // transition i = 2
        assert_eq!(spec.kernel(3), &q_coin); // transition i = 4
        assert!((spec.kernel(5).row(0)[0] - 0.25).abs() < 1e-15); // i = 6 fast
        assert!((spec.kernel(5).row(0)[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn dobrushin_example_all_regimes_at_half() {
        // alpha = 1/2: b = 2, so transition 1 is slow, even transitions are
        // coins, odd transitions >= 3 are fast.
        let spec = build_dobrushin_example(10, 0.5).unwrap();
        assert_eq!(dobrushin_regime(1, 2), DobrushinRegime::Slow);
        assert_eq!(dobrushin_regime(2, 2), DobrushinRegime::Coin);
        assert_eq!(dobrushin_regime(3, 2), DobrushinRegime::Fast);
        // With alpha = 1/2 all three kernels coincide with Q(1/2).
        for i in 0..9 {
            assert!((spec.kernel(i).row(0)[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn dobrushin_example_whole_horizon_slow_when_block_exceeds_n() {
        // alpha = 0.1 gives b = 10 >= n: every transition is the slow flip.
        let spec = build_dobrushin_example(8, 0.1).unwrap();
        let q_slow = StochasticKernel::two_state_flip(0.1).unwrap();
        for i in 0..7 {
            assert_eq!(spec.kernel(i), &q_slow);
        }
    }

    #[test]
    fn dobrushin_example_rejects_bad_alpha() {
        assert!(matches!(
            build_dobrushin_example(10, 0.6),
            Err(Error::BadAlpha { .. })
        ));
        assert!(matches!(
            build_dobrushin_example(10, 0.0),
            Err(Error::BadAlpha { .. })
        ));
    }

    #[test]
    fn block_boundary_coin_erases_past() {
        // The joint law of (X_k, X_{k+1}) across a coin step factorizes,
        // because Q(1/2) rows are identical.
        let spec = build_dobrushin_example(12, 0.25).unwrap();
        let ms = spec.marginals();
        // Transition 4 is the coin; 0-indexed kernel(3) maps X_3 to X_4.
        let k = spec.kernel(3);
        for x in 0..2 {
            for y in 0..2 {
                let joint = ms[3].weight(x) * k.row(x)[y];
                let product = ms[3].weight(x) * ms[4].weight(y);
                assert!((joint - product).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn homogeneous_assembly() {
        let p = StochasticKernel::two_state_flip(0.2).unwrap();
        let spec = build_homogeneous(&p, &[1.0, -1.0], 4, &Distribution::uniform(2)).unwrap();
        assert_eq!(spec.kernels().len(), 3);
        for k in spec.kernels() {
            assert_eq!(k, &p);
        }
        for f in spec.functions() {
            assert_eq!(f, &vec![1.0, -1.0]);
        }
        let one = build_homogeneous(&p, &[1.0, -1.0], 1, &Distribution::uniform(2)).unwrap();
        assert!(one.kernels().is_empty());
    }

    #[test]
    fn family_checks_length() {
        let fam = ArraySchemeFamily::new("broken", |_| {
            build_homogeneous(
                &StochasticKernel::two_state_flip(0.2).unwrap(),
                &[1.0, 0.0],
                3,
                &Distribution::uniform(2),
            )
        });
        assert!(fam.generate(3).is_ok());
        assert!(fam.generate(5).is_err());
    }

    #[test]
    fn dobrushin_power_family() {
        let fam = ArraySchemeFamily::dobrushin_power(0.25).unwrap();
        let spec = fam.generate(100).unwrap();
        assert_eq!(spec.n(), 100);
        // Exact up to one rounding of 1 - alpha (alpha here is not dyadic).
        let expected = 2.0 * (100f64).powf(-0.25);
        assert!((spec.scalars().alpha_n - expected).abs() < 1e-15);
        // n too small for alpha <= 1/2: reported per-n, not a panic.
        assert!(fam.generate(8).is_err());
        assert!(ArraySchemeFamily::dobrushin_power(1.5).is_err());
    }
}
