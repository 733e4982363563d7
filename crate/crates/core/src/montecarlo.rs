//! Seeded path simulation and empirical-distribution diagnostics for the
//! normalized sum (S_n - E[S_n]) / sqrt(V(S_n)).
//!
//! Two contracts shape everything here. First, reproducibility: path j draws
//! from its own ChaCha8 stream (seed, stream = j), so a batch is bit-identical
//! for any worker count. Second, exact-moment normalization: the centering and
//! scaling come from the decomposition, never from sample moments, so the
//! empirical mean and variance of a batch sitting near (0, 1) is evidence
//! about the chain rather than an artifact of self-normalization.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{build_homogeneous, ChainSpec};
use crate::error::{Error, Result};
use crate::exact::{decompose, mean_of_sum, variance_of_sum, DEFAULT_EXACT_CAP};
use crate::kernel::{Distribution, StochasticKernel};
use crate::oracle::CompensatedSum;

/// Fixed default seed so reports are reproducible without any flag.
pub const DEFAULT_SEED: u64 = 0x6E68_6D63;

/// A batch of sampled paths reduced to their normalized sums.
#[derive(Debug, Clone, Serialize)]
pub struct SampleBatch {
    pub seed: u64,
    /// Chain length (number of positions).
    pub n: usize,
    pub count: usize,
    /// One value per path: (S_n - mean_sn) / sqrt(v_sn).
    pub statistics: Vec<f64>,
    /// The unnormalized sums as integers, present only when every function
    /// value is an integer (then S_n is an exact visit count).
    pub raw_counts: Option<Vec<i64>>,
    /// Exact E[S_n] used for centering.
    pub mean_sn: f64,
    /// Exact V(S_n) used for scaling.
    pub v_sn: f64,
}

/// A 53-bit uniform draw in [0, 1).
fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draw from a weight row. Falls back to the last state with
/// positive mass when rounding pushes the partial sums below u.
fn draw_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = j;
            acc += w;
            if u < acc {
                return j;
            }
        }
    }
    last_positive
}

/// S_n along one freshly sampled path.
fn sample_path_sum(spec: &ChainSpec, rng: &mut ChaCha8Rng) -> f64 {
    let mut x = draw_index(spec.initial().weights(), unit_uniform(rng));
    let mut s = spec.function(0)[x];
    for i in 1..spec.n() {
        x = draw_index(spec.kernel(i - 1).row(x), unit_uniform(rng));
        s += spec.function(i)[x];
    }
    s
}

/// Samples `count` independent paths and returns their normalized sums.
/// Exact moments come from the decomposition; a degenerate variance is an
/// error because the normalization is then undefined.
pub fn sample(spec: &ChainSpec, count: usize, seed: u64) -> Result<SampleBatch> {
    if count < 1 {
        return Err(Error::TooFewSamples { count, minimum: 1 });
    }
    let d = decompose(spec);
    if d.degenerate {
        return Err(Error::DegenerateVariance);
    }
    let mean_sn = mean_of_sum(spec);
    let scale = d.v_sn.sqrt();

    let sums: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            sample_path_sum(spec, &mut rng)
        })
        .collect();

    let integer_valued = spec
        .functions()
        .iter()
        .flatten()
        .all(|v| v.fract() == 0.0 && v.abs() < 2f64.powi(40));
    let raw_counts = integer_valued.then(|| sums.iter().map(|&s| s as i64).collect());
    let statistics = sums.iter().map(|&s| (s - mean_sn) / scale).collect();

    Ok(SampleBatch {
        seed,
        n: spec.n(),
        count,
        statistics,
        raw_counts,
        mean_sn,
        v_sn: d.v_sn,
    })
}

/// Goodness-of-fit summary of a batch against the standard normal.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// One-sample Kolmogorov distance sup_x |F_emp(x) - Phi(x)|.
    pub ks_statistic: f64,
    /// Empirical moments of the statistics (population normalization).
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub count: usize,
}

/// Standard normal CDF via the Abramowitz-Stegun 26.2.17 tail polynomial;
/// absolute error below 7.5e-8 everywhere.
pub fn standard_normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - standard_normal_cdf(-x);
    }
    let t = 1.0 / (1.0 + 0.2316419 * x);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let z = (-0.5 * x * x).exp() * 0.398_942_280_401_432_7;
    1.0 - z * poly
}

/// Compares a batch to N(0,1): sorted-sample Kolmogorov distance plus the
/// first four empirical moments. Needs at least 10 statistics.
pub fn fit_normal(batch: &SampleBatch) -> Result<FitReport> {
    let count = batch.statistics.len();
    if count < 10 {
        return Err(Error::TooFewSamples { count, minimum: 10 });
    }
    let mut sorted = batch.statistics.clone();
    sorted.sort_unstable_by(f64::total_cmp);

    let m = count as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = standard_normal_cdf(x);
        ks = ks.max(phi - i as f64 / m).max((i + 1) as f64 / m - phi);
    }

    let mut acc = CompensatedSum::default();
    for &x in &sorted {
        acc.add(x);
    }
    let mean = acc.value() / m;
    let mut m2 = CompensatedSum::default();
    let mut m3 = CompensatedSum::default();
    let mut m4 = CompensatedSum::default();
    for &x in &sorted {
        let d = x - mean;
        m2.add(d * d);
        m3.add(d * d * d);
        m4.add(d * d * d * d);
    }
    let variance = m2.value() / m;
    let (skewness, excess_kurtosis) = if variance > 0.0 {
        (
            m3.value() / m / variance.powf(1.5),
            m4.value() / m / (variance * variance) - 3.0,
        )
    } else {
        (0.0, 0.0)
    };

    Ok(FitReport {
        ks_statistic: ks,
        mean,
        variance,
        skewness,
        excess_kurtosis,
        count,
    })
}

/// One length in the slow/fast variance sweep. Case A is the homogeneous
/// Q(1/n) chain, case B the homogeneous Q(1 - 1/n) chain, both started from
/// the uniform invariant distribution and counting visits to the first state.
#[derive(Debug, Clone, Serialize)]
pub struct CaseAbRow {
    pub n: usize,
    /// n^{-2} V(T_n) for the slow chain; the sequence settling down is the
    /// anomalous n^2 variance growth.
    pub va_scaled: f64,
    /// V(T_n) for the fast chain; bounded in n.
    pub vb: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseAbTable {
    pub rows: Vec<CaseAbRow>,
    /// Length at which the histogram samples below were drawn (the largest
    /// requested n).
    pub sample_n: usize,
    /// Samples of T_n / n for the slow chain: spread over [0, 1].
    pub t_over_n: Vec<f64>,
    /// Samples of T_n - (n+1)/2 for the fast chain: tight around 0.
    pub t_centered: Vec<f64>,
}

fn case_spec(n: usize, p: f64) -> Result<ChainSpec> {
    let q = StochasticKernel::two_state_flip(p)?;
    build_homogeneous(&q, &[1.0, 0.0], n, &Distribution::uniform(2))
}

/// Exact scaled variances of the visit count for both boundary regimes over
/// `ns`, plus histogram samples at the largest length.
pub fn case_ab_profiles(ns: &[usize], samples_per_n: usize, seed: u64) -> Result<CaseAbTable> {
    if ns.is_empty() {
        return Err(Error::BadChain {
            detail: "case_ab_profiles needs at least one length".into(),
        });
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n < 2 {
            return Err(Error::BadChain {
                detail: format!("case_ab_profiles needs n >= 2, got {n}"),
            });
        }
        if n > DEFAULT_EXACT_CAP {
            return Err(Error::ExactCapExceeded {
                n,
                cap: DEFAULT_EXACT_CAP,
            });
        }
        let va = variance_of_sum(&case_spec(n, 1.0 / n as f64)?);
        let vb = variance_of_sum(&case_spec(n, 1.0 - 1.0 / n as f64)?);
        rows.push(CaseAbRow {
            n,
            va_scaled: va / (n as f64 * n as f64),
            vb,
        });
    }

    let sample_n = *ns.iter().max().unwrap();
    let slow = sample(&case_spec(sample_n, 1.0 / sample_n as f64)?, samples_per_n, seed)?;
    let fast = sample(
        &case_spec(sample_n, 1.0 - 1.0 / sample_n as f64)?,
        samples_per_n,
        seed.wrapping_add(1),
    )?;
    // The indicator is integer valued, so both batches carry exact counts.
    let counts = |b: &SampleBatch| b.raw_counts.clone().unwrap();
    let t_over_n = counts(&slow)
        .into_iter()
        .map(|t| t as f64 / sample_n as f64)
        .collect();
    let t_centered = counts(&fast)
        .into_iter()
        .map(|t| t as f64 - (sample_n as f64 + 1.0) / 2.0)
        .collect();

    Ok(CaseAbTable {
        rows,
        sample_n,
        t_over_n,
        t_centered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_dobrushin_example;
    use crate::oracle::enumerate_paths_oracle;

    #[test]
    fn same_seed_same_batch() {
        let spec = build_dobrushin_example(40, 0.25).unwrap();
        let a = sample(&spec, 64, 7).unwrap();
        let b = sample(&spec, 64, 7).unwrap();
        assert_eq!(a.statistics, b.statistics);
        assert_eq!(a.raw_counts, b.raw_counts);
        let c = sample(&spec, 64, 8).unwrap();
        assert_ne!(a.statistics, c.statistics);
    }

    #[test]
    fn prefix_stability_under_count() {
        // Streams are keyed by path index, so a longer batch extends a
        // shorter one rather than reshuffling it.
        let spec = build_dobrushin_example(20, 0.5).unwrap();
        let small = sample(&spec, 10, 3).unwrap();
        let large = sample(&spec, 50, 3).unwrap();
        assert_eq!(small.statistics[..], large.statistics[..10]);
    }

    #[test]
    fn deterministic_flip_two_outcomes() {
        // Deterministic alternation from a uniform start: S_3 is 2 from
        // state 1 and 1 from state 2, so the statistic is exactly +-1.
        let q = StochasticKernel::two_state_flip(1.0).unwrap();
        let spec = build_homogeneous(&q, &[1.0, 0.0], 3, &Distribution::uniform(2)).unwrap();
        let batch = sample(&spec, 200, 11).unwrap();
        assert!((batch.mean_sn - 1.5).abs() < 1e-12);
        assert!((batch.v_sn - 0.25).abs() < 1e-12);
        for (&t, &raw) in batch
            .statistics
            .iter()
            .zip(batch.raw_counts.as_ref().unwrap())
        {
            assert!(t == 1.0 || t == -1.0);
            assert_eq!(raw, if t == 1.0 { 2 } else { 1 });
        }
    }

    #[test]
    fn degenerate_variance_rejected() {
        let q = StochasticKernel::two_state_flip(0.3).unwrap();
        let spec = build_homogeneous(&q, &[2.0, 2.0], 5, &Distribution::uniform(2)).unwrap();
        assert!(matches!(
            sample(&spec, 10, 0),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn non_integer_function_drops_raw_counts() {
        let q = StochasticKernel::two_state_flip(0.3).unwrap();
        let spec = build_homogeneous(&q, &[0.5, 0.0], 4, &Distribution::uniform(2)).unwrap();
        let batch = sample(&spec, 16, 1).unwrap();
        assert!(batch.raw_counts.is_none());
    }

    #[test]
    fn rank_one_steps_match_binomial_moments() {
        // Every position is an independent Bernoulli(0.3), so S_n is
        // Binomial(n, 0.3) and the exact moments are classical.
        let w = Distribution::new(vec![0.3, 0.7]).unwrap();
        let k = StochasticKernel::rank_one(&w);
        let n = 50;
        let spec = build_homogeneous(&k, &[1.0, 0.0], n, &w).unwrap();
        let batch = sample(&spec, 10_000, DEFAULT_SEED).unwrap();
        assert!((batch.mean_sn - n as f64 * 0.3).abs() < 1e-10);
        assert!((batch.v_sn - n as f64 * 0.3 * 0.7).abs() < 1e-10);
        let fit = fit_normal(&batch).unwrap();
        // Exact-moment normalization puts the empirical moments near (0, 1)
        // with standard errors of order 1/sqrt(count).
        assert!(fit.mean.abs() < 0.05);
        assert!((fit.variance - 1.0).abs() < 0.06);
        let skew_expected = (1.0 - 2.0 * 0.3) / (n as f64 * 0.3 * 0.7).sqrt();
        assert!((fit.skewness - skew_expected).abs() < 0.1);
    }

    #[test]
    fn sampled_mean_matches_oracle_on_small_spec() {
        let spec = build_dobrushin_example(10, 0.5).unwrap();
        let sum_over_path = |p: &[usize]| p.iter().filter(|&&x| x == 0).count() as f64;
        let exact_mean = enumerate_paths_oracle(&spec, sum_over_path).unwrap();
        let batch = sample(&spec, 20_000, 5).unwrap();
        assert!((batch.mean_sn - exact_mean).abs() < 1e-12);
        let fit = fit_normal(&batch).unwrap();
        assert!(fit.mean.abs() < 0.05);
        assert!((fit.variance - 1.0).abs() < 0.06);
    }

    #[test]
    fn blocks_around_a_coin_step_are_uncorrelated() {
        // A fair-coin step erases the state, so counts on the two sides of
        // it are independent; the exact covariance from path enumeration
        // vanishes.
        let spec = build_dobrushin_example(8, 0.25).unwrap();
        let head = |path: &[usize]| path[..4].iter().filter(|&&x| x == 0).count() as f64;
        let tail = |path: &[usize]| path[4..].iter().filter(|&&x| x == 0).count() as f64;
        let eh = enumerate_paths_oracle(&spec, head).unwrap();
        let et = enumerate_paths_oracle(&spec, tail).unwrap();
        let cross = enumerate_paths_oracle(&spec, |p: &[usize]| head(p) * tail(p)).unwrap();
        assert!((cross - eh * et).abs() < 1e-12);
    }

    #[test]
    fn cdf_reference_values() {
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((standard_normal_cdf(1.96) - 0.975_002_1).abs() < 1e-6);
        assert!((standard_normal_cdf(-1.96) - 0.024_997_9).abs() < 1e-6);
        assert!(standard_normal_cdf(8.0) > 1.0 - 1e-14);
        assert!(standard_normal_cdf(-8.0) < 1e-14);
        for i in 0..100 {
            let x = -5.0 + 0.1 * i as f64;
            assert!(standard_normal_cdf(x + 0.1) > standard_normal_cdf(x));
            // The negative branch is the exact complement of the positive
            // one; only the self-paired x = 0 sees the approximation error.
            let sum = standard_normal_cdf(x) + standard_normal_cdf(-x);
            if x == 0.0 {
                assert!((sum - 1.0).abs() < 3e-9);
            } else {
                assert_eq!(sum, 1.0);
            }
        }
    }

    #[test]
    fn stratified_quantiles_have_tiny_ks() {
        // Invert the same CDF the fit uses, so approximation error cancels
        // and the distance is the pure stratification gap 1/(count+1).
        let count = 999;
        let invert = |p: f64| -> f64 {
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if standard_normal_cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let statistics: Vec<f64> = (1..=count)
            .map(|i| invert(i as f64 / (count + 1) as f64))
            .collect();
        let batch = SampleBatch {
            seed: 0,
            n: 1,
            count,
            statistics,
            raw_counts: None,
            mean_sn: 0.0,
            v_sn: 1.0,
        };
        let fit = fit_normal(&batch).unwrap();
        assert!(fit.ks_statistic <= 1.0 / (count as f64 + 1.0) + 1e-6);
    }

    #[test]
    fn constant_batch_is_far_from_normal() {
        let batch = SampleBatch {
            seed: 0,
            n: 1,
            count: 100,
            statistics: vec![0.0; 100],
            raw_counts: None,
            mean_sn: 0.0,
            v_sn: 1.0,
        };
        let fit = fit_normal(&batch).unwrap();
        assert!(fit.ks_statistic >= 0.5);
        assert_eq!(fit.skewness, 0.0);
        assert_eq!(fit.excess_kurtosis, 0.0);
    }

    #[test]
    fn fit_needs_ten_samples() {
        let batch = SampleBatch {
            seed: 0,
            n: 1,
            count: 5,
            statistics: vec![0.0; 5],
            raw_counts: None,
            mean_sn: 0.0,
            v_sn: 1.0,
        };
        assert!(matches!(
            fit_normal(&batch),
            Err(Error::TooFewSamples { minimum: 10, .. })
        ));
    }

    #[test]
    fn case_ab_exact_values_at_n_two() {
        // At n = 2 both regimes are the fair coin: two independent uniform
        // bits, V(T_2) = 1/2.
        let table = case_ab_profiles(&[2], 64, 9).unwrap();
        assert!((table.rows[0].va_scaled - 0.125).abs() < 1e-12);
        assert!((table.rows[0].vb - 0.5).abs() < 1e-12);
        assert_eq!(table.sample_n, 2);
        for &t in &table.t_over_n {
            assert!(t == 0.0 || t == 0.5 || t == 1.0);
        }
        for &t in &table.t_centered {
            assert!(t == -1.5 || t == -0.5 || t == 0.5);
        }
    }

    #[test]
    fn case_ab_variance_shapes() {
        // Slow-chain scaled variance stays of order one while the fast
        // chain's unscaled variance stays bounded.
        let table = case_ab_profiles(&[16, 64, 256], 32, 2).unwrap();
        for pair in table.rows.windows(2) {
            let d_prev = (table.rows.last().unwrap().va_scaled - pair[0].va_scaled).abs();
            let d_next = (table.rows.last().unwrap().va_scaled - pair[1].va_scaled).abs();
            assert!(d_next < d_prev);
        }
        for row in &table.rows {
            assert!(row.va_scaled > 0.01 && row.va_scaled < 0.25);
            assert!(row.vb > 0.2 && row.vb < 0.5);
        }
    }

    #[test]
    fn case_ab_rejects_bad_lengths() {
        assert!(case_ab_profiles(&[], 8, 0).is_err());
        assert!(case_ab_profiles(&[1], 8, 0).is_err());
        assert!(matches!(
            case_ab_profiles(&[DEFAULT_EXACT_CAP + 1], 8, 0),
            Err(Error::ExactCapExceeded { .. })
        ));
    }
}
