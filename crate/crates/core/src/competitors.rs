//! Baseline private tests: sequential pairwise HSIC tests with Bonferroni
//! and composition (MdpHSIC), and two subsample-and-aggregate tests (TOT and
//! SAR) that privatize a count of non-private sub-test rejections.

use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;

use crate::data::{Dataset, Internals, LevelGuarantee, PrivacyParams, ResamplerKind, TestConfig, TestOutcome};
use crate::dpdhsic::{dhsic_trace_from_grams, permutation_p_value};
use crate::error::{input, Result};
use crate::kernels::{grams, GramMatrix, KernelSpec};
use crate::math::{binomial_critical_value, binomial_pmf, laplace_upper_tail, normal_quantile};
use crate::privacy::{laplace, split_budget, SensitivityBound, StatisticKind};
use crate::rng::{shuffle, uniform_open01};

/// Sensitivity `4 sqrt(prod_{l <= j} K^l) / n` of the `j`-th pairwise HSIC.
pub fn mdphsic_sensitivity(bound_product: f64, n: usize) -> Result<SensitivityBound> {
    SensitivityBound::new(
        4.0 * libm::sqrt(bound_product) / n as f64,
        StatisticKind::VSqrt,
        "4 sqrt(prod K^l) / n",
    )
}

/// Laplace scales of the `d - 1` sub-tests for variables taken in `order`.
pub fn mdphsic_noise_scales(
    specs: &[KernelSpec],
    order: &[usize],
    n: usize,
    privacy: &PrivacyParams,
) -> Result<Vec<f64>> {
    let d = specs.len();
    let part = split_budget(privacy, d - 1)?;
    let mut bound = specs[order[0]].bound();
    (1..d)
        .map(|pos| {
            bound *= specs[order[pos]].bound();
            let s = mdphsic_sensitivity(bound, n)?;
            Ok(crate::privacy::noise_scale(&s, &part))
        })
        .collect()
}

fn check_order(order: &[usize], d: usize) -> Result<()> {
    let mut seen = alloc::vec![false; d];
    if order.len() != d || order.iter().any(|&j| j >= d || core::mem::replace(&mut seen[j], true)) {
        return input(format!("variable order must be a permutation of 0..{d}"));
    }
    Ok(())
}

/// For `j = 1..d` (positions in `order`) tests `X^{order[j]}` against
/// `(X^{order[0]}, ..., X^{order[j-1]})` with a private permutation HSIC at
/// budget `(eps, delta) / (d - 1)` and level `alpha / (d - 1)`; rejects if
/// any sub-test does.
///
/// `order = None` draws a uniformly random order from `rng` first.
pub fn mdphsic_test<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    order: Option<&[usize]>,
    rng: &mut R,
) -> Result<TestOutcome> {
    let d = dataset.d();
    let n = dataset.n();
    let order: Vec<usize> = match order {
        Some(o) => {
            check_order(o, d)?;
            o.to_vec()
        }
        None => {
            let mut o: Vec<usize> = (0..d).collect();
            shuffle(rng, &mut o);
            o
        }
    };
    let g = grams(dataset, specs)?;
    let part = split_budget(privacy, d - 1)?;
    let level = config.alpha / (d - 1) as f64;
    let scales = mdphsic_noise_scales(specs, &order, n, privacy)?;

    let mut reject = false;
    let mut min_p = 1.0f64;
    let mut earlier: GramMatrix = g[order[0]].clone();
    for pos in 1..d {
        let current = &g[order[pos]];
        let bound = mdphsic_sensitivity(earlier.bound() * current.bound(), n)?;
        let trace = dhsic_trace_from_grams(
            &[&earlier, current],
            ResamplerKind::Permutation,
            &bound,
            &part,
            config.resamples,
            rng,
        )?;
        let p = trace.p_value();
        min_p = min_p.min(p);
        reject |= p <= level;
        if pos + 1 < d {
            earlier = earlier.hadamard(current)?;
        }
    }
    Ok(TestOutcome {
        reject,
        internals: Internals {
            p_value: Some(min_p),
            m0: None,
            noise_scale: scales.iter().sum(),
            noisy_count: None,
        },
        level: LevelGuarantee::Conservative,
    })
}

/// Subset count `floor(sqrt(n))` and sub-level `5 alpha` (capped at 1/2 so
/// that randomized response stays informative).
pub fn subsample_design(n: usize, alpha: f64) -> (usize, f64) {
    let m = libm::floor(libm::sqrt(n as f64)) as usize;
    (m.max(1), (5.0 * alpha).min(0.5))
}

/// Non-private permutation p-values of each of `m` disjoint random subsets.
/// Rows are shuffled from `rng`, then split into contiguous near-equal parts.
fn subset_p_values<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    m: usize,
    resamples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = dataset.n();
    let mut rows: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut rows);
    let (base, extra) = (n / m, n % m);
    let mut start = 0;
    (0..m)
        .map(|s| {
            let len = base + usize::from(s < extra);
            let part = &rows[start..start + len];
            start += len;
            let sub = grams(&dataset.select_rows(part), specs)?;
            let refs: Vec<&GramMatrix> = sub.iter().collect();
            permutation_p_value(&refs, resamples, rng)
        })
        .collect()
}

fn check_subsets(n: usize, m: usize) -> Result<()> {
    if n / m < 4 {
        return input(format!("{m} subsets of {n} rows leave fewer than 4 rows per subset"));
    }
    Ok(())
}

/// Smallest threshold `c` with `P(S + L > c) <= alpha` for
/// `S ~ Binomial(m, p0)` and `L ~ Laplace(0, scale)`, by exact convolution.
/// With `scale = 0` this is the integer binomial critical value.
pub fn laplace_count_threshold(m: usize, p0: f64, scale: f64, alpha: f64) -> f64 {
    if scale == 0.0 {
        return binomial_critical_value(m, p0, alpha) as f64;
    }
    let pmf = binomial_pmf(m, p0);
    let tail = |c: f64| -> f64 {
        pmf.iter()
            .enumerate()
            .map(|(k, &w)| w * laplace_upper_tail(c - k as f64, scale))
            .sum()
    };
    let (mut lo, mut hi) = (-1.0, m as f64 + 1.0);
    while tail(lo) <= alpha {
        lo -= scale * 10.0;
    }
    while tail(hi) > alpha {
        hi += scale * 10.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Subsample-and-aggregate with a Laplace-noised count: rejects when
/// `S + Laplace(1/eps)` exceeds the exact level-`alpha` threshold, where `S`
/// counts subsets whose permutation p-value is at most `alpha_0`.
/// Uses pure `epsilon`-DP; `delta` is not spent.
pub fn tot_dhsic_test<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let n = dataset.n();
    let (m, alpha0) = subsample_design(n, config.alpha);
    check_subsets(n, m)?;
    if specs.len() != dataset.d() {
        return input("one kernel spec per group is required");
    }
    if privacy.epsilon() == 0.0 {
        // a zero-epsilon count carries no information
        return Ok(TestOutcome {
            reject: false,
            internals: Internals {
                p_value: None,
                m0: None,
                noise_scale: f64::INFINITY,
                noisy_count: None,
            },
            level: LevelGuarantee::Conservative,
        });
    }
    let ps = subset_p_values(dataset, specs, m, config.resamples, rng)?;
    let count = ps.iter().filter(|&&p| p <= alpha0).count() as f64;
    let scale = if privacy.epsilon().is_infinite() {
        0.0
    } else {
        1.0 / privacy.epsilon()
    };
    let noisy = count + laplace(rng, scale);
    let threshold = laplace_count_threshold(m, alpha0, scale, config.alpha);
    Ok(TestOutcome {
        reject: noisy > threshold,
        internals: Internals {
            p_value: None,
            m0: None,
            noise_scale: scale,
            noisy_count: Some(noisy),
        },
        level: LevelGuarantee::Conservative,
    })
}

/// Probability `e^eps / (1 + e^eps)` that randomized response keeps a bit.
pub fn keep_probability(epsilon: f64) -> f64 {
    if epsilon.is_infinite() {
        1.0
    } else {
        1.0 / (1.0 + libm::exp(-epsilon))
    }
}

/// Whether SAR with `m` subsets can reach 90% power against an alternative
/// where every sub-test rejects, at level `alpha`. Below this size SAR
/// never rejects.
pub fn sar_active(m: usize, alpha: f64, alpha0: f64, epsilon: f64) -> bool {
    let p = keep_probability(epsilon);
    let q0 = alpha0 * p + (1.0 - alpha0) * (1.0 - p);
    if p <= q0 {
        return false;
    }
    let z_level = normal_quantile(1.0 - alpha);
    let z_power = normal_quantile(0.9);
    let root = (z_level * libm::sqrt(q0 * (1.0 - q0)) + z_power * libm::sqrt(p * (1.0 - p))) / (p - q0);
    m as f64 >= root * root
}

/// Subsample-and-aggregate with randomized response: each sub-test bit
/// `1(p_i <= alpha_0)` is kept with probability `e^eps / (1 + e^eps)` and
/// flipped otherwise; rejects when the privatized count exceeds the
/// binomial critical value for success probability
/// `alpha_0 p + (1 - alpha_0)(1 - p)`. Accepts deterministically when `n` is
/// too small for the design to have power.
pub fn sar_dhsic_test<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let n = dataset.n();
    let (m, alpha0) = subsample_design(n, config.alpha);
    let keep = keep_probability(privacy.epsilon());
    let accept = TestOutcome {
        reject: false,
        internals: Internals {
            p_value: None,
            m0: None,
            noise_scale: 1.0 - keep,
            noisy_count: None,
        },
        level: LevelGuarantee::Conservative,
    };
    if n / m < 4 || !sar_active(m, config.alpha, alpha0, privacy.epsilon()) {
        return Ok(accept);
    }
    let ps = subset_p_values(dataset, specs, m, config.resamples, rng)?;
    let mut count = 0usize;
    for p in ps {
        let bit = p <= alpha0;
        let kept = uniform_open01(rng) < keep;
        if bit == kept {
            count += 1;
        }
    }
    let q0 = alpha0 * keep + (1.0 - alpha0) * (1.0 - keep);
    let critical = binomial_critical_value(m, q0, config.alpha);
    Ok(TestOutcome {
        reject: count > critical,
        internals: Internals {
            noisy_count: Some(count as f64),
            ..accept.internals
        },
        level: LevelGuarantee::Conservative,
    })
}
