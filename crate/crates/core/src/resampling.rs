//! Resampler generation and the generic differentially private resampling
//! test.
//!
//! Given a statistic `T` with sensitivity `Delta` and budget `xi`, the test
//! forms `M_i = T(X^{phi_i}) + (2 Delta / xi) zeta_i` for `i = 1..=B` and
//! `M_0` on the original data, and rejects when
//! `(1 + #{i : M_i >= M_0}) / (B + 1) <= alpha`.
//!
//! Permutation resamplers keep group 0 fixed and permute the others. Only
//! relative permutations between groups change a joint-independence
//! statistic, so this is equivalent in distribution to permuting every group.
//!
//! Random draws happen in a fixed order: `phi_1, zeta_1, ..., phi_B, zeta_B`
//! and last `zeta_0`.

use alloc::vec::Vec;

use rand::RngCore;

use crate::data::{
    Dataset, Internals, LevelGuarantee, PrivacyParams, Resampler, ResamplerKind, TestConfig, TestOutcome,
};
use crate::error::{input, Result};
use crate::privacy::{laplace, noise_scale, SensitivityBound};
use crate::rng::{index_below, shuffle};

/// Group 0 is the identity; groups `1..d` get independent uniform
/// permutations.
pub fn draw_permutation<R: RngCore + ?Sized>(n: usize, d: usize, rng: &mut R) -> Resampler {
    let maps = (0..d)
        .map(|j| {
            let mut m: Vec<usize> = (0..n).collect();
            if j > 0 {
                shuffle(rng, &mut m);
            }
            m
        })
        .collect();
    Resampler::new(ResamplerKind::Permutation, maps).expect("shuffles are bijections")
}

/// Every group gets `n` independent uniform draws with replacement.
pub fn draw_bootstrap<R: RngCore + ?Sized>(n: usize, d: usize, rng: &mut R) -> Resampler {
    let maps = (0..d).map(|_| (0..n).map(|_| index_below(rng, n)).collect()).collect();
    Resampler::new(ResamplerKind::Bootstrap, maps).expect("draws are in range")
}

fn draw<R: RngCore + ?Sized>(kind: ResamplerKind, n: usize, d: usize, rng: &mut R) -> Resampler {
    match kind {
        ResamplerKind::Permutation => draw_permutation(n, d, rng),
        ResamplerKind::Bootstrap => draw_bootstrap(n, d, rng),
        ResamplerKind::Identity => Resampler::identity(n, d),
    }
}

/// `X^phi`: row `i` of group `j` is row `phi^j(i)` of the original.
pub fn apply(dataset: &Dataset, resampler: &Resampler) -> Result<Dataset> {
    if resampler.d() != dataset.d() || resampler.n() != dataset.n() {
        return input("resampler shape does not match the dataset");
    }
    let groups = dataset
        .groups()
        .iter()
        .zip(resampler.maps())
        .map(|(g, m)| g.select_rows(m))
        .collect();
    Dataset::new(groups)
}

/// Every noised statistic of one run of the resampling test.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplingTrace {
    /// Noised statistic on the original data.
    pub m0: f64,
    /// Noised statistics `M_1..M_B` on the resampled data.
    pub ms: Vec<f64>,
    pub noise_scale: f64,
}

impl ResamplingTrace {
    pub fn p_value(&self) -> f64 {
        p_value(self.m0, &self.ms)
    }

    pub fn reject(&self, alpha: f64) -> bool {
        self.p_value() <= alpha
    }
}

/// `(1 + #{i : ms[i] >= m0}) / (B + 1)`.
pub fn p_value(m0: f64, ms: &[f64]) -> f64 {
    let count = ms.iter().filter(|&&m| m >= m0).count();
    (count + 1) as f64 / (ms.len() + 1) as f64
}

/// Runs the draws of the resampling test. `statistic(None)` is evaluated on
/// the original data, `statistic(Some(phi))` on `X^phi`.
pub fn resampling_trace<R, F>(
    n: usize,
    d: usize,
    kind: ResamplerKind,
    scale: f64,
    resamples: usize,
    rng: &mut R,
    mut statistic: F,
) -> Result<ResamplingTrace>
where
    R: RngCore + ?Sized,
    F: FnMut(Option<&Resampler>) -> Result<f64>,
{
    let t0 = statistic(None)?;
    let mut ms = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let phi = draw(kind, n, d, rng);
        let t = statistic(Some(&phi))?;
        ms.push(t + laplace(rng, scale));
    }
    let m0 = t0 + laplace(rng, scale);
    Ok(ResamplingTrace {
        m0,
        ms,
        noise_scale: scale,
    })
}

pub(crate) fn level_for(kind: ResamplerKind) -> LevelGuarantee {
    match kind {
        ResamplerKind::Bootstrap => LevelGuarantee::AsymptoticOnly,
        ResamplerKind::Permutation | ResamplerKind::Identity => LevelGuarantee::Exact,
    }
}

pub(crate) fn outcome(trace: &ResamplingTrace, alpha: f64, kind: ResamplerKind) -> TestOutcome {
    let p = trace.p_value();
    TestOutcome {
        reject: p <= alpha,
        internals: Internals {
            p_value: Some(p),
            m0: Some(trace.m0),
            noise_scale: trace.noise_scale,
            noisy_count: None,
        },
        level: level_for(kind),
    }
}

/// The differentially private resampling test with a statistic evaluated on
/// resampled datasets.
pub fn dp_resampling_test<R, F>(
    dataset: &Dataset,
    mut statistic: F,
    bound: &SensitivityBound,
    kind: ResamplerKind,
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome>
where
    R: RngCore + ?Sized,
    F: FnMut(&Dataset) -> Result<f64>,
{
    let trace = dp_resampling_trace(dataset, &mut statistic, bound, kind, privacy, config, rng)?;
    Ok(outcome(&trace, config.alpha, kind))
}

/// Like [`dp_resampling_test`] but returns every `M_i`.
pub fn dp_resampling_trace<R, F>(
    dataset: &Dataset,
    mut statistic: F,
    bound: &SensitivityBound,
    kind: ResamplerKind,
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<ResamplingTrace>
where
    R: RngCore + ?Sized,
    F: FnMut(&Dataset) -> Result<f64>,
{
    let scale = noise_scale(bound, privacy);
    resampling_trace(
        dataset.n(),
        dataset.d(),
        kind,
        scale,
        config.resamples,
        rng,
        |phi| match phi {
            None => statistic(dataset),
            Some(phi) => statistic(&apply(dataset, phi)?),
        },
    )
}

/// Largest count `t` of values at or above `m0` (including `m0` itself)
/// that still rejects, evaluated with the same floating-point comparison as
/// the p-value rule.
fn rejection_count(alpha: f64, total: usize) -> usize {
    let nf = total as f64;
    let mut t = libm::floor(alpha * nf).clamp(0.0, nf) as usize;
    while t < total && ((t + 1) as f64 / nf) <= alpha {
        t += 1;
    }
    while t > 0 && (t as f64 / nf) > alpha {
        t -= 1;
    }
    t
}

/// `1(m0 > q)` where `q` is the order statistic of rank
/// `ceil((1 - alpha)(B + 1))` (1-based) of `{m0} ∪ ms`.
///
/// Agrees exactly with `p_value(m0, ms) <= alpha` whenever no value in `ms`
/// equals `m0`.
pub fn quantile_indicator(m0: f64, ms: &[f64], alpha: f64) -> bool {
    let total = ms.len() + 1;
    let t = rejection_count(alpha, total);
    if t == 0 {
        return false;
    }
    if t == total {
        return true;
    }
    let rank = total - t;
    let mut all: Vec<f64> = Vec::with_capacity(total);
    all.push(m0);
    all.extend_from_slice(ms);
    let (_, q, _) = all.select_nth_unstable_by(rank - 1, f64::total_cmp);
    m0 > *q
}

/// `max(((B + 1) alpha - 1) / B, 0)`.
pub fn alpha_star(alpha: f64, resamples: usize) -> f64 {
    let b = resamples as f64;
    (((b + 1.0) * alpha - 1.0) / b).max(0.0)
}
