//! The private dHSIC tests: permutation `sqrt(V)` (the main procedure), a
//! permutation U-statistic variant, and a bootstrap `sqrt(V)` variant.
//!
//! Gram matrices are computed once per call. Each resampled statistic reads
//! them through the resampler's index maps, which yields results bitwise
//! identical to rebuilding the Gram matrices from `X^phi`.

use alloc::vec::Vec;

use rand::RngCore;

use crate::data::{Dataset, PrivacyParams, Resampler, ResamplerKind, TestConfig, TestOutcome};
use crate::dhsic::{resampler_maps, u_stat_core, v_stat_core};
use crate::error::{input, Result};
use crate::kernels::{grams, product_bound, GramMatrix, KernelSpec};
use crate::privacy::{bootstrap_sensitivity, noise_scale, u_sensitivity, v_sensitivity, SensitivityBound};
use crate::resampling::{outcome, resampling_trace, ResamplingTrace};

/// `sqrt(max(V, 0))` of `X^phi` (or of the original data for `None`).
pub fn resampled_dhsic(grams: &[&GramMatrix], phi: Option<&Resampler>) -> f64 {
    let maps = match phi {
        Some(r) => resampler_maps(r),
        None => alloc::vec![None; grams.len()],
    };
    libm::sqrt(v_stat_core(grams, &maps).max(0.0))
}

fn resampled_u(grams: &[&GramMatrix], phi: Option<&Resampler>) -> Result<f64> {
    let maps = match phi {
        Some(r) => resampler_maps(r),
        None => alloc::vec![None; grams.len()],
    };
    u_stat_core(grams, &maps)
}

fn prepare(dataset: &Dataset, specs: &[KernelSpec]) -> Result<Vec<GramMatrix>> {
    if dataset.n() < 2 {
        return input("need at least two observations");
    }
    grams(dataset, specs)
}

/// Trace of the permutation `sqrt(V)` test for precomputed Gram matrices.
pub fn dhsic_trace_from_grams<R: RngCore + ?Sized>(
    grams: &[&GramMatrix],
    kind: ResamplerKind,
    bound: &SensitivityBound,
    privacy: &PrivacyParams,
    resamples: usize,
    rng: &mut R,
) -> Result<ResamplingTrace> {
    let n = grams.first().map_or(0, |g| g.n());
    resampling_trace(
        n,
        grams.len(),
        kind,
        noise_scale(bound, privacy),
        resamples,
        rng,
        |phi| Ok(resampled_dhsic(grams, phi)),
    )
}

/// Every noised statistic of one run of [`dpdhsic_test`].
pub fn dpdhsic_trace<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<ResamplingTrace> {
    let g = prepare(dataset, specs)?;
    let refs: Vec<&GramMatrix> = g.iter().collect();
    let bound = v_sensitivity(dataset.d(), product_bound(specs), dataset.n())?;
    dhsic_trace_from_grams(
        &refs,
        ResamplerKind::Permutation,
        &bound,
        privacy,
        config.resamples,
        rng,
    )
}

/// Permutation dHSIC test on `sqrt(V)` with Laplace-noised statistics;
/// `(epsilon, delta)`-differentially private in its decision.
pub fn dpdhsic_test<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let trace = dpdhsic_trace(dataset, specs, privacy, config, rng)?;
    Ok(outcome(&trace, config.alpha, ResamplerKind::Permutation))
}

/// Permutation test on the U-statistic with sensitivity
/// `(4 d^2 + 4 d) K0 / n`. Limited to sizes the exact enumeration supports.
pub fn dpdhsic_u_test<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let g = prepare(dataset, specs)?;
    let refs: Vec<&GramMatrix> = g.iter().collect();
    let bound = u_sensitivity(dataset.d(), product_bound(specs), dataset.n())?;
    let trace = resampling_trace(
        dataset.n(),
        dataset.d(),
        ResamplerKind::Permutation,
        noise_scale(&bound, privacy),
        config.resamples,
        rng,
        |phi| resampled_u(&refs, phi),
    )?;
    Ok(outcome(&trace, config.alpha, ResamplerKind::Permutation))
}

/// Bootstrap `sqrt(V)` test calibrated with the range bound `sqrt(2 K0)`.
/// Private, but its level is only asymptotic and it loses power under
/// strong privacy however large `n` gets.
pub fn dp_bootstrap_dhsic_test<R: RngCore + ?Sized>(
    dataset: &Dataset,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let g = prepare(dataset, specs)?;
    let refs: Vec<&GramMatrix> = g.iter().collect();
    let bound = bootstrap_sensitivity(product_bound(specs))?;
    let trace = dhsic_trace_from_grams(&refs, ResamplerKind::Bootstrap, &bound, privacy, config.resamples, rng)?;
    Ok(outcome(&trace, config.alpha, ResamplerKind::Bootstrap))
}

/// Non-private permutation p-value `(1 + #{T_i >= T_0}) / (B + 1)` of
/// `sqrt(V)`.
pub fn permutation_p_value<R: RngCore + ?Sized>(grams: &[&GramMatrix], resamples: usize, rng: &mut R) -> Result<f64> {
    let bound = SensitivityBound::custom(1.0)?;
    let trace = dhsic_trace_from_grams(
        grams,
        ResamplerKind::Permutation,
        &bound,
        &PrivacyParams::non_private(),
        resamples,
        rng,
    )?;
    Ok(trace.p_value())
}
