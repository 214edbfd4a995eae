//! Sensitivity bounds, the Laplace mechanism, budget composition and an
//! empirical privacy-loss auditor for binary mechanisms.
//!
//! Laplace noise is drawn by inverse CDF from a floating-point uniform. That
//! is adequate for a research tool but is not hardened against the
//! floating-point attacks that matter for production DP deployments.

use alloc::format;

use rand::RngCore;

use crate::data::{Dataset, PrivacyParams};
use crate::error::{input, Error, Result};
use crate::math::{normal_quantile, wilson_interval};
use crate::rng::{stream_rng, uniform_open01};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticKind {
    /// `sqrt(V)` under permutation resampling.
    VSqrt,
    /// The unbiased U-statistic under permutation resampling.
    U,
    /// `sqrt(V)` under bootstrap resampling.
    BootstrapVSqrt,
    /// Any other statistic with a caller-supplied bound.
    Custom,
}

/// A bound on how much a statistic moves, uniformly over resamplings, when
/// one observation is replaced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityBound {
    delta_t: f64,
    kind: StatisticKind,
    /// Human-readable formula the value came from.
    formula: &'static str,
}

impl SensitivityBound {
    pub fn new(delta_t: f64, kind: StatisticKind, formula: &'static str) -> Result<Self> {
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return input(format!("sensitivity must be positive and finite, got {delta_t}"));
        }
        Ok(Self { delta_t, kind, formula })
    }

    pub fn custom(delta_t: f64) -> Result<Self> {
        Self::new(delta_t, StatisticKind::Custom, "caller supplied")
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    pub fn formula(&self) -> &'static str {
        self.formula
    }
}

fn check_k0(k0: f64) -> Result<()> {
    if k0 > 0.0 && k0.is_finite() {
        Ok(())
    } else {
        input(format!("kernel bound product must be positive, got {k0}"))
    }
}

/// `2 d sqrt(K0) / n` for `sqrt(V)` under permutations.
pub fn v_sensitivity(d: usize, k0: f64, n: usize) -> Result<SensitivityBound> {
    check_k0(k0)?;
    if d < 2 || n == 0 {
        return input("need d >= 2 and n >= 1");
    }
    SensitivityBound::new(
        2.0 * d as f64 * libm::sqrt(k0) / n as f64,
        StatisticKind::VSqrt,
        "2 d sqrt(K0) / n",
    )
}

/// `(4 d^2 + 4 d) K0 / n` for the U-statistic, the worst case of the
/// unknown constant `c_n in [2, 4 d^2 + 4 d]`.
pub fn u_sensitivity(d: usize, k0: f64, n: usize) -> Result<SensitivityBound> {
    check_k0(k0)?;
    if d < 2 {
        return input("need d >= 2");
    }
    if n < 2 * d {
        return input(format!("U-statistic sensitivity needs n >= 2d = {}", 2 * d));
    }
    let df = d as f64;
    SensitivityBound::new(
        (4.0 * df * df + 4.0 * df) * k0 / n as f64,
        StatisticKind::U,
        "(4 d^2 + 4 d) K0 / n",
    )
}

/// `sqrt(2 K0)`: the range of `sqrt(V)`, used because bootstrap resampling
/// admits no bound that shrinks with `n`.
pub fn bootstrap_sensitivity(k0: f64) -> Result<SensitivityBound> {
    check_k0(k0)?;
    SensitivityBound::new(libm::sqrt(2.0 * k0), StatisticKind::BootstrapVSqrt, "sqrt(2 K0)")
}

/// One `Laplace(0, scale)` draw. A uniform is always consumed, so the
/// stream position does not depend on the scale; scale 0 returns exactly 0.
pub fn laplace<R: RngCore + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u = uniform_open01(rng) - 0.5;
    if scale == 0.0 {
        return 0.0;
    }
    let mag = -scale * libm::log1p(-2.0 * libm::fabs(u));
    if u < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Laplace scale `2 Delta / xi` applied to each resampled statistic; zero in
/// the non-private limit.
pub fn noise_scale(bound: &SensitivityBound, privacy: &PrivacyParams) -> f64 {
    if privacy.xi().is_infinite() {
        0.0
    } else {
        2.0 * bound.delta_t / privacy.xi()
    }
}

/// Basic composition: `(sum eps_i, sum delta_i)`.
pub fn compose(budgets: &[(f64, f64)]) -> Result<PrivacyParams> {
    if budgets.is_empty() {
        return input("cannot compose an empty list of budgets");
    }
    let mut eps = 0.0;
    let mut delta = 0.0;
    for &(e, d) in budgets {
        if !(e > 0.0) {
            return input(format!("each epsilon must be positive, got {e}"));
        }
        if !(0.0..1.0).contains(&d) {
            return input(format!("each delta must lie in [0, 1), got {d}"));
        }
        eps += e;
        delta += d;
    }
    if delta >= 1.0 {
        return Err(Error::DeltaOverflow(delta));
    }
    PrivacyParams::new(eps, delta)
}

/// Even split of a budget over `k` mechanisms, so that composing the parts
/// gives back the original.
pub fn split_budget(privacy: &PrivacyParams, k: usize) -> Result<PrivacyParams> {
    if k == 0 {
        return input("cannot split a budget into zero parts");
    }
    let kf = k as f64;
    PrivacyParams::new(privacy.epsilon() / kf, privacy.delta() / kf)
}

/// Acceptance counts of a binary mechanism run on two neighbouring inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuditCounts {
    pub rejects_x: usize,
    pub rejects_x_prime: usize,
    pub draws: usize,
}

/// Empirical privacy loss of a binary mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    /// Point estimate of the largest log-ratio over outputs and orderings,
    /// floored at 0.
    pub estimate: f64,
    /// Conservative lower confidence bound, floored at 0.
    pub lower: f64,
    /// Conservative upper confidence bound; infinite when a cell is empty.
    pub upper: f64,
    /// A zero-frequency cell made the upper bound infinite.
    pub unbounded: bool,
    pub counts: AuditCounts,
}

fn log_ratio(num: f64, den: f64) -> Option<f64> {
    if num <= 0.0 {
        None
    } else if den <= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(libm::log(num / den))
    }
}

/// Turns counts into an estimate with Wilson bounds at two-sided confidence
/// `confidence` per cell.
pub fn audit_from_counts(counts: AuditCounts, delta: f64, confidence: f64) -> Result<AuditReport> {
    if counts.draws == 0 {
        return input("audit needs at least one draw");
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return input("confidence must lie in (0, 1)");
    }
    let z = normal_quantile(1.0 - (1.0 - confidence) / 2.0);
    let n = counts.draws;
    let cells = |rejects: usize| {
        let (lo, hi) = wilson_interval(rejects, n, z);
        let accepts = n - rejects;
        let (alo, ahi) = wilson_interval(accepts, n, z);
        [
            (rejects as f64 / n as f64, lo, hi),
            (accepts as f64 / n as f64, alo, ahi),
        ]
    };
    let a = cells(counts.rejects_x);
    let b = cells(counts.rejects_x_prime);

    let (mut estimate, mut lower, mut upper) = (0.0f64, 0.0f64, 0.0f64);
    let mut unbounded = false;
    for s in 0..2 {
        for (p, q) in [(a[s], b[s]), (b[s], a[s])] {
            // point estimate: identical empty cells carry no evidence
            if !(p.0 == 0.0 && q.0 == 0.0) {
                if let Some(r) = log_ratio(p.0 - delta, q.0) {
                    estimate = estimate.max(r);
                }
            }
            if let Some(r) = log_ratio(p.1 - delta, q.2) {
                lower = lower.max(r);
            }
            if let Some(r) = log_ratio(p.2 - delta, q.1) {
                if r.is_infinite() {
                    unbounded = true;
                }
                upper = upper.max(r);
            }
        }
    }
    Ok(AuditReport {
        estimate,
        lower,
        upper,
        unbounded,
        counts,
    })
}

/// Runs `mechanism` `draws` times on each of `x` and `x_prime`, draw `i`
/// using streams `2 i` and `2 i + 1` of `seed`, and audits the outputs.
pub fn audit_epsilon<F>(
    mut mechanism: F,
    x: &Dataset,
    x_prime: &Dataset,
    draws: usize,
    delta: f64,
    seed: u64,
) -> Result<AuditReport>
where
    F: FnMut(&Dataset, &mut dyn RngCore) -> Result<bool>,
{
    if draws == 0 {
        return input("audit needs at least one draw");
    }
    let mut counts = AuditCounts {
        draws,
        ..AuditCounts::default()
    };
    for i in 0..draws as u64 {
        if mechanism(x, &mut stream_rng(seed, 2 * i))? {
            counts.rejects_x += 1;
        }
        if mechanism(x_prime, &mut stream_rng(seed, 2 * i + 1))? {
            counts.rejects_x_prime += 1;
        }
    }
    audit_from_counts(counts, delta, 0.95)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Block;
    use alloc::vec;
    use alloc::vec::Vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn sensitivity_examples() {
        assert!(close(v_sensitivity(3, 1.0, 300).unwrap().delta_t(), 0.02));
        assert!(close(v_sensitivity(2, 1.0, 100).unwrap().delta_t(), 0.04));
        assert!(close(v_sensitivity(2, 4.0, 100).unwrap().delta_t(), 0.08));
        assert!(close(u_sensitivity(2, 1.0, 100).unwrap().delta_t(), 0.24));
        assert!((u_sensitivity(3, 1.0, 60).unwrap().delta_t() - 0.8).abs() < 1e-15);
        assert!(u_sensitivity(3, 1.0, 5).is_err());
        assert!(close(
            bootstrap_sensitivity(1.0).unwrap().delta_t(),
            core::f64::consts::SQRT_2
        ));
        assert!(close(
            bootstrap_sensitivity(4.0).unwrap().delta_t(),
            2.0 * core::f64::consts::SQRT_2
        ));
        for k0 in [0.01, 1.0, 7.0, 1e4] {
            let b = bootstrap_sensitivity(k0).unwrap().delta_t();
            assert!(3.0 * libm::sqrt(k0) / 8.0 <= b);
        }
    }

    #[test]
    fn noise_scale_examples() {
        let b = SensitivityBound::custom(0.02).unwrap();
        assert!(close(noise_scale(&b, &PrivacyParams::pure(1.0).unwrap()), 0.04));
        let half = PrivacyParams::new(0.0, 0.5).unwrap();
        assert!(close(noise_scale(&b, &half), 0.04 / core::f64::consts::LN_2));
        assert_eq!(noise_scale(&b, &PrivacyParams::non_private()), 0.0);
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.5, 1.0, 4.0] {
            let s = noise_scale(&b, &PrivacyParams::pure(eps).unwrap());
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn composition() {
        let p = compose(&[(0.5, 0.0), (0.5, 0.0)]).unwrap();
        assert_eq!((p.epsilon(), p.delta()), (1.0, 0.0));
        let whole = PrivacyParams::new(1.3, 0.01).unwrap();
        let part = split_budget(&whole, 3).unwrap();
        let back = compose(&[(part.epsilon(), part.delta()); 3]).unwrap();
        assert!((back.epsilon() - 1.3).abs() < 1e-12);
        assert!((back.delta() - 0.01).abs() < 1e-15);
        assert!(compose(&[]).is_err());
        assert!(matches!(
            compose(&[(1.0, 0.6), (1.0, 0.6)]),
            Err(Error::DeltaOverflow(_))
        ));
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream_rng(11, 0);
        assert_eq!(laplace(&mut rng, 0.0), 0.0);
        let draws: Vec<f64> = (0..1_000_000).map(|_| laplace(&mut rng, 1.0)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / draws.len() as f64;
        assert!((var - 2.0).abs() < 0.02, "{var}");
        let mut sorted = draws;
        let med = crate::math::median_in_place(&mut sorted);
        assert!(med.abs() < 0.01, "{med}");
    }

    fn dummy(v: f64) -> Dataset {
        Dataset::new(vec![
            Block::from_column(&[v]).unwrap(),
            Block::from_column(&[v]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn constant_mechanism_has_zero_loss() {
        let r = audit_epsilon(|_, _| Ok(false), &dummy(0.0), &dummy(1.0), 10_000, 0.0, 1).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.unbounded && r.upper.is_infinite());
    }

    #[test]
    fn thresholded_laplace_release() {
        // f(x) = 0, f(x') = 1 with sensitivity 1: P(accept | x) / P(accept | x') = e^eps
        let eps = 1.0;
        let r = audit_epsilon(
            |data, rng| Ok(data.group(0).row(0)[0] + laplace(rng, 1.0 / eps) > 0.0),
            &dummy(0.0),
            &dummy(1.0),
            100_000,
            0.0,
            5,
        )
        .unwrap();
        assert!(r.lower <= eps && eps <= r.upper, "{r:?}");
        assert!(r.estimate >= 0.8 * eps && r.estimate <= eps + 0.03, "{r:?}");
        assert!(!r.unbounded);
    }
}
