//! Empirical checks of the sensitivity bound and of the privacy loss of a
//! test's decision on neighbouring datasets.

use dpdhsic_core::dpdhsic::resampled_dhsic;
use dpdhsic_core::kernels::{grams, product_bound, GramMatrix};
use dpdhsic_core::privacy::{audit_epsilon, v_sensitivity, AuditReport};
use dpdhsic_core::resampling::draw_permutation;
use dpdhsic_core::rng::{index_below, standard_normal, stream_rng};
use dpdhsic_core::simgen::{adversarial_permutation_pair, gen_null_gaussian};
use dpdhsic_core::{Dataset, KernelSpec, PrivacyParams, TestConfig};

use crate::error::{AppError, AppResult};
use crate::methods::TestKind;

/// Atom separation of the audit pairs; Gaussian cross-kernel values at unit
/// bandwidth are `exp(-50)`.
pub const AUDIT_GAP: f64 = 10.0;

/// Largest observed change of `sqrt(V)` over random neighbours, next to
/// the bound it must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub observed_max: f64,
    pub bound: f64,
    pub pairs: usize,
    pub permutations: usize,
    /// Change on the two-group adversarial pair under its permutation.
    pub adversarial: Option<f64>,
}

impl SensitivityReport {
    pub fn violated(&self) -> bool {
        self.observed_max > self.bound || self.adversarial.is_some_and(|a| a > self.bound)
    }
}

fn sqrt_v_gap(x: &Dataset, x_prime: &Dataset, specs: &[KernelSpec], phi: &dpdhsic_core::Resampler) -> AppResult<f64> {
    let (g, h) = (grams(x, specs)?, grams(x_prime, specs)?);
    let gr: Vec<&GramMatrix> = g.iter().collect();
    let hr: Vec<&GramMatrix> = h.iter().collect();
    Ok((resampled_dhsic(&gr, Some(phi)) - resampled_dhsic(&hr, Some(phi))).abs())
}

/// Standard normal data with one row redrawn, compared under `permutations`
/// shared permutations per pair. Pair `p` uses stream `p` of `seed`.
pub fn sensitivity_audit(
    d: usize,
    n: usize,
    kernel: KernelSpec,
    pairs: usize,
    permutations: usize,
    seed: u64,
) -> AppResult<SensitivityReport> {
    if pairs == 0 || permutations == 0 {
        return Err(AppError::Usage(
            "the audit needs at least one pair and one permutation".into(),
        ));
    }
    let specs = vec![kernel; d];
    let bound = v_sensitivity(d, product_bound(&specs), n)?.delta_t();
    let mut observed_max = 0.0f64;
    for p in 0..pairs as u64 {
        let mut rng = stream_rng(seed, p);
        let x = gen_null_gaussian(n, d, &mut rng)?;
        let i = index_below(&mut rng, n);
        let fresh: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        let row: Vec<&[f64]> = fresh.iter().map(std::slice::from_ref).collect();
        let x_prime = x.with_row_replaced(i, &row)?;
        let (g, h) = (grams(&x, &specs)?, grams(&x_prime, &specs)?);
        let gr: Vec<&GramMatrix> = g.iter().collect();
        let hr: Vec<&GramMatrix> = h.iter().collect();
        for _ in 0..permutations {
            let phi = draw_permutation(n, d, &mut rng);
            let gap = (resampled_dhsic(&gr, Some(&phi)) - resampled_dhsic(&hr, Some(&phi))).abs();
            observed_max = observed_max.max(gap);
        }
    }
    let adversarial = if d == 2 && n >= 3 {
        let (x, x_prime, phi) = adversarial_permutation_pair(n, AUDIT_GAP)?;
        Some(sqrt_v_gap(&x, &x_prime, &specs, &phi)?)
    } else {
        None
    };
    Ok(SensitivityReport {
        observed_max,
        bound,
        pairs,
        permutations,
        adversarial,
    })
}

/// Neighbouring pair used to audit `test`'s decision.
///
/// The permutation-based tests use the adversarial construction of
/// [`adversarial_permutation_pair`]. The subsample-and-aggregate tests need
/// every subset to carry signal, so for them `x` alternates `(0, 0)` and
/// `(gap, gap)` rows and `x_prime` replaces row 0 by `(0, gap)`.
pub fn audit_pair(test: TestKind, n: usize) -> AppResult<(Dataset, Dataset)> {
    match test {
        TestKind::Sar | TestKind::Tot => {
            let col: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.0 } else { AUDIT_GAP }).collect();
            let x = Dataset::from_columns(&[col.clone(), col])?;
            let x_prime = x.with_row_replaced(0, &[&[0.0], &[AUDIT_GAP]])?;
            Ok((x, x_prime))
        }
        _ => {
            let (x, x_prime, _) = adversarial_permutation_pair(n, AUDIT_GAP)?;
            Ok((x, x_prime))
        }
    }
}

/// Monte Carlo estimate of the privacy loss of `test`'s decision on
/// [`audit_pair`], with unit-bandwidth Gaussian kernels.
pub fn epsilon_audit(
    test: TestKind,
    n: usize,
    privacy: &PrivacyParams,
    config: &TestConfig,
    draws: usize,
) -> AppResult<AuditReport> {
    if draws == 0 {
        return Err(AppError::Usage("--draws must be at least 1".into()));
    }
    let (x, x_prime) = audit_pair(test, n)?;
    let specs = vec![KernelSpec::gaussian(1.0)?; 2];
    let report = audit_epsilon(
        |data, rng| Ok(test.run(data, &specs, privacy, config, rng)?.reject),
        &x,
        &x_prime,
        draws,
        privacy.delta(),
        config.seed,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_neighbours_respect_the_bound() {
        let r = sensitivity_audit(2, 15, KernelSpec::gaussian(1.0).unwrap(), 20, 5, 1).unwrap();
        assert!(!r.violated());
        assert!(r.observed_max > 0.0);
        let adv = r.adversarial.unwrap();
        assert!(adv > r.observed_max && adv <= r.bound);
    }

    #[test]
    fn pairs_are_neighbours() {
        for t in [TestKind::Dpdhsic, TestKind::Sar] {
            let (x, y) = audit_pair(t, 21).unwrap();
            let differing = (0..21)
                .filter(|&i| x.group(0).row(i) != y.group(0).row(i) || x.group(1).row(i) != y.group(1).row(i))
                .count();
            assert_eq!(differing, 1);
        }
    }
}
