//! Serializable descriptions of the synthetic data generators.

use dpdhsic_core::simgen::{
    gen_null_gaussian, gen_product_dependence, gen_sem_dag, gen_toeplitz, group_random, EdgeFn, StructuralModel,
};
use dpdhsic_core::Dataset;
use rand::RngCore;
use serde::{Deserialize, Serialize};

fn default_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `N(0, I_d)`, one scalar group per variable.
    NullGaussian { n: usize, d: usize },
    /// `X^3 = X^1 X^2 + e`, `e ~ N(0, sigma^2)`.
    ProductDependence { n: usize, sigma: f64 },
    /// `N(0, Sigma)` with `Sigma_ij = rho^|i-j|`; with `groups` set, the
    /// `d` columns are randomly partitioned into that many groups.
    Toeplitz {
        n: usize,
        d: usize,
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        groups: Option<usize>,
    },
    /// Chain `0 -> 1 -> ... -> d-1` whose edge functions cycle through
    /// `x`, `2 tanh(x)`, `-x`, with noise standard deviation `sigma` at
    /// every node.
    SemChain {
        n: usize,
        d: usize,
        #[serde(default = "default_sd")]
        sigma: f64,
    },
}

/// Edge functions of [`GeneratorSpec::SemChain`] for `d` nodes.
pub fn sem_chain_edges(d: usize) -> Vec<EdgeFn> {
    let cycle = [EdgeFn::Linear(1.0), EdgeFn::Tanh(2.0), EdgeFn::Linear(-1.0)];
    (0..d.saturating_sub(1)).map(|j| cycle[j % 3]).collect()
}

impl GeneratorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorSpec::NullGaussian { .. } => "null-gaussian",
            GeneratorSpec::ProductDependence { .. } => "product-dependence",
            GeneratorSpec::Toeplitz { .. } => "toeplitz",
            GeneratorSpec::SemChain { .. } => "sem-chain",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            GeneratorSpec::NullGaussian { n, .. }
            | GeneratorSpec::ProductDependence { n, .. }
            | GeneratorSpec::Toeplitz { n, .. }
            | GeneratorSpec::SemChain { n, .. } => n,
        }
    }

    /// Number of variable groups in the generated dataset.
    pub fn d(&self) -> usize {
        match *self {
            GeneratorSpec::NullGaussian { d, .. } | GeneratorSpec::SemChain { d, .. } => d,
            GeneratorSpec::ProductDependence { .. } => 3,
            GeneratorSpec::Toeplitz { d, groups, .. } => groups.unwrap_or(d),
        }
    }

    /// Checks parameter ranges; the message names the offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let n = self.n();
        if n < 2 {
            return Err(("n", format!("n must be at least 2, got {n}")));
        }
        match *self {
            GeneratorSpec::NullGaussian { d, .. } | GeneratorSpec::SemChain { d, .. } if d < 2 => {
                Err(("d", format!("d must be at least 2, got {d}")))
            }
            GeneratorSpec::ProductDependence { sigma, .. } | GeneratorSpec::SemChain { sigma, .. }
                if !(sigma >= 0.0 && sigma.is_finite()) =>
            {
                Err(("sigma", format!("sigma must be a non-negative number, got {sigma}")))
            }
            GeneratorSpec::Toeplitz { d, rho, groups, .. } => {
                if d < 2 {
                    Err(("d", format!("d must be at least 2, got {d}")))
                } else if rho.is_nan() || rho.abs() >= 1.0 {
                    Err(("rho", format!("rho must satisfy |rho| < 1, got {rho}")))
                } else if groups.is_some_and(|k| k < 2 || k > d) {
                    Err(("groups", format!("groups must lie in 2..={d}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn generate<R: RngCore + ?Sized>(&self, rng: &mut R) -> dpdhsic_core::Result<Dataset> {
        match *self {
            GeneratorSpec::NullGaussian { n, d } => gen_null_gaussian(n, d, rng),
            GeneratorSpec::ProductDependence { n, sigma } => gen_product_dependence(n, sigma, rng),
            GeneratorSpec::Toeplitz { n, d, rho, groups } => {
                let data = gen_toeplitz(n, d, rho, rng)?;
                match groups {
                    Some(k) => group_random(&data, k, rng),
                    None => Ok(data),
                }
            }
            GeneratorSpec::SemChain { n, d, sigma } => {
                let model = StructuralModel::chain(&sem_chain_edges(d), vec![sigma; d])?;
                gen_sem_dag(n, &model, rng)
            }
        }
    }
}
