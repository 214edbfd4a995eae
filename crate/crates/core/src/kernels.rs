//! Bounded kernels, Gram matrices and the median bandwidth heuristic.
//!
//! Gaussian and Laplacian kernels are used in their non-normalized form, so
//! their supremum (and diagonal) is exactly 1.
//!
//! The median heuristic looks at the raw data. Feeding its bandwidth into a
//! private test spends privacy that no budget here accounts for.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{Block, Dataset};
use crate::error::{input, Error, Result};
use crate::math::median_in_place;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `exp(-|x - y|_2^2 / (2 nu^2))`
    Gaussian { bandwidth: f64 },
    /// `exp(-|x - y|_1 / nu)`
    Laplacian { bandwidth: f64 },
    /// `<x, y>` on a caller-declared domain where it stays in `[0, bound]`.
    Linear,
}

/// A kernel together with a true upper bound `K` on its declared domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    bound: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            kind: KernelKind::Gaussian { bandwidth },
            bound: 1.0,
        })
    }

    pub fn laplacian(bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            kind: KernelKind::Laplacian { bandwidth },
            bound: 1.0,
        })
    }

    /// Linear kernel; `bound` must dominate `<x, y>` over the data domain,
    /// e.g. `4 p` for SNP coordinates in `{0, 1, 2}`.
    pub fn linear(bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return input(format!("linear kernel bound must be positive, got {bound}"));
        }
        Ok(Self {
            kind: KernelKind::Linear,
            bound,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian { bandwidth } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::exp(-sq / (2.0 * bandwidth * bandwidth))
            }
            KernelKind::Laplacian { bandwidth } => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| libm::fabs(a - b)).sum();
                libm::exp(-l1 / bandwidth)
            }
            KernelKind::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        input(format!("bandwidth must be positive and finite, got {bandwidth}"))
    }
}

/// Symmetric `n x n` kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
    bound: f64,
}

impl GramMatrix {
    /// Wraps precomputed values; checks symmetry and the `[0, bound]` range.
    pub fn from_values(n: usize, values: Vec<f64>, bound: f64) -> Result<Self> {
        if values.len() != n * n {
            return input("gram matrix values do not match n x n");
        }
        for i in 0..n {
            for l in 0..n {
                let v = values[i * n + l];
                if v != values[l * n + i] {
                    return input("gram matrix is not symmetric");
                }
                if !(0.0..=bound + 1e-12).contains(&v) {
                    return input(format!("gram entry {v} outside [0, {bound}]"));
                }
            }
        }
        Ok(Self { n, values, bound })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.n + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entrywise product: the Gram matrix of the tensor-product kernel.
    pub fn hadamard(&self, other: &GramMatrix) -> Result<GramMatrix> {
        if self.n != other.n {
            return Err(Error::Input(format!("gram sizes differ: {} vs {}", self.n, other.n)));
        }
        Ok(GramMatrix {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            bound: self.bound * other.bound,
        })
    }

    /// Gram matrix of rows `rows`.
    pub fn submatrix(&self, rows: &[usize]) -> GramMatrix {
        let m = rows.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in rows {
            let r = self.row(i);
            values.extend(rows.iter().map(|&l| r[l]));
        }
        GramMatrix {
            n: m,
            values,
            bound: self.bound,
        }
    }
}

/// Gram matrix of `block` under `spec`. Each pair is evaluated once and
/// mirrored, so the result is bitwise symmetric.
pub fn gram(block: &Block, spec: &KernelSpec) -> Result<GramMatrix> {
    let n = block.n();
    let mut values = alloc::vec![0.0; n * n];
    for i in 0..n {
        let xi = block.row(i);
        values[i * n + i] = spec.eval(xi, xi);
        for l in (i + 1)..n {
            let v = spec.eval(xi, block.row(l));
            values[i * n + l] = v;
            values[l * n + i] = v;
        }
    }
    if matches!(spec.kind, KernelKind::Linear) {
        if let Some(v) = values.iter().find(|&&v| !(0.0..=spec.bound).contains(&v)) {
            return input(format!(
                "linear kernel value {v} outside the declared range [0, {}]",
                spec.bound
            ));
        }
    }
    Ok(GramMatrix {
        n,
        values,
        bound: spec.bound,
    })
}

pub fn grams(dataset: &Dataset, specs: &[KernelSpec]) -> Result<Vec<GramMatrix>> {
    if specs.len() != dataset.d() {
        return input(format!("{} kernel specs for {} groups", specs.len(), dataset.d()));
    }
    dataset.groups().iter().zip(specs).map(|(b, s)| gram(b, s)).collect()
}

/// Bandwidth `nu` with `median{|x_i - x_l|^2 : i < l} = 2 nu^2`.
pub fn median_heuristic(block: &Block) -> Result<f64> {
    let n = block.n();
    if n < 2 {
        return input("median heuristic needs at least two rows");
    }
    let mut sq = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = block.row(i);
        for l in (i + 1)..n {
            sq.push(xi.iter().zip(block.row(l)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    let med = median_in_place(&mut sq);
    if med <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(libm::sqrt(med / 2.0))
}

/// Gaussian kernels with median-heuristic bandwidths, one per group.
pub fn median_gaussian_specs(dataset: &Dataset) -> Result<Vec<KernelSpec>> {
    dataset
        .groups()
        .iter()
        .map(|b| KernelSpec::gaussian(median_heuristic(b)?))
        .collect()
}

/// `K_0`, the product of the per-group kernel bounds.
pub fn product_bound(specs: &[KernelSpec]) -> f64 {
    specs.iter().map(KernelSpec::bound).product()
}
