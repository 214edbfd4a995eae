//! Domain types shared by every test procedure.
//!
//! Row and group indices are 0-based throughout.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{input, Result};

/// An `n x p` block of observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Block {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return input("a group must have at least one coordinate");
        }
        if values.len() != n * p {
            return input(format!(
                "block of {n} x {p} needs {} values, got {}",
                n * p,
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return input(format!("non-finite entry at row {}, coordinate {}", pos / p, pos % p));
        }
        Ok(Self { n, p, values })
    }

    /// A single-coordinate block.
    pub fn from_column(column: &[f64]) -> Result<Self> {
        Self::new(column.len(), 1, column.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return input("rows of a block must all have the same length");
        }
        Self::new(rows.len(), p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column `k` copied out.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.p + k]).collect()
    }

    /// New block whose row `i` is row `rows[i]` of `self`.
    pub fn select_rows(&self, rows: &[usize]) -> Block {
        let mut values = Vec::with_capacity(rows.len() * self.p);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Block {
            n: rows.len(),
            p: self.p,
            values,
        }
    }
}

/// `n` joint observations split into `d >= 2` variable groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    groups: Vec<Block>,
}

impl Dataset {
    pub fn new(groups: Vec<Block>) -> Result<Self> {
        if groups.len() < 2 {
            return input(format!("need at least 2 groups, got {}", groups.len()));
        }
        let n = groups[0].n();
        if let Some(j) = groups.iter().position(|g| g.n() != n) {
            return input(format!("group {j} has {} rows but group 0 has {n}", groups[j].n()));
        }
        Ok(Self { groups })
    }

    /// One scalar group per column.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let groups = columns
            .iter()
            .map(|c| Block::from_column(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }

    pub fn n(&self) -> usize {
        self.groups[0].n()
    }

    pub fn d(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Block] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &Block {
        &self.groups[j]
    }

    /// Coordinates per group, `(p_1, ..., p_d)`.
    pub fn dims(&self) -> Vec<usize> {
        self.groups.iter().map(Block::p).collect()
    }

    /// Joint rows `rows` of every group.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            groups: self.groups.iter().map(|g| g.select_rows(rows)).collect(),
        }
    }

    /// Copy of the dataset with observation `i` replaced, one slice per group.
    pub fn with_row_replaced(&self, i: usize, row: &[&[f64]]) -> Result<Dataset> {
        if i >= self.n() || row.len() != self.d() {
            return input("replacement row does not match the dataset shape");
        }
        let mut groups = self.groups.clone();
        for (g, new) in groups.iter_mut().zip(row) {
            if new.len() != g.p {
                return input("replacement row has the wrong group dimension");
            }
            if new.iter().any(|v| !v.is_finite()) {
                return input("replacement row contains a non-finite value");
            }
            g.values[i * g.p..(i + 1) * g.p].copy_from_slice(new);
        }
        Ok(Dataset { groups })
    }

    /// Flattened scalar columns, group by group.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .flat_map(|g| (0..g.p()).map(move |k| g.column(k)))
            .collect()
    }
}

/// Privacy budget `(epsilon, delta)` with its effective noise denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    xi: f64,
}

impl PrivacyParams {
    /// `epsilon` may be `+inf` (no privacy); `delta` must lie in `[0, 1)`.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return input(format!("epsilon must be non-negative, got {epsilon}"));
        }
        if !(0.0..1.0).contains(&delta) {
            return input(format!("delta must lie in [0, 1), got {delta}"));
        }
        let xi = epsilon - libm::log1p(-delta);
        if xi <= 0.0 {
            return input("epsilon + log(1/(1-delta)) must be positive");
        }
        Ok(Self { epsilon, delta, xi })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    /// The non-private limit, `xi = inf`.
    pub fn non_private() -> Self {
        Self {
            epsilon: f64::INFINITY,
            delta: 0.0,
            xi: f64::INFINITY,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `epsilon + log(1 / (1 - delta))`.
    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// Level, number of resamples, and the seed recorded for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl TestConfig {
    pub fn new(alpha: f64, resamples: usize, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return input(format!("alpha must lie in (0, 1), got {alpha}"));
        }
        if resamples == 0 {
            return input("the number of resamples B must be at least 1");
        }
        Ok(Self { alpha, resamples, seed })
    }

    /// With `B <= 1/alpha - 1` the smallest attainable p-value exceeds alpha
    /// and the test can never reject.
    pub fn power_warning(&self) -> Option<&'static str> {
        if ((self.resamples + 1) as f64) * self.alpha < 1.0 {
            Some("B + 1 < 1/alpha: the test can never reject")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResamplerKind {
    Permutation,
    Bootstrap,
    Identity,
}

/// `d` index maps `[n] -> [n]`; group `j` row `i` of the resampled data is
/// row `maps[j][i]` of the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resampler {
    kind: ResamplerKind,
    maps: Vec<Vec<usize>>,
}

impl Resampler {
    pub fn new(kind: ResamplerKind, maps: Vec<Vec<usize>>) -> Result<Self> {
        let n = maps.first().map_or(0, Vec::len);
        if maps.iter().any(|m| m.len() != n) {
            return input("all index maps must have the same length");
        }
        if maps.iter().flatten().any(|&i| i >= n) {
            return input("index map entry out of range");
        }
        match kind {
            ResamplerKind::Permutation => {
                for m in &maps {
                    let mut seen = alloc::vec![false; n];
                    for &i in m {
                        if core::mem::replace(&mut seen[i], true) {
                            return input("permutation map is not a bijection");
                        }
                    }
                }
            }
            ResamplerKind::Identity => {
                if maps.iter().any(|m| m.iter().enumerate().any(|(i, &v)| i != v)) {
                    return input("identity resampler with a non-identity map");
                }
            }
            ResamplerKind::Bootstrap => {}
        }
        Ok(Self { kind, maps })
    }

    pub fn identity(n: usize, d: usize) -> Self {
        Self {
            kind: ResamplerKind::Identity,
            maps: (0..d).map(|_| (0..n).collect()).collect(),
        }
    }

    pub fn kind(&self) -> ResamplerKind {
        self.kind
    }

    pub fn maps(&self) -> &[Vec<usize>] {
        &self.maps
    }

    pub fn map(&self, j: usize) -> &[usize] {
        &self.maps[j]
    }

    pub fn n(&self) -> usize {
        self.maps.first().map_or(0, Vec::len)
    }

    pub fn d(&self) -> usize {
        self.maps.len()
    }

    /// Inverse permutation maps; `None` unless every map is a bijection.
    pub fn inverse(&self) -> Option<Resampler> {
        if self.kind == ResamplerKind::Bootstrap {
            return None;
        }
        let maps = self
            .maps
            .iter()
            .map(|m| {
                let mut inv = alloc::vec![0; m.len()];
                for (i, &v) in m.iter().enumerate() {
                    inv[v] = i;
                }
                inv
            })
            .collect();
        Some(Resampler { kind: self.kind, maps })
    }
}

/// What a test's level guarantee rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelGuarantee {
    /// Exact finite-sample level from exchangeability.
    Exact,
    /// Valid only as `n` grows (bootstrap).
    AsymptoticOnly,
    /// Level holds by Bonferroni / DP post-processing of exact sub-tests.
    Conservative,
}

/// Internal quantities of a test run. None of these are differentially
/// private; only [`TestOutcome::reject`] may be released.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Internals {
    /// The private resampling p-value (smallest sub-test p-value for
    /// multiple-testing procedures).
    pub p_value: Option<f64>,
    /// Noised statistic on the unresampled data.
    pub m0: Option<f64>,
    /// Laplace scale applied to each statistic or count.
    pub noise_scale: f64,
    /// Privatized count for subsample-and-aggregate procedures.
    pub noisy_count: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    /// The differentially private decision.
    pub reject: bool,
    /// NOT differentially private.
    pub internals: Internals,
    pub level: LevelGuarantee,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mismatched_row_counts_are_rejected() {
        let a = Block::from_column(&[1.0, 2.0, 3.0]).unwrap();
        let b = Block::from_column(&[1.0, 2.0]).unwrap();
        assert!(Dataset::new(vec![a, b]).is_err());
    }

    #[test]
    fn single_group_is_rejected() {
        let a = Block::from_column(&[1.0, 2.0]).unwrap();
        assert!(Dataset::new(vec![a]).is_err());
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        assert!(Block::from_column(&[1.0, f64::NAN]).is_err());
        assert!(Block::new(1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn xi_reduces_to_epsilon_without_delta() {
        for eps in [1e-4, 0.3, 1.0, 50.0] {
            assert_eq!(PrivacyParams::pure(eps).unwrap().xi(), eps);
        }
        let p = PrivacyParams::new(0.0, 0.5).unwrap();
        assert!((p.xi() - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(PrivacyParams::new(0.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
    }

    #[test]
    fn power_warning_threshold() {
        assert!(TestConfig::new(0.05, 18, 0).unwrap().power_warning().is_some());
        assert!(TestConfig::new(0.05, 19, 0).unwrap().power_warning().is_none());
        assert!(TestConfig::new(0.0, 19, 0).is_err());
        assert!(TestConfig::new(0.05, 0, 0).is_err());
    }

    #[test]
    fn permutation_maps_must_be_bijections() {
        assert!(Resampler::new(ResamplerKind::Permutation, vec![vec![0, 1], vec![1, 1]]).is_err());
        assert!(Resampler::new(ResamplerKind::Bootstrap, vec![vec![0, 1], vec![1, 1]]).is_ok());
        assert!(Resampler::new(ResamplerKind::Bootstrap, vec![vec![0, 2], vec![1, 1]]).is_err());
    }
}
