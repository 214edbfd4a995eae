//! Empirical dHSIC (V- and U-statistics), brute-force enumeration oracles,
//! and exact population dHSIC for finite discrete distributions.
//!
//! The V-statistic is evaluated in factorized form,
//!
//! ```text
//! V = (1/n^2) sum_{i,l} prod_j G_j[i][l]
//!   + prod_j mean(G_j)
//!   - (2/n) sum_i prod_j mean_l G_j[i][l]
//! ```
//!
//! in `O(d n^2)`. Resampled statistics index into the original Gram
//! matrices instead of re-evaluating kernels.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{Dataset, Resampler};
use crate::error::{input, Error, Result};
use crate::kernels::{grams, GramMatrix, KernelSpec};
use crate::math::{compensated_sum, CompensatedSum};

/// The statistic `sqrt(V)` together with the raw squared value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticValue {
    /// `sqrt(max(squared, 0))`.
    pub value: f64,
    /// The V-statistic itself; may be slightly negative from cancellation.
    pub squared: f64,
}

impl StatisticValue {
    pub fn from_squared(squared: f64) -> Self {
        Self {
            value: libm::sqrt(squared.max(0.0)),
            squared,
        }
    }
}

/// Upper limit on the number of index tuples visited by naive enumeration.
pub const ENUMERATION_LIMIT: u64 = 100_000_000;

/// Largest `n` with `n^power <= ENUMERATION_LIMIT`.
pub fn enumeration_max_n(power: u32) -> usize {
    let mut n = 1usize;
    while (n as u64 + 1)
        .checked_pow(power)
        .is_some_and(|v| v <= ENUMERATION_LIMIT)
    {
        n += 1;
    }
    n
}

fn check_grams(grams: &[&GramMatrix]) -> Result<usize> {
    let Some(first) = grams.first() else {
        return input("no gram matrices supplied");
    };
    let n = first.n();
    if grams.iter().any(|g| g.n() != n) {
        return input("gram matrices have different sizes");
    }
    if n < 2 {
        return input(format!("need n >= 2 observations, got {n}"));
    }
    Ok(n)
}

fn check_maps(maps: &[Option<&[usize]>], d: usize, n: usize) -> Result<()> {
    if maps.len() != d {
        return input("one index map per group is required");
    }
    for m in maps.iter().flatten() {
        if m.len() != n || m.iter().any(|&i| i >= n) {
            return input("index map does not match the sample size");
        }
    }
    Ok(())
}

/// Sum with eight independent accumulators. The association order depends
/// only on the length, so equal inputs give bitwise-equal sums.
#[inline]
fn lane_sum(x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = x.chunks_exact(8);
    let rem = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for &v in rem {
        s += v;
    }
    s
}

/// Factorized squared V-statistic of the data resampled by `maps`
/// (`None` = identity), read from the original Gram matrices.
///
/// Row `i` visits the upper-triangle segment `l >= i` of every resampled
/// Gram matrix once, so each pair contributes to both row sums.
pub(crate) fn v_stat_core(grams: &[&GramMatrix], maps: &[Option<&[usize]>]) -> f64 {
    let n = grams[0].n();
    let d = grams.len();
    let mut row_sums = alloc::vec![0.0; d * n];
    let mut gathered = alloc::vec![0.0; n];
    let mut prod = alloc::vec![0.0; n];
    let mut term1 = CompensatedSum::new();

    for i in 0..n {
        let width = n - i;
        for (j, g) in grams.iter().enumerate() {
            let seg: &[f64] = match maps[j] {
                None => &g.row(i)[i..],
                Some(m) => {
                    let row = g.row(m[i]);
                    for (slot, &src) in gathered[..width].iter_mut().zip(&m[i..]) {
                        *slot = row[src];
                    }
                    &gathered[..width]
                }
            };
            let rs = &mut row_sums[j * n..(j + 1) * n];
            rs[i] += lane_sum(seg);
            for (r, &v) in rs[i + 1..].iter_mut().zip(&seg[1..]) {
                *r += v;
            }
            if j == 0 {
                prod[..width].copy_from_slice(seg);
            } else {
                for (p, &v) in prod[..width].iter_mut().zip(seg) {
                    *p *= v;
                }
            }
        }
        term1.add(2.0 * lane_sum(&prod[1..width]) + prod[0]);
    }

    let nf = n as f64;
    let term2: f64 = (0..d)
        .map(|j| compensated_sum(row_sums[j * n..(j + 1) * n].iter().copied()) / (nf * nf))
        .product();
    let mut term3 = CompensatedSum::new();
    for i in 0..n {
        let mut p = 1.0;
        for j in 0..d {
            p *= row_sums[j * n + i] / nf;
        }
        term3.add(p);
    }
    term1.value() / (nf * nf) + term2 - 2.0 * term3.value() / nf
}

/// Index maps of `resampler`, with identity maps reported as `None`.
pub(crate) fn resampler_maps(resampler: &Resampler) -> Vec<Option<&[usize]>> {
    resampler
        .maps()
        .iter()
        .map(|m| {
            if m.iter().enumerate().all(|(i, &v)| i == v) {
                None
            } else {
                Some(m.as_slice())
            }
        })
        .collect()
}

/// Squared empirical dHSIC (V-statistic) in factorized form, `O(d n^2)`.
pub fn v_stat_squared(grams: &[GramMatrix]) -> Result<f64> {
    let refs: Vec<&GramMatrix> = grams.iter().collect();
    check_grams(&refs)?;
    let maps = alloc::vec![None; refs.len()];
    Ok(v_stat_core(&refs, &maps))
}

/// Squared V-statistic of the resampled data `X^phi`, computed by permuting
/// Gram rows and columns.
pub fn v_stat_squared_resampled(grams: &[&GramMatrix], resampler: &Resampler) -> Result<f64> {
    let n = check_grams(grams)?;
    let maps = resampler_maps(resampler);
    check_maps(&maps, grams.len(), n)?;
    Ok(v_stat_core(grams, &maps))
}

/// Odometer over all `len`-tuples of `0..n`.
fn for_each_tuple(n: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = alloc::vec![0usize; len];
    loop {
        f(&idx);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Literal enumeration of the three V-statistic index sums. Guarded by
/// `n^(2d) <= ENUMERATION_LIMIT`.
pub fn v_stat_naive(grams: &[GramMatrix]) -> Result<f64> {
    let refs: Vec<&GramMatrix> = grams.iter().collect();
    let n = check_grams(&refs)?;
    let d = grams.len();
    let max_n = enumeration_max_n(2 * d as u32);
    if n > max_n {
        return Err(Error::TooLarge { n, max_n });
    }
    let nf = n as f64;

    let mut s1 = CompensatedSum::new();
    for_each_tuple(n, 2, |t| {
        s1.add(grams.iter().map(|g| g.get(t[0], t[1])).product());
    });
    let mut s2 = CompensatedSum::new();
    for_each_tuple(n, 2 * d, |t| {
        s2.add(
            grams
                .iter()
                .enumerate()
                .map(|(j, g)| g.get(t[2 * j], t[2 * j + 1]))
                .product(),
        );
    });
    let mut s3 = CompensatedSum::new();
    for_each_tuple(n, d + 1, |t| {
        s3.add(grams.iter().enumerate().map(|(j, g)| g.get(t[0], t[j + 1])).product());
    });
    Ok(
        s1.value() / libm::pow(nf, 2.0) + s2.value() / libm::pow(nf, 2.0 * d as f64)
            - 2.0 * s3.value() / libm::pow(nf, d as f64 + 1.0),
    )
}

/// `sqrt` of the squared V-statistic for `dataset` under `specs`.
pub fn empirical_dhsic(dataset: &Dataset, specs: &[KernelSpec]) -> Result<StatisticValue> {
    let g = grams(dataset, specs)?;
    Ok(StatisticValue::from_squared(v_stat_squared(&g)?))
}

/// Depth-first enumeration of tuples with pairwise distinct entries.
struct DistinctTuples<'a> {
    n: usize,
    used: Vec<bool>,
    tuple: Vec<usize>,
    weight: &'a dyn Fn(&[usize], usize) -> f64,
}

impl DistinctTuples<'_> {
    /// `weight(tuple, depth)` multiplies in whatever becomes known once
    /// position `depth` is filled; returning 0 prunes the subtree.
    fn sum(&mut self, depth: usize, partial: f64, acc: &mut CompensatedSum) {
        if depth == self.tuple.len() {
            acc.add(partial);
            return;
        }
        for i in 0..self.n {
            if self.used[i] {
                continue;
            }
            self.used[i] = true;
            self.tuple[depth] = i;
            let w = partial * (self.weight)(&self.tuple, depth);
            if w != 0.0 {
                self.sum(depth + 1, w, acc);
            }
            self.used[i] = false;
        }
    }
}

fn distinct_sum(n: usize, len: usize, weight: &dyn Fn(&[usize], usize) -> f64) -> f64 {
    let mut e = DistinctTuples {
        n,
        used: alloc::vec![false; n],
        tuple: alloc::vec![0; len],
        weight,
    };
    let mut acc = CompensatedSum::new();
    e.sum(0, 1.0, &mut acc);
    acc.value()
}

/// `n (n-1) ... (n-k+1)`.
fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

pub(crate) fn u_stat_core(grams: &[&GramMatrix], maps: &[Option<&[usize]>]) -> Result<f64> {
    let n = check_grams(grams)?;
    let d = grams.len();
    check_maps(maps, d, n)?;
    if n < 2 * d {
        return input(format!("U-statistic needs n >= 2d = {}, got {n}", 2 * d));
    }
    let max_n = enumeration_max_n(2 * d as u32);
    if n > max_n {
        return Err(Error::TooLarge { n, max_n });
    }
    let at = |j: usize, a: usize, b: usize| -> f64 {
        match maps[j] {
            None => grams[j].get(a, b),
            Some(m) => grams[j].get(m[a], m[b]),
        }
    };

    let pairs = distinct_sum(n, 2, &|t, depth| {
        if depth == 1 {
            (0..d).map(|j| at(j, t[0], t[1])).product()
        } else {
            1.0
        }
    });
    let spread = distinct_sum(n, 2 * d, &|t, depth| {
        if depth % 2 == 1 {
            let j = depth / 2;
            at(j, t[depth - 1], t[depth])
        } else {
            1.0
        }
    });
    let star = distinct_sum(n, d + 1, &|t, depth| {
        if depth >= 1 {
            at(depth - 1, t[0], t[depth])
        } else {
            1.0
        }
    });

    Ok(pairs / falling(n, 2) + spread / falling(n, 2 * d) - 2.0 * star / falling(n, d + 1))
}

/// Unbiased U-statistic estimate of squared population dHSIC, by exact
/// enumeration of distinct index tuples. Requires `n >= 2d` and
/// `n^(2d) <= ENUMERATION_LIMIT`.
pub fn u_stat(grams: &[GramMatrix]) -> Result<f64> {
    let refs: Vec<&GramMatrix> = grams.iter().collect();
    let maps = alloc::vec![None; refs.len()];
    u_stat_core(&refs, &maps)
}

/// U-statistic of the resampled data, read from the original Gram matrices.
pub fn u_stat_resampled(grams: &[&GramMatrix], resampler: &Resampler) -> Result<f64> {
    let maps = resampler_maps(resampler);
    u_stat_core(grams, &maps)
}

/// A joint distribution on a finite product grid of atoms.
///
/// `pmf` is indexed row-major over the grid, group 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Vec<Vec<f64>>>,
    pmf: Vec<f64>,
}

impl DiscreteDistribution {
    /// `atoms[j]` lists the support points of group `j`.
    pub fn new(atoms: Vec<Vec<Vec<f64>>>, pmf: Vec<f64>) -> Result<Self> {
        if atoms.len() < 2 || atoms.iter().any(Vec::is_empty) {
            return input("need at least two groups, each with at least one atom");
        }
        let cells: usize = atoms.iter().map(Vec::len).product();
        if pmf.len() != cells {
            return input(format!("pmf has {} cells, grid has {cells}", pmf.len()));
        }
        if pmf.iter().any(|&p| !(p >= 0.0)) {
            return input("pmf entries must be non-negative");
        }
        let total = compensated_sum(pmf.iter().copied());
        if libm::fabs(total - 1.0) > 1e-12 {
            return input(format!("pmf sums to {total}, not 1"));
        }
        Ok(Self { atoms, pmf })
    }

    pub fn d(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Vec<Vec<f64>>] {
        &self.atoms
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Atom index per group for grid cell `cell`.
    pub fn cell_indices(&self, mut cell: usize) -> Vec<usize> {
        let mut idx = alloc::vec![0; self.d()];
        for j in (0..self.d()).rev() {
            let a = self.atoms[j].len();
            idx[j] = cell % a;
            cell /= a;
        }
        idx
    }

    /// Marginal pmf of group `j`.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.atoms[j].len()];
        for (cell, &p) in self.pmf.iter().enumerate() {
            m[self.cell_indices(cell)[j]] += p;
        }
        m
    }
}

/// Population dHSIC (the square root) of a discrete distribution, from the
/// three-expectation form evaluated exactly over the atoms.
pub fn population_dhsic_discrete(dist: &DiscreteDistribution, specs: &[KernelSpec]) -> Result<f64> {
    let d = dist.d();
    if specs.len() != d {
        return input("one kernel spec per group is required");
    }
    let kmats: Vec<Vec<Vec<f64>>> = dist
        .atoms
        .iter()
        .zip(specs)
        .map(|(atoms, s)| {
            atoms
                .iter()
                .map(|a| atoms.iter().map(|b| s.eval(a, b)).collect())
                .collect()
        })
        .collect();
    let marginals: Vec<Vec<f64>> = (0..d).map(|j| dist.marginal(j)).collect();
    let cells: Vec<Vec<usize>> = (0..dist.pmf.len()).map(|c| dist.cell_indices(c)).collect();

    // E prod_j k(X_1^j, X_2^j) over two joint draws
    let mut joint = CompensatedSum::new();
    for (x, &px) in cells.iter().zip(&dist.pmf) {
        for (y, &py) in cells.iter().zip(&dist.pmf) {
            let k: f64 = (0..d).map(|j| kmats[j][x[j]][y[j]]).product();
            joint.add(px * py * k);
        }
    }
    // E prod_j k(X_{2j-1}^j, X_{2j}^j): independent pairs per coordinate
    let product: f64 = (0..d)
        .map(|j| {
            let (m, k) = (&marginals[j], &kmats[j]);
            compensated_sum((0..m.len()).flat_map(|a| (0..m.len()).map(move |b| m[a] * m[b] * k[a][b])))
        })
        .product();
    // E prod_j k(X_1^j, X_{j+1}^j)
    let mut cross = CompensatedSum::new();
    for (x, &px) in cells.iter().zip(&dist.pmf) {
        let mut k = 1.0;
        for j in 0..d {
            let m = &marginals[j];
            k *= compensated_sum((0..m.len()).map(|b| m[b] * kmats[j][x[j]][b]));
        }
        cross.add(px * k);
    }
    let sq = joint.value() + product - 2.0 * cross.value();
    Ok(libm::sqrt(sq.max(0.0)))
}
