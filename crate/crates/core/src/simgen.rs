//! Synthetic data generators.
//!
//! All generators are deterministic functions of the supplied RNG stream.
//! Normal variates use [`standard_normal`].

use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;

use crate::dagcheck::Dag;
use crate::data::{Block, Dataset, Resampler, ResamplerKind};
use crate::dhsic::DiscreteDistribution;
use crate::error::{input, Result};
use crate::math::cholesky;
use crate::rng::{shuffle, standard_normal, uniform_open01};

/// Rows drawn row by row; returns `d` scalar columns.
fn columns_from_rows<R: RngCore + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
    mut row: impl FnMut(&mut R, &mut [f64]),
) -> Vec<Vec<f64>> {
    let mut cols = alloc::vec![Vec::with_capacity(n); d];
    let mut buf = alloc::vec![0.0; d];
    for _ in 0..n {
        row(rng, &mut buf);
        for (c, &v) in cols.iter_mut().zip(&buf) {
            c.push(v);
        }
    }
    cols
}

/// `n` draws of `N(0, I_d)`, one scalar group per variable.
pub fn gen_null_gaussian<R: RngCore + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Dataset> {
    if d < 2 {
        return input(format!("need d >= 2, got {d}"));
    }
    let cols = columns_from_rows(n, d, rng, |rng, row| {
        for v in row.iter_mut() {
            *v = standard_normal(rng);
        }
    });
    Dataset::from_columns(&cols)
}

/// `X^1, X^2 ~ N(0, 1)` independent and `X^3 = X^1 X^2 + e`,
/// `e ~ N(0, sigma^2)`: pairwise independent but jointly dependent.
pub fn gen_product_dependence<R: RngCore + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Result<Dataset> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return input(format!("sigma must be non-negative, got {sigma}"));
    }
    let cols = columns_from_rows(n, 3, rng, |rng, row| {
        let x1 = standard_normal(rng);
        let x2 = standard_normal(rng);
        let e = standard_normal(rng);
        row[0] = x1;
        row[1] = x2;
        row[2] = x1 * x2 + sigma * e;
    });
    Dataset::from_columns(&cols)
}

/// `N(0, Sigma)` with `Sigma[i][j] = rho^|i - j|`, one scalar group per
/// variable.
pub fn gen_toeplitz<R: RngCore + ?Sized>(n: usize, d: usize, rho: f64, rng: &mut R) -> Result<Dataset> {
    if d < 2 {
        return input(format!("need d >= 2, got {d}"));
    }
    if !(libm::fabs(rho) < 1.0) {
        return input(format!("need |rho| < 1, got {rho}"));
    }
    let sigma: Vec<f64> = (0..d * d)
        .map(|t| libm::pow(rho, (t / d).abs_diff(t % d) as f64))
        .collect();
    let l = cholesky(&sigma, d).ok_or_else(|| {
        crate::error::Error::Input(format!("Toeplitz covariance with rho = {rho} is not positive definite"))
    })?;
    let mut z = alloc::vec![0.0; d];
    let cols = columns_from_rows(n, d, rng, |rng, row| {
        for v in z.iter_mut() {
            *v = standard_normal(rng);
        }
        for i in 0..d {
            row[i] = (0..=i).map(|k| l[i * d + k] * z[k]).sum();
        }
    });
    Dataset::from_columns(&cols)
}

/// Near-equal group sizes summing to `total`, larger groups first.
pub fn near_equal_sizes(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| total / k + usize::from(j < total % k)).collect()
}

/// Regroups the scalar columns of `dataset` into groups of the given sizes,
/// assigning columns by a random permutation.
pub fn group_with_sizes<R: RngCore + ?Sized>(dataset: &Dataset, sizes: &[usize], rng: &mut R) -> Result<Dataset> {
    let cols = dataset.columns();
    if sizes.contains(&0) || sizes.iter().sum::<usize>() != cols.len() {
        return input(format!(
            "group sizes {sizes:?} do not partition {} columns into nonempty groups",
            cols.len()
        ));
    }
    let mut perm: Vec<usize> = (0..cols.len()).collect();
    shuffle(rng, &mut perm);
    let n = dataset.n();
    let mut start = 0;
    #[allow(clippy::needless_range_loop)]
    let groups = sizes
        .iter()
        .map(|&s| {
            let members = &perm[start..start + s];
            start += s;
            let mut values = Vec::with_capacity(n * s);
            for i in 0..n {
                values.extend(members.iter().map(|&c| cols[c][i]));
            }
            Block::new(n, s, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(groups)
}

/// Random partition of the columns into `k` near-equal groups.
pub fn group_random<R: RngCore + ?Sized>(dataset: &Dataset, k: usize, rng: &mut R) -> Result<Dataset> {
    let total = dataset.columns().len();
    if k > total || k < 2 {
        return input(format!("cannot form {k} groups from {total} columns"));
    }
    group_with_sizes(dataset, &near_equal_sizes(total, k), rng)
}

/// Edge function `f^{j,k}` of an additive structural equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeFn {
    /// `c x`
    Linear(f64),
    /// `c x^2`
    Quadratic(f64),
    /// `c tanh(x)`
    Tanh(f64),
}

impl EdgeFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            EdgeFn::Linear(c) => c * x,
            EdgeFn::Quadratic(c) => c * x * x,
            EdgeFn::Tanh(c) => c * libm::tanh(x),
        }
    }
}

/// Additive SEM `X^j = sum_{k in PA_j} f^{j,k}(X^k) + N^j`,
/// `N^j ~ N(0, sd_j^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    dag: Dag,
    funcs: Vec<Vec<EdgeFn>>,
    noise_sd: Vec<f64>,
}

impl StructuralModel {
    /// `edges[j]` lists `(parent, f)` pairs of node `j`.
    pub fn new(edges: Vec<Vec<(usize, EdgeFn)>>, noise_sd: Vec<f64>) -> Result<Self> {
        if noise_sd.len() != edges.len() {
            return input("one noise standard deviation per node is required");
        }
        if noise_sd.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return input("noise standard deviations must be non-negative");
        }
        let dag = Dag::new(edges.iter().map(|e| e.iter().map(|p| p.0).collect()).collect())?;
        let funcs = edges.iter().map(|e| e.iter().map(|p| p.1).collect()).collect();
        Ok(Self { dag, funcs, noise_sd })
    }

    /// Chain `0 -> 1 -> ...` with `funcs[j]` on the edge into node `j + 1`.
    pub fn chain(funcs: &[EdgeFn], noise_sd: Vec<f64>) -> Result<Self> {
        let edges = (0..=funcs.len())
            .map(|j| {
                if j == 0 {
                    Vec::new()
                } else {
                    alloc::vec![(j - 1, funcs[j - 1])]
                }
            })
            .collect();
        Self::new(edges, noise_sd)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }
}

/// `n` draws from the structural model; node columns are generated in
/// topological order.
pub fn gen_sem_dag<R: RngCore + ?Sized>(n: usize, model: &StructuralModel, rng: &mut R) -> Result<Dataset> {
    let d = model.dag.d();
    if d < 2 {
        return input("a structural model needs at least two nodes");
    }
    let mut cols: Vec<Vec<f64>> = alloc::vec![Vec::new(); d];
    for &j in model.dag.topological_order() {
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let signal: f64 = model
                    .dag
                    .parents(j)
                    .iter()
                    .zip(&model.funcs[j])
                    .map(|(&k, f)| f.eval(cols[k][i]))
                    .sum();
                signal + model.noise_sd[j] * standard_normal(rng)
            })
            .collect();
        cols[j] = col;
    }
    Dataset::from_columns(&cols)
}

/// Largest admissible perturbation `(2^{d-1} - 1) / 2^d`.
pub fn two_atom_max_v(d: usize) -> f64 {
    let half = libm::ldexp(1.0, d as i32 - 1);
    (half - 1.0) / (2.0 * half)
}

/// Scalar atoms `{0, gap}` per group; the two diagonal cells carry
/// `1/2^d + v` and every other cell `1/2^d - v / (2^{d-1} - 1)`.
pub fn two_atom_family(d: usize, v: f64, atom_gap: f64) -> Result<DiscreteDistribution> {
    if !(2..=20).contains(&d) {
        return input(format!("need 2 <= d <= 20, got {d}"));
    }
    if !(atom_gap > 0.0 && atom_gap.is_finite()) {
        return input("atom gap must be positive");
    }
    let vmax = two_atom_max_v(d);
    if !(0.0..=vmax).contains(&v) {
        return input(format!("v must lie in [0, {vmax}], got {v}"));
    }
    let cells = 1usize << d;
    let base = 1.0 / cells as f64;
    let off = v / ((cells / 2) as f64 - 1.0);
    let pmf = (0..cells)
        .map(|c| {
            if c == 0 || c == cells - 1 {
                base + v
            } else {
                (base - off).max(0.0)
            }
        })
        .collect();
    let atoms = (0..d)
        .map(|_| alloc::vec![alloc::vec![0.0], alloc::vec![atom_gap]])
        .collect();
    DiscreteDistribution::new(atoms, pmf)
}

/// `n` i.i.d. draws from a discrete distribution by inverse CDF over cells.
pub fn sample_discrete<R: RngCore + ?Sized>(dist: &DiscreteDistribution, n: usize, rng: &mut R) -> Result<Dataset> {
    let pmf = dist.pmf();
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for &p in pmf {
        acc += p;
        cdf.push(acc);
    }
    let dims: Vec<usize> = dist.atoms().iter().map(|a| a[0].len()).collect();
    let mut values: Vec<Vec<f64>> = dims.iter().map(|&p| Vec::with_capacity(n * p)).collect();
    for _ in 0..n {
        let u = uniform_open01(rng) * acc;
        let cell = cdf.partition_point(|&c| c < u).min(pmf.len() - 1);
        for (j, &a) in dist.cell_indices(cell).iter().enumerate() {
            values[j].extend_from_slice(&dist.atoms()[j][a]);
        }
    }
    let groups = values
        .into_iter()
        .zip(&dims)
        .map(|(v, &p)| Block::new(n, p, v))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(groups)
}

/// A neighbouring pair on which one fixed permutation moves `sqrt(V)` by
/// nearly `4 (n - 2.5) / n^2` for two scalar groups with near-orthogonal
/// atoms `0` and `gap`.
///
/// `x` has rows `(0, 0), (0, 0), (gap, gap), ...`; `x_prime` replaces row 1
/// by `(gap, gap)`. The returned permutation swaps rows 0 and 1 of group 1.
pub fn adversarial_permutation_pair(n: usize, gap: f64) -> Result<(Dataset, Dataset, Resampler)> {
    if n < 3 {
        return input("the permutation construction needs n >= 3");
    }
    let col: Vec<f64> = (0..n).map(|i| if i < 2 { 0.0 } else { gap }).collect();
    let x = Dataset::from_columns(&[col.clone(), col])?;
    let x_prime = x.with_row_replaced(1, &[&[gap], &[gap]])?;
    let mut swap: Vec<usize> = (0..n).collect();
    swap.swap(0, 1);
    let phi = Resampler::new(ResamplerKind::Permutation, alloc::vec![(0..n).collect(), swap])?;
    Ok((x, x_prime, phi))
}

/// A neighbouring pair and one bootstrap draw on which `sqrt(V)` moves by
/// `3 sqrt(K0) / 8` as the cross-kernel vanishes, with `n = 4 m`.
///
/// `x` is constant at `(0, 0)`; `x_prime` replaces row 2 by `(gap, gap)`.
/// The draw repeats the index pairs `(0, 0), (0, 1), (1, 0), (2, 2)`.
pub fn adversarial_bootstrap_pair(m: usize, gap: f64) -> Result<(Dataset, Dataset, Resampler)> {
    if m == 0 {
        return input("the bootstrap construction needs m >= 1");
    }
    let n = 4 * m;
    let x = Dataset::from_columns(&[alloc::vec![0.0; n], alloc::vec![0.0; n]])?;
    let x_prime = x.with_row_replaced(2, &[&[gap], &[gap]])?;
    let pattern = [(0usize, 0usize), (0, 1), (1, 0), (2, 2)];
    let first = (0..n).map(|i| pattern[i % 4].0).collect();
    let second = (0..n).map(|i| pattern[i % 4].1).collect();
    let phi = Resampler::new(ResamplerKind::Bootstrap, alloc::vec![first, second])?;
    Ok((x, x_prime, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dhsic::population_dhsic_discrete;
    use crate::kernels::KernelSpec;
    use crate::rng::stream_rng;
    use alloc::vec;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn null_gaussian_moments() {
        let data = gen_null_gaussian(20_000, 3, &mut stream_rng(1, 0)).unwrap();
        let cols = data.columns();
        for c in &cols {
            assert!(mean(c).abs() < 0.03);
        }
        assert!(cov(&cols[0], &cols[2]).abs() < 0.03);
        assert!(gen_null_gaussian(10, 1, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn product_dependence_without_noise_is_exact() {
        let data = gen_product_dependence(100, 0.0, &mut stream_rng(2, 0)).unwrap();
        let c = data.columns();
        for ((x1, x2), x3) in c[0].iter().zip(&c[1]).zip(&c[2]) {
            assert_eq!(*x3, x1 * x2);
        }
    }

    #[test]
    fn toeplitz_covariance() {
        let data = gen_toeplitz(100_000, 6, 0.3, &mut stream_rng(3, 0)).unwrap();
        let c = data.columns();
        for i in 0..6 {
            for j in 0..6 {
                let target = libm::pow(0.3, (i as f64 - j as f64).abs());
                assert!((cov(&c[i], &c[j]) - target).abs() < 0.02);
            }
        }
        assert!(gen_toeplitz(10, 3, 1.0, &mut stream_rng(3, 0)).is_err());
    }

    #[test]
    fn grouping_partitions_columns() {
        let data = gen_null_gaussian(5, 7, &mut stream_rng(4, 0)).unwrap();
        let g = group_random(&data, 3, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(g.dims(), vec![3, 2, 2]);
        let mut seen: Vec<u64> = g.columns().iter().map(|c| c[0].to_bits()).collect();
        let mut orig: Vec<u64> = data.columns().iter().map(|c| c[0].to_bits()).collect();
        seen.sort_unstable();
        orig.sort_unstable();
        assert_eq!(seen, orig);
        assert_eq!(g, group_random(&data, 3, &mut stream_rng(5, 0)).unwrap());
        assert_eq!(
            group_random(&data, 7, &mut stream_rng(5, 0)).unwrap().dims(),
            vec![1; 7]
        );
        assert!(group_random(&data, 8, &mut stream_rng(5, 0)).is_err());
    }

    #[test]
    fn sem_chain_without_noise_copies_parent() {
        let model = StructuralModel::chain(&[EdgeFn::Linear(1.0)], vec![1.0, 0.0]).unwrap();
        let data = gen_sem_dag(50, &model, &mut stream_rng(6, 0)).unwrap();
        assert_eq!(data.group(0), data.group(1));
        let cyclic = StructuralModel::new(
            vec![vec![(1, EdgeFn::Linear(1.0))], vec![(0, EdgeFn::Tanh(1.0))]],
            vec![1.0, 1.0],
        );
        assert!(cyclic.is_err());
    }

    #[test]
    fn two_atom_masses() {
        for d in 2..6 {
            let vmax = two_atom_max_v(d);
            for v in [0.0, vmax / 3.0, vmax] {
                let dist = two_atom_family(d, v, 2.0).unwrap();
                assert!(dist.pmf().iter().all(|&p| p >= 0.0));
                assert!((dist.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(two_atom_family(2, 0.3, 2.0).is_err());
        let k = KernelSpec::gaussian(1.0).unwrap();
        let flat = two_atom_family(3, 0.0, 2.0).unwrap();
        assert!(population_dhsic_discrete(&flat, &[k; 3]).unwrap() < 1e-8);
    }

    #[test]
    fn discrete_sampler_frequencies() {
        let dist = two_atom_family(2, 0.15, 2.0).unwrap();
        let data = sample_discrete(&dist, 40_000, &mut stream_rng(7, 0)).unwrap();
        let both_zero = (0..data.n())
            .filter(|&i| data.group(0).row(i)[0] == 0.0 && data.group(1).row(i)[0] == 0.0)
            .count() as f64
            / data.n() as f64;
        assert!((both_zero - 0.4).abs() < 0.01, "{both_zero}");
    }
}
