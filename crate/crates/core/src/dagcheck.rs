//! Diagnostic check of a hypothesised DAG: regress each node on its
//! parents, then privately test the residuals for joint independence.
//!
//! Rejecting joint independence of the residuals rejects the DAG.

use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;

use crate::data::{Block, Dataset, PrivacyParams, TestConfig, TestOutcome};
use crate::dpdhsic::dpdhsic_test;
use crate::error::{input, Error, Result};
use crate::kernels::{median_gaussian_specs, KernelSpec};
use crate::math::{cholesky, cholesky_solve, compensated_sum};

/// A directed acyclic graph on nodes `0..d`, stored as parent lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Dag {
    pub fn new(parents: Vec<Vec<usize>>) -> Result<Self> {
        let d = parents.len();
        for (j, ps) in parents.iter().enumerate() {
            for (t, &k) in ps.iter().enumerate() {
                if k >= d {
                    return input(format!("node {j} has parent {k}, but there are {d} nodes"));
                }
                if ps[..t].contains(&k) {
                    return input(format!("node {j} lists parent {k} twice"));
                }
            }
        }
        let order = topological_order(&parents).ok_or(Error::Cycle)?;
        Ok(Self { parents, order })
    }

    /// `d` nodes with no edges.
    pub fn empty(d: usize) -> Self {
        Self::new(alloc::vec![Vec::new(); d]).expect("an empty graph is acyclic")
    }

    /// `0 -> 1 -> ... -> d-1`.
    pub fn chain(d: usize) -> Self {
        let parents = (0..d)
            .map(|j| if j == 0 { Vec::new() } else { alloc::vec![j - 1] })
            .collect();
        Self::new(parents).expect("a chain is acyclic")
    }

    pub fn d(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    /// Nodes ordered so every parent precedes its children; ties broken by
    /// smallest index.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// The same graph with the edge `parent -> child` removed.
    pub fn without_edge(&self, parent: usize, child: usize) -> Result<Dag> {
        if child >= self.d() || !self.parents[child].contains(&parent) {
            return input(format!("there is no edge {parent} -> {child}"));
        }
        let mut parents = self.parents.clone();
        parents[child].retain(|&k| k != parent);
        Dag::new(parents)
    }
}

fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let d = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = alloc::vec![Vec::new(); d];
    for (j, ps) in parents.iter().enumerate() {
        for &k in ps {
            children[k].push(j);
        }
    }
    let mut done = alloc::vec![false; d];
    let mut order = Vec::with_capacity(d);
    while order.len() < d {
        let next = (0..d).find(|&j| !done[j] && indegree[j] == 0)?;
        done[next] = true;
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
        }
    }
    Some(order)
}

/// Ridge penalty per observation on the standardized basis. Small enough
/// that exact fits within the basis leave residuals near round-off.
pub const RIDGE_PER_OBSERVATION: f64 = 1e-9;

fn centered(values: &[f64]) -> Vec<f64> {
    let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

/// Centered, unit-variance copy; `None` for a constant column.
fn standardized(values: &[f64]) -> Option<Vec<f64>> {
    let c = centered(values);
    let ss = compensated_sum(c.iter().map(|v| v * v));
    if !(ss > 0.0) {
        return None;
    }
    let sd = libm::sqrt(ss / c.len() as f64);
    Some(c.into_iter().map(|v| v / sd).collect())
}

/// Residuals of `y` after ridge regression on the cubic basis
/// `{z, z^2, z^3}` of each standardized parent column, with an unpenalized
/// intercept.
pub fn ridge_cubic_residuals(y: &[f64], parents: &[&[f64]]) -> Vec<f64> {
    let n = y.len();
    let yc = centered(y);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for x in parents {
        let Some(z) = standardized(x) else { continue };
        for power in 1..=3 {
            let col: Vec<f64> = z.iter().map(|v| libm::pow(*v, power as f64)).collect();
            if let Some(s) = standardized(&col) {
                basis.push(s);
            }
        }
    }
    let q = basis.len();
    if q == 0 {
        return yc;
    }
    let lambda = RIDGE_PER_OBSERVATION * n as f64;
    let mut gram = alloc::vec![0.0; q * q];
    let mut rhs = alloc::vec![0.0; q];
    for a in 0..q {
        for b in 0..=a {
            let v = compensated_sum((0..n).map(|i| basis[a][i] * basis[b][i]));
            gram[a * q + b] = v;
            gram[b * q + a] = v;
        }
        gram[a * q + a] += lambda;
        rhs[a] = compensated_sum((0..n).map(|i| basis[a][i] * yc[i]));
    }
    let l = cholesky(&gram, q).expect("ridge-penalized normal equations are positive definite");
    let beta = cholesky_solve(&l, q, &rhs);
    (0..n)
        .map(|i| yc[i] - (0..q).map(|a| beta[a] * basis[a][i]).sum::<f64>())
        .collect()
}

/// Residuals of every node regressed on its parents, one scalar group per
/// node. Parentless nodes are mean-centered.
pub fn fit_residuals(dataset: &Dataset, dag: &Dag) -> Result<Dataset> {
    if dataset.d() != dag.d() {
        return input(format!(
            "dataset has {} groups but the DAG has {} nodes",
            dataset.d(),
            dag.d()
        ));
    }
    if dataset.dims().iter().any(|&p| p != 1) {
        return input("DAG checking needs one scalar column per node");
    }
    let columns: Vec<Vec<f64>> = (0..dag.d()).map(|j| dataset.group(j).column(0)).collect();
    let residuals = (0..dag.d())
        .map(|j| {
            let parents: Vec<&[f64]> = dag.parents(j).iter().map(|&k| columns[k].as_slice()).collect();
            Block::from_column(&ridge_cubic_residuals(&columns[j], &parents))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(residuals)
}

/// Fits residuals and runs the private dHSIC test on them with `specs`.
pub fn check_dag<R: RngCore + ?Sized>(
    dataset: &Dataset,
    dag: &Dag,
    specs: &[KernelSpec],
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let residuals = fit_residuals(dataset, dag)?;
    dpdhsic_test(&residuals, specs, privacy, config, rng)
}

/// [`check_dag`] with Gaussian kernels whose bandwidths come from the
/// median heuristic on the residuals.
pub fn check_dag_median<R: RngCore + ?Sized>(
    dataset: &Dataset,
    dag: &Dag,
    privacy: &PrivacyParams,
    config: &TestConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let residuals = fit_residuals(dataset, dag)?;
    let specs = median_gaussian_specs(&residuals)?;
    dpdhsic_test(&residuals, &specs, privacy, config, rng)
}
