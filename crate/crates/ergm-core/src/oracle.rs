//! Exact brute-force computations on tiny graphs for test verification.
//!
//! For `n <= 6` nodes the full graph space (at most `2^15` graphs) is
//! enumerated with a Gray-code walk: consecutive graphs differ by one dyad
//! toggle, so sufficient statistics update incrementally. The resulting
//! table of distinct statistic vectors makes the normalizer `z(theta)`,
//! exact moments of `s(y)` and exact posterior grids cheap to evaluate at
//! any number of parameter points.

use nalgebra::{DMatrix, DVector};

use crate::error::{ErgmError, Result};
use crate::graph::Graph;
use crate::pseudolikelihood::GaussianPrior;
use crate::statistics::{sufficient_statistics, CompiledModel, ModelSpec};

/// Hard cap on enumeration size: `2^(6*5/2) = 32768` graphs.
pub const ENUMERATION_CAP: usize = 6;

/// Distinct sufficient-statistic vectors over the whole graph space and how
/// many graphs realize each.
#[derive(Debug, Clone)]
pub struct StatTable {
    d: usize,
    entries: Vec<(DVector<f64>, f64)>,
}

impl StatTable {
    /// Enumerates all graphs on the template's node set (edges of the
    /// template are ignored; its attributes are kept).
    pub fn build(model: &ModelSpec, template: &Graph) -> Result<Self> {
        let n = template.n();
        if n > ENUMERATION_CAP {
            return Err(ErgmError::EnumerationCap { n, cap: ENUMERATION_CAP });
        }
        let mut g = template.clone();
        for dyad in g.dyads().collect::<Vec<_>>() {
            if g.has_edge(dyad) {
                g.toggle(dyad)?;
            }
        }
        let compiled = CompiledModel::compile(model, &g)?;
        let d = model.d();
        let n_dyads = g.dyad_count();
        let dyads: Vec<_> = g.dyads().collect();
        let total: u64 = 1 << n_dyads;

        use std::collections::BTreeMap;
        let mut groups: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        let mut s = compiled.sufficient(&g);
        let mut delta = vec![0.0; d];
        let mut common = Vec::new();
        let key = |s: &DVector<f64>| -> Vec<u64> { s.iter().map(|v| v.to_bits()).collect() };
        *groups.entry(key(&s)).or_insert(0.0) += 1.0;
        for k in 1..total {
            let bit = k.trailing_zeros() as usize;
            let dyad = dyads[bit];
            compiled.change_into(&g, dyad, &mut common, &mut delta);
            let adding = !g.has_edge(dyad);
            g.toggle(dyad)?;
            for t in 0..d {
                if adding {
                    s[t] += delta[t];
                } else {
                    s[t] -= delta[t];
                }
            }
            *groups.entry(key(&s)).or_insert(0.0) += 1.0;
        }
        let entries = groups
            .into_iter()
            .map(|(bits, c)| {
                (DVector::from_iterator(d, bits.iter().map(|b| f64::from_bits(*b))), c)
            })
            .collect();
        Ok(StatTable { d, entries })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `log z(theta)` by log-sum-exp over the table.
    pub fn log_z(&self, theta: &DVector<f64>) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (s, _) in &self.entries {
            let v = theta.dot(s);
            if v > max {
                max = v;
            }
        }
        let sum: f64 = self.entries.iter().map(|(s, c)| c * (theta.dot(s) - max).exp()).sum();
        max + sum.ln()
    }

    /// `log z`, `E[s]` and `V[s]` under the model at `theta`.
    pub fn moments(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let log_z = self.log_z(theta);
        let mut mean = DVector::zeros(self.d);
        for (s, c) in &self.entries {
            let p = c * (theta.dot(s) - log_z).exp();
            mean += s * p;
        }
        let mut cov = DMatrix::zeros(self.d, self.d);
        for (s, c) in &self.entries {
            let p = c * (theta.dot(s) - log_z).exp();
            let dev = s - &mean;
            cov += &dev * dev.transpose() * p;
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        (log_z, mean, cov)
    }
}

/// Exact normalizer and moments at one parameter point.
#[derive(Debug, Clone)]
pub struct EnumerationResult {
    pub log_z: f64,
    pub mean_stats: DVector<f64>,
    pub cov_stats: DMatrix<f64>,
    pub n: usize,
}

/// Exact `z(theta)` and moments for attribute-free models on `n` nodes.
pub fn enumerate(theta: &DVector<f64>, model: &ModelSpec, n: usize) -> Result<EnumerationResult> {
    enumerate_with(theta, model, &Graph::empty(n.max(1)))
}

/// As [`enumerate`] but keeping the template's node attributes.
pub fn enumerate_with(
    theta: &DVector<f64>,
    model: &ModelSpec,
    template: &Graph,
) -> Result<EnumerationResult> {
    if theta.len() != model.d() {
        return Err(ErgmError::DimensionMismatch { expected: model.d(), actual: theta.len() });
    }
    let table = StatTable::build(model, template)?;
    let (log_z, mean_stats, cov_stats) = table.moments(theta);
    Ok(EnumerationResult { log_z, mean_stats, cov_stats, n: template.n() })
}

/// A rectangular evaluation grid, one `(lo, hi, steps)` triple per
/// parameter dimension.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub ranges: Vec<(f64, f64)>,
    pub steps: Vec<usize>,
}

impl GridSpec {
    pub fn new(ranges: Vec<(f64, f64)>, steps: Vec<usize>) -> Self {
        assert_eq!(ranges.len(), steps.len());
        assert!(steps.iter().all(|&s| s >= 2));
        GridSpec { ranges, steps }
    }

    fn axis(&self, t: usize) -> Vec<f64> {
        let (lo, hi) = self.ranges[t];
        let k = self.steps[t];
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    }
}

/// A normalized posterior density table over a parameter grid.
#[derive(Debug, Clone)]
pub struct PosteriorGrid {
    pub axes: Vec<Vec<f64>>,
    /// Cell probability masses, flattened row-major over the axes, summing
    /// to one.
    pub mass: Vec<f64>,
    pub argmax: DVector<f64>,
}

impl PosteriorGrid {
    /// Marginal cell masses along one axis.
    pub fn marginal(&self, axis: usize) -> Vec<(f64, f64)> {
        let dims: Vec<usize> = self.axes.iter().map(|a| a.len()).collect();
        let mut out = vec![0.0; dims[axis]];
        for (flat, &m) in self.mass.iter().enumerate() {
            let mut rem = flat;
            let mut idx = 0;
            for (t, &k) in dims.iter().enumerate().rev() {
                let c = rem % k;
                rem /= k;
                if t == axis {
                    idx = c;
                }
            }
            out[idx] += m;
        }
        self.axes[axis].iter().copied().zip(out).collect()
    }
}

/// Evaluates the exact posterior on a grid by enumerating `z(theta)` per
/// grid point, normalizing by grid quadrature. Only feasible for tiny
/// graphs.
pub fn exact_posterior_grid(
    y: &Graph,
    model: &ModelSpec,
    prior: &GaussianPrior,
    grid: &GridSpec,
) -> Result<PosteriorGrid> {
    let d = model.d();
    if grid.ranges.len() != d {
        return Err(ErgmError::DimensionMismatch { expected: d, actual: grid.ranges.len() });
    }
    let table = StatTable::build(model, y)?;
    let s_obs = sufficient_statistics(y, model)?;
    let axes: Vec<Vec<f64>> = (0..d).map(|t| grid.axis(t)).collect();
    let dims: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let cells: usize = dims.iter().product();
    let mut log_post = Vec::with_capacity(cells);
    let mut theta = DVector::zeros(d);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for flat in 0..cells {
        let mut rem = flat;
        for t in (0..d).rev() {
            theta[t] = axes[t][rem % dims[t]];
            rem /= dims[t];
        }
        let lp = theta.dot(&s_obs) - table.log_z(&theta) + prior.log_density(&theta);
        if lp > best.0 {
            best = (lp, flat);
        }
        log_post.push(lp);
    }
    let max = best.0;
    let mut mass: Vec<f64> = log_post.iter().map(|lp| (lp - max).exp()).collect();
    let total: f64 = mass.iter().sum();
    for m in &mut mass {
        *m /= total;
    }
    let mut argmax = DVector::zeros(d);
    let mut rem = best.1;
    for t in (0..d).rev() {
        argmax[t] = axes[t][rem % dims[t]];
        rem /= dims[t];
    }
    Ok(PosteriorGrid { axes, mass, argmax })
}
