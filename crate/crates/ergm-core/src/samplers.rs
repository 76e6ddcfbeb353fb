//! Markov chain Monte Carlo samplers.
//!
//! Three kernels live here: the full-update Metropolis–Hastings sampler over
//! parameter space (used for the pseudo-posterior and for any pluggable
//! log-target), the tie/no-tie (TNT) Metropolis kernel over graph space that
//! simulates from the ERGM likelihood at fixed parameters, and the
//! approximate exchange algorithm, which nests a TNT run inside every
//! parameter update to cancel the intractable normalizer in its acceptance
//! ratio.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ErgmError, Result};
use crate::graph::{Dyad, Graph};
use crate::pseudolikelihood::{GaussianPrior, PseudoPosteriorSurface};
use crate::rng::{stream_rng, streams};
use crate::statistics::{CompiledModel, ModelSpec};

/// An unnormalized log density over parameter vectors.
pub trait LogTarget {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &DVector<f64>) -> f64;
}

impl LogTarget for PseudoPosteriorSurface {
    fn dim(&self) -> usize {
        self.d()
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        PseudoPosteriorSurface::log_density(self, theta)
    }
}

/// A symmetric Gaussian random-walk proposal with covariance
/// `Sigma = T (B_0 + C^-1)^-1 T`, where `T` is a diagonal tuning matrix,
/// `B_0` the prior precision and `C^-1` the curvature of the
/// pseudolikelihood at its mode.
#[derive(Debug, Clone)]
pub struct ProposalSpec {
    tuning: DVector<f64>,
    sigma: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

impl ProposalSpec {
    /// Builds the proposal directly from an SPD covariance (tuning
    /// recorded as the identity).
    pub fn from_covariance(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        Self::scaled(DVector::from_element(d, 1.0), sigma)
    }

    /// `Sigma = T (B0 + C^-1)^-1 T` from the prior precision and the
    /// negative pseudolikelihood Hessian at the mode.
    pub fn from_curvature(
        tuning: DVector<f64>,
        prior_precision: &DMatrix<f64>,
        neg_hess_mple: &DMatrix<f64>,
    ) -> Result<Self> {
        let d = tuning.len();
        if prior_precision.nrows() != d || neg_hess_mple.nrows() != d {
            return Err(ErgmError::DimensionMismatch { expected: d, actual: neg_hess_mple.nrows() });
        }
        let total = prior_precision + neg_hess_mple;
        let base = Cholesky::new(total.clone())
            .ok_or_else(|| ErgmError::NotNegativeDefinite("B0 + C^-1 is not SPD".into()))?
            .inverse();
        Self::scaled(tuning, base)
    }

    fn scaled(tuning: DVector<f64>, base: DMatrix<f64>) -> Result<Self> {
        let d = tuning.len();
        if tuning.iter().any(|&t| !(t > 0.0)) {
            return Err(ErgmError::Parse("proposal tuning entries must be positive".into()));
        }
        let mut sigma = base;
        for a in 0..d {
            for b in 0..d {
                sigma[(a, b)] *= tuning[a] * tuning[b];
            }
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| ErgmError::NotNegativeDefinite("proposal covariance not SPD".into()))?;
        Ok(ProposalSpec { tuning, sigma, chol_l: chol.l() })
    }

    pub fn d(&self) -> usize {
        self.tuning.len()
    }

    pub fn tuning(&self) -> &DVector<f64> {
        &self.tuning
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// One increment `L z` with `z ~ N(0, I)`.
    fn increment(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let d = self.d();
        let z = DVector::from_iterator(d, (0..d).map(|_| standard_normal(rng)));
        &self.chol_l * z
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per normal keeps the stream layout simple
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A realized parameter chain: all draws (burn-in included), the log target
/// value per draw, and run metadata.
#[derive(Debug, Clone)]
pub struct McmcChain {
    d: usize,
    draws: Vec<f64>,
    log_target: Vec<f64>,
    pub accepted: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub wall_time: f64,
}

impl McmcChain {
    pub fn new(d: usize, burn_in: usize, seed: u64) -> Self {
        McmcChain { d, draws: Vec::new(), log_target: Vec::new(), accepted: 0, burn_in, seed, wall_time: 0.0 }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Total number of recorded draws, burn-in included.
    pub fn len(&self) -> usize {
        self.log_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_target.is_empty()
    }

    pub fn push(&mut self, theta: &DVector<f64>, log_target: f64) {
        debug_assert_eq!(theta.len(), self.d);
        self.draws.extend_from_slice(theta.as_slice());
        self.log_target.push(log_target);
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.draws[t * self.d..(t + 1) * self.d]
    }

    pub fn log_target(&self, t: usize) -> f64 {
        self.log_target[t]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.accepted as f64 / self.len() as f64
        }
    }

    /// Draws after burn-in, row-major.
    pub fn retained(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.d).skip(self.burn_in)
    }

    pub fn retained_len(&self) -> usize {
        self.len().saturating_sub(self.burn_in)
    }

    /// One parameter column over the retained draws.
    pub fn param_series(&self, t: usize) -> Vec<f64> {
        assert!(t < self.d);
        self.retained().map(|row| row[t]).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        let mut k = 0usize;
        for row in self.retained() {
            for (a, &v) in m.iter_mut().zip(row.iter()) {
                *a += v;
            }
            k += 1;
        }
        m / k.max(1) as f64
    }

    pub fn sd(&self) -> DVector<f64> {
        let mean = self.mean();
        let mut acc = DVector::zeros(self.d);
        let mut k = 0usize;
        for row in self.retained() {
            for t in 0..self.d {
                let dev = row[t] - mean[t];
                acc[t] += dev * dev;
            }
            k += 1;
        }
        let denom = (k.max(2) - 1) as f64;
        acc.map(|v: f64| (v / denom).sqrt())
    }

    /// Covariance of the retained draws (denominator `k - 1`).
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut acc = DMatrix::zeros(self.d, self.d);
        let mut k = 0usize;
        for row in self.retained() {
            for a in 0..self.d {
                for b in a..self.d {
                    acc[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
            k += 1;
        }
        let denom = (k.max(2) - 1) as f64;
        for a in 0..self.d {
            for b in 0..a {
                acc[(a, b)] = acc[(b, a)];
            }
        }
        acc / denom
    }

    /// Keeps every `stride`-th retained draw (burn-in dropped).
    pub fn thin(&self, stride: usize) -> McmcChain {
        let stride = stride.max(1);
        let mut out = McmcChain::new(self.d, 0, self.seed);
        out.accepted = self.accepted;
        out.wall_time = self.wall_time;
        for (k, row) in self.retained().enumerate() {
            if k % stride == 0 {
                out.draws.extend_from_slice(row);
                out.log_target.push(self.log_target[self.burn_in + k]);
            }
        }
        out
    }

    /// Writes the retained draws as CSV: `iter,theta_1,...,theta_d,log_target`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let names: Vec<String> = (1..=self.d).map(|t| format!("theta_{t}")).collect();
        writeln!(out, "iter,{},log_target", names.join(","))?;
        for (k, row) in self.retained().enumerate() {
            write!(out, "{}", self.burn_in + k + 1)?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", self.log_target[self.burn_in + k])?;
        }
        Ok(())
    }

    /// Reads a chain written by [`write_csv`](Self::write_csv). The result
    /// has `burn_in = 0`; acceptance and timing metadata are not stored in
    /// the file.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<McmcChain> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines.next().ok_or_else(|| ErgmError::Parse("empty chain file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || cols[0] != "iter" || *cols.last().unwrap() != "log_target" {
            return Err(ErgmError::Parse("unrecognized chain CSV header".into()));
        }
        let d = cols.len() - 2;
        let mut chain = McmcChain::new(d, 0, 0);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 2 {
                return Err(ErgmError::Parse(format!("chain row with {} fields", fields.len())));
            }
            for f in &fields[1..=d] {
                chain
                    .draws
                    .push(f.parse().map_err(|_| ErgmError::Parse(format!("bad float `{f}`")))?);
            }
            chain
                .log_target
                .push(fields[d + 1].parse().map_err(|_| ErgmError::Parse("bad log_target".into()))?);
        }
        Ok(chain)
    }
}

/// Full-update Metropolis–Hastings with a symmetric Gaussian proposal.
/// Records `iterations` draws; the first `burn_in` of them are flagged as
/// warm-up in the chain metadata.
pub fn metropolis_hastings<T: LogTarget>(
    target: &T,
    proposal: &ProposalSpec,
    theta0: &DVector<f64>,
    iterations: usize,
    burn_in: usize,
    seed: u64,
) -> Result<McmcChain> {
    if theta0.len() != target.dim() || proposal.d() != target.dim() {
        return Err(ErgmError::DimensionMismatch { expected: target.dim(), actual: theta0.len() });
    }
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(ErgmError::NonFiniteParameter);
    }
    let mut lp = target.log_density(theta0);
    if !lp.is_finite() {
        return Err(ErgmError::BadInitialState);
    }
    let start = Instant::now();
    let mut rng = stream_rng(seed, streams::MAIN_CHAIN);
    let mut theta = theta0.clone();
    let mut chain = McmcChain::new(target.dim(), burn_in.min(iterations), seed);
    for _ in 0..iterations {
        let cand = &theta + proposal.increment(&mut rng);
        let lp_cand = target.log_density(&cand);
        // symmetric proposal: the h-ratio is one
        if lp_cand.is_finite() && rng.random::<f64>().ln() < lp_cand - lp {
            theta = cand;
            lp = lp_cand;
            chain.accepted += 1;
        }
        chain.push(&theta, lp);
    }
    chain.wall_time = start.elapsed().as_secs_f64();
    Ok(chain)
}

/// The pseudolikelihood-based Metropolis–Hastings sampler: a chain whose
/// stationary distribution is the pseudo-posterior.
pub fn mh_pseudo_posterior(
    surface: &PseudoPosteriorSurface,
    proposal: &ProposalSpec,
    theta0: &DVector<f64>,
    iterations: usize,
    burn_in: usize,
    seed: u64,
) -> Result<McmcChain> {
    metropolis_hastings(surface, proposal, theta0, iterations, burn_in, seed)
}

/// The tie/no-tie kernel over graphs at fixed parameters: with probability
/// one half propose toggling a uniformly chosen existing edge, otherwise a
/// uniformly chosen dyad. The proposal asymmetry correction keeps the
/// kernel in detailed balance with the ERGM likelihood.
pub struct GraphSampler {
    graph: Graph,
    theta: DVector<f64>,
    compiled: CompiledModel,
    common: Vec<u32>,
    accepted: u64,
    steps: u64,
}

impl GraphSampler {
    pub fn new(graph: Graph, model: &ModelSpec, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != model.d() {
            return Err(ErgmError::DimensionMismatch { expected: model.d(), actual: theta.len() });
        }
        let compiled = CompiledModel::compile(model, &graph)?;
        Ok(GraphSampler { graph, theta, compiled, common: Vec::new(), accepted: 0, steps: 0 })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Replaces the state with `g` (reusing buffers) and the parameter with
    /// `theta`; used by the exchange algorithm to restart auxiliary chains.
    pub fn reset(&mut self, g: &Graph, theta: &DVector<f64>) {
        self.graph.clone_from(g);
        self.theta.clone_from(theta);
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    fn uniform_dyad(&self, rng: &mut ChaCha8Rng) -> Dyad {
        let n = self.graph.n();
        loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                return Dyad::new(a, b).expect("distinct");
            }
        }
    }

    /// One Metropolis step; returns whether the proposal was accepted.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> bool {
        self.steps += 1;
        let m = self.graph.edge_count();
        let n_dyads = self.graph.dyad_count() as f64;
        let dyad = if m > 0 && rng.random::<f64>() < 0.5 {
            self.graph.edge_at(rng.random_range(0..m))
        } else {
            self.uniform_dyad(rng)
        };
        let present = self.graph.has_edge(dyad);
        let delta_dot =
            self.compiled.theta_dot_change(&self.graph, dyad, &self.theta, &mut self.common);
        let log_ratio = if present {
            // removal: forward mass 1/2 (1/m + 1/D), reverse adds from m-1 edges
            let q_fwd = 0.5 * (1.0 / m as f64 + 1.0 / n_dyads);
            let q_rev =
                if m == 1 { 1.0 / n_dyads } else { 0.5 / n_dyads };
            -delta_dot + q_rev.ln() - q_fwd.ln()
        } else {
            // addition: forward mass 1/2 (1/D) (or 1/D from the empty graph)
            let q_fwd = if m == 0 { 1.0 / n_dyads } else { 0.5 / n_dyads };
            let q_rev = 0.5 * (1.0 / (m + 1) as f64 + 1.0 / n_dyads);
            delta_dot + q_rev.ln() - q_fwd.ln()
        };
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            self.graph.toggle(dyad).expect("dyad in range");
            self.accepted += 1;
            true
        } else {
            false
        }
    }

    pub fn run(&mut self, steps: usize, rng: &mut ChaCha8Rng) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    /// Sufficient statistics of the current state.
    pub fn stats(&self) -> DVector<f64> {
        self.compiled.sufficient(&self.graph)
    }
}

/// One TNT step on a graph. Convenience wrapper that compiles the model per
/// call; use [`GraphSampler`] for long runs.
pub fn tnt_step(
    g: &mut Graph,
    theta: &DVector<f64>,
    model: &ModelSpec,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let mut sampler = GraphSampler::new(std::mem::replace(g, Graph::empty(1)), model, theta.clone())?;
    let accepted = sampler.step(rng);
    *g = sampler.graph;
    Ok(accepted)
}

/// Sufficient statistics of simulated graphs, with the edge count of each
/// simulated graph kept for degeneracy diagnostics.
#[derive(Debug, Clone)]
pub struct GraphSample {
    d: usize,
    rows: Vec<f64>,
    edge_counts: Vec<u32>,
    pub burn: usize,
    pub thinning: usize,
}

impl GraphSample {
    /// Wraps pre-computed statistic rows; used by tests and tools.
    pub fn from_rows(d: usize, rows: Vec<f64>, edge_counts: Vec<u32>) -> Self {
        assert_eq!(rows.len(), edge_counts.len() * d);
        GraphSample { d, rows, edge_counts, burn: 0, thinning: 1 }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edge_counts(&self) -> &[u32] {
        &self.edge_counts
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.d)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for row in self.rows() {
            for (a, &v) in m.iter_mut().zip(row.iter()) {
                *a += v;
            }
        }
        m / self.len().max(1) as f64
    }

    /// Sample covariance with denominator `N - 1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut acc = DMatrix::zeros(self.d, self.d);
        for row in self.rows() {
            for a in 0..self.d {
                for b in a..self.d {
                    acc[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        for a in 0..self.d {
            for b in 0..a {
                acc[(a, b)] = acc[(b, a)];
            }
        }
        acc / (self.len().max(2) - 1) as f64
    }
}

/// Simulates `draws` statistic vectors from the likelihood at `theta` by a
/// TNT chain started at the empty graph on `n` nodes: `burn` warm-up steps,
/// then one row per `thin` further steps.
pub fn simulate_stats(
    theta: &DVector<f64>,
    model: &ModelSpec,
    n: usize,
    burn: usize,
    draws: usize,
    thin: usize,
    seed: u64,
) -> Result<GraphSample> {
    simulate_stats_from(&Graph::empty(n), theta, model, burn, draws, thin, seed)
}

/// As [`simulate_stats`] but starting from a given graph.
pub fn simulate_stats_from(
    init: &Graph,
    theta: &DVector<f64>,
    model: &ModelSpec,
    burn: usize,
    draws: usize,
    thin: usize,
    seed: u64,
) -> Result<GraphSample> {
    let thin = thin.max(1);
    let mut rng = stream_rng(seed, streams::SIMULATE);
    let mut sampler = GraphSampler::new(init.clone(), model, theta.clone())?;
    sampler.run(burn, &mut rng);
    let d = model.d();
    let mut rows = Vec::with_capacity(draws * d);
    let mut edge_counts = Vec::with_capacity(draws);
    for _ in 0..draws {
        sampler.run(thin, &mut rng);
        rows.extend_from_slice(sampler.stats().as_slice());
        edge_counts.push(sampler.graph().edge_count() as u32);
    }
    Ok(GraphSample { d, rows, edge_counts, burn, thinning: thin })
}

/// The approximate exchange algorithm. Each iteration proposes
/// `theta' ~ N(theta, Sigma)`, simulates an auxiliary graph by `aux_iters`
/// TNT steps at `theta'` starting from the observed graph, and accepts with
/// the normalizer-free exchange ratio
/// `exp{(theta - theta')'(s(y') - s(y))} p(theta') / p(theta)`.
///
/// The recorded log-target column holds `theta's(y) + log p(theta)`, the
/// tractable part of the true log posterior.
#[allow(clippy::too_many_arguments)]
pub fn approximate_exchange(
    y: &Graph,
    model: &ModelSpec,
    prior: &GaussianPrior,
    proposal: &ProposalSpec,
    theta0: &DVector<f64>,
    iterations: usize,
    burn_in: usize,
    aux_iters: usize,
    seed: u64,
) -> Result<McmcChain> {
    if aux_iters == 0 {
        return Err(ErgmError::Parse("aux_iters must be at least 1".into()));
    }
    if theta0.len() != model.d() {
        return Err(ErgmError::DimensionMismatch { expected: model.d(), actual: theta0.len() });
    }
    let start = Instant::now();
    let s_obs = crate::statistics::sufficient_statistics(y, model)?;
    let mut rng = stream_rng(seed, streams::EXCHANGE);
    let mut aux_rng = stream_rng(seed, streams::EXCHANGE + 1);
    let mut sampler = GraphSampler::new(y.clone(), model, theta0.clone())?;
    let mut theta = theta0.clone();
    let mut lp = prior.log_density(&theta);
    if !lp.is_finite() {
        return Err(ErgmError::BadInitialState);
    }
    let mut chain = McmcChain::new(model.d(), burn_in.min(iterations), seed);
    for _ in 0..iterations {
        let cand = &theta + proposal.increment(&mut rng);
        let lp_cand = prior.log_density(&cand);
        if lp_cand.is_finite() {
            // fresh auxiliary chain from the observed graph at theta'
            sampler.reset(y, &cand);
            sampler.run(aux_iters, &mut aux_rng);
            let s_aux = sampler.stats();
            let log_ratio = (&theta - &cand).dot(&(&s_aux - &s_obs)) + lp_cand - lp;
            if rng.random::<f64>().ln() < log_ratio {
                theta = cand;
                lp = lp_cand;
                chain.accepted += 1;
            }
        }
        chain.push(&theta, theta.dot(&s_obs) + lp);
    }
    chain.wall_time = start.elapsed().as_secs_f64();
    Ok(chain)
}
