//! Mode and curvature correction of pseudo-posterior draws.
//!
//! The true posterior mode is found by Robbins–Monro stochastic
//! approximation on the noisy log-posterior gradient
//! `s(y) - mean s(y'_i) + grad log p(theta)`, with the expectation estimated
//! from TNT simulations at the current parameter. The curvature at the mode
//! is the Monte Carlo estimate `-V[s(y)] + H log p`. An affine map
//! `g(theta) = W theta + lambda` then aligns the pseudo-posterior mode and
//! curvature with the true ones, and pseudo-posterior draws are corrected by
//! applying `g^-1` row by row.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{ErgmError, Result};
use crate::graph::Graph;
use crate::pseudolikelihood::{GaussianPrior, PseudoPosteriorSurface};
use crate::rng::{stream_rng, streams};
use crate::samplers::{GraphSample, GraphSampler, LogTarget, McmcChain};
use crate::statistics::{sufficient_statistics, ModelSpec};

/// Settings for the Robbins–Monro MAP search. The step sequence is
/// `eps_i = alpha / i`, which satisfies the divergent-sum /
/// square-summable conditions.
#[derive(Debug, Clone)]
pub struct RobbinsMonroConfig {
    /// Step scale `alpha`.
    pub alpha: f64,
    /// Convergence tolerance on the sup-norm of successive iterates.
    pub tol: f64,
    /// Consecutive small steps required before declaring convergence.
    pub persistence: usize,
    pub max_iters: usize,
    /// Graphs per gradient estimate.
    pub n_sims: usize,
    /// TNT warm-up steps before the first recorded graph of an iteration.
    pub sim_burn: usize,
    /// TNT steps between recorded graphs.
    pub sim_thin: usize,
}

impl Default for RobbinsMonroConfig {
    fn default() -> Self {
        RobbinsMonroConfig {
            alpha: 0.001,
            tol: 1e-3,
            persistence: 5,
            max_iters: 5000,
            n_sims: 400,
            sim_burn: 1000,
            sim_thin: 30,
        }
    }
}

/// Density above which a simulated graph counts as saturated.
const SATURATION_DENSITY: f64 = 0.9;
/// Graphs this small can hit the empty graph legitimately, so emptiness is
/// only treated as saturation above this dyad count.
const EMPTY_GUARD_DYADS: usize = 30;

/// The noisy log-posterior gradient
/// `s(y) - (1/N) sum_i s(y'_i) + grad log p(theta)`.
pub fn noisy_grad_log_post(
    theta: &DVector<f64>,
    observed_stats: &DVector<f64>,
    sample: &GraphSample,
    prior: &GaussianPrior,
) -> Result<DVector<f64>> {
    let d = observed_stats.len();
    if sample.d() != d || theta.len() != d || prior.d() != d {
        return Err(ErgmError::DimensionMismatch { expected: d, actual: sample.d() });
    }
    if sample.is_empty() {
        return Err(ErgmError::InsufficientSample { need: 1, got: 0 });
    }
    Ok(observed_stats - sample.mean() + prior.grad_log_density(theta))
}

/// Outcome of the Robbins–Monro run.
#[derive(Debug, Clone)]
pub struct RmResult {
    /// The final iterate, taken as the true-posterior MAP estimate.
    pub theta_star: DVector<f64>,
    pub iterations: usize,
    /// `theta_0, theta_1, ...` for audit.
    pub trajectory: Vec<DVector<f64>>,
    /// False when the iteration cap was reached before the tolerance.
    pub converged: bool,
    /// More than 90% of the first iteration's simulated graphs were dense:
    /// the starting point sits in a degenerate region.
    pub start_in_degenerate_region: bool,
}

/// Robbins–Monro stochastic approximation to the true posterior MAP,
/// simulating `cfg.n_sims` graphs from the likelihood per iteration (one
/// TNT chain per iteration, started at the observed graph).
pub fn robbins_monro_map(
    theta0: &DVector<f64>,
    cfg: &RobbinsMonroConfig,
    y: &Graph,
    model: &ModelSpec,
    prior: &GaussianPrior,
    seed: u64,
) -> Result<RmResult> {
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(ErgmError::NonFiniteParameter);
    }
    let s_obs = sufficient_statistics(y, model)?;
    let mut rng = stream_rng(seed, streams::ROBBINS_MONRO);
    let mut sampler = GraphSampler::new(y.clone(), model, theta0.clone())?;
    let n_dyads = y.dyad_count();
    let mut theta = theta0.clone();
    let mut trajectory = vec![theta.clone()];
    let mut small_steps = 0usize;
    let mut saturated_iters = 0usize;
    let mut start_in_degenerate_region = false;
    let mut converged = false;
    let mut iterations = 0usize;

    while iterations < cfg.max_iters {
        iterations += 1;
        sampler.reset(y, &theta);
        sampler.run(cfg.sim_burn, &mut rng);
        let mut mean = DVector::zeros(model.d());
        let mut saturated_draws = 0usize;
        for _ in 0..cfg.n_sims {
            sampler.run(cfg.sim_thin.max(1), &mut rng);
            mean += sampler.stats();
            let e = sampler.graph().edge_count();
            let dense = e as f64 / n_dyads as f64 >= SATURATION_DENSITY;
            if dense || (e == 0 && n_dyads > EMPTY_GUARD_DYADS) {
                saturated_draws += 1;
            }
        }
        mean /= cfg.n_sims as f64;
        if 2 * saturated_draws > cfg.n_sims {
            saturated_iters += 1;
        }
        if iterations == 1 && 10 * saturated_draws > 9 * cfg.n_sims {
            start_in_degenerate_region = true;
        }
        if iterations >= 10 && 2 * saturated_iters > iterations {
            return Err(ErgmError::DegenerateSimulation);
        }
        let grad = &s_obs - &mean + prior.grad_log_density(&theta);
        let eps = cfg.alpha / iterations as f64;
        let step = grad * eps;
        theta += &step;
        trajectory.push(theta.clone());
        if step.amax() < cfg.tol {
            small_steps += 1;
            if small_steps >= cfg.persistence {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    Ok(RmResult {
        theta_star: theta,
        iterations,
        trajectory,
        converged,
        start_in_degenerate_region,
    })
}

/// Monte Carlo estimate of the true log-posterior Hessian at `theta_star`:
/// `-V[s(y)] + H log p`, from graphs simulated at `theta_star`.
pub fn estimate_true_hessian(
    sample: &GraphSample,
    prior: &GaussianPrior,
) -> Result<DMatrix<f64>> {
    let d = prior.d();
    if sample.d() != d {
        return Err(ErgmError::DimensionMismatch { expected: d, actual: sample.d() });
    }
    if sample.len() < d + 1 {
        return Err(ErgmError::InsufficientSample { need: d + 1, got: sample.len() });
    }
    let h = -sample.covariance() + prior.hess_log_density();
    let h = (&h + h.transpose()) * 0.5;
    if Cholesky::new(-h.clone()).is_none() {
        return Err(ErgmError::CalibrationInfeasible(
            "estimated Hessian is not negative definite; increase the simulation budget".into(),
        ));
    }
    Ok(h)
}

/// The affine correction `g(theta) = W theta + lambda` together with the
/// quantities that define it.
#[derive(Debug, Clone)]
pub struct CalibrationMap {
    pub theta_star: DVector<f64>,
    pub theta_pl: DVector<f64>,
    pub h_star: DMatrix<f64>,
    pub h_pl: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// `V = W^-1`.
    pub v: DMatrix<f64>,
    pub lambda: DVector<f64>,
    log_det_w: f64,
}

impl CalibrationMap {
    pub fn d(&self) -> usize {
        self.theta_star.len()
    }

    pub fn log_det_w(&self) -> f64 {
        self.log_det_w
    }

    /// `g(theta) = W theta + lambda`; maps `theta_star` to `theta_pl`.
    pub fn apply(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.w * theta + &self.lambda
    }

    /// `g^-1(theta) = V theta + (theta_star - V theta_pl)`.
    pub fn invert(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.v * (theta - &self.theta_pl) + &self.theta_star
    }

    /// Serializes every defining quantity at full precision.
    pub fn write_text<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.d();
        writeln!(out, "# affine calibration map g(theta) = W theta + lambda")?;
        writeln!(out, "d {d}")?;
        let vecs: [(&str, &DVector<f64>); 3] =
            [("theta_star", &self.theta_star), ("theta_pl", &self.theta_pl), ("lambda", &self.lambda)];
        for (name, v) in vecs {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(out, "{name} {}", vals.join(" "))?;
        }
        let mats: [(&str, &DMatrix<f64>); 4] =
            [("h_star", &self.h_star), ("h_pl", &self.h_pl), ("w", &self.w), ("v", &self.v)];
        for (name, m) in mats {
            for r in 0..d {
                let vals: Vec<String> = (0..d).map(|c| format!("{:.17e}", m[(r, c)])).collect();
                writeln!(out, "{name} {}", vals.join(" "))?;
            }
        }
        Ok(())
    }

    /// Reads a map written by [`write_text`](Self::write_text).
    pub fn read_text<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut d = 0usize;
        let mut vecs: std::collections::HashMap<String, Vec<f64>> = Default::default();
        let mut mats: std::collections::HashMap<String, Vec<f64>> = Default::default();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut parts = t.split_whitespace();
            let tag = parts.next().unwrap();
            if tag == "d" {
                d = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| ErgmError::Parse("bad dimension line".into()))?;
                continue;
            }
            let vals: Vec<f64> = parts
                .map(|s| s.parse().map_err(|_| ErgmError::Parse(format!("bad float `{s}`"))))
                .collect::<Result<_>>()?;
            match tag {
                "theta_star" | "theta_pl" | "lambda" => {
                    vecs.insert(tag.to_string(), vals);
                }
                "h_star" | "h_pl" | "w" | "v" => {
                    mats.entry(tag.to_string()).or_default().extend(vals);
                }
                other => return Err(ErgmError::Parse(format!("unknown tag `{other}`"))),
            }
        }
        let getv = |k: &str| -> Result<DVector<f64>> {
            vecs.get(k)
                .filter(|v| v.len() == d)
                .map(|v| DVector::from_vec(v.clone()))
                .ok_or_else(|| ErgmError::Parse(format!("missing vector `{k}`")))
        };
        let getm = |k: &str| -> Result<DMatrix<f64>> {
            mats.get(k)
                .filter(|v| v.len() == d * d)
                .map(|v| DMatrix::from_row_slice(d, d, v))
                .ok_or_else(|| ErgmError::Parse(format!("missing matrix `{k}`")))
        };
        let w = getm("w")?;
        let log_det_w = w.determinant().abs().ln();
        Ok(CalibrationMap {
            theta_star: getv("theta_star")?,
            theta_pl: getv("theta_pl")?,
            h_star: getm("h_star")?,
            h_pl: getm("h_pl")?,
            w,
            v: getm("v")?,
            lambda: getv("lambda")?,
            log_det_w,
        })
    }
}

/// Upper-triangular Cholesky factor with positive diagonal of `-h`.
fn upper_factor(h: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let neg = -(h.clone());
    let chol = Cholesky::new(neg)
        .ok_or_else(|| ErgmError::NotNegativeDefinite(format!("{what} has no Cholesky factor")))?;
    Ok(chol.l().transpose())
}

/// Builds the affine map from the two modes and curvatures: with
/// `-H* = N'N` and `-H_PL = M'M`, `W = M^-1 N` and `lambda = theta_pl -
/// W theta_star`, so that `g` carries the true mode onto the pseudo mode
/// and `W' H_PL W = H*`.
pub fn build_map(
    theta_star: &DVector<f64>,
    h_star: &DMatrix<f64>,
    theta_pl: &DVector<f64>,
    h_pl: &DMatrix<f64>,
) -> Result<CalibrationMap> {
    let d = theta_star.len();
    if theta_pl.len() != d || h_star.nrows() != d || h_pl.nrows() != d {
        return Err(ErgmError::DimensionMismatch { expected: d, actual: theta_pl.len() });
    }
    let n_upper = upper_factor(h_star, "H*")?;
    let m_upper = upper_factor(h_pl, "H_PL")?;
    let w = m_upper
        .clone()
        .solve_upper_triangular(&n_upper)
        .ok_or_else(|| ErgmError::NotNegativeDefinite("singular Cholesky factor".into()))?;
    let v = n_upper
        .clone()
        .solve_upper_triangular(&m_upper)
        .ok_or_else(|| ErgmError::NotNegativeDefinite("singular Cholesky factor".into()))?;
    let lambda = theta_pl - &w * theta_star;
    // det W = prod diag(N) / prod diag(M) > 0 by the positive-diagonal
    // convention
    let log_det_w = (0..d).map(|k| n_upper[(k, k)].ln() - m_upper[(k, k)].ln()).sum();
    let map = CalibrationMap {
        theta_star: theta_star.clone(),
        theta_pl: theta_pl.clone(),
        h_star: h_star.clone(),
        h_pl: h_pl.clone(),
        w,
        v,
        lambda,
        log_det_w,
    };
    let residual = (map.w.transpose() * h_pl * &map.w) - h_star;
    let rel = residual.norm() / h_star.norm();
    if rel >= 1e-10 {
        return Err(ErgmError::CalibrationInfeasible(format!(
            "curvature condition violated: relative residual {rel:.3e}"
        )));
    }
    Ok(map)
}

/// Applies `g^-1` to every draw of a pseudo-posterior chain so that the
/// result is distributed under the calibrated target. Acceptance, burn-in
/// and timing metadata are preserved; each log-target value gains the
/// constant `log |det W|`.
pub fn correct_sample(chain: &McmcChain, map: &CalibrationMap) -> McmcChain {
    let mut out = McmcChain::new(chain.d(), chain.burn_in, chain.seed);
    out.accepted = chain.accepted;
    out.wall_time = chain.wall_time;
    let mut theta = DVector::zeros(chain.d());
    for t in 0..chain.len() {
        theta.copy_from_slice(chain.row(t));
        let corrected = map.invert(&theta);
        out.push(&corrected, chain.log_target(t) + map.log_det_w());
    }
    out
}

/// Log density of the fully calibrated pseudo-posterior,
/// `log |det W| + log pi_PL(g(theta) | y)`, up to the pseudo-posterior's
/// normalizing constant.
pub fn calibrated_log_density(
    theta: &DVector<f64>,
    surface: &PseudoPosteriorSurface,
    map: &CalibrationMap,
) -> f64 {
    map.log_det_w() + surface.log_density(&map.apply(theta))
}

/// The calibrated pseudo-posterior as a sampling target, for drawing from
/// the corrected distribution directly rather than post-processing a chain.
pub struct CalibratedSurface<'a> {
    pub surface: &'a PseudoPosteriorSurface,
    pub map: &'a CalibrationMap,
}

impl LogTarget for CalibratedSurface<'_> {
    fn dim(&self) -> usize {
        self.surface.d()
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        calibrated_log_density(theta, self.surface, self.map)
    }
}
