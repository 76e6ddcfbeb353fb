//! The log pseudolikelihood, its derivatives, the Gaussian prior, and mode
//! estimation.
//!
//! The pseudolikelihood is the product of the full conditional distributions
//! of the dyads, which is exactly the likelihood of a logistic regression of
//! the dyad states on the change statistics. Evaluations group identical
//! predictor rows up front: sparse graphs collapse hundreds of thousands of
//! dyads into a few dozen distinct rows, which makes a full posterior
//! evaluation per MCMC iteration essentially free.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{ErgmError, Result};
use crate::statistics::ChangeStatMatrix;

/// `log(1 + e^x)`, stable over the whole double range.
pub(crate) fn log1pexp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Branch-stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Clamp applied inside variance weights so `sigma * (1 - sigma)` never
/// underflows to exactly zero in Hessian accumulation.
const ETA_CLAMP: f64 = 36.0;

fn check_theta(theta: &DVector<f64>, d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(ErgmError::DimensionMismatch { expected: d, actual: theta.len() });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(ErgmError::NonFiniteParameter);
    }
    Ok(())
}

/// The log pseudolikelihood `sum_k [y_k eta_k - log(1 + e^eta_k)]` with
/// `eta_k = theta . delta_k`, evaluated row by row.
pub fn log_pl(theta: &DVector<f64>, csm: &ChangeStatMatrix) -> Result<f64> {
    check_theta(theta, csm.d())?;
    let mut acc = 0.0;
    for (row, y) in csm.rows() {
        let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        if y {
            acc += eta;
        }
        acc -= log1pexp(eta);
    }
    Ok(acc)
}

/// Gradient of [`log_pl`]: `sum_k (y_k - sigma(eta_k)) delta_k`.
pub fn grad_log_pl(theta: &DVector<f64>, csm: &ChangeStatMatrix) -> Result<DVector<f64>> {
    check_theta(theta, csm.d())?;
    let mut g = DVector::zeros(csm.d());
    for (row, y) in csm.rows() {
        let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let w = (y as u8 as f64) - sigmoid(eta);
        for (gi, &xi) in g.iter_mut().zip(row.iter()) {
            *gi += w * xi;
        }
    }
    Ok(g)
}

/// Hessian of [`log_pl`]: `-sum_k sigma(eta_k)(1 - sigma(eta_k)) delta_k
/// delta_k^T`; symmetric negative semi-definite.
pub fn hess_log_pl(theta: &DVector<f64>, csm: &ChangeStatMatrix) -> Result<DMatrix<f64>> {
    check_theta(theta, csm.d())?;
    let d = csm.d();
    let mut h = DMatrix::zeros(d, d);
    for (row, _) in csm.rows() {
        let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let s = sigmoid(eta.clamp(-ETA_CLAMP, ETA_CLAMP));
        let w = s * (1.0 - s);
        for a in 0..d {
            for b in a..d {
                h[(a, b)] -= w * row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    Ok(h)
}

/// Dyad rows grouped by identical change-statistic vectors.
///
/// Groups are ordered by their predictor bytes, so the layout is
/// deterministic regardless of construction order.
#[derive(Debug, Clone)]
pub struct LogisticData {
    d: usize,
    /// Group predictor rows, concatenated.
    xs: Vec<f64>,
    /// Per group: total dyad count and count of present dyads.
    counts: Vec<(f64, f64)>,
}

impl LogisticData {
    /// Groups the rows of a change-statistic matrix.
    pub fn from_csm(csm: &ChangeStatMatrix) -> Self {
        use std::collections::BTreeMap;
        let d = csm.d();
        let mut groups: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
        for (row, y) in csm.rows() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let e = groups.entry(key).or_insert((0.0, 0.0));
            e.0 += 1.0;
            e.1 += y as u8 as f64;
        }
        let mut xs = Vec::with_capacity(groups.len() * d);
        let mut counts = Vec::with_capacity(groups.len());
        for (key, c) in groups {
            xs.extend(key.iter().map(|b| f64::from_bits(*b)));
            counts.push(c);
        }
        LogisticData { d, xs, counts }
    }

    /// Builds grouped data directly; used by tests and tools that already
    /// hold aggregated rows. `counts` pairs are `(total, present)`.
    pub fn from_groups(d: usize, rows: &[f64], counts: Vec<(f64, f64)>) -> Self {
        assert_eq!(rows.len(), counts.len() * d);
        LogisticData { d, xs: rows.to_vec(), counts }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn group_count(&self) -> usize {
        self.counts.len()
    }

    /// Total dyad count `D`.
    pub fn total(&self) -> f64 {
        self.counts.iter().map(|c| c.0).sum()
    }

    /// True when the response contains both a present and an absent dyad.
    pub fn has_both_responses(&self) -> bool {
        let ones: f64 = self.counts.iter().map(|c| c.1).sum();
        ones > 0.0 && ones < self.total()
    }

    pub fn log_pl(&self, theta: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (k, &(n, n1)) in self.counts.iter().enumerate() {
            let row = &self.xs[k * self.d..(k + 1) * self.d];
            let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            acc += n1 * eta - n * log1pexp(eta);
        }
        acc
    }

    pub fn grad_log_pl(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.d);
        for (k, &(n, n1)) in self.counts.iter().enumerate() {
            let row = &self.xs[k * self.d..(k + 1) * self.d];
            let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let w = n1 - n * sigmoid(eta);
            for (gi, &xi) in g.iter_mut().zip(row.iter()) {
                *gi += w * xi;
            }
        }
        g
    }

    pub fn hess_log_pl(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d;
        let mut h = DMatrix::zeros(d, d);
        for (k, &(n, _)) in self.counts.iter().enumerate() {
            let row = &self.xs[k * d..(k + 1) * d];
            let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let s = sigmoid(eta.clamp(-ETA_CLAMP, ETA_CLAMP));
            let w = n * s * (1.0 - s);
            for a in 0..d {
                for b in a..d {
                    h[(a, b)] -= w * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }
}

/// A multivariate normal prior with dense SPD covariance.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det_cov: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(ErgmError::DimensionMismatch { expected: d, actual: covariance.nrows() });
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone())
            .ok_or_else(|| ErgmError::NotNegativeDefinite("prior covariance is not SPD".into()))?;
        let log_det_cov = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(GaussianPrior { mean, covariance: sym, precision, log_det_cov })
    }

    /// Zero-mean isotropic prior `N(0, var I_d)`.
    pub fn isotropic(d: usize, var: f64) -> Self {
        GaussianPrior::new(DVector::zeros(d), DMatrix::identity(d, d) * var)
            .expect("isotropic covariance is SPD")
    }

    /// The diffuse default `N(0_d, 30 I_d)`.
    pub fn diffuse(d: usize) -> Self {
        GaussianPrior::isotropic(d, 30.0)
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// The prior precision matrix `B_0 = covariance^-1`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Log density including the normalizing constant.
    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let q = theta - &self.mean;
        let quad = (&self.precision * &q).dot(&q);
        -0.5 * (self.d() as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det_cov + quad)
    }

    pub fn grad_log_density(&self, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.precision * (theta - &self.mean))
    }

    /// Hessian of the log density, `-covariance^-1`, independent of theta.
    pub fn hess_log_density(&self) -> DMatrix<f64> {
        -self.precision.clone()
    }
}

/// Log prior density (normalizing constant included).
pub fn log_prior(theta: &DVector<f64>, prior: &GaussianPrior) -> f64 {
    prior.log_density(theta)
}

pub fn grad_log_prior(theta: &DVector<f64>, prior: &GaussianPrior) -> DVector<f64> {
    prior.grad_log_density(theta)
}

pub fn hess_log_prior(prior: &GaussianPrior) -> DMatrix<f64> {
    prior.hess_log_density()
}

/// The pseudo-posterior surface: grouped pseudolikelihood data plus prior.
#[derive(Debug, Clone)]
pub struct PseudoPosteriorSurface {
    data: LogisticData,
    prior: GaussianPrior,
}

impl PseudoPosteriorSurface {
    pub fn new(csm: &ChangeStatMatrix, prior: GaussianPrior) -> Result<Self> {
        if prior.d() != csm.d() {
            return Err(ErgmError::DimensionMismatch { expected: csm.d(), actual: prior.d() });
        }
        Ok(PseudoPosteriorSurface { data: LogisticData::from_csm(csm), prior })
    }

    pub fn from_parts(data: LogisticData, prior: GaussianPrior) -> Result<Self> {
        if prior.d() != data.d() {
            return Err(ErgmError::DimensionMismatch { expected: data.d(), actual: prior.d() });
        }
        Ok(PseudoPosteriorSurface { data, prior })
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    pub fn data(&self) -> &LogisticData {
        &self.data
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    /// Unnormalized log pseudo-posterior `log p_PL(y|theta) + log p(theta)`.
    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        self.data.log_pl(theta) + self.prior.log_density(theta)
    }

    pub fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.data.grad_log_pl(theta) + self.prior.grad_log_density(theta)
    }

    pub fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.data.hess_log_pl(theta) + self.prior.hess_log_density()
    }
}

/// Result of a mode search.
#[derive(Debug, Clone)]
pub struct ModeFit {
    /// The located mode.
    pub theta: DVector<f64>,
    /// Analytic Hessian of the maximized objective at the mode: the bare
    /// pseudolikelihood Hessian for the MPLE, or the pseudo-posterior
    /// Hessian when a prior is supplied.
    pub hessian: DMatrix<f64>,
    /// Gradient sup-norm fell below tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// Options for [`mple`]; defaults match the crate-wide conventions.
#[derive(Debug, Clone)]
pub struct MpleOptions {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    /// Sup-norm bound beyond which the fit is declared separated.
    pub divergence_bound: f64,
    /// Starting point; zero when absent.
    pub start: Option<DVector<f64>>,
}

impl Default for MpleOptions {
    fn default() -> Self {
        MpleOptions {
            grad_tol: 1e-6,
            step_tol: 1e-8,
            max_iters: 500,
            divergence_bound: 50.0,
            start: None,
        }
    }
}

/// Maximizes the log pseudolikelihood (plus the log prior when one is
/// supplied) with BFGS on exact gradients, starting from zero.
///
/// Without a prior this is the MPLE; with a prior it is the pseudo-posterior
/// mode, and the returned Hessian includes the prior term.
pub fn mple(
    csm: &ChangeStatMatrix,
    prior: Option<&GaussianPrior>,
) -> Result<ModeFit> {
    mple_on(&LogisticData::from_csm(csm), prior, &MpleOptions::default())
}

/// As [`mple`] but over pre-grouped data with explicit options.
pub fn mple_on(
    data: &LogisticData,
    prior: Option<&GaussianPrior>,
    opts: &MpleOptions,
) -> Result<ModeFit> {
    if !data.has_both_responses() {
        return Err(ErgmError::Separation { bound: opts.divergence_bound });
    }
    let d = data.d();
    let objective = |theta: &DVector<f64>| -> (f64, DVector<f64>) {
        let mut f = data.log_pl(theta);
        let mut g = data.grad_log_pl(theta);
        if let Some(p) = prior {
            f += p.log_density(theta);
            g += p.grad_log_density(theta);
        }
        (f, g)
    };

    let mut theta = opts.start.clone().unwrap_or_else(|| DVector::zeros(d));
    if theta.len() != d {
        return Err(ErgmError::DimensionMismatch { expected: d, actual: theta.len() });
    }
    let (mut f, mut g) = objective(&theta);
    let mut inv_b = DMatrix::<f64>::identity(d, d);
    let mut converged = g.amax() < opts.grad_tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut dir = &inv_b * &g;
        if dir.dot(&g) <= 0.0 {
            // curvature estimate unusable; fall back to steepest ascent
            inv_b = DMatrix::identity(d, d);
            dir = g.clone();
        }
        // backtracking line search on the ascent direction
        let slope = dir.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &theta + &dir * alpha;
            let (fc, gc) = objective(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * alpha * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break; // line search stalled; report current point
        };
        let s = &cand - &theta;
        let yv = &gc - &g;
        theta = cand;
        f = fc;
        g = gc;
        if theta.amax() > opts.divergence_bound {
            return Err(ErgmError::Separation { bound: opts.divergence_bound });
        }
        // inverse-Hessian update for the minimization of -f: with
        // s = step and y = -(g_new - g_old), the standard BFGS form
        // requires s'y > 0, i.e. s'(g_old - g_new) > 0 here.
        let sy = -s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let sy_t = &s * (-&yv).transpose();
            let ident = DMatrix::<f64>::identity(d, d);
            let left = &ident - &sy_t * rho;
            inv_b = &left * &inv_b * left.transpose() + &s * s.transpose() * rho;
        }
        if g.amax() < opts.grad_tol {
            converged = true;
        } else if s.amax() < opts.step_tol {
            break;
        }
    }

    if !converged && iterations >= opts.max_iters {
        return Err(ErgmError::NonConvergence { max_iters: opts.max_iters, grad_norm: g.amax() });
    }
    let mut hessian = data.hess_log_pl(&theta);
    if let Some(p) = prior {
        hessian += p.hess_log_density();
    }
    Ok(ModeFit { theta, hessian, converged, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Dyad, Graph};
    use crate::statistics::{change_stat_matrix, ModelSpec};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::empty(n);
        let dyads: Vec<Dyad> = g.dyads().collect();
        for d in dyads {
            if rng.random::<f64>() < p {
                g.toggle(d).unwrap();
            }
        }
        g
    }

    fn random_theta(d: usize, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_iterator(d, (0..d).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale))
    }

    #[test]
    fn zero_theta_gives_uniform_bernoulli() {
        let g = random_graph(6, 0.5, 1);
        let m = ModelSpec::parse(&["edges", "triangles"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let v = log_pl(&DVector::zeros(2), &csm).unwrap();
        assert_abs_diff_eq!(v, -(csm.len() as f64) * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn single_edges_term_closed_form() {
        let g = Graph::empty(3);
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let theta = DVector::from_element(1, -1.0);
        let v = log_pl(&theta, &csm).unwrap();
        assert_abs_diff_eq!(v, 3.0 * -(1.0f64 + (-1.0f64).exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_pl_is_nonpositive_and_matches_grouped_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for seed in 0..8u64 {
            let g = random_graph(7, 0.4, seed);
            let m = ModelSpec::parse(&["edges", "kstar{k=2}", "triangles"]).unwrap();
            let csm = change_stat_matrix(&g, &m).unwrap();
            let data = LogisticData::from_csm(&csm);
            let theta = random_theta(3, 2.0, &mut rng);
            let direct = log_pl(&theta, &csm).unwrap();
            assert!(direct <= 0.0);
            assert_abs_diff_eq!(direct, data.log_pl(&theta), epsilon = 1e-9);
            let gd = grad_log_pl(&theta, &csm).unwrap();
            let gg = data.grad_log_pl(&theta);
            for t in 0..3 {
                assert_abs_diff_eq!(gd[t], gg[t], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for rep in 0..20u64 {
            let g = random_graph(5 + (rep % 6) as usize, 0.45, rep);
            let m = ModelSpec::parse(&["edges", "kstar{k=2}", "triangles"]).unwrap();
            let csm = change_stat_matrix(&g, &m).unwrap();
            let theta = random_theta(3, 1.5, &mut rng);
            let grad = grad_log_pl(&theta, &csm).unwrap();
            let h = 1e-5;
            for t in 0..3 {
                let mut up = theta.clone();
                up[t] += h;
                let mut dn = theta.clone();
                dn[t] -= h;
                let fd = (log_pl(&up, &csm).unwrap() - log_pl(&dn, &csm).unwrap()) / (2.0 * h);
                let denom = grad[t].abs().max(1.0);
                assert!(
                    (grad[t] - fd).abs() / denom < 1e-6,
                    "grad mismatch: {} vs {}",
                    grad[t],
                    fd
                );
            }
        }
    }

    #[test]
    fn hessian_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for rep in 0..10u64 {
            let g = random_graph(6, 0.5, rep + 100);
            let m = ModelSpec::parse(&["edges", "triangles"]).unwrap();
            let csm = change_stat_matrix(&g, &m).unwrap();
            let theta = random_theta(2, 1.0, &mut rng);
            let hess = hess_log_pl(&theta, &csm).unwrap();
            let h = 1e-5;
            for t in 0..2 {
                let mut up = theta.clone();
                up[t] += h;
                let mut dn = theta.clone();
                dn[t] -= h;
                let gu = grad_log_pl(&up, &csm).unwrap();
                let gd = grad_log_pl(&dn, &csm).unwrap();
                for s in 0..2 {
                    let fd = (gu[s] - gd[s]) / (2.0 * h);
                    let denom = hess[(s, t)].abs().max(1.0);
                    assert!((hess[(s, t)] - fd).abs() / denom < 1e-4);
                }
            }
        }
    }

    #[test]
    fn theta_zero_gradient_formula() {
        let g = random_graph(6, 0.5, 3);
        let m = ModelSpec::parse(&["edges", "triangles"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let grad = grad_log_pl(&DVector::zeros(2), &csm).unwrap();
        let mut expect = DVector::zeros(2);
        for (row, y) in csm.rows() {
            let w = (y as u8 as f64) - 0.5;
            for t in 0..2 {
                expect[t] += w * row[t];
            }
        }
        assert_abs_diff_eq!(grad[0], expect[0], epsilon = 1e-12);
        assert_abs_diff_eq!(grad[1], expect[1], epsilon = 1e-12);
    }

    #[test]
    fn hessian_is_negative_semidefinite() {
        let g = random_graph(7, 0.45, 21);
        let m = ModelSpec::parse(&["edges", "kstar{k=2}"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let h = hess_log_pl(&DVector::from_vec(vec![0.3, -0.2]), &csm).unwrap();
        let eig = h.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l <= 1e-10));
    }

    #[test]
    fn non_finite_theta_is_domain_error() {
        let g = Graph::empty(3);
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let theta = DVector::from_element(1, f64::NAN);
        assert!(matches!(log_pl(&theta, &csm), Err(ErgmError::NonFiniteParameter)));
    }

    #[test]
    fn prior_basics() {
        let p = GaussianPrior::diffuse(2);
        let at_mean = p.log_density(&DVector::zeros(2));
        let off = p.log_density(&DVector::from_vec(vec![0.5, -0.7]));
        assert!(at_mean > off);
        let g = p.grad_log_density(&DVector::from_vec(vec![3.0, 0.0]));
        assert_abs_diff_eq!(g[0], -0.1, epsilon = 1e-12);
        let h = p.hess_log_density();
        assert_abs_diff_eq!(h[(0, 0)], -1.0 / 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn prior_rejects_non_spd_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianPrior::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn intercept_only_mple_is_logit_density() {
        let g = random_graph(10, 0.35, 4);
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let fit = mple(&csm, None).unwrap();
        assert!(fit.converged);
        let e = g.edge_count() as f64;
        let dd = g.dyad_count() as f64;
        let logit = (e / dd / (1.0 - e / dd)).ln();
        assert_abs_diff_eq!(fit.theta[0], logit, epsilon = 1e-6);
    }

    #[test]
    fn mple_gradient_small_at_mode() {
        let g = random_graph(9, 0.4, 8);
        let m = ModelSpec::parse(&["edges", "triangles"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let prior = GaussianPrior::diffuse(2);
        let fit = mple(&csm, Some(&prior)).unwrap();
        assert!(fit.converged);
        let g1 = grad_log_pl(&fit.theta, &csm).unwrap() + prior.grad_log_density(&fit.theta);
        assert!(g1.amax() < 1e-6);
        // posterior Hessian negative definite
        let eig = fit.hessian.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l < 0.0));
    }

    #[test]
    fn mple_with_prior_is_unique_from_restarts() {
        // strict concavity: BFGS from scattered starts lands on one mode
        let g = random_graph(8, 0.45, 15);
        let m = ModelSpec::parse(&["edges", "kstar{k=2}"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let data = LogisticData::from_csm(&csm);
        let prior = GaussianPrior::diffuse(2);
        let reference = mple(&csm, Some(&prior)).unwrap().theta;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let opts =
                MpleOptions { start: Some(random_theta(2, 3.0, &mut rng)), ..Default::default() };
            let fit = mple_on(&data, Some(&prior), &opts).unwrap();
            assert!(fit.converged);
            assert!((fit.theta - &reference).amax() < 1e-5);
        }
    }

    #[test]
    fn degenerate_response_is_separation_error() {
        let g = Graph::empty(4);
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        assert!(matches!(mple(&csm, None), Err(ErgmError::Separation { .. })));
    }

    #[test]
    fn prior_shrinks_toward_zero() {
        let g = random_graph(9, 0.3, 30);
        let m = ModelSpec::parse(&["edges", "triangles"]).unwrap();
        let csm = change_stat_matrix(&g, &m).unwrap();
        let bare = mple(&csm, None).unwrap().theta;
        let with = mple(&csm, Some(&GaussianPrior::diffuse(2))).unwrap().theta;
        assert!(with.norm() <= bare.norm() + 1e-9);
    }
}
