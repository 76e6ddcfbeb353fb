//! Chain and distribution diagnostics: effective sample size, efficiency
//! ratios, binned total-variation distance, posterior summaries, and the
//! posterior-predictive degeneracy check.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{ErgmError, Result};
use crate::graph::Graph;
use crate::rng::{stream_rng, streams};
use crate::samplers::{GraphSampler, McmcChain};
use crate::statistics::ModelSpec;

/// Effective sample size `T / (1 + 2 sum rho_k)` with autocovariances
/// truncated by Geyer's initial positive sequence rule; the result is
/// clipped to `(0, T]`.
pub fn ess(series: &[f64]) -> Result<f64> {
    let t = series.len();
    if t < 10 {
        return Err(ErgmError::UndefinedEss(format!("series too short ({t} < 10)")));
    }
    let tf = t as f64;
    let mean = series.iter().sum::<f64>() / tf;
    let gamma = |k: usize| -> f64 {
        series[..t - k]
            .iter()
            .zip(&series[k..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / tf
    };
    let g0 = gamma(0);
    if g0 <= 0.0 || !g0.is_finite() {
        return Err(ErgmError::UndefinedEss("zero or non-finite variance".into()));
    }
    // paired-sum truncation: collect Gamma_m = gamma_{2m} + gamma_{2m+1}
    // while positive, then enforce monotone decrease before summing
    let mut pairs = Vec::new();
    let mut m = 0usize;
    loop {
        let k0 = 2 * m;
        let k1 = 2 * m + 1;
        if k1 >= t {
            break;
        }
        let pair = gamma(k0) + gamma(k1);
        if pair <= 0.0 {
            break;
        }
        pairs.push(pair);
        m += 1;
    }
    let mut cap = f64::INFINITY;
    let mut tau = -1.0;
    for pair in pairs {
        cap = cap.min(pair);
        tau += 2.0 * cap / g0;
    }
    Ok((tf / tau.max(f64::MIN_POSITIVE)).min(tf))
}

/// Grid settings for the binned total-variation estimate: cell counts per
/// axis and the relative padding applied around the union bounding box.
#[derive(Debug, Clone)]
pub struct TvGrid {
    pub nx: usize,
    pub ny: usize,
    pub pad: f64,
}

impl Default for TvGrid {
    fn default() -> Self {
        TvGrid { nx: 100, ny: 100, pad: 0.05 }
    }
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points {
        xr = (xr.0.min(x), xr.1.max(x));
        yr = (yr.0.min(y), yr.1.max(y));
    }
    (xr, yr)
}

fn pad_range(r: (f64, f64), pad: f64) -> (f64, f64) {
    let width = (r.1 - r.0).max(1e-12);
    (r.0 - pad * width, r.1 + pad * width)
}

fn histogram_2d(sample: &[(f64, f64)], xr: (f64, f64), yr: (f64, f64), grid: &TvGrid) -> Vec<f64> {
    let mut cells = vec![0.0; grid.nx * grid.ny];
    let wx = (xr.1 - xr.0) / grid.nx as f64;
    let wy = (yr.1 - yr.0) / grid.ny as f64;
    for &(x, y) in sample {
        let cx = (((x - xr.0) / wx) as usize).min(grid.nx - 1);
        let cy = (((y - yr.0) / wy) as usize).min(grid.ny - 1);
        cells[cy * grid.nx + cx] += 1.0;
    }
    let total: f64 = cells.iter().sum();
    if total > 0.0 {
        for c in &mut cells {
            *c /= total;
        }
    }
    cells
}

/// Binned total-variation distance between two 2-d samples: both are
/// histogrammed on a shared grid covering their union bounding box and the
/// normalized cell frequencies are compared, `TV = 1/2 sum |f - g|`.
pub fn tv_distance_2d(a: &[(f64, f64)], b: &[(f64, f64)], grid: &TvGrid) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(ErgmError::InsufficientSample { need: 1, got: 0 });
    }
    let (xr, yr) = bounds(a.iter().chain(b.iter()).copied());
    let xr = pad_range(xr, grid.pad);
    let yr = pad_range(yr, grid.pad);
    let fa = histogram_2d(a, xr, yr, grid);
    let fb = histogram_2d(b, xr, yr, grid);
    Ok(fa.iter().zip(&fb).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0)
}

/// Extracts two parameter columns of a chain as 2-d points.
pub fn chain_points(chain: &McmcChain, cols: (usize, usize)) -> Result<Vec<(f64, f64)>> {
    if chain.d() != 2 && (cols.0.max(cols.1) >= chain.d()) {
        return Err(ErgmError::UnsupportedDimension { expected: 2, actual: chain.d() });
    }
    Ok(chain.retained().map(|row| (row[cols.0], row[cols.1])).collect())
}

/// TV distance between the joint samples of two 2-d chains.
pub fn tv_between_chains(a: &McmcChain, b: &McmcChain, grid: &TvGrid) -> Result<f64> {
    if a.d() != 2 || b.d() != 2 {
        return Err(ErgmError::UnsupportedDimension { expected: 2, actual: a.d().max(b.d()) });
    }
    tv_distance_2d(&chain_points(a, (0, 1))?, &chain_points(b, (0, 1))?, grid)
}

/// `ER = min ESS / CPU seconds`.
pub fn efficiency_ratio(min_ess: f64, cpu_seconds: f64) -> f64 {
    assert!(cpu_seconds > 0.0, "CPU time must be positive");
    min_ess / cpu_seconds
}

/// `RE = ER / ER_baseline`.
pub fn relative_efficiency(er: f64, er_baseline: f64) -> f64 {
    assert!(er_baseline > 0.0, "baseline ER must be positive");
    er / er_baseline
}

/// Per-parameter posterior summary of a chain.
#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub ess: Vec<f64>,
    pub min_ess: f64,
    pub acceptance_rate: f64,
    pub wall_time: f64,
}

/// Builds the summary over the retained draws of a chain.
pub fn summarize(chain: &McmcChain, labels: &[String]) -> Result<SummaryTable> {
    if labels.len() != chain.d() {
        return Err(ErgmError::DimensionMismatch { expected: chain.d(), actual: labels.len() });
    }
    let mean = chain.mean();
    let sd = chain.sd();
    let mut ess_all = Vec::with_capacity(chain.d());
    for t in 0..chain.d() {
        ess_all.push(ess(&chain.param_series(t))?);
    }
    let min_ess = ess_all.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SummaryTable {
        labels: labels.to_vec(),
        mean: mean.iter().copied().collect(),
        sd: sd.iter().copied().collect(),
        ess: ess_all,
        min_ess,
        acceptance_rate: chain.acceptance_rate(),
        wall_time: chain.wall_time,
    })
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>12} {:>12} {:>10}", "parameter", "mean", "sd", "ESS")?;
        for t in 0..self.labels.len() {
            writeln!(
                f,
                "{:<24} {:>12.4} {:>12.4} {:>10.0}",
                self.labels[t], self.mean[t], self.sd[t], self.ess[t]
            )?;
        }
        writeln!(f, "acceptance rate: {:.3}", self.acceptance_rate)?;
        writeln!(f, "min ESS: {:.0}", self.min_ess)?;
        write!(f, "wall time: {:.2}s", self.wall_time)
    }
}

/// Settings for the posterior-predictive degeneracy check.
#[derive(Debug, Clone)]
pub struct DegeneracyConfig {
    /// Parameter draws taken (evenly spaced) from the retained chain.
    pub subsample: usize,
    /// Simulated graphs per parameter draw.
    pub draws_per_theta: usize,
    /// TNT steps before the first recorded graph of each draw.
    pub sim_burn: usize,
    /// TNT steps between recorded graphs.
    pub sim_thin: usize,
    /// A graph above this density counts as degenerate.
    pub density_threshold: f64,
    /// Flag raised when more than this fraction of graphs is degenerate.
    pub flag_fraction: f64,
}

impl Default for DegeneracyConfig {
    fn default() -> Self {
        DegeneracyConfig {
            subsample: 600,
            draws_per_theta: 1,
            sim_burn: 1000,
            sim_thin: 30,
            density_threshold: 0.9,
            flag_fraction: 0.1,
        }
    }
}

/// Posterior-predictive edge-count distribution and degeneracy flag.
#[derive(Debug, Clone)]
pub struct DegeneracyReport {
    /// Edge count of every simulated graph.
    pub edge_counts: Vec<u32>,
    pub observed_edges: usize,
    /// Fraction of simulated graphs above the density threshold.
    pub dense_fraction: f64,
    pub flag: bool,
}

/// Simulates networks from the likelihood at parameters subsampled from a
/// chain and reports the edge-count distribution. The flag is raised when
/// more than `flag_fraction` of the simulated graphs exceed
/// `density_threshold`.
pub fn degeneracy_check(
    chain: &McmcChain,
    model: &ModelSpec,
    observed: &Graph,
    cfg: &DegeneracyConfig,
    seed: u64,
) -> Result<DegeneracyReport> {
    let retained = chain.retained_len();
    if retained == 0 {
        return Err(ErgmError::InsufficientSample { need: 1, got: 0 });
    }
    let k = cfg.subsample.min(retained).max(1);
    let mut sampler =
        GraphSampler::new(observed.clone(), model, DVector::zeros(chain.d()))?;
    let mut edge_counts = Vec::with_capacity(k * cfg.draws_per_theta);
    let n_dyads = observed.dyad_count() as f64;
    let mut dense = 0usize;
    for rep in 0..k {
        let idx = rep * retained / k;
        let theta = DVector::from_row_slice(
            chain.retained().nth(idx).expect("index in range"),
        );
        let mut rng = stream_rng(seed, streams::DEGENERACY + rep as u64);
        sampler.reset(observed, &theta);
        sampler.run(cfg.sim_burn, &mut rng);
        for _ in 0..cfg.draws_per_theta.max(1) {
            sampler.run(cfg.sim_thin.max(1), &mut rng);
            let e = sampler.graph().edge_count();
            if e as f64 / n_dyads > cfg.density_threshold {
                dense += 1;
            }
            edge_counts.push(e as u32);
        }
    }
    let dense_fraction = dense as f64 / edge_counts.len() as f64;
    Ok(DegeneracyReport {
        edge_counts,
        observed_edges: observed.edge_count(),
        dense_fraction,
        flag: dense_fraction > cfg.flag_fraction,
    })
}

/// Gaussian kernel density estimate of a series on an even grid, for plot
/// emission. Bandwidth is Silverman's rule.
pub fn kernel_density(series: &[f64], points: usize) -> Vec<(f64, f64)> {
    let n = series.len();
    if n == 0 || points == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let sd = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64)
        .sqrt();
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = sorted[(3 * n) / 4] - sorted[n / 4];
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = (0.9 * spread * (n as f64).powf(-0.2)).max(1e-12);
    let lo = sorted[0] - 3.0 * bw;
    let hi = sorted[n - 1] + 3.0 * bw;
    let norm = 1.0 / (n as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64;
            let f = series.iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum::<f64>();
            (x, f * norm)
        })
        .collect()
}

/// Writes `x,density` rows of a kernel density estimate.
pub fn write_density_csv<P: AsRef<Path>>(path: P, series: &[f64], points: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,density")?;
    for (x, f) in kernel_density(series, points) {
        writeln!(out, "{x},{f}")?;
    }
    Ok(())
}

/// Writes an integer histogram as `value,count` rows.
pub fn write_hist_csv<P: AsRef<Path>>(path: P, values: &[u32]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "value,count")?;
    if values.is_empty() {
        return Ok(());
    }
    let lo = *values.iter().min().unwrap();
    let hi = *values.iter().max().unwrap();
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &v in values {
        counts[(v - lo) as usize] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        writeln!(out, "{},{c}", lo + k as u32)?;
    }
    Ok(())
}

/// Writes the shared-grid cell frequencies used by the TV estimate:
/// `x,y,f_a,f_b` per cell.
pub fn write_tv_grid_csv<P: AsRef<Path>>(
    path: P,
    a: &[(f64, f64)],
    b: &[(f64, f64)],
    grid: &TvGrid,
) -> Result<()> {
    let (xr, yr) = bounds(a.iter().chain(b.iter()).copied());
    let xr = pad_range(xr, grid.pad);
    let yr = pad_range(yr, grid.pad);
    let fa = histogram_2d(a, xr, yr, grid);
    let fb = histogram_2d(b, xr, yr, grid);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,y,f_a,f_b")?;
    let wx = (xr.1 - xr.0) / grid.nx as f64;
    let wy = (yr.1 - yr.0) / grid.ny as f64;
    for cy in 0..grid.ny {
        for cx in 0..grid.nx {
            let x = xr.0 + (cx as f64 + 0.5) * wx;
            let y = yr.0 + (cy as f64 + 0.5) * wy;
            writeln!(out, "{x},{y},{},{}", fa[cy * grid.nx + cx], fb[cy * grid.nx + cx])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn ess_of_iid_noise_is_near_t() {
        let mut rng = stream_rng(1, 0);
        let series: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
        let e = ess(&series).unwrap();
        assert!((9_000.0..=10_000.0 + 1e-9).contains(&e), "ess = {e}");
    }

    #[test]
    fn ess_of_ar1_matches_analytic_value() {
        // AR(1) with rho = 0.5: ESS = T (1 - rho) / (1 + rho) = T / 3
        let rho: f64 = 0.5;
        let mut rng = stream_rng(2, 0);
        let mut x = 0.0;
        let scale = (1.0 - rho * rho).sqrt();
        let series: Vec<f64> = (0..10_000)
            .map(|_| {
                x = rho * x + scale * normal(&mut rng);
                x
            })
            .collect();
        let e = ess(&series).unwrap();
        let expect = 10_000.0 / 3.0;
        assert!((e - expect).abs() / expect < 0.15, "ess = {e}, expect ~{expect}");
    }

    #[test]
    fn ess_errors() {
        assert!(matches!(ess(&[1.0; 100]), Err(ErgmError::UndefinedEss(_))));
        assert!(matches!(ess(&[1.0, 2.0, 3.0]), Err(ErgmError::UndefinedEss(_))));
    }

    #[test]
    fn tv_identical_samples_is_zero() {
        let a: Vec<(f64, f64)> = (0..500).map(|k| (k as f64 * 0.01, (k % 7) as f64)).collect();
        let tv = tv_distance_2d(&a, &a, &TvGrid::default()).unwrap();
        assert_abs_diff_eq!(tv, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tv_disjoint_supports_is_one() {
        let a: Vec<(f64, f64)> = (0..300).map(|k| (k as f64 * 0.001, 0.0)).collect();
        let b: Vec<(f64, f64)> = (0..300).map(|k| (100.0 + k as f64 * 0.001, 50.0)).collect();
        let tv = tv_distance_2d(&a, &b, &TvGrid::default()).unwrap();
        assert_abs_diff_eq!(tv, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn efficiency_ratio_reference_values() {
        assert!((efficiency_ratio(3638.0, 35.09) - 103.67).abs() < 0.02);
        assert!((efficiency_ratio(1554.0, 28.86) - 53.85).abs() < 0.02);
        assert_abs_diff_eq!(relative_efficiency(2.5, 2.5), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn summary_reports_moments_and_min_ess() {
        let mut chain = McmcChain::new(2, 5, 0);
        let mut rng = stream_rng(8, 0);
        for _ in 0..2_000 {
            chain.push(&DVector::from_vec(vec![normal(&mut rng), 3.0 + normal(&mut rng)]), 0.0);
        }
        let labels = vec!["a".to_string(), "b".to_string()];
        let s = summarize(&chain, &labels).unwrap();
        assert!(s.mean[0].abs() < 0.1);
        assert!((s.mean[1] - 3.0).abs() < 0.1);
        assert!((s.sd[0] - 1.0).abs() < 0.1);
        assert!(s.min_ess <= s.ess[0] && s.min_ess <= s.ess[1]);
        assert!(s.min_ess > 0.0);
    }

    #[test]
    fn degeneracy_clear_for_sparse_model() {
        // chain concentrated at a strongly negative edge parameter: all
        // simulated graphs stay near empty and the flag stays down
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let g = {
            let mut g = Graph::empty(12);
            g.toggle(crate::graph::Dyad::new(0, 1).unwrap()).unwrap();
            g
        };
        let mut chain = McmcChain::new(1, 0, 0);
        for _ in 0..50 {
            chain.push(&DVector::from_vec(vec![-4.0]), 0.0);
        }
        let cfg = DegeneracyConfig { subsample: 50, sim_burn: 500, sim_thin: 10, ..Default::default() };
        let rep = degeneracy_check(&chain, &m, &g, &cfg, 4).unwrap();
        assert!(!rep.flag);
        assert_eq!(rep.observed_edges, 1);
        assert_eq!(rep.edge_counts.len(), 50);
        let mean_edges =
            rep.edge_counts.iter().map(|&e| e as f64).sum::<f64>() / rep.edge_counts.len() as f64;
        // expected edges ~ D * sigma(-4) ~ 66 * 0.018 ~ 1.2
        assert!(mean_edges < 5.0, "mean edges {mean_edges}");
    }

    #[test]
    fn degeneracy_flag_raised_for_dense_model() {
        let m = ModelSpec::parse(&["edges"]).unwrap();
        let g = Graph::empty(10);
        let mut chain = McmcChain::new(1, 0, 0);
        for _ in 0..30 {
            chain.push(&DVector::from_vec(vec![5.0]), 0.0);
        }
        let cfg = DegeneracyConfig { subsample: 30, sim_burn: 2000, sim_thin: 10, ..Default::default() };
        let rep = degeneracy_check(&chain, &m, &g, &cfg, 4).unwrap();
        assert!(rep.flag);
        assert!(rep.dense_fraction > 0.9);
    }

    #[test]
    fn kernel_density_integrates_to_one() {
        let mut rng = stream_rng(6, 0);
        let series: Vec<f64> = (0..2_000).map(|_| normal(&mut rng)).collect();
        let pts = kernel_density(&series, 512);
        let dx = pts[1].0 - pts[0].0;
        let mass: f64 = pts.iter().map(|(_, f)| f * dx).sum();
        assert!((mass - 1.0).abs() < 0.02, "mass = {mass}");
    }

    proptest! {
        #[test]
        fn tv_axioms(seed in 0u64..64) {
            let mut rng = stream_rng(seed, 0);
            let a: Vec<(f64, f64)> = (0..400).map(|_| (normal(&mut rng), normal(&mut rng))).collect();
            let b: Vec<(f64, f64)> = (0..300).map(|_| (0.5 + normal(&mut rng), normal(&mut rng) * 2.0)).collect();
            let grid = TvGrid::default();
            let ab = tv_distance_2d(&a, &b, &grid).unwrap();
            let ba = tv_distance_2d(&b, &a, &grid).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!(tv_distance_2d(&a, &a, &grid).unwrap() < 1e-12);
        }

        #[test]
        fn ess_is_affine_invariant(seed in 0u64..32, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rng = stream_rng(seed, 0);
            let mut x = 0.0f64;
            let series: Vec<f64> = (0..800).map(|_| { x = 0.4 * x + normal(&mut rng); x }).collect();
            let transformed: Vec<f64> = series.iter().map(|v| v * scale + shift).collect();
            let e1 = ess(&series).unwrap();
            let e2 = ess(&transformed).unwrap();
            prop_assert!((e1 - e2).abs() / e1 < 1e-6, "{e1} vs {e2}");
        }
    }
}
