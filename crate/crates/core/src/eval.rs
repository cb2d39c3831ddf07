//! Trajectory and distributional fidelity metrics.
//!
//! RSE is the relative squared error `Σ(Y−Ŷ)² / Σ(Y−Ȳ)²`, normalized by the
//! variance of the truth. KL divergences are `KL(reference ∥ model)` computed on a
//! shared grid after flooring both densities at [`DENSITY_FLOOR`].

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Realization, RealizationId};
use crate::error::{Error, Result};
use crate::lstm::{self, Checkpoint, Prediction};
use crate::rng::StreamRng;

pub const DENSITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 512;
pub const DEFAULT_THRESHOLDS: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
pub const TAIL_SIGMA: f64 = 2.0;

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "series lengths {} and {} must match and be nonzero",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `Σ(Y−Ŷ)² / Σ(Y−Ȳ)²`.
pub fn rse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let m = mean(y);
    let num: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::Domain("RSE undefined for a constant reference".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub mse: f64,
    pub rse: f64,
    /// Mean absolute error.
    pub mae: f64,
    pub max_abs_error: f64,
}

impl ChannelMetrics {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        let rse = rse(y, y_hat)?;
        let n = y.len() as f64;
        let mut sq = 0.0;
        let mut abs = 0.0;
        let mut max = 0.0f64;
        for (a, b) in y.iter().zip(y_hat) {
            let e = (a - b).abs();
            sq += e * e;
            abs += e;
            max = max.max(e);
        }
        Ok(Self { mse: sq / n, rse, mae: abs / n, max_abs_error: max })
    }

    fn average(items: &[ChannelMetrics]) -> Self {
        let n = items.len() as f64;
        let s = |f: fn(&ChannelMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            mse: s(|m| m.mse),
            rse: s(|m| m.rse),
            mae: s(|m| m.mae),
            max_abs_error: s(|m| m.max_abs_error),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum PdfMethod {
    Histogram {
        bins: usize,
    },
    /// Gaussian kernel; `None` uses Silverman's rule.
    GaussianKde {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
}

impl Default for PdfMethod {
    fn default() -> Self {
        PdfMethod::GaussianKde { bandwidth: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdfKind {
    Histogram,
    GaussianKde,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub method: PdfKind,
    pub bandwidth_or_binwidth: f64,
}

fn trapezoid(grid: &[f64], y: &[f64]) -> f64 {
    grid.windows(2).zip(y.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum()
}

impl PdfEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Linear interpolation, zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
        let (x0, x1) = (g[k - 1], g[k]);
        let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        self.density[k - 1] * (1.0 - w) + self.density[k] * w
    }

    /// Evaluate on another grid and renormalize there.
    pub fn resample(&self, grid: &[f64]) -> PdfEstimate {
        let mut density: Vec<f64> = grid.iter().map(|&x| self.eval(x)).collect();
        let z = trapezoid(grid, &density);
        if z > 0.0 {
            density.iter_mut().for_each(|d| *d /= z);
        }
        PdfEstimate {
            grid: grid.to_vec(),
            density,
            method: self.method,
            bandwidth_or_binwidth: self.bandwidth_or_binwidth,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("grid,density\n");
        for (g, d) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{g},{d}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + k as f64 * step).collect()
}

fn moments(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    (m, var)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Silverman's rule: `0.9 · min(σ, IQR/1.34) · n^{-1/5}`.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::Domain("bandwidth needs at least two samples".into()));
    }
    let (_, var) = moments(x);
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let sigma = var.sqrt();
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    if !(spread > 0.0) {
        return Err(Error::Domain("degenerate (constant) series has no density".into()));
    }
    Ok(0.9 * spread * (x.len() as f64).powf(-0.2))
}

fn check_series(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::Domain("density estimate needs at least two samples".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("series contains non-finite values".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::Domain("degenerate (constant) series has no density".into()));
    }
    Ok((lo, hi))
}

fn kde_on(x: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (x.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let cutoff = 8.0 * h;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    grid.par_iter()
        .map(|&g| {
            let a = sorted.partition_point(|&v| v < g - cutoff);
            let b = sorted.partition_point(|&v| v <= g + cutoff);
            sorted[a..b]
                .iter()
                .map(|&v| {
                    let u = (g - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Density estimate on a grid padded beyond the sample range.
pub fn estimate_pdf(x: &[f64], method: PdfMethod) -> Result<PdfEstimate> {
    let (lo, hi) = check_series(x)?;
    match method {
        PdfMethod::GaussianKde { bandwidth } => {
            let h = match bandwidth {
                Some(h) if h > 0.0 && h.is_finite() => h,
                Some(h) => return Err(Error::Domain(format!("bandwidth must be > 0, got {h}"))),
                None => silverman_bandwidth(x)?,
            };
            let grid = linspace(lo - 4.0 * h, hi + 4.0 * h, DEFAULT_GRID);
            estimate_kde_on(x, h, &grid)
        }
        PdfMethod::Histogram { bins } => histogram(x, bins, lo, hi),
    }
}

/// KDE with bandwidth `h` evaluated on a caller-supplied grid and renormalized there.
pub fn estimate_kde_on(x: &[f64], h: f64, grid: &[f64]) -> Result<PdfEstimate> {
    check_series(x)?;
    if grid.len() < 2 {
        return Err(Error::Domain("grid needs at least two points".into()));
    }
    let mut density = kde_on(x, h, grid);
    let z = trapezoid(grid, &density);
    if !(z > 0.0) {
        return Err(Error::Numeric("density vanishes on the requested grid".into()));
    }
    density.iter_mut().for_each(|d| *d /= z);
    Ok(PdfEstimate { grid: grid.to_vec(), density, method: PdfKind::GaussianKde, bandwidth_or_binwidth: h })
}

fn histogram(x: &[f64], bins: usize, lo: f64, hi: f64) -> Result<PdfEstimate> {
    if bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in x {
        let k = (((v - lo) / w) as usize).min(bins - 1);
        counts[k] += 1;
    }
    // Zero-density centers one bin beyond each end make the trapezoid
    // integral of the center polygon equal Σ density·w = 1.
    let mut grid = Vec::with_capacity(bins + 2);
    let mut density = Vec::with_capacity(bins + 2);
    grid.push(lo - 0.5 * w);
    density.push(0.0);
    let n = x.len() as f64;
    for (k, &c) in counts.iter().enumerate() {
        grid.push(lo + (k as f64 + 0.5) * w);
        density.push(c as f64 / (n * w));
    }
    grid.push(hi + 0.5 * w);
    density.push(0.0);
    Ok(PdfEstimate { grid, density, method: PdfKind::Histogram, bandwidth_or_binwidth: w })
}

/// Population mean and standard deviation.
pub fn gaussian_fit(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::Domain("Gaussian fit needs at least two samples".into()));
    }
    let (m, var) = moments(x);
    if !(var > 0.0) {
        return Err(Error::Domain("Gaussian fit of a constant series".into()));
    }
    Ok((m, var.sqrt()))
}

pub fn gaussian_pdf(grid: &[f64], mu: f64, sigma: f64) -> PdfEstimate {
    let c = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid.iter().map(|&x| c * (-0.5 * ((x - mu) / sigma).powi(2)).exp()).collect();
    PdfEstimate { grid: grid.to_vec(), density, method: PdfKind::Gaussian, bandwidth_or_binwidth: sigma }
        .renormalized()
}

impl PdfEstimate {
    fn renormalized(mut self) -> Self {
        let z = self.integral();
        if z > 0.0 {
            self.density.iter_mut().for_each(|d| *d /= z);
        }
        self
    }
}

/// Common grid covering both supports at the finer of the two spacings.
fn common_grid(p: &PdfEstimate, q: &PdfEstimate) -> Vec<f64> {
    if p.grid == q.grid {
        return p.grid.clone();
    }
    let lo = p.grid[0].min(q.grid[0]);
    let hi = p.grid[p.grid.len() - 1].max(q.grid[q.grid.len() - 1]);
    let spacing = |e: &PdfEstimate| (e.grid[e.grid.len() - 1] - e.grid[0]) / (e.grid.len() - 1) as f64;
    let dx = spacing(p).min(spacing(q));
    let n = (((hi - lo) / dx).ceil() as usize + 1).clamp(DEFAULT_GRID, 8192);
    linspace(lo, hi, n)
}

fn floored(d: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = d.iter().map(|x| x.max(DENSITY_FLOOR)).collect();
    let z = trapezoid(grid, &v);
    v.iter_mut().for_each(|x| *x /= z);
    v
}

/// `KL(p ∥ q) = ∫ p ln(p/q)` on a shared grid.
pub fn kl_divergence(p: &PdfEstimate, q: &PdfEstimate) -> Result<f64> {
    if p.grid.len() < 2 || q.grid.len() < 2 {
        return Err(Error::Domain("densities need at least two grid points".into()));
    }
    let grid = common_grid(p, q);
    let (pd, qd) = if p.grid == grid && q.grid == grid {
        (p.density.clone(), q.density.clone())
    } else {
        (p.resample(&grid).density, q.resample(&grid).density)
    };
    let pd = floored(&pd, &grid);
    let qd = floored(&qd, &grid);
    let integrand: Vec<f64> = pd.iter().zip(&qd).map(|(a, b)| a * (a / b).ln()).collect();
    // The floored, renormalized pair is a proper density pair; clamp tiny
    // negative quadrature residue.
    Ok(trapezoid(&grid, &integrand).max(0.0))
}

/// KL restricted to `|x − center| > radius`, with the core lumped into one atom.
///
/// `Σ_tail p ln(p/q) dx + P_core ln(P_core / Q_core)`, which is the KL between
/// the two distributions after merging the core into a single outcome.
pub fn tail_kl(p: &PdfEstimate, q: &PdfEstimate, center: f64, radius: f64) -> Result<f64> {
    let grid = common_grid(p, q);
    let pd = floored(&p.resample(&grid).density, &grid);
    let qd = floored(&q.resample(&grid).density, &grid);
    let n = grid.len();
    let (mut tail, mut p_core, mut q_core) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let w = if k == 0 {
            0.5 * (grid[1] - grid[0])
        } else if k == n - 1 {
            0.5 * (grid[n - 1] - grid[n - 2])
        } else {
            0.5 * (grid[k + 1] - grid[k - 1])
        };
        if (grid[k] - center).abs() > radius {
            tail += w * pd[k] * (pd[k] / qd[k]).ln();
        } else {
            p_core += w * pd[k];
            q_core += w * qd[k];
        }
    }
    let core = if p_core > 0.0 && q_core > 0.0 { p_core * (p_core / q_core).ln() } else { 0.0 };
    Ok((tail + core).max(0.0))
}

/// Shared-bandwidth KDEs of two samples on one grid.
pub fn paired_kde(reference: &[f64], model: &[f64]) -> Result<(PdfEstimate, PdfEstimate)> {
    let (rlo, rhi) = check_series(reference)?;
    let (mlo, mhi) = check_series(model)?;
    let hr = silverman_bandwidth(reference)?;
    let hm = silverman_bandwidth(model)?;
    let pad = 4.0 * hr.max(hm);
    let grid = linspace(rlo.min(mlo) - pad, rhi.max(mhi) + pad, 2 * DEFAULT_GRID);
    Ok((estimate_kde_on(reference, hr, &grid)?, estimate_kde_on(model, hm, &grid)?))
}

pub fn skewness(x: &[f64]) -> Result<f64> {
    let (m, var) = gaussian_fit(x).map(|(m, s)| (m, s * s))?;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / x.len() as f64;
    Ok(m3 / var.powf(1.5))
}

/// `m₄ / m₂² − 3`.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64> {
    let (m, var) = gaussian_fit(x).map(|(m, s)| (m, s * s))?;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    Ok(m4 / (var * var) - 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMetrics {
    pub exceedance: Vec<Exceedance>,
    pub excess_kurtosis: f64,
}

/// `P(|x| > τ)` per threshold plus excess kurtosis.
pub fn tail_metrics(x: &[f64], thresholds: &[f64]) -> Result<TailMetrics> {
    let k = excess_kurtosis(x)?;
    let mut abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len() as f64;
    let exceedance = thresholds
        .iter()
        .map(|&t| Exceedance {
            threshold: t,
            probability: (abs.len() - abs.partition_point(|&v| v <= t)) as f64 / n,
        })
        .collect();
    Ok(TailMetrics { exceedance, excess_kurtosis: k })
}

/// Bootstrap standard error of a pooled statistic, resampling whole groups.
pub fn bootstrap_se<F>(groups: &[&[f64]], n_boot: usize, seed: u64, stat: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if groups.len() < 2 || n_boot < 2 {
        return Err(Error::Domain("bootstrap needs ≥ 2 groups and ≥ 2 replicates".into()));
    }
    let root = StreamRng::from_path(seed, &["bootstrap"]);
    let reps: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = root.split_index(b as u64);
            let mut pooled = Vec::new();
            for _ in 0..groups.len() {
                pooled.extend_from_slice(groups[rng.below(groups.len() as u64) as usize]);
            }
            stat(&pooled)
        })
        .collect::<Result<_>>()?;
    let (_, var) = moments(&reps);
    Ok((var * n_boot as f64 / (n_boot - 1) as f64).sqrt())
}

/// Kurtosis difference `b − a` and its bootstrap standard error
/// (independent resampling of the two group sets).
pub fn kurtosis_gap(a: &[&[f64]], b: &[&[f64]], n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    let pool = |g: &[&[f64]]| g.concat();
    let gap = excess_kurtosis(&pool(b))? - excess_kurtosis(&pool(a))?;
    let se_a = bootstrap_se(a, n_boot, seed, excess_kurtosis)?;
    let se_b = bootstrap_se(b, n_boot, seed.wrapping_add(1), excess_kurtosis)?;
    Ok((gap, (se_a * se_a + se_b * se_b).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pdf: PdfMethod,
    /// Exceedance thresholds in units of the reference roll standard deviation.
    pub thresholds_sigma: Vec<f64>,
    pub tail_sigma: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pdf: PdfMethod::default(),
            thresholds_sigma: DEFAULT_THRESHOLDS.to_vec(),
            tail_sigma: TAIL_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollReport {
    pub kurtosis: f64,
    pub reference_kurtosis: f64,
    pub skewness: f64,
    pub exceedance: Vec<Exceedance>,
    pub reference_exceedance: Vec<Exceedance>,
    pub kl_vs_reference: f64,
    pub tail_kl_vs_reference: f64,
    /// Fit to the reference roll.
    pub gaussian_fit: (f64, f64),
    pub gaussian_fit_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub id: RealizationId,
    pub channels: [ChannelMetrics; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeaStateReport {
    pub sea_state: String,
    pub samples: usize,
    /// Metrics of the pooled series.
    pub pooled: [ChannelMetrics; 3],
    /// Per-channel averages over seeds.
    pub averaged: [ChannelMetrics; 3],
    pub roll: RollReport,
    pub seeds: Vec<SeedReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub sea_states: Vec<SeaStateReport>,
}

impl EvalReport {
    pub fn state(&self, label: &str) -> Option<&SeaStateReport> {
        self.sea_states.iter().find(|s| s.sea_state == label)
    }
}

/// Truth and prediction after dropping the warm-up samples.
pub struct Paired<'a> {
    pub realization: &'a Realization,
    pub prediction: Prediction,
}

impl Paired<'_> {
    pub fn channel(&self, c: usize) -> (&[f64], &[f64]) {
        let k = self.prediction.first_valid;
        (&self.realization.motions.channel(c)[k..], &self.prediction.motions.channel(c)[k..])
    }
}

pub fn predict_all<'a>(ck: &Checkpoint, test: &'a [Realization]) -> Result<Vec<Paired<'a>>> {
    test.par_iter()
        .map(|r| {
            lstm::predict_series(&ck.params, r, &ck.stencil)
                .map(|prediction| Paired { realization: r, prediction })
        })
        .collect()
}

/// Roll distribution comparison between pooled reference and model samples.
pub fn roll_report(reference: &[f64], model: &[f64], cfg: &EvalConfig) -> Result<RollReport> {
    let (mu, sigma) = gaussian_fit(reference)?;
    let (p, q) = match cfg.pdf {
        PdfMethod::GaussianKde { bandwidth: None } => paired_kde(reference, model)?,
        m => {
            let p = estimate_pdf(reference, m)?;
            let q = estimate_pdf(model, m)?;
            (p, q)
        }
    };
    let g = gaussian_pdf(&p.grid, mu, sigma);
    let thresholds: Vec<f64> = cfg.thresholds_sigma.iter().map(|t| t * sigma).collect();
    let tm = tail_metrics(model, &thresholds)?;
    let tr = tail_metrics(reference, &thresholds)?;
    Ok(RollReport {
        kurtosis: tm.excess_kurtosis,
        reference_kurtosis: tr.excess_kurtosis,
        skewness: skewness(model)?,
        exceedance: tm.exceedance,
        reference_exceedance: tr.exceedance,
        kl_vs_reference: kl_divergence(&p, &q)?,
        tail_kl_vs_reference: tail_kl(&p, &q, 0.0, cfg.tail_sigma * sigma)?,
        gaussian_fit: (mu, sigma),
        gaussian_fit_kl: kl_divergence(&p, &g)?,
    })
}

/// Evaluate paired predictions grouped by sea state.
pub fn report_from_pairs(model: &str, pairs: &[Paired<'_>], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut groups: BTreeMap<&str, Vec<&Paired<'_>>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.realization.id.sea_state.as_str()).or_default().push(p);
    }
    let mut sea_states = Vec::new();
    for (label, mut members) in groups {
        members.sort_by(|a, b| a.realization.id.cmp(&b.realization.id));
        let mut seeds = Vec::new();
        let mut pooled_true: [Vec<f64>; 3] = Default::default();
        let mut pooled_pred: [Vec<f64>; 3] = Default::default();
        for m in &members {
            let mut channels = [ChannelMetrics { mse: 0.0, rse: 0.0, mae: 0.0, max_abs_error: 0.0 }; 3];
            for c in 0..3 {
                let (t, p) = m.channel(c);
                channels[c] = ChannelMetrics::compute(t, p)?;
                pooled_true[c].extend_from_slice(t);
                pooled_pred[c].extend_from_slice(p);
            }
            seeds.push(SeedReport { id: m.realization.id.clone(), channels });
        }
        let mut pooled = [seeds[0].channels[0]; 3];
        let mut averaged = pooled;
        for c in 0..3 {
            pooled[c] = ChannelMetrics::compute(&pooled_true[c], &pooled_pred[c])?;
            let per: Vec<ChannelMetrics> = seeds.iter().map(|s| s.channels[c]).collect();
            averaged[c] = ChannelMetrics::average(&per);
        }
        let roll = roll_report(&pooled_true[2], &pooled_pred[2], cfg)?;
        sea_states.push(SeaStateReport {
            sea_state: label.to_string(),
            samples: pooled_true[2].len(),
            pooled,
            averaged,
            roll,
            seeds,
        });
    }
    Ok(EvalReport { model: model.to_string(), sea_states })
}

pub fn evaluate(model: &str, ck: &Checkpoint, test: &[Realization], cfg: &EvalConfig) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Shape("no test realizations".into()));
    }
    let pairs = predict_all(ck, test)?;
    report_from_pairs(model, &pairs, cfg)
}

/// One report per named model over the same held-out set.
pub fn seed_ensemble_report(
    models: &[(String, Checkpoint)],
    test: &[Realization],
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    models.iter().map(|(name, ck)| evaluate(name, ck, test, cfg)).collect()
}

/// Long-form table of seed-averaged metrics: `model,sea_state,channel,metric,value`.
pub fn bar_metrics_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,sea_state,channel,metric,value\n");
    for r in reports {
        for s in &r.sea_states {
            for (c, name) in crate::oracle::CHANNEL_NAMES.iter().enumerate() {
                let m = &s.averaged[c];
                for (metric, v) in
                    [("mse", m.mse), ("rse", m.rse), ("mae", m.mae), ("max_abs_error", m.max_abs_error)]
                {
                    out.push_str(&format!("{},{},{},{},{}\n", r.model, s.sea_state, name, metric, v));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(seed);
        (0..n).map(|_| rng.normal()).collect()
    }

    #[test]
    fn rse_examples() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(rse(&y, &y).unwrap(), 0.0);
        assert_eq!(rse(&y, &[1.0; 3]).unwrap(), 1.0);
        assert_eq!(rse(&y, &[0.0; 3]).unwrap(), 2.5);
        assert!(rse(&[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(rse(&y, &[0.0]).is_err());
    }

    #[test]
    fn channel_metrics_by_hand() {
        let m = ChannelMetrics::compute(&[0.0, 1.0, 2.0], &[0.5, 1.0, 0.0]).unwrap();
        assert!((m.mse - 4.25 / 3.0).abs() < 1e-15);
        assert!((m.mae - 2.5 / 3.0).abs() < 1e-15);
        assert_eq!(m.max_abs_error, 2.0);
    }

    #[test]
    fn kde_close_to_standard_normal() {
        let x = normals(100_000, 1);
        let pdf = estimate_pdf(&x, PdfMethod::default()).unwrap();
        assert!((pdf.integral() - 1.0).abs() < 1e-6);
        let sup = pdf
            .grid
            .iter()
            .zip(&pdf.density)
            .filter(|(g, _)| g.abs() <= 3.0)
            .map(|(g, d)| (d - (-0.5 * g * g).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.02, "sup-norm {sup}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(estimate_pdf(&[2.0; 10], PdfMethod::default()), Err(Error::Domain(_))));
        assert!(matches!(gaussian_fit(&[1.0]), Err(Error::Domain(_))));
        assert!(estimate_pdf(&[1.0, 2.0], PdfMethod::Histogram { bins: 0 }).is_err());
    }

    #[test]
    fn histogram_integrates_to_one() {
        let x = normals(997, 4);
        for bins in [1, 7, 50] {
            let h = estimate_pdf(&x, PdfMethod::Histogram { bins }).unwrap();
            assert!((h.integral() - 1.0).abs() < 1e-12);
            assert!(h.density.iter().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn gaussian_fit_examples() {
        assert_eq!(gaussian_fit(&[-1.0, 1.0]).unwrap(), (0.0, 1.0));
        let x: Vec<f64> = normals(200_000, 2).iter().map(|v| 2.0 + 3.0 * v).collect();
        let (m, s) = gaussian_fit(&x).unwrap();
        assert!((m - 2.0).abs() < 0.03 && (s - 3.0).abs() < 0.03, "{m} {s}");
    }

    #[test]
    fn kl_gaussians() {
        let grid = linspace(-10.0, 11.0, 4001);
        let p = gaussian_pdf(&grid, 0.0, 1.0);
        let q = gaussian_pdf(&grid, 1.0, 1.0);
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - 0.5).abs() < 0.025, "{kl}");
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_is_asymmetric_for_skewed_density() {
        let mut rng = StreamRng::new(3);
        let skewed: Vec<f64> = (0..20_000).map(|_| -rng.uniform().max(1e-300).ln()).collect();
        let p = estimate_pdf(&skewed, PdfMethod::default()).unwrap();
        let (m, s) = gaussian_fit(&skewed).unwrap();
        let q = gaussian_pdf(&p.grid, m, s);
        let a = kl_divergence(&p, &q).unwrap();
        let b = kl_divergence(&q, &p).unwrap();
        assert!((a - b).abs() > 1e-3, "{a} {b}");
    }

    #[test]
    fn kl_across_different_grids() {
        let p = gaussian_pdf(&linspace(-8.0, 8.0, 300), 0.0, 1.0);
        let q = gaussian_pdf(&linspace(-7.0, 9.0, 700), 1.0, 1.0);
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - 0.5).abs() < 0.025, "{kl}");
    }

    #[test]
    fn tail_kl_ignores_core_shape() {
        let grid = linspace(-8.0, 8.0, 1601);
        let p = gaussian_pdf(&grid, 0.0, 1.0);
        // Same tails, core mass reshuffled inside |x| ≤ 2.
        let mut q = p.clone();
        for (g, d) in q.grid.iter().zip(q.density.iter_mut()) {
            if g.abs() < 1.0 {
                *d *= 1.0 + 0.3 * (3.0 * g).sin();
            }
        }
        assert!(kl_divergence(&p, &q).unwrap() > 1e-4);
        assert!(tail_kl(&p, &q, 0.0, 2.0).unwrap() < 1e-6);
        let wide = gaussian_pdf(&grid, 0.0, 1.5);
        assert!(tail_kl(&p, &wide, 0.0, 2.0).unwrap() > 1e-3);
    }

    #[test]
    fn tail_metrics_examples() {
        let x = normals(200_000, 5);
        let t = tail_metrics(&x, &[1.96, 100.0]).unwrap();
        assert!((t.exceedance[0].probability - 0.05).abs() < 0.003);
        assert_eq!(t.exceedance[1].probability, 0.0);
        assert!(t.excess_kurtosis.abs() < 0.05);
    }

    #[test]
    fn kurtosis_by_hand() {
        // Two-point distribution: m4/m2² = 1.
        assert!((excess_kurtosis(&[-1.0, 1.0, -1.0, 1.0]).unwrap() + 2.0).abs() < 1e-15);
        assert!(skewness(&[-1.0, 1.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn bootstrap_se_shrinks_with_more_groups() {
        let make = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|g| normals(500, 100 + g as u64)).collect() };
        let few = make(5);
        let many = make(40);
        let few: Vec<&[f64]> = few.iter().map(|g| g.as_slice()).collect();
        let many: Vec<&[f64]> = many.iter().map(|g| g.as_slice()).collect();
        let a = bootstrap_se(&few, 200, 1, excess_kurtosis).unwrap();
        let b = bootstrap_se(&many, 200, 1, excess_kurtosis).unwrap();
        assert!(b < a, "{a} {b}");
        assert_eq!(a, bootstrap_se(&few, 200, 1, excess_kurtosis).unwrap());
    }

    #[test]
    fn averages_of_identical_seeds() {
        let m = ChannelMetrics { mse: 1.0, rse: 0.25, mae: 0.5, max_abs_error: 3.0 };
        assert_eq!(ChannelMetrics::average(&[m; 9]), m);
        assert_eq!(ChannelMetrics::average(&[m]), m);
    }

    proptest! {
        #[test]
        fn exceedance_monotone_and_bounded(x in proptest::collection::vec(-5.0f64..5.0, 3..200)) {
            prop_assume!(x.iter().any(|v| *v != x[0]));
            let t = tail_metrics(&x, &[0.0, 0.5, 1.0, 2.0, 4.0]).unwrap();
            for w in t.exceedance.windows(2) {
                prop_assert!(w[1].probability <= w[0].probability);
            }
            prop_assert!(t.exceedance.iter().all(|e| (0.0..=1.0).contains(&e.probability)));
        }

        #[test]
        fn kl_nonnegative(a in proptest::collection::vec(-3.0f64..3.0, 5..60), b in proptest::collection::vec(-3.0f64..3.0, 5..60)) {
            prop_assume!(a.iter().any(|v| (v - a[0]).abs() > 1e-3) && b.iter().any(|v| (v - b[0]).abs() > 1e-3));
            let (p, q) = paired_kde(&a, &b).unwrap();
            prop_assert!((p.integral() - 1.0).abs() < 1e-6);
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            prop_assert!(tail_kl(&p, &q, 0.0, 1.0).unwrap() >= 0.0);
        }
    }
}
