//! Long-crested irregular-sea synthesis from a two-parameter
//! Pierson-Moskowitz (ITTC/Bretschneider) spectrum.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Irregular-sea condition given by significant wave height and peak period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeaState {
    /// Significant wave height (m).
    pub hs: f64,
    /// Peak period (s).
    pub tp: f64,
    pub label: String,
}

impl SeaState {
    pub fn new(label: impl Into<String>, hs: f64, tp: f64) -> Result<Self> {
        let sea = Self { hs, tp, label: label.into() };
        sea.validate()?;
        Ok(sea)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hs.is_finite() && self.hs > 0.0) {
            return Err(Error::Domain(format!(
                "sea state {}: hs must be positive, got {}",
                self.label, self.hs
            )));
        }
        if !(self.tp.is_finite() && self.tp > 0.0) {
            return Err(Error::Domain(format!(
                "sea state {}: tp must be positive, got {}",
                self.label, self.tp
            )));
        }
        Ok(())
    }

    /// Peak angular frequency `2π / Tp`.
    pub fn omega_peak(&self) -> f64 {
        TAU / self.tp
    }

    /// Zeroth spectral moment, `Hs² / 16`.
    pub fn variance(&self) -> f64 {
        self.hs * self.hs / 16.0
    }

    /// The three sea states of the reference CFD campaign.
    pub fn reference_campaign() -> Vec<SeaState> {
        vec![
            SeaState { hs: 3.53, tp: 9.7, label: "SS-1".into() },
            SeaState { hs: 5.09, tp: 12.4, label: "SS-2".into() },
            SeaState { hs: 10.66, tp: 13.4, label: "SS-3".into() },
        ]
    }
}

/// Spectral density `S(ω)` in m²·s.
///
/// `S(ω) = (5/16) Hs² ωp⁴ ω⁻⁵ exp(-(5/4)(ωp/ω)⁴)`, which integrates to `Hs²/16`.
pub fn pm_spectrum(sea: &SeaState, omega: f64) -> Result<f64> {
    sea.validate()?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Domain(format!("spectrum frequency must be positive, got {omega}")));
    }
    Ok(pm_density(sea.hs, sea.omega_peak(), omega))
}

fn pm_density(hs: f64, wp: f64, w: f64) -> f64 {
    let r = wp / w;
    let r4 = r * r * r * r;
    // ωp⁴ ω⁻⁵ = r⁴ / ω; written this way it cannot overflow for tiny ω.
    let s = 5.0 / 16.0 * hs * hs * r4 / w * (-1.25 * r4).exp();
    if s.is_finite() {
        s
    } else {
        0.0
    }
}

/// How the component frequencies are placed inside the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Bin midpoints of an equal-width partition.
    #[default]
    Equispaced,
    /// One uniformly drawn frequency per bin; removes the `2π/Δω` repeat period.
    Stratified,
}

/// Discrete harmonic components `{a_i, ω_i, ε_i}` of a random-phase sea.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveComponents {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    /// Seed the phases were drawn with (0 for hand-built components).
    #[serde(default)]
    pub seed: u64,
}

impl WaveComponents {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let c = Self { amplitudes, frequencies, phases, seed: 0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.amplitudes.len();
        if n == 0 {
            return Err(Error::Domain("wave components must be non-empty".into()));
        }
        if self.frequencies.len() != n || self.phases.len() != n {
            return Err(Error::Shape(format!(
                "component lists differ in length: {} amplitudes, {} frequencies, {} phases",
                n,
                self.frequencies.len(),
                self.phases.len()
            )));
        }
        if self.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Domain("amplitudes must be finite and non-negative".into()));
        }
        if self.frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain("frequencies must be positive".into()));
        }
        if self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("frequencies must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `Σ a_i² / 2`, the variance of the synthesized process.
    pub fn variance(&self) -> f64 {
        self.amplitudes.iter().map(|a| 0.5 * a * a).sum()
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.last().copied().unwrap_or(0.0)
    }

    /// Same components with every frequency multiplied by `factor`.
    ///
    /// Amplitudes and phases are kept, so the variance is unchanged; this maps
    /// a fixed-frame record onto a time-compressed (encounter) frame.
    pub fn scaled_frequencies(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Domain(format!("frequency scale must be positive, got {factor}")));
        }
        Ok(Self {
            amplitudes: self.amplitudes.clone(),
            frequencies: self.frequencies.iter().map(|w| w * factor).collect(),
            phases: self.phases.clone(),
            seed: self.seed,
        })
    }
}

/// Parameters of [`discretize`] collected for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub n: usize,
    /// Lower band edge as a multiple of ωp.
    pub omega_min_factor: f64,
    /// Upper band edge as a multiple of ωp.
    pub omega_max_factor: f64,
    #[serde(default)]
    pub discretization: Discretization,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            n: 200,
            omega_min_factor: 0.3,
            omega_max_factor: 5.0,
            discretization: Discretization::Equispaced,
        }
    }
}

impl BandConfig {
    pub fn band(&self, sea: &SeaState) -> (f64, f64) {
        let wp = sea.omega_peak();
        (self.omega_min_factor * wp, self.omega_max_factor * wp)
    }

    pub fn discretize(&self, sea: &SeaState, seed: u64) -> Result<WaveComponents> {
        let (lo, hi) = self.band(sea);
        discretize_with(sea, self.n, lo, hi, seed, self.discretization)
    }
}

/// Equispaced random-phase discretization of the spectrum over `[omega_min, omega_max]`.
///
/// `a_i = sqrt(2 S(ω_i) Δω)`; phases are uniform on `[0, 2π)` from the
/// `"phases"` stream of `seed`.
pub fn discretize(
    sea: &SeaState,
    n: usize,
    omega_min: f64,
    omega_max: f64,
    seed: u64,
) -> Result<WaveComponents> {
    discretize_with(sea, n, omega_min, omega_max, seed, Discretization::Equispaced)
}

pub fn discretize_with(
    sea: &SeaState,
    n: usize,
    omega_min: f64,
    omega_max: f64,
    seed: u64,
    scheme: Discretization,
) -> Result<WaveComponents> {
    sea.validate()?;
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 components, got {n}")));
    }
    if !(omega_min.is_finite() && omega_max.is_finite() && 0.0 < omega_min && omega_min < omega_max) {
        return Err(Error::Domain(format!("invalid frequency band [{omega_min}, {omega_max}]")));
    }
    if omega_max <= sea.omega_peak() {
        return Err(Error::Domain(format!(
            "band upper edge {omega_max} does not extend past the spectral peak {}",
            sea.omega_peak()
        )));
    }
    let dw = (omega_max - omega_min) / n as f64;
    let root = StreamRng::new(seed);
    let mut phase_rng = root.split("phases");
    let mut freq_rng = root.split("frequencies");
    let wp = sea.omega_peak();

    let mut amplitudes = Vec::with_capacity(n);
    let mut frequencies = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for i in 0..n {
        let offset = match scheme {
            Discretization::Equispaced => 0.5,
            Discretization::Stratified => freq_rng.uniform(),
        };
        let w = omega_min + (i as f64 + offset) * dw;
        amplitudes.push((2.0 * pm_density(sea.hs, wp, w) * dw).sqrt());
        frequencies.push(w);
        phases.push(TAU * phase_rng.uniform());
    }
    let mut c = WaveComponents::new(amplitudes, frequencies, phases)?;
    c.seed = seed;
    Ok(c)
}

/// Sampled free-surface elevation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationSeries {
    /// Sample interval (s).
    pub dt: f64,
    /// Elevation samples (m), starting at t = 0.
    pub samples: Vec<f64>,
    pub seed: u64,
}

impl ElevationSeries {
    pub fn new(dt: f64, samples: Vec<f64>, seed: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if samples.is_empty() {
            return Err(Error::Domain("elevation series must be non-empty".into()));
        }
        Ok(Self { dt, samples, seed })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }
}

/// Number of samples in a record of `duration` seconds at step `dt`: `floor(duration/dt) + 1`.
pub fn sample_count(dt: f64, duration: f64) -> usize {
    // Guard against 3600/0.2 evaluating to 17999.999...
    (duration / dt + 1e-9).floor() as usize + 1
}

/// `ζ(k·dt) = Σ a_i cos(ω_i k dt + ε_i)` for `k = 0..=floor(duration/dt)`.
pub fn synthesize(components: &WaveComponents, dt: f64, duration: f64) -> Result<ElevationSeries> {
    components.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(Error::Config(format!("duration {duration} must be at least one step {dt}")));
    }
    let w_max = components.max_frequency();
    if w_max * dt >= PI {
        return Err(Error::Config(format!(
            "aliasing: highest component {w_max} rad/s is not resolved at dt = {dt} s (needs ω·dt < π)"
        )));
    }
    let len = sample_count(dt, duration);
    let samples = (0..len)
        .map(|k| {
            let t = k as f64 * dt;
            components
                .amplitudes
                .iter()
                .zip(&components.frequencies)
                .zip(&components.phases)
                .map(|((a, w), e)| a * (w * t + e).cos())
                .sum()
        })
        .collect();
    ElevationSeries::new(dt, samples, components.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sea(hs: f64, tp: f64) -> SeaState {
        SeaState::new("t", hs, tp).unwrap()
    }

    /// Composite Simpson rule, written independently of the discretizer.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn value_at_peak() {
        let s = pm_spectrum(&sea(1.0, TAU), 1.0).unwrap();
        assert!((s - 0.089_532_749_018_809_4).abs() < 1e-12);
    }

    #[test]
    fn value_at_ss1_peak_matches_quadrature_script() {
        // mpmath, 30 digits: S(ωp) for Hs = 3.53, Tp = 9.7.
        let ss1 = sea(3.53, 9.7);
        let s = pm_spectrum(&ss1, ss1.omega_peak()).unwrap();
        assert!((s - 1.722_357_085_417_243).abs() < 1e-10);
    }

    #[test]
    fn integrates_to_hs2_over_16() {
        for s in SeaState::reference_campaign() {
            let wp = s.omega_peak();
            let integral = simpson(|w| pm_spectrum(&s, w).unwrap(), 1e-6, 20.0 * wp, 20_000);
            let rel = (integral - s.variance()).abs() / s.variance();
            assert!(rel < 0.005, "{}: rel {rel}", s.label);
        }
    }

    #[test]
    fn vanishes_at_both_ends() {
        let s = sea(5.0, 10.0);
        assert!(pm_spectrum(&s, 1e-3).unwrap() < 1e-300);
        assert!(pm_spectrum(&s, 1e4).unwrap() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = sea(1.0, 10.0);
        assert!(matches!(pm_spectrum(&s, 0.0), Err(Error::Domain(_))));
        assert!(matches!(pm_spectrum(&s, -1.0), Err(Error::Domain(_))));
        assert!(SeaState::new("bad", -1.0, 5.0).is_err());
        assert!(SeaState::new("bad", 1.0, 0.0).is_err());
        assert!(discretize(&s, 1, 0.1, 2.0, 0).is_err());
        assert!(discretize(&s, 10, 0.5, 0.4, 0).is_err());
        assert!(discretize(&s, 10, 0.01, 0.5, 0).is_err(), "band below peak");
    }

    #[test]
    fn far_tail_band_has_negligible_amplitudes() {
        let s = sea(1.0, 10.0);
        let wp = s.omega_peak();
        let c = discretize(&s, 50, 1e-3 * wp, 2e-3 * wp + wp, 1).unwrap();
        assert!(c.amplitudes[..5].iter().all(|&a| a < 1e-12));
        let c = discretize(&s, 50, 1e3 * wp, 2e3 * wp, 1).unwrap();
        assert!(c.amplitudes.iter().all(|&a| a < 1e-6));
    }

    #[test]
    fn riemann_energy_converges() {
        for s in SeaState::reference_campaign() {
            let c = BandConfig::default().discretize(&s, 3).unwrap();
            let rel = (c.variance() - s.variance()).abs() / s.variance();
            assert!(rel < 0.01, "{}: {rel}", s.label);
        }
    }

    #[test]
    fn discretize_is_deterministic() {
        let s = sea(3.0, 9.0);
        let a = discretize(&s, 64, 0.2, 3.0, 11).unwrap();
        let b = discretize(&s, 64, 0.2, 3.0, 11).unwrap();
        let c = discretize(&s, 64, 0.2, 3.0, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.phases, c.phases);
        assert!(a.phases.iter().all(|&p| (0.0..TAU).contains(&p)));
    }

    #[test]
    fn stratified_frequencies_stay_in_bins() {
        let s = sea(3.0, 9.0);
        let c = discretize_with(&s, 40, 0.2, 3.0, 5, Discretization::Stratified).unwrap();
        let dw = 2.8 / 40.0;
        for (i, w) in c.frequencies.iter().enumerate() {
            let lo = 0.2 + i as f64 * dw;
            assert!(*w >= lo && *w < lo + dw);
        }
    }

    #[test]
    fn pure_cosine() {
        let c = WaveComponents::new(vec![1.0], vec![1.0], vec![0.0]).unwrap();
        let z = synthesize(&c, PI / 2.0 * 0.999_999, 10.0);
        // ω·dt must stay below π; a quarter period is well inside.
        let z = z.unwrap();
        assert!((z.samples[0] - 1.0).abs() < 1e-12);
        assert!(z.samples[1].abs() < 1e-5);
        assert!((z.samples[2] + 1.0).abs() < 1e-10);
        assert!(z.samples[3].abs() < 1e-5);
    }

    #[test]
    fn zero_amplitude_gives_zero_series() {
        let c = WaveComponents::new(vec![0.0], vec![0.7], vec![1.3]).unwrap();
        let z = synthesize(&c, 0.2, 20.0).unwrap();
        assert!(z.samples.iter().all(|&v| v == 0.0));
        assert!(WaveComponents::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn aliasing_is_rejected() {
        let c = WaveComponents::new(vec![1.0], vec![20.0], vec![0.0]).unwrap();
        assert!(matches!(synthesize(&c, 0.2, 10.0), Err(Error::Config(_))));
    }

    #[test]
    fn peak_location_on_fine_grid() {
        for s in SeaState::reference_campaign() {
            let dw = 1e-4;
            let (best, _) = (1..40_000)
                .map(|i| i as f64 * dw)
                .map(|w| (w, pm_spectrum(&s, w).unwrap()))
                .fold((0.0, f64::MIN), |acc, p| if p.1 > acc.1 { p } else { acc });
            assert!((best - s.omega_peak()).abs() <= dw, "{}", s.label);
        }
    }

    #[test]
    fn long_record_variance_matches_component_energy() {
        let s = sea(5.09, 12.4);
        let c = BandConfig::default().discretize(&s, 21).unwrap();
        // One full repeat period 2π/Δω makes the record exactly periodic.
        let dw = c.frequencies[1] - c.frequencies[0];
        let period = TAU / dw;
        let z = synthesize(&c, 0.2, period).unwrap();
        let n = z.len() as f64;
        let mean = z.samples.iter().sum::<f64>() / n;
        let var = z.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var - c.variance()).abs() / c.variance() < 0.01);
    }
}
