//! Time–frequency diagnostics for parametric roll: Hann-windowed STFT,
//! a 2:1 encounter-signature detector and the roll–pitch phase portrait.

use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 256;
pub const DEFAULT_HOP: usize = DEFAULT_WINDOW / 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StftResult {
    /// Frame centers (s).
    pub times: Vec<f64>,
    /// One-sided bin frequencies (Hz), `k / (N·dt)` for `k = 0..=N/2`.
    pub freqs: Vec<f64>,
    /// `frames × freqs` magnitudes `|X_k|` (unnormalized DFT of the windowed frame).
    pub magnitude: Vec<Vec<f64>>,
    pub window_len: usize,
    pub hop: usize,
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect()
}

pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    if window_len > len {
        0
    } else {
        (len - window_len) / hop + 1
    }
}

pub fn stft(x: &[f64], dt: f64, window_len: usize, hop: usize) -> Result<StftResult> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    if window_len < 2 || hop == 0 {
        return Err(Error::Config(format!("window_len must be ≥ 2 and hop ≥ 1 (got {window_len}, {hop})")));
    }
    if window_len > x.len() {
        return Err(Error::Config(format!(
            "window of {window_len} samples exceeds series length {}",
            x.len()
        )));
    }
    let frames = frame_count(x.len(), window_len, hop);
    let w = hann(window_len);
    let fft = FftPlanner::new().plan_fft_forward(window_len);
    let bins = window_len / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let mut magnitude = Vec::with_capacity(frames);
    let mut times = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * hop;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(x[start + k] * w[k], 0.0);
        }
        fft.process(&mut buf);
        magnitude.push(buf[..bins].iter().map(|c| c.norm()).collect());
        times.push((start as f64 + 0.5 * (window_len - 1) as f64) * dt);
    }
    let freqs = (0..bins).map(|k| k as f64 / (window_len as f64 * dt)).collect();
    Ok(StftResult { times, freqs, magnitude, window_len, hop })
}

/// Energy of the windowed frame recovered from one-sided magnitudes (Parseval).
pub fn frame_energy(row: &[f64], window_len: usize) -> f64 {
    let last = row.len() - 1;
    let mut s = 0.0;
    for (k, m) in row.iter().enumerate() {
        let weight = if k == 0 || (k == last && window_len.is_multiple_of(2)) { 1.0 } else { 2.0 };
        s += weight * m * m;
    }
    s / window_len as f64
}

impl StftResult {
    pub fn nyquist(&self) -> f64 {
        self.freqs[self.freqs.len() - 1]
    }

    /// Power in `[lo, hi]` Hz for one frame.
    pub fn band_power(&self, frame: usize, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.magnitude[frame])
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, m)| m * m)
            .sum()
    }

    /// Power excluding the DC bin.
    pub fn total_power(&self, frame: usize) -> f64 {
        self.magnitude[frame][1..].iter().map(|m| m * m).sum()
    }

    /// Frequency of the largest time-averaged power, excluding DC.
    pub fn dominant_frequency(&self) -> f64 {
        let mut best = (0.0, 1);
        for k in 1..self.freqs.len() {
            let p: f64 = self.magnitude.iter().map(|row| row[k] * row[k]).sum();
            if p > best.0 {
                best = (p, k);
            }
        }
        self.freqs[best.1]
    }

    /// Matrix CSV: header `time,<freq>...`, one row per frame.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("time");
        for f in &self.freqs {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.magnitude) {
            out.push_str(&format!("{t}"));
            for m in row {
                out.push_str(&format!(",{m}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Relative half-width of the encounter band around `2 f_φ`.
    pub wave_band_rel: f64,
    /// Relative half-width of the roll band around `f_φ`.
    pub roll_band_rel: f64,
    /// Minimum share of wave power inside the encounter band.
    pub min_wave_fraction: f64,
    /// Minimum share of roll power inside the roll band.
    pub min_roll_fraction: f64,
    /// Consecutive frame-to-frame increases of roll-band power required.
    pub min_growth_frames: usize,
    /// Minimum relative power increase between frames that counts as growth.
    pub min_growth_ratio: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            wave_band_rel: 0.10,
            roll_band_rel: 0.15,
            min_wave_fraction: 0.10,
            min_roll_fraction: 0.5,
            min_growth_frames: 3,
            min_growth_ratio: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub f_phi: f64,
    pub f_encounter: f64,
    pub wave_band: (f64, f64),
    pub roll_band: (f64, f64),
    pub wave_fraction: Vec<f64>,
    pub roll_fraction: Vec<f64>,
    pub roll_band_power: Vec<f64>,
    pub flagged: Vec<bool>,
    /// Flagged runs as `(start, end)` frame-center times (s).
    pub intervals: Vec<(f64, f64)>,
}

impl DetectionReport {
    pub fn detected(&self) -> bool {
        !self.intervals.is_empty()
    }
}

/// Flag frames where encounter energy near `2 f_φ` coincides with growing,
/// dominant roll-band energy.
pub fn detect_parametric_signature(
    roll: &StftResult,
    wave: &StftResult,
    f_phi_hint: Option<f64>,
    cfg: &DetectorConfig,
) -> Result<DetectionReport> {
    if roll.times.len() != wave.times.len() || roll.freqs != wave.freqs {
        return Err(Error::Shape("roll and wave STFTs must share frames and bins".into()));
    }
    if roll.times.is_empty() {
        return Err(Error::Shape("no STFT frames".into()));
    }
    let nyq = roll.nyquist();
    let f_phi = match f_phi_hint {
        Some(f) if f > 0.0 && 2.0 * f * (1.0 + cfg.wave_band_rel) <= nyq => f,
        Some(f) => {
            return Err(Error::Domain(format!(
                "roll frequency hint {f} Hz puts the encounter band outside (0, {nyq}] Hz"
            )))
        }
        None => roll.dominant_frequency(),
    };
    let f_e = 2.0 * f_phi;
    let wave_band = (f_e * (1.0 - cfg.wave_band_rel), f_e * (1.0 + cfg.wave_band_rel));
    // At least one bin on either side so coarse grids still see the roll line.
    let df = roll.freqs[1];
    let half = (f_phi * cfg.roll_band_rel).max(df);
    let roll_band = (f_phi - half, f_phi + half);
    let frames = roll.times.len();

    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let wave_fraction: Vec<f64> = (0..frames)
        .map(|k| ratio(wave.band_power(k, wave_band.0, wave_band.1), wave.total_power(k)))
        .collect();
    let roll_band_power: Vec<f64> =
        (0..frames).map(|k| roll.band_power(k, roll_band.0, roll_band.1)).collect();
    let roll_fraction: Vec<f64> =
        (0..frames).map(|k| ratio(roll_band_power[k], roll.total_power(k))).collect();

    let mut flagged = vec![false; frames];
    let mut k = 1;
    while k < frames {
        // Extend a run of strictly increasing roll-band power.
        let start = k - 1;
        let mut end = start;
        let grows = |j: usize| roll_band_power[j + 1] > roll_band_power[j] * (1.0 + cfg.min_growth_ratio);
        while end + 1 < frames && grows(end) {
            end += 1;
        }
        if end - start >= cfg.min_growth_frames {
            for j in start..=end {
                if wave_fraction[j] >= cfg.min_wave_fraction && roll_fraction[j] >= cfg.min_roll_fraction {
                    flagged[j] = true;
                }
            }
        }
        k = end.max(start + 1) + 1;
    }

    let mut intervals = Vec::new();
    let mut j = 0;
    while j < frames {
        if flagged[j] {
            let s = j;
            while j + 1 < frames && flagged[j + 1] {
                j += 1;
            }
            intervals.push((roll.times[s], roll.times[j]));
        }
        j += 1;
    }
    Ok(DetectionReport {
        f_phi,
        f_encounter: f_e,
        wave_band,
        roll_band,
        wave_fraction,
        roll_fraction,
        roll_band_power,
        flagged,
        intervals,
    })
}

/// Paired `(φ, θ)` samples, keeping every `decimate`-th point.
pub fn phase_portrait(roll: &[f64], pitch: &[f64], decimate: usize) -> Result<Vec<(f64, f64)>> {
    if roll.len() != pitch.len() {
        return Err(Error::Shape(format!("roll has {} samples, pitch {}", roll.len(), pitch.len())));
    }
    if decimate == 0 {
        return Err(Error::Config("decimation factor must be ≥ 1".into()));
    }
    Ok(roll.iter().zip(pitch).step_by(decimate).map(|(&r, &p)| (r, p)).collect())
}

pub fn write_phase_portrait_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("roll,pitch\n");
    for (r, p) in points {
        out.push_str(&format!("{r},{p}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use std::f64::consts::PI;

    fn tone(f: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 * dt).cos()).collect()
    }

    #[test]
    fn pure_tone_peak_bin() {
        let s = stft(&tone(0.1, 0.2, 2000), 0.2, 256, 64).unwrap();
        assert_eq!(s.magnitude.len(), (2000 - 256) / 64 + 1);
        let df = s.freqs[1];
        for row in &s.magnitude {
            let k = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!((s.freqs[k] - 0.1).abs() <= df);
        }
        assert_eq!(s.freqs[0], 0.0);
        assert!((s.nyquist() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_series_zero_magnitude() {
        let s = stft(&[0.0; 300], 0.2, 64, 16).unwrap();
        assert!(s.magnitude.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn chirp_ridge_increases() {
        let dt = 0.2;
        let n = 6000;
        let (f0, f1) = (0.05, 0.2);
        let tmax = n as f64 * dt;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / tmax * t * t)).sin()
            })
            .collect();
        let s = stft(&x, dt, 256, 256).unwrap();
        let ridge: Vec<f64> = s
            .magnitude
            .iter()
            .map(|row| s.freqs[(0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()])
            .collect();
        for w in ridge.windows(2) {
            assert!(w[1] >= w[0], "{ridge:?}");
        }
        assert!(ridge[ridge.len() - 1] > ridge[0]);
    }

    #[test]
    fn parseval_single_frame() {
        let mut rng = StreamRng::new(3);
        for n in [128usize, 129] {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let s = stft(&x, 0.2, n, 1).unwrap();
            let w = hann(n);
            let energy: f64 = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
            let e = frame_energy(&s.magnitude[0], n);
            assert!((e - energy).abs() <= 1e-6 * energy, "{e} {energy}");
        }
    }

    #[test]
    fn stft_errors() {
        assert!(matches!(stft(&[0.0; 10], 0.2, 16, 4), Err(Error::Config(_))));
        assert!(stft(&[0.0; 10], 0.2, 4, 0).is_err());
        assert!(stft(&[0.0; 10], 0.0, 4, 1).is_err());
    }

    #[test]
    fn flag_band_for_twelve_second_roll() {
        let dt = 0.2;
        let n = 3000;
        let r = stft(&tone(1.0 / 12.0, dt, n), dt, 256, 64).unwrap();
        let w = stft(&tone(1.0 / 6.0, dt, n), dt, 256, 64).unwrap();
        let rep = detect_parametric_signature(&r, &w, Some(1.0 / 12.0), &DetectorConfig::default()).unwrap();
        assert!((rep.f_encounter - 1.0 / 6.0).abs() < 1e-12);
        assert!((rep.wave_band.0 - 0.9 / 6.0).abs() < 1e-12);
        assert!((rep.wave_band.1 - 1.1 / 6.0).abs() < 1e-12);
        // Stationary roll never grows.
        assert!(!rep.detected());
        assert!(detect_parametric_signature(&r, &w, Some(2.0), &DetectorConfig::default()).is_err());
    }

    #[test]
    fn growing_subharmonic_is_flagged() {
        let dt = 0.2;
        let n = 4000;
        let fr = 1.0 / 12.0;
        let roll: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (0.004 * t).exp() * (2.0 * PI * fr * t).cos()
            })
            .collect();
        let r = stft(&roll, dt, 256, 64).unwrap();
        let w = stft(&tone(2.0 * fr, dt, n), dt, 256, 64).unwrap();
        let rep = detect_parametric_signature(&r, &w, None, &DetectorConfig::default()).unwrap();
        assert!((rep.f_phi - fr).abs() <= r.freqs[1]);
        assert!(rep.detected());
        assert_eq!(rep.flagged.iter().filter(|f| **f).count(), rep.flagged.len());
        // Same growth without encounter energy near 2 f_φ.
        let far = stft(&tone(0.4, dt, n), dt, 256, 64).unwrap();
        let rep = detect_parametric_signature(&r, &far, None, &DetectorConfig::default()).unwrap();
        assert!(!rep.detected());
    }

    #[test]
    fn phase_portrait_examples() {
        let roll: Vec<f64> = (0..100).map(|k| (k as f64 * 0.1).sin()).collect();
        let pitch: Vec<f64> = roll.iter().map(|r| 0.5 * r).collect();
        let pts = phase_portrait(&roll, &pitch, 1).unwrap();
        assert!(pts.iter().all(|(r, p)| (p - 0.5 * r).abs() < 1e-15));
        assert_eq!(phase_portrait(&roll, &pitch, 10).unwrap().len(), 10);
        assert!(phase_portrait(&roll, &pitch[..5], 1).is_err());
        assert!(phase_portrait(&roll, &pitch, 0).is_err());
    }

    #[test]
    fn independent_noise_uncorrelated() {
        let mut rng = StreamRng::new(8);
        let a: Vec<f64> = (0..50_000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..50_000).map(|_| rng.normal()).collect();
        let pts = phase_portrait(&a, &b, 1).unwrap();
        let n = pts.len() as f64;
        let corr = pts.iter().map(|(x, y)| x * y).sum::<f64>() / n;
        assert!(corr.abs() < 0.02);
    }
}
