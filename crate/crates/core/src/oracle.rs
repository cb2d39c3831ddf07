//! Desk-scale stand-in for the numerical wave tank.
//!
//! Roll follows a Mathieu-type oscillator with cubic restoring and a small
//! direct wave moment,
//!
//! ```text
//! φ'' + 2ν φ' + ω_φ² (1 + h ζ(t)/ζ_ref + κ θ(t)) φ + c3 φ³ = m_dir ζ(t)
//! ```
//!
//! while heave and pitch are linear second-order filters of the same
//! elevation record. Everything is integrated with fixed-step RK4 at the data
//! step; forcing at the half steps comes from cubic interpolation of the
//! sampled record.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, CampaignFile, Manifest, Realization, RealizationId};
use crate::error::{Error, Result};
use crate::spectra::{self, BandConfig, Discretization, ElevationSeries, SeaState};

/// Largest `ω·dt` accepted by the fixed-step integrator.
pub const MAX_OMEGA_DT: f64 = 0.5;

/// Roll oscillator with wave-modulated restoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollModel {
    /// Natural roll frequency ω_φ (rad/s).
    pub omega_phi: f64,
    /// Linear damping ν (1/s).
    pub nu: f64,
    /// Restoring-modulation depth per unit normalized elevation.
    pub h: f64,
    /// Cubic restoring coefficient (rad⁻²·s⁻²).
    pub c3: f64,
    /// Direct wave moment (rad·s⁻²·m⁻¹).
    pub m_dir: f64,
    /// Normalizing elevation (m).
    pub zeta_ref: f64,
    /// Restoring modulation per radian of pitch.
    #[serde(default)]
    pub pitch_coupling: f64,
    /// Initial roll angle (rad); initial roll rate is zero.
    #[serde(default)]
    pub initial_roll: f64,
}

impl RollModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_phi,
            self.nu,
            self.h,
            self.c3,
            self.m_dir,
            self.zeta_ref,
            self.pitch_coupling,
            self.initial_roll,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("roll model has non-finite coefficients".into()));
        }
        if self.omega_phi <= 0.0 {
            return Err(Error::Domain("omega_phi must be positive".into()));
        }
        if self.nu < 0.0 {
            return Err(Error::Domain("nu must be non-negative".into()));
        }
        if self.zeta_ref <= 0.0 {
            return Err(Error::Domain("zeta_ref must be positive".into()));
        }
        Ok(())
    }

    /// Small-ε boundary of the first Mathieu tongue, `4ν/ω_φ`.
    pub fn mathieu_threshold(&self) -> f64 {
        4.0 * self.nu / self.omega_phi
    }
}

/// Damped second-order filter `x'' + 2ζω x' + ω² x = gain ω² ζ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDofModel {
    pub omega_n: f64,
    pub zeta_damp: f64,
    /// Static response per metre of elevation.
    pub gain: f64,
}

impl LinearDofModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_n.is_finite() && self.omega_n > 0.0) {
            return Err(Error::Domain("omega_n must be positive".into()));
        }
        if !(self.zeta_damp > 0.0 && self.zeta_damp < 2.0) {
            return Err(Error::Domain(format!("zeta_damp must lie in (0, 2), got {}", self.zeta_damp)));
        }
        if !self.gain.is_finite() {
            return Err(Error::Domain("gain must be finite".into()));
        }
        Ok(())
    }

    /// Steady-state amplitude ratio at driving frequency `omega`.
    pub fn transfer_magnitude(&self, omega: f64) -> f64 {
        let wn2 = self.omega_n * self.omega_n;
        let re = wn2 - omega * omega;
        let im = 2.0 * self.zeta_damp * self.omega_n * omega;
        self.gain.abs() * wn2 / (re * re + im * im).sqrt()
    }
}

/// Heave (m), pitch (deg) and roll (deg) on a common uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub dt: f64,
    pub heave: Vec<f64>,
    pub pitch: Vec<f64>,
    pub roll: Vec<f64>,
}

impl MotionRecord {
    pub fn new(dt: f64, heave: Vec<f64>, pitch: Vec<f64>, roll: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if heave.len() != pitch.len() || pitch.len() != roll.len() {
            return Err(Error::Shape(format!(
                "motion channels differ in length: heave {}, pitch {}, roll {}",
                heave.len(),
                pitch.len(),
                roll.len()
            )));
        }
        Ok(Self { dt, heave, pitch, roll })
    }

    pub fn len(&self) -> usize {
        self.roll.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roll.is_empty()
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.heave,
            1 => &self.pitch,
            2 => &self.roll,
            _ => panic!("motion channel {index} out of range"),
        }
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut Vec<f64> {
        match index {
            0 => &mut self.heave,
            1 => &mut self.pitch,
            2 => &mut self.roll,
            _ => panic!("motion channel {index} out of range"),
        }
    }
}

pub const CHANNEL_NAMES: [&str; 3] = ["heave", "pitch", "roll"];

/// Value of a sampled signal half way between samples `k` and `k + 1`.
fn midpoint(z: &[f64], k: usize) -> f64 {
    let n = z.len();
    if k >= 1 && k + 2 < n {
        (-z[k - 1] + 9.0 * z[k] + 9.0 * z[k + 1] - z[k + 2]) / 16.0
    } else if k == 0 && n >= 3 {
        (3.0 * z[0] + 6.0 * z[1] - z[2]) / 8.0
    } else if k >= 1 && k + 1 < n {
        (-z[k - 1] + 6.0 * z[k] + 3.0 * z[k + 1]) / 8.0
    } else {
        0.5 * (z[k] + z[k + 1])
    }
}

fn check_step(omega: f64, dt: f64) -> Result<()> {
    if omega * dt >= MAX_OMEGA_DT {
        return Err(Error::Config(format!(
            "integration step too coarse: ω·dt = {} (limit {MAX_OMEGA_DT})",
            omega * dt
        )));
    }
    Ok(())
}

/// Integrate a second-order system `x'' = accel(k_half, x, x')` over a sampled record.
///
/// `accel` receives the forcing sample index in half steps (`2k`, `2k+1`, `2k+2`).
fn rk4<F>(len: usize, dt: f64, x0: f64, mut accel: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, f64, f64) -> f64,
{
    let mut out = Vec::with_capacity(len);
    let (mut x, mut v) = (x0, 0.0);
    out.push(x);
    let half = 0.5 * dt;
    for k in 0..len.saturating_sub(1) {
        let a1 = accel(2 * k, x, v);
        let (x2, v2) = (x + half * v, v + half * a1);
        let a2 = accel(2 * k + 1, x2, v2);
        let (x3, v3) = (x + half * v2, v + half * a2);
        let a3 = accel(2 * k + 1, x3, v3);
        let (x4, v4) = (x + dt * v3, v + dt * a3);
        let a4 = accel(2 * k + 2, x4, v4);
        x += dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
        v += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        if !(x.is_finite() && v.is_finite()) || x.abs() > 1e6 {
            return Err(Error::Simulation {
                step: k + 1,
                message: format!("state diverged (x = {x}, v = {v})"),
            });
        }
        out.push(x);
    }
    Ok(out)
}

/// Forcing sampled at whole and half steps.
struct HalfStepSignal<'a> {
    samples: &'a [f64],
}

impl HalfStepSignal<'_> {
    fn at(&self, half_index: usize) -> f64 {
        let k = half_index / 2;
        if half_index.is_multiple_of(2) {
            self.samples[k]
        } else {
            midpoint(self.samples, k)
        }
    }
}

/// Roll response in degrees, without pitch coupling.
pub fn simulate_roll(wave: &ElevationSeries, model: &RollModel) -> Result<Vec<f64>> {
    simulate_roll_coupled(wave, None, model)
}

/// Roll response in degrees; `pitch` (rad) enters the restoring modulation
/// through `model.pitch_coupling`.
pub fn simulate_roll_coupled(
    wave: &ElevationSeries,
    pitch: Option<&[f64]>,
    model: &RollModel,
) -> Result<Vec<f64>> {
    model.validate()?;
    check_step(model.omega_phi, wave.dt)?;
    if let Some(p) = pitch {
        if p.len() != wave.len() {
            return Err(Error::Shape(format!(
                "pitch series has {} samples, elevation has {}",
                p.len(),
                wave.len()
            )));
        }
    }
    let zeta = HalfStepSignal { samples: &wave.samples };
    let theta = pitch.map(|samples| HalfStepSignal { samples });
    let w2 = model.omega_phi * model.omega_phi;
    let roll = rk4(wave.len(), wave.dt, model.initial_roll, |hk, phi, rate| {
        let z = zeta.at(hk);
        let th = theta.as_ref().map_or(0.0, |t| t.at(hk));
        let stiffness = w2 * (1.0 + model.h * z / model.zeta_ref + model.pitch_coupling * th);
        model.m_dir * z - 2.0 * model.nu * rate - stiffness * phi - model.c3 * phi * phi * phi
    })?;
    Ok(roll.into_iter().map(f64::to_degrees).collect())
}

/// Response of a linear degree of freedom in the model's output units.
pub fn simulate_linear_dof(wave: &ElevationSeries, model: &LinearDofModel) -> Result<Vec<f64>> {
    model.validate()?;
    check_step(model.omega_n, wave.dt)?;
    let zeta = HalfStepSignal { samples: &wave.samples };
    let w2 = model.omega_n * model.omega_n;
    let c = 2.0 * model.zeta_damp * model.omega_n;
    rk4(wave.len(), wave.dt, 0.0, |hk, x, v| model.gain * w2 * zeta.at(hk) - c * v - w2 * x)
}

/// Every constant the oracle campaign depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub dt: f64,
    /// Realization length (s).
    pub duration: f64,
    pub band: BandConfig,
    /// Multiplier applied to wave frequencies before synthesis; maps the
    /// fixed-frame spectrum onto the encounter frame seen by the moving hull.
    pub encounter_scale: f64,
    pub roll: RollModel,
    pub heave: LinearDofModel,
    /// Pitch filter; its output gain is in radians per metre.
    pub pitch: LinearDofModel,
    /// Root of every phase stream in the campaign.
    #[serde(default)]
    pub campaign_seed: u64,
}

impl OracleConfig {
    /// Natural roll period used by the defaults (s). Illustrative, not hull-derived.
    pub const ROLL_PERIOD: f64 = 12.0;
    /// Peak period (s) of the sea state placed at the 2:1 encounter condition.
    pub const SEVERE_PEAK_PERIOD: f64 = 13.4;

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration > self.dt) {
            return Err(Error::Config("duration must exceed dt".into()));
        }
        if !(self.encounter_scale.is_finite() && self.encounter_scale > 0.0) {
            return Err(Error::Config("encounter_scale must be positive".into()));
        }
        self.roll.validate()?;
        self.heave.validate()?;
        self.pitch.validate()
    }

    /// Elevation record for one realization, in the encounter frame.
    pub fn wave(&self, sea: &SeaState, seed: u64) -> Result<ElevationSeries> {
        let components = self
            .band
            .discretize(sea, realization_seed(self.campaign_seed, &sea.label, seed))?
            .scaled_frequencies(self.encounter_scale)?;
        spectra::synthesize(&components, self.dt, self.duration)
    }

    pub fn motions(&self, wave: &ElevationSeries) -> Result<MotionRecord> {
        let heave = simulate_linear_dof(wave, &self.heave)?;
        let pitch_rad = simulate_linear_dof(wave, &self.pitch)?;
        let roll = simulate_roll_coupled(wave, Some(&pitch_rad), &self.roll)?;
        let pitch = pitch_rad.into_iter().map(f64::to_degrees).collect();
        MotionRecord::new(wave.dt, heave, pitch, roll)
    }

    pub fn realization(&self, sea: &SeaState, seed: u64) -> Result<Realization> {
        let wave = self.wave(sea, seed)?;
        let motions = self.motions(&wave)?;
        Realization::new(
            RealizationId { sea_state: sea.label.clone(), seed },
            wave.dt,
            vec![wave.samples],
            motions,
        )
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        let omega_phi = TAU / Self::ROLL_PERIOD;
        // Severe-state spectral peak lands on twice the roll frequency.
        let encounter_scale = 2.0 * omega_phi / (TAU / Self::SEVERE_PEAK_PERIOD);
        Self {
            dt: 0.2,
            duration: 1200.0,
            band: BandConfig {
                n: 200,
                omega_min_factor: 0.3,
                omega_max_factor: 5.0,
                discretization: Discretization::Stratified,
            },
            encounter_scale,
            roll: RollModel {
                omega_phi,
                nu: 0.6 * omega_phi,
                h: 1.6,
                c3: omega_phi * omega_phi,
                m_dir: 0.05,
                zeta_ref: 2.67,
                pitch_coupling: 0.5,
                initial_roll: 0.01,
            },
            heave: LinearDofModel { omega_n: TAU / 8.0, zeta_damp: 0.3, gain: 0.8 },
            pitch: LinearDofModel { omega_n: TAU / 7.0, zeta_damp: 0.3, gain: 0.02 },
            campaign_seed: 0,
        }
    }
}

/// Phase seed of one realization, derived only from the campaign seed, its
/// sea-state label and its seed.
pub fn realization_seed(campaign_seed: u64, label: &str, seed: u64) -> u64 {
    crate::rng::StreamRng::from_path(campaign_seed, &["oracle", label]).split_index(seed).next_u64()
}

/// Generate `seeds_per_state` realizations per sea state into `out_dir`.
///
/// Seeds run `1..=seeds_per_state`. Writes one canonical CSV per realization
/// and `manifest.json`; returns the manifest.
pub fn generate_campaign(
    sea_states: &[SeaState],
    seeds_per_state: usize,
    cfg: &OracleConfig,
    out_dir: &Path,
) -> Result<Manifest> {
    if sea_states.is_empty() || seeds_per_state == 0 {
        return Err(Error::Config("campaign needs at least one sea state and one seed".into()));
    }
    cfg.validate()?;
    for s in sea_states {
        s.validate()?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let jobs: Vec<(&SeaState, u64)> =
        sea_states.iter().flat_map(|s| (1..=seeds_per_state as u64).map(move |seed| (s, seed))).collect();
    let files = jobs
        .par_iter()
        .map(|(sea, seed)| -> Result<CampaignFile> {
            let r = cfg.realization(sea, *seed)?;
            let name = dataset::realization_file_name(&r.id);
            dataset::write_realization_csv(&out_dir.join(&name), &r)?;
            Ok(CampaignFile { path: PathBuf::from(name), sea_state: sea.label.clone(), seed: *seed })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest::new(
        sea_states.to_vec(),
        cfg.dt,
        files,
        Some(serde_json::to_value(cfg).expect("oracle config serializes")),
    );
    manifest.write(&out_dir.join(dataset::MANIFEST_NAME))?;
    Ok(manifest)
}
