//! Paired wave/motion realizations: canonical CSV + manifest I/O, causal
//! stencil windows, normalization and seed-level splits.
//!
//! Canonical realization file: one CSV with header
//! `t,probe_1,...,probe_N,heave,pitch,roll` (s, m, m, deg, deg).
//! A campaign is a directory of such files plus `manifest.json`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{MotionRecord, CHANNEL_NAMES};
use crate::rng::StreamRng;
use crate::spectra::SeaState;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
/// Largest accepted deviation of a time stamp from the uniform grid (s).
pub const DT_TOLERANCE: f64 = 1e-6;
/// Floor applied to fitted normalization scales.
pub const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RealizationId {
    pub sea_state: String,
    pub seed: u64,
}

impl std::fmt::Display for RealizationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/seed{}", self.sea_state, self.seed)
    }
}

/// One seeded record: probe elevations plus vessel motions on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub id: RealizationId,
    pub dt: f64,
    pub probes: Vec<Vec<f64>>,
    pub motions: MotionRecord,
}

impl Realization {
    pub fn new(id: RealizationId, dt: f64, probes: Vec<Vec<f64>>, motions: MotionRecord) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::Shape(format!("{id}: at least one probe required")));
        }
        let len = motions.len();
        if probes.iter().any(|p| p.len() != len) {
            return Err(Error::Shape(format!("{id}: probe and motion series differ in length")));
        }
        if (motions.dt - dt).abs() > DT_TOLERANCE {
            return Err(Error::Shape(format!("{id}: motion dt {} differs from probe dt {dt}", motions.dt)));
        }
        Ok(Self { id, dt, probes, motions })
    }

    pub fn len(&self) -> usize {
        self.motions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motions.is_empty()
    }

    pub fn num_probes(&self) -> usize {
        self.probes.len()
    }
}

pub fn realization_file_name(id: &RealizationId) -> String {
    format!("{}_seed{:03}.csv", id.sea_state, id.seed)
}

pub fn csv_header(num_probes: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=num_probes).map(|i| format!("probe_{i}")));
    cols.extend(CHANNEL_NAMES.iter().map(|s| s.to_string()));
    cols.join(",")
}

/// Write one realization in the canonical layout.
///
/// Values use Rust's shortest round-trip formatting, so reading the file
/// back reproduces every sample bit for bit.
pub fn write_realization_csv(path: &Path, r: &Realization) -> Result<()> {
    let mut out = String::with_capacity(r.len() * 16 * (4 + r.num_probes()));
    out.push_str(&csv_header(r.num_probes()));
    out.push('\n');
    for k in 0..r.len() {
        out.push_str(&format!("{}", k as f64 * r.dt));
        for p in &r.probes {
            out.push_str(&format!(",{}", p[k]));
        }
        for c in 0..3 {
            out.push_str(&format!(",{}", r.motions.channel(c)[k]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parse a canonical realization CSV.
pub fn read_realization_csv(path: &Path, id: RealizationId) -> Result<Realization> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::load(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::load(path, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let width = header.len();
    if width < 5 {
        return Err(Error::load(path, format!("header has {width} columns, need at least 5")));
    }
    let num_probes = width - 4;
    let expected = csv_header(num_probes);
    if header.join(",") != expected {
        return Err(Error::load(
            path,
            format!("unexpected header `{}`, expected `{expected}`", header.join(",")),
        ));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::load(path, e.to_string()))?;
        if record.len() != width {
            return Err(Error::load(
                path,
                format!(
                    "length mismatch: data row {} has {} fields, header has {width}",
                    row + 1,
                    record.len()
                ),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::load(
                    path,
                    format!("row {}: `{field}` in column {} is not a number", row + 1, header[col]),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::load(path, format!("row {}: non-finite value", row + 1)));
            }
            columns[col].push(v);
        }
    }
    let times = &columns[0];
    if times.len() < 2 {
        return Err(Error::load(path, "need at least two samples"));
    }
    let dt = uniform_step(times).map_err(|m| Error::load(path, m))?;

    let roll = columns.pop().unwrap_or_default();
    let pitch = columns.pop().unwrap_or_default();
    let heave = columns.pop().unwrap_or_default();
    let probes: Vec<Vec<f64>> = columns.drain(1..).collect();
    let motions = MotionRecord::new(dt, heave, pitch, roll).map_err(|e| Error::load(path, e.to_string()))?;
    Realization::new(id, dt, probes, motions).map_err(|e| Error::load(path, e.to_string()))
}

/// Step of a uniform time axis; rejects jitter beyond [`DT_TOLERANCE`].
fn uniform_step(times: &[f64]) -> std::result::Result<f64, String> {
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err("time column is not increasing".into());
    }
    for (k, t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * dt;
        if (t - expected).abs() > DT_TOLERANCE {
            return Err(format!(
                "non-uniform dt: sample {k} at t = {t} deviates from the uniform grid by {:.3e} s",
                (t - expected).abs()
            ));
        }
    }
    Ok(dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignFile {
    /// Relative to the manifest directory.
    pub path: PathBuf,
    pub sea_state: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub time: String,
    pub probe: String,
    pub heave: String,
    pub pitch: String,
    pub roll: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            time: "s".into(),
            probe: "m".into(),
            heave: "m".into(),
            pitch: "deg".into(),
            roll: "deg".into(),
        }
    }
}

/// Campaign index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub sea_states: Vec<SeaState>,
    pub dt: f64,
    pub files: Vec<CampaignFile>,
    /// Distinct seeds used by each sea state.
    pub seeds: BTreeMap<String, Vec<u64>>,
    pub units: Units,
    /// Generator parameters (oracle tuning constants) when synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl Manifest {
    pub fn new(
        sea_states: Vec<SeaState>,
        dt: f64,
        files: Vec<CampaignFile>,
        generator: Option<serde_json::Value>,
    ) -> Self {
        let mut seeds: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for f in &files {
            seeds.entry(f.sea_state.clone()).or_default().push(f.seed);
        }
        for v in seeds.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Self { version: MANIFEST_VERSION, sea_states, dt, files, seeds, units: Units::default(), generator }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::load(path, format!("cannot read manifest: {e}")))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        m.validate().map_err(|msg| Error::load(path, msg))?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")).map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.version != MANIFEST_VERSION {
            return Err(format!("unsupported manifest version {}", self.version));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(format!("invalid dt {}", self.dt));
        }
        if self.files.is_empty() {
            return Err("manifest lists no files".into());
        }
        let labels: HashSet<&str> = self.sea_states.iter().map(|s| s.label.as_str()).collect();
        let mut ids = HashSet::new();
        for f in &self.files {
            if !labels.contains(f.sea_state.as_str()) {
                return Err(format!(
                    "file {} references unknown sea state {}",
                    f.path.display(),
                    f.sea_state
                ));
            }
            if !ids.insert((f.sea_state.as_str(), f.seed)) {
                return Err(format!("duplicate realization {}/seed{}", f.sea_state, f.seed));
            }
        }
        for s in &self.sea_states {
            s.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn sea_state(&self, label: &str) -> Option<&SeaState> {
        self.sea_states.iter().find(|s| s.label == label)
    }
}

/// Load and validate every realization listed in a manifest.
pub fn load_campaign(manifest_path: &Path) -> Result<Vec<Realization>> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::with_capacity(manifest.files.len());
    let mut num_probes = None;
    for f in &manifest.files {
        let path = base.join(&f.path);
        let r = read_realization_csv(&path, RealizationId { sea_state: f.sea_state.clone(), seed: f.seed })?;
        if (r.dt - manifest.dt).abs() > DT_TOLERANCE {
            return Err(Error::load(&path, format!("dt {} differs from manifest dt {}", r.dt, manifest.dt)));
        }
        match num_probes {
            None => num_probes = Some(r.num_probes()),
            Some(n) if n != r.num_probes() => {
                return Err(Error::load(
                    &path,
                    format!("has {} probes, earlier files have {n}", r.num_probes()),
                ))
            }
            _ => {}
        }
        out.push(r);
    }
    Ok(out)
}

/// Per-channel affine map `z = (v - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub mean: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { mean: 0.0, scale: 1.0 };

    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut all = Vec::new();
        for v in values {
            n += 1;
            sum += v;
            all.push(v);
        }
        if n == 0 {
            return Self::IDENTITY;
        }
        let mean = sum / n as f64;
        let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Self { mean, scale: var.sqrt().max(SCALE_FLOOR) }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

/// Normalization for the selected probe inputs and the three motion outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub inputs: Vec<Affine>,
    pub outputs: Vec<Affine>,
}

impl Normalization {
    pub fn identity(num_inputs: usize) -> Self {
        Self { inputs: vec![Affine::IDENTITY; num_inputs], outputs: vec![Affine::IDENTITY; 3] }
    }
}

/// Fit normalization statistics from training realizations only.
pub fn fit_normalization(train: &[Realization], probe_ids: &[usize]) -> Result<Normalization> {
    if train.is_empty() {
        return Err(Error::Config("cannot fit normalization on an empty training set".into()));
    }
    for r in train {
        if let Some(&p) = probe_ids.iter().find(|&&p| p >= r.num_probes()) {
            return Err(Error::Config(format!("{}: probe {p} does not exist", r.id)));
        }
    }
    let inputs = probe_ids
        .iter()
        .map(|&p| Affine::fit(train.iter().flat_map(|r| r.probes[p].iter().copied())))
        .collect();
    let outputs = (0..3)
        .map(|c| Affine::fit(train.iter().flat_map(|r| r.motions.channel(c).iter().copied())))
        .collect();
    Ok(Normalization { inputs, outputs })
}

/// Causal window configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilConfig {
    /// History length K; windows hold K + 1 samples.
    pub window_len: usize,
    /// Zero-based probe indices fed to the network.
    pub probe_ids: Vec<usize>,
    pub stride: usize,
    pub normalization: Normalization,
}

impl StencilConfig {
    pub const DEFAULT_WINDOW: usize = 99;

    pub fn new(
        window_len: usize,
        probe_ids: Vec<usize>,
        stride: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        let cfg = Self { window_len, probe_ids, stride, normalization };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.probe_ids.is_empty() {
            return Err(Error::Config("at least one probe must be selected".into()));
        }
        if self.normalization.inputs.len() != self.probe_ids.len() || self.normalization.outputs.len() != 3 {
            return Err(Error::Config("normalization does not match the selected channels".into()));
        }
        let scales = self
            .normalization
            .inputs
            .iter()
            .chain(&self.normalization.outputs)
            .all(|a| a.scale > 0.0 && a.scale.is_finite() && a.mean.is_finite());
        if !scales {
            return Err(Error::Config("normalization scales must be positive and finite".into()));
        }
        Ok(())
    }

    /// Rows per window, K + 1.
    pub fn rows(&self) -> usize {
        self.window_len + 1
    }

    pub fn num_inputs(&self) -> usize {
        self.probe_ids.len()
    }

    /// Number of windows for a series of length `len`: `floor((len - 1 - K) / stride) + 1`.
    pub fn sample_count(&self, len: usize) -> usize {
        if len <= self.window_len {
            0
        } else {
            (len - 1 - self.window_len) / self.stride + 1
        }
    }
}

/// One causal window and the motions at its final time.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilSample {
    /// `(K + 1) × N` row-major; row 0 is time `t`, row `k` is `t - kΔt`.
    pub x: Vec<f64>,
    /// Normalized heave, pitch, roll at time `t`.
    pub y: [f64; 3],
    /// Sample index of `t` in the source realization.
    pub t_index: usize,
}

/// Normalized window ending at sample `t`.
pub fn window_at(r: &Realization, cfg: &StencilConfig, t: usize) -> Vec<f64> {
    let n = cfg.num_inputs();
    let mut x = Vec::with_capacity(cfg.rows() * n);
    for k in 0..cfg.rows() {
        for (j, &p) in cfg.probe_ids.iter().enumerate() {
            x.push(cfg.normalization.inputs[j].apply(r.probes[p][t - k]));
        }
    }
    x
}

pub fn build_stencil(r: &Realization, cfg: &StencilConfig) -> Result<Vec<StencilSample>> {
    cfg.validate()?;
    if cfg.window_len >= r.len() {
        return Err(Error::Config(format!(
            "{}: window length K = {} needs more than {} samples",
            r.id,
            cfg.window_len,
            r.len()
        )));
    }
    if let Some(&p) = cfg.probe_ids.iter().find(|&&p| p >= r.num_probes()) {
        return Err(Error::Config(format!("{}: probe {p} does not exist", r.id)));
    }
    let count = cfg.sample_count(r.len());
    let out = (0..count)
        .map(|j| {
            let t = cfg.window_len + j * cfg.stride;
            let mut y = [0.0; 3];
            for (c, v) in y.iter_mut().enumerate() {
                *v = cfg.normalization.outputs[c].apply(r.motions.channel(c)[t]);
            }
            StencilSample { x: window_at(r, cfg, t), y, t_index: t }
        })
        .collect();
    Ok(out)
}

/// Per-sea-state seed partition.
///
/// Seeds of each state are shuffled with a stream derived from `(seed, label)`;
/// the first `n_train` go to training, the next `n_test` to testing.
pub fn split_seeds(
    realizations: &[Realization],
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<Realization>, Vec<Realization>)> {
    let mut by_state: BTreeMap<&str, Vec<&Realization>> = BTreeMap::new();
    for r in realizations {
        by_state.entry(r.id.sea_state.as_str()).or_default().push(r);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut group) in by_state {
        if n_train + n_test > group.len() {
            return Err(Error::Config(format!(
                "sea state {label}: requested {n_train} train + {n_test} test seeds but only {} available",
                group.len()
            )));
        }
        group.sort_by_key(|r| r.id.seed);
        StreamRng::from_path(seed, &["split", label]).shuffle(&mut group);
        let mut chosen_train: Vec<&Realization> = group[..n_train].to_vec();
        let mut chosen_test: Vec<&Realization> = group[n_train..n_train + n_test].to_vec();
        chosen_train.sort_by_key(|r| r.id.seed);
        chosen_test.sort_by_key(|r| r.id.seed);
        train.extend(chosen_train.into_iter().cloned());
        test.extend(chosen_test.into_iter().cloned());
    }
    Ok((train, test))
}

/// Column mapping from an external CSV layout onto the canonical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalLayout {
    pub time_col: String,
    pub probe_cols: Vec<String>,
    pub heave_col: String,
    pub pitch_col: String,
    pub roll_col: String,
    /// Angles given in radians rather than degrees.
    #[serde(default)]
    pub angles_in_radians: bool,
}

/// Read an arbitrary-layout CSV and map it onto a [`Realization`].
pub fn read_external_csv(path: &Path, layout: &ExternalLayout, id: RealizationId) -> Result<Realization> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::load(path, e.to_string()))?;
    let header: Vec<String> =
        reader.headers().map_err(|e| Error::load(path, e.to_string()))?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::load(path, format!("column `{name}` not found")))
    };
    let mut wanted = vec![find(&layout.time_col)?];
    for p in &layout.probe_cols {
        wanted.push(find(p)?);
    }
    wanted.push(find(&layout.heave_col)?);
    wanted.push(find(&layout.pitch_col)?);
    wanted.push(find(&layout.roll_col)?);
    if layout.probe_cols.is_empty() {
        return Err(Error::load(path, "layout names no probe columns"));
    }

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::load(path, e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::load(
                path,
                format!(
                    "length mismatch: data row {} has {} fields, header has {}",
                    row + 1,
                    record.len(),
                    header.len()
                ),
            ));
        }
        for (slot, &c) in wanted.iter().enumerate() {
            let v: f64 = record[c].parse().map_err(|_| {
                Error::load(path, format!("row {}: `{}` is not a number", row + 1, &record[c]))
            })?;
            cols[slot].push(v);
        }
    }
    if cols[0].len() < 2 {
        return Err(Error::load(path, "need at least two samples"));
    }
    let dt = uniform_step(&cols[0]).map_err(|m| Error::load(path, m))?;
    let to_deg = |v: Vec<f64>| -> Vec<f64> {
        if layout.angles_in_radians {
            v.into_iter().map(f64::to_degrees).collect()
        } else {
            v
        }
    };
    let roll = to_deg(cols.pop().unwrap_or_default());
    let pitch = to_deg(cols.pop().unwrap_or_default());
    let heave = cols.pop().unwrap_or_default();
    let probes: Vec<Vec<f64>> = cols.drain(1..).collect();
    let motions = MotionRecord::new(dt, heave, pitch, roll).map_err(|e| Error::load(path, e.to_string()))?;
    Realization::new(id, dt, probes, motions).map_err(|e| Error::load(path, e.to_string()))
}

/// Write realizations as a canonical campaign directory.
pub fn write_campaign(
    out_dir: &Path,
    sea_states: Vec<SeaState>,
    realizations: &[Realization],
    generator: Option<serde_json::Value>,
) -> Result<Manifest> {
    let first = realizations.first().ok_or_else(|| Error::Config("no realizations to write".into()))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::with_capacity(realizations.len());
    for r in realizations {
        if (r.dt - first.dt).abs() > DT_TOLERANCE {
            return Err(Error::Config(format!("{}: dt {} differs from {}", r.id, r.dt, first.dt)));
        }
        let name = realization_file_name(&r.id);
        write_realization_csv(&out_dir.join(&name), r)?;
        files.push(CampaignFile {
            path: PathBuf::from(name),
            sea_state: r.id.sea_state.clone(),
            seed: r.id.seed,
        });
    }
    let manifest = Manifest::new(sea_states, first.dt, files, generator);
    manifest.validate().map_err(Error::Config)?;
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

/// External realizations to convert into a canonical campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub layout: ExternalLayout,
    pub sea_states: Vec<SeaState>,
    /// Paths are relative to the spec file's directory.
    pub files: Vec<CampaignFile>,
}

/// Convert every file listed in `spec` into a canonical campaign in `out_dir`.
pub fn ingest_external(spec: &IngestSpec, base: &Path, out_dir: &Path) -> Result<Manifest> {
    let realizations = spec
        .files
        .iter()
        .map(|f| {
            let id = RealizationId { sea_state: f.sea_state.clone(), seed: f.seed };
            read_external_csv(&base.join(&f.path), &spec.layout, id)
        })
        .collect::<Result<Vec<_>>>()?;
    write_campaign(out_dir, spec.sea_states.clone(), &realizations, None)
}
