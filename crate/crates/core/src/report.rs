//! Figure bundles: CSV data plus SVG plots for time-series overlays, roll
//! PDFs, STFT maps, phase portraits and bar metrics.
//!
//! Each figure group is written to a staging directory and renamed into place
//! only once complete, so a failed run never leaves a half-written group.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Realization;
use crate::diagnostics::{self, DetectorConfig};
use crate::eval::{self, EvalConfig, EvalReport, Paired};
use crate::lstm::Checkpoint;
use crate::oracle::CHANNEL_NAMES;
use crate::svg::{self, Axes, Series};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub eval: EvalConfig,
    /// STFT window and hop, in samples.
    pub stft_window: usize,
    pub stft_hop: usize,
    pub detector: DetectorConfig,
    /// Length of the plotted time-series excerpt (s).
    pub excerpt_seconds: f64,
    pub phase_decimate: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            stft_window: diagnostics::DEFAULT_WINDOW,
            stft_hop: diagnostics::DEFAULT_HOP,
            detector: DetectorConfig::default(),
            excerpt_seconds: 300.0,
            phase_decimate: 1,
        }
    }
}

/// Predictions and metrics of one model over the held-out set.
pub struct ModelRun<'a> {
    pub name: String,
    pub pairs: Vec<Paired<'a>>,
    pub report: EvalReport,
}

pub fn run_models<'a>(
    models: &[(String, Checkpoint)],
    test: &'a [Realization],
    cfg: &EvalConfig,
) -> Result<Vec<ModelRun<'a>>> {
    if models.is_empty() {
        return Err(Error::Config("at least one checkpoint is required".into()));
    }
    if test.is_empty() {
        return Err(Error::Config("no held-out realizations".into()));
    }
    models
        .iter()
        .map(|(name, ck)| {
            let pairs = eval::predict_all(ck, test)?;
            let report = eval::report_from_pairs(name, &pairs, cfg)?;
            Ok(ModelRun { name: name.clone(), pairs, report })
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run `fill` on a staging directory and move it to `dir/name` on success.
fn atomic_group<F>(dir: &Path, name: &str, fill: F) -> Result<Vec<String>>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let stage = dir.join(format!(".{name}.partial"));
    let fin = dir.join(name);
    let _ = fs::remove_dir_all(&stage);
    fs::create_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    if let Err(e) = fill(&stage) {
        let _ = fs::remove_dir_all(&stage);
        return Err(e);
    }
    if fin.exists() {
        fs::remove_dir_all(&fin).map_err(|e| Error::io(&fin, e))?;
    }
    fs::rename(&stage, &fin).map_err(|e| Error::io(&fin, e))?;
    let mut files: Vec<String> = fs::read_dir(&fin)
        .map_err(|e| Error::io(&fin, e))?
        .filter_map(|e| e.ok())
        .map(|e| format!("{name}/{}", e.file_name().to_string_lossy()))
        .collect();
    files.sort();
    Ok(files)
}

/// Per-realization overlays of truth and every model.
pub fn write_timeseries(dir: &Path, runs: &[ModelRun<'_>], cfg: &ReportConfig) -> Result<()> {
    let first = &runs[0];
    for (i, pair) in first.pairs.iter().enumerate() {
        let r = pair.realization;
        let k0 = runs.iter().map(|m| m.pairs[i].prediction.first_valid).max().unwrap_or(0);
        let stem = format!("{}_seed{:03}", r.id.sea_state, r.id.seed);

        let mut csv = String::from("t,wave");
        for c in CHANNEL_NAMES {
            let _ = write!(csv, ",{c}_true");
        }
        for m in runs {
            for c in CHANNEL_NAMES {
                let _ = write!(csv, ",{c}_{}", m.name);
            }
        }
        csv.push('\n');
        for k in k0..r.len() {
            let _ = write!(csv, "{},{}", k as f64 * r.dt, r.probes[0][k]);
            for c in 0..3 {
                let _ = write!(csv, ",{}", r.motions.channel(c)[k]);
            }
            for m in runs {
                for c in 0..3 {
                    let _ = write!(csv, ",{}", m.pairs[i].prediction.motions.channel(c)[k]);
                }
            }
            csv.push('\n');
        }
        write(&dir.join(format!("{stem}.csv")), &csv)?;

        let end = (k0 + (cfg.excerpt_seconds / r.dt).round() as usize).min(r.len());
        let t: Vec<f64> = (k0..end).map(|k| k as f64 * r.dt).collect();
        let mut series = vec![Series::new("truth", t.clone(), r.motions.channel(2)[k0..end].to_vec())];
        for m in runs {
            series.push(Series::new(
                m.name.clone(),
                t.clone(),
                m.pairs[i].prediction.motions.channel(2)[k0..end].to_vec(),
            ));
        }
        let axes = Axes::new(&format!("Roll, {}", r.id), "t (s)", "roll (deg)");
        write(&dir.join(format!("{stem}_roll.svg")), &svg::line_chart(&series, &axes)?)?;
    }
    Ok(())
}

/// Pooled roll PDFs per sea state on a common grid: reference, Gaussian fit, models.
pub fn write_pdfs(dir: &Path, runs: &[ModelRun<'_>]) -> Result<()> {
    let states: Vec<String> = runs[0].report.sea_states.iter().map(|s| s.sea_state.clone()).collect();
    for state in &states {
        let pooled = |run: &ModelRun<'_>, predicted: bool| -> Vec<f64> {
            run.pairs
                .iter()
                .filter(|p| &p.realization.id.sea_state == state)
                .flat_map(|p| {
                    let (t, y) = p.channel(2);
                    if predicted { y } else { t }.iter().copied()
                })
                .collect()
        };
        let reference = pooled(&runs[0], false);
        let p = eval::estimate_pdf(&reference, eval::PdfMethod::GaussianKde { bandwidth: None })?;
        let (mu, sigma) = eval::gaussian_fit(&reference)?;
        let g = eval::gaussian_pdf(&p.grid, mu, sigma);
        let mut cols =
            vec![("reference".to_string(), p.density.clone()), ("gaussian_fit".to_string(), g.density)];
        for m in runs {
            let y = pooled(m, true);
            let h = eval::silverman_bandwidth(&y)?;
            cols.push((m.name.clone(), eval::estimate_kde_on(&y, h, &p.grid)?.density));
        }

        let mut csv = String::from("grid");
        for (name, _) in &cols {
            let _ = write!(csv, ",{name}");
        }
        csv.push('\n');
        for (k, x) in p.grid.iter().enumerate() {
            let _ = write!(csv, "{x}");
            for (_, d) in &cols {
                let _ = write!(csv, ",{}", d[k]);
            }
            csv.push('\n');
        }
        write(&dir.join(format!("pdf_roll_{state}.csv")), &csv)?;

        let series: Vec<Series> =
            cols.into_iter().map(|(name, d)| Series::new(name, p.grid.clone(), d)).collect();
        let mut axes = Axes::new(&format!("Roll PDF, {state}"), "roll (deg)", "density");
        axes.log_y = true;
        write(&dir.join(format!("pdf_roll_{state}.svg")), &svg::line_chart(&series, &axes)?)?;
    }
    Ok(())
}

/// Realization with the largest reference roll kurtosis; ties keep the first.
fn most_severe(test: &[Realization]) -> Result<&Realization> {
    let mut best: Option<(&Realization, f64)> = None;
    for r in test {
        let k = eval::excess_kurtosis(r.motions.channel(2))?;
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((r, k));
        }
    }
    best.map(|(r, _)| r).ok_or_else(|| Error::Config("no realizations".into()))
}

/// STFT maps of wave and roll, plus the detector verdict, for the most severe record.
pub fn write_stft(dir: &Path, test: &[Realization], cfg: &ReportConfig) -> Result<()> {
    let r = most_severe(test)?;
    let roll = diagnostics::stft(r.motions.channel(2), r.dt, cfg.stft_window, cfg.stft_hop)?;
    let wave = diagnostics::stft(&r.probes[0], r.dt, cfg.stft_window, cfg.stft_hop)?;
    roll.write_csv(&dir.join("stft_roll.csv"))?;
    wave.write_csv(&dir.join("stft_wave.csv"))?;
    let det = diagnostics::detect_parametric_signature(&roll, &wave, None, &cfg.detector)?;
    let json =
        serde_json::json!({ "realization": r.id.to_string(), "detected": det.detected(), "report": det });
    write(&dir.join("detection.json"), &(serde_json::to_string_pretty(&json).expect("serializable") + "\n"))?;
    // Plot up to 0.25 Hz, which covers both the roll and the 2:1 encounter bands.
    let keep = roll.freqs.iter().take_while(|&&f| f <= 0.25).count().max(2);
    for (name, s) in [("roll", &roll), ("wave", &wave)] {
        let z: Vec<Vec<f64>> =
            (0..keep).map(|f| s.magnitude.iter().map(|frame| frame[f] * frame[f]).collect()).collect();
        let axes = Axes::new(&format!("STFT power, {name}, {}", r.id), "t (s)", "f (Hz)");
        write(&dir.join(format!("stft_{name}.svg")), &svg::heatmap(&s.times, &s.freqs[..keep], &z, &axes)?)?;
    }
    Ok(())
}

/// Roll-pitch phase portrait of the most severe record.
pub fn write_phase(dir: &Path, test: &[Realization], cfg: &ReportConfig) -> Result<()> {
    let r = most_severe(test)?;
    let pts = diagnostics::phase_portrait(r.motions.channel(2), r.motions.channel(1), cfg.phase_decimate)?;
    diagnostics::write_phase_portrait_csv(&dir.join("phase_roll_pitch.csv"), &pts)?;
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let axes = Axes::new(&format!("Roll-pitch phase portrait, {}", r.id), "roll (deg)", "pitch (deg)");
    write(&dir.join("phase_roll_pitch.svg"), &svg::scatter(&[Series::new(r.id.to_string(), x, y)], &axes)?)
}

/// Seed-averaged metrics as long-form CSV, per-model JSON reports and roll-RSE bars.
pub fn write_metrics(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    write(&dir.join("bar_metrics.csv"), &eval::bar_metrics_csv(reports))?;
    for r in reports {
        write(
            &dir.join(format!("report_{}.json", r.model)),
            &(serde_json::to_string_pretty(r).expect("serializable") + "\n"),
        )?;
    }
    let states: Vec<String> = reports[0].sea_states.iter().map(|s| s.sea_state.clone()).collect();
    let names: Vec<String> = reports.iter().map(|r| r.model.clone()).collect();
    for (c, channel) in CHANNEL_NAMES.iter().enumerate() {
        let values: Vec<Vec<f64>> = states
            .iter()
            .map(|s| reports.iter().map(|r| r.state(s).map_or(f64::NAN, |st| st.averaged[c].rse)).collect())
            .collect();
        let axes = Axes::new(&format!("Seed-averaged RSE, {channel}"), "sea state", "RSE");
        write(&dir.join(format!("rse_{channel}.svg")), &svg::bar_chart(&states, &names, &values, &axes)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub created: String,
    pub models: Vec<String>,
    pub realizations: Vec<String>,
    pub groups: Vec<(String, Vec<String>)>,
}

/// Write the full figure set into a new timestamped directory under `out_root`.
pub fn generate_report(
    out_root: &Path,
    test: &[Realization],
    models: &[(String, Checkpoint)],
    cfg: &ReportConfig,
) -> Result<(PathBuf, ReportIndex)> {
    let runs = run_models(models, test, &cfg.eval)?;
    let now = chrono::Utc::now();
    let stamp = now.format("%Y%m%dT%H%M%SZ").to_string();
    let mut dir = out_root.join(format!("report-{stamp}"));
    let mut n = 1;
    while dir.exists() {
        dir = out_root.join(format!("report-{stamp}-{n}"));
        n += 1;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let groups = vec![
        ("timeseries".to_string(), atomic_group(&dir, "timeseries", |d| write_timeseries(d, &runs, cfg))?),
        ("pdf".to_string(), atomic_group(&dir, "pdf", |d| write_pdfs(d, &runs))?),
        ("stft".to_string(), atomic_group(&dir, "stft", |d| write_stft(d, test, cfg))?),
        ("phase".to_string(), atomic_group(&dir, "phase", |d| write_phase(d, test, cfg))?),
        ("metrics".to_string(), atomic_group(&dir, "metrics", |d| write_metrics(d, &reports))?),
    ];
    let index = ReportIndex {
        created: now.to_rfc3339(),
        models: runs.iter().map(|r| r.name.clone()).collect(),
        realizations: test.iter().map(|r| r.id.to_string()).collect(),
        groups,
    };
    write(&dir.join("index.json"), &(serde_json::to_string_pretty(&index).expect("serializable") + "\n"))?;
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Report</title></head><body>\n",
    );
    for (name, files) in &index.groups {
        let _ = writeln!(html, "<h2>{name}</h2>");
        for f in files {
            if f.ends_with(".svg") {
                let _ = writeln!(html, "<div><img src=\"{f}\" alt=\"{f}\"></div>");
            } else {
                let _ = writeln!(html, "<div><a href=\"{f}\">{f}</a></div>");
            }
        }
    }
    html.push_str("</body></html>\n");
    write(&dir.join("index.html"), &html)?;
    Ok((dir, index))
}
