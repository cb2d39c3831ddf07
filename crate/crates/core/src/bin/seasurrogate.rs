//! `seasurrogate` command-line pipeline.
//!
//! Resolution order for every setting: built-in default, then the matching
//! section of `--config`, then explicit flags. The resolved configuration is
//! written to `<out-dir>/run.json`.
//!
//! Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use seasurrogate::dataset::{self, IngestSpec, Realization, RealizationId};
use seasurrogate::diagnostics::{self, DetectorConfig};
use seasurrogate::eval::EvalConfig;
use seasurrogate::losses::{LossConfig, LossKind};
use seasurrogate::lstm::Checkpoint;
use seasurrogate::oracle::{self, OracleConfig};
use seasurrogate::report::{self, ReportConfig};
use seasurrogate::rng::StreamRng;
use seasurrogate::spectra::{self, BandConfig, SeaState};
use seasurrogate::svg::{self, Axes, Series};
use seasurrogate::trainer::{self, FitConfig};
use seasurrogate::Error;

#[derive(Parser, Debug)]
#[command(name = "seasurrogate", version, about = "Wave-to-motion LSTM surrogate pipeline")]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// JSON file with defaults; keys `seed`, `out_dir` and one object per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize one irregular-sea elevation record.
    Synth(SynthArgs),
    /// Generate an oracle campaign (one CSV per realization plus manifest).
    OracleGen(OracleGenArgs),
    /// Validate a campaign, or convert external CSVs into one.
    Ingest(IngestArgs),
    /// Train a surrogate on the training split of a campaign.
    Train(TrainArgs),
    /// Evaluate checkpoints on held-out realizations.
    Eval(EvalArgs),
    /// STFT, parametric-signature detection and phase portrait of one record.
    Diagnose(DiagnoseArgs),
    /// Regenerate the full figure set for a campaign and checkpoints.
    Report(ReportArgs),
}

// Flag structs hold only what was given on the command line; `None` fields
// are skipped so lower-priority sources show through.

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// Significant wave height (m).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hs: Option<f64>,
    /// Peak period (s).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tp: Option<f64>,
    /// Reference sea state (SS-1, SS-2, SS-3) instead of --hs/--tp.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sea_state: Option<String>,
    /// Sample interval (s).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    /// Record length (s).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    /// Number of harmonic components.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    hs: Option<f64>,
    tp: Option<f64>,
    sea_state: Option<String>,
    dt: f64,
    duration: f64,
    n: usize,
    band: BandConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            hs: None,
            tp: None,
            sea_state: Some("SS-3".into()),
            dt: 0.2,
            duration: 3600.0,
            n: 200,
            band: BandConfig::default(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct OracleGenArgs {
    /// Seeds per sea state, numbered from 1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds_per_state: Option<usize>,
    /// Comma-separated sea-state labels.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<Vec<String>>,
    /// Record length (s).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OracleGenConfig {
    seeds_per_state: usize,
    states: Vec<String>,
    duration: Option<f64>,
    oracle: OracleConfig,
}

impl Default for OracleGenConfig {
    fn default() -> Self {
        Self {
            seeds_per_state: 49,
            states: SeaState::reference_campaign().into_iter().map(|s| s.label).collect(),
            duration: None,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// Canonical manifest to validate.
    #[arg(long, conflicts_with = "spec")]
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<PathBuf>,
    /// External-layout spec (JSON) to convert into a canonical campaign.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IngestConfig {
    manifest: Option<PathBuf>,
    spec: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Campaign manifest.json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    campaign: Option<PathBuf>,
    /// mse, re or awmse.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<String>,
    /// RE tilting parameter.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// AWMSE amplitude weight.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    /// Layers x hidden units, e.g. 2x32.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    arch: Option<String>,
    /// History length K in samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    /// Step between training windows, in samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    /// Maximum number of epochs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
    /// Training seeds per sea state.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_train: Option<usize>,
    /// Held-out seeds per sea state.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_test: Option<usize>,
    /// Checkpoint path; defaults to `<out-dir>/checkpoint.json`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainCliConfig {
    campaign: Option<PathBuf>,
    loss: String,
    lambda: f64,
    beta: f64,
    arch: String,
    window: usize,
    stride: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    patience: usize,
    n_train: usize,
    n_test: usize,
    out: Option<PathBuf>,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            campaign: None,
            loss: "mse".into(),
            lambda: seasurrogate::losses::DEFAULT_LAMBDA,
            beta: seasurrogate::losses::DEFAULT_BETA,
            arch: format!("{}x{}", fit.arch_layers, fit.arch_hidden),
            window: fit.window_len,
            stride: fit.stride,
            epochs: fit.train.epochs,
            batch_size: fit.train.batch_size,
            learning_rate: fit.train.learning_rate,
            patience: fit.train.early_stop_patience,
            n_train: 40,
            n_test: 9,
            out: None,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Campaign manifest.json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    campaign: Option<PathBuf>,
    /// `name=path` pairs; repeatable.
    #[arg(long = "checkpoint")]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoints: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalCliConfig {
    campaign: Option<PathBuf>,
    checkpoints: Vec<String>,
    eval: EvalConfig,
}

#[derive(Args, Debug, Serialize)]
struct DiagnoseArgs {
    /// Campaign manifest.json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    campaign: Option<PathBuf>,
    /// Realization id, e.g. `SS-3/seed5`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    realization: Option<String>,
    /// STFT window length in samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    /// STFT hop in samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hop: Option<usize>,
    /// Natural roll period hint (s); estimated from the roll spectrum otherwise.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    roll_period: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DiagnoseConfig {
    campaign: Option<PathBuf>,
    realization: Option<String>,
    window: usize,
    hop: usize,
    roll_period: Option<f64>,
    detector: DetectorConfig,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            campaign: None,
            realization: None,
            window: diagnostics::DEFAULT_WINDOW,
            hop: diagnostics::DEFAULT_HOP,
            roll_period: None,
            detector: DetectorConfig::default(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Campaign manifest.json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    campaign: Option<PathBuf>,
    /// `name=path` pairs; repeatable.
    #[arg(long = "checkpoint")]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoints: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReportCliConfig {
    campaign: Option<PathBuf>,
    checkpoints: Vec<String>,
    report: ReportConfig,
}

/// Failure classified by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Domain(_) | Error::Config(_) => Failure::Usage(msg),
            Error::Shape(_) | Error::Load { .. } | Error::Io { .. } | Error::Json { .. } => {
                Failure::Data(msg)
            }
            Error::Numeric(_) | Error::NonFiniteLoss { .. } | Error::Simulation { .. } => {
                Failure::Numeric(msg)
            }
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Overlay `top` onto `base`, recursing into objects.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

/// Default, then config-file section, then flags.
fn resolve<C, A>(file: &Value, section: &str, args: &A) -> CliResult<C>
where
    C: Default + Serialize + DeserializeOwned,
    A: Serialize,
{
    let mut v = serde_json::to_value(C::default()).expect("defaults serialize");
    if let Some(s) = file.get(section) {
        merge(&mut v, s.clone());
    }
    merge(&mut v, serde_json::to_value(args).expect("flags serialize"));
    serde_json::from_value(v).map_err(|e| usage(format!("invalid `{section}` configuration: {e}")))
}

struct Global {
    seed: u64,
    out_dir: PathBuf,
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).expect("json serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_run_json(g: &Global, command: &str, resolved: &impl Serialize) -> CliResult<()> {
    create_dir(&g.out_dir)?;
    let v = json!({
        "command": command,
        "seed": g.seed,
        "out_dir": g.out_dir,
        "version": env!("CARGO_PKG_VERSION"),
        "config": resolved,
    });
    write_json(&g.out_dir.join("run.json"), &v)
}

fn create_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| Failure::Data(format!("cannot create {}: {e}", p.display())))
}

fn reference_state(label: &str) -> CliResult<SeaState> {
    SeaState::reference_campaign()
        .into_iter()
        .find(|s| s.label == label)
        .ok_or_else(|| usage(format!("unknown sea state `{label}`; expected SS-1, SS-2 or SS-3")))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| usage(format!("--{flag} is required")))
}

fn cmd_synth(g: &Global, c: &SynthConfig) -> CliResult<()> {
    let sea = match (c.hs, c.tp) {
        (Some(hs), Some(tp)) => SeaState::new("custom", hs, tp)?,
        (None, None) => reference_state(c.sea_state.as_deref().unwrap_or("SS-3"))?,
        _ => return Err(usage("--hs and --tp must be given together")),
    };
    let band = BandConfig { n: c.n, ..c.band.clone() };
    let phase_seed = StreamRng::from_path(g.seed, &["synth", &sea.label]).next_u64();
    let comps = band.discretize(&sea, phase_seed)?;
    let wave = spectra::synthesize(&comps, c.dt, c.duration)?;
    let mut csv = String::from("t,zeta\n");
    for (t, z) in wave.times().zip(&wave.samples) {
        csv.push_str(&format!("{t},{z}\n"));
    }
    let path = g.out_dir.join("wave.csv");
    std::fs::write(&path, csv).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
    let (lo, hi) = band.band(&sea);
    write_json(
        &g.out_dir.join("wave.json"),
        &json!({
            "hs": sea.hs, "tp": sea.tp, "sea_state": sea.label, "n": band.n,
            "band": [lo, hi], "discretization": band.discretization,
            "seed": g.seed, "phase_seed": phase_seed, "dt": c.dt, "duration": c.duration,
            "sample_variance": seasurrogate::eval::gaussian_fit(&wave.samples)?.1.powi(2),
            "target_variance": sea.variance(),
        }),
    )?;
    info!("wrote {} samples to {}", wave.len(), path.display());
    Ok(())
}

fn cmd_oracle_gen(g: &Global, c: &OracleGenConfig) -> CliResult<()> {
    let states = c.states.iter().map(|l| reference_state(l)).collect::<CliResult<Vec<_>>>()?;
    let mut cfg = c.oracle.clone();
    cfg.campaign_seed = g.seed;
    if let Some(d) = c.duration {
        cfg.duration = d;
    }
    let m = oracle::generate_campaign(&states, c.seeds_per_state, &cfg, &g.out_dir)?;
    info!("wrote {} realizations to {}", m.files.len(), g.out_dir.display());
    Ok(())
}

fn cmd_ingest(g: &Global, c: &IngestConfig) -> CliResult<()> {
    match (&c.manifest, &c.spec) {
        (Some(m), None) => {
            let rs = dataset::load_campaign(m)?;
            let summary = json!({
                "manifest": m,
                "realizations": rs.len(),
                "samples_per_realization": rs.iter().map(|r| r.len()).min(),
                "probes": rs.first().map(|r| r.num_probes()),
                "valid": true,
            });
            write_json(&g.out_dir.join("ingest.json"), &summary)?;
            println!("{} realizations valid", rs.len());
            Ok(())
        }
        (None, Some(spec_path)) => {
            let text = std::fs::read_to_string(spec_path)
                .map_err(|e| Failure::Data(format!("cannot read {}: {e}", spec_path.display())))?;
            let spec: IngestSpec = serde_json::from_str(&text)
                .map_err(|e| Failure::Data(format!("invalid ingest spec {}: {e}", spec_path.display())))?;
            let base = spec_path.parent().unwrap_or(Path::new("."));
            let m = dataset::ingest_external(&spec, base, &g.out_dir)?;
            println!("converted {} realizations", m.files.len());
            Ok(())
        }
        _ => Err(usage("give exactly one of --manifest or --spec")),
    }
}

fn parse_arch(s: &str) -> CliResult<(usize, usize)> {
    let (l, h) =
        s.split_once(['x', 'X']).ok_or_else(|| usage(format!("--arch `{s}` is not LAYERSxHIDDEN")))?;
    let parse =
        |v: &str| v.trim().parse::<usize>().map_err(|_| usage(format!("--arch `{s}` is not LAYERSxHIDDEN")));
    Ok((parse(l)?, parse(h)?))
}

fn loss_config(c: &TrainCliConfig) -> CliResult<LossConfig> {
    let kind = match c.loss.to_ascii_lowercase().as_str() {
        "mse" => LossKind::Mse,
        "re" => LossKind::Re { lambda: c.lambda },
        "awmse" => LossKind::Awmse { beta: c.beta, sigma_y: None },
        other => return Err(usage(format!("unknown loss `{other}`; expected mse, re or awmse"))),
    };
    let cfg = LossConfig { kind, ..LossConfig::mse() };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(g: &Global, c: &TrainCliConfig) -> CliResult<()> {
    let campaign = required(&c.campaign, "campaign")?;
    let (layers, hidden) = parse_arch(&c.arch)?;
    let loss = loss_config(c)?;
    let all = dataset::load_campaign(&campaign)?;
    let split_seed = StreamRng::from_path(g.seed, &["split"]).next_u64();
    let (train, test) = dataset::split_seeds(&all, c.n_train, c.n_test, split_seed)?;
    let mut fit = FitConfig {
        arch_layers: layers,
        arch_hidden: hidden,
        window_len: c.window,
        stride: c.stride,
        init_seed: StreamRng::from_path(g.seed, &["init"]).next_u64(),
        ..FitConfig::default()
    };
    fit.train.epochs = c.epochs;
    fit.train.batch_size = c.batch_size;
    fit.train.learning_rate = c.learning_rate;
    fit.train.early_stop_patience = c.patience;
    fit.train.shuffle_seed = StreamRng::from_path(g.seed, &["shuffle"]).next_u64();
    fit.train.loss = loss;
    info!("training {} on {} realizations", c.arch, train.len());
    let (mut ck, outcome) = trainer::fit_surrogate(&train, &fit)?;
    let ids = |rs: &[Realization]| rs.iter().map(|r| r.id.to_string()).collect::<Vec<_>>();
    if let Value::Object(m) = &mut ck.training {
        m.insert("test_realizations".into(), json!(ids(&test)));
        m.insert("campaign".into(), json!(campaign));
    }
    let out = c.out.clone().unwrap_or_else(|| g.out_dir.join("checkpoint.json"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ck.save(&out)?;
    trainer::write_history_csv(&g.out_dir.join("history.csv"), &outcome.history)?;
    println!(
        "best epoch {} of {}, validation loss {:.6}",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.history[outcome.best_epoch].val_loss
    );
    Ok(())
}

fn load_checkpoints(specs: &[String]) -> CliResult<Vec<(String, Checkpoint)>> {
    if specs.is_empty() {
        return Err(usage("at least one --checkpoint name=path is required"));
    }
    specs
        .iter()
        .map(|s| {
            let (name, path) =
                s.split_once('=').ok_or_else(|| usage(format!("--checkpoint `{s}` is not name=path")))?;
            Ok((name.to_string(), Checkpoint::load(Path::new(path))?))
        })
        .collect()
}

/// Campaign realizations not used for training or validation by any checkpoint.
fn held_out(all: Vec<Realization>, models: &[(String, Checkpoint)]) -> CliResult<Vec<Realization>> {
    let used: std::collections::HashSet<RealizationId> =
        models.iter().flat_map(|(_, ck)| trainer::trained_on(ck)).collect();
    let test: Vec<Realization> = all.into_iter().filter(|r| !used.contains(&r.id)).collect();
    if test.is_empty() {
        return Err(Failure::Data("campaign has no realizations held out from training".into()));
    }
    Ok(test)
}

fn cmd_eval(g: &Global, c: &EvalCliConfig) -> CliResult<()> {
    let campaign = required(&c.campaign, "campaign")?;
    let models = load_checkpoints(&c.checkpoints)?;
    let test = held_out(dataset::load_campaign(&campaign)?, &models)?;
    let runs = report::run_models(&models, &test, &c.eval)?;
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    report::write_metrics(&g.out_dir, &reports)?;
    report::write_pdfs(&g.out_dir, &runs)?;
    for r in &reports {
        for s in &r.sea_states {
            println!(
                "{} {}: roll RSE {:.4}, KL {:.4} (Gaussian fit {:.4}), kurtosis {:.3} (reference {:.3})",
                r.model,
                s.sea_state,
                s.averaged[2].rse,
                s.roll.kl_vs_reference,
                s.roll.gaussian_fit_kl,
                s.roll.kurtosis,
                s.roll.reference_kurtosis
            );
        }
    }
    Ok(())
}

fn parse_id(s: &str) -> CliResult<RealizationId> {
    let (label, seed) =
        s.rsplit_once("/seed").ok_or_else(|| usage(format!("realization `{s}` is not LABEL/seedN")))?;
    let seed = seed.parse().map_err(|_| usage(format!("realization `{s}` is not LABEL/seedN")))?;
    Ok(RealizationId { sea_state: label.into(), seed })
}

fn cmd_diagnose(g: &Global, c: &DiagnoseConfig) -> CliResult<()> {
    let campaign = required(&c.campaign, "campaign")?;
    let id = parse_id(&required(&c.realization, "realization")?)?;
    let all = dataset::load_campaign(&campaign)?;
    let r = all
        .into_iter()
        .find(|r| r.id == id)
        .ok_or_else(|| Failure::Data(format!("realization {id} not in campaign")))?;
    let roll = diagnostics::stft(r.motions.channel(2), r.dt, c.window, c.hop)?;
    let wave = diagnostics::stft(&r.probes[0], r.dt, c.window, c.hop)?;
    roll.write_csv(&g.out_dir.join("stft_roll.csv"))?;
    wave.write_csv(&g.out_dir.join("stft_wave.csv"))?;
    let det =
        diagnostics::detect_parametric_signature(&roll, &wave, c.roll_period.map(|t| 1.0 / t), &c.detector)?;
    write_json(
        &g.out_dir.join("detection.json"),
        &json!({ "realization": id.to_string(), "detected": det.detected(), "report": det }),
    )?;
    let keep = roll.freqs.iter().take_while(|&&f| f <= 0.25).count().max(2);
    for (name, s) in [("roll", &roll), ("wave", &wave)] {
        let z: Vec<Vec<f64>> =
            (0..keep).map(|f| s.magnitude.iter().map(|frame| frame[f] * frame[f]).collect()).collect();
        let svg_text = svg::heatmap(
            &s.times,
            &s.freqs[..keep],
            &z,
            &Axes::new(&format!("STFT power, {name}, {id}"), "t (s)", "f (Hz)"),
        )?;
        svg::write_svg(&g.out_dir.join(format!("stft_{name}.svg")), &svg_text)?;
    }
    let pts = diagnostics::phase_portrait(r.motions.channel(2), r.motions.channel(1), 1)?;
    diagnostics::write_phase_portrait_csv(&g.out_dir.join("phase_roll_pitch.csv"), &pts)?;
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let svg_text = svg::scatter(
        &[Series::new(id.to_string(), x, y)],
        &Axes::new(&format!("Roll-pitch phase portrait, {id}"), "roll (deg)", "pitch (deg)"),
    )?;
    svg::write_svg(&g.out_dir.join("phase_roll_pitch.svg"), &svg_text)?;
    println!(
        "{id}: f_phi {:.4} Hz, encounter {:.4} Hz, parametric signature {}",
        det.f_phi,
        det.f_encounter,
        if det.detected() { "detected" } else { "not detected" }
    );
    Ok(())
}

fn cmd_report(g: &Global, c: &ReportCliConfig) -> CliResult<()> {
    let campaign = required(&c.campaign, "campaign")?;
    let models = load_checkpoints(&c.checkpoints)?;
    let test = held_out(dataset::load_campaign(&campaign)?, &models)?;
    let (dir, index) = report::generate_report(&g.out_dir, &test, &models, &c.report)?;
    println!("wrote {} figure groups to {}", index.groups.len(), dir.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let file: Value = match &cli.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => json!({}),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => match file.get("seed") {
            Some(v) => v.as_u64().ok_or_else(|| usage("config `seed` must be a non-negative integer"))?,
            None => 0,
        },
    };
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| file.get("out_dir").and_then(|v| v.as_str()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let g = Global { seed, out_dir };

    match &cli.command {
        Command::Synth(a) => {
            let c: SynthConfig = resolve(&file, "synth", a)?;
            write_run_json(&g, "synth", &c)?;
            cmd_synth(&g, &c)
        }
        Command::OracleGen(a) => {
            let c: OracleGenConfig = resolve(&file, "oracle-gen", a)?;
            write_run_json(&g, "oracle-gen", &c)?;
            cmd_oracle_gen(&g, &c)
        }
        Command::Ingest(a) => {
            let c: IngestConfig = resolve(&file, "ingest", a)?;
            write_run_json(&g, "ingest", &c)?;
            cmd_ingest(&g, &c)
        }
        Command::Train(a) => {
            let c: TrainCliConfig = resolve(&file, "train", a)?;
            write_run_json(&g, "train", &c)?;
            cmd_train(&g, &c)
        }
        Command::Eval(a) => {
            let c: EvalCliConfig = resolve(&file, "eval", a)?;
            write_run_json(&g, "eval", &c)?;
            cmd_eval(&g, &c)
        }
        Command::Diagnose(a) => {
            let c: DiagnoseConfig = resolve(&file, "diagnose", a)?;
            write_run_json(&g, "diagnose", &c)?;
            cmd_diagnose(&g, &c)
        }
        Command::Report(a) => {
            let c: ReportCliConfig = resolve(&file, "report", a)?;
            write_run_json(&g, "report", &c)?;
            cmd_report(&g, &c)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
