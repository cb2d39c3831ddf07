//! Minibatch Adam training with realization-level validation and early stopping.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Realization, RealizationId, StencilConfig, StencilSample};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::lstm::{Checkpoint, LstmArch, LstmParams};
use crate::rng::StreamRng;

/// Samples per parallel gradient chunk. Fixed so the reduction order does
/// not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: usize,
    pub shuffle_seed: u64,
    pub loss: LossConfig,
    pub val_fraction: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Train only the linear readout.
    pub freeze_recurrent: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            early_stop_patience: 5,
            shuffle_seed: 0,
            loss: LossConfig::mse(),
            val_fraction: 0.1,
            grad_clip: Some(5.0),
            freeze_recurrent: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad(format!(
                "epochs and batch_size must be positive ({}, {})",
                self.epochs, self.batch_size
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be ≥ 0, got {}", self.learning_rate));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("adam betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be > 0, got {}", self.adam_eps));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be > 0, got {c}"));
            }
        }
        self.loss.validate()
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self { lr, b1: betas.0, b2: betas.1, eps, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when there is no validation set.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch (or the last epoch without validation).
    pub params: LstmParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Loss with any data-derived scales filled in.
    pub loss: LossConfig,
}

fn targets(samples: &[StencilSample]) -> Vec<[f64; 3]> {
    samples.iter().map(|s| s.y).collect()
}

fn predict_all(params: &LstmParams, samples: &[StencilSample]) -> Result<Vec<[f64; 3]>> {
    samples.par_iter().map(|s| params.predict(&s.x).map(|y| [y[0], y[1], y[2]])).collect()
}

/// Loss on a sample set without touching the parameters.
pub fn evaluate_epoch(params: &LstmParams, samples: &[StencilSample], loss: &LossConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Shape("empty evaluation set".into()));
    }
    let pred = predict_all(params, samples)?;
    loss.value(&targets(samples), &pred)
}

/// Loss and gradient over one minibatch.
fn batch_gradient(
    params: &LstmParams,
    batch: &[&StencilSample],
    loss: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let forwards: Vec<_> = batch.par_iter().map(|s| params.forward(&s.x)).collect::<Result<_>>()?;
    let pred: Vec<[f64; 3]> = forwards.iter().map(|(y, _)| [y[0], y[1], y[2]]).collect();
    let y: Vec<[f64; 3]> = batch.iter().map(|s| s.y).collect();
    let (value, dy) = loss.evaluate(&y, &pred)?;
    let partials: Vec<Vec<f64>> = forwards
        .par_chunks(GRAD_CHUNK)
        .zip(dy.par_chunks(GRAD_CHUNK))
        .map(|(fw, d)| {
            let mut g = vec![0.0; params.len()];
            for ((_, cache), dyi) in fw.iter().zip(d) {
                params.backward(cache, dyi, &mut g)?;
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; params.len()];
    for p in &partials {
        for (a, b) in grad.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok((value, grad))
}

/// Train on prepared stencil samples. `val` may be empty.
pub fn train(
    params: LstmParams,
    train_set: &[StencilSample],
    val_set: &[StencilSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Shape("empty training set".into()));
    }
    let width = train_set[0].x.len();
    if train_set.iter().chain(val_set).any(|s| s.x.len() != width)
        || !width.is_multiple_of(params.arch.input_dim)
    {
        return Err(Error::Shape(format!(
            "stencil windows do not match the {}-input network",
            params.arch.input_dim
        )));
    }
    let loss = cfg.loss.resolve_sigma(&targets(train_set))?;
    let readout_start = params.len() - params.arch.output_dim * (params.arch.hidden + 1);

    let mut params = params;
    let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.adam_betas, cfg.adam_eps);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let shuffle_root = StreamRng::from_path(cfg.shuffle_seed, &["epoch-shuffle"]);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let mut rng = shuffle_root.split_index(epoch as u64);
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&StencilSample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (value, mut grad) = match batch_gradient(&params, &batch, &loss) {
                Ok(r) => r,
                Err(Error::Numeric(_)) => (f64::NAN, Vec::new()),
                Err(e) => return Err(e),
            };
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b, last_good: Box::new(params) });
            }
            if cfg.freeze_recurrent {
                grad[..readout_start].iter_mut().for_each(|g| *g = 0.0);
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    let s = clip / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.step(&mut params.values, &grad);
            total += value * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val_set.is_empty() { f64::NAN } else { evaluate_epoch(&params, val_set, &loss)? };
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.push(EpochRecord { epoch, train_loss, val_loss });
        let score = if val_set.is_empty() { train_loss } else { val_loss };
        if !val_set.is_empty() && !score.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0, last_good: Box::new(best.2) });
        }
        if val_set.is_empty() || score < best.0 {
            best = (score, epoch, params.clone());
        } else if epoch - best.1 >= cfg.early_stop_patience {
            stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }
    Ok(TrainOutcome { params: best.2, history, best_epoch: best.1, stopped_early, loss })
}

/// Hold out whole realizations for validation, stratified by sea state.
pub fn validation_split(
    realizations: &[Realization],
    val_fraction: f64,
    seed: u64,
) -> (Vec<&Realization>, Vec<&Realization>) {
    let mut by_state: BTreeMap<&str, Vec<&Realization>> = BTreeMap::new();
    for r in realizations {
        by_state.entry(r.id.sea_state.as_str()).or_default().push(r);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (label, mut group) in by_state {
        group.sort_by_key(|r| r.id.seed);
        let mut rng = StreamRng::from_path(seed, &["val-split", label]);
        rng.shuffle(&mut group);
        let n_val = if val_fraction > 0.0 && group.len() > 1 {
            ((val_fraction * group.len() as f64).round() as usize).clamp(1, group.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&group[..n_val]);
        train.extend_from_slice(&group[n_val..]);
    }
    (train, val)
}

/// Everything needed to fit a surrogate from raw realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub arch_layers: usize,
    pub arch_hidden: usize,
    pub window_len: usize,
    pub probe_ids: Vec<usize>,
    pub stride: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            arch_layers: 2,
            arch_hidden: 32,
            window_len: StencilConfig::DEFAULT_WINDOW,
            probe_ids: vec![0],
            stride: 5,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

fn ids(rs: &[&Realization]) -> Vec<String> {
    rs.iter().map(|r| r.id.to_string()).collect()
}

/// Split, normalize on the training part, build stencils, train, and package a checkpoint.
pub fn fit_surrogate(realizations: &[Realization], cfg: &FitConfig) -> Result<(Checkpoint, TrainOutcome)> {
    cfg.train.validate()?;
    if realizations.is_empty() {
        return Err(Error::Shape("no training realizations".into()));
    }
    let (train_r, val_r) = validation_split(realizations, cfg.train.val_fraction, cfg.train.shuffle_seed);
    let owned: Vec<Realization> = train_r.iter().map(|r| (*r).clone()).collect();
    let normalization = dataset::fit_normalization(&owned, &cfg.probe_ids)?;
    let stencil = StencilConfig::new(cfg.window_len, cfg.probe_ids.clone(), cfg.stride, normalization)?;
    let build = |rs: &[&Realization]| -> Result<Vec<StencilSample>> {
        let parts: Vec<Vec<StencilSample>> =
            rs.par_iter().map(|r| dataset::build_stencil(r, &stencil)).collect::<Result<_>>()?;
        Ok(parts.into_iter().flatten().collect())
    };
    let train_s = build(&train_r)?;
    let val_s = build(&val_r)?;
    let arch = LstmArch {
        num_layers: cfg.arch_layers,
        hidden: cfg.arch_hidden,
        input_dim: stencil.num_inputs(),
        output_dim: 3,
    };
    let params = LstmParams::init(arch, cfg.init_seed)?;
    log::info!(
        "training {arch} on {} samples ({} realizations), validating on {} samples ({} realizations)",
        train_s.len(),
        train_r.len(),
        val_s.len(),
        val_r.len()
    );
    let outcome = train(params, &train_s, &val_s, &cfg.train)?;
    let training = serde_json::json!({
        "fit": cfg,
        "loss_resolved": outcome.loss,
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.len(),
        "stopped_early": outcome.stopped_early,
        "train_realizations": ids(&train_r),
        "val_realizations": ids(&val_r),
        "final_train_loss": outcome.history.last().map(|h| h.train_loss),
        "best_val_loss": outcome.history.get(outcome.best_epoch).map(|h| h.val_loss),
    });
    let ck = Checkpoint { params: outcome.params.clone(), stencil, training };
    Ok((ck, outcome))
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::load(path, e.to_string()))?;
    w.write_record(["epoch", "train_loss", "val_loss"])
        .and_then(|_| {
            history.iter().try_for_each(|h| {
                w.write_record([h.epoch.to_string(), format!("{}", h.train_loss), format!("{}", h.val_loss)])
            })
        })
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| Error::load(path, e.to_string()))
}

/// Ids of realizations used for training according to checkpoint metadata.
pub fn trained_on(ck: &Checkpoint) -> Vec<RealizationId> {
    let mut out = Vec::new();
    for key in ["train_realizations", "val_realizations"] {
        if let Some(list) = ck.training.get(key).and_then(|v| v.as_array()) {
            for s in list.iter().filter_map(|v| v.as_str()) {
                if let Some((label, seed)) = s.rsplit_once("/seed") {
                    if let Ok(seed) = seed.parse() {
                        out.push(RealizationId { sea_state: label.to_string(), seed });
                    }
                }
            }
        }
    }
    out
}
