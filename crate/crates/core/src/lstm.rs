//! Stacked LSTM with a linear readout, evaluated statelessly per window.
//!
//! All weights live in one flat `Vec<f64>`. For layer `l` with input width
//! `in_l` the block is a `(in_l + H) × 4H` row-major matrix `Wᵀ` (row `j`
//! holds the weights leaving input `j`, or leaving `h_{t-1}[j - in_l]`)
//! followed by a `4H` bias. Gate columns are ordered input, forget, cell,
//! output. The readout is an `out × H` matrix and an `out` bias.
//!
//! Cell equations per step:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Realization, StencilConfig};
use crate::error::{Error, Result};
use crate::oracle::MotionRecord;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArch {
    pub num_layers: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl LstmArch {
    /// Desk-scale default: 2 layers of 32 units.
    pub fn desk(input_dim: usize) -> Self {
        Self { num_layers: 2, hidden: 32, input_dim, output_dim: 3 }
    }

    /// Full-scale configuration: 6 layers of 250 units.
    pub fn full(input_dim: usize) -> Self {
        Self { num_layers: 6, hidden: 250, input_dim, output_dim: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("architecture dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    fn layer_size(&self, layer: usize) -> usize {
        let g = 4 * self.hidden;
        (self.layer_input(layer) + self.hidden) * g + g
    }

    fn layer_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| self.layer_size(l)).sum()
    }

    fn readout_offset(&self) -> usize {
        self.layer_offset(self.num_layers)
    }

    pub fn num_params(&self) -> usize {
        self.readout_offset() + self.output_dim * (self.hidden + 1)
    }
}

impl std::fmt::Display for LstmArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.num_layers, self.hidden)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub arch: LstmArch,
    pub values: Vec<f64>,
}

#[inline(always)]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// tanh through `exp`, about three times faster than libm's `tanh`.
#[inline(always)]
fn tanh(x: f64) -> f64 {
    2.0 * sigmoid(2.0 * x) - 1.0
}

#[inline(always)]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dot product with four independent accumulators.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Activations of one layer over a window, kept for backpropagation.
#[derive(Debug, Clone)]
struct LayerCache {
    /// `steps × 4H` activated gates (i, f, g, o).
    gates: Vec<f64>,
    /// `steps × H` cell states.
    c: Vec<f64>,
    /// `steps × H` tanh of cell states.
    tc: Vec<f64>,
    /// `steps × H` hidden states.
    h: Vec<f64>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: usize,
    /// Inputs in processing order (oldest first), `steps × input_dim`.
    inputs: Vec<f64>,
    layers: Vec<LayerCache>,
}

impl LstmParams {
    /// Uniform fan-in initialization; forget-gate biases start at 1, other biases at 0.
    pub fn init(arch: LstmArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut values = vec![0.0; arch.num_params()];
        let root = StreamRng::from_path(seed, &["lstm-init"]);
        let h = arch.hidden;
        for l in 0..arch.num_layers {
            let mut rng = root.split_index(l as u64);
            let fan_in = arch.layer_input(l) + h;
            let bound = 1.0 / (fan_in as f64).sqrt();
            let off = arch.layer_offset(l);
            let n_w = fan_in * 4 * h;
            for v in &mut values[off..off + n_w] {
                *v = rng.uniform_range(-bound, bound);
            }
            let bias = &mut values[off + n_w..off + n_w + 4 * h];
            bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        }
        let mut rng = root.split("readout");
        let bound = 1.0 / (h as f64).sqrt();
        let off = arch.readout_offset();
        for v in &mut values[off..off + arch.output_dim * h] {
            *v = rng.uniform_range(-bound, bound);
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: LstmArch) -> Result<Self> {
        arch.validate()?;
        Ok(Self { arch, values: vec![0.0; arch.num_params()] })
    }

    pub fn from_values(arch: LstmArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.num_params() {
            return Err(Error::Shape(format!(
                "{} parameters given, architecture {arch} needs {}",
                values.len(),
                arch.num_params()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameters contain non-finite values".into()));
        }
        Ok(Self { arch, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat range of the forget-gate biases of `layer`.
    pub fn forget_bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let a = &self.arch;
        let start = a.layer_offset(layer) + (a.layer_input(layer) + a.hidden) * 4 * a.hidden + a.hidden;
        start..start + a.hidden
    }

    /// Flat range of the readout bias.
    pub fn readout_bias_range(&self) -> std::ops::Range<usize> {
        let start = self.arch.readout_offset() + self.arch.output_dim * self.arch.hidden;
        start..start + self.arch.output_dim
    }

    fn check_window(&self, x: &[f64]) -> Result<usize> {
        let n = self.arch.input_dim;
        if x.is_empty() || !x.len().is_multiple_of(n) {
            return Err(Error::Shape(format!(
                "window of {} values is not a whole number of {n}-wide rows",
                x.len()
            )));
        }
        Ok(x.len() / n)
    }

    /// Evaluate one window (row 0 newest). Returns the readout and the cache.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { self.forward_avx2(x) };
        }
        self.forward_impl(x)
    }

    // Plain AVX2 without FMA, so results are bit-identical to the baseline path.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    fn forward_avx2(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.forward_impl(x)
    }

    #[inline(always)]
    fn forward_impl(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let steps = self.check_window(x)?;
        let a = &self.arch;
        let (n, hd) = (a.input_dim, a.hidden);
        let g4 = 4 * hd;

        let mut inputs = Vec::with_capacity(x.len());
        for s in 0..steps {
            let row = steps - 1 - s;
            inputs.extend_from_slice(&x[row * n..(row + 1) * n]);
        }

        let mut layers: Vec<LayerCache> = Vec::with_capacity(a.num_layers);
        let mut z = vec![0.0; g4];
        for l in 0..a.num_layers {
            let in_l = a.layer_input(l);
            let off = a.layer_offset(l);
            let w = &self.values[off..off + (in_l + hd) * g4];
            let b = &self.values[off + (in_l + hd) * g4..off + (in_l + hd) * g4 + g4];
            let mut cache = LayerCache {
                gates: vec![0.0; steps * g4],
                c: vec![0.0; steps * hd],
                tc: vec![0.0; steps * hd],
                h: vec![0.0; steps * hd],
            };
            for s in 0..steps {
                let u: &[f64] =
                    if l == 0 { &inputs[s * n..(s + 1) * n] } else { &layers[l - 1].h[s * hd..(s + 1) * hd] };
                z.copy_from_slice(b);
                for (j, &uj) in u.iter().enumerate() {
                    axpy(uj, &w[j * g4..(j + 1) * g4], &mut z);
                }
                if s > 0 {
                    let h_prev = &cache.h[(s - 1) * hd..s * hd];
                    for (j, &hj) in h_prev.iter().enumerate() {
                        axpy(hj, &w[(in_l + j) * g4..(in_l + j + 1) * g4], &mut z);
                    }
                }
                let gates = &mut cache.gates[s * g4..(s + 1) * g4];
                for k in 0..hd {
                    gates[k] = sigmoid(z[k]);
                    gates[hd + k] = sigmoid(z[hd + k]);
                    gates[2 * hd + k] = tanh(z[2 * hd + k]);
                    gates[3 * hd + k] = sigmoid(z[3 * hd + k]);
                }
                let mut finite = 0.0;
                for k in 0..hd {
                    let c_prev = if s > 0 { cache.c[(s - 1) * hd + k] } else { 0.0 };
                    let c = gates[hd + k] * c_prev + gates[k] * gates[2 * hd + k];
                    let tc = tanh(c);
                    cache.c[s * hd + k] = c;
                    cache.tc[s * hd + k] = tc;
                    cache.h[s * hd + k] = gates[3 * hd + k] * tc;
                    finite += c;
                }
                if !finite.is_finite() {
                    return Err(Error::Numeric(format!("non-finite cell state in layer {l} at step {s}")));
                }
            }
            layers.push(cache);
        }

        let top = &layers[a.num_layers - 1].h[(steps - 1) * hd..steps * hd];
        let ro = a.readout_offset();
        let w_out = &self.values[ro..ro + a.output_dim * hd];
        let b_out = &self.values[ro + a.output_dim * hd..ro + a.output_dim * (hd + 1)];
        let y: Vec<f64> =
            (0..a.output_dim).map(|o| b_out[o] + dot(&w_out[o * hd..(o + 1) * hd], top)).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite readout".into()));
        }
        Ok((y, ForwardCache { steps, inputs, layers }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Accumulate `∂L/∂θ` into `grad` given `dy = ∂L/∂y` for the cached window.
    pub fn backward(&self, cache: &ForwardCache, dy: &[f64], grad: &mut [f64]) -> Result<()> {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { self.backward_avx2(cache, dy, grad) };
        }
        self.backward_impl(cache, dy, grad)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    fn backward_avx2(&self, cache: &ForwardCache, dy: &[f64], grad: &mut [f64]) -> Result<()> {
        self.backward_impl(cache, dy, grad)
    }

    #[inline(always)]
    fn backward_impl(&self, cache: &ForwardCache, dy: &[f64], grad: &mut [f64]) -> Result<()> {
        let a = &self.arch;
        if dy.len() != a.output_dim {
            return Err(Error::Shape(format!("dy has {} entries, expected {}", dy.len(), a.output_dim)));
        }
        if grad.len() != self.values.len() {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
        let (n, hd, steps) = (a.input_dim, a.hidden, cache.steps);
        let g4 = 4 * hd;

        // Readout.
        let ro = a.readout_offset();
        let top = &cache.layers[a.num_layers - 1].h[(steps - 1) * hd..steps * hd];
        let mut dh_ext = vec![0.0; steps * hd];
        {
            let (gw, gb) = grad[ro..ro + a.output_dim * (hd + 1)].split_at_mut(a.output_dim * hd);
            for o in 0..a.output_dim {
                axpy(dy[o], top, &mut gw[o * hd..(o + 1) * hd]);
                gb[o] += dy[o];
                axpy(dy[o], &self.values[ro + o * hd..ro + (o + 1) * hd], &mut dh_ext[(steps - 1) * hd..]);
            }
        }

        let mut dz = vec![0.0; g4];
        let mut dh_rec = vec![0.0; hd];
        let mut dc = vec![0.0; hd];
        for l in (0..a.num_layers).rev() {
            let in_l = a.layer_input(l);
            let off = a.layer_offset(l);
            let w = &self.values[off..off + (in_l + hd) * g4];
            let lc = &cache.layers[l];
            let (gw, gb) = grad[off..off + (in_l + hd) * g4 + g4].split_at_mut((in_l + hd) * g4);
            let need_dinput = l > 0;
            let mut d_below = if need_dinput { vec![0.0; steps * hd] } else { Vec::new() };
            dh_rec.iter_mut().for_each(|v| *v = 0.0);
            dc.iter_mut().for_each(|v| *v = 0.0);

            for s in (0..steps).rev() {
                let gates = &lc.gates[s * g4..(s + 1) * g4];
                for k in 0..hd {
                    let dh = dh_ext[s * hd + k] + dh_rec[k];
                    let (ig, fg, gg, og) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
                    let tc = lc.tc[s * hd + k];
                    let dct = dc[k] + dh * og * (1.0 - tc * tc);
                    let c_prev = if s > 0 { lc.c[(s - 1) * hd + k] } else { 0.0 };
                    dz[k] = dct * gg * ig * (1.0 - ig);
                    dz[hd + k] = dct * c_prev * fg * (1.0 - fg);
                    dz[2 * hd + k] = dct * ig * (1.0 - gg * gg);
                    dz[3 * hd + k] = dh * tc * og * (1.0 - og);
                    dc[k] = dct * fg;
                }
                axpy(1.0, &dz, gb);

                let u: &[f64] = if l == 0 {
                    &cache.inputs[s * n..(s + 1) * n]
                } else {
                    &cache.layers[l - 1].h[s * hd..(s + 1) * hd]
                };
                for (j, &uj) in u.iter().enumerate() {
                    axpy(uj, &dz, &mut gw[j * g4..(j + 1) * g4]);
                    if need_dinput {
                        d_below[s * hd + j] = dot(&w[j * g4..(j + 1) * g4], &dz);
                    }
                }
                if s > 0 {
                    let h_prev = &lc.h[(s - 1) * hd..s * hd];
                    for j in 0..hd {
                        let row = (in_l + j) * g4;
                        axpy(h_prev[j], &dz, &mut gw[row..row + g4]);
                        dh_rec[j] = dot(&w[row..row + g4], &dz);
                    }
                } else {
                    dh_rec.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            if need_dinput {
                dh_ext = d_below;
            }
        }
        Ok(())
    }
}

/// Motions predicted over a full realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Same length as the source; entries before `first_valid` are NaN.
    pub motions: MotionRecord,
    pub first_valid: usize,
}

/// Slide the network over every time index `t ≥ K` and de-normalize.
pub fn predict_series(params: &LstmParams, r: &Realization, cfg: &StencilConfig) -> Result<Prediction> {
    cfg.validate()?;
    if cfg.num_inputs() != params.arch.input_dim || params.arch.output_dim != 3 {
        return Err(Error::Shape(format!(
            "network {} expects {} inputs / {} outputs; stencil provides {} probes",
            params.arch,
            params.arch.input_dim,
            params.arch.output_dim,
            cfg.num_inputs()
        )));
    }
    if cfg.window_len >= r.len() {
        return Err(Error::Config(format!("{}: series shorter than the window", r.id)));
    }
    let len = r.len();
    let mut channels = [vec![f64::NAN; len], vec![f64::NAN; len], vec![f64::NAN; len]];
    for t in cfg.window_len..len {
        let x = dataset::window_at(r, cfg, t);
        let y = params.predict(&x)?;
        for ((ch, out), v) in channels.iter_mut().zip(&cfg.normalization.outputs).zip(&y) {
            ch[t] = out.invert(*v);
        }
    }
    let [heave, pitch, roll] = channels;
    Ok(Prediction { motions: MotionRecord::new(r.dt, heave, pitch, roll)?, first_valid: cfg.window_len })
}

pub const CHECKPOINT_FORMAT: &str = "seasurrogate-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightBlob {
    encoding: String,
    count: usize,
    data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    arch: LstmArch,
    stencil: StencilConfig,
    #[serde(default)]
    training: serde_json::Value,
    weights: WeightBlob,
}

/// A trained network together with everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: LstmParams,
    pub stencil: StencilConfig,
    /// Free-form training metadata (config, history summary, data split).
    pub training: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.params.values.len() * 8);
        for v in &self.params.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: self.params.arch,
            stencil: self.stencil.clone(),
            training: self.training.clone(),
            weights: WeightBlob {
                encoding: "base64-f64-le".into(),
                count: self.params.values.len(),
                data: base64::engine::general_purpose::STANDARD.encode(bytes),
            },
        };
        let text = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::load(path, format!("cannot read checkpoint: {e}")))?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::load(path, format!("not a checkpoint (format `{}`)", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::load(path, format!("unsupported checkpoint version {}", file.version)));
        }
        if file.weights.encoding != "base64-f64-le" {
            return Err(Error::load(path, format!("unknown weight encoding `{}`", file.weights.encoding)));
        }
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(file.weights.data.as_bytes())
            .map_err(|e| Error::load(path, format!("corrupt weight blob: {e}")))?;
        if bytes.len() != file.weights.count * 8 {
            return Err(Error::load(path, "weight blob length does not match its count"));
        }
        let values =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let params =
            LstmParams::from_values(file.arch, values).map_err(|e| Error::load(path, e.to_string()))?;
        file.stencil.validate().map_err(|e| Error::load(path, e.to_string()))?;
        if file.stencil.num_inputs() != file.arch.input_dim {
            return Err(Error::load(path, "stencil probe count does not match the network input width"));
        }
        Ok(Self { params, stencil: file.stencil, training: file.training })
    }
}
