//! Training objectives: MSE, relative-entropy tilting with a mirror term,
//! and amplitude-weighted MSE. Each returns the batch value and the
//! gradient with respect to the predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standardized inputs beyond this magnitude trigger a warning in the RE loss.
pub const RE_WARN_RANGE: f64 = 10.0;

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 1.0;

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "batch length mismatch: {} targets, {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

/// `(1/n) Σ (Y − Ŷ)²`, gradient `(2/n)(Ŷ − Y)`.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_pair(y, y_hat)?;
    let n = y.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&t, &p) in y.iter().zip(y_hat) {
        let d = p - t;
        value += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((value / n, grad))
}

/// Weight `1 + β (Y/σ_Y)²`, always ≥ 1.
pub fn amplitude_weight(y: f64, beta: f64, sigma_y: f64) -> f64 {
    let r = y / sigma_y;
    1.0 + beta * (r * r)
}

/// `(1/n) Σ (Y − Ŷ)² w(Y)`; weights use the true values only.
pub fn awmse(y: &[f64], y_hat: &[f64], beta: f64, sigma_y: f64) -> Result<(f64, Vec<f64>)> {
    check_pair(y, y_hat)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be finite and ≥ 0, got {beta}")));
    }
    if !(sigma_y > 0.0 && sigma_y.is_finite()) {
        return Err(Error::Domain(format!("sigma_y must be finite and > 0, got {sigma_y}")));
    }
    let n = y.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&t, &p) in y.iter().zip(y_hat) {
        let d = p - t;
        let w = amplitude_weight(t, beta, sigma_y);
        value += d * d * w;
        grad.push(2.0 * d * w / n);
    }
    Ok((value / n, grad))
}

/// `mean(e^{f̂} − e^{f} f̂) + λ mean(e^{−f̂} + e^{−f} f̂)`.
///
/// Exponentials are accumulated relative to the largest exponent in the
/// batch and rescaled once, so intermediate terms cannot overflow when the
/// final value is representable.
pub fn re_loss(f: &[f64], f_hat: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    check_pair(f, f_hat)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and ≥ 0, got {lambda}")));
    }
    let mut m = f64::NEG_INFINITY;
    let mut out_of_range = 0usize;
    for (&t, &p) in f.iter().zip(f_hat) {
        if !t.is_finite() || !p.is_finite() {
            return Err(Error::Numeric("non-finite input to RE loss".into()));
        }
        if t.abs() > RE_WARN_RANGE || p.abs() > RE_WARN_RANGE {
            out_of_range += 1;
        }
        m = m.max(t.abs()).max(p.abs());
    }
    if out_of_range > 0 {
        log::warn!(
            "RE loss: {out_of_range} of {} samples outside the standardized range ±{RE_WARN_RANGE}",
            f.len()
        );
    }
    let scale = m.exp();
    if !scale.is_finite() {
        return Err(Error::Numeric(format!("RE loss exponent {m} overflows")));
    }
    let n = f.len() as f64;
    let mut acc = 0.0;
    let mut grad = Vec::with_capacity(f.len());
    for (&t, &p) in f.iter().zip(f_hat) {
        let (ep, et) = ((p - m).exp(), (t - m).exp());
        let (emp, emt) = ((-p - m).exp(), (-t - m).exp());
        acc += (ep - et * p) + lambda * (emp + emt * p);
        grad.push(scale * ((ep - et) + lambda * (emt - emp)) / n);
    }
    Ok((scale * acc / n, grad))
}

/// Weighted sum of per-channel losses.
pub fn combine_channels(values: &[f64; 3], weights: &[f64; 3]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Re {
        lambda: f64,
    },
    Awmse {
        beta: f64,
        /// Per-channel response scale; `None` means estimate from training targets.
        #[serde(default)]
        sigma_y: Option<[f64; 3]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(flatten)]
    pub kind: LossKind,
    #[serde(default = "equal_weights")]
    pub channel_weights: [f64; 3],
}

fn equal_weights() -> [f64; 3] {
    [1.0; 3]
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::mse()
    }
}

impl LossConfig {
    pub fn mse() -> Self {
        Self { kind: LossKind::Mse, channel_weights: equal_weights() }
    }

    pub fn re(lambda: f64) -> Self {
        Self { kind: LossKind::Re { lambda }, channel_weights: equal_weights() }
    }

    pub fn awmse(beta: f64, sigma_y: Option<[f64; 3]>) -> Self {
        Self { kind: LossKind::Awmse { beta, sigma_y }, channel_weights: equal_weights() }
    }

    /// Build from a CLI-style name with default λ/β.
    pub fn from_name(name: &str, lambda: Option<f64>, beta: Option<f64>) -> Result<Self> {
        let cfg = match name.to_ascii_lowercase().as_str() {
            "mse" => Self::mse(),
            "re" => Self::re(lambda.unwrap_or(DEFAULT_LAMBDA)),
            "awmse" => Self::awmse(beta.unwrap_or(DEFAULT_BETA), None),
            other => return Err(Error::Config(format!("unknown loss `{other}` (mse, re, awmse)"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::Mse => "mse",
            LossKind::Re { .. } => "re",
            LossKind::Awmse { .. } => "awmse",
        }
    }

    pub fn with_weights(mut self, channel_weights: [f64; 3]) -> Self {
        self.channel_weights = channel_weights;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LossKind::Mse => {}
            LossKind::Re { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!("lambda must be ≥ 0, got {lambda}")));
                }
            }
            LossKind::Awmse { beta, sigma_y } => {
                if !(beta >= 0.0 && beta.is_finite()) {
                    return Err(Error::Config(format!("beta must be ≥ 0, got {beta}")));
                }
                if let Some(s) = sigma_y {
                    if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                        return Err(Error::Config(format!("sigma_y must be > 0, got {s:?}")));
                    }
                }
            }
        }
        let w = &self.channel_weights;
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::Config(format!("channel weights must be ≥ 0 and not all zero, got {w:?}")));
        }
        Ok(())
    }

    /// Fill an unset AWMSE scale with the per-channel standard deviation of `targets`.
    pub fn resolve_sigma(mut self, targets: &[[f64; 3]]) -> Result<Self> {
        if let LossKind::Awmse { beta, sigma_y: None } = self.kind {
            if targets.is_empty() {
                return Err(Error::Shape("cannot estimate sigma_y from an empty set".into()));
            }
            let n = targets.len() as f64;
            let mut s = [0.0; 3];
            for (c, sc) in s.iter_mut().enumerate() {
                let mean = targets.iter().map(|y| y[c]).sum::<f64>() / n;
                let var = targets.iter().map(|y| (y[c] - mean).powi(2)).sum::<f64>() / n;
                *sc = var.sqrt().max(crate::dataset::SCALE_FLOOR);
            }
            self.kind = LossKind::Awmse { beta, sigma_y: Some(s) };
        }
        Ok(self)
    }

    fn channel(&self, c: usize, y: &[f64], y_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.kind {
            LossKind::Mse => mse(y, y_hat),
            LossKind::Re { lambda } => re_loss(y, y_hat, lambda),
            LossKind::Awmse { beta, sigma_y } => {
                let s = sigma_y.ok_or_else(|| Error::Config("AWMSE sigma_y not resolved".into()))?;
                awmse(y, y_hat, beta, s[c])
            }
        }
    }

    /// Weighted multi-channel loss and its gradient per prediction.
    pub fn evaluate(&self, y: &[[f64; 3]], y_hat: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        if y.len() != y_hat.len() {
            return Err(Error::Shape(format!(
                "batch length mismatch: {} targets, {} predictions",
                y.len(),
                y_hat.len()
            )));
        }
        let mut values = [0.0; 3];
        let mut grad = vec![[0.0; 3]; y.len()];
        for c in 0..3 {
            let yc: Vec<f64> = y.iter().map(|v| v[c]).collect();
            let pc: Vec<f64> = y_hat.iter().map(|v| v[c]).collect();
            let (v, g) = self.channel(c, &yc, &pc)?;
            values[c] = v;
            let w = self.channel_weights[c];
            for (gi, gc) in grad.iter_mut().zip(g) {
                gi[c] = w * gc;
            }
        }
        Ok((combine_channels(&values, &self.channel_weights), grad))
    }

    /// Value only.
    pub fn value(&self, y: &[[f64; 3]], y_hat: &[[f64; 3]]) -> Result<f64> {
        self.evaluate(y, y_hat).map(|(v, _)| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                a[i] += h;
                let up = f(&a);
                a[i] -= 2.0 * h;
                (up - f(&a)) / (2.0 * h)
            })
            .collect()
    }

    // Componentwise relative error, floored at a fraction of the largest
    // component since central differences carry roundoff of order eps*L/h.
    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let floor = a.iter().fold(1e-3f64, |m, x| m.max(1e-2 * x.abs()));
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(floor))
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, -2.0], &[1.0, -2.0]).unwrap().0, 0.0);
        let (v, g) = mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(g, vec![-1.0, -2.0]);
    }

    #[test]
    fn awmse_examples() {
        assert_eq!(amplitude_weight(0.7, 1.0, 0.7), 2.0);
        let s = 1.7;
        let (v, _) = awmse(&[s, 2.0 * s], &[0.0, 0.0], 1.0, s).unwrap();
        assert!((v - 11.0 * s * s).abs() < 1e-12);
        assert!(awmse(&[1.0], &[0.0], 1.0, 0.0).is_err());
        assert!(awmse(&[1.0], &[0.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn re_examples() {
        // f = 0: value e^{f̂} − f̂ + λ(e^{−f̂} + f̂), minimized at 0.
        let lam = 0.1;
        let v = |p: f64| re_loss(&[0.0], &[p], lam).unwrap().0;
        for p in [-0.5f64, -0.1, 0.3, 1.0] {
            let expected = p.exp() - p + lam * ((-p).exp() + p);
            assert!((v(p) - expected).abs() < 1e-12);
            assert!(v(p) > v(0.0));
        }
        let f = [-1.0, 0.0, 2.0, 0.37];
        let (_, g) = re_loss(&f, &f, lam).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn re_scans_convex_with_minimum_at_truth() {
        let f = [-1.0, 0.0, 2.0];
        for i in 0..3 {
            let vals: Vec<f64> = (-200..=200)
                .map(|k| {
                    let mut p = f;
                    p[i] += k as f64 * 0.01;
                    re_loss(&f, &p, 0.1).unwrap().0
                })
                .collect();
            let argmin = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmin, 200);
            for w in vals.windows(3) {
                assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
            }
        }
    }

    #[test]
    fn re_large_inputs_guarded() {
        let (v, g) = re_loss(&[12.0], &[11.0], 0.1).unwrap();
        assert!(v.is_finite() && g[0].is_finite());
        assert!(matches!(re_loss(&[800.0], &[0.0], 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn shape_checks() {
        assert!(matches!(mse(&[], &[]), Err(Error::Shape(_))));
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_channels(&[2.0, 5.0, 7.0], &[1.0, 0.0, 0.0]), 2.0);
        assert_eq!(combine_channels(&[3.0, 3.0, 3.0], &[1.0, 1.0, 1.0]), 9.0);
    }

    #[test]
    fn config_presence_and_validation() {
        assert_eq!(LossConfig::from_name("RE", None, None).unwrap().kind, LossKind::Re { lambda: 0.1 });
        assert!(LossConfig::from_name("huber", None, None).is_err());
        assert!(LossConfig::re(-0.1).validate().is_err());
        assert!(LossConfig::awmse(1.0, Some([1.0, 0.0, 1.0])).validate().is_err());
        assert!(LossConfig::mse().with_weights([0.0; 3]).validate().is_err());
        let json = serde_json::to_string(&LossConfig::re(0.2)).unwrap();
        assert_eq!(json, r#"{"kind":"re","lambda":0.2,"channel_weights":[1.0,1.0,1.0]}"#);
        let back: LossConfig = serde_json::from_str(r#"{"kind":"awmse","beta":1.0}"#).unwrap();
        assert_eq!(back, LossConfig::awmse(1.0, None));
        assert!(serde_json::from_str::<LossConfig>(r#"{"kind":"mse","beta":1.0}"#).is_ok());
    }

    #[test]
    fn unresolved_sigma_is_an_error_and_resolution_uses_std() {
        let cfg = LossConfig::awmse(1.0, None);
        assert!(cfg.value(&[[0.0; 3]], &[[1.0; 3]]).is_err());
        let t = [[1.0, 0.0, 5.0], [-1.0, 0.0, 1.0]];
        let r = cfg.resolve_sigma(&t).unwrap();
        match r.kind {
            LossKind::Awmse { sigma_y: Some(s), .. } => {
                assert_eq!(s[0], 1.0);
                assert_eq!(s[1], crate::dataset::SCALE_FLOOR);
                assert_eq!(s[2], 2.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn channel_weights_distribute_gradient() {
        let y = [[0.1, -0.4, 1.2], [0.5, 0.2, -0.3]];
        let p = [[0.0, 0.1, 0.9], [0.6, -0.2, 0.4]];
        let w = [0.5, 2.0, 0.0];
        for cfg in [LossConfig::mse(), LossConfig::re(0.1), LossConfig::awmse(1.0, Some([0.5, 1.0, 2.0]))] {
            let cfg = cfg.with_weights(w);
            let (_, g) = cfg.evaluate(&y, &p).unwrap();
            let flat: Vec<f64> = p.iter().flatten().copied().collect();
            let num = fd(
                |x| {
                    let q: Vec<[f64; 3]> = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
                    cfg.value(&y, &q).unwrap()
                },
                &flat,
                1e-6,
            );
            let ana: Vec<f64> = g.iter().flatten().copied().collect();
            assert!(close(&ana, &num, 1e-7), "{ana:?} vs {num:?}");
            assert!(g.iter().all(|r| r[2] == 0.0));
        }
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(
            pairs in proptest::collection::vec((-2.5f64..2.5, -2.5f64..2.5), 1..12),
            lambda in 0.0f64..1.0,
            beta in 0.0f64..3.0,
            sigma in 0.3f64..3.0,
        ) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let h = 1e-6;
            let (_, g) = mse(&y, &p).unwrap();
            prop_assert!(close(&g, &fd(|x| mse(&y, x).unwrap().0, &p, h), 1e-6));
            let (_, g) = awmse(&y, &p, beta, sigma).unwrap();
            prop_assert!(close(&g, &fd(|x| awmse(&y, x, beta, sigma).unwrap().0, &p, h), 1e-6));
            let (_, g) = re_loss(&y, &p, lambda).unwrap();
            prop_assert!(close(&g, &fd(|x| re_loss(&y, x, lambda).unwrap().0, &p, h), 1e-6));
        }

        #[test]
        fn awmse_beta_zero_is_mse_bit_exact(
            pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
            sigma in 1e-3f64..1e3,
        ) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mse(&y, &p).unwrap();
            let b = awmse(&y, &p, 0.0, sigma).unwrap();
            prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
            prop_assert!(a.1.iter().zip(&b.1).all(|(x, z)| x.to_bits() == z.to_bits()));
        }

        #[test]
        fn awmse_tail_emphasis_is_monotone(
            y in 0.0f64..5.0, dy in 1e-3f64..2.0, e in 1e-3f64..2.0,
            beta in 1e-3f64..3.0, sigma in 0.1f64..3.0, negative in any::<bool>(),
        ) {
            let s = if negative { -1.0 } else { 1.0 };
            let lo = awmse(&[s * y], &[s * y + e], beta, sigma).unwrap().0;
            let hi = awmse(&[s * (y + dy)], &[s * (y + dy) + e], beta, sigma).unwrap().0;
            prop_assert!(hi > lo);
            prop_assert!(amplitude_weight(s * y, beta, sigma) >= 1.0);
        }

        #[test]
        fn re_stationary_and_locally_convex(f in proptest::collection::vec(-3.0f64..3.0, 1..10), lambda in 0.0f64..1.0) {
            let (_, g) = re_loss(&f, &f, lambda).unwrap();
            prop_assert!(g.iter().all(|x| x.abs() < 1e-13));
            let h = 1e-3;
            for i in 0..f.len() {
                let mut up = f.clone();
                up[i] += h;
                let mut dn = f.clone();
                dn[i] -= h;
                let c = re_loss(&f, &up, lambda).unwrap().0 + re_loss(&f, &dn, lambda).unwrap().0
                    - 2.0 * re_loss(&f, &f, lambda).unwrap().0;
                prop_assert!(c > 0.0);
            }
        }
    }
}
