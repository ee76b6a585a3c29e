use ndarray::{Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward_batch, lstm_gradients, LstmGrads, LstmParams};
use crate::error::{Error, Result};
use crate::evaluation::weighted_f1;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmHyper {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub forget_bias: f64,
}

impl Default for LstmHyper {
    fn default() -> Self {
        LstmHyper {
            hidden: 256,
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 200,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            forget_bias: 1.0,
        }
    }
}

/// Per-input standardization fitted on training sequences. Window features
/// span very different ranges (time of day in [0, 100], variances in the
/// thousands), which would saturate the gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(xs: ArrayView3<f64>) -> Self {
        let d = xs.dim().2;
        let flat = xs
            .to_shape((xs.dim().0 * xs.dim().1, d))
            .expect("contiguous reshape")
            .to_owned();
        let mean = flat.mean_axis(Axis(0)).expect("non-empty");
        let var = flat.var_axis(Axis(0), 0.0);
        FeatureScaler {
            mean: mean.to_vec(),
            scale: var
                .iter()
                .map(|&v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 })
                .collect(),
        }
    }

    pub fn apply(&self, xs: ArrayView3<f64>) -> Array3<f64> {
        let mut out = xs.to_owned();
        for mut lane in out.lanes_mut(Axis(2)) {
            for (k, v) in lane.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.scale[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation weighted F1 per epoch; empty without a validation set.
    pub valid_weighted_f1: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub chosen_epoch: usize,
    pub stopped_early: bool,
}

/// A trained classifier: standardization plus LSTM weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub params: LstmParams,
    pub scaler: FeatureScaler,
    pub hyper: LstmHyper,
    pub n_steps: usize,
    pub seed: u64,
}

impl LstmModel {
    /// Probabilities for raw (unstandardized) sequences.
    pub fn predict_sequences(&self, xs: ArrayView3<f64>) -> Result<Vec<f64>> {
        let scaled = self.scaler.apply(xs);
        let mut out = Vec::with_capacity(xs.dim().0);
        for chunk in scaled.axis_chunks_iter(Axis(0), 128) {
            out.extend(forward_batch(&self.params, chunk)?.probs);
        }
        Ok(out)
    }

    /// Probabilities for flat rows laid out as `n_steps` consecutive windows.
    pub fn predict_flat(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let d = self.params.input_size();
        if x.ncols() != self.n_steps * d {
            return Err(Error::Shape {
                expected: format!("{} features", self.n_steps * d),
                found: x.ncols().to_string(),
            });
        }
        let seqs = flat_to_sequences(x, self.n_steps)?;
        self.predict_sequences(seqs.view())
    }
}

/// Reshapes (rows × steps·width) into (rows × steps × width).
pub(crate) fn flat_to_sequences(x: ArrayView2<f64>, n_steps: usize) -> Result<Array3<f64>> {
    let (n, w) = x.dim();
    if n_steps == 0 || w % n_steps != 0 {
        return Err(Error::Shape {
            expected: format!("width divisible by {n_steps}"),
            found: w.to_string(),
        });
    }
    Ok(x.to_owned()
        .into_shape_with_order((n, n_steps, w / n_steps))
        .expect("row-major reshape"))
}

struct Adam {
    m: LstmParams,
    v: LstmParams,
    t: i32,
}

impl Adam {
    fn new(p: &LstmParams) -> Self {
        Adam {
            m: LstmParams::zeros_like(p),
            v: LstmParams::zeros_like(p),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut LstmParams, g: &LstmGrads, hp: &LstmHyper) {
        self.t += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.t);
        let bc2 = 1.0 - hp.beta2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
                v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
            }
        };
        update(
            p.w.as_slice_mut().unwrap(),
            g.w.as_slice().unwrap(),
            self.m.w.as_slice_mut().unwrap(),
            self.v.w.as_slice_mut().unwrap(),
        );
        update(
            p.u.as_slice_mut().unwrap(),
            g.u.as_slice().unwrap(),
            self.m.u.as_slice_mut().unwrap(),
            self.v.u.as_slice_mut().unwrap(),
        );
        update(
            p.b.as_slice_mut().unwrap(),
            g.b.as_slice().unwrap(),
            self.m.b.as_slice_mut().unwrap(),
            self.v.b.as_slice_mut().unwrap(),
        );
        update(
            p.w_out.as_slice_mut().unwrap(),
            g.w_out.as_slice().unwrap(),
            self.m.w_out.as_slice_mut().unwrap(),
            self.v.w_out.as_slice_mut().unwrap(),
        );
        update(
            std::slice::from_mut(&mut p.b_out),
            std::slice::from_ref(&g.b_out),
            std::slice::from_mut(&mut self.m.b_out),
            std::slice::from_mut(&mut self.v.b_out),
        );
    }
}

/// Labeled sequences shaped (samples, steps, inputs).
#[derive(Debug, Clone, Copy)]
pub struct SeqData<'a> {
    pub x: ArrayView3<'a, f64>,
    pub y: &'a [u8],
}

/// Trains with Adam on shuffled mini-batches.
///
/// With a validation set, training stops once validation weighted F1 has not
/// improved for `patience` epochs (at least one), and the parameters of the
/// best epoch (earliest on ties) are returned. Without one, it runs exactly
/// `max_epochs`.
pub fn fit_lstm(
    train: SeqData,
    valid: Option<SeqData>,
    hyper: &LstmHyper,
    seed: u64,
) -> Result<(LstmModel, TrainLog)> {
    let (n, n_steps, d) = train.x.dim();
    if n != train.y.len() {
        return Err(Error::Shape {
            expected: format!("{n} labels"),
            found: train.y.len().to_string(),
        });
    }
    let pos = train.y.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    if hyper.batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let scaler = FeatureScaler::fit(train.x);
    let x_train = scaler.apply(train.x);
    let x_valid = valid.map(|v| scaler.apply(v.x));

    let mut params = LstmParams::init(
        d,
        hyper.hidden,
        hyper.forget_bias,
        seeds::derive(seed, "lstm-init"),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "lstm-shuffle"));
    let mut adam = Adam::new(&params);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, LstmParams)> = None;
    let mut wait = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=hyper.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb: Vec<u8> = batch.iter().map(|&i| train.y[i]).collect();
            let (loss, grads) = lstm_gradients(&params, xb.view(), &yb).map_err(|e| match e {
                Error::Divergence { .. } => Error::Divergence { epoch },
                other => other,
            })?;
            adam.step(&mut params, &grads, hyper);
            loss_sum += loss * batch.len() as f64;
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log.train_loss.push(epoch_loss);

        let (Some(xv), Some(v)) = (&x_valid, valid) else {
            log.chosen_epoch = epoch;
            continue;
        };
        let mut probs = Vec::with_capacity(v.y.len());
        for chunk in xv.axis_chunks_iter(Axis(0), 128) {
            probs.extend(forward_batch(&params, chunk)?.probs);
        }
        let preds: Vec<u8> = probs.iter().map(|&p| (p >= 0.5) as u8).collect();
        let f = weighted_f1(v.y, &preds)?;
        log.valid_weighted_f1.push(f);
        if best.as_ref().is_none_or(|(b, _)| f > *b) {
            best = Some((f, params.clone()));
            log.chosen_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= hyper.patience.max(1) {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        params = p;
    }
    Ok((
        LstmModel {
            params,
            scaler,
            hyper: *hyper,
            n_steps,
            seed,
        },
        log,
    ))
}

/// Sequences for a flat feature matrix.
pub fn sequences(x: ArrayView2<f64>, n_steps: usize) -> Result<Array3<f64>> {
    flat_to_sequences(x, n_steps)
}
