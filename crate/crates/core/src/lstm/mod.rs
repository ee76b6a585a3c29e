//! Single-layer LSTM sequence classifier trained with backpropagation through
//! time. Gate blocks in every stacked matrix are ordered input, forget,
//! output, candidate.

mod params;
mod train;

use ndarray::{s, Array1, Array2, ArrayView2, ArrayView3, Axis, Zip};

use crate::error::{Error, Result};
use crate::gbt::{logit_loss, sigmoid};

pub use params::{LstmGrads, LstmParams};
pub use train::{fit_lstm, sequences, FeatureScaler, LstmHyper, LstmModel, SeqData, TrainLog};

/// Activations of one unrolled step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub o: Array2<f64>,
    pub g: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub steps: Vec<StepCache>,
    pub h_last: Array2<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

fn check_batch(params: &LstmParams, xs: &ArrayView3<f64>) -> Result<()> {
    let (b, t, d) = xs.dim();
    if d != params.input_size() || t == 0 || b == 0 {
        return Err(Error::Shape {
            expected: format!("batch × steps × {}", params.input_size()),
            found: format!("{b} × {t} × {d}"),
        });
    }
    Ok(())
}

/// Runs the recurrence over a batch shaped (batch, steps, inputs) from zero
/// initial state.
pub fn forward_batch(params: &LstmParams, xs: ArrayView3<f64>) -> Result<ForwardPass> {
    check_batch(params, &xs)?;
    let (b, t_len, _) = xs.dim();
    let h = params.hidden_size();
    let mut h_t = Array2::<f64>::zeros((b, h));
    let mut c_t = Array2::<f64>::zeros((b, h));
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let x = xs.index_axis(Axis(1), t).to_owned();
        let mut z = x.dot(&params.w.t()) + h_t.dot(&params.u.t());
        z += &params.b;
        let i = z.slice(s![.., 0..h]).mapv(sigmoid);
        let f = z.slice(s![.., h..2 * h]).mapv(sigmoid);
        let o = z.slice(s![.., 2 * h..3 * h]).mapv(sigmoid);
        let g = z.slice(s![.., 3 * h..4 * h]).mapv(f64::tanh);
        let c = &f * &c_t + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h_next = &o * &tanh_c;
        steps.push(StepCache {
            x,
            h_prev: std::mem::replace(&mut h_t, h_next),
            c_prev: std::mem::replace(&mut c_t, c),
            i,
            f,
            o,
            g,
            tanh_c,
        });
    }
    let logits = h_t.dot(&params.w_out) + params.b_out;
    let probs = logits.mapv(sigmoid);
    Ok(ForwardPass {
        steps,
        h_last: h_t,
        logits,
        probs,
    })
}

/// Probability for a single (steps × inputs) sequence, plus its activations.
pub fn lstm_forward(params: &LstmParams, seq: ArrayView2<f64>) -> Result<(f64, ForwardPass)> {
    let batch = seq.insert_axis(Axis(0));
    let pass = forward_batch(params, batch)?;
    Ok((pass.probs[0], pass))
}

/// Mean binary cross-entropy of a batch.
pub fn batch_loss(params: &LstmParams, xs: ArrayView3<f64>, labels: &[u8]) -> Result<f64> {
    let pass = forward_batch(params, xs)?;
    Ok(mean_loss(&pass.logits, labels))
}

fn mean_loss(logits: &Array1<f64>, labels: &[u8]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| logit_loss(z, f64::from(y)))
        .sum::<f64>()
        / labels.len() as f64
}

/// Exact gradients of the mean binary cross-entropy by backpropagation
/// through every unrolled step. Returns the loss alongside.
pub fn lstm_gradients(
    params: &LstmParams,
    xs: ArrayView3<f64>,
    labels: &[u8],
) -> Result<(f64, LstmGrads)> {
    if labels.len() != xs.dim().0 {
        return Err(Error::Shape {
            expected: format!("{} labels", xs.dim().0),
            found: labels.len().to_string(),
        });
    }
    let pass = forward_batch(params, xs)?;
    let loss = mean_loss(&pass.logits, labels);
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let n = labels.len() as f64;
    let h = params.hidden_size();
    let mut grads = LstmGrads::zeros_like(params);

    let dlogit: Array1<f64> = pass
        .probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - f64::from(y)) / n)
        .collect();
    grads.w_out = pass.h_last.t().dot(&dlogit);
    grads.b_out = dlogit.sum();

    let mut dh = dlogit
        .view()
        .insert_axis(Axis(1))
        .dot(&params.w_out.view().insert_axis(Axis(0)));
    let mut dc = Array2::<f64>::zeros(dh.raw_dim());
    let mut dz = Array2::<f64>::zeros((labels.len(), 4 * h));
    for step in pass.steps.iter().rev() {
        // through h = o ⊙ tanh(c)
        Zip::from(&mut dc)
            .and(&dh)
            .and(&step.o)
            .and(&step.tanh_c)
            .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));
        Zip::from(dz.slice_mut(s![.., 2 * h..3 * h]))
            .and(&dh)
            .and(&step.tanh_c)
            .and(&step.o)
            .for_each(|dz, &dh, &tc, &o| *dz = dh * tc * o * (1.0 - o));
        Zip::from(dz.slice_mut(s![.., 0..h]))
            .and(&dc)
            .and(&step.g)
            .and(&step.i)
            .for_each(|dz, &dc, &g, &i| *dz = dc * g * i * (1.0 - i));
        Zip::from(dz.slice_mut(s![.., h..2 * h]))
            .and(&dc)
            .and(&step.c_prev)
            .and(&step.f)
            .for_each(|dz, &dc, &cp, &f| *dz = dc * cp * f * (1.0 - f));
        Zip::from(dz.slice_mut(s![.., 3 * h..4 * h]))
            .and(&dc)
            .and(&step.i)
            .and(&step.g)
            .for_each(|dz, &dc, &i, &g| *dz = dc * i * (1.0 - g * g));

        grads.w += &dz.t().dot(&step.x);
        grads.u += &dz.t().dot(&step.h_prev);
        grads.b += &dz.sum_axis(Axis(0));

        dh = dz.dot(&params.u);
        dc *= &step.f;
    }
    Ok((loss, grads))
}
