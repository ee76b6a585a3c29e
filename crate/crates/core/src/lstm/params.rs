use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of one LSTM layer plus the sigmoid read-out.
///
/// `w` is (4·hidden × input), `u` is (4·hidden × hidden), `b` is 4·hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsDoc", try_from = "ParamsDoc")]
pub struct LstmParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

/// Gradients with the same shapes as [`LstmParams`].
pub type LstmGrads = LstmParams;

fn glorot(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Array2::zeros((4 * hidden, input)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
            w_out: Array1::zeros(hidden),
            b_out: 0.0,
        }
    }

    pub fn zeros_like(other: &LstmParams) -> Self {
        LstmParams::zeros(other.input_size(), other.hidden_size())
    }

    /// Glorot-uniform weights drawn per gate block, zero biases except the
    /// forget gate.
    pub fn init(input: usize, hidden: usize, forget_bias: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmParams::zeros(input, hidden);
        for gate in 0..4 {
            let rows = gate * hidden..(gate + 1) * hidden;
            p.w.slice_mut(ndarray::s![rows.clone(), ..])
                .assign(&glorot(hidden, input, input, hidden, &mut rng));
            p.u.slice_mut(ndarray::s![rows, ..])
                .assign(&glorot(hidden, hidden, hidden, hidden, &mut rng));
        }
        p.b.slice_mut(ndarray::s![hidden..2 * hidden])
            .fill(forget_bias);
        p.w_out = glorot(hidden, 1, hidden, 1, &mut rng).column(0).to_owned();
        p
    }

    pub fn input_size(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(&self.u)
            .chain(&self.b)
            .chain(&self.w_out)
            .all(|v| v.is_finite())
            && self.b_out.is_finite()
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len() + self.w_out.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mutable access to scalar `k` in the order w, u, b, w_out, b_out.
    pub fn get_mut(&mut self, mut k: usize) -> &mut f64 {
        for block in [
            self.w.as_slice_mut().expect("standard layout"),
            self.u.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
        ] {
            if k < block.len() {
                return &mut block[k];
            }
            k -= block.len();
        }
        assert_eq!(k, 0, "parameter index out of range");
        &mut self.b_out
    }

    pub fn get(&self, k: usize) -> f64 {
        let mut copy_k = k;
        for block in [
            self.w.as_slice().expect("standard layout"),
            self.u.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
        ] {
            if copy_k < block.len() {
                return block[copy_k];
            }
            copy_k -= block.len();
        }
        assert_eq!(copy_k, 0, "parameter index out of range");
        self.b_out
    }

    pub fn max_abs_diff(&self, other: &LstmParams) -> f64 {
        (0..self.len())
            .map(|k| (self.get(k) - other.get(k)).abs())
            .fold(0.0, f64::max)
    }
}

/// Serialized form: shapes plus row-major arrays.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    input_size: usize,
    hidden_size: usize,
    gate_order: String,
    w: Vec<f64>,
    u: Vec<f64>,
    b: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
}

const GATE_ORDER: &str = "input,forget,output,candidate";

impl From<LstmParams> for ParamsDoc {
    fn from(p: LstmParams) -> Self {
        ParamsDoc {
            input_size: p.input_size(),
            hidden_size: p.hidden_size(),
            gate_order: GATE_ORDER.into(),
            w: p.w.iter().copied().collect(),
            u: p.u.iter().copied().collect(),
            b: p.b.to_vec(),
            w_out: p.w_out.to_vec(),
            b_out: p.b_out,
        }
    }
}

impl TryFrom<ParamsDoc> for LstmParams {
    type Error = Error;

    fn try_from(d: ParamsDoc) -> Result<Self> {
        if d.gate_order != GATE_ORDER {
            return Err(Error::invalid(format!(
                "unsupported gate order {:?}",
                d.gate_order
            )));
        }
        let (h, i) = (d.hidden_size, d.input_size);
        let shape = |e: ndarray::ShapeError| Error::Shape {
            expected: format!("hidden {h}, input {i}"),
            found: e.to_string(),
        };
        if d.b.len() != 4 * h || d.w_out.len() != h {
            return Err(Error::Shape {
                expected: format!("hidden {h}"),
                found: format!("b {}, w_out {}", d.b.len(), d.w_out.len()),
            });
        }
        Ok(LstmParams {
            w: Array2::from_shape_vec((4 * h, i), d.w).map_err(shape)?,
            u: Array2::from_shape_vec((4 * h, h), d.u).map_err(shape)?,
            b: Array1::from(d.b),
            w_out: Array1::from(d.w_out),
            b_out: d.b_out,
        })
    }
}
