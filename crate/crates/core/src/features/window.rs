use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DiffMode, Observation, FEATURES_PER_CHANNEL, WINDOW_WIDTH};

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Flat per-observation feature vector in canonical `w·35 + c·7 + f` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Windows × 35 matrix, oldest window first.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub steps: Array2<f64>,
    pub label: u8,
}

/// Time of day of a local timestamp on a 0–100 scale.
pub(crate) fn time_of_day(local_seconds: f64) -> f64 {
    let sod = local_seconds.rem_euclid(SECONDS_PER_DAY);
    100.0 * (sod / 60.0) / 1440.0
}

/// The 35 features of one window: per channel mean, median, max, population
/// variance, mean and max of first differences, and time of day of the window
/// start (replicated per channel).
pub fn window_features(
    channels: [&[f64]; 5],
    window_start_local: f64,
    diff: DiffMode,
) -> [f64; WINDOW_WIDTH] {
    let tod = time_of_day(window_start_local);
    let mut out = [0.0; WINDOW_WIDTH];
    let mut scratch = Vec::new();
    for (c, xs) in channels.iter().enumerate() {
        let f = &mut out[c * FEATURES_PER_CHANNEL..(c + 1) * FEATURES_PER_CHANNEL];
        let n = xs.len();
        if n == 0 {
            f[6] = tod;
            continue;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;

        scratch.clear();
        scratch.extend_from_slice(xs);
        scratch.sort_unstable_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            scratch[n / 2]
        } else {
            0.5 * (scratch[n / 2 - 1] + scratch[n / 2])
        };

        let (mut diff_sum, mut diff_max) = (0.0, f64::NEG_INFINITY);
        for pair in xs.windows(2) {
            let d = match diff {
                DiffMode::Absolute => (pair[1] - pair[0]).abs(),
                DiffMode::Signed => pair[1] - pair[0],
            };
            diff_sum += d;
            diff_max = diff_max.max(d);
        }
        let (diff_mean, diff_max) = if n > 1 {
            (diff_sum / (n - 1) as f64, diff_max)
        } else {
            (0.0, 0.0)
        };
        f.copy_from_slice(&[mean, median, max, var, diff_mean, diff_max, tod]);
    }
    out
}

pub fn to_feature_vector(obs: &Observation, diff: DiffMode) -> FeatureVector {
    let offset = f64::from(obs.timezone_offset_minutes) * 60.0;
    let mut v = Vec::with_capacity(obs.windows.len() * WINDOW_WIDTH);
    for w in &obs.windows {
        let chans = [
            &w.channels[0][..],
            &w.channels[1][..],
            &w.channels[2][..],
            &w.channels[3][..],
            &w.channels[4][..],
        ];
        v.extend_from_slice(&window_features(chans, w.start_time + offset, diff));
    }
    FeatureVector(v)
}

pub fn to_sequence(obs: &Observation, diff: DiffMode) -> SequenceSample {
    let flat = to_feature_vector(obs, diff).0;
    let steps = Array2::from_shape_vec((obs.windows.len(), WINDOW_WIDTH), flat)
        .expect("feature vector is windows × 35");
    SequenceSample {
        steps,
        label: obs.label,
    }
}
