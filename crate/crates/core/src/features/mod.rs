//! Pre-event segmentation and per-window feature extraction.
//!
//! An observation is `n_windows` contiguous, non-overlapping windows that end
//! `gap_min` minutes before the anchor time. With the defaults (12, 6, 9) the
//! windows tile `[anchor - 66 min, anchor - 12 min)`, 54 minutes in total.
//! Each window yields 35 values (5 channels × 7 features), giving a 315-value
//! flat vector or a 9 × 35 sequence.

mod export;
mod observation;
mod window;

use serde::{Deserialize, Serialize};

use crate::data_model::Channel;

pub use export::{read_feature_csv, write_feature_csv, FeatureTable};
pub use observation::{
    build_observations, extract_observation, normalize_observation, sample_negatives,
    ExtractConfig, ExtractionReport, Observation, ObservationSet, ObservationWindow,
};
pub use window::{to_feature_vector, to_sequence, window_features, FeatureVector, SequenceSample};

/// Per-window features, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mean,
    Median,
    Max,
    Variance,
    MeanAbsDiff,
    MaxAbsDiff,
    TimeOfDay,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Mean,
        FeatureKind::Median,
        FeatureKind::Max,
        FeatureKind::Variance,
        FeatureKind::MeanAbsDiff,
        FeatureKind::MaxAbsDiff,
        FeatureKind::TimeOfDay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mean => "mean",
            FeatureKind::Median => "median",
            FeatureKind::Max => "max",
            FeatureKind::Variance => "variance",
            FeatureKind::MeanAbsDiff => "mean_abs_diff",
            FeatureKind::MaxAbsDiff => "max_abs_diff",
            FeatureKind::TimeOfDay => "time_of_day",
        }
    }
}

pub const CHANNELS: usize = 5;
pub const FEATURES_PER_CHANNEL: usize = 7;
/// Values per window: 5 channels × 7 features.
pub const WINDOW_WIDTH: usize = CHANNELS * FEATURES_PER_CHANNEL;

/// Whether the differential features use |x[i+1] - x[i]| or the signed difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffMode {
    #[default]
    Absolute,
    Signed,
}

/// Pre-event window geometry in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowGeometry {
    pub gap_min: u32,
    pub window_min: u32,
    pub n_windows: u32,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            gap_min: 12,
            window_min: 6,
            n_windows: 9,
        }
    }
}

impl WindowGeometry {
    pub fn window_seconds(&self) -> usize {
        self.window_min as usize * 60
    }

    /// Total lookback from the anchor to the start of the oldest window.
    pub fn lookback_seconds(&self) -> f64 {
        f64::from(self.gap_min + self.window_min * self.n_windows) * 60.0
    }

    /// `[start, end)` of window `w` (0 = oldest) for an anchor time.
    pub fn window_bounds(&self, anchor: f64, w: usize) -> (f64, f64) {
        let n = self.n_windows as usize;
        assert!(w < n, "window index {w} out of range");
        let to_end = f64::from(self.gap_min) + (n - w - 1) as f64 * f64::from(self.window_min);
        let end = anchor - to_end * 60.0;
        (end - self.window_seconds() as f64, end)
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            n_windows: self.n_windows as usize,
        }
    }
}

/// Canonical flat index `w·35 + c·7 + f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_windows: usize,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        WindowGeometry::default().layout()
    }
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.n_windows * WINDOW_WIDTH
    }

    pub fn is_empty(&self) -> bool {
        self.n_windows == 0
    }

    pub fn index(&self, window: usize, channel: Channel, feature: FeatureKind) -> usize {
        window * WINDOW_WIDTH + channel.index() * FEATURES_PER_CHANNEL + feature.index()
    }

    pub fn decompose(&self, index: usize) -> (usize, Channel, FeatureKind) {
        let w = index / WINDOW_WIDTH;
        let rest = index % WINDOW_WIDTH;
        (
            w,
            Channel::ALL[rest / FEATURES_PER_CHANNEL],
            FeatureKind::ALL[rest % FEATURES_PER_CHANNEL],
        )
    }

    pub fn name(&self, index: usize) -> String {
        let (w, c, f) = self.decompose(index);
        format!("w{w}_{c}_{}", f.name())
    }

    /// Every index belonging to one channel (all windows, all features).
    pub fn channel_columns(&self, channel: Channel) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.decompose(i).1 == channel)
            .collect()
    }

    pub fn feature_columns(&self, feature: FeatureKind) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.decompose(i).2 == feature)
            .collect()
    }

    pub fn window_columns(&self, window: usize) -> Vec<usize> {
        (window * WINDOW_WIDTH..(window + 1) * WINDOW_WIDTH).collect()
    }
}
