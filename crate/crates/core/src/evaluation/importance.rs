use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::weighted_f1;
use super::protocol::TrainedModel;
use crate::data_model::Channel;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureLayout, WINDOW_WIDTH};
use crate::gbt::TreeEnsemble;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub name: String,
    pub columns: usize,
    /// Mean drop in weighted F1 over the repeats.
    pub drop_mean: f64,
    pub drop_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub name: String,
    pub gain: f64,
    pub splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub metric: String,
    pub repeats: usize,
    pub baseline_weighted_f1: f64,
    /// One group per channel: all of its columns in every window.
    pub channels: Vec<ImportanceEntry>,
    /// One group per feature type across channels and windows.
    pub feature_kinds: Vec<ImportanceEntry>,
    /// Single columns; empty when not requested.
    pub features: Vec<ImportanceEntry>,
    /// Split gain summed per channel (tree models only).
    pub gain_by_channel: Vec<GainEntry>,
    pub gain_by_feature_kind: Vec<GainEntry>,
}

impl ImportanceReport {
    pub fn with_context(mut self, dataset: &str, seed: u64) -> Self {
        self.dataset = dataset.to_string();
        self.seed = seed;
        self
    }

    fn top<'a>(entries: impl Iterator<Item = (&'a str, f64)>) -> Option<&'a str> {
        entries
            .fold(None, |best: Option<(&str, f64)>, (name, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((name, v)),
            })
            .map(|(name, _)| name)
    }

    /// Channel with the largest permutation drop (first on ties).
    pub fn top_channel(&self) -> Option<&str> {
        Self::top(self.channels.iter().map(|e| (e.name.as_str(), e.drop_mean)))
    }

    pub fn top_feature_kind(&self) -> Option<&str> {
        Self::top(
            self.feature_kinds
                .iter()
                .map(|e| (e.name.as_str(), e.drop_mean)),
        )
    }

    pub fn top_gain_channel(&self) -> Option<&str> {
        Self::top(
            self.gain_by_channel
                .iter()
                .map(|e| (e.name.as_str(), e.gain)),
        )
    }

    pub fn top_gain_feature_kind(&self) -> Option<&str> {
        Self::top(
            self.gain_by_feature_kind
                .iter()
                .map(|e| (e.name.as_str(), e.gain)),
        )
    }
}

/// Gain and split counts of an ensemble summed per channel and per feature type.
pub fn gain_importance(model: &TreeEnsemble) -> (Vec<GainEntry>, Vec<GainEntry>) {
    let layout = FeatureLayout {
        n_windows: model.n_features / WINDOW_WIDTH,
    };
    let gain = model.importance_gain();
    let weight = model.importance_weight();
    let group = |cols: Vec<usize>, name: &str| GainEntry {
        name: name.to_string(),
        gain: cols
            .iter()
            .filter_map(|c| gain.get(c))
            .fold(0.0, |a, g| a + g),
        splits: cols.iter().filter_map(|c| weight.get(c)).sum(),
    };
    (
        Channel::ALL
            .iter()
            .map(|&c| group(layout.channel_columns(c), c.name()))
            .collect(),
        FeatureKind::ALL
            .iter()
            .map(|&f| group(layout.feature_columns(f), f.name()))
            .collect(),
    )
}

fn shuffled_score(
    model: &TrainedModel,
    x: ArrayView2<f64>,
    y: &[u8],
    columns: &[usize],
    seed: u64,
) -> Result<f64> {
    let mut perm: Vec<usize> = (0..x.nrows()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut xp: Array2<f64> = x.to_owned();
    for &c in columns {
        let col = x.column(c);
        for (i, &j) in perm.iter().enumerate() {
            xp[[i, c]] = col[j];
        }
    }
    let pred = model.predict(xp.view())?;
    weighted_f1(y, &pred)
}

/// Mean weighted-F1 drop when a column group is shuffled across the rows of
/// the evaluation set, the same row permutation applied to every column of
/// the group.
pub fn permutation_importance(
    model: &TrainedModel,
    x: ArrayView2<f64>,
    y: &[u8],
    repeats: usize,
    seed: u64,
    per_feature: bool,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::invalid(
            "permutation importance needs at least one repeat",
        ));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid(
            "permutation importance needs a non-empty set",
        ));
    }
    let layout = FeatureLayout {
        n_windows: x.ncols() / WINDOW_WIDTH,
    };
    let baseline = weighted_f1(y, &model.predict(x)?)?;

    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for c in Channel::ALL {
        groups.push((format!("channel/{}", c.name()), layout.channel_columns(c)));
    }
    for f in FeatureKind::ALL {
        groups.push((format!("kind/{}", f.name()), layout.feature_columns(f)));
    }
    if per_feature {
        for i in 0..x.ncols() {
            groups.push((format!("feature/{}", layout.name(i)), vec![i]));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..repeats).map(move |r| (g, r)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let (name, cols) = &groups[g];
            let s = seeds::derive_indexed(seeds::derive(seed, name), "repeat", r as u64);
            shuffled_score(model, x, y, cols, s)
        })
        .collect::<Result<_>>()?;

    let mut channels = Vec::new();
    let mut feature_kinds = Vec::new();
    let mut features = Vec::new();
    for (g, (name, cols)) in groups.iter().enumerate() {
        let drops: Vec<f64> = scores[g * repeats..(g + 1) * repeats]
            .iter()
            .map(|s| baseline - s)
            .collect();
        let mean = drops.iter().sum::<f64>() / repeats as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / repeats as f64;
        let (kind, short) = name.split_once('/').expect("group names carry a prefix");
        let entry = ImportanceEntry {
            name: short.to_string(),
            columns: cols.len(),
            drop_mean: mean,
            drop_std: var.sqrt(),
        };
        match kind {
            "channel" => channels.push(entry),
            "kind" => feature_kinds.push(entry),
            _ => features.push(entry),
        }
    }
    let (gain_by_channel, gain_by_feature_kind) = match model {
        TrainedModel::Gbt(m) => gain_importance(m),
        TrainedModel::Lstm(_) => (Vec::new(), Vec::new()),
    };
    Ok(ImportanceReport {
        model: model.kind().name().to_string(),
        dataset: String::new(),
        seed,
        metric: "weighted_f1".into(),
        repeats,
        baseline_weighted_f1: baseline,
        channels,
        feature_kinds,
        features,
        gain_by_channel,
        gain_by_feature_kind,
    })
}
