use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::protocol::{CvLog, ModelKind, TrainOutcome, TrainedModel};
use super::split::Split;
use crate::data_model::Channel;
use crate::error::{Error, Result};
use crate::features::{DiffMode, FeatureKind, FeatureLayout};
use crate::lstm::TrainLog;
use crate::signal::{NormalizationMode, NormalizationStats};

pub const BUNDLE_SCHEMA: &str = "ambient-agitation/model-bundle/v1";

/// Hex SHA-256 of a value's JSON serialization.
pub fn config_hash(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hex SHA-256 of a split's train-side row indices.
pub fn split_digest(split: &Split) -> String {
    let mut h = Sha256::new();
    for &i in &split.train {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDescriptor {
    pub n_windows: usize,
    pub channels: Vec<String>,
    pub feature_kinds: Vec<String>,
    /// Flat index of (window w, channel c, kind f) is `w·35 + c·7 + f`.
    pub index_rule: String,
    pub diff_mode: DiffMode,
}

impl LayoutDescriptor {
    pub fn new(layout: FeatureLayout, diff_mode: DiffMode) -> Self {
        LayoutDescriptor {
            n_windows: layout.n_windows,
            channels: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
            feature_kinds: FeatureKind::ALL
                .iter()
                .map(|f| f.name().to_string())
                .collect(),
            index_rule: "w*35 + c*7 + f".into(),
            diff_mode,
        }
    }
}

/// Everything needed to score new feature rows the way the model was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema: String,
    pub model_kind: ModelKind,
    pub dataset: String,
    pub config_hash: String,
    pub seed: u64,
    pub layout: LayoutDescriptor,
    pub normalization_mode: NormalizationMode,
    pub normalization: NormalizationStats,
    pub split_digest: String,
    pub train_rows: usize,
    pub cv: CvLog,
    pub train_log: Option<TrainLog>,
    pub model: TrainedModel,
}

impl ModelBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        outcome: TrainOutcome,
        dataset: &str,
        config_hash: String,
        seed: u64,
        layout: LayoutDescriptor,
        normalization_mode: NormalizationMode,
        normalization: NormalizationStats,
        split: &Split,
    ) -> Self {
        ModelBundle {
            schema: BUNDLE_SCHEMA.into(),
            model_kind: outcome.model.kind(),
            dataset: dataset.to_string(),
            config_hash,
            seed,
            layout,
            normalization_mode,
            normalization,
            split_digest: split_digest(split),
            train_rows: outcome.train_rows,
            cv: outcome.cv,
            train_log: outcome.train_log,
            model: outcome.model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: ModelBundle = serde_json::from_str(&text)?;
        if bundle.schema != BUNDLE_SCHEMA {
            return Err(Error::Config {
                key: "schema".into(),
                reason: format!("unsupported bundle schema {:?}", bundle.schema),
            });
        }
        Ok(bundle)
    }
}
