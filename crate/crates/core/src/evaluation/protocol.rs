use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{assemble_dataset, LabeledDataset, ObservationPool};
use super::importance::{permutation_importance, ImportanceReport};
use super::metrics::{compute_metrics, weighted_f1, MetricsReport};
use super::split::stratified_folds;
use crate::error::{Error, Result};
use crate::features::{ExtractConfig, WINDOW_WIDTH};
use crate::gbt::{fit_gbt, predict_gbt, GbtParams, TreeEnsemble};
use crate::lstm::{fit_lstm, sequences, LstmHyper, LstmModel, SeqData, TrainLog};
use crate::seeds;
use crate::signal::{NormalizationMode, DEFAULT_FILTER_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbt,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Gbt, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt" => Ok(ModelKind::Gbt),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config {
                key: "model".into(),
                reason: format!("unknown model kind {other:?} (expected gbt or lstm)"),
            }),
        }
    }
}

/// Which models get per-column permutation importance in addition to the
/// channel and feature-type groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScope {
    All,
    #[default]
    Gbt,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub seed: u64,
    /// Negatives drawn per positive.
    pub negative_ratio: usize,
    /// Share of each class placed in the train half.
    pub split_fraction: f64,
    pub folds: usize,
    pub min_positives: usize,
    pub filter_len: usize,
    pub normalization: NormalizationMode,
    pub extract: ExtractConfig,
    pub gbt: GbtParams,
    pub lstm: LstmHyper,
    pub importance_repeats: usize,
    pub per_feature_importance: FeatureScope,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            seed: 0,
            negative_ratio: 3,
            split_fraction: 0.5,
            folds: 5,
            min_positives: 4,
            filter_len: DEFAULT_FILTER_LEN,
            normalization: NormalizationMode::Full,
            extract: ExtractConfig::default(),
            gbt: GbtParams::default(),
            lstm: LstmHyper::default(),
            importance_repeats: 10,
            per_feature_importance: FeatureScope::Gbt,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::Config {
                key: format!("protocol.{key}"),
                reason,
            })
        };
        if self.folds < 2 {
            return bad("folds", format!("must be at least 2, got {}", self.folds));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(
                "split_fraction",
                format!("{} outside (0, 1)", self.split_fraction),
            );
        }
        if self.negative_ratio == 0 {
            return bad("negative_ratio", "must be at least 1".into());
        }
        if self.filter_len == 0 {
            return bad("filter_len", "must be at least 1".into());
        }
        if self.gbt.n_trees == 0 {
            return bad("gbt.n_trees", "must be at least 1".into());
        }
        if self.lstm.max_epochs == 0 || self.lstm.hidden == 0 || self.lstm.batch_size == 0 {
            return bad(
                "lstm",
                "max_epochs, hidden and batch_size must be positive".into(),
            );
        }
        Ok(())
    }
}

/// A fitted classifier of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum TrainedModel {
    Gbt(TreeEnsemble),
    Lstm(LstmModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Gbt(_) => ModelKind::Gbt,
            TrainedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// Agitation probability per flat feature row.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Gbt(m) => predict_gbt(m, x),
            TrainedModel::Lstm(m) => m.predict_flat(x),
        }
    }

    /// Hard labels at threshold 0.5.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_rows: usize,
    pub valid_rows: usize,
    /// Rounds (GBT) or epoch (LSTM) this fold would pick on its own.
    pub best: usize,
    pub valid_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvLog {
    pub folds: Vec<FoldResult>,
    /// Stopping point used for the refit.
    pub selected: usize,
    /// Mean validation log-loss after 0..=n_trees rounds (GBT only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mean_valid_log_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub cv: CvLog,
    /// Log of the final LSTM refit.
    pub train_log: Option<TrainLog>,
    pub train_rows: usize,
}

fn lstm_steps(width: usize) -> Result<usize> {
    if width == 0 || width % WINDOW_WIDTH != 0 {
        return Err(Error::Shape {
            expected: format!("a multiple of {WINDOW_WIDTH} features"),
            found: width.to_string(),
        });
    }
    Ok(width / WINDOW_WIDTH)
}

fn gbt_cv(
    x: &Array2<f64>,
    y: &[u8],
    folds: &[super::Split],
    cfg: &ProtocolConfig,
) -> Result<CvLog> {
    let runs: Vec<(Vec<f64>, usize, usize, TreeEnsemble)> = folds
        .par_iter()
        .map(|f| {
            let xt = x.select(ndarray::Axis(0), &f.train);
            let yt: Vec<u8> = f.train.iter().map(|&i| y[i]).collect();
            let xv = x.select(ndarray::Axis(0), &f.test);
            let yv: Vec<u8> = f.test.iter().map(|&i| y[i]).collect();
            let model = fit_gbt(xt.view(), &yt, &cfg.gbt, cfg.seed)?;
            let curve = model.staged_log_loss(xv.view(), &yv)?;
            Ok((curve, f.train.len(), f.test.len(), model))
        })
        .collect::<Result<_>>()?;
    let n_rounds = cfg.gbt.n_trees;
    let mean: Vec<f64> = (0..=n_rounds)
        .map(|k| runs.iter().map(|r| r.0[k]).sum::<f64>() / runs.len() as f64)
        .collect();
    let argmin = |curve: &[f64]| {
        (1..curve.len()).fold(1, |best, k| if curve[k] < curve[best] { k } else { best })
    };
    let selected = argmin(&mean);
    let mut fold_results = Vec::new();
    for (k, (curve, nt, nv, model)) in runs.iter().enumerate() {
        let f = &folds[k];
        let xv = x.select(ndarray::Axis(0), &f.test);
        let yv: Vec<u8> = f.test.iter().map(|&i| y[i]).collect();
        let pred: Vec<u8> = predict_gbt(&model.truncated(selected), xv.view())?
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect();
        fold_results.push(FoldResult {
            fold: k,
            train_rows: *nt,
            valid_rows: *nv,
            best: argmin(curve),
            valid_weighted_f1: weighted_f1(&yv, &pred)?,
        });
    }
    Ok(CvLog {
        folds: fold_results,
        selected,
        mean_valid_log_loss: mean,
    })
}

fn lstm_cv(
    x: &Array2<f64>,
    y: &[u8],
    folds: &[super::Split],
    cfg: &ProtocolConfig,
) -> Result<CvLog> {
    let steps = lstm_steps(x.ncols())?;
    let seqs = sequences(x.view(), steps)?;
    let fold_results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let xt = seqs.select(ndarray::Axis(0), &f.train);
            let yt: Vec<u8> = f.train.iter().map(|&i| y[i]).collect();
            let xv = seqs.select(ndarray::Axis(0), &f.test);
            let yv: Vec<u8> = f.test.iter().map(|&i| y[i]).collect();
            let seed = seeds::derive_indexed(cfg.seed, "lstm-fold", k as u64);
            let (_, log) = fit_lstm(
                SeqData {
                    x: xt.view(),
                    y: &yt,
                },
                Some(SeqData {
                    x: xv.view(),
                    y: &yv,
                }),
                &cfg.lstm,
                seed,
            )?;
            Ok(FoldResult {
                fold: k,
                train_rows: f.train.len(),
                valid_rows: f.test.len(),
                best: log.chosen_epoch,
                valid_weighted_f1: log.valid_weighted_f1[log.chosen_epoch - 1],
            })
        })
        .collect::<Result<_>>()?;
    let mut epochs: Vec<usize> = fold_results.iter().map(|f| f.best).collect();
    epochs.sort_unstable();
    Ok(CvLog {
        selected: epochs[(epochs.len() - 1) / 2],
        folds: fold_results,
        mean_valid_log_loss: Vec::new(),
    })
}

/// Cross-validates on the train half to pick the stopping point, then refits
/// on the whole train half.
pub fn train_on(
    data: &LabeledDataset,
    kind: ModelKind,
    cfg: &ProtocolConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train = data.train();
    let folds = stratified_folds(&train.labels, cfg.folds, cfg.seed)?;
    let y = &train.labels;
    match kind {
        ModelKind::Gbt => {
            let cv = gbt_cv(&train.rows, y, &folds, cfg)?;
            let params = GbtParams {
                n_trees: cv.selected,
                ..cfg.gbt
            };
            let model = fit_gbt(train.rows.view(), y, &params, cfg.seed)?;
            Ok(TrainOutcome {
                model: TrainedModel::Gbt(model),
                cv,
                train_log: None,
                train_rows: train.len(),
            })
        }
        ModelKind::Lstm => {
            let cv = lstm_cv(&train.rows, y, &folds, cfg)?;
            let hyper = LstmHyper {
                max_epochs: cv.selected,
                ..cfg.lstm
            };
            let seqs = sequences(train.rows.view(), lstm_steps(train.width())?)?;
            let (model, log) = fit_lstm(
                SeqData { x: seqs.view(), y },
                None,
                &hyper,
                seeds::derive(cfg.seed, "lstm-final"),
            )?;
            Ok(TrainOutcome {
                model: TrainedModel::Lstm(model),
                cv,
                train_log: Some(log),
                train_rows: train.len(),
            })
        }
    }
}

/// Scores a model once on the held-out half.
pub fn evaluate_on(
    model: &TrainedModel,
    data: &LabeledDataset,
    seed: u64,
) -> Result<MetricsReport> {
    let test = data.test();
    let pred = model.predict(test.rows.view())?;
    Ok(compute_metrics(&test.labels, &pred)?.with_context(model.kind().name(), &data.name, seed))
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub dataset: LabeledDataset,
    pub training: TrainOutcome,
    pub metrics: MetricsReport,
    pub importance: ImportanceReport,
}

/// Split, cross-validate, refit, evaluate once on the test half, and measure
/// permutation importance there. Several pools are combined before splitting.
pub fn run_protocol(
    name: &str,
    pools: &[&ObservationPool],
    kind: ModelKind,
    cfg: &ProtocolConfig,
) -> Result<ProtocolOutcome> {
    let dataset = assemble_dataset(name, pools, cfg)?;
    let training = train_on(&dataset, kind, cfg)?;
    let metrics = evaluate_on(&training.model, &dataset, cfg.seed)?;
    let test = dataset.test();
    let per_feature = match cfg.per_feature_importance {
        FeatureScope::All => true,
        FeatureScope::Gbt => kind == ModelKind::Gbt,
        FeatureScope::None => false,
    };
    let importance = permutation_importance(
        &training.model,
        test.rows.view(),
        &test.labels,
        cfg.importance_repeats,
        seeds::derive(cfg.seed, "importance"),
        per_feature,
    )?
    .with_context(&dataset.name, cfg.seed);
    log::info!(
        "{name}/{kind}: F_w {:.3} (accuracy {:.3}, chance {:.3})",
        metrics.weighted_f1,
        metrics.accuracy,
        metrics.chance_weighted_f1
    );
    Ok(ProtocolOutcome {
        dataset,
        training,
        metrics,
        importance,
    })
}
