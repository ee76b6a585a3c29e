use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::protocol::ProtocolConfig;
use super::split::{stratified_split, Split};
use crate::data_model::{Channel, Deployment};
use crate::error::{Error, Result};
use crate::features::{build_observations, ExtractionReport, FeatureTable, Observation};
use crate::seeds;
use crate::signal::{prepare, MinMax, NormalizationMode, NormalizationStats};

/// Observations extracted from one deployment, before any split.
#[derive(Debug, Clone)]
pub struct ObservationPool {
    pub deployment_id: String,
    /// Positives then negatives.
    pub observations: Vec<Observation>,
    pub report: ExtractionReport,
    /// Extrema of the filtered deployment.
    pub deployment_stats: NormalizationStats,
}

impl ObservationPool {
    pub fn positives(&self) -> usize {
        self.observations.iter().filter(|o| o.label == 1).count()
    }
}

/// Filters the deployment and extracts positives plus sampled negatives.
/// Observations are normalized with whole-deployment extrema in
/// [`NormalizationMode::Full`] and left raw otherwise.
pub fn collect_observations(
    deployment: Deployment,
    cfg: &ProtocolConfig,
) -> Result<ObservationPool> {
    let id = deployment.id.clone();
    let normalize_now = cfg.normalization == NormalizationMode::Full;
    let prepared = prepare(deployment, cfg.filter_len, normalize_now)?;
    let seed = seeds::derive(cfg.seed, &format!("negatives/{id}"));
    let set = build_observations(&prepared, cfg.negative_ratio, seed, &cfg.extract)?;
    log::info!(
        "{id}: {} positives ({} dropped), {} negatives",
        set.report.positives,
        set.report.dropped_span + set.report.dropped_quality + set.report.dropped_no_location,
        set.report.negatives
    );
    let report = set.report.clone();
    let deployment_stats = set.deployment_stats.clone();
    Ok(ObservationPool {
        deployment_id: id,
        observations: set.into_all(),
        report,
        deployment_stats,
    })
}

/// Feature rows of one or more pooled deployments with their split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub deployments: Vec<String>,
    pub anchors: Vec<f64>,
    pub nodes: Vec<String>,
    pub table: FeatureTable,
    pub split: Split,
    /// Extrema that produced the normalized values, keyed `deployment/node`.
    pub stats: NormalizationStats,
    pub extraction: Vec<ExtractionReport>,
}

fn stats_key(obs: &Observation) -> String {
    format!("{}/{}", obs.deployment_id, obs.node_id)
}

/// Extrema over the training observations only. A (node, channel) with no
/// training observation falls back to the union of that deployment's training
/// ranges for the channel.
fn train_only_stats(obs: &[&Observation], train: &[usize]) -> Result<NormalizationStats> {
    let mut stats = NormalizationStats::default();
    for &i in train {
        let o = obs[i];
        for (c, mm) in o.extrema().into_iter().enumerate() {
            stats.absorb(&stats_key(o), Channel::ALL[c], mm);
        }
    }
    for o in obs {
        let key = stats_key(o);
        if stats.nodes.contains_key(&key) {
            continue;
        }
        let prefix = format!("{}/", o.deployment_id);
        for channel in Channel::ALL {
            let merged = stats
                .nodes
                .iter()
                .filter(|(k, _)| k.starts_with(&prefix))
                .filter_map(|(_, m)| m.get(&channel).copied())
                .reduce(MinMax::merge)
                .ok_or_else(|| {
                    Error::invalid(format!("no training observation from {}", o.deployment_id))
                })?;
            stats.insert(&key, channel, merged);
        }
    }
    Ok(stats)
}

fn scaled(obs: &Observation, stats: &NormalizationStats) -> Observation {
    let mut out = obs.clone();
    let key = stats_key(obs);
    for channel in Channel::ALL {
        let range = stats
            .get(&key, channel)
            .expect("stats cover every observation");
        for w in &mut out.windows {
            for v in &mut w.channels[channel.index()] {
                *v = range.scale(*v).0;
            }
        }
    }
    out.normalized = true;
    out
}

/// Pools observations in the given order, splits them, and extracts features.
pub fn assemble_dataset(
    name: &str,
    pools: &[&ObservationPool],
    cfg: &ProtocolConfig,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let obs: Vec<&Observation> = pools.iter().flat_map(|p| &p.observations).collect();
    let labels: Vec<u8> = obs.iter().map(|o| o.label).collect();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives < cfg.min_positives {
        return Err(Error::TooFewPositives {
            count: positives,
            required: cfg.min_positives,
        });
    }
    let split = stratified_split(&labels, cfg.split_fraction, cfg.seed)?;
    let (table, stats) = match cfg.normalization {
        NormalizationMode::Full => {
            let mut stats = NormalizationStats::default();
            for p in pools {
                for (node, channels) in &p.deployment_stats.nodes {
                    for (&channel, &mm) in channels {
                        stats.insert(&format!("{}/{node}", p.deployment_id), channel, mm);
                    }
                }
            }
            let table = FeatureTable::from_observations(obs.iter().copied(), cfg.extract.diff_mode);
            (table, stats)
        }
        NormalizationMode::TrainOnly => {
            let stats = train_only_stats(&obs, &split.train)?;
            let normalized: Vec<Observation> = obs.iter().map(|o| scaled(o, &stats)).collect();
            (
                FeatureTable::from_observations(&normalized, cfg.extract.diff_mode),
                stats,
            )
        }
    };
    Ok(LabeledDataset {
        name: name.to_string(),
        deployments: obs.iter().map(|o| o.deployment_id.clone()).collect(),
        anchors: obs.iter().map(|o| o.anchor_time).collect(),
        nodes: obs.iter().map(|o| o.node_id.clone()).collect(),
        table,
        split,
        stats,
        extraction: pools.iter().map(|p| p.report.clone()).collect(),
    })
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn train(&self) -> FeatureTable {
        self.table.select(&self.split.train)
    }

    pub fn test(&self) -> FeatureTable {
        self.table.select(&self.split.test)
    }
}

const FIXED_COLUMNS: [&str; 6] = [
    "deployment",
    "anchor_time",
    "node_id",
    "label",
    "severity",
    "split",
];

/// Writes rows with their split membership; feature values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let layout = crate::features::FeatureLayout {
        n_windows: data.table.width() / crate::features::WINDOW_WIDTH,
    };
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..data.table.width()).map(|i| layout.name(i)));
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut in_train = vec![false; data.len()];
    for &i in &data.split.train {
        in_train[i] = true;
    }
    for i in 0..data.len() {
        let severity = data.table.severities[i]
            .map(|s| s.to_string())
            .unwrap_or_default();
        write!(
            out,
            "{},{},{},{},{},{}",
            data.deployments[i],
            data.anchors[i],
            data.nodes[i],
            data.table.labels[i],
            severity,
            if in_train[i] { "train" } else { "test" }
        )
        .map_err(io)?;
        for v in data.table.rows.row(i) {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a dataset CSV. Normalization stats and extraction reports are not
/// part of the file and come back empty.
pub fn read_dataset_csv(path: impl AsRef<Path>, name: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.len() < FIXED_COLUMNS.len()
        || headers
            .iter()
            .take(FIXED_COLUMNS.len())
            .ne(FIXED_COLUMNS.iter().copied())
    {
        return Err(Error::Header {
            file: path.display().to_string(),
            found: headers.iter().collect::<Vec<_>>().join(","),
            expected: FIXED_COLUMNS.join(","),
        });
    }
    let width = headers.len() - FIXED_COLUMNS.len();
    let bad = |line: u64, reason: String| Error::MalformedRow {
        file: path.display().to_string(),
        line,
        reason,
    };
    let mut data = LabeledDataset {
        name: name.to_string(),
        deployments: Vec::new(),
        anchors: Vec::new(),
        nodes: Vec::new(),
        table: FeatureTable {
            labels: Vec::new(),
            severities: Vec::new(),
            rows: Array2::zeros((0, width)),
        },
        split: Split {
            train: Vec::new(),
            test: Vec::new(),
        },
        stats: NormalizationStats::default(),
        extraction: Vec::new(),
    };
    let mut flat = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |k: usize| {
            record[k]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("cannot parse {:?}", &record[k])))
        };
        data.deployments.push(record[0].to_string());
        data.anchors.push(num(1)?);
        data.nodes.push(record[2].to_string());
        data.table.labels.push(match &record[3] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(line, format!("label {other:?} is not 0 or 1"))),
        });
        data.table.severities.push(match &record[4] {
            "" => None,
            s => Some(
                s.parse()
                    .map_err(|_| bad(line, format!("severity {s:?}")))?,
            ),
        });
        match &record[5] {
            "train" => data.split.train.push(i),
            "test" => data.split.test.push(i),
            other => return Err(bad(line, format!("split {other:?}"))),
        }
        for k in FIXED_COLUMNS.len()..record.len() {
            flat.push(num(k)?);
        }
    }
    let n = data.deployments.len();
    data.table.rows = Array2::from_shape_vec((n, width), flat)
        .map_err(|e| bad(0, format!("ragged rows: {e}")))?;
    Ok(data)
}
