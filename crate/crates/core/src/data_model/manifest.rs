use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::files::{for_each_sensor_row, parse_labels_csv, parse_track_csv};
use super::{
    write_labels_csv, write_sensor_rows, write_track_csv, AcousticReduction, Channel, Deployment,
    NodeStreams, ResampleStats, Resampler, Span,
};
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "ambient-agitation/deployment-manifest/v1";

/// JSON document describing one deployment's file set. Paths are relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentManifest {
    pub schema: String,
    pub id: String,
    pub span: Span,
    pub timezone_offset_minutes: i32,
    pub sensors: PathBuf,
    pub labels: PathBuf,
    pub track: PathBuf,
    /// Free-form provenance (generator seed, config hash, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl DeploymentManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DeploymentManifest = serde_json::from_str(&text)?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(Error::Config {
                key: "schema".into(),
                reason: format!("unsupported manifest schema {:?}", manifest.schema),
            });
        }
        Span::new(manifest.span.start, manifest.span.end)?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelQuality {
    pub rows: usize,
    #[serde(flatten)]
    pub resample: ResampleStats,
    pub missing_fraction: f64,
}

/// What ingestion saw and repaired.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub deployment_id: String,
    pub span_seconds: usize,
    pub rows: usize,
    pub channels: BTreeMap<String, BTreeMap<Channel, ChannelQuality>>,
    pub labels: usize,
    pub track_breakpoints: usize,
    pub warnings: Vec<String>,
}

impl Deployment {
    /// Loads and validates the deployment named by a manifest.
    pub fn load(
        manifest_path: impl AsRef<Path>,
        reduction: AcousticReduction,
    ) -> Result<(Deployment, QualitySummary)> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DeploymentManifest::read(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let span = manifest.span;

        let mut raw: BTreeMap<(String, Channel), Vec<(f64, f64)>> = BTreeMap::new();
        let rows =
            for_each_sensor_row(
                &base.join(&manifest.sensors),
                |t, node, channel, v| match raw.get_mut(&(node.to_string(), channel)) {
                    Some(buf) => buf.push((t, v)),
                    None => {
                        raw.insert((node.to_string(), channel), vec![(t, v)]);
                    }
                },
            )?;

        let mut summary = QualitySummary {
            deployment_id: manifest.id.clone(),
            span_seconds: span.seconds(),
            rows,
            ..Default::default()
        };
        let mut per_node: BTreeMap<String, Vec<Option<super::ChannelSeries>>> = BTreeMap::new();
        for ((node, channel), mut buf) in raw {
            buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut r = Resampler::new(channel, span, reduction);
            for &(t, v) in &buf {
                r.push(t, v);
            }
            let (series, stats) = r.finish();
            if stats.duplicates > 0 {
                summary.warnings.push(format!(
                    "{node}/{channel}: {} duplicate seconds, kept last",
                    stats.duplicates
                ));
            }
            if stats.out_of_range > 0 {
                summary.warnings.push(format!(
                    "{node}/{channel}: {} samples outside span dropped",
                    stats.out_of_range
                ));
            }
            summary.channels.entry(node.clone()).or_default().insert(
                channel,
                ChannelQuality {
                    rows: buf.len(),
                    resample: stats,
                    missing_fraction: stats.missing as f64 / span.seconds() as f64,
                },
            );
            per_node.entry(node).or_insert_with(|| vec![None; 5])[channel.index()] = Some(series);
        }

        let mut nodes = BTreeMap::new();
        for (node, slots) in per_node {
            let mut channels = Vec::with_capacity(5);
            for (slot, channel) in slots.into_iter().zip(Channel::ALL) {
                channels.push(slot.ok_or_else(|| Error::InvalidDeployment {
                    id: manifest.id.clone(),
                    reason: format!("node {node} has no {channel} samples"),
                })?);
            }
            nodes.insert(node, NodeStreams { channels });
        }

        let labels = parse_labels_csv(base.join(&manifest.labels))?;
        let track = parse_track_csv(base.join(&manifest.track))?;
        summary.labels = labels.len();
        summary.track_breakpoints = track.breakpoints().len();

        let deployment = Deployment {
            id: manifest.id,
            span,
            timezone_offset_minutes: manifest.timezone_offset_minutes,
            nodes,
            labels,
            track,
        };
        deployment.validate()?;
        Ok((deployment, summary))
    }

    /// Writes the canonical 1 Hz file set plus manifest into `dir` and returns
    /// the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_sensor_rows(dir.join("sensors.csv"), self)?;
        write_labels_csv(dir.join("labels.csv"), &self.labels)?;
        write_track_csv(dir.join("track.csv"), &self.track)?;
        let manifest = DeploymentManifest {
            schema: MANIFEST_SCHEMA.into(),
            id: self.id.clone(),
            span: self.span,
            timezone_offset_minutes: self.timezone_offset_minutes,
            sensors: "sensors.csv".into(),
            labels: "labels.csv".into(),
            track: "track.csv".into(),
            provenance: BTreeMap::new(),
        };
        let path = dir.join("manifest.json");
        manifest.write(&path)?;
        Ok(path)
    }
}
