use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiffMode, WindowGeometry};
use crate::data_model::Channel;
use crate::error::{Error, Result};
use crate::signal::{MinMax, NormalizationStats, PreparedDeployment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub geometry: WindowGeometry,
    /// Largest tolerated missing fraction per channel over the observation span.
    pub max_missing_fraction: f64,
    pub diff_mode: DiffMode,
    /// Negative anchors stay at least this far from every label.
    pub exclusion_hours: f64,
    pub max_negative_attempts: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            geometry: WindowGeometry::default(),
            max_missing_fraction: 0.05,
            diff_mode: DiffMode::Absolute,
            exclusion_hours: 2.0,
            max_negative_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    pub start_time: f64,
    /// One gap-free 1 Hz slice per channel, in [`Channel::ALL`] order.
    pub channels: [Vec<f64>; 5],
}

/// One pre-event extraction from the node closest to the person at the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub deployment_id: String,
    pub anchor_time: f64,
    /// 1 = agitation, 0 = non-agitation.
    pub label: u8,
    pub node_id: String,
    pub severity: Option<u8>,
    pub timezone_offset_minutes: i32,
    pub windows: Vec<ObservationWindow>,
    pub normalized: bool,
}

impl Observation {
    /// Per-channel extrema over every window.
    pub fn extrema(&self) -> [MinMax; 5] {
        std::array::from_fn(|c| {
            MinMax::of(
                self.windows
                    .iter()
                    .flat_map(|w| w.channels[c].iter().copied()),
            )
            .expect("observation windows are non-empty")
        })
    }
}

/// Cuts the observation for `anchor` out of a prepared deployment.
///
/// The node is fixed at `node_at(track, anchor)` for all windows. Missing
/// samples inside the span are forward-filled (back-filled at its start) once
/// the per-channel missing fraction passes the quality limit.
pub fn extract_observation(
    prepared: &PreparedDeployment,
    anchor: f64,
    label: u8,
    severity: Option<u8>,
    cfg: &ExtractConfig,
) -> Result<Observation> {
    let dep = &prepared.deployment;
    let geom = cfg.geometry;
    let span_start = anchor - geom.lookback_seconds();
    let first = (span_start - dep.span.start as f64).ceil();
    let window_len = geom.window_seconds();
    let total = window_len * geom.n_windows as usize;
    if !first.is_finite() || first < 0.0 || first as usize + total > dep.span.seconds() {
        return Err(Error::Span {
            start: span_start,
            end: anchor - f64::from(geom.gap_min) * 60.0,
            span_start: dep.span.start,
            span_end: dep.span.end,
        });
    }
    let first = first as usize;
    let node = dep.track.node_at(anchor)?.to_string();
    let streams = dep
        .nodes
        .get(&node)
        .ok_or_else(|| Error::InvalidDeployment {
            id: dep.id.clone(),
            reason: format!("track names unknown node {node}"),
        })?;

    let mut slices: Vec<Vec<f64>> = Vec::with_capacity(5);
    for channel in Channel::ALL {
        let series = streams.get(channel);
        let values = &series.values[first..first + total];
        let missing = &series.missing[first..first + total];
        let n_missing = missing.iter().filter(|&&m| m).count();
        let fraction = n_missing as f64 / total as f64;
        if fraction > cfg.max_missing_fraction {
            return Err(Error::Quality {
                node,
                channel,
                fraction,
                limit: cfg.max_missing_fraction,
            });
        }
        let mut out = values.to_vec();
        if n_missing > 0 {
            impute(&mut out, missing);
        }
        slices.push(out);
    }

    let windows = (0..geom.n_windows as usize)
        .map(|w| {
            let range = w * window_len..(w + 1) * window_len;
            ObservationWindow {
                start_time: geom.window_bounds(anchor, w).0,
                channels: std::array::from_fn(|c| slices[c][range.clone()].to_vec()),
            }
        })
        .collect();

    Ok(Observation {
        deployment_id: dep.id.clone(),
        anchor_time: anchor,
        label,
        node_id: node,
        severity,
        timezone_offset_minutes: dep.timezone_offset_minutes,
        windows,
        normalized: prepared.normalized,
    })
}

fn impute(values: &mut [f64], missing: &[bool]) {
    let Some(first_seen) = missing.iter().position(|&m| !m) else {
        return;
    };
    let lead = values[first_seen];
    values[..first_seen].fill(lead);
    let mut last = lead;
    for k in first_seen..values.len() {
        if missing[k] {
            values[k] = last;
        } else {
            last = values[k];
        }
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::Span { .. } | Error::Quality { .. } | Error::NoLocation { .. }
    )
}

/// Draws `ratio × n_positives` non-agitation observations with anchors uniform
/// over the deployment's whole seconds, away from every label. Returns the
/// observations and the number of rejected draws.
pub(crate) fn sample_negatives_counted(
    prepared: &PreparedDeployment,
    n_positives: usize,
    ratio: usize,
    seed: u64,
    cfg: &ExtractConfig,
) -> Result<(Vec<Observation>, usize)> {
    let dep = &prepared.deployment;
    let requested = ratio * n_positives;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exclusion = cfg.exclusion_hours * 3600.0;
    let label_times: Vec<f64> = dep.labels.iter().map(|l| l.time).collect();
    let mut out = Vec::with_capacity(requested);
    let mut rejected = 0;
    while out.len() < requested {
        if rejected >= cfg.max_negative_attempts {
            return Err(Error::NegativeShortfall {
                requested,
                placed: out.len(),
                attempts: rejected,
            });
        }
        let anchor = (dep.span.start + rng.random_range(0..dep.span.end - dep.span.start)) as f64;
        let lo = label_times.partition_point(|&t| t <= anchor - exclusion);
        if label_times.get(lo).is_some_and(|&t| t < anchor + exclusion) {
            rejected += 1;
            continue;
        }
        match extract_observation(prepared, anchor, 0, None, cfg) {
            Ok(obs) => out.push(obs),
            Err(e) if recoverable(&e) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, rejected))
}

pub fn sample_negatives(
    prepared: &PreparedDeployment,
    n_positives: usize,
    ratio: usize,
    seed: u64,
    cfg: &ExtractConfig,
) -> Result<Vec<Observation>> {
    sample_negatives_counted(prepared, n_positives, ratio, seed, cfg).map(|(obs, _)| obs)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub deployment_id: String,
    pub labels: usize,
    pub positives: usize,
    pub dropped_span: usize,
    pub dropped_quality: usize,
    pub dropped_no_location: usize,
    pub negatives: usize,
    pub negative_rejections: usize,
}

#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub positives: Vec<Observation>,
    pub negatives: Vec<Observation>,
    pub report: ExtractionReport,
    /// Extrema of the filtered deployment the observations came from.
    pub deployment_stats: NormalizationStats,
}

impl ObservationSet {
    /// Positives then negatives.
    pub fn all(&self) -> impl Iterator<Item = &Observation> {
        self.positives.iter().chain(&self.negatives)
    }

    pub fn into_all(self) -> Vec<Observation> {
        let mut v = self.positives;
        v.extend(self.negatives);
        v
    }
}

/// Positives at every label plus `ratio`:1 sampled negatives. Labels whose
/// observation fails the span or quality checks are dropped and counted.
pub fn build_observations(
    prepared: &PreparedDeployment,
    ratio: usize,
    seed: u64,
    cfg: &ExtractConfig,
) -> Result<ObservationSet> {
    let dep = &prepared.deployment;
    let mut report = ExtractionReport {
        deployment_id: dep.id.clone(),
        labels: dep.labels.len(),
        ..Default::default()
    };
    let results: Vec<Result<Observation>> = dep
        .labels
        .par_iter()
        .map(|l| extract_observation(prepared, l.time, 1, Some(l.severity), cfg))
        .collect();
    let mut positives = Vec::new();
    for r in results {
        match r {
            Ok(obs) => positives.push(obs),
            Err(Error::Span { .. }) => report.dropped_span += 1,
            Err(Error::Quality { .. }) => report.dropped_quality += 1,
            Err(Error::NoLocation { .. }) => report.dropped_no_location += 1,
            Err(e) => return Err(e),
        }
    }
    let (negatives, rejected) =
        sample_negatives_counted(prepared, positives.len(), ratio, seed, cfg)?;
    report.positives = positives.len();
    report.negatives = negatives.len();
    report.negative_rejections = rejected;
    Ok(ObservationSet {
        positives,
        negatives,
        report,
        deployment_stats: prepared.stats.clone(),
    })
}

/// Rescales an unnormalized observation with the given extrema.
pub fn normalize_observation(obs: &mut Observation, stats: &NormalizationStats) -> Result<()> {
    if obs.normalized {
        return Err(Error::invalid("observation is already normalized"));
    }
    for channel in Channel::ALL {
        let range = stats
            .get(&obs.node_id, channel)
            .ok_or_else(|| Error::invalid(format!("no stats for {}/{channel}", obs.node_id)))?;
        for w in &mut obs.windows {
            for v in &mut w.channels[channel.index()] {
                *v = range.scale(*v).0;
            }
        }
    }
    obs.normalized = true;
    Ok(())
}
