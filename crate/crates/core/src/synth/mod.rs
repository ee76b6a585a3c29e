//! Seeded simulator of home deployments: diurnal ambient channels per node,
//! a random-walk location track, and agitation labels planted by trigger
//! rules with recorded ground truth.

mod config;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    AcousticReduction, AgitationLabel, Channel, Deployment, DeploymentManifest, LocationTrack,
    NodeStreams, Resampler, SensorCsvWriter, Span, MANIFEST_SCHEMA,
};
use crate::error::{Error, Result};
use crate::evaluation::config_hash;
use crate::seeds;

pub use config::{
    ChannelProfile, DiurnalProfile, GeneratorConfig, GeneratorSet, TriggerKind, TriggerRule,
};

pub const GROUND_TRUTH_SCHEMA: &str = "ambient-agitation/ground-truth/v1";

/// Observation lookback used when placing episodes: 12-minute gap plus nine
/// 6-minute windows.
const LOOKBACK_SECONDS: i64 = 66 * 60;

const ROOMS: [&str; 5] = ["living", "kitchen", "bedroom", "bathroom", "hall"];
const BEHAVIORS: [&str; 5] = ["verbal", "restless", "pacing", "repetitive", "physical"];

fn node_name(k: usize) -> String {
    ROOMS
        .get(k)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("node{k}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub label_time: f64,
    pub node_id: String,
    pub trigger: TriggerKind,
    /// Channel carrying the precursor; none for time-of-day triggers.
    pub channel: Option<Channel>,
    pub precursor_start: Option<f64>,
    pub precursor_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub labels: usize,
    pub days: f64,
    pub per_week: f64,
    pub target_per_week: f64,
    /// Accepted label counts, the rate band widened to whole labels.
    pub lower: usize,
    pub upper: usize,
    pub within_band: bool,
    /// No labels at all.
    pub miss: bool,
}

/// Compares the achieved label rate with a weekly target and a relative band.
pub fn plant_rate_check(
    deployment: &Deployment,
    target_per_week: f64,
    tolerance: f64,
) -> RateReport {
    rate_report(
        deployment.labels.len(),
        deployment.span.seconds() as f64 / 86_400.0,
        target_per_week,
        tolerance,
    )
}

fn rate_report(labels: usize, days: f64, target: f64, tolerance: f64) -> RateReport {
    let per_week = labels as f64 / days * 7.0;
    let expected = target * days / 7.0;
    let lower = (expected * (1.0 - tolerance)).floor() as usize;
    let upper = (expected * (1.0 + tolerance)).ceil() as usize;
    RateReport {
        labels,
        days,
        per_week,
        target_per_week: target,
        lower,
        upper,
        within_band: labels > 0 && (lower..=upper).contains(&labels),
        miss: labels == 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema: String,
    pub deployment_id: String,
    pub seed: u64,
    pub config_hash: String,
    /// One record per label, in label order.
    pub records: Vec<TruthRecord>,
    /// Precursors injected without a following label.
    pub unfired_precursors: usize,
    /// Multiplier applied to the configured event rates.
    pub rate_scale: f64,
    pub rate: RateReport,
}

#[derive(Debug, Clone)]
pub struct SyntheticDeployment {
    pub deployment: Deployment,
    pub truth: GroundTruth,
}

/// A precursor overlay on one node's channel.
#[derive(Debug, Clone, Copy)]
struct Precursor {
    node: usize,
    kind: TriggerKind,
    start: i64,
    end: i64,
    level: f64,
}

struct Plan {
    track: Vec<(i64, usize)>,
    labels: Vec<(AgitationLabel, TruthRecord)>,
    precursors: Vec<Precursor>,
    unfired: usize,
}

fn local_hour(t: i64, offset_minutes: i32) -> f64 {
    let local = t + i64::from(offset_minutes) * 60;
    local.rem_euclid(86_400) as f64 / 3600.0
}

fn plan_track(cfg: &GeneratorConfig, span: Span, rng: &mut ChaCha8Rng) -> Vec<(i64, usize)> {
    let dwell = Exp::new(1.0 / (cfg.mean_dwell_minutes * 60.0)).expect("positive dwell");
    let mut node = rng.random_range(0..cfg.n_nodes);
    let mut t = span.start;
    let mut out = Vec::new();
    while t < span.end {
        out.push((t, node));
        t += (dwell.sample(rng) as i64).max(300);
        if cfg.n_nodes > 1 {
            let step = rng.random_range(1..cfg.n_nodes);
            node = (node + step) % cfg.n_nodes;
        }
    }
    out
}

fn node_at(track: &[(i64, usize)], t: i64) -> usize {
    let k = track.partition_point(|&(s, _)| s <= t);
    track[k.saturating_sub(1)].1
}

fn base_label_rate(cfg: &GeneratorConfig) -> f64 {
    let weekly = if cfg.target_per_week > 0.0 {
        cfg.target_per_week
    } else {
        5.0
    };
    weekly / 7.0
}

fn plan_events(cfg: &GeneratorConfig, span: Span, scale: f64, seed: u64) -> Plan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let track = plan_track(
        cfg,
        span,
        &mut ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "track")),
    );
    let active: Vec<&TriggerRule> = cfg
        .rules
        .iter()
        .filter(|r| r.kind != TriggerKind::None)
        .collect();
    let per_rule = base_label_rate(cfg) / active.len().max(1) as f64;
    let mut candidates: Vec<(i64, TruthRecord)> = Vec::new();
    let mut precursors = Vec::new();
    let mut unfired = 0;
    let first = span.start + LOOKBACK_SECONDS;
    for rule in &active {
        match rule.kind {
            TriggerKind::NoiseSpike | TriggerKind::LightRamp => {
                let events_per_day = rule
                    .rate_per_day
                    .unwrap_or(per_rule / rule.probability.max(1e-9))
                    * scale;
                if events_per_day <= 0.0 {
                    continue;
                }
                let gap = Exp::new(events_per_day / 86_400.0).expect("positive rate");
                let mut t = span.start as f64;
                loop {
                    t += gap.sample(&mut rng);
                    let start = t as i64;
                    let lag = rng.random_range(rule.lag_min_minutes..=rule.lag_max_minutes);
                    let fires = rng.random_bool(rule.probability);
                    if start >= span.end {
                        break;
                    }
                    let end = (start + i64::from(rule.duration_s())).min(span.end);
                    let node = node_at(&track, start);
                    let (channel, level) = match rule.kind {
                        TriggerKind::NoiseSpike => (Channel::Acoustic, rule.threshold()),
                        _ => (Channel::Light, rule.threshold()),
                    };
                    precursors.push(Precursor {
                        node,
                        kind: rule.kind,
                        start,
                        end,
                        level,
                    });
                    let label = start + (lag * 60.0).round() as i64;
                    if fires && label >= first && label < span.end && node_at(&track, label) == node
                    {
                        candidates.push((
                            label,
                            TruthRecord {
                                label_time: label as f64,
                                node_id: node_name(node),
                                trigger: rule.kind,
                                channel: Some(channel),
                                precursor_start: Some(start as f64),
                                precursor_end: Some(end as f64),
                            },
                        ));
                    } else {
                        unfired += 1;
                    }
                }
            }
            TriggerKind::Sundowning => {
                let per_day = rule.rate_per_day.unwrap_or(per_rule) * scale;
                let window_minutes = (0..1440)
                    .filter(|&m| rule.in_window(f64::from(m) / 60.0))
                    .count() as f64;
                let weight = 1440.0 - window_minutes + window_minutes * rule.hazard_multiplier;
                if weight <= 0.0 || per_day <= 0.0 {
                    continue;
                }
                let base = per_day / weight;
                let mut minute = span.start;
                while minute < span.end {
                    let hour = local_hour(minute, cfg.timezone_offset_minutes);
                    let p = if rule.in_window(hour) {
                        base * rule.hazard_multiplier
                    } else {
                        base
                    };
                    let hit = rng.random_bool(p.min(1.0));
                    let offset = rng.random_range(0..60);
                    let label = minute + offset;
                    if hit && label >= first && label < span.end {
                        candidates.push((
                            label,
                            TruthRecord {
                                label_time: label as f64,
                                node_id: node_name(node_at(&track, label)),
                                trigger: TriggerKind::Sundowning,
                                channel: None,
                                precursor_start: None,
                                precursor_end: None,
                            },
                        ));
                    }
                    minute += 60;
                }
            }
            TriggerKind::None => {}
        }
    }
    candidates.sort_by_key(|c| c.0);
    let spacing = (cfg.min_label_spacing_minutes * 60.0) as i64;
    let mut labels: Vec<(AgitationLabel, TruthRecord)> = Vec::new();
    let severity_weights = [0.3, 0.3, 0.2, 0.12, 0.08];
    for (t, record) in candidates {
        if labels
            .last()
            .is_some_and(|(l, _)| (t as f64 - l.time) < spacing as f64)
        {
            if record.precursor_start.is_some() {
                unfired += 1;
            }
            continue;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut severity = 5;
        for (k, w) in severity_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                severity = k as u8 + 1;
                break;
            }
        }
        let behavior = BEHAVIORS[rng.random_range(0..BEHAVIORS.len())].to_string();
        labels.push((
            AgitationLabel {
                time: t as f64,
                severity,
                behavior,
                node_id: None,
            },
            record,
        ));
    }
    precursors.sort_by_key(|p| (p.node, p.start));
    Plan {
        track,
        labels,
        precursors,
        unfired,
    }
}

/// Receives generated samples in per-node time order.
trait SampleSink {
    fn sample(&mut self, t: f64, node: &str, channel: Channel, value: f64) -> Result<()>;
}

struct MemorySink {
    resamplers: BTreeMap<(String, Channel), Resampler>,
}

impl SampleSink for MemorySink {
    fn sample(&mut self, t: f64, node: &str, channel: Channel, value: f64) -> Result<()> {
        self.resamplers
            .get_mut(&(node.to_string(), channel))
            .expect("resampler per node and channel")
            .push(t, value);
        Ok(())
    }
}

impl SampleSink for SensorCsvWriter {
    fn sample(&mut self, t: f64, node: &str, channel: Channel, value: f64) -> Result<()> {
        self.write(t, node, channel, value)
    }
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn diurnal(p: &ChannelProfile, hour: f64) -> f64 {
    (2.0 * PI * (hour - p.peak_hour) / 24.0).cos()
}

/// Poisson-scheduled events as (start, end, amplitude factor).
fn schedule_events(p: &ChannelProfile, span: Span, rng: &mut ChaCha8Rng) -> Vec<(i64, i64, f64)> {
    let mut out = Vec::new();
    if p.event_rate_per_hour <= 0.0 || p.event_duration_s <= 0.0 {
        return out;
    }
    let gap = Exp::new(p.event_rate_per_hour / 3600.0).expect("positive rate");
    let mut t = span.start as f64;
    loop {
        t += gap.sample(rng);
        if t >= span.end as f64 {
            break;
        }
        let dur = p.event_duration_s * rng.random_range(0.5..1.5);
        let amp = rng.random_range(0.5..1.0);
        out.push((t as i64, t as i64 + dur.max(1.0) as i64, amp));
    }
    out
}

/// Cursor over sorted, possibly overlapping intervals.
struct Active<'a, T> {
    items: &'a [T],
    next: usize,
    live: Vec<usize>,
}

impl<'a, T> Active<'a, T> {
    fn new(items: &'a [T]) -> Self {
        Active {
            items,
            next: 0,
            live: Vec::new(),
        }
    }

    fn at(
        &mut self,
        t: i64,
        bounds: impl Fn(&T) -> (i64, i64),
    ) -> impl Iterator<Item = &'a T> + '_ {
        while self.next < self.items.len() && bounds(&self.items[self.next]).0 <= t {
            self.live.push(self.next);
            self.next += 1;
        }
        let items = self.items;
        self.live.retain(|&k| bounds(&items[k]).1 > t);
        self.live.iter().map(move |&k| &items[k])
    }
}

fn synthesize_node(
    cfg: &GeneratorConfig,
    span: Span,
    k: usize,
    precursors: &[Precursor],
    sink: &mut dyn SampleSink,
) -> Result<()> {
    let node = node_name(k);
    let prof = &cfg.profile;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(cfg.seed, "node", k as u64));
    let light_scale = rng.random_range(0.6..1.4);
    let temp_offset = rng.random_range(-1.0..1.0);
    let acoustic_offset = rng.random_range(-2.0..2.0);
    let cycle_phase = rng.random_range(0.0..1.0);
    let lamps = schedule_events(&prof.light, span, &mut rng);
    let bursts = schedule_events(&prof.acoustic, span, &mut rng);
    let mine: Vec<Precursor> = precursors.iter().filter(|p| p.node == k).copied().collect();
    let mut lamp_cursor = Active::new(&lamps);
    let mut burst_cursor = Active::new(&bursts);
    let mut precursor_cursor = Active::new(&mine);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut pressure = prof.pressure.baseline;

    for t in span.start..span.end {
        let hour = local_hour(t, cfg.timezone_offset_minutes);
        let mut noise = || std_normal.sample(&mut rng);

        let daylight = (prof.light.amplitude * diurnal(&prof.light, hour)).max(0.0);
        let lamp: f64 = lamp_cursor
            .at(t, |e| (e.0, e.1))
            .map(|e| prof.light.event_amplitude * e.2)
            .sum();
        let mut light = prof.light.baseline + light_scale * (daylight + lamp);
        light += prof.light.noise_sigma * noise();

        let t_dev = prof.temperature.amplitude * diurnal(&prof.temperature, hour)
            + if prof.temperature.cycle_period_s > 0.0 {
                let phase = (t as f64 / prof.temperature.cycle_period_s + cycle_phase).fract();
                prof.temperature.cycle_amplitude * (2.0 * phase - 1.0)
            } else {
                0.0
            };
        let temperature = prof.temperature.baseline
            + temp_offset
            + t_dev
            + prof.temperature.noise_sigma * noise();
        let humidity = prof.humidity.baseline
            + prof.humidity.amplitude * diurnal(&prof.humidity, hour)
            + prof.humidity.coupling * t_dev
            + prof.humidity.noise_sigma * noise();

        pressure += prof.pressure.reversion * (prof.pressure.baseline - pressure)
            + prof.pressure.walk_step * noise();
        let pressure_obs = pressure + prof.pressure.noise_sigma * noise();

        let floor = prof.acoustic.baseline
            + acoustic_offset
            + prof.acoustic.amplitude * diurnal(&prof.acoustic, hour).max(0.0);
        let burst = burst_cursor
            .at(t, |e| (e.0, e.1))
            .map(|e| prof.acoustic.event_amplitude * e.2)
            .fold(0.0, f64::max);

        let mut spike: Option<f64> = None;
        for p in precursor_cursor.at(t, |p| (p.start, p.end)) {
            match p.kind {
                TriggerKind::NoiseSpike => spike = Some(spike.unwrap_or(0.0).max(p.level)),
                TriggerKind::LightRamp => {
                    let rise = ((p.end - p.start) / 3).max(1);
                    let frac = ((t - p.start) as f64 / rise as f64).min(1.0);
                    light += p.level * frac;
                }
                _ => {}
            }
        }

        let ts = t as f64;
        sink.sample(ts, &node, Channel::Light, round_to(light.max(0.0), 0.1))?;
        sink.sample(ts, &node, Channel::Temperature, round_to(temperature, 0.01))?;
        sink.sample(
            ts,
            &node,
            Channel::Humidity,
            round_to(humidity.clamp(0.0, 100.0), 0.01),
        )?;
        sink.sample(ts, &node, Channel::Pressure, round_to(pressure_obs, 0.1))?;
        for s in 0..8 {
            let mut db = floor + burst + prof.acoustic.noise_sigma * std_normal.sample(&mut rng);
            if let Some(level) = spike {
                db = db.max(level + rng.random_range(0.0..4.0));
            }
            sink.sample(
                ts + f64::from(s) / 8.0,
                &node,
                Channel::Acoustic,
                round_to(db.clamp(30.0, 100.0), 0.01),
            )?;
        }
    }
    Ok(())
}

/// Plans events, rescaling rates toward the target label rate.
fn plan(cfg: &GeneratorConfig, span: Span) -> (Plan, f64, RateReport) {
    let days = span.seconds() as f64 / 86_400.0;
    let target = base_label_rate(cfg) * 7.0;
    let mut scale = 1.0;
    let mut attempt = 0;
    loop {
        let plan = plan_events(
            cfg,
            span,
            scale,
            seeds::derive_indexed(cfg.seed, "plan", attempt),
        );
        let report = rate_report(plan.labels.len(), days, target, cfg.rate_tolerance);
        let has_rules = cfg.rules.iter().any(|r| r.kind != TriggerKind::None);
        if !has_rules {
            return (plan, scale, report);
        }
        if report.within_band || cfg.target_per_week == 0.0 || attempt >= 12 {
            if report.miss {
                log::warn!("{}: trigger rules produced no labels", cfg.id);
            } else if !report.within_band && cfg.target_per_week > 0.0 {
                log::warn!(
                    "{}: {} labels outside the accepted {}..={}",
                    cfg.id,
                    report.labels,
                    report.lower,
                    report.upper
                );
            }
            return (plan, scale, report);
        }
        scale *= if report.miss {
            2.0
        } else {
            target / report.per_week
        };
        attempt += 1;
    }
}

fn build_track(plan: &Plan) -> Result<LocationTrack> {
    let mut points: Vec<(f64, String)> = Vec::new();
    for &(t, node) in &plan.track {
        if points.last().is_none_or(|(_, n)| *n != node_name(node)) {
            points.push((t as f64, node_name(node)));
        }
    }
    LocationTrack::new(points)
}

fn truth(cfg: &GeneratorConfig, plan: &Plan, scale: f64, rate: RateReport) -> Result<GroundTruth> {
    Ok(GroundTruth {
        schema: GROUND_TRUTH_SCHEMA.into(),
        deployment_id: cfg.id.clone(),
        seed: cfg.seed,
        config_hash: config_hash(cfg)?,
        records: plan.labels.iter().map(|(_, r)| r.clone()).collect(),
        unfired_precursors: plan.unfired,
        rate_scale: scale,
        rate,
    })
}

fn span_of(cfg: &GeneratorConfig) -> Result<Span> {
    Span::new(
        cfg.start,
        cfg.start + (cfg.duration_days * 86_400.0).round() as i64,
    )
}

/// Generates a deployment in memory, streaming native-rate samples through
/// the same 1 Hz resampling that file ingestion uses.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticDeployment> {
    cfg.validate()?;
    let span = span_of(cfg)?;
    let (plan, scale, rate) = plan(cfg, span);
    let mut sink = MemorySink {
        resamplers: BTreeMap::new(),
    };
    for k in 0..cfg.n_nodes {
        for c in Channel::ALL {
            sink.resamplers.insert(
                (node_name(k), c),
                Resampler::new(c, span, AcousticReduction::Max),
            );
        }
    }
    for k in 0..cfg.n_nodes {
        synthesize_node(cfg, span, k, &plan.precursors, &mut sink)?;
    }
    let mut nodes: BTreeMap<String, NodeStreams> = BTreeMap::new();
    for ((node, _), r) in sink.resamplers {
        let (series, _) = r.finish();
        nodes
            .entry(node)
            .or_insert_with(|| NodeStreams {
                channels: Vec::new(),
            })
            .channels
            .push(series);
    }
    for streams in nodes.values_mut() {
        streams.channels.sort_by_key(|s| s.channel);
    }
    let deployment = Deployment {
        id: cfg.id.clone(),
        span,
        timezone_offset_minutes: cfg.timezone_offset_minutes,
        nodes,
        labels: plan.labels.iter().map(|(l, _)| l.clone()).collect(),
        track: build_track(&plan)?,
    };
    deployment.validate()?;
    let truth = truth(cfg, &plan, scale, rate)?;
    Ok(SyntheticDeployment { deployment, truth })
}

/// Writes the native-rate file set (manifest, sensors, labels, track) plus
/// `ground_truth.json` into `dir`. Returns the manifest path.
pub fn generate_to_dir(
    cfg: &GeneratorConfig,
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, GroundTruth)> {
    cfg.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let span = span_of(cfg)?;
    let (plan, scale, rate) = plan(cfg, span);
    let mut writer = SensorCsvWriter::create(dir.join("sensors.csv"))?;
    for k in 0..cfg.n_nodes {
        synthesize_node(cfg, span, k, &plan.precursors, &mut writer)?;
    }
    writer.finish()?;
    let labels: Vec<AgitationLabel> = plan.labels.iter().map(|(l, _)| l.clone()).collect();
    crate::data_model::write_labels_csv(dir.join("labels.csv"), &labels)?;
    crate::data_model::write_track_csv(dir.join("track.csv"), &build_track(&plan)?)?;
    let truth = truth(cfg, &plan, scale, rate)?;
    let mut provenance = BTreeMap::new();
    provenance.insert("generator_seed".to_string(), cfg.seed.to_string());
    provenance.insert(
        "generator_config_hash".to_string(),
        truth.config_hash.clone(),
    );
    let manifest = DeploymentManifest {
        schema: MANIFEST_SCHEMA.into(),
        id: cfg.id.clone(),
        span,
        timezone_offset_minutes: cfg.timezone_offset_minutes,
        sensors: "sensors.csv".into(),
        labels: "labels.csv".into(),
        track: "track.csv".into(),
        provenance,
    };
    let manifest_path = dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    let truth_path = dir.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&truth)? + "\n";
    std::fs::write(&truth_path, text).map_err(|e| Error::io(&truth_path, e))?;
    Ok((manifest_path, truth))
}
