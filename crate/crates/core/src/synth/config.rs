use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape parameters of one simulated channel. Fields a channel does not use
/// stay at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelProfile {
    pub baseline: f64,
    /// Height of the daily cycle.
    pub amplitude: f64,
    /// Local hour at which the daily cycle peaks.
    pub peak_hour: f64,
    pub noise_sigma: f64,
    /// Standard deviation of the per-second random-walk increment.
    pub walk_step: f64,
    /// Per-second pull of the walk back toward the baseline.
    pub reversion: f64,
    /// Sawtooth amplitude and period (HVAC cycling).
    pub cycle_amplitude: f64,
    pub cycle_period_s: f64,
    /// Response to the temperature deviation from its baseline, per °C.
    pub coupling: f64,
    /// Poisson event process: lamp switch-ons or noise bursts.
    pub event_rate_per_hour: f64,
    pub event_amplitude: f64,
    pub event_duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiurnalProfile {
    #[serde(default = "light_profile")]
    pub light: ChannelProfile,
    #[serde(default = "temperature_profile")]
    pub temperature: ChannelProfile,
    #[serde(default = "humidity_profile")]
    pub humidity: ChannelProfile,
    #[serde(default = "pressure_profile")]
    pub pressure: ChannelProfile,
    #[serde(default = "acoustic_profile")]
    pub acoustic: ChannelProfile,
}

fn light_profile() -> ChannelProfile {
    ChannelProfile {
        baseline: 0.0,
        amplitude: 350.0,
        peak_hour: 13.0,
        noise_sigma: 3.0,
        event_rate_per_hour: 0.15,
        event_amplitude: 150.0,
        event_duration_s: 1800.0,
        ..Default::default()
    }
}

fn temperature_profile() -> ChannelProfile {
    ChannelProfile {
        baseline: 21.5,
        amplitude: 1.2,
        peak_hour: 16.0,
        noise_sigma: 0.03,
        cycle_amplitude: 0.4,
        cycle_period_s: 2400.0,
        ..Default::default()
    }
}

fn humidity_profile() -> ChannelProfile {
    ChannelProfile {
        baseline: 45.0,
        noise_sigma: 0.3,
        coupling: -2.5,
        ..Default::default()
    }
}

fn pressure_profile() -> ChannelProfile {
    ChannelProfile {
        baseline: 101_325.0,
        noise_sigma: 0.5,
        walk_step: 0.8,
        reversion: 1e-4,
        ..Default::default()
    }
}

fn acoustic_profile() -> ChannelProfile {
    ChannelProfile {
        baseline: 40.0,
        amplitude: 4.0,
        peak_hour: 14.0,
        noise_sigma: 1.5,
        event_rate_per_hour: 2.0,
        event_amplitude: 15.0,
        event_duration_s: 20.0,
        ..Default::default()
    }
}

impl Default for DiurnalProfile {
    fn default() -> Self {
        DiurnalProfile {
            light: light_profile(),
            temperature: temperature_profile(),
            humidity: humidity_profile(),
            pressure: pressure_profile(),
            acoustic: acoustic_profile(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    /// A loud acoustic burst precedes the episode.
    NoiseSpike,
    /// Light ramps up and stays bright before the episode.
    LightRamp,
    /// Episodes concentrate in a late-day local-time window; no precursor.
    Sundowning,
    None,
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TriggerKind::NoiseSpike => "noise_spike",
            TriggerKind::LightRamp => "light_ramp",
            TriggerKind::Sundowning => "sundowning",
            TriggerKind::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerRule {
    pub kind: TriggerKind,
    /// Burst level in dB (noise_spike) or added lux (light_ramp).
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub duration_s: Option<u32>,
    /// Lag from precursor onset to the label, drawn uniformly.
    #[serde(default = "lag_min")]
    pub lag_min_minutes: f64,
    #[serde(default = "lag_max")]
    pub lag_max_minutes: f64,
    /// Chance that a precursor is followed by an episode.
    #[serde(default = "one")]
    pub probability: f64,
    /// Precursors (or episodes, for sundowning) per day before rate scaling.
    /// Derived from the target label rate when absent.
    #[serde(default)]
    pub rate_per_day: Option<f64>,
    #[serde(default = "window_start")]
    pub window_start_hour: f64,
    #[serde(default = "window_end")]
    pub window_end_hour: f64,
    /// Episode hazard inside the window relative to outside.
    #[serde(default = "hazard")]
    pub hazard_multiplier: f64,
}

fn lag_min() -> f64 {
    20.0
}
fn lag_max() -> f64 {
    40.0
}
fn one() -> f64 {
    1.0
}
fn window_start() -> f64 {
    16.0
}
fn window_end() -> f64 {
    20.0
}
fn hazard() -> f64 {
    24.0
}

impl TriggerRule {
    pub fn new(kind: TriggerKind) -> Self {
        TriggerRule {
            kind,
            threshold: None,
            duration_s: None,
            lag_min_minutes: lag_min(),
            lag_max_minutes: lag_max(),
            probability: one(),
            rate_per_day: None,
            window_start_hour: window_start(),
            window_end_hour: window_end(),
            hazard_multiplier: hazard(),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(match self.kind {
            TriggerKind::LightRamp => 800.0,
            _ => 85.0,
        })
    }

    pub fn duration_s(&self) -> u32 {
        self.duration_s.unwrap_or(match self.kind {
            TriggerKind::LightRamp => 600,
            _ => 180,
        })
    }

    pub fn in_window(&self, local_hour: f64) -> bool {
        let (a, b) = (self.window_start_hour, self.window_end_hour);
        if a <= b {
            local_hour >= a && local_hour < b
        } else {
            local_hour >= a || local_hour < b
        }
    }
}

/// One synthetic deployment: its clock, layout, channel shapes and triggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub id: String,
    pub seed: u64,
    pub duration_days: f64,
    pub n_nodes: usize,
    /// Unix time of the first second.
    pub start: i64,
    pub timezone_offset_minutes: i32,
    /// Target label rate; the event rates are rescaled until the achieved
    /// rate lies within `rate_tolerance` of it. 0 disables rescaling.
    pub target_per_week: f64,
    pub rate_tolerance: f64,
    /// Mean time the person stays near one node.
    pub mean_dwell_minutes: f64,
    pub min_label_spacing_minutes: f64,
    pub profile: DiurnalProfile,
    pub rules: Vec<TriggerRule>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            id: "synthetic".into(),
            seed: 0,
            duration_days: 30.0,
            n_nodes: 2,
            start: 1_549_929_600,
            timezone_offset_minutes: 0,
            target_per_week: 5.0,
            rate_tolerance: 0.2,
            mean_dwell_minutes: 180.0,
            min_label_spacing_minutes: 70.0,
            profile: DiurnalProfile::default(),
            rules: Vec::new(),
        }
    }
}

/// A file of several generator configs: `[[deployment]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSet {
    pub deployment: Vec<GeneratorConfig>,
}

impl GeneratorSet {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: GeneratorSet = toml::from_str(&text).map_err(|e| Error::Config {
            key: crate::error::toml_key(&e, &text),
            reason: e.message().to_string(),
        })?;
        for (i, d) in set.deployment.iter().enumerate() {
            d.validate().map_err(|e| match e {
                Error::Config { key, reason } => Error::Config {
                    key: format!("deployment[{i}].{key}"),
                    reason,
                },
                other => other,
            })?;
        }
        Ok(set)
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: String, reason: &str| {
            Err(Error::Config {
                key,
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() || self.id.contains(['/', '\\', ',']) {
            return bad("id".into(), "must be non-empty without separators");
        }
        if !(self.duration_days >= 2.0) {
            return bad("duration_days".into(), "must be at least 2");
        }
        if self.n_nodes == 0 {
            return bad("n_nodes".into(), "must be at least 1");
        }
        if self.target_per_week < 0.0 || !(self.rate_tolerance > 0.0) {
            return bad(
                "target_per_week".into(),
                "rate target and tolerance must be positive",
            );
        }
        if !(self.mean_dwell_minutes > 0.0) {
            return bad("mean_dwell_minutes".into(), "must be positive");
        }
        for (i, r) in self.rules.iter().enumerate() {
            let key = |field: &str| format!("rules[{i}].{field}");
            if r.lag_min_minutes < 12.0 {
                return bad(
                    key("lag_min_minutes"),
                    "lag must be at least the 12-minute gap",
                );
            }
            if r.lag_max_minutes < r.lag_min_minutes || r.lag_max_minutes > 66.0 {
                return bad(key("lag_max_minutes"), "must lie in [lag_min_minutes, 66]");
            }
            if !(0.0..=1.0).contains(&r.probability) {
                return bad(key("probability"), "must lie in [0, 1]");
            }
            if r.rate_per_day.is_some_and(|v| !(v >= 0.0)) {
                return bad(key("rate_per_day"), "must be non-negative");
            }
            if !(r.hazard_multiplier >= 0.0) {
                return bad(key("hazard_multiplier"), "must be non-negative");
            }
        }
        Ok(())
    }
}
