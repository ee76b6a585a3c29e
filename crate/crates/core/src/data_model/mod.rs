//! Canonical deployment types and file ingestion.
//!
//! A deployment is a set of room-level sensing nodes, each reporting five
//! ambient channels, plus caregiver agitation labels and the piecewise-constant
//! track of which node is closest to the monitored person.

mod files;
mod manifest;
mod resample;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use files::{
    parse_labels_csv, parse_sensor_csv, parse_track_csv, write_labels_csv, write_sensor_rows,
    write_track_csv, SensorCsvWriter, LABELS_HEADER, SENSOR_HEADER, TRACK_HEADER,
};
pub use manifest::{DeploymentManifest, QualitySummary, MANIFEST_SCHEMA};
pub use resample::{
    resample_to_1hz, AcousticReduction, ResampleStats, Resampler, FILL_LIMIT_SECONDS,
};

/// One of the five ambient channels every sensing node reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Light,
    Temperature,
    Humidity,
    Pressure,
    Acoustic,
}

impl Channel {
    /// Canonical channel order; also the feature-layout order.
    pub const ALL: [Channel; 5] = [
        Channel::Light,
        Channel::Temperature,
        Channel::Humidity,
        Channel::Pressure,
        Channel::Acoustic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Light => "light",
            Channel::Temperature => "temperature",
            Channel::Humidity => "humidity",
            Channel::Pressure => "pressure",
            Channel::Acoustic => "acoustic",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Channel::Light => "lux",
            Channel::Temperature => "°C",
            Channel::Humidity => "%RH",
            Channel::Pressure => "Pa",
            Channel::Acoustic => "dB",
        }
    }

    /// Native sampling rate of the sensing hardware.
    pub fn native_rate_hz(self) -> u32 {
        match self {
            Channel::Acoustic => 8,
            _ => 1,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Channel::ALL.into_iter().find(|c| c.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSample {
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: f64,
    pub node_id: String,
    pub channel: Channel,
    pub value: f64,
}

/// Deployment time span in whole epoch seconds, half-open `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: i64,
    pub end: i64,
}

impl Span {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid(format!("empty span [{start}, {end})")));
        }
        Ok(Span { start, end })
    }

    /// Number of one-second grid slots.
    pub fn seconds(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start as f64 && t < self.end as f64
    }
}

/// A channel on the uniform 1 Hz grid. Slot `k` holds the value for second
/// `start_time + k`; missing slots hold 0.0 and are flagged in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub channel: Channel,
    pub start_time: i64,
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl ChannelSeries {
    /// A fully observed series.
    pub fn complete(channel: Channel, start_time: i64, values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        ChannelSeries {
            channel,
            start_time,
            values,
            missing,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Iterator over observed values.
    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.missing)
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
    }
}

/// The five aligned channel series of one sensing node, in [`Channel::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStreams {
    pub channels: Vec<ChannelSeries>,
}

impl NodeStreams {
    pub fn get(&self, channel: Channel) -> &ChannelSeries {
        &self.channels[channel.index()]
    }

    pub fn get_mut(&mut self, channel: Channel) -> &mut ChannelSeries {
        &mut self.channels[channel.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgitationLabel {
    pub time: f64,
    /// Caregiver-rated severity, 1 to 5. Never a model input.
    pub severity: u8,
    pub behavior: String,
    pub node_id: Option<String>,
}

/// Piecewise-constant map from time to the node closest to the monitored person.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocationTrack {
    breakpoints: Vec<(f64, String)>,
}

impl LocationTrack {
    pub fn new(breakpoints: Vec<(f64, String)>) -> Result<Self> {
        for pair in breakpoints.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(Error::invalid(format!(
                    "track breakpoints not strictly increasing at t={}",
                    pair[1].0
                )));
            }
        }
        if breakpoints.iter().any(|(t, _)| !t.is_finite()) {
            return Err(Error::invalid("non-finite track breakpoint"));
        }
        Ok(LocationTrack { breakpoints })
    }

    pub fn breakpoints(&self) -> &[(f64, String)] {
        &self.breakpoints
    }

    /// Node of the latest breakpoint at or before `t`.
    pub fn node_at(&self, t: f64) -> Result<&str> {
        let idx = self.breakpoints.partition_point(|(bt, _)| *bt <= t);
        if idx == 0 {
            return Err(Error::NoLocation { t });
        }
        Ok(&self.breakpoints[idx - 1].1)
    }
}

/// Free-function form of [`LocationTrack::node_at`].
pub fn node_at(track: &LocationTrack, t: f64) -> Result<&str> {
    track.node_at(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub id: String,
    pub span: Span,
    /// Offset of local time from UTC, used for time-of-day features.
    pub timezone_offset_minutes: i32,
    pub nodes: BTreeMap<String, NodeStreams>,
    pub labels: Vec<AgitationLabel>,
    pub track: LocationTrack,
}

impl Deployment {
    /// Checks the structural invariants: every node has all five channels
    /// covering the span, labels are sorted and inside the span, and the track
    /// only names known nodes.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidDeployment {
            id: self.id.clone(),
            reason,
        };
        if self.nodes.is_empty() {
            return Err(bad("no sensing nodes".into()));
        }
        let len = self.span.seconds();
        for (node, streams) in &self.nodes {
            if streams.channels.len() != Channel::ALL.len() {
                return Err(bad(format!("node {node} lacks some channels")));
            }
            for (series, channel) in streams.channels.iter().zip(Channel::ALL) {
                if series.channel != channel
                    || series.len() != len
                    || series.missing.len() != len
                    || series.start_time != self.span.start
                {
                    return Err(bad(format!(
                        "node {node} {channel} does not cover the span"
                    )));
                }
            }
        }
        for pair in self.labels.windows(2) {
            if pair[1].time < pair[0].time {
                return Err(bad("labels not sorted by time".into()));
            }
        }
        for label in &self.labels {
            if !self.span.contains(label.time) {
                return Err(bad(format!("label at {} outside span", label.time)));
            }
            if !(1..=5).contains(&label.severity) {
                return Err(bad(format!("severity {} outside 1..=5", label.severity)));
            }
        }
        for (_, node) in self.track.breakpoints() {
            if !self.nodes.contains_key(node) {
                return Err(bad(format!("track names unknown node {node}")));
            }
        }
        Ok(())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }
}
