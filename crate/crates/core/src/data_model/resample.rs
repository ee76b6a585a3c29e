use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Channel, ChannelSeries, SensorSample, Span};

/// Empty runs up to this many seconds are forward-filled; longer runs are missing.
pub const FILL_LIMIT_SECONDS: usize = 10;

/// How the 8 Hz acoustic stream is reduced to one value per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcousticReduction {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleStats {
    /// 1 Hz samples that snapped onto an already occupied second (last one kept).
    pub duplicates: usize,
    /// Samples falling outside the span.
    pub out_of_range: usize,
    pub filled: usize,
    pub missing: usize,
}

/// Streaming reduction of one (node, channel) stream onto the 1 Hz grid.
///
/// Acoustic samples belong to the second `floor(t - start)` and are reduced by
/// max (or mean); every other channel snaps to the nearest whole second.
#[derive(Debug, Clone)]
pub struct Resampler {
    channel: Channel,
    start: i64,
    reduction: AcousticReduction,
    acc: Vec<f64>,
    counts: Vec<u32>,
    stats: ResampleStats,
}

impl Resampler {
    pub fn new(channel: Channel, span: Span, reduction: AcousticReduction) -> Self {
        let len = span.seconds();
        Resampler {
            channel,
            start: span.start,
            reduction,
            acc: vec![0.0; len],
            counts: vec![0; len],
            stats: ResampleStats::default(),
        }
    }

    pub fn push(&mut self, t: f64, value: f64) {
        let offset = t - self.start as f64;
        let slot = if self.channel == Channel::Acoustic {
            offset.floor()
        } else {
            offset.round()
        };
        if slot < 0.0 || slot >= self.acc.len() as f64 {
            self.stats.out_of_range += 1;
            return;
        }
        let k = slot as usize;
        let seen = self.counts[k];
        if self.channel == Channel::Acoustic {
            match self.reduction {
                AcousticReduction::Max => {
                    if seen == 0 || value > self.acc[k] {
                        self.acc[k] = value;
                    }
                }
                AcousticReduction::Mean => self.acc[k] += value,
            }
        } else {
            if seen > 0 {
                self.stats.duplicates += 1;
            }
            self.acc[k] = value;
        }
        self.counts[k] = seen.saturating_add(1);
    }

    pub fn finish(self) -> (ChannelSeries, ResampleStats) {
        let Resampler {
            channel,
            start,
            reduction,
            mut acc,
            counts,
            mut stats,
        } = self;
        if stats.duplicates > 0 {
            log::warn!(
                "{channel}: {} samples snapped onto an occupied second; kept the last",
                stats.duplicates
            );
        }
        if channel == Channel::Acoustic && reduction == AcousticReduction::Mean {
            for (v, &n) in acc.iter_mut().zip(&counts) {
                if n > 0 {
                    *v /= n as f64;
                }
            }
        }
        let len = acc.len();
        let mut missing = vec![false; len];
        let mut k = 0;
        while k < len {
            if counts[k] > 0 {
                k += 1;
                continue;
            }
            let run_start = k;
            while k < len && counts[k] == 0 {
                k += 1;
            }
            let run = k - run_start;
            if run_start > 0 && run <= FILL_LIMIT_SECONDS {
                let fill = acc[run_start - 1];
                acc[run_start..k].fill(fill);
                stats.filled += run;
            } else {
                missing[run_start..k].fill(true);
                stats.missing += run;
            }
        }
        let series = ChannelSeries {
            channel,
            start_time: start,
            values: acc,
            missing,
        };
        (series, stats)
    }
}

/// Reduces raw samples to one [`ChannelSeries`] per (node, channel) present.
///
/// Samples of one stream must be in time order for "keep last" to mean the
/// latest sample; [`super::parse_sensor_csv`] output satisfies this.
pub fn resample_to_1hz(
    samples: &[SensorSample],
    span: Span,
    reduction: AcousticReduction,
) -> BTreeMap<(String, Channel), ChannelSeries> {
    let mut streams: BTreeMap<(String, Channel), Resampler> = BTreeMap::new();
    for s in samples {
        let key = (s.node_id.clone(), s.channel);
        streams
            .entry(key)
            .or_insert_with(|| Resampler::new(s.channel, span, reduction))
            .push(s.timestamp, s.value);
    }
    streams
        .into_iter()
        .map(|(key, r)| (key, r.finish().0))
        .collect()
}
