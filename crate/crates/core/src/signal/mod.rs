//! Median filtering and 0–100 range normalization of aligned channel series.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Channel, ChannelSeries, Deployment};
use crate::error::{Error, Result};

/// Default filter length: ten one-second samples.
pub const DEFAULT_FILTER_LEN: usize = 10;

/// Centered running median over observed samples.
///
/// The window for index `i` is `[i - len/2, i + (len-1)/2]`, clipped at the
/// series edges; missing samples are skipped, so the window shrinks around
/// gaps. Even counts average the two middle values. Missing slots stay missing.
pub fn median_filter(series: &ChannelSeries, window_len: usize) -> Result<ChannelSeries> {
    if window_len == 0 {
        return Err(Error::invalid("median filter window_len must be >= 1"));
    }
    let n = series.len();
    let left = window_len / 2;
    let right = (window_len - 1) / 2;
    let mut window = SortedWindow::with_capacity(window_len);
    let mut out = vec![0.0; n];

    let admit = |w: &mut SortedWindow, k: usize| {
        if k < n && !series.missing[k] {
            w.insert(series.values[k]);
        }
    };
    for k in 0..right.min(n) {
        admit(&mut window, k);
    }
    for i in 0..n {
        admit(&mut window, i + right);
        if i > left {
            let gone = i - left - 1;
            if !series.missing[gone] {
                window.remove(series.values[gone]);
            }
        }
        if !series.missing[i] {
            out[i] = window.median();
        }
    }
    Ok(ChannelSeries {
        channel: series.channel,
        start_time: series.start_time,
        values: out,
        missing: series.missing.clone(),
    })
}

#[derive(Debug)]
struct SortedWindow {
    items: Vec<f64>,
}

impl SortedWindow {
    fn with_capacity(n: usize) -> Self {
        SortedWindow {
            items: Vec::with_capacity(n),
        }
    }

    fn insert(&mut self, v: f64) {
        let at = self.items.partition_point(|x| x.total_cmp(&v).is_lt());
        self.items.insert(at, v);
    }

    fn remove(&mut self, v: f64) {
        let at = self.items.partition_point(|x| x.total_cmp(&v).is_lt());
        debug_assert!(self.items[at] == v);
        self.items.remove(at);
    }

    fn median(&self) -> f64 {
        let k = self.items.len();
        if k % 2 == 1 {
            self.items[k / 2]
        } else {
            0.5 * (self.items[k / 2 - 1] + self.items[k / 2])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<MinMax> {
        values.into_iter().fold(None, |acc, v| {
            Some(match acc {
                None => MinMax { min: v, max: v },
                Some(m) => MinMax {
                    min: m.min.min(v),
                    max: m.max.max(v),
                },
            })
        })
    }

    pub fn merge(self, other: MinMax) -> MinMax {
        MinMax {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Maps `v` into [0, 100]; a degenerate range maps everything to 50.
    /// Returns the mapped value and whether it had to be clamped.
    pub fn scale(&self, v: f64) -> (f64, bool) {
        if self.max <= self.min {
            return (50.0, false);
        }
        if v < self.min {
            (0.0, true)
        } else if v > self.max {
            (100.0, true)
        } else {
            (
                (100.0 * (v - self.min) / (self.max - self.min)).min(100.0),
                false,
            )
        }
    }
}

/// Per (node, channel) extrema used for normalization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub nodes: BTreeMap<String, BTreeMap<Channel, MinMax>>,
}

impl NormalizationStats {
    pub fn get(&self, node: &str, channel: Channel) -> Option<MinMax> {
        self.nodes.get(node)?.get(&channel).copied()
    }

    pub fn insert(&mut self, node: &str, channel: Channel, mm: MinMax) {
        self.nodes
            .entry(node.to_string())
            .or_default()
            .insert(channel, mm);
    }

    /// Widens the stored range for (node, channel) to include `mm`.
    pub fn absorb(&mut self, node: &str, channel: Channel, mm: MinMax) {
        let merged = match self.get(node, channel) {
            Some(old) => old.merge(mm),
            None => mm,
        };
        self.insert(node, channel, merged);
    }
}

/// Extrema over all observed samples of every (node, channel).
pub fn compute_norm_stats(deployment: &Deployment) -> Result<NormalizationStats> {
    let mut stats = NormalizationStats::default();
    for (node, streams) in &deployment.nodes {
        for series in &streams.channels {
            let mm = MinMax::of(series.observed()).ok_or_else(|| Error::AllMissing {
                node: node.clone(),
                channel: series.channel,
            })?;
            stats.insert(node, series.channel, mm);
        }
    }
    Ok(stats)
}

/// Linear map onto [0, 100] with clamping; returns the series and the number
/// of clamped samples.
pub fn normalize(series: &ChannelSeries, range: MinMax) -> (ChannelSeries, usize) {
    let mut clamped = 0;
    let values = series
        .values
        .iter()
        .zip(&series.missing)
        .map(|(&v, &m)| {
            if m {
                return 0.0;
            }
            let (x, c) = range.scale(v);
            clamped += c as usize;
            x
        })
        .collect();
    if clamped > 0 {
        log::warn!(
            "{}: {clamped} samples outside [min, max] clamped",
            series.channel
        );
    }
    let out = ChannelSeries {
        channel: series.channel,
        start_time: series.start_time,
        values,
        missing: series.missing.clone(),
    };
    (out, clamped)
}

/// Where normalization extrema come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Extrema over the whole filtered deployment. Test-period data shapes
    /// the scale, which leaks range information across the split.
    #[default]
    Full,
    /// Extrema over the training observations only, applied after the split.
    TrainOnly,
}

/// A deployment after filtering and (optionally) normalization.
#[derive(Debug, Clone)]
pub struct PreparedDeployment {
    pub deployment: Deployment,
    /// Extrema of the filtered series, always computed.
    pub stats: NormalizationStats,
    pub normalized: bool,
}

/// Filters every channel except acoustic, computes extrema, and normalizes
/// when `normalize_now` is set.
pub fn prepare(
    mut deployment: Deployment,
    filter_len: usize,
    normalize_now: bool,
) -> Result<PreparedDeployment> {
    deployment.validate()?;
    let mut series: Vec<&mut ChannelSeries> = deployment
        .nodes
        .values_mut()
        .flat_map(|n| n.channels.iter_mut())
        .filter(|s| s.channel != Channel::Acoustic)
        .collect();
    series.par_iter_mut().try_for_each(|s| {
        **s = median_filter(s, filter_len)?;
        Ok::<_, Error>(())
    })?;
    drop(series);

    let stats = compute_norm_stats(&deployment)?;
    if normalize_now {
        let mut jobs: Vec<(&String, &mut ChannelSeries)> = deployment
            .nodes
            .iter_mut()
            .flat_map(|(node, n)| n.channels.iter_mut().map(move |s| (node, s)))
            .collect();
        jobs.par_iter_mut().for_each(|(node, s)| {
            let range = stats
                .get(node, s.channel)
                .expect("stats cover every series");
            **s = normalize(s, range).0;
        });
    }
    Ok(PreparedDeployment {
        deployment,
        stats,
        normalized: normalize_now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> ChannelSeries {
        ChannelSeries::complete(Channel::Light, 0, values.to_vec())
    }

    #[test]
    fn median_removes_speckle() {
        let out = median_filter(&series(&[1., 1., 9., 1., 1.]), 3).unwrap();
        assert_eq!(out.values, vec![1.; 5]);
    }

    #[test]
    fn median_of_constant_is_constant() {
        let out = median_filter(&series(&[4.5; 40]), 10).unwrap();
        assert_eq!(out.values, vec![4.5; 40]);
    }

    #[test]
    fn shrunken_even_window_averages() {
        let out = median_filter(&series(&[0., 10.]), 3).unwrap();
        assert_eq!(out.values, vec![5., 5.]);
    }

    #[test]
    fn zero_window_is_error() {
        assert!(median_filter(&series(&[1.]), 0).is_err());
    }

    #[test]
    fn missing_samples_are_skipped_and_preserved() {
        let mut s = series(&[1., 100., 3., 5.]);
        s.missing[1] = true;
        let out = median_filter(&s, 3).unwrap();
        assert!(out.missing[1]);
        // index 0 sees {1}, index 2 sees {3, 5}, index 3 sees {3, 5}
        assert_eq!(out.values[0], 1.);
        assert_eq!(out.values[2], 4.);
        assert_eq!(out.values[3], 4.);
    }

    #[test]
    fn stats_exclude_missing() {
        let mut s = series(&[20., 999., 30.]);
        s.missing[1] = true;
        assert_eq!(
            MinMax::of(s.observed()),
            Some(MinMax { min: 20., max: 30. })
        );
    }

    #[test]
    fn normalize_endpoints() {
        let (out, clamped) = normalize(&series(&[20., 25., 30.]), MinMax { min: 20., max: 30. });
        assert_eq!(out.values, vec![0., 50., 100.]);
        assert_eq!(clamped, 0);
    }

    #[test]
    fn normalize_constant_maps_to_fifty() {
        let (out, _) = normalize(
            &series(&[101325.; 4]),
            MinMax {
                min: 101325.,
                max: 101325.,
            },
        );
        assert_eq!(out.values, vec![50.; 4]);
    }

    #[test]
    fn normalize_clamps_out_of_range() {
        let (out, clamped) = normalize(&series(&[35.]), MinMax { min: 20., max: 30. });
        assert_eq!(out.values, vec![100.]);
        assert_eq!(clamped, 1);
    }
}
