use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AgitationLabel, Channel, Deployment, LocationTrack, SensorSample};
use crate::error::{Error, Result};

pub const SENSOR_HEADER: &str = "timestamp,node_id,channel,value";
pub const LABELS_HEADER: &str = "time,severity,behavior,node_id";
pub const TRACK_HEADER: &str = "time,node_id";

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn open_reader(path: &Path, expected: &str) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let found = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(Error::Header {
            file: file_name(path),
            found,
            expected: expected.to_string(),
        });
    }
    Ok(reader)
}

fn parse_f64(file: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::MalformedRow {
            file: file_name(file),
            line,
            reason: format!("cannot parse {what} {field:?}"),
        })
}

/// Visits every row of a sensor CSV in file order without materializing
/// [`SensorSample`]s.
pub(crate) fn for_each_sensor_row(
    path: &Path,
    mut visit: impl FnMut(f64, &str, Channel, f64),
) -> Result<usize> {
    let mut reader = open_reader(path, SENSOR_HEADER)?;
    let mut record = csv::StringRecord::new();
    let mut rows = 0;
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::MalformedRow {
                    file: file_name(path),
                    line,
                    reason: e.to_string(),
                });
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::MalformedRow {
                file: file_name(path),
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let t = parse_f64(path, line, &record[0], "timestamp")?;
        let node = &record[1];
        if node.is_empty() {
            return Err(Error::MalformedRow {
                file: file_name(path),
                line,
                reason: "empty node_id".into(),
            });
        }
        let channel = record[2]
            .parse::<Channel>()
            .map_err(|_| Error::UnknownChannel {
                line,
                name: record[2].to_string(),
            })?;
        let value = parse_f64(path, line, &record[3], "value")?;
        if !t.is_finite() || !value.is_finite() {
            return Err(Error::NonFinite { line });
        }
        visit(t, node, channel, value);
        rows += 1;
    }
    Ok(rows)
}

/// Parses a sensor CSV. Output is sorted by (node_id, channel, timestamp);
/// equal timestamps keep file order.
pub fn parse_sensor_csv(path: impl AsRef<Path>) -> Result<Vec<SensorSample>> {
    let mut samples = Vec::new();
    for_each_sensor_row(path.as_ref(), |t, node, channel, value| {
        samples.push(SensorSample {
            timestamp: t,
            node_id: node.to_string(),
            channel,
            value,
        });
    })?;
    samples.sort_by(|a, b| {
        a.node_id
            .cmp(&b.node_id)
            .then(a.channel.cmp(&b.channel))
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
    Ok(samples)
}

pub fn parse_labels_csv(path: impl AsRef<Path>) -> Result<Vec<AgitationLabel>> {
    let path = path.as_ref();
    let mut reader = open_reader(path, LABELS_HEADER)?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::MalformedRow {
                file: file_name(path),
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let time = parse_f64(path, line, &record[0], "time")?;
        if !time.is_finite() {
            return Err(Error::NonFinite { line });
        }
        let severity = record[1]
            .trim()
            .parse::<u8>()
            .ok()
            .filter(|s| (1..=5).contains(s))
            .ok_or_else(|| Error::MalformedRow {
                file: file_name(path),
                line,
                reason: format!("severity {:?} not an integer in 1..=5", &record[1]),
            })?;
        let node_id = match record[3].trim() {
            "" => None,
            node => Some(node.to_string()),
        };
        labels.push(AgitationLabel {
            time,
            severity,
            behavior: record[2].to_string(),
            node_id,
        });
    }
    labels.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(labels)
}

pub fn parse_track_csv(path: impl AsRef<Path>) -> Result<LocationTrack> {
    let path = path.as_ref();
    let mut reader = open_reader(path, TRACK_HEADER)?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 || record[1].is_empty() {
            return Err(Error::MalformedRow {
                file: file_name(path),
                line,
                reason: "expected `time,node_id`".into(),
            });
        }
        let t = parse_f64(path, line, &record[0], "time")?;
        points.push((t, record[1].to_string()));
    }
    LocationTrack::new(points)
}

/// Buffered writer for the sensor CSV schema.
pub struct SensorCsvWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl SensorCsvWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        writeln!(out, "{SENSOR_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(SensorCsvWriter { out, path })
    }

    pub fn write(&mut self, t: f64, node: &str, channel: Channel, value: f64) -> Result<()> {
        writeln!(self.out, "{t:.3},{node},{channel},{value}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes the 1 Hz series of a deployment; missing slots are omitted.
pub fn write_sensor_rows(path: impl AsRef<Path>, deployment: &Deployment) -> Result<()> {
    let mut w = SensorCsvWriter::create(path)?;
    for (node, streams) in &deployment.nodes {
        for series in &streams.channels {
            for (k, (&v, &m)) in series.values.iter().zip(&series.missing).enumerate() {
                if !m {
                    w.write(
                        (series.start_time + k as i64) as f64,
                        node,
                        series.channel,
                        v,
                    )?;
                }
            }
        }
    }
    w.finish()
}

pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[AgitationLabel]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LABELS_HEADER.split(','))?;
    for l in labels {
        w.write_record([
            l.time.to_string(),
            l.severity.to_string(),
            l.behavior.clone(),
            l.node_id.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_track_csv(path: impl AsRef<Path>, track: &LocationTrack) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACK_HEADER.split(','))?;
    for (t, node) in track.breakpoints() {
        w.write_record([t.to_string(), node.clone()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_single_row() {
        let f = temp_csv("timestamp,node_id,channel,value\n1549968000.000,living,light,312.5\n");
        let s = parse_sensor_csv(f.path()).unwrap();
        assert_eq!(
            s,
            vec![SensorSample {
                timestamp: 1549968000.0,
                node_id: "living".into(),
                channel: Channel::Light,
                value: 312.5,
            }]
        );
    }

    #[test]
    fn header_only_gives_empty_list() {
        let f = temp_csv("timestamp,node_id,channel,value\n");
        assert!(parse_sensor_csv(f.path()).unwrap().is_empty());
    }

    #[test]
    fn unknown_channel_reports_line() {
        let f = temp_csv("timestamp,node_id,channel,value\n1.0,a,light,1\n2.0,a,co2,400\n");
        let err = parse_sensor_csv(f.path()).unwrap_err();
        assert_eq!(err.to_string(), "unknown channel at line 3: \"co2\"");
    }

    #[test]
    fn non_finite_value_is_rejected() {
        let f = temp_csv("timestamp,node_id,channel,value\n1.0,a,light,NaN\n");
        assert!(matches!(
            parse_sensor_csv(f.path()),
            Err(Error::NonFinite { line: 2 })
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = temp_csv("timestamp,node_id,channel,value\n1.0,a,light,1\n2.0,a,light\n");
        match parse_sensor_csv(f.path()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = temp_csv("timestamp,node_id,channel,value\nabc,a,light,1\n");
        assert!(matches!(
            parse_sensor_csv(f.path()),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let f = temp_csv("t,node,channel,value\n");
        assert!(matches!(
            parse_sensor_csv(f.path()),
            Err(Error::Header { .. })
        ));
    }

    #[test]
    fn output_is_sorted_by_node_channel_time() {
        let f = temp_csv(
            "timestamp,node_id,channel,value\n3,b,light,1\n2,a,acoustic,1\n1,a,acoustic,2\n5,a,light,3\n",
        );
        let s = parse_sensor_csv(f.path()).unwrap();
        let keys: Vec<_> = s
            .iter()
            .map(|s| (s.node_id.as_str(), s.channel, s.timestamp))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("a", Channel::Light, 5.0),
                ("a", Channel::Acoustic, 1.0),
                ("a", Channel::Acoustic, 2.0),
                ("b", Channel::Light, 3.0),
            ]
        );
    }

    #[test]
    fn labels_and_track_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![
            AgitationLabel {
                time: 10.125,
                severity: 3,
                behavior: "verbal, loud".into(),
                node_id: None,
            },
            AgitationLabel {
                time: 99.0,
                severity: 5,
                behavior: "restless".into(),
                node_id: Some("kitchen".into()),
            },
        ];
        let lp = dir.path().join("labels.csv");
        write_labels_csv(&lp, &labels).unwrap();
        assert_eq!(parse_labels_csv(&lp).unwrap(), labels);

        let track = LocationTrack::new(vec![(0.1, "a".into()), (7.0, "b".into())]).unwrap();
        let tp = dir.path().join("track.csv");
        write_track_csv(&tp, &track).unwrap();
        assert_eq!(parse_track_csv(&tp).unwrap(), track);
    }

    #[test]
    fn severity_outside_scale_is_rejected() {
        let f = temp_csv("time,severity,behavior,node_id\n1.0,7,verbal,\n");
        assert!(parse_labels_csv(f.path()).is_err());
    }
}
