//! Raw sensor rows to canonical 200x6 windows.
//!
//! Each recording (a gesture or a continuous non-gesture stream) arrives as rows of
//! `(recording id, timestamp, sensor, x, y, z)`. Accelerometer and gyroscope streams are
//! snapped onto a uniform 50 Hz grid by nearest-timestamp selection, ties going to the
//! earlier sample. Gestures keep the 4 s before NFC contact; non-gesture streams are cut
//! into consecutive non-overlapping 4 s windows.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::window::{Dataset, GestureWindow, Label, CHANNELS, SAMPLE_PERIOD_S, WINDOW_LEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensor {
    Accelerometer,
    Gyroscope,
    /// Orientation, linear acceleration and anything else; ignored.
    Other,
}

impl Sensor {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "accelerometer" | "acc" | "accel" => Sensor::Accelerometer,
            "gyroscope" | "gyro" | "gyr" => Sensor::Gyroscope,
            _ => Sensor::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Accelerometer => "accelerometer",
            Sensor::Gyroscope => "gyroscope",
            Sensor::Other => "other",
        }
    }
}

/// One raw reading. Recording-level metadata is repeated on every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub recording_id: String,
    pub user_id: u32,
    pub terminal_id: Option<u8>,
    pub label: Label,
    /// NFC contact time in seconds; required for gestures.
    pub contact_time: Option<f64>,
    pub timestamp: f64,
    pub sensor: Sensor,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Grid offset of sample `k` relative to the window end.
pub fn grid_offset(k: usize) -> f64 {
    k as f64 * SAMPLE_PERIOD_S - WINDOW_LEN as f64 * SAMPLE_PERIOD_S
}

struct Stream {
    times: Vec<f64>,
    xyz: Vec<[f64; 3]>,
}

impl Stream {
    fn from_rows(mut rows: Vec<(f64, [f64; 3])>) -> Self {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, xyz) = rows.into_iter().unzip();
        Self { times, xyz }
    }

    fn first(&self) -> f64 {
        self.times[0]
    }

    fn last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Index of the sample nearest `t`; ties resolve to the earlier sample.
    fn nearest(&self, t: f64) -> usize {
        let upper = self.times.partition_point(|&s| s < t);
        if upper == 0 {
            return 0;
        }
        if upper == self.times.len() {
            return upper - 1;
        }
        let before = t - self.times[upper - 1];
        let after = self.times[upper] - t;
        if after < before {
            upper
        } else {
            upper - 1
        }
    }
}

struct Recording {
    user_id: u32,
    terminal_id: Option<u8>,
    label: Label,
    contact_time: Option<f64>,
    acc: Vec<(f64, [f64; 3])>,
    gyro: Vec<(f64, [f64; 3])>,
}

/// Builds canonical windows from raw rows. Windows come out sorted by (user, label, order).
pub fn ingest(rows: &[RawRow]) -> Result<Dataset> {
    let mut recordings: BTreeMap<&str, Recording> = BTreeMap::new();
    for row in rows {
        if !(row.timestamp.is_finite() && row.x.is_finite() && row.y.is_finite() && row.z.is_finite())
        {
            return Err(ingest_err(&row.recording_id, "non-finite reading"));
        }
        let rec = recordings.entry(row.recording_id.as_str()).or_insert_with(|| Recording {
            user_id: row.user_id,
            terminal_id: row.terminal_id,
            label: row.label,
            contact_time: row.contact_time,
            acc: Vec::new(),
            gyro: Vec::new(),
        });
        if rec.user_id != row.user_id || rec.label != row.label || rec.terminal_id != row.terminal_id
        {
            return Err(ingest_err(&row.recording_id, "inconsistent metadata across rows"));
        }
        let sample = (row.timestamp, [row.x, row.y, row.z]);
        match row.sensor {
            Sensor::Accelerometer => rec.acc.push(sample),
            Sensor::Gyroscope => rec.gyro.push(sample),
            Sensor::Other => {}
        }
    }

    // (user, label) -> [(sort time, sub-index, window)]
    let mut grouped: HashMap<(u32, Label), Vec<(f64, usize, Array2<f64>, Option<u8>)>> =
        HashMap::new();
    for (id, rec) in recordings {
        if rec.acc.is_empty() {
            return Err(ingest_err(id, "missing accelerometer channel"));
        }
        if rec.gyro.is_empty() {
            return Err(ingest_err(id, "missing gyroscope channel"));
        }
        let acc = Stream::from_rows(rec.acc);
        let gyro = Stream::from_rows(rec.gyro);
        let entry = grouped.entry((rec.user_id, rec.label)).or_default();
        match rec.label {
            Label::Gesture => {
                let contact = rec
                    .contact_time
                    .ok_or_else(|| ingest_err(id, "gesture has no NFC contact time"))?;
                let start = contact + grid_offset(0);
                let half = SAMPLE_PERIOD_S / 2.0;
                for s in [&acc, &gyro] {
                    if s.first() > start + half {
                        return Err(ingest_err(
                            id,
                            &format!(
                                "only {:.2} s of data before contact, need 4 s",
                                (contact - s.first()).max(0.0)
                            ),
                        ));
                    }
                    if s.last() < contact + grid_offset(WINDOW_LEN - 1) - half {
                        return Err(ingest_err(id, "data ends before NFC contact"));
                    }
                }
                let values = sample_grid(id, &acc, &gyro, contact)?;
                entry.push((contact, 0, values, rec.terminal_id));
            }
            Label::NonGesture => {
                let start = acc.first().max(gyro.first());
                let end = acc.last().min(gyro.last());
                let span = WINDOW_LEN as f64 * SAMPLE_PERIOD_S;
                let mut w = 0usize;
                loop {
                    // grid point k of window w sits at start + w*span + k*period
                    let window_end = start + (w + 1) as f64 * span;
                    if window_end + grid_offset(WINDOW_LEN - 1) > end + SAMPLE_PERIOD_S / 2.0 {
                        break;
                    }
                    let values = sample_grid(id, &acc, &gyro, window_end)?;
                    entry.push((start, w, values, rec.terminal_id));
                    w += 1;
                }
            }
        }
    }

    let mut windows = Vec::new();
    let mut keys: Vec<(u32, Label)> = grouped.keys().copied().collect();
    keys.sort();
    for key in keys {
        let mut items = grouped.remove(&key).unwrap_or_default();
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (order, (_, _, values, terminal)) in items.into_iter().enumerate() {
            windows.push(GestureWindow::new(values, key.0, terminal, key.1, order as u64)?);
        }
    }
    Ok(Dataset::new(windows))
}

fn sample_grid(id: &str, acc: &Stream, gyro: &Stream, end: f64) -> Result<Array2<f64>> {
    let mut values = Array2::zeros((WINDOW_LEN, CHANNELS));
    for k in 0..WINDOW_LEN {
        let t = end + grid_offset(k);
        for (s, base) in [(acc, 0usize), (gyro, 3usize)] {
            let i = s.nearest(t);
            if (s.times[i] - t).abs() > 1.5 * SAMPLE_PERIOD_S {
                return Err(ingest_err(id, &format!("sensor gap near t = {t:.3} s")));
            }
            for a in 0..3 {
                values[[k, base + a]] = s.xyz[i][a];
            }
        }
    }
    Ok(values)
}

fn ingest_err(id: &str, reason: &str) -> Error {
    Error::Ingest { gesture_id: id.to_string(), reason: reason.to_string() }
}

/// Expands canonical windows back into raw rows that [`ingest`] maps onto the same windows.
/// Each window becomes its own recording placed `1000 * order_index` seconds into the timeline.
pub fn windows_to_raw_rows(windows: &[GestureWindow]) -> Vec<RawRow> {
    let mut rows = Vec::with_capacity(windows.len() * WINDOW_LEN * 2);
    for w in windows {
        let anchor = 1000.0 * w.order_index as f64;
        let id = format!("u{}-{}-{}", w.user_id, w.label.as_str(), w.order_index);
        let (contact, end) = match w.label {
            Label::Gesture => (Some(anchor), anchor),
            Label::NonGesture => (None, anchor),
        };
        for k in 0..WINDOW_LEN {
            let t = end + grid_offset(k);
            for (sensor, base) in [(Sensor::Accelerometer, 0), (Sensor::Gyroscope, 3)] {
                rows.push(RawRow {
                    recording_id: id.clone(),
                    user_id: w.user_id,
                    terminal_id: w.terminal_id,
                    label: w.label,
                    contact_time: contact,
                    timestamp: t,
                    sensor,
                    x: w.values[[k, base]],
                    y: w.values[[k, base + 1]],
                    z: w.values[[k, base + 2]],
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_for(
        id: &str,
        label: Label,
        contact: Option<f64>,
        t0: f64,
        seconds: f64,
        sensors: &[Sensor],
    ) -> Vec<RawRow> {
        let n = (seconds / SAMPLE_PERIOD_S).round() as usize;
        let mut rows = Vec::new();
        for k in 0..n {
            let t = t0 + k as f64 * SAMPLE_PERIOD_S;
            for &sensor in sensors {
                rows.push(RawRow {
                    recording_id: id.into(),
                    user_id: 3,
                    terminal_id: if label == Label::Gesture { Some(2) } else { None },
                    label,
                    contact_time: contact,
                    timestamp: t,
                    sensor,
                    x: t,
                    y: -t,
                    z: k as f64,
                });
            }
        }
        rows
    }

    const BOTH: [Sensor; 2] = [Sensor::Accelerometer, Sensor::Gyroscope];

    #[test]
    fn six_second_gesture_keeps_four_seconds_before_contact() {
        // 6 s of data from t=10 to t=16, contact at t=14
        let rows = rows_for("g1", Label::Gesture, Some(14.0), 10.0, 6.0, &BOTH);
        let ds = ingest(&rows).unwrap();
        assert_eq!(ds.windows.len(), 1);
        let w = &ds.windows[0];
        assert_eq!(w.values.dim(), (200, 6));
        assert!((w.values[[0, 0]] - 10.0).abs() < 1e-9);
        assert!((w.values[[199, 0]] - 13.98).abs() < 1e-9);
        assert_eq!(w.values[[0, 5]], 0.0);
        assert_eq!(w.values[[199, 5]], 199.0);
    }

    #[test]
    fn twelve_second_stream_gives_three_windows() {
        let rows = rows_for("n1", Label::NonGesture, None, 0.0, 12.0, &BOTH);
        let ds = ingest(&rows).unwrap();
        assert_eq!(ds.windows.len(), 3);
        for (i, w) in ds.windows.iter().enumerate() {
            assert_eq!(w.order_index, i as u64);
            assert_eq!(w.values[[0, 5]], (200 * i) as f64);
        }
    }

    #[test]
    fn short_history_is_rejected_with_id() {
        let rows = rows_for("short-one", Label::Gesture, Some(3.0), 0.0, 5.0, &BOTH);
        let err = ingest(&rows).unwrap_err().to_string();
        assert!(err.contains("short-one"), "{err}");
    }

    #[test]
    fn missing_sensor_is_rejected() {
        let rows = rows_for("g", Label::Gesture, Some(5.0), 0.0, 6.0, &[Sensor::Accelerometer]);
        assert!(ingest(&rows).unwrap_err().to_string().contains("gyroscope"));
    }

    #[test]
    fn nearest_ties_pick_earlier_sample() {
        let s = Stream { times: vec![0.0, 1.0, 2.0], xyz: vec![[0.0; 3]; 3] };
        assert_eq!(s.nearest(0.5), 0);
        assert_eq!(s.nearest(0.51), 1);
        assert_eq!(s.nearest(5.0), 2);
        assert_eq!(s.nearest(-1.0), 0);
    }

    #[test]
    fn gestures_are_ordered_by_contact_time() {
        let mut rows = rows_for("late", Label::Gesture, Some(104.0), 100.0, 6.0, &BOTH);
        rows.extend(rows_for("early", Label::Gesture, Some(14.0), 10.0, 6.0, &BOTH));
        let ds = ingest(&rows).unwrap();
        assert_eq!(ds.windows[0].values[[0, 0]].round(), 10.0);
        assert_eq!(ds.windows[1].values[[0, 0]].round(), 100.0);
        ds.check_ordering().unwrap();
    }

    #[test]
    fn reingesting_canonical_windows_is_identity() {
        let mut rows = rows_for("a", Label::Gesture, Some(14.0), 10.0, 6.0, &BOTH);
        rows.extend(rows_for("b", Label::Gesture, Some(40.0), 35.0, 6.0, &BOTH));
        rows.extend(rows_for("n", Label::NonGesture, None, 0.0, 8.5, &BOTH));
        let first = ingest(&rows).unwrap();
        let second = ingest(&windows_to_raw_rows(&first.windows)).unwrap();
        assert_eq!(first.windows, second.windows);
    }
}
