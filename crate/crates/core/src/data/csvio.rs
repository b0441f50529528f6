//! Canonical gesture CSV: one row per timestep,
//! `user_id,terminal_id,label,order_index,t,ax,ay,az,gx,gy,gz[,synthetic]`.

use std::io::{Read, Write};

use ndarray::Array2;

use super::ingest::{grid_offset, RawRow, Sensor};
use super::window::{GestureWindow, Label, CHANNELS, WINDOW_LEN};
use crate::error::{Error, Result};

pub const CANONICAL_HEADER: [&str; 11] =
    ["user_id", "terminal_id", "label", "order_index", "t", "ax", "ay", "az", "gx", "gy", "gz"];

/// Writes windows in canonical form. With `synthetic` set, a trailing `synthetic=1` column is added.
pub fn write_windows<W: Write>(out: W, windows: &[GestureWindow], synthetic: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CANONICAL_HEADER.to_vec();
    if synthetic {
        header.push("synthetic");
    }
    wtr.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for w in windows {
        for k in 0..WINDOW_LEN {
            record.clear();
            record.push(w.user_id.to_string());
            record.push(w.terminal_id.map(|t| t.to_string()).unwrap_or_default());
            record.push(w.label.as_str().to_string());
            record.push(w.order_index.to_string());
            record.push(format!("{:.2}", grid_offset(k)));
            for c in 0..CHANNELS {
                // shortest round-trip representation
                record.push(format!("{:?}", w.values[[k, c]]));
            }
            if synthetic {
                record.push("1".into());
            }
            wtr.write_record(&record)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads canonical windows; rows of one window must be contiguous and complete.
pub fn read_windows<R: Read>(input: R) -> Result<Vec<GestureWindow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    for (i, name) in CANONICAL_HEADER.iter().enumerate() {
        if headers.get(i) != Some(*name) {
            return Err(Error::InvalidArgument(format!(
                "canonical CSV column {i} must be `{name}`, found {:?}",
                headers.get(i)
            )));
        }
    }
    let mut windows = Vec::new();
    let mut current: Option<(u32, Option<u8>, Label, u64)> = None;
    let mut buf: Vec<f64> = Vec::with_capacity(WINDOW_LEN * CHANNELS);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let parse_f = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("row {}: bad number `{}`", line + 2, field(i)))
            })
        };
        let user: u32 = field(0)
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("row {}: bad user_id", line + 2)))?;
        let terminal = match field(1) {
            "" => None,
            s => Some(
                s.parse::<u8>()
                    .map_err(|_| Error::InvalidArgument(format!("row {}: bad terminal_id", line + 2)))?,
            ),
        };
        let label = Label::parse(field(2))?;
        let order: u64 = field(3)
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("row {}: bad order_index", line + 2)))?;
        let key = (user, terminal, label, order);
        if current != Some(key) {
            if let Some(k) = current.take() {
                windows.push(finish(k, std::mem::take(&mut buf))?);
            }
            current = Some(key);
        }
        for c in 0..CHANNELS {
            buf.push(parse_f(5 + c)?);
        }
    }
    if let Some(k) = current {
        windows.push(finish(k, buf)?);
    }
    Ok(windows)
}

fn finish(key: (u32, Option<u8>, Label, u64), buf: Vec<f64>) -> Result<GestureWindow> {
    if buf.len() != WINDOW_LEN * CHANNELS {
        return Err(Error::Shape(format!(
            "window (user {}, order {}) has {} rows, expected {WINDOW_LEN}",
            key.0,
            key.3,
            buf.len() / CHANNELS
        )));
    }
    let values = Array2::from_shape_vec((WINDOW_LEN, CHANNELS), buf)
        .map_err(|e| Error::Shape(e.to_string()))?;
    GestureWindow::new(values, key.0, key.1, key.2, key.3)
}

/// Raw-row CSV accepted by the ingest adapter:
/// `recording_id,user_id,terminal_id,label,contact_time,timestamp,sensor,x,y,z`.
pub fn read_raw_rows<R: Read>(input: R) -> Result<Vec<RawRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let bad = |what: &str| Error::InvalidArgument(format!("raw row {}: bad {what}", line + 2));
        let num = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| bad(what));
        rows.push(RawRow {
            recording_id: field(0),
            user_id: field(1).parse().map_err(|_| bad("user_id"))?,
            terminal_id: match field(2).as_str() {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("terminal_id"))?),
            },
            label: Label::parse(&field(3))?,
            contact_time: match field(4).as_str() {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("contact_time"))?),
            },
            timestamp: num(5, "timestamp")?,
            sensor: Sensor::parse(&field(6)),
            x: num(7, "x")?,
            y: num(8, "y")?,
            z: num(9, "z")?,
        });
    }
    Ok(rows)
}

pub fn write_raw_rows<W: Write>(out: W, rows: &[RawRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "recording_id",
        "user_id",
        "terminal_id",
        "label",
        "contact_time",
        "timestamp",
        "sensor",
        "x",
        "y",
        "z",
    ])?;
    for r in rows {
        wtr.write_record([
            r.recording_id.clone(),
            r.user_id.to_string(),
            r.terminal_id.map(|t| t.to_string()).unwrap_or_default(),
            r.label.as_str().to_string(),
            r.contact_time.map(|t| format!("{t:?}")).unwrap_or_default(),
            format!("{:?}", r.timestamp),
            r.sensor.as_str().to_string(),
            format!("{:?}", r.x),
            format!("{:?}", r.y),
            format!("{:?}", r.z),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::generate_mini_dataset;

    #[test]
    fn canonical_csv_round_trips() {
        let ds = generate_mini_dataset(2, 3, 11).unwrap();
        let mut buf = Vec::new();
        write_windows(&mut buf, &ds.windows, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,terminal_id,label,order_index,t,ax,ay,az,gx,gy,gz\n"));
        assert!(text.lines().nth(1).unwrap().contains(",-4.00,"));
        let back = read_windows(buf.as_slice()).unwrap();
        assert_eq!(back, ds.windows);
    }

    #[test]
    fn synthetic_column_is_appended() {
        let ds = generate_mini_dataset(2, 1, 1).unwrap();
        let mut buf = Vec::new();
        write_windows(&mut buf, &ds.windows[..1], true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",synthetic"));
        assert!(text.lines().nth(1).unwrap().ends_with(",1"));
        assert_eq!(read_windows(buf.as_slice()).unwrap().len(), 1);
    }

    #[test]
    fn truncated_window_is_rejected() {
        let ds = generate_mini_dataset(2, 1, 1).unwrap();
        let mut buf = Vec::new();
        write_windows(&mut buf, &ds.windows[..1], false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(150).map(|l| format!("{l}\n")).collect();
        assert!(read_windows(cut.as_bytes()).is_err());
    }
}
