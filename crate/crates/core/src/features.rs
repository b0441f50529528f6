//! Hand-crafted feature vectors for the random-forest authenticator.
//!
//! Eight channels (six raw axes plus accelerometer and gyroscope magnitudes) times ten
//! statistics gives an 80-dimensional vector with a fixed ordering.

use std::io::Write;

use crate::data::{GestureWindow, Label, CHANNELS, CHANNEL_NAMES};
use crate::error::Result;
use crate::stats::{self, FEATURE_NAMES};

pub const FEATURE_CHANNELS: usize = CHANNELS + 2;
pub const FEATURES_PER_CHANNEL: usize = stats::FEATURE_COUNT + 1;
pub const FEATURE_LEN: usize = FEATURE_CHANNELS * FEATURES_PER_CHANNEL;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub user_id: u32,
    pub label: Label,
}

/// Names in vector order, e.g. `ax_max`, ..., `gyro_norm_peak_count`.
pub fn feature_names() -> Vec<String> {
    let channels = CHANNEL_NAMES.iter().copied().chain(["acc_norm", "gyro_norm"]);
    channels
        .flat_map(|c| {
            FEATURE_NAMES
                .iter()
                .copied()
                .chain(["peak_count"])
                .map(move |f| format!("{c}_{f}"))
        })
        .collect()
}

/// Number of strict interior local maxima.
pub fn peak_count(series: &[f64]) -> usize {
    if series.len() < 3 {
        return 0;
    }
    series.windows(3).filter(|w| w[0] < w[1] && w[1] > w[2]).count()
}

pub fn extract(window: &GestureWindow) -> FeatureVector {
    let v = &window.values;
    let mut channels: Vec<Vec<f64>> = (0..CHANNELS).map(|c| window.channel(c)).collect();
    for base in [0, 3] {
        channels.push(
            v.rows()
                .into_iter()
                .map(|r| (r[base] * r[base] + r[base + 1] * r[base + 1] + r[base + 2] * r[base + 2]).sqrt())
                .collect(),
        );
    }
    let mut values = Vec::with_capacity(FEATURE_LEN);
    for ch in &channels {
        values.extend_from_slice(&stats::features(ch));
        values.push(peak_count(ch) as f64);
    }
    FeatureVector { values, user_id: window.user_id, label: window.label }
}

pub fn extract_all(windows: &[GestureWindow]) -> Vec<FeatureVector> {
    windows.iter().map(extract).collect()
}

/// CSV with `user_id,label` followed by the 80 named features.
pub fn write_feature_csv<W: Write>(out: W, features: &[FeatureVector]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string(), "label".to_string()];
    header.extend(feature_names());
    wtr.write_record(&header)?;
    for f in features {
        let mut rec = vec![f.user_id.to_string(), f.label.as_str().to_string()];
        rec.extend(f.values.iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
