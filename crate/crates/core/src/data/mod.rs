//! Gesture windows, ingestion, preprocessing and the synthetic mini-dataset.

pub mod csvio;
pub mod filter;
pub mod ingest;
pub mod synth;
pub mod window;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use filter::{lowpass_filter, Butterworth, FilterSpec};
pub use ingest::{ingest, RawRow, Sensor};
pub use synth::{generate_mini_dataset, generate_mini_dataset_with, MiniDatasetConfig};
pub use window::{
    ChannelStats, Dataset, GestureWindow, Label, WindowKey, CHANNELS, CHANNEL_NAMES, WINDOW_LEN,
};

use crate::error::{Error, Result};
use crate::harness::split::SplitRecord;

/// Applies the dataset's stored statistics to every window.
pub fn normalize(dataset: &Dataset) -> Result<Dataset> {
    let stats = dataset
        .stats
        .ok_or_else(|| Error::InvalidArgument("dataset has no channel statistics".into()))?;
    stats.validate()?;
    let windows = dataset
        .windows
        .iter()
        .map(|w| GestureWindow { values: stats.normalize_values(&w.values), ..w.clone() })
        .collect();
    Ok(Dataset { windows, stats: Some(stats) })
}

/// Low-pass filters every window.
pub fn filter_dataset(dataset: &Dataset, spec: &FilterSpec) -> Result<Dataset> {
    let windows =
        dataset.windows.iter().map(|w| lowpass_filter(w, spec)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { windows, stats: dataset.stats })
}

pub const GESTURES_FILE: &str = "gestures.csv";
pub const NON_GESTURES_FILE: &str = "non_gestures.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `manifest.json` stored next to the canonical CSVs of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub files: Vec<String>,
    pub channel_stats: Option<ChannelStats>,
    pub filter: Option<FilterSpec>,
    pub split: Option<SplitRecord>,
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self {
            format_version: 1,
            files: vec![GESTURES_FILE.into(), NON_GESTURES_FILE.into()],
            channel_stats: None,
            filter: None,
            split: None,
        }
    }
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Writes gestures and non-gestures as canonical CSVs plus the manifest. Returns written paths.
pub fn save_dataset_dir(dir: &Path, dataset: &Dataset, manifest: &DatasetManifest) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let gestures: Vec<GestureWindow> = dataset.gestures().cloned().collect();
    let non_gestures: Vec<GestureWindow> = dataset.non_gestures().cloned().collect();
    let g = dir.join(GESTURES_FILE);
    let n = dir.join(NON_GESTURES_FILE);
    let m = dir.join(MANIFEST_FILE);
    csvio::write_windows(BufWriter::new(File::create(&g)?), &gestures, false)?;
    csvio::write_windows(BufWriter::new(File::create(&n)?), &non_gestures, false)?;
    let mut manifest = manifest.clone();
    if manifest.channel_stats.is_none() {
        manifest.channel_stats = dataset.stats;
    }
    std::fs::write(&m, serde_json::to_string_pretty(&manifest)?)?;
    Ok(vec![g, n, m])
}

pub fn load_dataset_dir(dir: &Path) -> Result<(Dataset, DatasetManifest)> {
    let m = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = if m.exists() {
        serde_json::from_reader(BufReader::new(File::open(&m)?))?
    } else {
        DatasetManifest::new()
    };
    let mut windows = Vec::new();
    for f in &manifest.files {
        let path = dir.join(f);
        if path.exists() {
            windows.extend(csvio::read_windows(BufReader::new(File::open(&path)?))?);
        } else {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("dataset file {} missing", path.display()),
            )));
        }
    }
    Ok((Dataset { windows, stats: manifest.channel_stats }, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_training_partition_has_unit_statistics() {
        let mut ds = generate_mini_dataset(3, 8, 5).unwrap();
        ds.stats = Some(ChannelStats::fit(ds.windows.iter()).unwrap());
        let norm = normalize(&ds).unwrap();
        let refit = ChannelStats::fit(norm.windows.iter()).unwrap();
        for c in 0..CHANNELS {
            assert!(refit.means[c].abs() < 1e-6);
            assert!((refit.stds[c] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_channel_is_rejected_by_name() {
        let mut ds = generate_mini_dataset(2, 2, 5).unwrap();
        for w in &mut ds.windows {
            w.values.column_mut(4).fill(1.0);
        }
        let err = ChannelStats::fit(ds.windows.iter()).unwrap_err();
        assert!(err.to_string().contains("gy"), "{err}");
    }

    #[test]
    fn value_at_train_mean_maps_to_zero() {
        let mut ds = generate_mini_dataset(2, 4, 5).unwrap();
        let stats = ChannelStats::fit(ds.windows.iter()).unwrap();
        ds.windows[0].values[[10, 1]] = stats.means[1];
        ds.stats = Some(stats);
        let norm = normalize(&ds).unwrap();
        assert_eq!(norm.windows[0].values[[10, 1]], 0.0);
        let back = stats.denormalize_values(&norm.windows[3].values);
        for (a, b) in back.iter().zip(ds.windows[3].values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn filtering_then_normalizing_stays_finite() {
        let ds = generate_mini_dataset(2, 6, 9).unwrap();
        let mut filtered = filter_dataset(&ds, &FilterSpec::default()).unwrap();
        filtered.stats = Some(ChannelStats::fit(filtered.windows.iter()).unwrap());
        let norm = normalize(&filtered).unwrap();
        assert!(norm.windows.iter().all(|w| w.values.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn dataset_dir_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = generate_mini_dataset(2, 3, 2).unwrap();
        ds.stats = Some(ChannelStats::fit(ds.windows.iter()).unwrap());
        save_dataset_dir(dir.path(), &ds, &DatasetManifest::new()).unwrap();
        let (back, manifest) = load_dataset_dir(dir.path()).unwrap();
        assert_eq!(manifest.channel_stats, ds.stats);
        assert_eq!(back.windows, ds.windows);
    }
}
