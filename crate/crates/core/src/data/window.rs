use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per window: 4 s at 50 Hz.
pub const WINDOW_LEN: usize = 200;
/// Accelerometer x/y/z followed by gyroscope x/y/z.
pub const CHANNELS: usize = 6;
pub const SAMPLE_RATE_HZ: f64 = 50.0;
pub const SAMPLE_PERIOD_S: f64 = 1.0 / SAMPLE_RATE_HZ;
pub const WINDOW_SECONDS: f64 = 4.0;

pub const CHANNEL_NAMES: [&str; CHANNELS] = ["ax", "ay", "az", "gx", "gy", "gz"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Gesture,
    NonGesture,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Gesture => "gesture",
            Label::NonGesture => "non_gesture",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "gesture" => Ok(Label::Gesture),
            "non_gesture" => Ok(Label::NonGesture),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

/// One 4 s, 6-channel IMU window. `values` is time-major: row `t`, column `channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureWindow {
    pub values: Array2<f64>,
    pub user_id: u32,
    pub terminal_id: Option<u8>,
    pub label: Label,
    pub order_index: u64,
}

impl GestureWindow {
    pub fn new(
        values: Array2<f64>,
        user_id: u32,
        terminal_id: Option<u8>,
        label: Label,
        order_index: u64,
    ) -> Result<Self> {
        check_window_values(&values)?;
        if let Some(t) = terminal_id {
            if !(1..=7).contains(&t) {
                return Err(Error::InvalidArgument(format!("terminal id {t} outside 1..=7")));
            }
        }
        Ok(Self { values, user_id, terminal_id, label, order_index })
    }

    /// Key identifying a window within a dataset.
    pub fn key(&self) -> WindowKey {
        WindowKey { user_id: self.user_id, label: self.label, order_index: self.order_index }
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.column(c).to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowKey {
    pub user_id: u32,
    pub label: Label,
    pub order_index: u64,
}

pub(crate) fn check_window_values(values: &Array2<f64>) -> Result<()> {
    if values.dim() != (WINDOW_LEN, CHANNELS) {
        return Err(Error::Shape(format!(
            "window must be {WINDOW_LEN}x{CHANNELS}, got {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("window contains a non-finite sample".into()));
    }
    Ok(())
}

/// Per-channel normalisation statistics (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub means: [f64; CHANNELS],
    pub stds: [f64; CHANNELS],
}

impl ChannelStats {
    /// Fits statistics over every timestep of every window given.
    pub fn fit<'a, I>(windows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a GestureWindow>,
    {
        let mut count = 0usize;
        let mut sum = [0.0; CHANNELS];
        let windows: Vec<&GestureWindow> = windows.into_iter().collect();
        for w in &windows {
            for row in w.values.rows() {
                for c in 0..CHANNELS {
                    sum[c] += row[c];
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InsufficientData("no windows to fit channel statistics".into()));
        }
        let n = count as f64;
        let means = sum.map(|s| s / n);
        let mut sq = [0.0; CHANNELS];
        for w in &windows {
            for row in w.values.rows() {
                for c in 0..CHANNELS {
                    let d = row[c] - means[c];
                    sq[c] += d * d;
                }
            }
        }
        let stds = sq.map(|s| (s / n).sqrt());
        let stats = Self { means, stds };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        for c in 0..CHANNELS {
            if !(self.stds[c] > 0.0) || !self.stds[c].is_finite() {
                return Err(Error::ZeroVariance { channel: CHANNEL_NAMES[c] });
            }
            if !self.means[c].is_finite() {
                return Err(Error::NonFinite(format!("mean of channel {}", CHANNEL_NAMES[c])));
            }
        }
        Ok(())
    }

    pub fn normalize_values(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for mut row in out.rows_mut() {
            for c in 0..CHANNELS {
                row[c] = (row[c] - self.means[c]) / self.stds[c];
            }
        }
        out
    }

    pub fn denormalize_values(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for mut row in out.rows_mut() {
            for c in 0..CHANNELS {
                row[c] = row[c] * self.stds[c] + self.means[c];
            }
        }
        out
    }
}

/// An ordered collection of windows plus the statistics used to normalise them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub windows: Vec<GestureWindow>,
    pub stats: Option<ChannelStats>,
}

impl Dataset {
    pub fn new(windows: Vec<GestureWindow>) -> Self {
        Self { windows, stats: None }
    }

    pub fn gestures(&self) -> impl Iterator<Item = &GestureWindow> {
        self.windows.iter().filter(|w| w.label == Label::Gesture)
    }

    pub fn non_gestures(&self) -> impl Iterator<Item = &GestureWindow> {
        self.windows.iter().filter(|w| w.label == Label::NonGesture)
    }

    /// Sorted, de-duplicated user ids.
    pub fn user_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.windows.iter().map(|w| w.user_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Checks `order_index` is strictly increasing within each (user, label) in storage order.
    pub fn check_ordering(&self) -> Result<()> {
        let mut last = std::collections::HashMap::new();
        for w in &self.windows {
            if let Some(prev) = last.insert((w.user_id, w.label), w.order_index) {
                if w.order_index <= prev {
                    return Err(Error::User {
                        user_id: w.user_id,
                        reason: format!(
                            "order_index {} does not increase after {} ({})",
                            w.order_index,
                            prev,
                            w.label.as_str()
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}
