//! Butterworth low-pass design (bilinear transform, second-order sections)
//! and zero-phase forward-backward application.

use serde::{Deserialize, Serialize};

use super::window::{check_window_values, GestureWindow, CHANNELS, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { order: 4, cutoff_hz: 10.0, sample_rate_hz: SAMPLE_RATE_HZ }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("filter order must be at least 1".into()));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {} Hz must lie strictly between 0 and Nyquist ({} Hz)",
                self.cutoff_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }
}

/// One biquad in direct form II transposed: `b = [b0, b1, b2]`, `a = [1, a1, a2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Steady-state internal state for a constant input of 1.
    fn unit_step_state(&self) -> [f64; 2] {
        let dc = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let s2 = self.b[2] - self.a[2] * dc;
        let s1 = self.b[1] - self.a[1] * dc + s2;
        [s1, s2]
    }

    /// Complex magnitude response at normalised angular frequency `omega` (rad/sample).
    pub fn magnitude(&self, omega: f64) -> f64 {
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * omega.cos() + c[2] * (2.0 * omega).cos();
            let im = -(c[1] * omega.sin() + c[2] * (2.0 * omega).sin());
            (re * re + im * im).sqrt()
        };
        eval(&self.b) / eval(&self.a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
    /// Largest pole modulus; governs how quickly transients die out.
    pub max_pole_radius: f64,
}

impl Butterworth {
    pub fn design(spec: &FilterSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.order;
        let fs = spec.sample_rate_hz;
        // Pre-warped analogue cutoff in rad/s.
        let wc = 2.0 * fs * (std::f64::consts::PI * spec.cutoff_hz / fs).tan();
        let mut sections = Vec::new();
        let mut max_r: f64 = 0.0;

        // Analogue poles in the left half plane: wc * exp(i*pi*(2k+n+1)/(2n)), k = 0..n.
        // Conjugate pairs are k and n-1-k; the odd-order real pole is k = (n-1)/2.
        for k in 0..n / 2 {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let (pr, pi) = (wc * theta.cos(), wc * theta.sin());
            let (zr, zi) = bilinear(pr, pi, fs);
            let a1 = -2.0 * zr;
            let a2 = zr * zr + zi * zi;
            max_r = max_r.max(a2.sqrt());
            let g = (1.0 + a1 + a2) / 4.0;
            sections.push(Biquad { b: [g, 2.0 * g, g], a: [1.0, a1, a2] });
        }
        if n % 2 == 1 {
            let (z, _) = bilinear(-wc, 0.0, fs);
            max_r = max_r.max(z.abs());
            let g = (1.0 - z) / 2.0;
            sections.push(Biquad { b: [g, g, 0.0], a: [1.0, -z, 0.0] });
        }
        Ok(Self { sections, max_pole_radius: max_r })
    }

    /// Magnitude response of a single forward pass at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
        self.sections.iter().map(|s| s.magnitude(omega)).product()
    }

    fn run_forward(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        for s in &self.sections {
            let zi = s.unit_step_state();
            let mut s1 = zi[0] * x[0];
            let mut s2 = zi[1] * x[0];
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + s1;
                s1 = s.b[1] * input - s.a[1] * y + s2;
                s2 = s.b[2] * input - s.a[2] * y;
                *v = y;
            }
        }
    }

    /// Padding long enough for start-up transients to decay below 1e-12.
    fn pad_len(&self, n: usize) -> usize {
        let r = self.max_pole_radius.clamp(1e-6, 1.0 - 1e-9);
        let needed = ((1e-12f64).ln() / r.ln()).ceil() as usize + 1;
        needed.max(3 * (2 * self.sections.len() + 1)).min(n.saturating_sub(1))
    }

    /// Forward-backward filtering with odd-reflection padding at both ends.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = self.pad_len(n);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        self.run_forward(&mut ext);
        ext.reverse();
        self.run_forward(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

fn bilinear(pr: f64, pi: f64, fs: f64) -> (f64, f64) {
    // z = (2fs + s) / (2fs - s)
    let k = 2.0 * fs;
    let (nr, ni) = (k + pr, pi);
    let (dr, di) = (k - pr, -pi);
    let den = dr * dr + di * di;
    ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
}

/// Zero-phase low-pass filtering of every channel of a window.
pub fn lowpass_filter(window: &GestureWindow, spec: &FilterSpec) -> Result<GestureWindow> {
    check_window_values(&window.values)?;
    let filter = Butterworth::design(spec)?;
    let mut out = window.clone();
    for c in 0..CHANNELS {
        let filtered = filter.filtfilt(&window.channel(c));
        for (t, v) in filtered.into_iter().enumerate() {
            out.values[[t, c]] = v;
        }
    }
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filter output".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::window::{Label, WINDOW_LEN};
    use ndarray::Array2;

    /// Squared-magnitude of an order-n digital Butterworth obtained by bilinear transform.
    fn analytic_gain(order: usize, cutoff: f64, fs: f64, f: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let ratio = (pi * f / fs).tan() / (pi * cutoff / fs).tan();
        1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
    }

    fn window_with(f: impl Fn(usize, usize) -> f64) -> GestureWindow {
        let values = Array2::from_shape_fn((WINDOW_LEN, CHANNELS), |(t, c)| f(t, c));
        GestureWindow::new(values, 1, Some(1), Label::Gesture, 0).unwrap()
    }

    #[test]
    fn designed_sections_match_analytic_response() {
        for order in 1..=6 {
            let spec = FilterSpec { order, cutoff_hz: 10.0, sample_rate_hz: 50.0 };
            let bw = Butterworth::design(&spec).unwrap();
            for f in [0.0, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 24.0] {
                let got = bw.magnitude_at(f, 50.0);
                let want = analytic_gain(order, 10.0, 50.0, f);
                assert!((got - want).abs() < 1e-9, "order {order} f {f}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn constant_channel_passes_unchanged() {
        let w = window_with(|_, c| 3.5 + c as f64);
        let out = lowpass_filter(&w, &FilterSpec::default()).unwrap();
        for ((t, c), v) in out.values.indexed_iter() {
            assert!((v - (3.5 + c as f64)).abs() < 1e-10, "t={t} c={c} v={v}");
        }
    }

    #[test]
    fn nyquist_alternation_is_removed() {
        let spec = FilterSpec::default();
        let bw = Butterworth::design(&spec).unwrap();
        // forward-backward squares the single-pass magnitude
        let oracle = analytic_gain(4, 10.0, 50.0, 25.0).powi(2);
        assert!(oracle <= 0.01);
        assert!(bw.magnitude_at(25.0, 50.0).powi(2) < 1e-12);
        let w = window_with(|t, _| if t % 2 == 0 { 1.0 } else { -1.0 });
        let out = lowpass_filter(&w, &spec).unwrap();
        for t in 20..WINDOW_LEN - 20 {
            for c in 0..CHANNELS {
                assert!(out.values[[t, c]].abs() <= 0.01, "t={t}: {}", out.values[[t, c]]);
            }
        }
    }

    #[test]
    fn slow_sinusoid_is_preserved() {
        let spec = FilterSpec::default();
        let oracle = analytic_gain(4, 10.0, 50.0, 2.0).powi(2);
        assert!((1.0 - oracle).abs() < 0.05);
        let w = window_with(|t, _| (2.0 * std::f64::consts::PI * 2.0 * t as f64 / 50.0).sin());
        let out = lowpass_filter(&w, &spec).unwrap();
        for t in 20..WINDOW_LEN - 20 {
            let d = (out.values[[t, 0]] - w.values[[t, 0]]).abs();
            assert!(d <= 0.05, "t={t}: deviation {d}");
        }
    }

    #[test]
    fn time_reversal_commutes_with_filtering() {
        let bw = Butterworth::design(&FilterSpec::default()).unwrap();
        let x: Vec<f64> =
            (0..WINDOW_LEN).map(|t| ((t * 37 % 101) as f64 / 50.0 - 1.0) + (t as f64 * 0.1).sin()).collect();
        let mut rev = x.clone();
        rev.reverse();
        let a = bw.filtfilt(&rev);
        let mut b = bw.filtfilt(&x);
        b.reverse();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn rejects_bad_specs_and_nonfinite_input() {
        assert!(FilterSpec { order: 4, cutoff_hz: 25.0, sample_rate_hz: 50.0 }.validate().is_err());
        assert!(FilterSpec { order: 4, cutoff_hz: 0.0, sample_rate_hz: 50.0 }.validate().is_err());
        assert!(FilterSpec { order: 0, cutoff_hz: 5.0, sample_rate_hz: 50.0 }.validate().is_err());
        let mut w = window_with(|_, _| 0.0);
        w.values[[3, 2]] = f64::NAN;
        assert!(lowpass_filter(&w, &FilterSpec::default()).is_err());
    }
}
