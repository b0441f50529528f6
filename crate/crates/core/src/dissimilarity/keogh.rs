use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2, Ix1};

use super::{check_same_shape, LossValue};
use crate::error::{Error, Result};

/// Upper/lower running extrema of a series over `[i - w, i + w]` (clamped to the series).
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub half_width: usize,
}

fn running_extreme(x: &[f64], w: usize, keep: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for i in 0..n {
        let right = i.saturating_add(w).min(n - 1);
        while next <= right {
            while let Some(&back) = dq.back() {
                if keep(x[next], x[back]) {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(next);
            next += 1;
        }
        let left = i.saturating_sub(w);
        while let Some(&front) = dq.front() {
            if front < left {
                dq.pop_front();
            } else {
                break;
            }
        }
        out.push(x[*dq.front().expect("window is never empty")]);
    }
    out
}

pub fn envelope(x: &[f64], half_width: usize) -> Result<Envelope> {
    if half_width < 1 {
        return Err(Error::InvalidArgument("envelope half-width must be at least 1".into()));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("envelope of an empty series".into()));
    }
    Ok(Envelope {
        upper: running_extreme(x, half_width, |new, old| new >= old),
        lower: running_extreme(x, half_width, |new, old| new <= old),
        half_width,
    })
}

impl Envelope {
    /// Keogh's bound of `y` against this envelope, with its gradient w.r.t. `y`.
    pub fn bound(&self, y: &[f64]) -> Result<LossValue<Ix1>> {
        if y.len() != self.upper.len() {
            return Err(Error::Shape(format!(
                "series length {} vs envelope length {}",
                y.len(),
                self.upper.len()
            )));
        }
        let mut value = 0.0;
        let mut gradient = Array1::zeros(y.len());
        self.accumulate(y, 1.0, &mut value, gradient.as_slice_mut().expect("contiguous"), 1);
        Ok(LossValue { value, gradient })
    }

    /// Adds `weight * bound` to `value` and its gradient into `grad` (read with `stride`).
    fn accumulate(&self, y: &[f64], weight: f64, value: &mut f64, grad: &mut [f64], stride: usize) {
        for (i, &yi) in y.iter().enumerate() {
            let (u, l) = (self.upper[i], self.lower[i]);
            if yi > u {
                let d = yi - u;
                *value += weight * d * d;
                grad[i * stride] += weight * 2.0 * d;
            } else if yi < l {
                let d = yi - l;
                *value += weight * d * d;
                grad[i * stride] += weight * 2.0 * d;
            }
        }
    }
}

/// Keogh's lower bound of DTW with squared cost: distance from `y` to `x`'s envelope.
pub fn keogh_lb(x: &[f64], y: &[f64], half_width: usize) -> Result<LossValue<Ix1>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    envelope(x, half_width)?.bound(y)
}

/// Half-widths combined by KLB-mod, weighted 5, 4, 3, 2, 1.
pub const KLB_WIDTHS: [usize; 5] = [2, 4, 8, 16, 32];

fn klb_weight(k: usize) -> f64 {
    (5 - k) as f64
}

/// Envelopes of a reference matrix at every KLB-mod width, reusable across reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct KlbEnvelopes {
    /// `channels[c][k]` is the envelope of channel `c` at `KLB_WIDTHS[k]`.
    pub channels: Vec<Vec<Envelope>>,
    pub len: usize,
}

impl KlbEnvelopes {
    pub fn new(x: ArrayView2<f64>) -> Result<Self> {
        let channels = (0..x.ncols())
            .map(|c| {
                let col = x.column(c).to_vec();
                KLB_WIDTHS.iter().map(|&w| envelope(&col, w)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels, len: x.nrows() })
    }
}

/// Weighted multi-width Keogh bound, summed over channels.
pub fn klb_mod(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<LossValue> {
    check_same_shape(&x, &y)?;
    klb_mod_with_envelopes(&KlbEnvelopes::new(x)?, y)
}

pub fn klb_mod_with_envelopes(env: &KlbEnvelopes, y: ArrayView2<f64>) -> Result<LossValue> {
    if y.nrows() != env.len || y.ncols() != env.channels.len() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs reference ({}, {})",
            y.dim(),
            env.len,
            env.channels.len()
        )));
    }
    let (rows, cols) = y.dim();
    let mut grad = vec![0.0; rows * cols];
    let mut value = 0.0;
    for (c, envs) in env.channels.iter().enumerate() {
        let col = y.column(c).to_vec();
        for (k, e) in envs.iter().enumerate() {
            e.accumulate(&col, klb_weight(k), &mut value, &mut grad[c..], cols);
        }
    }
    let gradient = Array2::from_shape_vec((rows, cols), grad).expect("shape matches");
    Ok(LossValue { value, gradient })
}
