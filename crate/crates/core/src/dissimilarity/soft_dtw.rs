use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_same_shape, LossValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftDtwConfig {
    gamma: f64,
}

impl SoftDtwConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("soft-DTW gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for SoftDtwConfig {
    fn default() -> Self {
        Self { gamma: 0.1 }
    }
}

fn softmin3(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let m = a.min(b).min(c);
    if m == f64::INFINITY {
        return m;
    }
    let s = (-(a - m) / gamma).exp() + (-(b - m) / gamma).exp() + (-(c - m) / gamma).exp();
    m - gamma * s.ln()
}

/// Soft-DTW between two single-channel series (squared cost) and its gradient w.r.t. `y`.
pub fn soft_dtw_series(x: &[f64], y: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let (m, n) = (x.len(), y.len());
    let w = n + 2;
    let idx = |i: usize, j: usize| i * w + j;
    // cost matrix padded with a zero border at m+1 / n+1
    let mut d = vec![0.0; (m + 2) * w];
    for i in 1..=m {
        for j in 1..=n {
            let diff = x[i - 1] - y[j - 1];
            d[idx(i, j)] = diff * diff;
        }
    }
    let mut r = vec![f64::INFINITY; (m + 2) * w];
    r[idx(0, 0)] = 0.0;
    for i in 1..=m {
        for j in 1..=n {
            r[idx(i, j)] = d[idx(i, j)]
                + softmin3(r[idx(i - 1, j)], r[idx(i, j - 1)], r[idx(i - 1, j - 1)], gamma);
        }
    }
    let value = r[idx(m, n)];

    // backward pass over the smoothed alignment
    for i in 1..=m {
        r[idx(i, n + 1)] = f64::NEG_INFINITY;
    }
    for j in 1..=n {
        r[idx(m + 1, j)] = f64::NEG_INFINITY;
    }
    r[idx(m + 1, n + 1)] = r[idx(m, n)];
    let mut e = vec![0.0; (m + 2) * w];
    e[idx(m + 1, n + 1)] = 1.0;
    for j in (1..=n).rev() {
        for i in (1..=m).rev() {
            let rij = r[idx(i, j)];
            let a = ((r[idx(i + 1, j)] - rij - d[idx(i + 1, j)]) / gamma).exp();
            let b = ((r[idx(i, j + 1)] - rij - d[idx(i, j + 1)]) / gamma).exp();
            let c = ((r[idx(i + 1, j + 1)] - rij - d[idx(i + 1, j + 1)]) / gamma).exp();
            e[idx(i, j)] = e[idx(i + 1, j)] * a + e[idx(i, j + 1)] * b + e[idx(i + 1, j + 1)] * c;
        }
    }
    let mut grad = vec![0.0; n];
    for j in 1..=n {
        let mut g = 0.0;
        for i in 1..=m {
            g += e[idx(i, j)] * 2.0 * (y[j - 1] - x[i - 1]);
        }
        grad[j - 1] = g;
    }
    (value, grad)
}

/// Channel-separable soft-DTW: the per-channel values are summed.
pub fn soft_dtw(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: SoftDtwConfig) -> Result<LossValue> {
    check_same_shape(&x, &y)?;
    let mut gradient = Array2::zeros(y.dim());
    let mut value = 0.0;
    for c in 0..x.ncols() {
        let xs = x.column(c).to_vec();
        let ys = y.column(c).to_vec();
        let (v, g) = soft_dtw_series(&xs, &ys, cfg.gamma);
        value += v;
        for (t, gv) in g.into_iter().enumerate() {
            gradient[[t, c]] = gv;
        }
    }
    Ok(LossValue { value, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissimilarity::dtw;
    use ndarray::array;

    #[test]
    fn length_one_identical_is_zero() {
        let x = array![[1.5]];
        assert_eq!(soft_dtw(x.view(), x.view(), SoftDtwConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn small_gamma_approaches_dtw() {
        let (v, _) = soft_dtw_series(&[0.0, 1.0, 2.0], &[0.0, 2.0], 1e-4);
        assert!((v - 1.0).abs() < 1e-3, "{v}");
        assert!(v <= dtw(&[0.0, 1.0, 2.0], &[0.0, 2.0], None).unwrap());
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        assert!(SoftDtwConfig::new(0.0).is_err());
        assert!(SoftDtwConfig::new(-1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = [0.3, -1.2, 0.8, 1.9, -0.4];
        let y = [0.1, -0.7, 1.1, 1.4, 0.2, -0.9];
        let (_, g) = soft_dtw_series(&x, &y, 0.1);
        for j in 0..y.len() {
            let mut p = y;
            let mut q = y;
            p[j] += 1e-6;
            q[j] -= 1e-6;
            let fd = (soft_dtw_series(&x, &p, 0.1).0 - soft_dtw_series(&x, &q, 0.1).0) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-6 * (1.0 + fd.abs()), "{j}: {fd} vs {}", g[j]);
        }
    }
}
