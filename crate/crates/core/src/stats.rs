//! Summary statistics of a single series, optionally with (sub)gradients.
//!
//! Conventions: population moments; skew and excess kurtosis are 0 for a constant
//! series; quantiles interpolate linearly between order statistics; max/min ties go to
//! the first attaining index; sort ties are broken by index.

pub const FEATURE_COUNT: usize = 9;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["max", "min", "mean", "std", "var", "skew", "kurtosis", "median", "iqr"];

/// Variance below which skew and kurtosis are treated as undefined (reported as 0).
const DEGENERATE_VAR: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

pub fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    Moments { mean, m2: m2 / n, m3: m3 / n, m4: m4 / n }
}

/// Indices that sort `x` ascending, ties by index.
pub fn argsort(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    idx
}

/// Linear-interpolation quantile over an argsort; returns (value, lo index, hi index, hi weight).
fn quantile_parts(x: &[f64], order: &[usize], q: f64) -> (f64, usize, usize, f64) {
    let pos = q * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(x.len() - 1);
    let frac = pos - lo as f64;
    let (a, b) = (x[order[lo]], x[order[hi]]);
    (a + frac * (b - a), order[lo], order[hi], frac)
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    let order = argsort(x);
    quantile_parts(x, &order, q).0
}

/// Median with the even-length convention of averaging the two central order statistics.
fn median_parts(x: &[f64], order: &[usize]) -> (f64, usize, usize) {
    let n = x.len();
    if n % 2 == 1 {
        let i = order[n / 2];
        (x[i], i, i)
    } else {
        let (i, j) = (order[n / 2 - 1], order[n / 2]);
        (0.5 * (x[i] + x[j]), i, j)
    }
}

fn first_extreme(x: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if better(x[i], x[best]) {
            best = i;
        }
    }
    best
}

/// The nine differentiable features in [`FEATURE_NAMES`] order.
pub fn features(x: &[f64]) -> [f64; FEATURE_COUNT] {
    features_with_grad(x, false).0
}

/// Features plus, when requested, the gradient of each feature with respect to `x`.
pub fn features_with_grad(x: &[f64], with_grad: bool) -> ([f64; FEATURE_COUNT], Vec<Vec<f64>>) {
    assert!(!x.is_empty(), "features of an empty series");
    let n = x.len();
    let nf = n as f64;
    let imax = first_extreme(x, |a, b| a > b);
    let imin = first_extreme(x, |a, b| a < b);
    let m = moments(x);
    let degenerate = m.m2 <= DEGENERATE_VAR;
    let std = m.m2.sqrt();
    let (skew, kurt) = if degenerate {
        (0.0, 0.0)
    } else {
        (m.m3 / m.m2.powf(1.5), m.m4 / (m.m2 * m.m2) - 3.0)
    };
    let order = argsort(x);
    let (median, mi, mj) = median_parts(x, &order);
    let (q25, q25_lo, q25_hi, f25) = quantile_parts(x, &order, 0.25);
    let (q75, q75_lo, q75_hi, f75) = quantile_parts(x, &order, 0.75);
    let values = [x[imax], x[imin], m.mean, std, m.m2, skew, kurt, median, q75 - q25];
    if !with_grad {
        return (values, Vec::new());
    }

    let mut grads = vec![vec![0.0; n]; FEATURE_COUNT];
    grads[0][imax] = 1.0;
    grads[1][imin] = 1.0;
    for i in 0..n {
        let d = x[i] - m.mean;
        grads[2][i] = 1.0 / nf;
        let dm2 = 2.0 * d / nf;
        grads[4][i] = dm2;
        if !degenerate {
            grads[3][i] = d / (nf * std);
            let dm3 = 3.0 * (d * d - m.m2) / nf;
            let dm4 = 4.0 * (d * d * d - m.m3) / nf;
            grads[5][i] = dm3 / m.m2.powf(1.5) - 1.5 * m.m3 * m.m2.powf(-2.5) * dm2;
            grads[6][i] = dm4 / (m.m2 * m.m2) - 2.0 * m.m4 / (m.m2 * m.m2 * m.m2) * dm2;
        }
    }
    if mi == mj {
        grads[7][mi] = 1.0;
    } else {
        grads[7][mi] += 0.5;
        grads[7][mj] += 0.5;
    }
    grads[8][q75_lo] += 1.0 - f75;
    grads[8][q75_hi] += f75;
    grads[8][q25_lo] -= 1.0 - f25;
    grads[8][q25_hi] -= f25;
    (values, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let x = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert!((quantile(&x, 0.25) - 1.75).abs() < 1e-12);
        assert!((quantile(&x, 0.75) - 3.25).abs() < 1e-12);
        let (f, _) = features_with_grad(&x, false);
        assert_eq!(f[7], 2.5);
    }

    #[test]
    fn constant_series_has_zero_shape_features() {
        let f = features(&[2.0; 10]);
        assert_eq!(f, [2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x: Vec<f64> = (0..17).map(|i| ((i * 7919) % 23) as f64 * 0.37 - 3.0 + (i as f64).sin()).collect();
        let (_, g) = features_with_grad(&x, true);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut p = x.clone();
            let mut q = x.clone();
            p[i] += h;
            q[i] -= h;
            let (fp, fq) = (features(&p), features(&q));
            for k in 0..FEATURE_COUNT {
                let fd = (fp[k] - fq[k]) / (2.0 * h);
                assert!((fd - g[k][i]).abs() < 1e-5, "feature {k} index {i}: {fd} vs {}", g[k][i]);
            }
        }
    }
}
