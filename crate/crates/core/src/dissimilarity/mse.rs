use ndarray::ArrayView2;

use super::{check_same_shape, LossValue};
use crate::error::Result;

/// Mean squared error over all timesteps and channels.
pub fn mse(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<LossValue> {
    check_same_shape(&x, &y)?;
    let count = x.len() as f64;
    let diff = &y - &x;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let gradient = diff * (2.0 / count);
    Ok(LossValue { value, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_example() {
        let x = array![[0.0], [0.0]];
        let y = array![[1.0], [3.0]];
        let v = mse(x.view(), y.view()).unwrap();
        assert_eq!(v.value, 5.0);
        assert_eq!(v.gradient, array![[1.0], [3.0]]);
    }

    #[test]
    fn identical_is_zero() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let v = mse(x.view(), x.view()).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_mismatch_errors() {
        let x = array![[1.0, 2.0]];
        let y = array![[1.0], [2.0]];
        assert!(mse(x.view(), y.view()).is_err());
    }
}
