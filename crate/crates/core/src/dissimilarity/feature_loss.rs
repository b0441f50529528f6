use ndarray::{Array2, ArrayView2};

use super::{check_same_shape, LossValue};
use crate::error::Result;
use crate::stats::{features, features_with_grad, FEATURE_COUNT};

/// Squared Euclidean distance between the nine-feature summaries of each channel, summed.
pub fn feature_loss(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<LossValue> {
    check_same_shape(&x, &y)?;
    let mut gradient = Array2::zeros(y.dim());
    let mut value = 0.0;
    for c in 0..x.ncols() {
        let fx = features(&x.column(c).to_vec());
        let (fy, grads) = features_with_grad(&y.column(c).to_vec(), true);
        for k in 0..FEATURE_COUNT {
            let d = fy[k] - fx[k];
            value += d * d;
            if d != 0.0 {
                for (t, g) in grads[k].iter().enumerate() {
                    gradient[[t, c]] += 2.0 * d * g;
                }
            }
        }
    }
    Ok(LossValue { value, gradient })
}
