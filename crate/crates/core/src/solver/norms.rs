//! Group norms and the joint-sparsity proximal operator.
//!
//! Arrays are laid out `[pixels x measurements]`: row `r` holds pixel `r`
//! across all measurements, and the l2,1 group is one such row.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis, Zip};

/// Sum over pixels of the Euclidean norm across measurements.
pub fn norm_l21(a: ArrayView2<'_, f64>) -> f64 {
    a.axis_iter(Axis(0))
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}

pub fn norm_fro(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Group soft threshold followed by uniform shrinkage:
/// `p[r, m] = max(0, 1 - lambda_21 / ||l[r, :]||) * l[r, m] / (1 + lambda_2)`.
/// Rows with zero norm map to zero.
pub fn prox_l21_l2(l: ArrayView2<'_, f64>, lambda_21: f64, lambda_2: f64) -> Array2<f64> {
    let mut out = l.to_owned();
    prox_l21_l2_inplace(out.view_mut(), lambda_21, lambda_2);
    out
}

pub fn prox_l21_l2_inplace(mut l: ArrayViewMut2<'_, f64>, lambda_21: f64, lambda_2: f64) {
    let shrink = 1.0 / (1.0 + lambda_2);
    Zip::from(l.rows_mut()).par_for_each(|mut row| {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 {
            (1.0 - lambda_21 / norm).max(0.0) * shrink
        } else {
            0.0
        };
        row.mapv_inplace(|v| v * scale);
    });
}
