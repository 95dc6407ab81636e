//! Elementwise activations and softmax primitives with explicit backward
//! passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::num::Scalar;

/// LeakyReLU forward, elementwise.
pub fn leaky_relu<S: Scalar>(x: &Array2<S>, slope: f64) -> Array2<S> {
    let a = S::cast(slope);
    x.mapv(|v| if v >= S::zero() { v } else { v * a })
}

/// Gradient of LeakyReLU given the pre-activation values.
pub fn leaky_relu_backward<S: Scalar>(pre: &Array2<S>, gy: &Array2<S>, slope: f64) -> Array2<S> {
    let a = S::cast(slope);
    let mut gx = gy.clone();
    gx.zip_mut_with(pre, |g, &p| {
        if p < S::zero() {
            *g = *g * a;
        }
    });
    gx
}

pub fn leaky_relu1<S: Scalar>(x: &Array1<S>, slope: f64) -> Array1<S> {
    let a = S::cast(slope);
    x.mapv(|v| if v >= S::zero() { v } else { v * a })
}

pub fn leaky_relu1_backward<S: Scalar>(pre: &Array1<S>, gy: &Array1<S>, slope: f64) -> Array1<S> {
    let a = S::cast(slope);
    let mut gx = gy.clone();
    gx.zip_mut_with(pre, |g, &p| {
        if p < S::zero() {
            *g = *g * a;
        }
    });
    gx
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Numerically stable softmax of a slice.
pub fn softmax_slice<S: Scalar>(x: &[S]) -> Vec<S> {
    let mx = x.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = x.iter().map(|&v| (v - mx).exp()).collect();
    let sum = exps.iter().cloned().fold(S::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Backward through softmax: given probabilities `p` and upstream `gp`,
/// returns the gradient w.r.t. the logits.
pub fn softmax_backward_slice<S: Scalar>(p: &[S], gp: &[S]) -> Vec<S> {
    let dot = p
        .iter()
        .zip(gp.iter())
        .fold(S::zero(), |acc, (&pi, &gi)| acc + pi * gi);
    p.iter()
        .zip(gp.iter())
        .map(|(&pi, &gi)| pi * (gi - dot))
        .collect()
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows<S: Scalar>(x: &ArrayView2<S>) -> Array2<S> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let mx = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Backward through a row-wise softmax.
pub fn softmax_rows_backward<S: Scalar>(p: &Array2<S>, gp: &Array2<S>) -> Array2<S> {
    let mut gx = Array2::zeros(p.raw_dim());
    for ((mut gx_row, p_row), gp_row) in gx
        .rows_mut()
        .into_iter()
        .zip(p.rows())
        .zip(gp.rows())
    {
        let dot = p_row
            .iter()
            .zip(gp_row.iter())
            .fold(S::zero(), |acc, (&pi, &gi)| acc + pi * gi);
        for ((g, &pi), &gi) in gx_row.iter_mut().zip(p_row.iter()).zip(gp_row.iter()) {
            *g = pi * (gi - dot);
        }
    }
    gx
}

/// Column-wise softmax (normalizes each column to sum 1).
pub fn softmax_cols<S: Scalar>(x: &ArrayView2<S>) -> Array2<S> {
    let mut out = x.to_owned();
    for mut col in out.columns_mut() {
        let mx = col.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in col.iter_mut() {
            *v = (*v - mx).exp();
            sum = sum + *v;
        }
        for v in col.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

pub fn softmax_cols_backward<S: Scalar>(p: &Array2<S>, gp: &Array2<S>) -> Array2<S> {
    let mut gx = Array2::zeros(p.raw_dim());
    for ((mut gx_col, p_col), gp_col) in gx
        .columns_mut()
        .into_iter()
        .zip(p.columns())
        .zip(gp.columns())
    {
        let dot = p_col
            .iter()
            .zip(gp_col.iter())
            .fold(S::zero(), |acc, (&pi, &gi)| acc + pi * gi);
        for ((g, &pi), &gi) in gx_col.iter_mut().zip(p_col.iter()).zip(gp_col.iter()) {
            *g = pi * (gi - dot);
        }
    }
    gx
}

/// log(sum(exp(x))) with the usual max shift.
pub fn logsumexp<S: Scalar>(x: &ArrayView1<S>) -> S {
    let mx = x.iter().cloned().fold(S::neg_infinity(), S::max);
    let sum = x.iter().fold(S::zero(), |acc, &v| acc + (v - mx).exp());
    mx + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_rows_are_probability_vectors() {
        let x = array![[1.0f64, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        let p = softmax_rows(&x.view());
        for row in p.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn leaky_relu_negative_slope() {
        let x = array![[-1.0f64, 2.0]];
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y, array![[-0.2, 2.0]]);
    }

    #[test]
    fn softmax_backward_matches_fd() {
        let x = vec![0.3f64, -0.7, 1.2, 0.1];
        let g = vec![0.5f64, -1.0, 0.25, 2.0];
        let p = softmax_slice(&x);
        let gx = softmax_backward_slice(&p, &g);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let f = |v: &[f64]| -> f64 {
                softmax_slice(v)
                    .iter()
                    .zip(g.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-8, "i={i} fd={fd} an={}", gx[i]);
        }
    }
}
