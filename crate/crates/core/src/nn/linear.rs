//! Affine layer over row-major feature matrices.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::params::{Grads, Init, LayoutBuilder, ParamId, ParamStore};
use crate::num::Scalar;

/// `y = x @ w + b` where `x` is `[n, in]` and `w` is `[in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn declare(b: &mut LayoutBuilder, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = b.param(&format!("{name}.w"), &[in_dim, out_dim], Init::Normal(0.02));
        let bias = b.param(&format!("{name}.b"), &[out_dim], Init::Zeros);
        Linear {
            w,
            b: bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<S: Scalar>(&self, ps: &ParamStore<S>, x: &ArrayView2<S>) -> Array2<S> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        let mut y = x.dot(&ps.view2(self.w));
        let bias = ps.view1(self.b);
        for mut row in y.rows_mut() {
            row += &bias;
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<S: Scalar>(
        &self,
        ps: &ParamStore<S>,
        x: &ArrayView2<S>,
        gy: &ArrayView2<S>,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let gw = x.t().dot(gy);
        {
            let mut gw_acc = grads.view2_mut(&ps.layout, self.w);
            gw_acc += &gw;
        }
        {
            let gb = gy.sum_axis(Axis(0));
            let mut gb_acc = grads.view1_mut(&ps.layout, self.b);
            gb_acc += &gb;
        }
        gy.dot(&ps.view2(self.w).t())
    }

    /// Forward for a single row vector.
    pub fn forward1<S: Scalar>(&self, ps: &ParamStore<S>, x: &ndarray::ArrayView1<S>) -> Array1<S> {
        let w = ps.view2(self.w);
        let mut y = x.dot(&w);
        y += &ps.view1(self.b);
        y
    }

    /// Backward for a single row vector.
    pub fn backward1<S: Scalar>(
        &self,
        ps: &ParamStore<S>,
        x: &ndarray::ArrayView1<S>,
        gy: &ndarray::ArrayView1<S>,
        grads: &mut Grads<S>,
    ) -> Array1<S> {
        {
            let mut gw = grads.view2_mut(&ps.layout, self.w);
            for (i, &xi) in x.iter().enumerate() {
                for (j, &gj) in gy.iter().enumerate() {
                    gw[[i, j]] = gw[[i, j]] + xi * gj;
                }
            }
        }
        {
            let mut gb = grads.view1_mut(&ps.layout, self.b);
            gb += gy;
        }
        ps.view2(self.w).dot(gy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::LayoutBuilder;
    use ndarray::array;
    use std::sync::Arc;

    #[test]
    fn linear_forward_backward_fd() {
        let mut b = LayoutBuilder::new();
        b.section("t");
        let lin = Linear::declare(&mut b, "lin", 3, 2);
        let layout = Arc::new(b.finish());
        let mut ps = ParamStore::<f64>::zeros(layout.clone());
        for (i, v) in ps.data.iter_mut().enumerate() {
            *v = 0.1 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let x = array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]];
        let gy = array![[1.0, -0.5], [0.25, 2.0]];

        let mut grads = Grads::full(&layout);
        let _y = lin.forward(&ps, &x.view());
        let gx = lin.backward(&ps, &x.view(), &gy.view(), &mut grads);

        let loss = |ps: &ParamStore<f64>, x: &Array2<f64>| -> f64 {
            let y = lin.forward(ps, &x.view());
            (y * &gy).sum()
        };
        let h = 1e-6;
        for i in 0..layout.len() {
            let orig = ps.data[i];
            ps.data[i] = orig + h;
            let lp = loss(&ps, &x);
            ps.data[i] = orig - h;
            let lm = loss(&ps, &x);
            ps.data[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - grads.data[i]).abs() < 1e-7, "param {i}");
        }
        let mut xp = x.clone();
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let orig = xp[[i, j]];
                xp[[i, j]] = orig + h;
                let lp = loss(&ps, &xp);
                xp[[i, j]] = orig - h;
                let lm = loss(&ps, &xp);
                xp[[i, j]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - gx[[i, j]]).abs() < 1e-7);
            }
        }
    }
}
