//! Time-domain branch: a strided 1-D convolutional encoder followed by
//! blocks of auto-correlation attention, series decomposition, and a
//! feed-forward layer. The output is added to the log-mel map to recover
//! temporal structure the mel pipeline discards.

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::nn::ops::{leaky_relu, leaky_relu_backward, softmax_slice};
use crate::nn::{Grads, Init, LayoutBuilder, Linear, ParamId, ParamStore};
use crate::num::Scalar;

/// Autocorrelation of one profile: raw scores per lag plus the top-k
/// selection and its softmax weights.
#[derive(Debug, Clone)]
pub struct AutoCorrelationProfile<S: Scalar> {
    pub scores: Vec<S>,
    pub selected_lags: Vec<usize>,
    pub weights: Vec<S>,
}

/// Number of lags to keep: `ceil(c * ln L)`, clamped to `[1, L-1]`.
pub fn default_top_k(seq_len: usize, c_factor: f64) -> usize {
    let k = (c_factor * (seq_len as f64).ln()).ceil() as usize;
    k.clamp(1, seq_len.saturating_sub(1).max(1))
}

/// Circular autocorrelation score profile between `q` and `k`, averaged
/// over channels: `R(tau) = 1/(L*C) * sum_{t,c} q[t,c] * k[(t-tau) mod L, c]`.
///
/// Computed via FFT (Wiener-Khinchin), O(C L log L).
pub fn autocorrelation_scores<S: Scalar>(q: &ArrayView2<S>, k: &ArrayView2<S>) -> Result<Vec<S>> {
    if q.dim() != k.dim() {
        return Err(Error::invalid("autocorrelation inputs must share a shape"));
    }
    let (len, channels) = q.dim();
    let mut acc = vec![Complex::new(S::zero(), S::zero()); len];
    let mut bq = vec![Complex::new(S::zero(), S::zero()); len];
    let mut bk = vec![Complex::new(S::zero(), S::zero()); len];
    for c in 0..channels {
        for t in 0..len {
            bq[t] = Complex::new(q[[t, c]], S::zero());
            bk[t] = Complex::new(k[[t, c]], S::zero());
        }
        S::fft_in_place(true, &mut bq);
        S::fft_in_place(true, &mut bk);
        for (a, (x, y)) in acc.iter_mut().zip(bq.iter().zip(bk.iter())) {
            *a = *a + *x * y.conj();
        }
    }
    S::fft_in_place(false, &mut acc);
    // unnormalized inverse contributes a factor L; the definition another L*C
    let norm = S::cast((len * len * channels) as f64);
    Ok(acc.into_iter().map(|v| v.re / norm).collect())
}

/// The `k` lags with the largest scores, lag 0 excluded, ties broken toward
/// the smaller lag. Returned in ascending lag order.
pub fn topk_lags<S: Scalar>(scores: &[S], k: usize) -> Result<Vec<usize>> {
    let len = scores.len();
    if len < 2 {
        return Err(Error::config("profile too short for lag selection"));
    }
    if k == 0 || k > len - 1 {
        return Err(Error::config(format!(
            "top-k of {k} out of range for {} lags",
            len - 1
        )));
    }
    let mut lags: Vec<usize> = (1..len).collect();
    lags.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected = lags[..k].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

/// Score profile with top-k selection and softmax weights.
pub fn compute_profile<S: Scalar>(
    q: &ArrayView2<S>,
    k_seq: &ArrayView2<S>,
    top_k: usize,
) -> Result<AutoCorrelationProfile<S>> {
    let scores = autocorrelation_scores(q, k_seq)?;
    let selected_lags = topk_lags(&scores, top_k)?;
    let picked: Vec<S> = selected_lags.iter().map(|&l| scores[l]).collect();
    let weights = softmax_slice(&picked);
    Ok(AutoCorrelationProfile {
        scores,
        selected_lags,
        weights,
    })
}

/// `Roll(v, tau)[t] = v[(t + tau) mod L]`: advance the sequence so that a
/// period-`tau` series aligns with itself.
pub fn roll<S: Scalar>(v: &ArrayView2<S>, tau: usize) -> Array2<S> {
    let (len, channels) = v.dim();
    let mut out = Array2::zeros((len, channels));
    for t in 0..len {
        let src = (t + tau) % len;
        out.row_mut(t).assign(&v.row(src));
    }
    out
}

/// Single-profile auto-correlation attention:
/// `out = sum_i softmax(R(tau_i)) * Roll(V, tau_i)`.
pub fn auto_correlation_attention<S: Scalar>(
    q: &ArrayView2<S>,
    k_seq: &ArrayView2<S>,
    v: &ArrayView2<S>,
    top_k: usize,
) -> Result<Array2<S>> {
    if q.dim() != k_seq.dim() || q.dim() != v.dim() {
        return Err(Error::invalid("attention inputs must share a shape"));
    }
    let profile = compute_profile(q, k_seq, top_k)?;
    let (len, channels) = v.dim();
    let mut out = Array2::zeros((len, channels));
    for (lag, w) in profile.selected_lags.iter().zip(profile.weights.iter()) {
        for t in 0..len {
            let src = (t + lag) % len;
            let mut row = out.row_mut(t);
            row.scaled_add(*w, &v.row(src));
        }
    }
    Ok(out)
}

/// Moving average with zero padding of `(kernel-1)/2` at both ends.
/// The operator is symmetric, so it is its own adjoint.
fn moving_average<S: Scalar>(x: &ArrayView2<S>, kernel: usize) -> Array2<S> {
    let (len, channels) = x.dim();
    let m = (kernel - 1) / 2;
    let inv = S::one() / S::cast(kernel as f64);
    let mut out = Array2::zeros((len, channels));
    let mut cum = vec![S::zero(); len + 1];
    for c in 0..channels {
        for t in 0..len {
            cum[t + 1] = cum[t] + x[[t, c]];
        }
        for t in 0..len {
            let lo = t.saturating_sub(m);
            let hi = (t + m + 1).min(len);
            out[[t, c]] = (cum[hi] - cum[lo]) * inv;
        }
    }
    out
}

/// Series decomposition: `x_s` is the zero-padded moving average, `x_l` the
/// residual, so `x_s + x_l == x` exactly.
pub fn series_decomp<S: Scalar>(
    x: &ArrayView2<S>,
    kernel: usize,
) -> Result<(Array2<S>, Array2<S>)> {
    if kernel % 2 == 0 {
        return Err(Error::config("decomposition kernel must be odd"));
    }
    if kernel > x.nrows() {
        return Err(Error::config("decomposition kernel exceeds sequence length"));
    }
    let xs = moving_average(x, kernel);
    let xl = x - &xs;
    Ok((xs, xl))
}

/// Elementwise fusion of the log-mel map `[bands, frames]` with the time
/// branch output `[frames, bands]` (transposed before adding).
pub fn fuse<S: Scalar>(x_m: &ArrayView2<S>, x_t: &ArrayView2<S>) -> Result<Array2<S>> {
    if x_m.nrows() != x_t.ncols() || x_m.ncols() != x_t.nrows() {
        return Err(Error::invalid(format!(
            "fuse shape mismatch: {:?} vs {:?}",
            x_m.dim(),
            x_t.dim()
        )));
    }
    Ok(x_m + &x_t.t())
}

/// Static configuration of the time branch.
#[derive(Debug, Clone)]
pub struct TtConfig {
    pub seq_len: usize,
    pub channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub blocks: usize,
    pub ff_hidden: usize,
    pub decomp_kernel: usize,
    pub ac_c_factor: f64,
    pub ac_heads: usize,
    pub leaky_slope: f64,
}

impl TtConfig {
    pub fn expected_input_len(&self) -> usize {
        self.conv_kernel + self.conv_stride * (self.seq_len - 1)
    }

    fn validate(&self) -> Result<()> {
        if self.channels % self.ac_heads != 0 {
            return Err(Error::config("channels must divide evenly into heads"));
        }
        if self.decomp_kernel % 2 == 0 || self.decomp_kernel > self.seq_len {
            return Err(Error::config("invalid decomposition kernel"));
        }
        Ok(())
    }
}

struct TtBlock {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    ff1: Linear,
    ff2: Linear,
}

struct HeadSelection<S: Scalar> {
    lags: Vec<usize>,
    weights: Vec<S>,
}

struct BlockTape<S: Scalar> {
    x: Array2<S>,
    q: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    heads: Vec<HeadSelection<S>>,
    x1: Array2<S>,
    z1: Array2<S>,
}

pub struct TtTape<S: Scalar> {
    wave: Vec<S>,
    blocks: Vec<BlockTape<S>>,
}

/// The full time branch with trainable parameters.
pub struct Timetoformer {
    pub cfg: TtConfig,
    conv_w: ParamId,
    conv_b: ParamId,
    blocks: Vec<TtBlock>,
}

impl Timetoformer {
    pub fn declare(b: &mut LayoutBuilder, cfg: TtConfig) -> Result<Self> {
        cfg.validate()?;
        let conv_w = b.param(
            "conv.w",
            &[cfg.conv_kernel, cfg.channels],
            Init::Normal(0.02),
        );
        let conv_b = b.param("conv.b", &[cfg.channels], Init::Zeros);
        let mut blocks = Vec::new();
        for i in 0..cfg.blocks {
            blocks.push(TtBlock {
                wq: Linear::declare(b, &format!("block{i}.wq"), cfg.channels, cfg.channels),
                wk: Linear::declare(b, &format!("block{i}.wk"), cfg.channels, cfg.channels),
                wv: Linear::declare(b, &format!("block{i}.wv"), cfg.channels, cfg.channels),
                ff1: Linear::declare(b, &format!("block{i}.ff1"), cfg.channels, cfg.ff_hidden),
                ff2: Linear::declare(b, &format!("block{i}.ff2"), cfg.ff_hidden, cfg.channels),
            });
        }
        Ok(Timetoformer {
            cfg,
            conv_w,
            conv_b,
            blocks,
        })
    }

    fn im2col<S: Scalar>(&self, wave: &[S]) -> Array2<S> {
        let (kernel, stride, len) = (self.cfg.conv_kernel, self.cfg.conv_stride, self.cfg.seq_len);
        let mut cols = Array2::zeros((len, kernel));
        for t in 0..len {
            let start = t * stride;
            cols.row_mut(t)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&wave[start..start + kernel]);
        }
        cols
    }

    /// Strided 1-D convolution of the raw waveform: `[seq_len, channels]`.
    pub fn conv_encode<S: Scalar>(&self, ps: &ParamStore<S>, wave: &[S]) -> Result<Array2<S>> {
        let expected = self.cfg.expected_input_len();
        let got = wave.len();
        let frames_ok = crate::frontend::frame_count(got, self.cfg.conv_kernel, self.cfg.conv_stride)
            == Some(self.cfg.seq_len);
        if got < expected || !frames_ok {
            return Err(Error::invalid(format!(
                "conv input of {got} samples does not produce {} frames",
                self.cfg.seq_len
            )));
        }
        let cols = self.im2col(wave);
        let mut out = cols.dot(&ps.view2(self.conv_w));
        let bias = ps.view1(self.conv_b);
        for mut row in out.rows_mut() {
            row += &bias;
        }
        Ok(out)
    }

    fn head_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let per = self.cfg.channels / self.cfg.ac_heads;
        (0..self.cfg.ac_heads)
            .map(|h| h * per..(h + 1) * per)
            .collect()
    }

    fn attention_forward<S: Scalar>(
        &self,
        q: &Array2<S>,
        k: &Array2<S>,
        v: &Array2<S>,
    ) -> Result<(Array2<S>, Vec<HeadSelection<S>>)> {
        let len = self.cfg.seq_len;
        let top_k = default_top_k(len, self.cfg.ac_c_factor);
        let mut out = Array2::zeros(v.raw_dim());
        let mut heads = Vec::new();
        for range in self.head_ranges() {
            let qs = q.slice(ndarray::s![.., range.clone()]);
            let ks = k.slice(ndarray::s![.., range.clone()]);
            let profile = compute_profile(&qs, &ks, top_k)?;
            for (lag, w) in profile.selected_lags.iter().zip(profile.weights.iter()) {
                for t in 0..len {
                    let src = (t + lag) % len;
                    let mut dst = out.slice_mut(ndarray::s![t, range.clone()]);
                    dst.scaled_add(*w, &v.slice(ndarray::s![src, range.clone()]));
                }
            }
            heads.push(HeadSelection {
                lags: profile.selected_lags,
                weights: profile.weights,
            });
        }
        Ok((out, heads))
    }

    fn attention_backward<S: Scalar>(
        &self,
        tape: &BlockTape<S>,
        g_out: &Array2<S>,
    ) -> (Array2<S>, Array2<S>, Array2<S>) {
        let len = self.cfg.seq_len;
        let mut gq = Array2::zeros(tape.q.raw_dim());
        let mut gk = Array2::zeros(tape.k.raw_dim());
        let mut gv = Array2::zeros(tape.v.raw_dim());
        for (range, sel) in self.head_ranges().into_iter().zip(tape.heads.iter()) {
            let n_ch = range.len();
            let norm = S::one() / S::cast((len * n_ch) as f64);
            // gradient w.r.t. the softmax weights
            let mut gw = vec![S::zero(); sel.lags.len()];
            for (i, lag) in sel.lags.iter().enumerate() {
                let mut acc = S::zero();
                for t in 0..len {
                    let src = (t + lag) % len;
                    for c in range.clone() {
                        acc = acc + g_out[[t, c]] * tape.v[[src, c]];
                    }
                }
                gw[i] = acc;
            }
            // through softmax to raw scores
            let dot = sel
                .weights
                .iter()
                .zip(gw.iter())
                .fold(S::zero(), |a, (&w, &g)| a + w * g);
            let gscores: Vec<S> = sel
                .weights
                .iter()
                .zip(gw.iter())
                .map(|(&w, &g)| w * (g - dot))
                .collect();
            // scores and values
            for (i, lag) in sel.lags.iter().enumerate() {
                let w = sel.weights[i];
                let gs = gscores[i] * norm;
                for t in 0..len {
                    let src = (t + lag) % len;
                    let ksrc = (t + len - lag) % len;
                    for c in range.clone() {
                        gv[[src, c]] = gv[[src, c]] + w * g_out[[t, c]];
                        // R(tau) = norm * sum q[t] k[t - tau]
                        gq[[t, c]] = gq[[t, c]] + gs * tape.k[[ksrc, c]];
                        gk[[ksrc, c]] = gk[[ksrc, c]] + gs * tape.q[[t, c]];
                    }
                }
            }
        }
        (gq, gk, gv)
    }

    /// Full forward pass from a raw (padded) waveform.
    pub fn forward<S: Scalar>(
        &self,
        ps: &ParamStore<S>,
        wave: &[S],
    ) -> Result<(Array2<S>, TtTape<S>)> {
        let mut x = self.conv_encode(ps, wave)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let q = block.wq.forward(ps, &x.view());
            let k = block.wk.forward(ps, &x.view());
            let v = block.wv.forward(ps, &x.view());
            let (att, heads) = self.attention_forward(&q, &k, &v)?;
            let a = &x + &att;
            let (_, x1) = series_decomp(&a.view(), self.cfg.decomp_kernel)?;
            let z1 = block.ff1.forward(ps, &x1.view());
            let h1 = leaky_relu(&z1, self.cfg.leaky_slope);
            let f = block.ff2.forward(ps, &h1.view());
            let b_res = &x1 + &f;
            let (_, x2) = series_decomp(&b_res.view(), self.cfg.decomp_kernel)?;
            blocks.push(BlockTape {
                x,
                q,
                k,
                v,
                heads,
                x1,
                z1,
            });
            x = x2;
        }
        let tape = TtTape {
            wave: wave.to_vec(),
            blocks,
        };
        Ok((x, tape))
    }

    /// Backward pass; accumulates parameter gradients. The waveform itself is
    /// input data, so no input gradient is produced.
    pub fn backward<S: Scalar>(
        &self,
        ps: &ParamStore<S>,
        tape: &TtTape<S>,
        g_out: &Array2<S>,
        grads: &mut Grads<S>,
    ) {
        let mut g = g_out.clone();
        for (block, bt) in self.blocks.iter().zip(tape.blocks.iter()).rev() {
            // decomp2 residual-part adjoint
            let g_b = &g - &moving_average(&g.view(), self.cfg.decomp_kernel);
            // b = x1 + ff(x1)
            let h1 = leaky_relu(&bt.z1, self.cfg.leaky_slope);
            let gh1 = block.ff2.backward(ps, &h1.view(), &g_b.view(), grads);
            let gz1 = leaky_relu_backward(&bt.z1, &gh1, self.cfg.leaky_slope);
            let mut gx1 = block.ff1.backward(ps, &bt.x1.view(), &gz1.view(), grads);
            gx1 += &g_b;
            // decomp1 adjoint
            let ga = &gx1 - &moving_average(&gx1.view(), self.cfg.decomp_kernel);
            // a = x + attention
            let (gq, gk, gv) = self.attention_backward(bt, &ga);
            let mut gx = block.wq.backward(ps, &bt.x.view(), &gq.view(), grads);
            gx += &block.wk.backward(ps, &bt.x.view(), &gk.view(), grads);
            gx += &block.wv.backward(ps, &bt.x.view(), &gv.view(), grads);
            gx += &ga;
            g = gx;
        }
        // conv: dW = cols^T  g, db = column sums
        let cols = self.im2col(&tape.wave);
        let gw = cols.t().dot(&g);
        {
            let mut acc = grads.view2_mut(&ps.layout, self.conv_w);
            acc += &gw;
        }
        {
            let gb = g.sum_axis(Axis(0));
            let mut acc = grads.view1_mut(&ps.layout, self.conv_b);
            acc += &gb;
        }
    }
}
