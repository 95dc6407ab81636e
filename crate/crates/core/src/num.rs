//! Floating-point abstraction shared by the model code.
//!
//! Training runs in `f32` for speed; verification and the finite-difference
//! oracles instantiate the same code in `f64`. `Scalar` is the single bound
//! used throughout the model modules.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::LinalgScalar;
use num_complex::Complex;
use num_traits::{Float, FromPrimitive};
use rustfft::{Fft, FftNum, FftPlanner};

/// Element type tag stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            4 => Some(Dtype::F32),
            8 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point element usable by every layer in the model.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + FftNum
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    const DTYPE: Dtype;

    fn cast(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// In-place complex FFT of `buf` (forward or inverse, unnormalized),
    /// with planner caching per thread.
    fn fft_in_place(forward: bool, buf: &mut [Complex<Self>]);

    fn write_le_bytes(vals: &[Self], out: &mut Vec<u8>);
    fn read_le_bytes(bytes: &[u8]) -> Option<Vec<Self>>;
}

macro_rules! impl_scalar {
    ($ty:ty, $dtype:expr, $planner:ident) => {
        thread_local! {
            static $planner: RefCell<(FftPlanner<$ty>, Vec<(usize, bool, Arc<dyn Fft<$ty>>)>)> =
                RefCell::new((FftPlanner::new(), Vec::new()));
        }

        impl Scalar for $ty {
            const DTYPE: Dtype = $dtype;

            #[inline]
            fn cast(x: f64) -> Self {
                x as $ty
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn fft_in_place(forward: bool, buf: &mut [Complex<Self>]) {
                let n = buf.len();
                $planner.with(|cell| {
                    let (planner, cache) = &mut *cell.borrow_mut();
                    if let Some((_, _, fft)) =
                        cache.iter().find(|(len, fwd, _)| *len == n && *fwd == forward)
                    {
                        fft.process(buf);
                        return;
                    }
                    let fft = if forward {
                        planner.plan_fft_forward(n)
                    } else {
                        planner.plan_fft_inverse(n)
                    };
                    fft.process(buf);
                    cache.push((n, forward, fft));
                });
            }

            fn write_le_bytes(vals: &[Self], out: &mut Vec<u8>) {
                out.reserve(vals.len() * std::mem::size_of::<$ty>());
                for v in vals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }

            fn read_le_bytes(bytes: &[u8]) -> Option<Vec<Self>> {
                let w = std::mem::size_of::<$ty>();
                if bytes.len() % w != 0 {
                    return None;
                }
                Some(
                    bytes
                        .chunks_exact(w)
                        .map(|c| <$ty>::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
        }
    };
}

impl_scalar!(f32, Dtype::F32, FFT_CACHE_F32);
impl_scalar!(f64, Dtype::F64, FFT_CACHE_F64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let mut buf: Vec<Complex<f64>> = (0..17)
            .map(|i| Complex::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let orig = buf.clone();
        f64::fft_in_place(true, &mut buf);
        f64::fft_in_place(false, &mut buf);
        for (a, b) in buf.iter().zip(orig.iter()) {
            // rustfft leaves the inverse unnormalized
            assert!((a.re / 17.0 - b.re).abs() < 1e-12);
            assert!((a.im / 17.0 - b.im).abs() < 1e-12);
        }
    }

    #[test]
    fn byte_round_trip() {
        let vals = vec![1.5f32, -2.25, 0.0, f32::MIN_POSITIVE];
        let mut bytes = Vec::new();
        f32::write_le_bytes(&vals, &mut bytes);
        assert_eq!(f32::read_le_bytes(&bytes).unwrap(), vals);
    }
}
