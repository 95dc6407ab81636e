//! Audio frontend: padding, STFT, mel filterbank, and log-mel features.
//!
//! Everything here is computed in `f64` and is a pure function of its inputs,
//! so feature extraction is bit-reproducible and safe to run from parallel
//! workers.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Complex STFT output: `[freq_bins, frames]` with the frame geometry used
/// to produce it.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex<f64>>,
    pub frame_len: usize,
    pub hop: usize,
}

impl ComplexSpectrogram {
    pub fn freq_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Triangular mel filterbank, `[n_mels, freq_bins]`, peak-normalized to 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    pub f_max: f64,
}

/// Log-power mel feature matrix `[n_mels, frames]` (natural log).
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelFeature {
    pub values: Array2<f64>,
}

impl LogMelFeature {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    /// Convert to the model scalar type.
    pub fn to_model<S: Scalar>(&self) -> Array2<S> {
        self.values.mapv(S::cast)
    }
}

/// Pad with trailing zeros or truncate so the clip is exactly `target_s`
/// seconds long.
pub fn pad_or_trim(w: &Waveform, target_s: u32) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::invalid("cannot pad an empty waveform"));
    }
    let target = w.sample_rate as usize * target_s as usize;
    let mut samples = w.samples.clone();
    samples.resize(target, 0.0);
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// Number of analysis frames for a signal of length `len`.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> Option<usize> {
    if len < frame_len || frame_len == 0 || hop == 0 {
        return None;
    }
    Some((len - frame_len) / hop + 1)
}

fn ms_to_samples(sample_rate: u32, ms: u32) -> Result<usize> {
    let num = sample_rate as u64 * ms as u64;
    if num % 1000 != 0 {
        return Err(Error::invalid(format!(
            "{ms} ms is not an integer number of samples at {sample_rate} Hz"
        )));
    }
    Ok((num / 1000) as usize)
}

/// Periodic Hann window of length `n`.
fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Short-time Fourier transform with Hann windowing and no centering:
/// the first frame starts at sample 0.
pub fn stft(w: &Waveform, window_ms: u32, hop_ms: u32) -> Result<ComplexSpectrogram> {
    let frame_len = ms_to_samples(w.sample_rate, window_ms)?;
    let hop = ms_to_samples(w.sample_rate, hop_ms)?;
    let frames = frame_count(w.len(), frame_len, hop)
        .ok_or_else(|| Error::invalid("window longer than signal"))?;
    let bins = frame_len / 2 + 1;
    let window = hann_window(frame_len);

    let mut values = Array2::from_elem((bins, frames), Complex::new(0.0, 0.0));
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    for t in 0..frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(w.samples[start + i] * window[i], 0.0);
        }
        f64::fft_in_place(true, &mut buf);
        for k in 0..bins {
            values[[k, t]] = buf[k];
        }
    }
    Ok(ComplexSpectrogram {
        values,
        frame_len,
        hop,
    })
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0f64.powf(m / 2595.0) - 1.0)
}

/// Build the triangular mel filterbank. Filters are unnormalized (peak 1)
/// with centers equally spaced on the mel scale.
pub fn mel_filterbank(
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    freq_bins: usize,
    sample_rate: u32,
) -> Result<MelFilterbank> {
    if n_mels == 0 {
        return Err(Error::config("n_mels must be positive"));
    }
    if !(f_min < f_max && f_max <= sample_rate as f64 / 2.0) {
        return Err(Error::config(format!(
            "need f_min < f_max <= nyquist, got f_min={f_min}, f_max={f_max}, sr={sample_rate}"
        )));
    }
    if freq_bins < 2 {
        return Err(Error::config("need at least 2 frequency bins"));
    }

    let n_fft = (freq_bins - 1) * 2;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    // n_mels + 2 support points: each filter m spans (pt[m], pt[m+2]) with
    // its peak at pt[m+1]
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = Array2::zeros((n_mels, freq_bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (pts[m], pts[m + 1], pts[m + 2]);
        let mut any = false;
        for k in 0..freq_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            if w > 0.0 {
                any = true;
            }
            weights[[m, k]] = w;
        }
        if !any {
            return Err(Error::config(format!(
                "mel filter {m} has empty support: points collide onto too few bins \
                 (n_mels too large for this resolution)"
            )));
        }
    }
    Ok(MelFilterbank {
        weights,
        f_max,
    })
}

/// `ln(max(W @ |g|^2, floor))`.
pub fn log_mel(s: &ComplexSpectrogram, fb: &MelFilterbank, floor: f64) -> Result<LogMelFeature> {
    if fb.weights.ncols() != s.freq_bins() {
        return Err(Error::invalid(format!(
            "filterbank has {} bins but spectrogram has {}",
            fb.weights.ncols(),
            s.freq_bins()
        )));
    }
    let power = s.values.mapv(|c| c.norm_sqr());
    let mel = fb.weights.dot(&power);
    let values = mel.mapv(|p| p.max(floor).ln());
    Ok(LogMelFeature { values })
}

/// Full frontend for one padded clip with the standard parameters.
pub fn extract_log_mel(
    w: &Waveform,
    window_ms: u32,
    hop_ms: u32,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    floor: f64,
) -> Result<LogMelFeature> {
    let spec = stft(w, window_ms, hop_ms)?;
    let fb = mel_filterbank(n_mels, f_min, f_max, spec.freq_bins(), w.sample_rate)?;
    log_mel(&spec, &fb, floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, sr: u32, amp: f64) -> Waveform {
        let n = (secs * sr as f64).round() as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn pad_or_trim_pads_short_input_with_zeros() {
        let w = tone(440.0, 8.0, 16_000, 0.5);
        let padded = pad_or_trim(&w, 10).unwrap();
        assert_eq!(padded.len(), 160_000);
        assert!(padded.samples[128_000..].iter().all(|&s| s == 0.0));
        assert_eq!(&padded.samples[..128_000], &w.samples[..]);
    }

    #[test]
    fn pad_or_trim_identity_and_truncate() {
        let w = tone(100.0, 10.0, 16_000, 0.5);
        let out = pad_or_trim(&w, 10).unwrap();
        assert_eq!(out.samples, w.samples);

        let long = tone(100.0, 12.0, 16_000, 0.5);
        let cut = pad_or_trim(&long, 10).unwrap();
        assert_eq!(cut.len(), 160_000);
        assert_eq!(&cut.samples[..], &long.samples[..160_000]);
    }

    #[test]
    fn pad_or_trim_rejects_empty() {
        let w = Waveform::new(vec![], 16_000).unwrap();
        assert!(pad_or_trim(&w, 10).is_err());
    }

    #[test]
    fn stft_shape_matches_paper_geometry() {
        let w = pad_or_trim(&tone(440.0, 10.0, 16_000, 0.5), 10).unwrap();
        let s = stft(&w, 64, 32).unwrap();
        assert_eq!(s.frame_len, 1024);
        assert_eq!(s.hop, 512);
        assert_eq!(s.freq_bins(), 513);
        assert_eq!(s.frames(), 311);
    }

    #[test]
    fn stft_zero_input_is_zero() {
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        let s = stft(&w, 64, 32).unwrap();
        assert!(s.values.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn stft_peak_bin_for_pure_tone() {
        // 1 kHz at 16 kHz with a 1024-point window: bin = 1000/15.625 = 64
        let w = tone(1000.0, 1.0, 16_000, 0.8);
        let s = stft(&w, 64, 32).unwrap();
        for t in 0..s.frames() {
            let col = s.values.column(t);
            let (argmax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                .unwrap();
            assert_eq!(argmax, 64, "frame {t}");
        }
    }

    /// Naive O(N^2) DFT of one Hann-windowed frame.
    fn naive_frame_dft(samples: &[f64]) -> Vec<Complex<f64>> {
        let n = samples.len();
        let window = super::hann_window(n);
        let bins = n / 2 + 1;
        (0..bins)
            .map(|k| {
                let mut acc = Complex::new(0.0, 0.0);
                for (i, &x) in samples.iter().enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64;
                    acc += Complex::new(phase.cos(), phase.sin()) * (x * window[i]);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn stft_matches_naive_dft_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        // one frame exactly: 64 samples at 1 kHz -> 64 ms window
        let samples: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::new(samples.clone(), 1000).unwrap();
        let s = stft(&w, 64, 32).unwrap();
        assert_eq!(s.frames(), 1);
        let oracle = naive_frame_dft(&samples);
        let mut max_rel = 0.0f64;
        for k in 0..s.freq_bins() {
            let d = (s.values[[k, 0]] - oracle[k]).norm();
            let scale = oracle[k].norm().max(1.0);
            max_rel = max_rel.max(d / scale);
        }
        assert!(max_rel <= 1e-6, "max rel err {max_rel}");
    }

    #[test]
    fn filterbank_defaults() {
        let fb = mel_filterbank(128, 0.0, 8000.0, 513, 16_000).unwrap();
        assert_eq!(fb.weights.shape(), &[128, 513]);
        assert!(fb.weights.iter().all(|&w| w >= 0.0));
        // every row is a contiguous triangle
        for row in fb.weights.rows() {
            let first = row.iter().position(|&w| w > 0.0).unwrap();
            let last = row.iter().rposition(|&w| w > 0.0).unwrap();
            assert!(row.iter().skip(first).take(last - first + 1).all(|&w| w > 0.0));
        }
    }

    #[test]
    fn filterbank_center_frequencies_increase() {
        let fb = mel_filterbank(32, 0.0, 8000.0, 513, 16_000).unwrap();
        let centers: Vec<usize> = fb
            .weights
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect();
        for w in centers.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn filterbank_single_triangle() {
        let fb = mel_filterbank(1, 0.0, 8000.0, 513, 16_000).unwrap();
        assert_eq!(fb.weights.nrows(), 1);
        let row = fb.weights.row(0);
        assert!(row.iter().any(|&w| w > 0.0));
        // peak near the single center, support inside (0, 8000)
        let peak = row
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(peak <= 1.0 + 1e-12);
    }

    #[test]
    fn filterbank_collision_is_config_error() {
        // 2000 filters over a tiny band cannot all have support on 33 bins
        let err = mel_filterbank(2000, 0.0, 100.0, 33, 16_000);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn sine_at_center_energizes_its_own_filter_most() {
        let fb = mel_filterbank(128, 0.0, 8000.0, 513, 16_000).unwrap();
        for m in [40usize, 64, 90] {
            // recover filter m's center frequency from the mel grid
            let mel_lo = hz_to_mel(0.0);
            let mel_hi = hz_to_mel(8000.0);
            let center = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) as f64 / 129.0);
            let w = tone(center, 1.0, 16_000, 0.8);
            let s = stft(&w, 64, 32).unwrap();
            let power = s.values.mapv(|c| c.norm_sqr());
            let mel = fb.weights.dot(&power);
            let energy: Vec<f64> = mel.rows().into_iter().map(|r| r.sum()).collect();
            let argmax = energy
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, m, "center {center:.1} Hz");
        }
    }

    #[test]
    fn log_mel_floor_and_homogeneity() {
        let w = Waveform::new(vec![0.0; 160_000], 16_000).unwrap();
        let s = stft(&w, 64, 32).unwrap();
        let fb = mel_filterbank(128, 0.0, 8000.0, 513, 16_000).unwrap();
        let lm = log_mel(&s, &fb, 1e-10).unwrap();
        let expected = 1e-10f64.ln();
        assert!(lm.values.iter().all(|&v| (v - expected).abs() < 1e-12));

        // scaling power by 2 adds ln 2 above the floor
        let w2 = tone(1000.0, 10.0, 16_000, 0.5);
        let s1 = stft(&w2, 64, 32).unwrap();
        let mut s2 = s1.clone();
        s2.values.mapv_inplace(|c| c * std::f64::consts::SQRT_2);
        let a = log_mel(&s1, &fb, 1e-10).unwrap();
        let b = log_mel(&s2, &fb, 1e-10).unwrap();
        for (&x, &y) in a.values.iter().zip(b.values.iter()) {
            if x > 1e-10f64.ln() + 1e-9 {
                assert!((y - x - std::f64::consts::LN_2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn end_to_end_shape_128x311() {
        let w = pad_or_trim(&tone(777.0, 10.0, 16_000, 0.4), 10).unwrap();
        let lm = extract_log_mel(&w, 64, 32, 128, 0.0, 8000.0, 1e-10).unwrap();
        assert_eq!(lm.values.shape(), &[128, 311]);
        assert!(lm.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn determinism_bitwise() {
        let w = pad_or_trim(&tone(333.0, 10.0, 16_000, 0.3), 10).unwrap();
        let a = extract_log_mel(&w, 64, 32, 128, 0.0, 8000.0, 1e-10).unwrap();
        let b = extract_log_mel(&w, 64, 32, 128, 0.0, 8000.0, 1e-10).unwrap();
        assert_eq!(a.values, b.values);
    }
}
