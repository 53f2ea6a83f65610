//! Short-time Fourier analysis/synthesis and the ideal-ratio-mask oracle.
//!
//! Analysis and synthesis both use a square-root Hann window (a
//! perfect-reconstruction pair); synthesis divides by the accumulated
//! squared-window sum, so `istft(stft(x))` reproduces `x` wherever the
//! window cover is nonzero. The transform is an iterative radix-2 FFT, which
//! is why frame lengths must be powers of two.

use alloc::vec::Vec;
use num_complex::Complex;

use crate::error::invalid;
use crate::scalar::Scalar;
use crate::Result;

/// Denominator floor for silent time-frequency bins.
pub const IRM_EPS: f64 = 1e-12;

/// In-place radix-2 FFT. `inverse` applies the conjugate transform and the
/// `1/n` factor.
pub fn fft_in_place<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(invalid("fft", alloc::format!("length {n} is not a power of two")));
    }
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * core::f64::consts::PI / len as f64;
        let w_step = Complex::new(T::from_f64(ang.cos()), T::from_f64(ang.sin()));
        for start in (0..n).step_by(len) {
            let mut w = Complex::new(T::one(), T::zero());
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
                w = w * w_step;
            }
        }
        len <<= 1;
    }
    if inverse {
        let inv_n = T::from_f64(1.0 / n as f64);
        for v in buf.iter_mut() {
            *v = Complex::new(v.re * inv_n, v.im * inv_n);
        }
    }
    Ok(())
}

/// Square-root of a periodic Hann window.
fn sqrt_hann<T: Scalar>(len: usize) -> Vec<T> {
    (0..len)
        .map(|i| {
            let h = 0.5 * (1.0 - (2.0 * core::f64::consts::PI * i as f64 / len as f64).cos());
            T::from_f64(h.sqrt())
        })
        .collect()
}

/// Complex spectrogram: `n_frames x n_bins` with the geometry needed for
/// inversion.
#[derive(Debug, Clone)]
pub struct Spectrogram<T> {
    frame: usize,
    hop: usize,
    n_bins: usize,
    n_frames: usize,
    input_len: usize,
    /// Row-major `[n_frames, n_bins]`.
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// `frame/2 + 1` bins of the real-input transform.
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn at(&self, frame: usize, bin: usize) -> Complex<T> {
        self.data[frame * self.n_bins + bin]
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    /// Total squared magnitude.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.re.to_f64().powi(2) + c.im.to_f64().powi(2)).sum()
    }
}

fn validate_geometry(frame: usize, hop: usize) -> Result<()> {
    if !frame.is_power_of_two() || frame < 2 {
        return Err(invalid("stft", alloc::format!("frame length {frame} must be a power of two")));
    }
    if hop == 0 || hop > frame {
        return Err(invalid("stft", "need 0 < hop <= frame"));
    }
    Ok(())
}

/// Analyze a signal with a square-root Hann window. Frames start every
/// `hop` samples from 0; the tail is zero-padded so every frame is full.
pub fn stft<T: Scalar>(signal: &[T], frame: usize, hop: usize) -> Result<Spectrogram<T>> {
    validate_geometry(frame, hop)?;
    if signal.is_empty() {
        return Err(invalid("stft", "empty signal"));
    }
    let n_frames = signal.len().div_ceil(hop);
    let n_bins = frame / 2 + 1;
    let window: Vec<T> = sqrt_hann(frame);
    let mut data = Vec::with_capacity(n_frames * n_bins);
    let mut buf = alloc::vec![Complex::new(T::zero(), T::zero()); frame];
    for f in 0..n_frames {
        for (i, b) in buf.iter_mut().enumerate() {
            let t = f * hop + i;
            let x = if t < signal.len() { signal[t] } else { T::zero() };
            *b = Complex::new(x * window[i], T::zero());
        }
        fft_in_place(&mut buf, false)?;
        data.extend_from_slice(&buf[..n_bins]);
    }
    Ok(Spectrogram { frame, hop, n_bins, n_frames, input_len: signal.len(), data })
}

/// Synthesize a signal from a spectrogram: inverse transform per frame,
/// square-root Hann synthesis window, overlap-add, and division by the
/// accumulated squared-window sum. Output length equals the analyzed
/// signal's length.
pub fn istft<T: Scalar>(spec: &Spectrogram<T>) -> Result<Vec<T>> {
    let frame = spec.frame;
    let hop = spec.hop;
    validate_geometry(frame, hop)?;
    let window: Vec<T> = sqrt_hann(frame);
    let full_len = (spec.n_frames - 1) * hop + frame;
    let mut acc = alloc::vec![T::zero(); full_len];
    let mut wsum = alloc::vec![T::zero(); full_len];
    let mut buf = alloc::vec![Complex::new(T::zero(), T::zero()); frame];
    for f in 0..spec.n_frames {
        // Rebuild the full conjugate-symmetric spectrum from the real-input
        // half.
        for k in 0..spec.n_bins {
            buf[k] = spec.at(f, k);
        }
        for k in spec.n_bins..frame {
            buf[k] = spec.at(f, frame - k).conj();
        }
        fft_in_place(&mut buf, true)?;
        for i in 0..frame {
            let t = f * hop + i;
            acc[t] = acc[t] + buf[i].re * window[i];
            wsum[t] = wsum[t] + window[i] * window[i];
        }
    }
    let floor = T::from_f64(1e-12);
    let mut out = Vec::with_capacity(spec.input_len);
    for t in 0..spec.input_len {
        out.push(if wsum[t] > floor { acc[t] / wsum[t] } else { T::zero() });
    }
    Ok(out)
}

/// Ideal-ratio masks from the sources' spectrograms: each source's magnitude
/// share of the summed magnitudes per bin. The flooring keeps every mask in
/// `[0, 1]` and makes them sum to one even in silent bins.
pub fn irm_masks<T: Scalar>(sources: &[Spectrogram<T>]) -> Result<Vec<Vec<T>>> {
    if sources.is_empty() {
        return Err(invalid("irm", "no sources"));
    }
    let n = sources[0].data.len();
    if sources.iter().any(|s| s.data.len() != n) {
        return Err(invalid("irm", "source spectrograms disagree on geometry"));
    }
    let s_count = sources.len() as f64;
    let mut masks = alloc::vec![alloc::vec![T::zero(); n]; sources.len()];
    for bin in 0..n {
        let mags: Vec<f64> = sources
            .iter()
            .map(|s| {
                let c = s.data[bin];
                (c.re.to_f64().powi(2) + c.im.to_f64().powi(2)).sqrt()
            })
            .collect();
        let denom: f64 = mags.iter().sum::<f64>() + IRM_EPS;
        for (si, m) in mags.iter().enumerate() {
            masks[si][bin] = T::from_f64((m + IRM_EPS / s_count) / denom);
        }
    }
    Ok(masks)
}

/// Oracle separation: ideal-ratio masks applied to the mixture's
/// spectrogram with the mixture phase retained, then inverse-transformed.
pub fn irm_oracle<T: Scalar>(
    mixture: &[T],
    sources: &[&[T]],
    frame: usize,
    hop: usize,
) -> Result<Vec<Vec<T>>> {
    if sources.iter().any(|s| s.len() != mixture.len()) {
        return Err(invalid("irm", "sources and mixture must have equal length"));
    }
    let mix_spec = stft(mixture, frame, hop)?;
    let src_specs: Vec<Spectrogram<T>> =
        sources.iter().map(|s| stft(s, frame, hop)).collect::<Result<_>>()?;
    let masks = irm_masks(&src_specs)?;
    let mut out = Vec::with_capacity(sources.len());
    for mask in &masks {
        let data: Vec<Complex<T>> = mix_spec
            .data
            .iter()
            .zip(mask.iter())
            .map(|(c, &m)| Complex::new(c.re * m, c.im * m))
            .collect();
        let masked = Spectrogram { data, ..mix_spec.clone() };
        out.push(istft(&masked)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fft_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64;
        let input: Vec<Complex<f64>> =
            (0..n).map(|_| Complex::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))).collect();
        let mut fast = input.clone();
        fft_in_place(&mut fast, false).unwrap();
        for k in 0..n {
            let mut acc = Complex::new(0.0, 0.0);
            for (t, x) in input.iter().enumerate() {
                let ang = -2.0 * core::f64::consts::PI * (k * t) as f64 / n as f64;
                acc += x * Complex::new(ang.cos(), ang.sin());
            }
            assert!((fast[k] - acc).norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn fft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input: Vec<Complex<f64>> =
            (0..128).map(|_| Complex::new(rng.random_range(-1.0..=1.0), 0.0)).collect();
        let mut buf = input.clone();
        fft_in_place(&mut buf, false).unwrap();
        fft_in_place(&mut buf, true).unwrap();
        for (a, b) in buf.iter().zip(input.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn non_power_of_two_frame_rejected() {
        let signal = alloc::vec![0.5f64; 100];
        assert!(stft(&signal, 100, 50).is_err());
        assert!(stft(&signal, 96, 48).is_err());
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let spec = stft(&alloc::vec![0.0f64; 500], 256, 128).unwrap();
        assert!(spec.data().iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }

    #[test]
    fn sinusoid_at_bin_center_concentrates() {
        let frame = 256;
        let bin = 16usize;
        let n = 2048;
        let signal: Vec<f64> = (0..n)
            .map(|t| (2.0 * core::f64::consts::PI * bin as f64 * t as f64 / frame as f64).sin())
            .collect();
        let spec = stft(&signal, frame, 128).unwrap();
        // Pick an interior frame fully inside the signal. The analysis
        // window spreads a bin-center tone over its immediate neighbours, so
        // concentration is measured on the 3-bin neighbourhood.
        let f = 4;
        let total: f64 = (0..spec.n_bins()).map(|k| spec.at(f, k).norm_sqr()).sum();
        let neighbourhood: f64 =
            (bin - 1..=bin + 1).map(|k| spec.at(f, k).norm_sqr()).sum();
        assert!(neighbourhood / total > 0.99, "share {}", neighbourhood / total);
        let argmax = (0..spec.n_bins()).max_by(|&a, &b| {
            spec.at(f, a).norm_sqr().partial_cmp(&spec.at(f, b).norm_sqr()).unwrap()
        });
        assert_eq!(argmax, Some(bin));
    }

    #[test]
    fn stft_round_trip_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let signal: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let spec = stft(&signal, 256, 128).unwrap();
        let back = istft(&spec).unwrap();
        assert_eq!(back.len(), n);
        for t in 128..n - 128 {
            assert!((back[t] - signal[t]).abs() < 1e-6, "sample {t}");
        }
    }

    #[test]
    fn irm_masks_form_a_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s1: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let s2: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let spec1 = stft(&s1, 256, 128).unwrap();
        let spec2 = stft(&s2, 256, 128).unwrap();
        let masks = irm_masks(&[spec1, spec2]).unwrap();
        for bin in 0..masks[0].len() {
            let a = masks[0][bin];
            let b = masks[1][bin];
            assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            assert!((a + b - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn silent_source_gets_zero_mask_and_other_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s1: Vec<f64> = (0..2000).map(|_| rng.random_range(-0.9..=0.9)).collect();
        let s2 = alloc::vec![0.0f64; 2000];
        let mixture = s1.clone();
        let out = irm_oracle(&mixture, &[&s1, &s2], 256, 128).unwrap();
        // Nonzero source reconstructs to within STFT round-trip error.
        for t in 128..2000 - 128 {
            assert!((out[0][t] - s1[t]).abs() < 1e-6);
            assert!(out[1][t].abs() < 1e-6);
        }
    }
}
