//! Learned waveform front-end: a strided 1-D convolution with PReLU maps
//! waveform channels to a feature sequence, and a frame-wise linear map with
//! overlap-add takes masked features back to waveforms.
//!
//! The encoder has no bias; the decoder is a plain `[window x filters]`
//! matrix shared across sources and frames. Overlap-add uses a raw sum.

use alloc::vec::Vec;

use crate::error::{invalid, CoreError};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Result;

/// Encoder/decoder geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrontendConfig {
    /// Window length in samples.
    pub window: usize,
    /// Hop between frames in samples.
    pub stride: usize,
    /// Number of encoder filters (feature channels).
    pub n_filters: usize,
    /// Waveform channels entering the encoder.
    pub in_channels: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig { window: 2, stride: 1, n_filters: 64, in_channels: 1 }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.window {
            return Err(invalid("frontend", "need 0 < stride <= window"));
        }
        if self.n_filters == 0 || self.in_channels == 0 {
            return Err(invalid("frontend", "need n_filters > 0 and in_channels > 0"));
        }
        Ok(())
    }

    /// Frame count for an input of `t` samples, with end padding so every
    /// frame is full: `ceil((t - window) / stride) + 1`.
    pub fn n_frames(&self, t: usize) -> Result<usize> {
        if t < self.window {
            return Err(invalid(
                "frontend",
                alloc::format!("input length {t} shorter than window {}", self.window),
            ));
        }
        Ok((t - self.window).div_ceil(self.stride) + 1)
    }
}

/// Frame geometry recorded by the encoder so the decoder can invert it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    pub window: usize,
    pub stride: usize,
    /// Original waveform length before end padding.
    pub input_len: usize,
}

/// Encoder output: `channels x frames` features plus frame geometry.
#[derive(Debug, Clone)]
pub struct FeatureMap<T> {
    channels: usize,
    frames: usize,
    geometry: Option<FrameGeometry>,
    /// Row-major `[frames, channels]`.
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn from_parts(
        channels: usize,
        frames: usize,
        geometry: Option<FrameGeometry>,
        data: Vec<T>,
    ) -> Self {
        debug_assert_eq!(data.len(), channels * frames);
        FeatureMap { channels, frames, geometry, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn geometry(&self) -> Option<FrameGeometry> {
        self.geometry
    }

    /// Value at `(channel, frame)`.
    pub fn at(&self, channel: usize, frame: usize) -> T {
        self.data[frame * self.channels + channel]
    }

    pub(crate) fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(alloc::vec![self.frames, self.channels], self.data.clone())
            .expect("feature map data consistent by construction")
    }
}

/// Graph builder for the encoder. `input` is `[in_channels, T]`; `kernel` is
/// `[n_filters, in_channels, window]`; `slopes` holds one PReLU slope per
/// filter. Returns the `[frames, n_filters]` feature node.
pub fn encode_var<T: Scalar>(
    g: &Graph<T>,
    input: Var,
    cfg: &FrontendConfig,
    kernel: Var,
    slopes: Var,
) -> Result<Var> {
    cfg.validate()?;
    let in_shape = g.shape_of(input);
    if in_shape.len() != 2 || in_shape[0] != cfg.in_channels {
        return Err(CoreError::ShapeMismatch {
            op: "encode",
            lhs: in_shape,
            rhs: alloc::vec![cfg.in_channels, 0],
        });
    }
    let k_shape = g.shape_of(kernel);
    if k_shape != [cfg.n_filters, cfg.in_channels, cfg.window] {
        return Err(CoreError::ShapeMismatch {
            op: "encode",
            lhs: k_shape,
            rhs: alloc::vec![cfg.n_filters, cfg.in_channels, cfg.window],
        });
    }
    let frames = cfg.n_frames(in_shape[1])?;
    let cols = g.im2col(input, cfg.window, cfg.stride, frames)?;
    let k2 = g.reshape(kernel, alloc::vec![cfg.n_filters, cfg.in_channels * cfg.window])?;
    let kt = g.permute(k2, &[1, 0])?;
    let lin = g.matmul(cols, kt)?;
    g.prelu(lin, slopes, 1)
}

/// Graph builder for the decoder. `features` is `[frames, n_filters]`; `fc`
/// is the `[window, n_filters]` output matrix. Overlap-adds frames at
/// `stride` and truncates to `out_len` samples.
pub fn decode_var<T: Scalar>(
    g: &Graph<T>,
    features: Var,
    fc: Var,
    stride: usize,
    out_len: usize,
) -> Result<Var> {
    let f_shape = g.shape_of(features);
    let fc_shape = g.shape_of(fc);
    if f_shape.len() != 2 || fc_shape.len() != 2 || fc_shape[1] != f_shape[1] {
        return Err(CoreError::ShapeMismatch { op: "decode", lhs: f_shape, rhs: fc_shape });
    }
    let fct = g.permute(fc, &[1, 0])?;
    let frames_w = g.matmul(features, fct)?;
    g.overlap_add(frames_w, stride, out_len)
}

/// Encode waveform channels into a [`FeatureMap`].
///
/// `kernel` is `[n_filters, in_channels, window]`, `slopes` one PReLU slope
/// per filter.
pub fn encode<T: Scalar>(
    waves: &[&[T]],
    cfg: &FrontendConfig,
    kernel: &Tensor<T>,
    slopes: &Tensor<T>,
) -> Result<FeatureMap<T>> {
    cfg.validate()?;
    if waves.len() != cfg.in_channels {
        return Err(invalid(
            "encode",
            alloc::format!("expected {} input channels, got {}", cfg.in_channels, waves.len()),
        ));
    }
    let t = waves.first().map(|w| w.len()).unwrap_or(0);
    if waves.iter().any(|w| w.len() != t) {
        return Err(invalid("encode", "input channels have different lengths"));
    }
    let g: Graph<T> = Graph::new();
    let mut stacked = Vec::with_capacity(cfg.in_channels * t);
    for w in waves {
        stacked.extend_from_slice(w);
    }
    let input = g.constant(Tensor::new(alloc::vec![cfg.in_channels, t], stacked)?);
    let k = g.constant(kernel.clone());
    let s = g.constant(slopes.clone());
    let out = encode_var(&g, input, cfg, k, s)?;
    let value = g.value(out);
    let frames = cfg.n_frames(t)?;
    Ok(FeatureMap::from_parts(
        cfg.n_filters,
        frames,
        Some(FrameGeometry { window: cfg.window, stride: cfg.stride, input_len: t }),
        value.data().to_vec(),
    ))
}

/// Decode masked feature maps back to waveforms, one per source. `fc` is the
/// shared `[window, n_filters]` matrix. Output lengths equal the encoder's
/// original input length.
pub fn decode<T: Scalar>(sources: &[FeatureMap<T>], fc: &Tensor<T>) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(sources.len());
    for fm in sources {
        let geo = fm
            .geometry()
            .ok_or_else(|| invalid("decode", "feature map carries no frame geometry"))?;
        let g: Graph<T> = Graph::new();
        let feats = g.constant(fm.to_tensor());
        let fcv = g.constant(fc.clone());
        let wave = decode_var(&g, feats, fcv, geo.stride, geo.input_len)?;
        out.push(g.value(wave).data().to_vec());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    #[test]
    fn frame_arithmetic_without_padding() {
        let cfg = FrontendConfig { window: 2, stride: 1, n_filters: 64, in_channels: 1 };
        assert_eq!(cfg.n_frames(16).unwrap(), 15);
    }

    #[test]
    fn zero_input_gives_zero_features() {
        let cfg = FrontendConfig { window: 4, stride: 2, n_filters: 8, in_channels: 1 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let kernel = Tensor::new(alloc::vec![8, 1, 4], rand_vec(32, &mut rng)).unwrap();
        let slopes = Tensor::full(alloc::vec![8], 0.25);
        let wave = alloc::vec![0.0f64; 64];
        let fm = encode(&[&wave], &cfg, &kernel, &slopes).unwrap();
        assert!(fm.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_matches_per_frame_dot_product_oracle() {
        let cfg = FrontendConfig { window: 5, stride: 3, n_filters: 6, in_channels: 2 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let kernel_data = rand_vec(6 * 2 * 5, &mut rng);
        let kernel = Tensor::new(alloc::vec![6, 2, 5], kernel_data.clone()).unwrap();
        let slopes_data = rand_vec(6, &mut rng);
        let slopes = Tensor::new(alloc::vec![6], slopes_data.clone()).unwrap();
        let t = 47;
        let w0 = rand_vec(t, &mut rng);
        let w1 = rand_vec(t, &mut rng);
        let fm = encode(&[&w0, &w1], &cfg, &kernel, &slopes).unwrap();
        let frames = cfg.n_frames(t).unwrap();
        assert_eq!(fm.frames(), frames);

        let waves = [&w0, &w1];
        for f in 0..frames {
            for n in 0..6 {
                let mut acc = 0.0;
                for c in 0..2 {
                    for w in 0..5 {
                        let idx = f * 3 + w;
                        let x = if idx < t { waves[c][idx] } else { 0.0 };
                        acc += kernel_data[n * 10 + c * 5 + w] * x;
                    }
                }
                let expect = if acc > 0.0 { acc } else { slopes_data[n] * acc };
                assert!((fm.at(n, f) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_is_linear_before_prelu() {
        let cfg = FrontendConfig { window: 3, stride: 2, n_filters: 4, in_channels: 1 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let kernel = Tensor::new(alloc::vec![4, 1, 3], rand_vec(12, &mut rng)).unwrap();
        // Identity "PReLU": slope 1 everywhere makes the activation linear.
        let slopes = Tensor::full(alloc::vec![4], 1.0);
        let wave = rand_vec(33, &mut rng);
        let scaled: Vec<f64> = wave.iter().map(|v| 2.5 * v).collect();
        let a = encode(&[&wave], &cfg, &kernel, &slopes).unwrap();
        let b = encode(&[&scaled], &cfg, &kernel, &slopes).unwrap();
        for f in 0..a.frames() {
            for n in 0..4 {
                assert!((b.at(n, f) - 2.5 * a.at(n, f)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn decode_zero_features_gives_zero_waves() {
        let fm = FeatureMap::from_parts(
            3,
            10,
            Some(FrameGeometry { window: 4, stride: 2, input_len: 22 }),
            alloc::vec![0.0f64; 30],
        );
        let fc = Tensor::full(alloc::vec![4, 3], 0.7);
        let waves = decode(&[fm], &fc).unwrap();
        assert_eq!(waves[0].len(), 22);
        assert!(waves[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_nonzero_frame_is_local() {
        let mut data = alloc::vec![0.0f64; 3 * 10];
        // frame 4 nonzero
        data[4 * 3..5 * 3].copy_from_slice(&[1.0, -2.0, 0.5]);
        let fm = FeatureMap::from_parts(
            3,
            10,
            Some(FrameGeometry { window: 4, stride: 2, input_len: 22 }),
            data,
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let fc = Tensor::new(alloc::vec![4, 3], rand_vec(12, &mut rng)).unwrap();
        let waves = decode(&[fm], &fc).unwrap();
        let w = &waves[0];
        for (t, &v) in w.iter().enumerate() {
            let inside = (8..12).contains(&t);
            assert_eq!(v != 0.0, inside, "sample {t} = {v}");
        }
    }

    #[test]
    fn decode_matches_overlap_add_oracle() {
        let channels = 4;
        let frames = 9;
        let window = 6;
        let stride = 3;
        let t = 4 + stride * (frames - 1) + 1; // shorter than full coverage: checks truncation
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let feat = rand_vec(frames * channels, &mut rng);
        let fc_data = rand_vec(window * channels, &mut rng);
        let fm = FeatureMap::from_parts(
            channels,
            frames,
            Some(FrameGeometry { window, stride, input_len: t }),
            feat.clone(),
        );
        let fc = Tensor::new(alloc::vec![window, channels], fc_data.clone()).unwrap();
        let waves = decode(&[fm], &fc).unwrap();
        assert_eq!(waves[0].len(), t);

        let mut oracle = alloc::vec![0.0f64; t];
        for f in 0..frames {
            for w in 0..window {
                let idx = f * stride + w;
                if idx >= t {
                    continue;
                }
                let mut s = 0.0;
                for n in 0..channels {
                    s += fc_data[w * channels + n] * feat[f * channels + n];
                }
                oracle[idx] += s;
            }
        }
        for (a, b) in waves[0].iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_without_geometry_errors() {
        let fm = FeatureMap::from_parts(2, 3, None, alloc::vec![0.0f64; 6]);
        let fc = Tensor::full(alloc::vec![2, 2], 1.0);
        assert!(decode(&[fm], &fc).is_err());
    }

    #[test]
    fn channel_mismatch_errors() {
        let cfg = FrontendConfig { window: 2, stride: 1, n_filters: 4, in_channels: 2 };
        let kernel = Tensor::full(alloc::vec![4, 2, 2], 0.1);
        let slopes = Tensor::full(alloc::vec![4], 0.25);
        let wave = alloc::vec![0.0f64; 16];
        assert!(encode(&[&wave], &cfg, &kernel, &slopes).is_err());
    }

    #[test]
    fn decode_inverts_length_for_all_inputs() {
        let cfg = FrontendConfig { window: 8, stride: 4, n_filters: 4, in_channels: 1 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let kernel = Tensor::new(alloc::vec![4, 1, 8], rand_vec(32, &mut rng)).unwrap();
        let slopes = Tensor::full(alloc::vec![4], 0.25);
        let fc = Tensor::new(alloc::vec![8, 4], rand_vec(32, &mut rng)).unwrap();
        for t in [8usize, 9, 57, 64, 101] {
            let wave = rand_vec(t, &mut rng);
            let fm = encode(&[&wave], &cfg, &kernel, &slopes).unwrap();
            let out = decode(core::slice::from_ref(&fm), &fc).unwrap();
            assert_eq!(out[0].len(), t, "t={t}");
        }
    }
}
