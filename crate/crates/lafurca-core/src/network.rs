//! The full separation network and the `LF(...)` model notation.
//!
//! A stage is the single pipeline: encoder, per-frame LayerNorm, a 1x1
//! bottleneck convolution, a run of dual-path blocks on the chunk tensor, a
//! 1x1 mask head with a softmax over sources, mask application to the
//! mixture's encoding, and the overlap-add decoder. Later stages consume the
//! previous stage's estimates stacked with the original mixture as extra
//! encoder channels; the masked encoding is always an encoding of the
//! mixture alone.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::blocks::{block_forward_var, BlockParams, BlockVariant};
use crate::error::{invalid, CoreError};
use crate::frontend::{decode_var, encode_var, FrontendConfig};
use crate::graph::{Graph, Var};
use crate::params::{Leaves, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Result;

/// LayerNorm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-8;

/// Architecture hyperparameters shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperParams {
    /// Encoder window in samples.
    pub window: usize,
    /// Encoder stride in samples.
    pub stride: usize,
    /// Encoder filters / feature channels.
    pub n_filters: usize,
    /// Chunk length in frames.
    pub chunk_len: usize,
    /// Hop between chunk starts in frames.
    pub hop: usize,
    /// LSTM hidden units per direction.
    pub hidden: usize,
    /// Parallel branches per sub-block (used by the parallel variants).
    pub branches: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            window: 2,
            stride: 1,
            n_filters: 64,
            chunk_len: 100,
            hop: 50,
            hidden: 128,
            branches: 3,
        }
    }
}

/// Parsed form of the `LF(P|C, x1, ..., xn)` notation plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub parallel: bool,
    pub cross: bool,
    /// Dual-path blocks per stage.
    pub stage_blocks: Vec<usize>,
    /// Number of sources to separate.
    pub n_sources: usize,
    pub hp: HyperParams,
}

impl ModelSpec {
    pub fn variant(&self) -> BlockVariant {
        BlockVariant::from_flags(self.parallel, self.cross)
    }

    pub fn n_stages(&self) -> usize {
        self.stage_blocks.len()
    }

    /// Branches actually used per sub-block.
    pub fn effective_branches(&self) -> usize {
        if self.parallel {
            self.hp.branches
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_blocks.is_empty() || self.stage_blocks.iter().any(|&x| x == 0) {
            return Err(invalid("model_spec", "every stage needs at least one block"));
        }
        if self.n_sources < 2 {
            return Err(invalid("model_spec", "need at least two sources"));
        }
        if self.parallel && self.hp.branches == 0 {
            return Err(invalid("model_spec", "parallel variant needs branches >= 1"));
        }
        Ok(())
    }

    /// Canonical notation, e.g. `LF(P,C,2,6)`.
    pub fn canonical(&self) -> String {
        let mut s = String::from("LF(");
        if self.parallel {
            s.push_str("P,");
        }
        if self.cross {
            s.push_str("C,");
        }
        for (i, x) in self.stage_blocks.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&alloc::format!("{x}"));
        }
        s.push(')');
        s
    }
}

/// Parse `LF(...)` / `LaFurca(...)` notation (case-insensitive). Flags `P`
/// and `C` precede the per-stage block counts.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let err = |pos: usize, msg: &str| CoreError::Parse { pos, msg: String::from(msg) };
    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };

    skip_ws(&mut pos);
    let name_start = pos;
    while pos < bytes.len() && bytes[pos].is_ascii_alphabetic() {
        pos += 1;
    }
    let name = text[name_start..pos].to_ascii_lowercase();
    if name != "lf" && name != "lafurca" {
        return Err(err(name_start, "expected `LF` or `LaFurca`"));
    }
    skip_ws(&mut pos);
    if pos >= bytes.len() || bytes[pos] != b'(' {
        return Err(err(pos, "expected `(`"));
    }
    pos += 1;

    let mut parallel = false;
    let mut cross = false;
    let mut stage_blocks: Vec<usize> = Vec::new();
    loop {
        skip_ws(&mut pos);
        if pos >= bytes.len() {
            return Err(err(pos, "unterminated model spec, expected `)`"));
        }
        let item_start = pos;
        if bytes[pos].is_ascii_alphabetic() {
            while pos < bytes.len() && bytes[pos].is_ascii_alphabetic() {
                pos += 1;
            }
            if !stage_blocks.is_empty() {
                return Err(err(item_start, "flags must precede block counts"));
            }
            match text[item_start..pos].to_ascii_lowercase().as_str() {
                "p" => {
                    if parallel {
                        return Err(err(item_start, "duplicate flag `P`"));
                    }
                    parallel = true;
                }
                "c" => {
                    if cross {
                        return Err(err(item_start, "duplicate flag `C`"));
                    }
                    cross = true;
                }
                _ => return Err(err(item_start, "unknown flag (expected `P` or `C`)")),
            }
        } else if bytes[pos].is_ascii_digit() {
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            let n: usize = text[item_start..pos]
                .parse()
                .map_err(|_| err(item_start, "block count out of range"))?;
            if n == 0 {
                return Err(err(item_start, "block count must be at least 1"));
            }
            stage_blocks.push(n);
        } else {
            return Err(err(pos, "expected a flag, a block count, or `)`"));
        }
        skip_ws(&mut pos);
        if pos < bytes.len() && bytes[pos] == b',' {
            pos += 1;
            continue;
        }
        if pos < bytes.len() && bytes[pos] == b')' {
            pos += 1;
            break;
        }
        return Err(err(pos, "expected `,` or `)`"));
    }
    skip_ws(&mut pos);
    if pos != bytes.len() {
        return Err(err(pos, "trailing characters after `)`"));
    }
    if stage_blocks.is_empty() {
        return Err(err(bytes.len() - 1, "at least one per-stage block count is required"));
    }
    Ok(ModelSpec { parallel, cross, stage_blocks, n_sources: 2, hp: HyperParams::default() })
}

/// Encoder parameters: a `[N, in_channels, W]` kernel and per-filter PReLU
/// slopes.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub kernel: ParamId,
    pub slopes: ParamId,
    pub in_channels: usize,
}

impl EncoderParams {
    fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        hp: &HyperParams,
        in_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / ((in_channels * hp.window) as f64).sqrt();
        let kernel = store.uniform(
            alloc::format!("{prefix}.kernel"),
            alloc::vec![hp.n_filters, in_channels, hp.window],
            bound,
            rng,
        )?;
        let slopes = store.full(alloc::format!("{prefix}.slopes"), alloc::vec![hp.n_filters], 0.25)?;
        Ok(EncoderParams { kernel, slopes, in_channels })
    }

    fn config(&self, hp: &HyperParams) -> FrontendConfig {
        FrontendConfig {
            window: hp.window,
            stride: hp.stride,
            n_filters: hp.n_filters,
            in_channels: self.in_channels,
        }
    }
}

/// Parameters of one refinement stage.
#[derive(Debug, Clone)]
pub struct StageParams {
    /// Encoder feeding the separator (1 channel for stage 1, `1+S` after).
    pub sep_encoder: EncoderParams,
    /// Mixture-only encoder whose output is masked; stage 1 reuses
    /// `sep_encoder` for this role.
    pub mix_encoder: Option<EncoderParams>,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
    /// 1x1 bottleneck convolution `[N, N]` + bias `[N]`.
    pub conv_in_w: ParamId,
    pub conv_in_b: ParamId,
    pub blocks: Vec<BlockParams>,
    /// 1x1 mask head `[N, S*N]` + bias `[S*N]`.
    pub mask_w: ParamId,
    pub mask_b: ParamId,
    /// Decoder matrix `[W, N]`, shared across sources and frames.
    pub decoder: ParamId,
}

/// Outputs of one stage.
pub struct StageRun {
    /// One estimated waveform node per source, each of the mixture's length.
    pub estimates: Vec<Var>,
    /// `[frames, n_sources, n_filters]` mask node (softmax over sources).
    pub masks: Var,
}

/// The staged separation network. Parameters live in an external
/// [`ParamStore`]; the network holds their handles.
pub struct Network {
    spec: ModelSpec,
    stages: Vec<StageParams>,
}

impl Network {
    /// Allocate and initialize all parameters for `spec`.
    pub fn build<T: Scalar>(
        spec: &ModelSpec,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let hp = &spec.hp;
        let n = hp.n_filters;
        let s = spec.n_sources;
        let branches = spec.effective_branches();
        let mut stages = Vec::with_capacity(spec.n_stages());
        for (idx, &n_blocks) in spec.stage_blocks.iter().enumerate() {
            let prefix = alloc::format!("stage{idx}");
            let in_ch = if idx == 0 { 1 } else { 1 + s };
            let sep_encoder =
                EncoderParams::build(store, &alloc::format!("{prefix}.sep_enc"), hp, in_ch, rng)?;
            let mix_encoder = if idx == 0 {
                None
            } else {
                Some(EncoderParams::build(store, &alloc::format!("{prefix}.mix_enc"), hp, 1, rng)?)
            };
            let ln_gain = store.full(alloc::format!("{prefix}.ln.gain"), alloc::vec![n], 1.0)?;
            let ln_bias = store.full(alloc::format!("{prefix}.ln.bias"), alloc::vec![n], 0.0)?;
            let bound = 1.0 / (n as f64).sqrt();
            let conv_in_w =
                store.uniform(alloc::format!("{prefix}.conv_in.w"), alloc::vec![n, n], bound, rng)?;
            let conv_in_b =
                store.uniform(alloc::format!("{prefix}.conv_in.b"), alloc::vec![n], bound, rng)?;
            let mut blocks = Vec::with_capacity(n_blocks);
            for b in 0..n_blocks {
                blocks.push(BlockParams::build(
                    store,
                    &alloc::format!("{prefix}.block{b}"),
                    n,
                    hp.hidden,
                    branches,
                    rng,
                )?);
            }
            let mask_w =
                store.uniform(alloc::format!("{prefix}.mask.w"), alloc::vec![n, s * n], bound, rng)?;
            let mask_b =
                store.uniform(alloc::format!("{prefix}.mask.b"), alloc::vec![s * n], bound, rng)?;
            let decoder =
                store.uniform(alloc::format!("{prefix}.decoder"), alloc::vec![hp.window, n], bound, rng)?;
            stages.push(StageParams {
                sep_encoder,
                mix_encoder,
                ln_gain,
                ln_bias,
                conv_in_w,
                conv_in_b,
                blocks,
                mask_w,
                mask_b,
                decoder,
            });
        }
        Ok(Network { spec: spec.clone(), stages })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn stages(&self) -> &[StageParams] {
        &self.stages
    }

    /// Forward one stage. `prev` must hold exactly `S` estimates of the
    /// mixture's length for stages after the first.
    pub fn stage_forward_var<T: Scalar>(
        &self,
        g: &Graph<T>,
        leaves: &Leaves,
        stage_idx: usize,
        mixture: Var,
        prev: Option<&[Var]>,
    ) -> Result<StageRun> {
        let hp = &self.spec.hp;
        let s = self.spec.n_sources;
        let stage = &self.stages[stage_idx];
        let mix_shape = g.shape_of(mixture);
        if mix_shape.len() != 1 {
            return Err(invalid("stage_forward", "mixture must be a 1-D waveform"));
        }
        let t = mix_shape[0];

        // Assemble encoder input channels.
        let input_waves: Vec<Var> = match (stage_idx, prev) {
            (0, None) => alloc::vec![mixture],
            (0, Some(_)) => {
                return Err(invalid("stage_forward", "stage 1 takes no previous estimates"))
            }
            (_, Some(prev)) => {
                if prev.len() != s {
                    return Err(invalid(
                        "stage_forward",
                        alloc::format!("expected {s} previous estimates, got {}", prev.len()),
                    ));
                }
                for &e in prev {
                    if g.shape_of(e) != [t] {
                        return Err(invalid(
                            "stage_forward",
                            "previous estimate length differs from mixture",
                        ));
                    }
                }
                let mut v = alloc::vec![mixture];
                v.extend_from_slice(prev);
                v
            }
            (_, None) => {
                return Err(invalid("stage_forward", "later stages need previous estimates"))
            }
        };
        let stacked = g.stack0(&input_waves)?; // [ch, T]
        let sep_cfg = stage.sep_encoder.config(hp);
        let features = encode_var(
            g,
            stacked,
            &sep_cfg,
            leaves.get(stage.sep_encoder.kernel),
            leaves.get(stage.sep_encoder.slopes),
        )?; // [F, N]

        // The encoding that gets masked is always the mixture's own.
        let mix_encoding = match &stage.mix_encoder {
            None => features,
            Some(enc) => {
                let mix_only = g.stack0(&[mixture])?;
                encode_var(g, mix_only, &enc.config(hp), leaves.get(enc.kernel), leaves.get(enc.slopes))?
            }
        };

        let frames = sep_cfg.n_frames(t)?;
        let normed =
            g.layer_norm_last(features, leaves.get(stage.ln_gain), leaves.get(stage.ln_bias), LAYER_NORM_EPS)?;
        let mut x = g.matmul(normed, leaves.get(stage.conv_in_w))?;
        x = g.add(x, leaves.get(stage.conv_in_b))?;
        let mut chunks = g.segment_chunks(x, hp.chunk_len, hp.hop)?;
        let variant = self.spec.variant();
        for block in &stage.blocks {
            chunks = block_forward_var(g, leaves, chunks, block, variant)?;
        }
        let merged = g.merge_chunks(chunks, hp.hop, frames)?; // [F, N]
        let mut logits = g.matmul(merged, leaves.get(stage.mask_w))?; // [F, S*N]
        logits = g.add(logits, leaves.get(stage.mask_b))?;
        let logits3 = g.reshape(logits, alloc::vec![frames, s, hp.n_filters])?;
        let masks = g.softmax(logits3, 1)?;

        let mix3 = g.reshape(mix_encoding, alloc::vec![frames, 1, hp.n_filters])?;
        let masked = g.mul(masks, mix3)?; // [F, S, N]
        let mut estimates = Vec::with_capacity(s);
        for src in 0..s {
            let one = g.slice_axis(masked, 1, src, 1)?;
            let flat = g.reshape(one, alloc::vec![frames, hp.n_filters])?;
            let wave = decode_var(g, flat, leaves.get(stage.decoder), hp.stride, t)?;
            estimates.push(wave);
        }
        Ok(StageRun { estimates, masks })
    }

    /// Forward every stage, feeding each stage's estimates (with the
    /// original mixture) to the next. Returns every stage's outputs so the
    /// loss can average over stages.
    pub fn multistage_forward_var<T: Scalar>(
        &self,
        g: &Graph<T>,
        leaves: &Leaves,
        mixture: Var,
    ) -> Result<Vec<StageRun>> {
        let mut runs: Vec<StageRun> = Vec::with_capacity(self.stages.len());
        for idx in 0..self.stages.len() {
            let prev: Option<Vec<Var>> = runs.last().map(|r| r.estimates.clone());
            let run = self.stage_forward_var(g, leaves, idx, mixture, prev.as_deref())?;
            runs.push(run);
        }
        Ok(runs)
    }

    /// Inference: separate a mixture, returning every stage's estimates as
    /// `[stage][source][samples]`.
    pub fn separate<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        mixture: &[T],
    ) -> Result<Vec<Vec<Vec<T>>>> {
        let g: Graph<T> = Graph::new();
        let leaves = store.register_constants(&g);
        let mix = g.constant(Tensor::from_slice(mixture));
        let runs = self.multistage_forward_var(&g, &leaves, mix)?;
        Ok(runs
            .iter()
            .map(|r| r.estimates.iter().map(|&e| g.value(e).data().to_vec()).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_hp() -> HyperParams {
        HyperParams { window: 8, stride: 4, n_filters: 6, chunk_len: 10, hop: 5, hidden: 4, branches: 2 }
    }

    #[test]
    fn parses_plain_spec() {
        let spec = parse_model_spec("LF(6)").unwrap();
        assert!(!spec.parallel && !spec.cross);
        assert_eq!(spec.stage_blocks, alloc::vec![6]);
    }

    #[test]
    fn parses_two_stage_spec() {
        let spec = parse_model_spec("LF(8,9)").unwrap();
        assert!(!spec.parallel && !spec.cross);
        assert_eq!(spec.stage_blocks, alloc::vec![8, 9]);
    }

    #[test]
    fn parses_cross_flag() {
        let spec = parse_model_spec("LF(C,2,6)").unwrap();
        assert!(!spec.parallel);
        assert!(spec.cross);
        assert_eq!(spec.stage_blocks, alloc::vec![2, 6]);
    }

    #[test]
    fn parses_long_form_with_spaces_case_insensitive() {
        let spec = parse_model_spec("  lafurca( p , c , 4 , 5 ) ").unwrap();
        assert!(spec.parallel && spec.cross);
        assert_eq!(spec.stage_blocks, alloc::vec![4, 5]);
        assert_eq!(spec.canonical(), "LF(P,C,4,5)");
    }

    #[test]
    fn canonical_round_trips() {
        for text in ["LF(6)", "LF(P,6)", "LF(C,2,6)", "LF(P,C,4,5)", "LF(8,9)"] {
            let spec = parse_model_spec(text).unwrap();
            assert_eq!(parse_model_spec(&spec.canonical()).unwrap(), spec);
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse_model_spec("LF()") {
            Err(CoreError::Parse { pos, .. }) => assert_eq!(pos, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_model_spec("LF(X,2)") {
            Err(CoreError::Parse { pos, .. }) => assert_eq!(pos, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_model_spec("LF(2,P)") {
            Err(CoreError::Parse { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_model_spec("LF(0)").is_err());
        assert!(parse_model_spec("DPRNN(6)").is_err());
        assert!(parse_model_spec("LF(2) extra").is_err());
    }

    #[test]
    fn masks_form_a_simplex() {
        let mut spec = parse_model_spec("LF(2)").unwrap();
        spec.hp = tiny_hp();
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::build(&spec, &mut store, &mut rng).unwrap();

        let mut wave_rng = ChaCha8Rng::seed_from_u64(2);
        use rand::Rng;
        let mixture: Vec<f64> = (0..200).map(|_| wave_rng.random_range(-0.9..=0.9)).collect();
        let g: Graph<f64> = Graph::new();
        let leaves = store.register_constants(&g);
        let mix = g.constant(Tensor::from_slice(&mixture));
        let run = net.stage_forward_var(&g, &leaves, 0, mix, None).unwrap();
        let masks = g.value(run.masks);
        let shape = masks.shape().to_vec();
        assert_eq!(shape[1], 2);
        let (frames, n) = (shape[0], shape[2]);
        for f in 0..frames {
            for c in 0..n {
                let a = masks.data()[f * 2 * n + c];
                let b = masks.data()[f * 2 * n + n + c];
                assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
                assert!((a + b - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn swapping_mask_head_rows_swaps_outputs() {
        let mut spec = parse_model_spec("LF(2)").unwrap();
        spec.hp = tiny_hp();
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::build(&spec, &mut store, &mut rng).unwrap();
        let mut wave_rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        let mixture: Vec<f64> = (0..160).map(|_| wave_rng.random_range(-0.9..=0.9)).collect();

        let before = net.separate(&store, &mixture).unwrap();

        // Permute the two mask heads: columns [0..N) and [N..2N) of mask.w
        // and the matching bias halves.
        let n = spec.hp.n_filters;
        let w_id = net.stages()[0].mask_w;
        let b_id = net.stages()[0].mask_b;
        {
            let w = &mut store.get_mut(w_id).data;
            for row in 0..n {
                for c in 0..n {
                    w.swap(row * 2 * n + c, row * 2 * n + n + c);
                }
            }
            let b = &mut store.get_mut(b_id).data;
            for c in 0..n {
                b.swap(c, n + c);
            }
        }
        let after = net.separate(&store, &mixture).unwrap();
        for src in 0..2 {
            for (x, y) in before[0][src].iter().zip(after[0][1 - src].iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn estimate_lengths_match_mixture_across_padding_regimes() {
        let mut spec = parse_model_spec("LF(2,2)").unwrap();
        spec.hp = tiny_hp();
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::build(&spec, &mut store, &mut rng).unwrap();
        use rand::Rng;
        for t in [57usize, 800, 4000] {
            let mut wave_rng = ChaCha8Rng::seed_from_u64(t as u64);
            let mixture: Vec<f64> = (0..t).map(|_| wave_rng.random_range(-0.9..=0.9)).collect();
            let out = net.separate(&store, &mixture).unwrap();
            assert_eq!(out.len(), 2);
            for stage in &out {
                assert_eq!(stage.len(), 2);
                for est in stage {
                    assert_eq!(est.len(), t, "t={t}");
                }
            }
        }
    }

    #[test]
    fn single_stage_multistage_equals_stage_forward() {
        let mut spec = parse_model_spec("LF(2)").unwrap();
        spec.hp = tiny_hp();
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Network::build(&spec, &mut store, &mut rng).unwrap();
        use rand::Rng;
        let mut wave_rng = ChaCha8Rng::seed_from_u64(7);
        let mixture: Vec<f64> = (0..120).map(|_| wave_rng.random_range(-0.9..=0.9)).collect();

        let g: Graph<f64> = Graph::new();
        let leaves = store.register_constants(&g);
        let mix = g.constant(Tensor::from_slice(&mixture));
        let runs = net.multistage_forward_var(&g, &leaves, mix).unwrap();
        assert_eq!(runs.len(), 1);

        let g2: Graph<f64> = Graph::new();
        let leaves2 = store.register_constants(&g2);
        let mix2 = g2.constant(Tensor::from_slice(&mixture));
        let run = net.stage_forward_var(&g2, &leaves2, 0, mix2, None).unwrap();
        for (a, b) in runs[0].estimates.iter().zip(run.estimates.iter()) {
            let va = g.value(*a);
            let vb = g2.value(*b);
            assert_eq!(va.data(), vb.data());
        }
    }

    #[test]
    fn two_stage_produces_two_outputs() {
        let mut spec = parse_model_spec("LF(C,2,2)").unwrap();
        spec.hp = tiny_hp();
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Network::build(&spec, &mut store, &mut rng).unwrap();
        use rand::Rng;
        let mut wave_rng = ChaCha8Rng::seed_from_u64(9);
        let mixture: Vec<f64> = (0..100).map(|_| wave_rng.random_range(-0.9..=0.9)).collect();
        let out = net.separate(&store, &mixture).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[1].len(), 2);
    }

    #[test]
    fn wrong_previous_estimate_count_errors() {
        let mut spec = parse_model_spec("LF(2,2)").unwrap();
        spec.hp = tiny_hp();
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = Network::build(&spec, &mut store, &mut rng).unwrap();
        let g: Graph<f64> = Graph::new();
        let leaves = store.register_constants(&g);
        let mix = g.constant(Tensor::from_slice(&alloc::vec![0.1f64; 64]));
        let est = g.constant(Tensor::from_slice(&alloc::vec![0.1f64; 64]));
        assert!(net.stage_forward_var(&g, &leaves, 1, mix, Some(&[est])).is_err());
        assert!(net.stage_forward_var(&g, &leaves, 1, mix, None).is_err());
    }
}
