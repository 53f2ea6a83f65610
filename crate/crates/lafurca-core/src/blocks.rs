//! Dual-path BiLSTM blocks.
//!
//! A sub-block runs a BiLSTM along one axis of the `[N, K, C]` chunk tensor
//! (within-chunk for the intra path, across chunks for the inter path),
//! projects back to `N` channels, applies a single-group GroupNorm, averages
//! the branch outputs when several parallel branches are present, and adds
//! the input back as a residual.
//!
//! A block composes two sub-blocks: serially (inter after intra) or as a
//! cross pair whose outputs are averaged with weight 1/2.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::invalid;
use crate::graph::{Graph, Var};
use crate::params::{Leaves, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Result;

/// GroupNorm epsilon.
pub const GROUP_NORM_EPS: f64 = 1e-8;

/// Which axis of the chunk tensor a sub-block's BiLSTM runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathAxis {
    /// Within-chunk frames; chunks act as the batch.
    Intra,
    /// Across chunks at a fixed within-chunk offset; offsets act as the batch.
    Inter,
}

/// Block topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockVariant {
    Serial,
    ParallelSerial,
    Cross,
    ParallelCross,
}

impl BlockVariant {
    pub fn from_flags(parallel: bool, cross: bool) -> Self {
        match (parallel, cross) {
            (false, false) => BlockVariant::Serial,
            (true, false) => BlockVariant::ParallelSerial,
            (false, true) => BlockVariant::Cross,
            (true, true) => BlockVariant::ParallelCross,
        }
    }

    pub fn is_parallel(&self) -> bool {
        matches!(self, BlockVariant::ParallelSerial | BlockVariant::ParallelCross)
    }

    pub fn is_cross(&self) -> bool {
        matches!(self, BlockVariant::Cross | BlockVariant::ParallelCross)
    }
}

/// One LSTM direction: input, recurrent and bias weights for the four gates
/// in `i, f, g, o` order.
#[derive(Debug, Clone)]
pub struct LstmDirParams {
    /// `[input_size, 4*hidden]`
    pub w_ih: ParamId,
    /// `[hidden, 4*hidden]`
    pub w_hh: ParamId,
    /// `[4*hidden]`
    pub bias: ParamId,
}

impl LstmDirParams {
    fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.uniform(alloc::format!("{prefix}.w_ih"), alloc::vec![input, 4 * hidden], bound, rng)?;
        let w_hh = store.uniform(alloc::format!("{prefix}.w_hh"), alloc::vec![hidden, 4 * hidden], bound, rng)?;
        let bias = store.uniform(alloc::format!("{prefix}.bias"), alloc::vec![4 * hidden], bound, rng)?;
        // Forget-gate bias starts at 1.0.
        for v in &mut store.get_mut(bias).data[hidden..2 * hidden] {
            *v = T::one();
        }
        Ok(LstmDirParams { w_ih, w_hh, bias })
    }
}

/// One branch of a sub-block: BiLSTM, projection back to `N` channels, and
/// a GroupNorm affine pair.
#[derive(Debug, Clone)]
pub struct BranchParams {
    pub fwd: LstmDirParams,
    pub bwd: LstmDirParams,
    /// `[channels, 2*hidden]`
    pub proj: ParamId,
    /// `[channels]`
    pub norm_gain: ParamId,
    /// `[channels]`
    pub norm_bias: ParamId,
}

/// One intra- or inter-path with `B` parallel branches.
#[derive(Debug, Clone)]
pub struct SubBlockParams {
    pub branches: Vec<BranchParams>,
    pub hidden: usize,
}

impl SubBlockParams {
    pub fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        hidden: usize,
        n_branches: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_branches == 0 {
            return Err(invalid("sub_block", "need at least one branch"));
        }
        let mut branches = Vec::with_capacity(n_branches);
        for b in 0..n_branches {
            let p = alloc::format!("{prefix}.branch{b}");
            let fwd = LstmDirParams::build(store, &alloc::format!("{p}.fwd"), channels, hidden, rng)?;
            let bwd = LstmDirParams::build(store, &alloc::format!("{p}.bwd"), channels, hidden, rng)?;
            let proj_bound = 1.0 / ((2 * hidden) as f64).sqrt();
            let proj = store.uniform(
                alloc::format!("{p}.proj"),
                alloc::vec![channels, 2 * hidden],
                proj_bound,
                rng,
            )?;
            let norm_gain = store.full(alloc::format!("{p}.norm_gain"), alloc::vec![channels], 1.0)?;
            let norm_bias = store.full(alloc::format!("{p}.norm_bias"), alloc::vec![channels], 0.0)?;
            branches.push(BranchParams { fwd, bwd, proj, norm_gain, norm_bias });
        }
        Ok(SubBlockParams { branches, hidden })
    }
}

/// One dual-path block: an intra path and an inter path.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub intra: SubBlockParams,
    pub inter: SubBlockParams,
}

impl BlockParams {
    pub fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        hidden: usize,
        n_branches: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let intra =
            SubBlockParams::build(store, &alloc::format!("{prefix}.intra"), channels, hidden, n_branches, rng)?;
        let inter =
            SubBlockParams::build(store, &alloc::format!("{prefix}.inter"), channels, hidden, n_branches, rng)?;
        Ok(BlockParams { intra, inter })
    }
}

/// BiLSTM over the leading axis of `[steps, batch, input]`, producing
/// `[steps, batch, 2*hidden]`: forward outputs concatenated with the
/// time-reversed pass of the backward direction.
pub fn bilstm_var<T: Scalar>(
    g: &Graph<T>,
    x: Var,
    fwd: (Var, Var, Var),
    bwd: (Var, Var, Var),
    hidden: usize,
) -> Result<Var> {
    let shape = g.shape_of(x);
    if shape.len() != 3 {
        return Err(invalid("bilstm", alloc::format!("expected [steps, batch, input], got {shape:?}")));
    }
    let steps = shape[0];
    if steps == 0 {
        return Err(invalid("bilstm", "empty sequence"));
    }
    let run = |(w_ih, w_hh, bias): (Var, Var, Var), reverse: bool| -> Result<Vec<Var>> {
        let mut outputs: Vec<Option<Var>> = alloc::vec![None; steps];
        let mut h_prev: Option<Var> = None;
        let mut c_prev: Option<Var> = None;
        for i in 0..steps {
            let s = if reverse { steps - 1 - i } else { i };
            let x_t = g.index_axis0(x, s)?;
            let mut gates = g.matmul(x_t, w_ih)?;
            if let Some(h) = h_prev {
                gates = g.add(gates, g.matmul(h, w_hh)?)?;
            }
            gates = g.add(gates, bias)?;
            let i_g = g.sigmoid(g.slice_axis(gates, 1, 0, hidden)?)?;
            let f_g = g.sigmoid(g.slice_axis(gates, 1, hidden, hidden)?)?;
            let c_g = g.tanh(g.slice_axis(gates, 1, 2 * hidden, hidden)?)?;
            let o_g = g.sigmoid(g.slice_axis(gates, 1, 3 * hidden, hidden)?)?;
            let c = match c_prev {
                Some(c0) => g.add(g.mul(f_g, c0)?, g.mul(i_g, c_g)?)?,
                None => g.mul(i_g, c_g)?,
            };
            let h = g.mul(o_g, g.tanh(c)?)?;
            outputs[s] = Some(h);
            h_prev = Some(h);
            c_prev = Some(c);
        }
        Ok(outputs.into_iter().map(|o| o.expect("all steps visited")).collect())
    };
    let hf = run(fwd, false)?;
    let hb = run(bwd, true)?;
    let mut per_step = Vec::with_capacity(steps);
    for s in 0..steps {
        per_step.push(g.concat(1, &[hf[s], hb[s]])?);
    }
    g.stack0(&per_step)
}

/// One intra- or inter-path applied to a `[N, K, C]` chunk tensor node.
pub fn sub_block_var<T: Scalar>(
    g: &Graph<T>,
    leaves: &Leaves,
    x: Var,
    params: &SubBlockParams,
    axis: PathAxis,
) -> Result<Var> {
    let shape = g.shape_of(x);
    if shape.len() != 3 {
        return Err(invalid("sub_block", alloc::format!("expected [N, K, C], got {shape:?}")));
    }
    let channels = shape[0];
    // Bring the sequence axis first and the batch axis second.
    let (perm_in, perm_out): (&[usize], &[usize]) = match axis {
        PathAxis::Intra => (&[1, 2, 0], &[2, 0, 1]),
        PathAxis::Inter => (&[2, 1, 0], &[2, 1, 0]),
    };
    let seq = g.permute(x, perm_in)?; // [steps, batch, N]
    let seq_shape = g.shape_of(seq);
    let (steps, batch) = (seq_shape[0], seq_shape[1]);
    let hidden = params.hidden;

    let mut branch_outputs = Vec::with_capacity(params.branches.len());
    for br in &params.branches {
        let h = bilstm_var(
            g,
            seq,
            (leaves.get(br.fwd.w_ih), leaves.get(br.fwd.w_hh), leaves.get(br.fwd.bias)),
            (leaves.get(br.bwd.w_ih), leaves.get(br.bwd.w_hh), leaves.get(br.bwd.bias)),
            hidden,
        )?;
        let flat = g.reshape(h, alloc::vec![steps * batch, 2 * hidden])?;
        let proj_t = g.permute(leaves.get(br.proj), &[1, 0])?; // [2H, N]
        let projected = g.matmul(flat, proj_t)?;
        let shaped = g.reshape(projected, alloc::vec![steps, batch, channels])?;
        let back = g.permute(shaped, perm_out)?; // [N, K, C]
        let normed = g.group_norm_global(
            back,
            leaves.get(br.norm_gain),
            leaves.get(br.norm_bias),
            0,
            GROUP_NORM_EPS,
        )?;
        branch_outputs.push(normed);
    }
    // Average the branches in a fixed order, then add the residual.
    let mut acc = branch_outputs[0];
    for &b in &branch_outputs[1..] {
        acc = g.add(acc, b)?;
    }
    let avg = g.affine(acc, 1.0 / branch_outputs.len() as f64, 0.0)?;
    g.add(x, avg)
}

/// Full block forward on a `[N, K, C]` node.
pub fn block_forward_var<T: Scalar>(
    g: &Graph<T>,
    leaves: &Leaves,
    x: Var,
    block: &BlockParams,
    variant: BlockVariant,
) -> Result<Var> {
    let b = block.intra.branches.len().max(block.inter.branches.len());
    if !variant.is_parallel() && b != 1 {
        return Err(invalid("block", "serial/cross variants take exactly one branch"));
    }
    if variant.is_cross() {
        let a = sub_block_var(g, leaves, x, &block.intra, PathAxis::Intra)?;
        let c = sub_block_var(g, leaves, x, &block.inter, PathAxis::Inter)?;
        let sum = g.add(a, c)?;
        g.affine(sum, 0.5, 0.0)
    } else {
        let a = sub_block_var(g, leaves, x, &block.intra, PathAxis::Intra)?;
        sub_block_var(g, leaves, a, &block.inter, PathAxis::Inter)
    }
}

/// Standalone BiLSTM on a `[steps, input]` sequence (batch of one),
/// returning `[steps, 2*hidden]`.
pub fn bilstm<T: Scalar>(
    seq: &Tensor<T>,
    fwd: (&Tensor<T>, &Tensor<T>, &Tensor<T>),
    bwd: (&Tensor<T>, &Tensor<T>, &Tensor<T>),
) -> Result<Tensor<T>> {
    let shape = seq.shape().to_vec();
    if shape.len() != 2 {
        return Err(invalid("bilstm", alloc::format!("expected [steps, input], got {shape:?}")));
    }
    let hidden = fwd.1.shape().first().copied().unwrap_or(0);
    if hidden == 0 || fwd.0.shape() != [shape[1], 4 * hidden] {
        return Err(crate::error::CoreError::ShapeMismatch {
            op: "bilstm",
            lhs: fwd.0.shape().to_vec(),
            rhs: alloc::vec![shape[1], 4 * hidden],
        });
    }
    let g: Graph<T> = Graph::new();
    let x3 = g.constant(Tensor::new(alloc::vec![shape[0], 1, shape[1]], seq.data().to_vec())?);
    let fw = (g.constant(fwd.0.clone()), g.constant(fwd.1.clone()), g.constant(fwd.2.clone()));
    let bw = (g.constant(bwd.0.clone()), g.constant(bwd.1.clone()), g.constant(bwd.2.clone()));
    let out = bilstm_var(&g, x3, fw, bw, hidden)?;
    let v = g.value(out);
    Tensor::new(alloc::vec![shape[0], 2 * hidden], v.data().to_vec())
}

/// Standalone sub-block on a `[N, K, C]` chunk tensor value.
pub fn sub_block<T: Scalar>(
    input: &Tensor<T>,
    store: &ParamStore<T>,
    params: &SubBlockParams,
    axis: PathAxis,
) -> Result<Tensor<T>> {
    let g: Graph<T> = Graph::new();
    let leaves = store.register_constants(&g);
    let x = g.constant(input.clone());
    let out = sub_block_var(&g, &leaves, x, params, axis)?;
    Ok(g.value(out))
}

/// Standalone block forward on a `[N, K, C]` chunk tensor value.
pub fn block_forward<T: Scalar>(
    input: &Tensor<T>,
    store: &ParamStore<T>,
    block: &BlockParams,
    variant: BlockVariant,
) -> Result<Tensor<T>> {
    let g: Graph<T> = Graph::new();
    let leaves = store.register_constants(&g);
    let x = g.constant(input.clone());
    let out = block_forward_var(&g, &leaves, x, block, variant)?;
    Ok(g.value(out))
}

/// Standalone single-group GroupNorm with per-channel affine (channel axis 0).
pub fn group_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    if eps <= 0.0 {
        return Err(invalid("group_norm", "eps must be positive"));
    }
    let g: Graph<T> = Graph::new();
    let xv = g.constant(x.clone());
    let gv = g.constant(gain.clone());
    let bv = g.constant(bias.clone());
    let out = g.group_norm_global(xv, gv, bv, 0, eps)?;
    Ok(g.value(out))
}

/// Zero every branch parameter so the sub-block reduces to the identity.
pub fn zero_sub_block<T: Scalar>(store: &mut ParamStore<T>, params: &SubBlockParams) {
    for br in &params.branches {
        for id in [br.fwd.w_ih, br.fwd.w_hh, br.fwd.bias, br.bwd.w_ih, br.bwd.w_hh, br.bwd.bias, br.proj, br.norm_gain, br.norm_bias] {
            for v in &mut store.get_mut(id).data {
                *v = T::zero();
            }
        }
    }
}
