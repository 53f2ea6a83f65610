//! Data-movement operations: reshape, permute, slicing, concatenation, and
//! the framing/overlap-add index maps used by the front-end and chunking.

use alloc::vec::Vec;

use super::{Grads, Graph, Var};
use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::tensor::{numel, strides, Tensor};
use crate::Result;

impl<T: Scalar> Graph<T> {
    /// Reinterpret the row-major data under a new shape. Zero-copy.
    pub fn reshape(&self, x: Var, new_shape: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        if numel(&new_shape) != tx.numel() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape",
                lhs: tx.shape().to_vec(),
                rhs: new_shape,
            });
        }
        let requires = self.requires_grad(x);
        let n = tx.numel();
        let value = Tensor::from_arc(new_shape, tx.arc());
        self.push_op("reshape", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n);
                for i in 0..n {
                    slot[i] = slot[i] + g[i];
                }
            })
        })
    }

    /// Reorder axes: output axis `j` ranges over input axis `perm[j]`.
    pub fn permute(&self, x: Var, perm: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        let rank = shape.len();
        let mut seen = alloc::vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || core::mem::replace(&mut seen[p], true)) {
            return Err(crate::error::invalid(
                "permute",
                alloc::format!("invalid permutation {perm:?} for rank {rank}"),
            ));
        }
        let in_strides = strides(&shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let walk_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let n = tx.numel();
        let xd = tx.data();
        let mut out = Vec::with_capacity(n);
        walk(&out_shape, &walk_strides, |src| out.push(xd[src]));
        let requires = self.requires_grad(x);
        let out_shape_b = out_shape.clone();
        let value = Tensor::new(out_shape, out)?;
        self.push_op("permute", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n);
                let mut i = 0;
                walk(&out_shape_b, &walk_strides, |src| {
                    slot[src] = slot[src] + g[i];
                    i += 1;
                });
            })
        })
    }

    /// Contiguous sub-range `[start, start+len)` along one axis.
    pub fn slice_axis(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(crate::error::invalid(
                "slice_axis",
                alloc::format!("range {start}..{} out of bounds on axis {axis} of {shape:?}", start + len),
            ));
        }
        let d = shape[axis];
        let inner = numel(&shape[axis + 1..]);
        let outer = numel(&shape[..axis]);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let xd = tx.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * d + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        let requires = self.requires_grad(x);
        let n_in = tx.numel();
        let value = Tensor::new(out_shape, out)?;
        self.push_op("slice_axis", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n_in);
                for o in 0..outer {
                    let base = (o * d + start) * inner;
                    let gbase = o * len * inner;
                    for i in 0..len * inner {
                        slot[base + i] = slot[base + i] + g[gbase + i];
                    }
                }
            })
        })
    }

    /// Concatenate along one axis. All inputs must agree on the other axes.
    pub fn concat(&self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(crate::error::invalid("concat", "no inputs"));
        }
        let tensors: Vec<Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let first = tensors[0].shape().to_vec();
        if axis >= first.len() {
            return Err(crate::error::invalid("concat", "axis out of range"));
        }
        let mut d_total = 0;
        for t in &tensors {
            let s = t.shape();
            let conforms = s.len() == first.len()
                && s.iter().zip(first.iter()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !conforms {
                return Err(CoreError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            d_total += s[axis];
        }
        let inner = numel(&first[axis + 1..]);
        let outer = numel(&first[..axis]);
        let mut out_shape = first.clone();
        out_shape[axis] = d_total;
        let mut out = Vec::with_capacity(outer * d_total * inner);
        for o in 0..outer {
            for t in &tensors {
                let d = t.shape()[axis];
                let base = o * d * inner;
                out.extend_from_slice(&t.data()[base..base + d * inner]);
            }
        }
        let reqs: Vec<bool> = parts.iter().map(|&p| self.requires_grad(p)).collect();
        let requires = reqs.iter().any(|&r| r);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let dims: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let lens: Vec<usize> = tensors.iter().map(|t| t.numel()).collect();
        let value = Tensor::new(out_shape, out)?;
        self.push_op("concat", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                for (pi, &id) in ids.iter().enumerate() {
                    if !reqs[pi] {
                        continue;
                    }
                    let d = dims[pi];
                    let offset: usize = dims[..pi].iter().sum();
                    let slot = sink.slot(id, lens[pi]);
                    for o in 0..outer {
                        let gbase = (o * d_total + offset) * inner;
                        let sbase = o * d * inner;
                        for i in 0..d * inner {
                            slot[sbase + i] = slot[sbase + i] + g[gbase + i];
                        }
                    }
                }
            })
        })
    }

    /// Stack same-shape tensors along a new leading axis.
    pub fn stack0(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(crate::error::invalid("stack0", "no inputs"));
        }
        let tensors: Vec<Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let inner_shape = tensors[0].shape().to_vec();
        for t in &tensors {
            if t.shape() != inner_shape.as_slice() {
                return Err(CoreError::ShapeMismatch {
                    op: "stack0",
                    lhs: inner_shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let part_len = numel(&inner_shape);
        let mut out = Vec::with_capacity(part_len * tensors.len());
        for t in &tensors {
            out.extend_from_slice(t.data());
        }
        let mut out_shape = alloc::vec![tensors.len()];
        out_shape.extend_from_slice(&inner_shape);
        let reqs: Vec<bool> = parts.iter().map(|&p| self.requires_grad(p)).collect();
        let requires = reqs.iter().any(|&r| r);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let value = Tensor::new(out_shape, out)?;
        self.push_op("stack0", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                for (pi, &id) in ids.iter().enumerate() {
                    if !reqs[pi] {
                        continue;
                    }
                    let slot = sink.slot(id, part_len);
                    let gbase = pi * part_len;
                    for i in 0..part_len {
                        slot[i] = slot[i] + g[gbase + i];
                    }
                }
            })
        })
    }

    /// Select index `i` along axis 0, dropping that axis.
    pub fn index_axis0(&self, x: Var, i: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if shape.is_empty() || i >= shape[0] {
            return Err(crate::error::invalid(
                "index_axis0",
                alloc::format!("index {i} out of bounds for shape {shape:?}"),
            ));
        }
        let part_len = numel(&shape[1..]);
        let out = tx.data()[i * part_len..(i + 1) * part_len].to_vec();
        let requires = self.requires_grad(x);
        let n_in = tx.numel();
        let value = Tensor::new(shape[1..].to_vec(), out)?;
        self.push_op("index_axis0", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n_in);
                let base = i * part_len;
                for j in 0..part_len {
                    slot[base + j] = slot[base + j] + g[j];
                }
            })
        })
    }

    /// Gather sliding frames: input `[ch, T]` becomes `[F, ch*W]`, where
    /// frame `f` holds `x[c, f*stride + w]` at column `c*W + w`. Positions
    /// past the end of the signal read as zero, so every frame is full.
    pub fn im2col(&self, x: Var, window: usize, stride: usize, n_frames: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if shape.len() != 2 {
            return Err(crate::error::invalid("im2col", alloc::format!("expected [ch, T], got {shape:?}")));
        }
        let (ch, t_len) = (shape[0], shape[1]);
        let xd = tx.data();
        let mut out = alloc::vec![T::zero(); n_frames * ch * window];
        for f in 0..n_frames {
            let row = &mut out[f * ch * window..(f + 1) * ch * window];
            for c in 0..ch {
                for w in 0..window {
                    let t = f * stride + w;
                    if t < t_len {
                        row[c * window + w] = xd[c * t_len + t];
                    }
                }
            }
        }
        let requires = self.requires_grad(x);
        let value = Tensor::new(alloc::vec![n_frames, ch * window], out)?;
        self.push_op("im2col", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, ch * t_len);
                for f in 0..n_frames {
                    let row = &g[f * ch * window..(f + 1) * ch * window];
                    for c in 0..ch {
                        for w in 0..window {
                            let t = f * stride + w;
                            if t < t_len {
                                slot[c * t_len + t] = slot[c * t_len + t] + row[c * window + w];
                            }
                        }
                    }
                }
            })
        })
    }

    /// Scatter frames back to a signal: input `[F, W]` sums into
    /// `out[f*stride + w]`, truncated to `out_len` samples.
    pub fn overlap_add(&self, x: Var, stride: usize, out_len: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if shape.len() != 2 {
            return Err(crate::error::invalid("overlap_add", alloc::format!("expected [F, W], got {shape:?}")));
        }
        let (n_frames, window) = (shape[0], shape[1]);
        let xd = tx.data();
        let mut out = alloc::vec![T::zero(); out_len];
        for f in 0..n_frames {
            let row = &xd[f * window..(f + 1) * window];
            for (w, &v) in row.iter().enumerate() {
                let t = f * stride + w;
                if t < out_len {
                    out[t] = out[t] + v;
                }
            }
        }
        let requires = self.requires_grad(x);
        let value = Tensor::new(alloc::vec![out_len], out)?;
        self.push_op("overlap_add", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n_frames * window);
                for f in 0..n_frames {
                    for w in 0..window {
                        let t = f * stride + w;
                        if t < out_len {
                            slot[f * window + w] = slot[f * window + w] + g[t];
                        }
                    }
                }
            })
        })
    }

    /// Split a feature sequence `[F, N]` into overlapped chunks `[N, K, C]`:
    /// `out[n, k, c] = in[c*hop + k, n]`, zero past the last frame.
    pub fn segment_chunks(&self, x: Var, chunk_len: usize, hop: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if shape.len() != 2 {
            return Err(crate::error::invalid("segment", alloc::format!("expected [F, N], got {shape:?}")));
        }
        let (frames, n_ch) = (shape[0], shape[1]);
        if hop == 0 || hop > chunk_len {
            return Err(crate::error::invalid("segment", "need 0 < hop <= chunk_len"));
        }
        let n_chunks = crate::chunking::chunk_count(frames, chunk_len, hop);
        let xd = tx.data();
        let mut out = alloc::vec![T::zero(); n_ch * chunk_len * n_chunks];
        for c in 0..n_chunks {
            for k in 0..chunk_len {
                let f = c * hop + k;
                if f >= frames {
                    continue;
                }
                for n in 0..n_ch {
                    out[n * chunk_len * n_chunks + k * n_chunks + c] = xd[f * n_ch + n];
                }
            }
        }
        let requires = self.requires_grad(x);
        let value = Tensor::new(alloc::vec![n_ch, chunk_len, n_chunks], out)?;
        self.push_op("segment", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, frames * n_ch);
                for c in 0..n_chunks {
                    for k in 0..chunk_len {
                        let f = c * hop + k;
                        if f >= frames {
                            continue;
                        }
                        for n in 0..n_ch {
                            slot[f * n_ch + n] = slot[f * n_ch + n]
                                + g[n * chunk_len * n_chunks + k * n_chunks + c];
                        }
                    }
                }
            })
        })
    }

    /// Inverse of [`Graph::segment_chunks`]: overlap-add the chunks of
    /// `[N, K, C]` back to `[F, N]`, dividing each frame by its overlap
    /// count so that `merge(segment(x)) == x`.
    pub fn merge_chunks(&self, x: Var, hop: usize, frames: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if shape.len() != 3 {
            return Err(crate::error::invalid("merge", alloc::format!("expected [N, K, C], got {shape:?}")));
        }
        let (n_ch, chunk_len, n_chunks) = (shape[0], shape[1], shape[2]);
        if hop == 0 || hop > chunk_len {
            return Err(crate::error::invalid("merge", "need 0 < hop <= chunk_len"));
        }
        let counts = crate::chunking::overlap_counts(frames, chunk_len, hop, n_chunks);
        let inv: Vec<T> = counts
            .iter()
            .map(|&c| if c == 0 { T::zero() } else { T::one() / T::from_f64(c as f64) })
            .collect();
        let xd = tx.data();
        let mut out = alloc::vec![T::zero(); frames * n_ch];
        for c in 0..n_chunks {
            for k in 0..chunk_len {
                let f = c * hop + k;
                if f >= frames {
                    continue;
                }
                for n in 0..n_ch {
                    out[f * n_ch + n] =
                        out[f * n_ch + n] + xd[n * chunk_len * n_chunks + k * n_chunks + c];
                }
            }
        }
        for f in 0..frames {
            for n in 0..n_ch {
                out[f * n_ch + n] = out[f * n_ch + n] * inv[f];
            }
        }
        let requires = self.requires_grad(x);
        let value = Tensor::new(alloc::vec![frames, n_ch], out)?;
        self.push_op("merge", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n_ch * chunk_len * n_chunks);
                for c in 0..n_chunks {
                    for k in 0..chunk_len {
                        let f = c * hop + k;
                        if f >= frames {
                            continue;
                        }
                        for n in 0..n_ch {
                            slot[n * chunk_len * n_chunks + k * n_chunks + c] = slot
                                [n * chunk_len * n_chunks + k * n_chunks + c]
                                + g[f * n_ch + n] * inv[f];
                        }
                    }
                }
            })
        })
    }
}

/// Row-major odometer over `dims`, calling `f` with the source offset
/// accumulated from `src_strides`.
fn walk(dims: &[usize], src_strides: &[usize], mut f: impl FnMut(usize)) {
    let n = numel(dims);
    if n == 0 {
        return;
    }
    let rank = dims.len();
    let mut idx = alloc::vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        f(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
            off -= src_strides[ax] * dims[ax];
        }
    }
}
