//! Forward operations and their backward rules.
//!
//! Binary elementwise ops broadcast with right-aligned shapes where each
//! axis must match exactly or be 1. Every op validates operand shapes and
//! checks its output for non-finite values.

use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{Grads, Graph, Var};
use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::tensor::{numel, strides, Tensor};
use crate::Result;

/// Right-aligned broadcast result shape, or a shape error.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = alloc::vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(CoreError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() });
        };
    }
    Ok(out)
}

/// Strides of `shape` aligned to `rank` axes, with 0 on broadcast axes.
fn aligned_strides(shape: &[usize], rank: usize) -> Vec<usize> {
    let own = strides(shape);
    let mut out = alloc::vec![0usize; rank];
    let pad = rank - shape.len();
    for i in 0..shape.len() {
        out[pad + i] = if shape[i] == 1 { 0 } else { own[i] };
    }
    out
}

/// Walk the broadcast output space, yielding `(a_offset, b_offset)` per
/// element in row-major order.
fn broadcast_walk(dims: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize)) {
    let n = numel(dims);
    if n == 0 {
        return;
    }
    let rank = dims.len();
    let mut idx = alloc::vec![0usize; rank];
    let (mut ao, mut bo) = (0usize, 0usize);
    for _ in 0..n {
        f(ao, bo);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ao += sa[ax];
            bo += sb[ax];
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
            ao -= sa[ax] * dims[ax];
            bo -= sb[ax] * dims[ax];
        }
    }
}

/// A[m,k] @ B[k,n], accumulated into `out`.
fn mm_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aik * brow[j];
            }
        }
    }
}

/// G[m,n] @ B[k,n]^T accumulated into `out` [m,k]  (the dA of a matmul).
fn mm_bt_acc<T: Scalar>(g: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut s = T::zero();
            for j in 0..n {
                s = s + grow[j] * brow[j];
            }
            orow[kk] = orow[kk] + s;
        }
    }
}

/// A[m,k]^T @ G[m,n] accumulated into `out` [k,n]  (the dB of a matmul).
fn mm_at_acc<T: Scalar>(a: &[T], g: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let orow = &mut out[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aik * grow[j];
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    fn binary(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        da: fn(T, T, T) -> T,
        db: fn(T, T, T) -> T,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(op, ta.shape(), tb.shape())?;
        let rank = out_shape.len();
        let sa = aligned_strides(ta.shape(), rank);
        let sb = aligned_strides(tb.shape(), rank);
        let n = numel(&out_shape);
        let mut out = Vec::with_capacity(n);
        if ta.shape() == tb.shape() {
            out.extend(ta.data().iter().zip(tb.data().iter()).map(|(&x, &y)| f(x, y)));
        } else {
            let (ad, bd) = (ta.data(), tb.data());
            broadcast_walk(&out_shape, &sa, &sb, |ao, bo| out.push(f(ad[ao], bd[bo])));
        }
        let (a_req, b_req) = (self.requires_grad(a), self.requires_grad(b));
        let requires = a_req || b_req;
        let value = Tensor::new(out_shape.clone(), out)?;
        self.push_op(op, value, requires, move || {
            let (aa, ba) = (ta.arc(), tb.arc());
            let (na, nb) = (ta.numel(), tb.numel());
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                if a_req {
                    let slot = sink.slot(a.0, na);
                    let mut i = 0;
                    broadcast_walk(&out_shape, &sa, &sb, |ao, bo| {
                        slot[ao] = slot[ao] + da(g[i], aa[ao], ba[bo]);
                        i += 1;
                    });
                }
                if b_req {
                    let slot = sink.slot(b.0, nb);
                    let mut i = 0;
                    broadcast_walk(&out_shape, &sa, &sb, |ao, bo| {
                        slot[bo] = slot[bo] + db(g[i], aa[ao], ba[bo]);
                        i += 1;
                    });
                }
            })
        })
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |g, _, _| g, |g, _, _| g)
    }

    /// Elementwise difference with broadcasting.
    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |g, _, _| g, |g, _, _| -g)
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |g, _, y| g * y, |g, x, _| g * x)
    }

    /// Elementwise quotient with broadcasting.
    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, |g, _, y| g / y, |g, x, y| -g * x / (y * y))
    }

    fn unary(
        &self,
        op: &'static str,
        x: Var,
        f: impl Fn(T) -> T,
        // derivative from (input, output)
        dfd: fn(T, T) -> T,
    ) -> Result<Var> {
        let tx = self.value(x);
        let out: Vec<T> = tx.data().iter().map(|&v| f(v)).collect();
        let requires = self.requires_grad(x);
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        let ya = value.arc();
        self.push_op(op, value, requires, move || {
            let xa = tx.arc();
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, xa.len());
                for i in 0..xa.len() {
                    slot[i] = slot[i] + g[i] * dfd(xa[i], ya[i]);
                }
            })
        })
    }

    /// Logistic sigmoid.
    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        self.unary(
            "sigmoid",
            x,
            |v| {
                if v >= T::zero() {
                    T::one() / (T::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (T::one() + e)
                }
            },
            |_, y| y * (T::one() - y),
        )
    }

    /// Hyperbolic tangent.
    pub fn tanh(&self, x: Var) -> Result<Var> {
        self.unary("tanh", x, |v| v.tanh(), |_, y| T::one() - y * y)
    }

    /// Natural logarithm.
    pub fn ln(&self, x: Var) -> Result<Var> {
        self.unary("ln", x, |v| v.ln(), |v, _| T::one() / v)
    }

    /// `a * x + b` with scalar constants.
    pub fn affine(&self, x: Var, a: f64, b: f64) -> Result<Var> {
        let (ca, cb) = (T::from_f64(a), T::from_f64(b));
        let tx = self.value(x);
        let out: Vec<T> = tx.data().iter().map(|&v| ca * v + cb).collect();
        let requires = self.requires_grad(x);
        let n = tx.numel();
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        self.push_op("affine", value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n);
                for i in 0..n {
                    slot[i] = slot[i] + g[i] * ca;
                }
            })
        })
    }

    /// Parametric ReLU with one learnable slope per index along `axis`.
    pub fn prelu(&self, x: Var, slopes: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let ts = self.value(slopes);
        let shape = tx.shape().to_vec();
        if axis >= shape.len() || ts.shape() != [shape[axis]] {
            return Err(CoreError::ShapeMismatch {
                op: "prelu",
                lhs: shape,
                rhs: ts.shape().to_vec(),
            });
        }
        let dim = shape[axis];
        let stride = numel(&shape[axis + 1..]);
        let (xd, sd) = (tx.data(), ts.data());
        let out: Vec<T> = xd
            .iter()
            .enumerate()
            .map(|(i, &v)| if v > T::zero() { v } else { sd[(i / stride) % dim] * v })
            .collect();
        let (x_req, s_req) = (self.requires_grad(x), self.requires_grad(slopes));
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        self.push_op("prelu", value, x_req || s_req, move || {
            let (xa, sa) = (tx.arc(), ts.arc());
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                if x_req {
                    let slot = sink.slot(x.0, xa.len());
                    for i in 0..xa.len() {
                        let d = if xa[i] > T::zero() { T::one() } else { sa[(i / stride) % dim] };
                        slot[i] = slot[i] + g[i] * d;
                    }
                }
                if s_req {
                    let slot = sink.slot(slopes.0, sa.len());
                    for i in 0..xa.len() {
                        if xa[i] <= T::zero() {
                            let c = (i / stride) % dim;
                            slot[c] = slot[c] + g[i] * xa[i];
                        }
                    }
                }
            })
        })
    }

    /// Matrix product of `a` [m,k] and `b` [k,n].
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape().to_vec(), tb.shape().to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CoreError::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = alloc::vec![T::zero(); m * n];
        mm_acc(ta.data(), tb.data(), m, k, n, &mut out);
        let (a_req, b_req) = (self.requires_grad(a), self.requires_grad(b));
        let value = Tensor::new(alloc::vec![m, n], out)?;
        self.push_op("matmul", value, a_req || b_req, move || {
            let (aa, ba) = (ta.arc(), tb.arc());
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                if a_req {
                    mm_bt_acc(g, &ba, m, k, n, sink.slot(a.0, m * k));
                }
                if b_req {
                    mm_at_acc(&aa, g, m, k, n, sink.slot(b.0, k * n));
                }
            })
        })
    }

    /// Softmax along one axis, computed with max subtraction.
    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if axis >= shape.len() {
            return Err(crate::error::invalid("softmax", alloc::format!("axis {axis} out of range for shape {shape:?}")));
        }
        let d = shape[axis];
        let inner = numel(&shape[axis + 1..]);
        let outer = numel(&shape[..axis]);
        let xd = tx.data();
        let mut out = alloc::vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * d * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..d {
                    mx = mx.max(xd[base + j * inner]);
                }
                let mut sum = T::zero();
                for j in 0..d {
                    let e = (xd[base + j * inner] - mx).exp();
                    out[base + j * inner] = e;
                    sum = sum + e;
                }
                for j in 0..d {
                    out[base + j * inner] = out[base + j * inner] / sum;
                }
            }
        }
        let requires = self.requires_grad(x);
        let value = Tensor::new(shape, out)?;
        let ya = value.arc();
        self.push_op("softmax", value, requires, move || {
            let n = ya.len();
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n);
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * d * inner + i;
                        let mut dot = T::zero();
                        for j in 0..d {
                            let idx = base + j * inner;
                            dot = dot + g[idx] * ya[idx];
                        }
                        for j in 0..d {
                            let idx = base + j * inner;
                            slot[idx] = slot[idx] + ya[idx] * (g[idx] - dot);
                        }
                    }
                }
            })
        })
    }

    fn reduce_axis(&self, op: &'static str, x: Var, axis: usize, scale: T) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if axis >= shape.len() {
            return Err(crate::error::invalid(op, alloc::format!("axis {axis} out of range for shape {shape:?}")));
        }
        let d = shape[axis];
        let inner = numel(&shape[axis + 1..]);
        let outer = numel(&shape[..axis]);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let xd = tx.data();
        let mut out = alloc::vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..d {
                for i in 0..inner {
                    out[o * inner + i] = out[o * inner + i] + xd[o * d * inner + j * inner + i];
                }
            }
        }
        for v in out.iter_mut() {
            *v = *v * scale;
        }
        let requires = self.requires_grad(x);
        let n_in = tx.numel();
        let value = Tensor::new(out_shape, out)?;
        self.push_op(op, value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n_in);
                for o in 0..outer {
                    for j in 0..d {
                        for i in 0..inner {
                            let idx = o * d * inner + j * inner + i;
                            slot[idx] = slot[idx] + g[o * inner + i] * scale;
                        }
                    }
                }
            })
        })
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(&self, x: Var, axis: usize) -> Result<Var> {
        self.reduce_axis("sum_axis", x, axis, T::one())
    }

    /// Mean over one axis, removing it.
    pub fn mean_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let d = self.shape_of(x).get(axis).copied().unwrap_or(1);
        self.reduce_axis("mean_axis", x, axis, T::one() / T::from_f64(d as f64))
    }

    fn reduce_all(&self, op: &'static str, x: Var, scale: T) -> Result<Var> {
        let tx = self.value(x);
        let mut s = T::zero();
        for &v in tx.data() {
            s = s + v;
        }
        s = s * scale;
        let requires = self.requires_grad(x);
        let n = tx.numel();
        let value = Tensor::new(alloc::vec![1], alloc::vec![s])?;
        self.push_op(op, value, requires, move || {
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                let slot = sink.slot(x.0, n);
                let gv = g[0] * scale;
                for v in slot.iter_mut() {
                    *v = *v + gv;
                }
            })
        })
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum_all(&self, x: Var) -> Result<Var> {
        self.reduce_all("sum_all", x, T::one())
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean_all(&self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        self.reduce_all("mean_all", x, T::one() / T::from_f64(n as f64))
    }

    /// Inner product of two same-shape tensors, as a `[1]` tensor.
    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.shape() != tb.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "dot",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let p = self.mul(a, b)?;
        self.sum_all(p)
    }

    /// Normalize over the last axis per leading index, then apply a
    /// per-position affine transform along that axis.
    pub fn layer_norm_last(&self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let tg = self.value(gain);
        let tb = self.value(bias);
        let shape = tx.shape().to_vec();
        let d = *shape.last().ok_or_else(|| crate::error::invalid("layer_norm", "rank-0 input"))?;
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(CoreError::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: tg.shape().to_vec(),
            });
        }
        let rows = tx.numel() / d;
        let epsv = T::from_f64(eps);
        let xd = tx.data();
        let gd = tg.data();
        let bd = tb.data();
        let mut out = alloc::vec![T::zero(); tx.numel()];
        let mut xhat = alloc::vec![T::zero(); tx.numel()];
        let mut inv_s = alloc::vec![T::zero(); rows];
        let dn = T::from_f64(d as f64);
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean / dn;
            let mut var = T::zero();
            for &v in row {
                let c = v - mean;
                var = var + c * c;
            }
            var = var / dn;
            let inv = T::one() / (var + epsv).sqrt();
            inv_s[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = gd[j] * h + bd[j];
            }
        }
        let reqs = (self.requires_grad(x), self.requires_grad(gain), self.requires_grad(bias));
        let requires = reqs.0 || reqs.1 || reqs.2;
        let value = Tensor::new(shape, out)?;
        self.push_op("layer_norm", value, requires, move || {
            let ga = tg.arc();
            let xhat = Arc::new(xhat);
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                if reqs.0 {
                    let slot = sink.slot(x.0, rows * d);
                    for r in 0..rows {
                        let base = r * d;
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..d {
                            let gh = g[base + j] * ga[j];
                            m1 = m1 + gh;
                            m2 = m2 + gh * xhat[base + j];
                        }
                        m1 = m1 / dn;
                        m2 = m2 / dn;
                        for j in 0..d {
                            let gh = g[base + j] * ga[j];
                            slot[base + j] =
                                slot[base + j] + (gh - m1 - xhat[base + j] * m2) * inv_s[r];
                        }
                    }
                }
                if reqs.1 {
                    let slot = sink.slot(gain.0, d);
                    for r in 0..rows {
                        for j in 0..d {
                            slot[j] = slot[j] + g[r * d + j] * xhat[r * d + j];
                        }
                    }
                }
                if reqs.2 {
                    let slot = sink.slot(bias.0, d);
                    for r in 0..rows {
                        for j in 0..d {
                            slot[j] = slot[j] + g[r * d + j];
                        }
                    }
                }
            })
        })
    }

    /// Normalize by the mean and variance of the whole tensor (one group),
    /// then apply a per-channel affine transform along `channel_axis`.
    pub fn group_norm_global(
        &self,
        x: Var,
        gain: Var,
        bias: Var,
        channel_axis: usize,
        eps: f64,
    ) -> Result<Var> {
        let tx = self.value(x);
        let tg = self.value(gain);
        let tb = self.value(bias);
        let shape = tx.shape().to_vec();
        if channel_axis >= shape.len() {
            return Err(crate::error::invalid("group_norm", "channel axis out of range"));
        }
        let n_ch = shape[channel_axis];
        if tg.shape() != [n_ch] || tb.shape() != [n_ch] {
            return Err(CoreError::ShapeMismatch {
                op: "group_norm",
                lhs: shape,
                rhs: tg.shape().to_vec(),
            });
        }
        let ch_stride = numel(&shape[channel_axis + 1..]);
        let m = tx.numel();
        let mn = T::from_f64(m as f64);
        let epsv = T::from_f64(eps);
        let xd = tx.data();
        let gd = tg.data();
        let bd = tb.data();
        let mut mean = T::zero();
        for &v in xd.iter() {
            mean = mean + v;
        }
        mean = mean / mn;
        let mut var = T::zero();
        for &v in xd.iter() {
            let c = v - mean;
            var = var + c * c;
        }
        var = var / mn;
        let inv = T::one() / (var + epsv).sqrt();
        let mut out = alloc::vec![T::zero(); m];
        let mut xhat = alloc::vec![T::zero(); m];
        for i in 0..m {
            let h = (xd[i] - mean) * inv;
            xhat[i] = h;
            let c = (i / ch_stride) % n_ch;
            out[i] = gd[c] * h + bd[c];
        }
        let reqs = (self.requires_grad(x), self.requires_grad(gain), self.requires_grad(bias));
        let requires = reqs.0 || reqs.1 || reqs.2;
        let value = Tensor::new(shape, out)?;
        self.push_op("group_norm", value, requires, move || {
            let ga = tg.arc();
            let xhat = Arc::new(xhat);
            alloc::boxed::Box::new(move |g: &[T], sink: &mut Grads<T>| {
                if reqs.0 {
                    let slot = sink.slot(x.0, m);
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for i in 0..m {
                        let gh = g[i] * ga[(i / ch_stride) % n_ch];
                        m1 = m1 + gh;
                        m2 = m2 + gh * xhat[i];
                    }
                    m1 = m1 / mn;
                    m2 = m2 / mn;
                    for i in 0..m {
                        let gh = g[i] * ga[(i / ch_stride) % n_ch];
                        slot[i] = slot[i] + (gh - m1 - xhat[i] * m2) * inv;
                    }
                }
                if reqs.1 {
                    let slot = sink.slot(gain.0, n_ch);
                    for i in 0..m {
                        let c = (i / ch_stride) % n_ch;
                        slot[c] = slot[c] + g[i] * xhat[i];
                    }
                }
                if reqs.2 {
                    let slot = sink.slot(bias.0, n_ch);
                    for i in 0..m {
                        let c = (i / ch_stride) % n_ch;
                        slot[c] = slot[c] + g[i];
                    }
                }
            })
        })
    }
}
