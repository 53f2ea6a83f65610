//! Utterance-level SI-SDR training objective with permutation-invariant
//! assignment and multi-stage averaging.
//!
//! SI-SDR of an estimate `s` against a target `x` uses the scaled-target
//! projection: `proj = (<x,s>/<x,x>) x`, `e = proj - s`, and the value is
//! `10*log10((<proj,proj>+eps)/(<e,e>+eps))`. The permutation search is an
//! exhaustive scan over all assignments (sources are few); gradients flow
//! only through the winning assignment, which backward treats as constant.

use alloc::vec::Vec;

use crate::error::{invalid, CoreError};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Result;

/// Default epsilon flooring both the numerator and denominator energies.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Largest source count accepted by the factorial permutation search.
pub const MAX_SOURCES: usize = 6;

const TEN_OVER_LN10: f64 = 4.342944819032518;

/// Graph nodes produced by [`si_sdr_var`].
pub struct SiSdrVars {
    /// Scalar SI-SDR in dB.
    pub value: Var,
    /// Scaled-target projection, same shape as the inputs.
    pub projection: Var,
    /// Error `projection - estimate`.
    pub error: Var,
}

/// Differentiable SI-SDR of `estimate` against `target` (both 1-D nodes).
pub fn si_sdr_var<T: Scalar>(
    g: &Graph<T>,
    target: Var,
    estimate: Var,
    eps: f64,
) -> Result<SiSdrVars> {
    let ts = g.shape_of(target);
    let es = g.shape_of(estimate);
    if ts != es || ts.len() != 1 {
        return Err(CoreError::ShapeMismatch { op: "si_sdr", lhs: ts, rhs: es });
    }
    let xx = g.dot(target, target)?;
    if g.scalar_value(xx) == T::zero() {
        return Err(invalid("si_sdr", "zero target: projection undefined"));
    }
    let xs = g.dot(target, estimate)?;
    let coef = g.div(xs, xx)?;
    let projection = g.mul(target, coef)?;
    let error = g.sub(projection, estimate)?;
    let num = g.affine(g.dot(projection, projection)?, 1.0, eps)?;
    let den = g.affine(g.dot(error, error)?, 1.0, eps)?;
    let ratio = g.div(num, den)?;
    let value = g.affine(g.ln(ratio)?, TEN_OVER_LN10, 0.0)?;
    Ok(SiSdrVars { value, projection, error })
}

/// Result of the permutation-invariant assignment on graph nodes.
pub struct PitVars {
    /// Scalar loss node: negative mean SI-SDR under the best assignment.
    pub loss: Var,
    /// Winning permutation: estimate index assigned to each target.
    pub permutation: Vec<usize>,
    /// Per-target SI-SDR value nodes under the winning permutation.
    pub pair_values: Vec<Var>,
    /// Mean SI-SDR (dB) under the winning permutation.
    pub best_mean_db: f64,
}

/// Differentiable PIT loss over `S` targets and `S` estimates.
pub fn pit_loss_var<T: Scalar>(
    g: &Graph<T>,
    targets: &[Var],
    estimates: &[Var],
    eps: f64,
) -> Result<PitVars> {
    let s = targets.len();
    if s == 0 || estimates.len() != s {
        return Err(invalid(
            "pit_loss",
            alloc::format!("need equal non-empty source sets, got {s} targets and {} estimates", estimates.len()),
        ));
    }
    if s > MAX_SOURCES {
        return Err(invalid("pit_loss", alloc::format!("factorial search limited to {MAX_SOURCES} sources")));
    }
    // SI-SDR node for every (target, estimate) pair.
    let mut pair: Vec<Vec<Var>> = Vec::with_capacity(s);
    for &t in targets {
        let mut row = Vec::with_capacity(s);
        for &e in estimates {
            row.push(si_sdr_var(g, t, e, eps)?.value);
        }
        pair.push(row);
    }
    // Exhaustive scan in lexicographic order; strict improvement keeps the
    // lexicographically smallest permutation on ties.
    let mut best_perm: Option<Vec<usize>> = None;
    let mut best_mean = f64::NEG_INFINITY;
    for perm in lex_permutations(s) {
        let mean: f64 = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| g.scalar_value(pair[i][j]).to_f64())
            .sum::<f64>()
            / s as f64;
        if mean > best_mean {
            best_mean = mean;
            best_perm = Some(perm);
        }
    }
    let permutation = best_perm.expect("at least one permutation");
    let pair_values: Vec<Var> = permutation.iter().enumerate().map(|(i, &j)| pair[i][j]).collect();
    let mut sum = pair_values[0];
    for &v in &pair_values[1..] {
        sum = g.add(sum, v)?;
    }
    let loss = g.affine(sum, -1.0 / s as f64, 0.0)?;
    Ok(PitVars { loss, permutation, pair_values, best_mean_db: best_mean })
}

/// Mean of per-stage PIT losses; each stage searches its own permutation.
pub fn multistage_loss_var<T: Scalar>(
    g: &Graph<T>,
    stage_estimates: &[Vec<Var>],
    targets: &[Var],
    eps: f64,
) -> Result<(Var, Vec<PitVars>)> {
    if stage_estimates.is_empty() {
        return Err(invalid("multistage_loss", "need at least one stage"));
    }
    let mut pits = Vec::with_capacity(stage_estimates.len());
    for ests in stage_estimates {
        pits.push(pit_loss_var(g, targets, ests, eps)?);
    }
    let mut sum = pits[0].loss;
    for p in &pits[1..] {
        sum = g.add(sum, p.loss)?;
    }
    let loss = g.affine(sum, 1.0 / pits.len() as f64, 0.0)?;
    Ok((loss, pits))
}

/// All permutations of `0..s` in lexicographic order.
pub fn lex_permutations(s: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, remaining: &[usize], out: &mut Vec<Vec<usize>>) {
        if remaining.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for (i, &r) in remaining.iter().enumerate() {
            prefix.push(r);
            let mut rest = remaining.to_vec();
            rest.remove(i);
            rec(prefix, &rest, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &(0..s).collect::<Vec<_>>(), &mut out);
    out
}

/// SI-SDR of an estimate against a target, with the projection and error.
#[derive(Debug, Clone)]
pub struct SiSdrBreakdown<T> {
    pub projection: Vec<T>,
    pub error: Vec<T>,
    pub value_db: T,
}

/// Standalone SI-SDR on waveform slices.
pub fn si_sdr<T: Scalar>(target: &[T], estimate: &[T], eps: f64) -> Result<SiSdrBreakdown<T>> {
    let g: Graph<T> = Graph::new();
    let t = g.constant(Tensor::from_slice(target));
    let e = g.constant(Tensor::from_slice(estimate));
    let parts = si_sdr_var(&g, t, e, eps)?;
    Ok(SiSdrBreakdown {
        projection: g.value(parts.projection).data().to_vec(),
        error: g.value(parts.error).data().to_vec(),
        value_db: g.scalar_value(parts.value),
    })
}

/// Result of a standalone PIT evaluation.
#[derive(Debug, Clone)]
pub struct PitResult<T> {
    /// Estimate index assigned to each target.
    pub permutation: Vec<usize>,
    /// Per-target SI-SDR (dB) under the winning permutation.
    pub pair_si_sdrs: Vec<T>,
    /// Negative mean of the winning SI-SDRs.
    pub loss_db: T,
}

/// Standalone PIT loss on waveform slices.
pub fn pit_loss<T: Scalar>(targets: &[&[T]], estimates: &[&[T]], eps: f64) -> Result<PitResult<T>> {
    let g: Graph<T> = Graph::new();
    let tv: Vec<Var> = targets.iter().map(|t| g.constant(Tensor::from_slice(t))).collect();
    let ev: Vec<Var> = estimates.iter().map(|e| g.constant(Tensor::from_slice(e))).collect();
    let pit = pit_loss_var(&g, &tv, &ev, eps)?;
    Ok(PitResult {
        permutation: pit.permutation.clone(),
        pair_si_sdrs: pit.pair_values.iter().map(|&v| g.scalar_value(v)).collect(),
        loss_db: g.scalar_value(pit.loss),
    })
}

/// Standalone multi-stage loss: mean of per-stage PIT losses.
pub fn multistage_loss<T: Scalar>(
    stage_estimates: &[Vec<&[T]>],
    targets: &[&[T]],
    eps: f64,
) -> Result<T> {
    let g: Graph<T> = Graph::new();
    let tv: Vec<Var> = targets.iter().map(|t| g.constant(Tensor::from_slice(t))).collect();
    let sv: Vec<Vec<Var>> = stage_estimates
        .iter()
        .map(|stage| stage.iter().map(|e| g.constant(Tensor::from_slice(e))).collect())
        .collect();
    let (loss, _) = multistage_loss_var(&g, &sv, &tv, eps)?;
    Ok(g.scalar_value(loss))
}
