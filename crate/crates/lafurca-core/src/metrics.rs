//! Plain separation metrics computed directly on sample slices.
//!
//! This is a deliberately separate route from [`crate::objective`]: the same
//! quantities evaluated by straight-line arithmetic in `f64`, used for
//! reporting and as an independent cross-check of the differentiable path.

use alloc::vec::Vec;

use crate::error::invalid;
use crate::objective::lex_permutations;
use crate::scalar::Scalar;
use crate::Result;

fn dot64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| x.to_f64() * y.to_f64()).sum()
}

/// Scale-invariant SDR in dB of `estimate` against `target`.
pub fn si_sdr_db<T: Scalar>(target: &[T], estimate: &[T], eps: f64) -> Result<f64> {
    if target.len() != estimate.len() || target.is_empty() {
        return Err(invalid("si_sdr_db", "signals must be non-empty and equal-length"));
    }
    let xx = dot64(target, target);
    if xx == 0.0 {
        return Err(invalid("si_sdr_db", "zero target: projection undefined"));
    }
    let coef = dot64(target, estimate) / xx;
    let mut proj_energy = 0.0;
    let mut err_energy = 0.0;
    for (&x, &s) in target.iter().zip(estimate.iter()) {
        let p = coef * x.to_f64();
        let e = p - s.to_f64();
        proj_energy += p * p;
        err_energy += e * e;
    }
    Ok(10.0 * ((proj_energy + eps) / (err_energy + eps)).log10())
}

/// Plain (scale-sensitive) SNR in dB of `estimate` against `target`.
pub fn snr_db<T: Scalar>(target: &[T], estimate: &[T], eps: f64) -> Result<f64> {
    if target.len() != estimate.len() || target.is_empty() {
        return Err(invalid("snr_db", "signals must be non-empty and equal-length"));
    }
    let mut sig = 0.0;
    let mut noise = 0.0;
    for (&x, &s) in target.iter().zip(estimate.iter()) {
        let xv = x.to_f64();
        let d = xv - s.to_f64();
        sig += xv * xv;
        noise += d * d;
    }
    Ok(10.0 * ((sig + eps) / (noise + eps)).log10())
}

/// Best-permutation alignment of estimates to targets by mean SI-SDR.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Estimate index assigned to each target.
    pub permutation: Vec<usize>,
    /// Per-target SI-SDR (dB) under that assignment.
    pub per_source_db: Vec<f64>,
    /// Mean SI-SDR (dB) under that assignment.
    pub mean_db: f64,
}

/// Exhaustive PIT alignment on slices; ties keep the lexicographically
/// smallest permutation.
pub fn align_by_si_sdr<T: Scalar>(
    targets: &[&[T]],
    estimates: &[&[T]],
    eps: f64,
) -> Result<Alignment> {
    let s = targets.len();
    if s == 0 || estimates.len() != s {
        return Err(invalid("align", "need equal non-empty source sets"));
    }
    let mut pair = alloc::vec![alloc::vec![0.0f64; s]; s];
    for i in 0..s {
        for j in 0..s {
            pair[i][j] = si_sdr_db(targets[i], estimates[j], eps)?;
        }
    }
    let mut best: Option<Alignment> = None;
    for perm in lex_permutations(s) {
        let per: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| pair[i][j]).collect();
        let mean = per.iter().sum::<f64>() / s as f64;
        if best.as_ref().map_or(true, |b| mean > b.mean_db) {
            best = Some(Alignment { permutation: perm, per_source_db: per, mean_db: mean });
        }
    }
    Ok(best.expect("at least one permutation"))
}
