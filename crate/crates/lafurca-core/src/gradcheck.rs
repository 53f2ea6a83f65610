//! Finite-difference verification of the analytic gradients of a full
//! network forward + loss.
//!
//! Runs in `f64`: builds a network from a seed, evaluates the multi-stage
//! PIT loss on a deterministic synthetic mixture, and compares the backward
//! pass against central differences on a sample of parameters that covers
//! every parameter tensor at least once.

use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::network::{HyperParams, ModelSpec, Network};
use crate::objective::{multistage_loss_var, DEFAULT_EPS};
use crate::optim::take_param_grads;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::Result;

/// Small geometry that keeps the check fast while exercising padding on both
/// the frame and chunk axes.
pub fn gradcheck_hp() -> HyperParams {
    HyperParams { window: 8, stride: 4, n_filters: 8, chunk_len: 10, hop: 5, hidden: 8, branches: 3 }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Minimum number of sampled parameter elements.
    pub n_samples: usize,
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    /// Relative-error denominator floor, shielding near-zero gradients from
    /// finite-difference noise.
    pub rel_floor: f64,
    /// Synthetic mixture length in samples.
    pub input_len: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { n_samples: 50, step: 1e-5, tolerance: 1e-3, rel_floor: 1e-3, input_len: 240 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Relative error with a denominator floor.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Multi-stage PIT loss of the network on one example, in dB.
pub fn network_loss(
    net: &Network,
    store: &ParamStore<f64>,
    mixture: &[f64],
    targets: &[Vec<f64>],
) -> Result<f64> {
    let g: Graph<f64> = Graph::new();
    let leaves = store.register_constants(&g);
    let mix = g.constant(Tensor::from_slice(mixture));
    let runs = net.multistage_forward_var(&g, &leaves, mix)?;
    let tv: Vec<Var> = targets.iter().map(|t| g.constant(Tensor::from_slice(t))).collect();
    let stage_ests: Vec<Vec<Var>> = runs.iter().map(|r| r.estimates.clone()).collect();
    let (loss, _) = multistage_loss_var(&g, &stage_ests, &tv, DEFAULT_EPS)?;
    Ok(g.scalar_value(loss))
}

/// Analytic gradients of the same loss for every parameter.
pub fn network_grads(
    net: &Network,
    store: &ParamStore<f64>,
    mixture: &[f64],
    targets: &[Vec<f64>],
) -> Result<Vec<Option<Vec<f64>>>> {
    let g: Graph<f64> = Graph::new();
    let leaves = store.register_leaves(&g);
    let mix = g.constant(Tensor::from_slice(mixture));
    let runs = net.multistage_forward_var(&g, &leaves, mix)?;
    let tv: Vec<Var> = targets.iter().map(|t| g.constant(Tensor::from_slice(t))).collect();
    let stage_ests: Vec<Vec<Var>> = runs.iter().map(|r| r.estimates.clone()).collect();
    let (loss, _) = multistage_loss_var(&g, &stage_ests, &tv, DEFAULT_EPS)?;
    let mut grads = g.backward(loss)?;
    Ok(take_param_grads(&mut grads, &leaves, store.len()))
}

/// Deterministic synthetic mixture and targets for a seed.
pub fn synthetic_example(seed: u64, len: usize, n_sources: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0bad_cafe_f00d);
    let targets: Vec<Vec<f64>> = (0..n_sources)
        .map(|_| (0..len).map(|_| rng.random_range(-0.9..=0.9)).collect())
        .collect();
    let mut mixture = alloc::vec![0.0f64; len];
    for t in &targets {
        for (m, &v) in mixture.iter_mut().zip(t.iter()) {
            *m += v / n_sources as f64;
        }
    }
    (mixture, targets)
}

/// Build the network for `spec` from `seed` and compare analytic gradients
/// against central finite differences on sampled parameter elements.
pub fn gradcheck_network(
    spec: &ModelSpec,
    seed: u64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::build(spec, &mut store, &mut rng)?;
    let (mixture, targets) = synthetic_example(seed, cfg.input_len, spec.n_sources);

    let analytic = network_grads(&net, &store, &mixture, &targets)?;

    // One element from every tensor, then random extras up to n_samples.
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut samples: Vec<(usize, usize)> = Vec::new();
    for (id, p) in store.iter() {
        samples.push((id.0, sample_rng.random_range(0..p.data.len())));
    }
    while samples.len() < cfg.n_samples {
        let pi = sample_rng.random_range(0..store.len());
        let ei = sample_rng.random_range(0..store.get(ParamId(pi)).data.len());
        samples.push((pi, ei));
    }

    let mut store = store;
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    for &(pi, ei) in &samples {
        let orig = store.get(ParamId(pi)).data[ei];
        store.get_mut(ParamId(pi)).data[ei] = orig + cfg.step;
        let plus = network_loss(&net, &store, &mixture, &targets)?;
        store.get_mut(ParamId(pi)).data[ei] = orig - cfg.step;
        let minus = network_loss(&net, &store, &mixture, &targets)?;
        store.get_mut(ParamId(pi)).data[ei] = orig;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let a = analytic[pi].as_ref().map(|g| g[ei]).unwrap_or(0.0);
        let err = rel_err(a, numeric, cfg.rel_floor);
        if err > max_rel {
            max_rel = err;
            worst = alloc::format!("{}[{}]", store.get(ParamId(pi)).name, ei);
        }
    }
    Ok(GradCheckReport {
        checked: samples.len(),
        max_rel_err: max_rel,
        worst_param: worst,
        tolerance: cfg.tolerance,
    })
}
