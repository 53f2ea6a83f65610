//! End-to-end finite-difference gradient verification of whole networks,
//! and the cross-stage gradient-flow probe.

use lafurca_core::gradcheck::{
    gradcheck_hp, gradcheck_network, network_grads, rel_err, synthetic_example, GradCheckConfig,
};
use lafurca_core::graph::{Graph, Var};
use lafurca_core::network::{parse_model_spec, Network};
use lafurca_core::objective::{pit_loss_var, DEFAULT_EPS};
use lafurca_core::params::{ParamId, ParamStore};
use lafurca_core::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn checked_spec(text: &str) -> lafurca_core::network::ModelSpec {
    let mut spec = parse_model_spec(text).unwrap();
    spec.hp = gradcheck_hp();
    spec
}

#[test]
fn gradcheck_plain_two_block() {
    let report = gradcheck_network(&checked_spec("LF(2)"), 7, &GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "max rel err {} at {}", report.max_rel_err, report.worst_param);
    assert!(report.checked >= 50);
}

#[test]
fn gradcheck_parallel() {
    let report =
        gradcheck_network(&checked_spec("LF(P,2)"), 11, &GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "max rel err {} at {}", report.max_rel_err, report.worst_param);
}

#[test]
fn gradcheck_cross() {
    let report =
        gradcheck_network(&checked_spec("LF(C,2)"), 13, &GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "max rel err {} at {}", report.max_rel_err, report.worst_param);
}

#[test]
fn gradcheck_two_stage() {
    let report =
        gradcheck_network(&checked_spec("LF(2,2)"), 17, &GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "max rel err {} at {}", report.max_rel_err, report.worst_param);
}

#[test]
fn every_parameter_receives_gradient() {
    // Symmetry-breaking initialization keeps all branches alive, so every
    // tensor of a parallel cross network sees gradient from the loss.
    let spec = checked_spec("LF(P,C,2)");
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let net = Network::build(&spec, &mut store, &mut rng).unwrap();
    let (mixture, targets) = synthetic_example(23, 240, 2);
    let grads = network_grads(&net, &store, &mixture, &targets).unwrap();
    for (id, p) in store.iter() {
        let g = grads[id.0].as_ref().unwrap_or_else(|| panic!("no gradient for {}", p.name));
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "zero gradient for {}", p.name);
    }
}

#[test]
fn stage_one_receives_gradient_through_stage_two_only() {
    // Loss taken on stage 2's output alone still reaches stage-1 weights,
    // because stage 2 consumes stage 1's estimates.
    let spec = checked_spec("LF(2,2)");
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let net = Network::build(&spec, &mut store, &mut rng).unwrap();
    let (mixture, targets) = synthetic_example(29, 240, 2);

    let stage2_loss = |store: &ParamStore<f64>| -> f64 {
        let g: Graph<f64> = Graph::new();
        let leaves = store.register_constants(&g);
        let mix = g.constant(Tensor::from_slice(&mixture));
        let runs = net.multistage_forward_var(&g, &leaves, mix).unwrap();
        let tv: Vec<Var> = targets.iter().map(|t| g.constant(Tensor::from_slice(t))).collect();
        let pit = pit_loss_var(&g, &tv, &runs[1].estimates, DEFAULT_EPS).unwrap();
        g.scalar_value(pit.loss)
    };

    // Analytic gradient of the stage-2-only loss.
    let analytic = {
        let g: Graph<f64> = Graph::new();
        let leaves = store.register_leaves(&g);
        let mix = g.constant(Tensor::from_slice(&mixture));
        let runs = net.multistage_forward_var(&g, &leaves, mix).unwrap();
        let tv: Vec<Var> = targets.iter().map(|t| g.constant(Tensor::from_slice(t))).collect();
        let pit = pit_loss_var(&g, &tv, &runs[1].estimates, DEFAULT_EPS).unwrap();
        let mut grads = g.backward(pit.loss).unwrap();
        lafurca_core::optim::take_param_grads(&mut grads, &leaves, store.len())
    };

    // Probe one stage-1 weight with central differences.
    let pid = store.find("stage0.block0.intra.branch0.fwd.w_ih").unwrap();
    let a = analytic[pid.0].as_ref().expect("stage-1 weight gets gradient")[0];
    assert!(a != 0.0, "gradient through stage 2 should be nonzero");

    let h = 1e-5;
    let mut store = store;
    let orig = store.get(pid).data[0];
    store.get_mut(pid).data[0] = orig + h;
    let lp = stage2_loss(&store);
    store.get_mut(pid).data[0] = orig - h;
    let lm = stage2_loss(&store);
    store.get_mut(ParamId(pid.0)).data[0] = orig;
    let numeric = (lp - lm) / (2.0 * h);
    assert!(numeric != 0.0);
    assert!(rel_err(a, numeric, 1e-3) < 1e-3, "analytic {a} vs fd {numeric}");
}
