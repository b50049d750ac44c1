mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use newton_consensus::costs::{CostFunction, QuadraticCost};
use newton_consensus::engine::{EngineError, LossKind, RanrcProtocol, RunSpec, SchedulerKind, BoundedPattern};
use newton_consensus::graph::random_strongly_connected_digraph;
use newton_consensus::oracle::{expected_fixed_point_perturbation, newton_minimize, NewtonOptions};
use newton_consensus::{mass_audit, DirectedGraph, Network, RanrcParams, Simulator};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn spec(events: u64, loss: LossKind) -> RunSpec {
    RunSpec {
        scheduler: SchedulerKind::UniformRandom,
        loss,
        events,
        scheduler_seed: 5,
        loss_seed: 6,
        per_node_errors: false,
        snapshot_stride: 0,
    }
}

fn triangle() -> Network {
    let graph = DirectedGraph::from_edge_list(3, &[(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
    let costs: Vec<Arc<dyn CostFunction>> = [(1.0, 2.0), (2.0, -1.0), (0.5, 4.0)]
        .iter()
        .map(|&(w, a)| Arc::new(QuadraticCost::scalar(w, a).unwrap()) as Arc<dyn CostFunction>)
        .collect();
    Network::new(graph, costs).unwrap()
}

fn params(eps: f64) -> RanrcProtocol {
    RanrcProtocol(RanrcParams::new(eps, RanrcParams::DEFAULT_THRESHOLD).unwrap())
}

#[test]
fn delivery_after_drop_carries_all_in_flight_mass() {
    let net = triangle();
    let x0 = [DVector::zeros(1)];
    let s = spec(0, LossKind::None);
    let mut lossy = Simulator::new(&net, params(0.0), &x0, &s).unwrap();
    let mut clean = Simulator::new(&net, params(0.0), &x0, &s).unwrap();

    // node 0 broadcasts twice; the first packet to node 1 is lost
    lossy.step_with(0, |_, to| to != 1).unwrap();
    clean.step_with(0, |_, _| true).unwrap();
    let (ry, rz) = mass_audit(lossy.states(), &net.graph);
    assert!(ry <= 1e-15 && rz <= 1e-15, "mass is parked on the edge, not lost");
    assert!(lossy.states()[1].y != clean.states()[1].y);

    lossy.step_with(0, |_, _| true).unwrap();
    clean.step_with(0, |_, _| true).unwrap();
    for (a, b) in lossy.states().iter().zip(clean.states()) {
        assert!((a.y[0] - b.y[0]).abs() <= 1e-15);
        assert!((a.z[(0, 0)] - b.z[(0, 0)]).abs() <= 1e-15);
    }
    let total_lossy: f64 = lossy.states().iter().map(|s| s.y[0]).sum();
    let total_clean: f64 = clean.states().iter().map(|s| s.y[0]).sum();
    assert!((total_lossy - total_clean).abs() <= 1e-14);
}

#[test]
fn dropped_packet_leaves_receiver_untouched() {
    let net = triangle();
    let mut sim = Simulator::new(&net, params(0.05), &[DVector::zeros(1)], &spec(0, LossKind::None)).unwrap();
    let before = sim.states()[1].clone();
    sim.step_with(0, |_, _| false).unwrap();
    assert_eq!(sim.states()[1], before);
    assert_ne!(sim.states()[0].b_y, before.b_y);
}

#[test]
fn bounded_losses_never_exceed_bound() {
    let net = triangle();
    for pattern in [BoundedPattern::Periodic, BoundedPattern::CappedBernoulli { p: 0.95 }] {
        let s = spec(20_000, LossKind::Bounded { max_consecutive: 4, pattern });
        let mut sim = Simulator::new(&net, params(0.01), &[DVector::zeros(1)], &s).unwrap();
        for _ in 0..s.events {
            match sim.step() {
                Ok(_) => {}
                Err(EngineError::LossBoundViolated { .. }) => panic!("bound violated"),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn threshold_inactive_at_steady_state() {
    let cfg = load_config("quadratic.toml");
    let net = cfg.build_network().unwrap();
    let mut run_spec = cfg.run_spec();
    run_spec.events = 50_000;
    let mut sim = Simulator::new(&net, RanrcProtocol(cfg.ranrc_params().unwrap()), &[DVector::zeros(1)], &run_spec)
        .unwrap();
    for _ in 0..run_spec.events {
        sim.step().unwrap();
    }
    let c = cfg.algorithm.threshold;
    assert!(sim.states().iter().all(|s| s.z[(0, 0)] > c));
}

#[test]
fn perturbation_zero_is_exact() {
    let (net, x_star) = perturbation_network();
    let zero: Vec<_> = (0..net.node_count()).map(|_| (DVector::zeros(2), DMatrix::zeros(2, 2))).collect();
    let d = settle(&net, &x_star, &zero);
    assert!(d <= 1e-9, "{d:e}");
}

#[test]
fn perturbation_distance_shrinks_with_amplitude() {
    let (net, x_star) = perturbation_network();
    let base = base_perturbation(net.node_count());
    let big = settle(&net, &x_star, &scaled(&base, 1e-3));
    let small = settle(&net, &x_star, &scaled(&base, 1e-6));
    assert!(small < big, "{small:e} vs {big:e}");
    assert!(big > 1e-7);
}

#[test]
fn perturbation_sign_flip_comparable() {
    let (net, x_star) = perturbation_network();
    let base = base_perturbation(net.node_count());
    let plus = settle(&net, &x_star, &scaled(&base, 1e-3));
    let minus = settle(&net, &x_star, &scaled(&base, -1e-3));
    let ratio = plus / minus;
    assert!((0.1..=10.0).contains(&ratio), "{plus:e} vs {minus:e}");
}

fn perturbation_network() -> (Network, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let graph = random_strongly_connected_digraph(6, 0.3, &mut rng).unwrap();
    let costs: Vec<_> = (0..6).map(|_| random_quadratic(2, &mut rng)).collect();
    let net = Network::new(graph, costs).unwrap();
    let x_star = newton_minimize(&net.cost_refs(), &DVector::zeros(2), &NewtonOptions::default()).unwrap().x_star;
    (net, x_star)
}

fn base_perturbation(n: usize) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    (0..n)
        .map(|_| {
            let dz = random_vector(4, -1.0, 1.0, &mut rng);
            (random_vector(2, -1.0, 1.0, &mut rng), DMatrix::from_column_slice(2, 2, dz.as_slice()))
        })
        .collect()
}

fn scaled(p: &[(DVector<f64>, DMatrix<f64>)], k: f64) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    p.iter().map(|(y, z)| (y * k, z * k)).collect()
}

fn settle(net: &Network, x_star: &DVector<f64>, p: &[(DVector<f64>, DMatrix<f64>)]) -> f64 {
    let s = spec(1_000_000, LossKind::Bernoulli { p: 0.2 });
    let params = RanrcParams::new(0.1, RanrcParams::DEFAULT_THRESHOLD).unwrap();
    expected_fixed_point_perturbation(net, params, &s, &DVector::zeros(2), x_star, p, 2_000, 1e-11).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scripted_runs_conserve_mass(
        n in 2usize..7,
        extra in 0.0f64..0.5,
        eps in 0.0f64..0.05,
        seed in any::<u64>(),
        script in prop::collection::vec((any::<u16>(), any::<u64>()), 1..300),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_strongly_connected_digraph(n, extra, &mut rng).unwrap();
        let costs: Vec<_> = (0..n).map(|_| random_quadratic(2, &mut rng)).collect();
        let net = Network::new(graph, costs).unwrap();
        let mut sim = Simulator::new(&net, params(eps), &[DVector::zeros(2)], &spec(0, LossKind::None)).unwrap();
        for (who, bits) in script {
            let sigma = who as usize % n;
            let mut k = 0;
            sim.step_with(sigma, |_, _| { k += 1; bits >> (k % 64) & 1 == 1 }).unwrap();
            let (ry, rz) = mass_audit(sim.states(), &net.graph);
            prop_assert!(ry <= 1e-9 && rz <= 1e-9, "{} {}", ry, rz);
        }
    }
}
