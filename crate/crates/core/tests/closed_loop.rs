use std::sync::Arc;

use iofp_sync::analysis::{eval_full_lyapunov, feedforward_residual, gain_monitor, input_sum_residual, SyncMetrics};
use iofp_sync::controllers::{stack_output_matrices, Controller, ControllerConfig, ControllerFamily, LinearEdge};
use iofp_sync::exosystems::{constant_exo, rotation_exo, ExoModel, Exosystem};
use iofp_sync::graph::{Graph, GraphOperators};
use iofp_sync::plants::{vanderpol, Plant};
use iofp_sync::simulator::{simulate, ClosedLoop, InitialConditions, SimConfig, SimError, Status};
use iofp_sync::Trajectory;
use nalgebra::DMatrix;

fn sparse_graph() -> Graph {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 1.0, 0.0, 4.0, 1.0, 0.0, 9.0, 4.0, 0.0, 9.0, 0.0, 1.0, 4.0, 4.0, 1.0, 0.0,
        ],
    ) * 0.09;
    Graph::from_adjacency(a).unwrap()
}

fn disturbances() -> Vec<Exosystem> {
    let r = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    vec![
        constant_exo(1, None).unwrap(),
        constant_exo(1, None).unwrap(),
        rotation_exo(1.0, None, r.clone()).unwrap(),
        rotation_exo(1.0, None, r).unwrap(),
    ]
}

fn silent() -> Vec<Exosystem> {
    vec![Exosystem::new(ExoModel::silent(1), None).unwrap(); 4]
}

fn paper_edges() -> Vec<LinearEdge> {
    [[LinearEdge::INTEGRATOR; 3], [LinearEdge::LEAKY; 3]].concat()
}

fn build(graph: Graph, exos: Vec<Exosystem>, cfg: ControllerConfig) -> ClosedLoop {
    let ops = GraphOperators::new(&graph).unwrap();
    let models: Vec<ExoModel> = exos.iter().map(|e| e.model.clone()).collect();
    let controller = Controller::build(cfg, &graph, &ops, &models, 1).unwrap();
    ClosedLoop::new(graph, ops, Arc::new(vanderpol(1.0).unwrap()), exos, controller).unwrap()
}

fn run(lp: &ClosedLoop, seed: u64, t_final: f64) -> Trajectory {
    let z0 = lp.initial_state(&InitialConditions::random(seed)).unwrap();
    let cfg = SimConfig {
        t_final,
        ..SimConfig::default()
    };
    simulate(lp, z0, &cfg).unwrap()
}

#[test]
fn layout_follows_component_dimensions() {
    let lp = build(
        sparse_graph(),
        disturbances(),
        ControllerConfig::new(ControllerFamily::NodeAdaptiveIm, 4, 5),
    );
    let l = lp.layout();
    assert_eq!(
        (l.x.clone(), l.w.clone(), l.xi.clone(), l.gains.clone()),
        (0..8, 8..14, 14..20, 20..24)
    );
    assert_eq!(lp.dim(), 24);

    let lp = build(
        sparse_graph(),
        disturbances(),
        ControllerConfig::new(ControllerFamily::EdgeAdaptiveIm, 4, 5),
    );
    assert_eq!(lp.layout().zeta, 14..44);
    assert_eq!(lp.layout().gains, 44..49);

    let mut cfg = ControllerConfig::new(ControllerFamily::DynamicEdgesIm, 4, 6);
    cfg.edges = paper_edges();
    let lp = build(Graph::complete(4, 1.0).unwrap(), disturbances(), cfg);
    let l = lp.layout();
    assert_eq!((l.xi.clone(), l.eta.clone(), l.gains.clone()), (14..20, 20..26, 26..26));
}

#[test]
fn initial_conditions_follow_protocol() {
    let mut cfg = ControllerConfig::new(ControllerFamily::DynamicEdgesIm, 4, 6);
    cfg.edges = paper_edges();
    let lp = build(Graph::complete(4, 1.0).unwrap(), disturbances(), cfg);
    let z0 = lp.initial_state(&InitialConditions::random(11)).unwrap();
    let l = lp.layout();
    for r in [l.x.clone(), l.w.clone(), l.eta.clone()] {
        assert!(z0[r].iter().all(|v| (-3.0..=3.0).contains(v) && *v != 0.0));
    }
    assert!(z0[l.xi.clone()].iter().all(|&v| v == 0.0));
    assert_eq!(z0, lp.initial_state(&InitialConditions::random(11)).unwrap());
    assert_ne!(z0, lp.initial_state(&InitialConditions::random(12)).unwrap());
}

#[test]
fn single_vanderpol_at_equilibrium_stays_put() {
    let g = Graph::from_edges(1, &[]).unwrap();
    let exos = vec![Exosystem::new(ExoModel::silent(1), None).unwrap()];
    let lp = build(g, exos, ControllerConfig::new(ControllerFamily::StaticDiffusive, 1, 0));
    let traj = simulate(
        &lp,
        vec![0.0, 0.0],
        &SimConfig {
            t_final: 10.0,
            ..SimConfig::default()
        },
    )
    .unwrap();
    assert!(traj.states().all(|z| z.iter().all(|&v| v == 0.0)));
    assert_eq!(traj.len(), 10_001);
}

#[test]
fn rotation_exosystem_returns_after_one_period() {
    let g = Graph::from_edges(1, &[]).unwrap();
    let exo = rotation_exo(1.0, Some(vec![1.0, 0.0]), DMatrix::from_row_slice(1, 2, &[0.0, 0.0])).unwrap();
    let lp = build(
        g,
        vec![exo],
        ControllerConfig::new(ControllerFamily::StaticDiffusive, 1, 0),
    );
    let cfg = SimConfig {
        t_final: std::f64::consts::TAU,
        ..SimConfig::default()
    };
    let traj = simulate(&lp, vec![0.0, 0.0, 1.0, 0.0], &cfg).unwrap();
    let w = &traj.last().unwrap()[2..4];
    assert!((w[0] - 1.0).abs() < 1e-8 && w[1].abs() < 1e-8, "{w:?}");
    assert!((traj.times.last().unwrap() - std::f64::consts::TAU).abs() < 1e-12);
    assert!(traj.h <= 1e-3);
}

#[derive(Debug)]
struct Quadratic;

impl Plant for Quadratic {
    fn state_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn derivative(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) {
        dx[0] = x[0] * x[0] + u[0] + d[0];
    }
    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }
    fn name(&self) -> &str {
        "quadratic"
    }
}

#[test]
fn finite_escape_trips_the_guard() {
    let g = Graph::from_edges(1, &[]).unwrap();
    let ops = GraphOperators::new(&g).unwrap();
    let exos = vec![Exosystem::new(ExoModel::silent(1), None).unwrap()];
    let cfg = ControllerConfig::new(ControllerFamily::StaticDiffusive, 1, 0);
    let controller = Controller::build(cfg, &g, &ops, &[ExoModel::silent(1)], 1).unwrap();
    let lp = ClosedLoop::new(g, ops, Arc::new(Quadratic), exos, controller).unwrap();
    let sim = SimConfig {
        t_final: 2.0,
        h: 1e-4,
        ..SimConfig::default()
    };
    match simulate(&lp, vec![1.0], &sim) {
        Err(SimError::Diverged { t, trajectory, .. }) => {
            assert!(t < 1.01, "tripped at {t}");
            assert_eq!(trajectory.status, Status::Diverged { t });
            assert_eq!(*trajectory.times.last().unwrap(), t);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn equilibrium_blocks_have_zero_derivative() {
    // Synchronized zero outputs and zero exosystem states: every controller
    // and exosystem block is at rest.
    for family in [ControllerFamily::NodeAdaptiveIm, ControllerFamily::EdgeAdaptiveIm] {
        let lp = build(sparse_graph(), disturbances(), ControllerConfig::new(family, 4, 5));
        let l = lp.layout().clone();
        let mut z = vec![0.0; lp.dim()];
        z[l.gains.clone()].iter_mut().for_each(|k| *k = 1.7);
        let mut dz = vec![1.0; lp.dim()];
        lp.derivative(0.0, &z, &mut dz).unwrap();
        assert!(dz.iter().all(|&v| v == 0.0), "{family}: {dz:?}");
    }
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let lp = build(
        sparse_graph(),
        disturbances(),
        ControllerConfig::new(ControllerFamily::EdgeAdaptiveIm, 4, 5),
    );
    let a = run(&lp, 3, 5.0);
    let b = run(&lp, 3, 5.0);
    assert_eq!(a, b);
}

#[test]
fn node_controllers_synchronize_and_dissipate() {
    let lp = build(
        sparse_graph(),
        disturbances(),
        ControllerConfig::new(ControllerFamily::NodeAdaptiveIm, 4, 5),
    );
    let traj = run(&lp, 1, 100.0);
    let m = SyncMetrics::from_trajectory(&lp, &traj, 1e-2, 20.0);
    assert!(m.max_on(80.0, 100.0) < 1e-2);
    assert!(m.settled);
    let lyap = eval_full_lyapunov(&lp, &traj, None, None).unwrap();
    assert!(lyap.values[0] > 0.0 && lyap.values[0].is_finite());
    assert!(lyap.values.iter().all(|&v| v >= 0.0));
    assert!(lyap.monotonicity().pass);
    let k_star = lyap.constants.gain_star.unwrap();
    assert!((k_star - 2.0 / lp.ops().lambda2).abs() < 1e-12);
    assert!(lyap.constants.epsilon.unwrap() > 0.0);
    let gains = gain_monitor(lp.layout(), &traj);
    assert!(gains.nondecreasing);
}

#[test]
fn edge_controllers_reject_disturbances_on_a_longer_horizon() {
    let lp = build(
        sparse_graph(),
        disturbances(),
        ControllerConfig::new(ControllerFamily::EdgeAdaptiveIm, 4, 5),
    );
    let traj = run(&lp, 2, 300.0);
    let m = SyncMetrics::from_trajectory(&lp, &traj, 1e-2, 20.0);
    assert!(m.max_on(280.0, 300.0) < 1e-2);
    assert!(m.max_on(280.0, 300.0) < m.max_on(80.0, 100.0));
    assert!(eval_full_lyapunov(&lp, &traj, None, None).unwrap().monotonicity().pass);
    assert!(gain_monitor(lp.layout(), &traj).nondecreasing);

    let Controller::Edge { bank } = lp.controller() else {
        unreachable!()
    };
    let models: Vec<ExoModel> = lp.exosystems().iter().map(|e| e.model.clone()).collect();
    let r = stack_output_matrices(&models, 1);
    for z in traj.states().step_by(97) {
        let res = feedforward_residual(lp.ops(), bank.h(), &r, 1, &z[lp.layout().w.clone()]);
        assert!(res < 1e-9);
    }
}

#[test]
fn given_edges_conserve_the_input_sum() {
    let mut cfg = ControllerConfig::new(ControllerFamily::DynamicEdges, 4, 6);
    cfg.edges = paper_edges();
    let lp = build(Graph::complete(4, 1.0).unwrap(), silent(), cfg);
    let traj = run(&lp, 4, 20.0);
    for z in traj.states().step_by(13) {
        assert!(input_sum_residual(&lp.channels(z).u, 1) < 1e-9);
    }
    assert!(eval_full_lyapunov(&lp, &traj, None, None).unwrap().monotonicity().pass);
}

#[test]
fn corollary_configurations_dissipate() {
    let passive = [
        [LinearEdge {
            leak: 0.0,
            feedthrough: 0.0,
        }; 3],
        [LinearEdge {
            leak: 1.0,
            feedthrough: 0.0,
        }; 3],
    ]
    .concat();
    let mut cfg = ControllerConfig::new(ControllerFamily::DynamicEdgesAdaptive, 4, 6);
    cfg.edges = passive.clone();
    let lp = build(Graph::complete(4, 0.1).unwrap(), silent(), cfg);
    let traj = run(&lp, 5, 40.0);
    assert!(eval_full_lyapunov(&lp, &traj, None, None).unwrap().monotonicity().pass);
    assert!(gain_monitor(lp.layout(), &traj).nondecreasing);

    let mut cfg = ControllerConfig::new(ControllerFamily::DynamicEdgesAdaptiveIm, 4, 6);
    cfg.edges = passive;
    let lp = build(Graph::complete(4, 1.0).unwrap(), disturbances(), cfg);
    let traj = run(&lp, 5, 40.0);
    assert!(eval_full_lyapunov(&lp, &traj, None, None).unwrap().monotonicity().pass);
    assert!(gain_monitor(lp.layout(), &traj).nondecreasing);
}

#[test]
fn static_diffusive_has_no_lyapunov_certificate() {
    let lp = build(
        sparse_graph(),
        disturbances(),
        ControllerConfig::new(ControllerFamily::StaticDiffusive, 4, 5),
    );
    let traj = run(&lp, 1, 1.0);
    assert!(eval_full_lyapunov(&lp, &traj, None, None).is_err());
}
