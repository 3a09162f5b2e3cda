//! Acceptance suite. Prints one PASS/FAIL line per criterion, followed by
//! the measured values, and exits nonzero if any criterion fails.

use std::fs;
use std::process::ExitCode;

use iofp_sync::analysis::{feedforward_residual, input_sum_residual, lemma2_sides};
use iofp_sync::controllers::stack_output_matrices;
use iofp_sync::exosystems::ExoModel;
use iofp_sync::graph::{random_connected, verify_incidence, Graph, GraphOperators, IdentityResiduals};
use iofp_sync::plants::{check_iofp, chua, vanderpol, IofpSampler, PiecewiseLinear};
use iofp_sync::Controller;
use iofp_sync_cli::presets::preset;
use iofp_sync_cli::run::{run, simulate_scenario, Outcome};
use iofp_sync_cli::scenario::{Overrides, Scenario};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 1e-10;
const LAMBDA_TOL: f64 = 1e-9;
const SYNC_TOL: f64 = 1e-2;
const WINDOW: (f64, f64) = (80.0, 100.0);
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const FEEDFORWARD_TOL: f64 = 1e-9;
const INPUT_SUM_TOL: f64 = 1e-9;
const NEGATIVE_CONTROL_FLOOR: f64 = 5e-2;
const ROTATION_DRIFT_TOL: f64 = 1e-8;
const STEP_HALVING_TOL: f64 = 1e-4;

struct Criterion {
    id: u32,
    title: &'static str,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Criterion {
            id,
            title,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, detail: String, pass: bool) {
        self.checks.push((detail, pass));
    }

    fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }

    fn print(&self) {
        let tag = if self.pass() { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {}", self.id, self.title);
        for (detail, ok) in &self.checks {
            println!("    [{}] {detail}", if *ok { "ok" } else { "FAIL" });
        }
    }
}

fn mat(rows: &[&[f64]], scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j] * scale)
}

fn lbar_graph() -> Graph {
    let lbar: &[&[f64]] = &[
        &[5.0, -1.0, 0.0, -4.0],
        &[-1.0, 14.0, -9.0, -4.0],
        &[0.0, -9.0, 10.0, -1.0],
        &[-4.0, -4.0, -1.0, 9.0],
    ];
    let l = mat(lbar, 0.09);
    Graph::from_adjacency(DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { -l[(i, j)] })).unwrap()
}

fn graph_identities() -> Criterion {
    let mut c = Criterion::new(1, "graph identities and algebraic connectivity");
    let bbar = mat(
        &[
            &[1.0, 0.0, 0.0, 0.0, 2.0],
            &[-1.0, 3.0, 2.0, 0.0, 0.0],
            &[0.0, -3.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, -2.0, -1.0, -2.0],
        ],
        0.3,
    );
    let bk4 = mat(
        &[
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            &[-1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            &[0.0, -1.0, 0.0, 0.0, -1.0, 1.0],
            &[0.0, 0.0, -1.0, -1.0, 0.0, -1.0],
        ],
        1.0,
    );
    let g1 = lbar_graph();
    let k4 = Graph::complete(4, 1.0).unwrap();
    for (name, g, b) in [("0.09 Lbar", &g1, &bbar), ("K4", &k4, &bk4)] {
        let ops = GraphOperators::new(g).unwrap();
        let res = IdentityResiduals::compute(&ops).max();
        c.check(
            format!("{name}: max identity residual {res:.2e} < {IDENTITY_TOL:.0e}"),
            res < IDENTITY_TOL,
        );
        let printed = verify_incidence(g, b).unwrap();
        let kernel = (b.transpose() * DMatrix::from_element(4, 1, 1.0)).amax();
        c.check(
            format!(
                "{name}: printed B, |B Bᵀ − L| = {:.2e}, |Bᵀ 1| = {kernel:.2e}",
                printed.residual
            ),
            printed.residual < IDENTITY_TOL && kernel < IDENTITY_TOL,
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=12);
        let g = random_connected(n, 0.3, (0.05, 5.0), &mut rng);
        worst = worst.max(IdentityResiduals::compute(&GraphOperators::new(&g).unwrap()).max());
    }
    c.check(
        format!("200 random connected graphs (N ≤ 12): max residual {worst:.2e}"),
        worst < IDENTITY_TOL,
    );
    let l2 = GraphOperators::new(&g1).unwrap().lambda2;
    c.check(
        format!(
            "lambda2(0.09 Lbar) = {l2:.16}, expected 0.4 ± {LAMBDA_TOL:.0e} (|diff| = {:.3e})",
            (l2 - 0.4).abs()
        ),
        (l2 - 0.4).abs() <= LAMBDA_TOL,
    );
    let l2 = GraphOperators::new(&k4).unwrap().lambda2;
    c.check(
        format!("lambda2(K4) = {l2:.16}, expected 4 ± {LAMBDA_TOL:.0e}"),
        (l2 - 4.0).abs() <= LAMBDA_TOL,
    );
    c
}

fn double_sum_identity() -> Criterion {
    let mut c = Criterion::new(2, "double sum equals Laplacian quadratic form");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_a, mut worst_u) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=12);
        let q = rng.gen_range(1..=3);
        let g = random_connected(n, 0.4, (0.05, 5.0), &mut rng);
        let theta: Vec<f64> = (0..n * q).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let vartheta: Vec<f64> = (0..n * q).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (form, ds) = lemma2_sides(&theta, &vartheta, g.adjacency(), q);
        worst_a = worst_a.max((form - ds).abs());
        let uniform = DMatrix::from_element(n, n, 1.0 / n as f64);
        let (form, ds) = lemma2_sides(&theta, &vartheta, &uniform, q);
        worst_u = worst_u.max((form - ds).abs());
    }
    c.check(
        format!("weights a_ij: max |difference| {worst_a:.2e} over 1000 triples"),
        worst_a < IDENTITY_TOL,
    );
    c.check(
        format!("weights 1/N: max |difference| {worst_u:.2e} over 1000 triples"),
        worst_u < IDENTITY_TOL,
    );
    c
}

fn certification() -> Criterion {
    let mut c = Criterion::new(3, "incremental output-feedback passivity certification");
    let vdp = vanderpol(1.0).unwrap();
    let sampler = |seed| IofpSampler {
        state_range: (-5.0, 5.0),
        input_range: (-5.0, 5.0),
        disturbance_range: (-5.0, 5.0),
        pairs: 10_000,
        seed,
    };
    let rep = check_iofp(&vdp, 1.0, &sampler(11)).unwrap();
    c.check(
        format!(
            "Van der Pol nu = 1, sigma = 1: max relative violation {:.2e} on 10^4 pairs",
            rep.max_relative_violation
        ),
        rep.pass,
    );
    let rep = check_iofp(&vdp, 0.0, &sampler(12)).unwrap();
    c.check(
        format!(
            "Van der Pol nu = 1, sigma = 0 rejected: max violation {:.2e}",
            rep.max_violation
        ),
        !rep.pass,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut all = true;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..10 {
        let (c1, c2) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let phi = PiecewiseLinear::new(2.0, 6.0, 1.0, 0.5, 2.5).unwrap();
        let rep = chua(c1, c2, phi).unwrap().certificate();
        all &= rep.pass;
        worst = worst.max(rep.max_eig.max(rep.pb_residual));
    }
    c.check(
        format!("Chua with P = diag(1/c1, 1, 1/c2), 10 random (c1, c2): worst {worst:.2e}"),
        all,
    );
    c
}

fn scenario_with(name: &str, seed: u64) -> Scenario {
    let mut s = preset(name).unwrap();
    s.sim.seed = seed;
    s
}

fn simulate(name: &str, seed: u64) -> Outcome {
    let out = simulate_scenario(&scenario_with(name, seed)).unwrap();
    assert!(out.diverged_at().is_none(), "{name} seed {seed} diverged");
    out
}

fn sync_check(c: &mut Criterion, name: &str, out: &Outcome, seed: u64) {
    let e = out.metrics.max_on(WINDOW.0, WINDOW.1);
    c.check(
        format!("{name} seed {seed}: max e on [80, 100] = {e:.3e} < {SYNC_TOL:.0e}"),
        e < SYNC_TOL,
    );
}

fn lyapunov_check(c: &mut Criterion, name: &str, out: &Outcome, seed: u64) {
    let tr = out.lyapunov.as_ref().unwrap();
    let mono = tr.monotonicity();
    c.check(
        format!(
            "{name} seed {seed}: composite Lyapunov {:.3} -> {:.3}, worst step excess {:.2e} over 1e-8 (1 + V)",
            tr.values[0],
            tr.values.last().unwrap(),
            mono.worst_excess
        ),
        mono.pass,
    );
}

fn node_scenario(halving: &mut Option<(f64, f64)>) -> Criterion {
    let mut c = Criterion::new(4, "adaptive internal-model controllers at the nodes (vdp_nodes)");
    for seed in SEEDS {
        let out = simulate("vdp_nodes", seed);
        sync_check(&mut c, "vdp_nodes", &out, seed);
        let g = out.gains.as_ref().unwrap();
        c.check(
            format!(
                "vdp_nodes seed {seed}: gains nondecreasing (worst step {:.1e}), tail relative change {:.2e}",
                g.worst_decrease, g.tail_relative_change
            ),
            g.nondecreasing && g.plateaued,
        );
        lyapunov_check(&mut c, "vdp_nodes", &out, seed);
        let l = out.built.closed_loop.layout();
        let z = out.trajectory.last().unwrap();
        let x1: Vec<f64> = (0..l.n_nodes).map(|i| z[l.x_node(i).start]).collect();
        let mean = x1.iter().sum::<f64>() / x1.len() as f64;
        let spread = x1.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        println!("    info: vdp_nodes seed {seed}: final spread of x_i,1 = {spread:.3e} (not required to synchronize)");
        if seed == 1 {
            let mut fine = scenario_with("vdp_nodes", 1);
            fine.sim.dt = 5e-4;
            let fine = simulate_scenario(&fine).unwrap();
            *halving = Some((out.metrics.final_error(), fine.metrics.final_error()));
        }
    }
    c
}

fn edge_scenario() -> Criterion {
    let mut c = Criterion::new(5, "adaptive internal-model controllers on the edges (vdp_edges)");
    for seed in SEEDS {
        let out = simulate("vdp_edges", seed);
        sync_check(&mut c, "vdp_edges", &out, seed);
        lyapunov_check(&mut c, "vdp_edges", &out, seed);
        let lp = &out.built.closed_loop;
        let Controller::Edge { bank } = lp.controller() else {
            panic!("vdp_edges uses edge controllers");
        };
        let l = lp.layout();
        let models: Vec<ExoModel> = lp.exosystems().iter().map(|e| e.model.clone()).collect();
        let r = stack_output_matrices(&models, l.q);
        let worst = out
            .trajectory
            .states()
            .map(|z| feedforward_residual(lp.ops(), bank.h(), &r, l.q, &z[l.w.clone()]))
            .fold(0.0, f64::max);
        c.check(
            format!("vdp_edges seed {seed}: feedforward identity residual {worst:.2e} < {FEEDFORWARD_TOL:.0e} at every step"),
            worst < FEEDFORWARD_TOL,
        );
    }
    c
}

fn dynamic_edge_scenarios() -> Criterion {
    let mut c = Criterion::new(6, "given dynamic edges (vdp_dynedges, vdp_dynedges_im)");
    for seed in SEEDS {
        let out = simulate("vdp_dynedges", seed);
        sync_check(&mut c, "vdp_dynedges", &out, seed);
        let lp = &out.built.closed_loop;
        let q = lp.layout().q;
        let worst = out
            .trajectory
            .states()
            .map(|z| input_sum_residual(&lp.channels(z).u, q))
            .fold(0.0, f64::max);
        c.check(
            format!("vdp_dynedges seed {seed}: |sum of inputs| {worst:.2e} < {INPUT_SUM_TOL:.0e} at every step"),
            worst < INPUT_SUM_TOL,
        );
        let out = simulate("vdp_dynedges_im", seed);
        sync_check(&mut c, "vdp_dynedges_im", &out, seed);
    }
    c
}

fn corollary_scenarios() -> Criterion {
    let mut c = Criterion::new(7, "adaptive gains on passive dynamic edges (corollary presets)");
    for name in ["vdp_dynedges_adaptive", "vdp_dynedges_adaptive_im"] {
        for seed in SEEDS {
            let out = simulate(name, seed);
            sync_check(&mut c, name, &out, seed);
            let g = out.gains.as_ref().unwrap();
            c.check(
                format!(
                    "{name} seed {seed}: kappa nondecreasing (worst step {:.1e})",
                    g.worst_decrease
                ),
                g.nondecreasing,
            );
        }
    }
    c
}

fn negative_control() -> Criterion {
    let mut c = Criterion::new(8, "static diffusive coupling leaves disturbances unrejected");
    for seed in SEEDS {
        let mut s = scenario_with("vdp_nodes", seed);
        s.controller.family = "static_diffusive".into();
        let out = simulate_scenario(&s).unwrap();
        let e = out.metrics.min_on(WINDOW.0, WINDOW.1);
        c.check(
            format!(
                "vdp_nodes + static_diffusive seed {seed}: min e on [80, 100] = {e:.3e} > {NEGATIVE_CONTROL_FLOOR:.0e}"
            ),
            out.diverged_at().is_none() && e > NEGATIVE_CONTROL_FLOOR,
        );
    }
    c
}

fn conservation(halving: Option<(f64, f64)>) -> Criterion {
    let mut c = Criterion::new(9, "exosystem conservation and step halving");
    let out = simulate("vdp_nodes", 1);
    let lp = &out.built.closed_loop;
    let l = lp.layout();
    for node in [2, 3] {
        let r = l.w_node(node);
        let norm = |z: &[f64]| z[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
        let n0 = norm(out.trajectory.state(0));
        let drift = out
            .trajectory
            .states()
            .map(|z| (norm(z) - n0).abs())
            .fold(0.0, f64::max);
        c.check(
            format!("rotation exosystem at node {}: max norm drift {drift:.2e} < {ROTATION_DRIFT_TOL:.0e} over T = 100, h = 1e-3", node + 1),
            drift < ROTATION_DRIFT_TOL,
        );
    }
    match halving {
        Some((coarse, fine)) => c.check(
            format!(
                "vdp_nodes seed 1 final e: h = 1e-3 gives {coarse:.6e}, h = 5e-4 gives {fine:.6e}, change {:.2e} < {STEP_HALVING_TOL:.0e}",
                (coarse - fine).abs()
            ),
            (coarse - fine).abs() < STEP_HALVING_TOL,
        ),
        None => c.check("step halving not run".into(), false),
    }
    c
}

fn determinism() -> Criterion {
    let mut c = Criterion::new(10, "identical scenario and seed give byte-identical CSV");
    let dir = tempfile::tempdir().unwrap();
    let s = preset("vdp_nodes").unwrap();
    let mut bytes = Vec::new();
    for sub in ["first", "second"] {
        let ov = Overrides {
            out: Some(dir.path().join(sub).display().to_string()),
            no_plots: true,
            ..Default::default()
        };
        let (_, _, res) = run(&s, &ov);
        res.unwrap();
        bytes.push(fs::read(dir.path().join(sub).join("trajectory.csv")).unwrap());
    }
    c.check(
        format!(
            "vdp_nodes seed 1: two runs, {} and {} bytes",
            bytes[0].len(),
            bytes[1].len()
        ),
        bytes[0] == bytes[1],
    );
    c
}

fn main() -> ExitCode {
    let mut halving = None;
    let criteria = [
        graph_identities(),
        double_sum_identity(),
        certification(),
        node_scenario(&mut halving),
        edge_scenario(),
        dynamic_edge_scenarios(),
        corollary_scenarios(),
        negative_control(),
        conservation(halving),
        determinism(),
    ];
    println!();
    println!("acceptance summary");
    for c in &criteria {
        c.print();
    }
    let failed: Vec<u32> = criteria.iter().filter(|c| !c.pass()).map(|c| c.id).collect();
    println!();
    if failed.is_empty() {
        println!("all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!(
            "{} of {} criteria passed; failed: {failed:?}",
            criteria.len() - failed.len(),
            criteria.len()
        );
        ExitCode::FAILURE
    }
}
