//! Verification suites run against a scenario without integrating it.

use std::fmt;

use iofp_sync::analysis::{double_sum, eval_v1, eval_w1, lemma2_sides};
use iofp_sync::controllers::{compute_h, stack_output_matrices, PassivityClass};
use iofp_sync::exosystems::{check_monotone, ExoModel, MonotoneSampler};
use iofp_sync::graph::{GraphOperators, IdentityResiduals};
use iofp_sync::linalg::kron_identity;
use iofp_sync::plants::{check_iofp, IofpSampler};
use iofp_sync::{Controller, Plant};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{Scenario, ScenarioError};

/// Residual tolerance for the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;

/// One line of a check report: a measured value against a limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub limit: Option<f64>,
    pub pass: bool,
    pub note: String,
}

impl CheckLine {
    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        CheckLine {
            name: name.into(),
            value,
            limit: Some(limit),
            pass: value <= limit,
            note: String::new(),
        }
    }

    fn info(name: impl Into<String>, value: f64, note: impl Into<String>) -> Self {
        CheckLine {
            name: name.into(),
            value,
            limit: None,
            pass: true,
            note: note.into(),
        }
    }

    fn verdict(name: impl Into<String>, pass: bool, note: impl Into<String>) -> Self {
        CheckLine {
            name: name.into(),
            value: f64::NAN,
            limit: None,
            pass,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub title: String,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for l in &self.lines {
            let tag = if l.pass { "PASS" } else { "FAIL" };
            write!(f, "  {tag}  {}", l.name)?;
            if !l.value.is_nan() {
                write!(f, " = {:.3e}", l.value)?;
            }
            if let Some(lim) = l.limit {
                write!(f, " (limit {lim:.1e})")?;
            }
            if !l.note.is_empty() {
                write!(f, "  {}", l.note)?;
            }
            writeln!(f)?;
        }
        write!(f, "{}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Graph,
    Passivity,
    Lemmas,
}

impl std::str::FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "graph" => Ok(CheckKind::Graph),
            "passivity" => Ok(CheckKind::Passivity),
            "lemmas" => Ok(CheckKind::Lemmas),
            other => Err(format!("unknown check `{other}` (graph, passivity, lemmas)")),
        }
    }
}

pub fn check(kind: CheckKind, s: &Scenario) -> Result<CheckReport, ScenarioError> {
    match kind {
        CheckKind::Graph => Ok(check_graph(s)),
        CheckKind::Passivity => check_passivity(s),
        CheckKind::Lemmas => check_lemmas(s),
    }
}

/// Laplacian/incidence identities, `λ₂` and the printed incidence, if any.
/// A graph that cannot be built (for example a disconnected one) fails.
pub fn check_graph(s: &Scenario) -> CheckReport {
    let title = format!("graph check: {}", s.name);
    let mut lines = Vec::new();
    let graph = match s.graph.build() {
        Ok(g) => g,
        Err(e) => {
            lines.push(CheckLine::verdict("graph", false, e.to_string()));
            return CheckReport { title, lines };
        }
    };
    let ops = match GraphOperators::new(&graph) {
        Ok(ops) => ops,
        Err(e) => {
            lines.push(CheckLine::verdict("operators", false, e.to_string()));
            return CheckReport { title, lines };
        }
    };
    lines.push(CheckLine::info("nodes", graph.n_nodes() as f64, ""));
    lines.push(CheckLine::info("edges", graph.n_edges() as f64, ""));
    let r = IdentityResiduals::compute(&ops);
    lines.push(CheckLine::below("L = B Bᵀ", r.laplacian_factorization, IDENTITY_TOL));
    lines.push(CheckLine::below("Bᵀ 1 = 0", r.incidence_kernel, IDENTITY_TOL));
    lines.push(CheckLine::below("L 1 = 0", r.laplacian_kernel, IDENTITY_TOL));
    lines.push(CheckLine::below("B B⁺ = Π", r.incidence_projector, IDENTITY_TOL));
    lines.push(CheckLine::below("L L⁺ = Π", r.laplacian_projector, IDENTITY_TOL));
    lines.push(CheckLine::below("Π² = Π", r.projector_idempotent, IDENTITY_TOL));
    lines.push(CheckLine {
        name: "lambda2".into(),
        value: ops.lambda2,
        limit: None,
        pass: ops.lambda2 > 0.0 || graph.n_nodes() == 1,
        note: "connected".into(),
    });
    match s.graph.incidence_report(&graph) {
        Ok(Some(rep)) => lines.push(CheckLine::below("given B Bᵀ = L", rep.residual, rep.tolerance)),
        Ok(None) => {}
        Err(e) => lines.push(CheckLine::verdict("given incidence", false, e.to_string())),
    }
    CheckReport { title, lines }
}

/// Pairs sampled by the plant and exosystem suites.
pub const IOFP_PAIRS: usize = 10_000;

/// Plant certificate, sampled incremental dissipation, exosystem
/// monotonicity and edge passivity classes.
pub fn check_passivity(s: &Scenario) -> Result<CheckReport, ScenarioError> {
    let plant = s.build_plant()?;
    let mut lines = Vec::new();
    let cert = plant.certificate();
    lines.push(CheckLine::below("certificate max eig(AᵀP + PA)", cert.max_eig, 1e-12));
    lines.push(CheckLine::below("certificate |PB − Cᵀ|", cert.pb_residual, 1e-12));
    match plant.sigma() {
        Some(sigma) => {
            let sampler = IofpSampler {
                state_range: (-5.0, 5.0),
                input_range: (-5.0, 5.0),
                disturbance_range: (-5.0, 5.0),
                pairs: IOFP_PAIRS,
                seed: s.sim.seed,
            };
            let rep = check_iofp(&plant, sigma, &sampler).map_err(|e| ScenarioError::Validation {
                path: "plant".into(),
                message: e.to_string(),
            })?;
            lines.push(CheckLine {
                name: format!("incremental dissipation, sigma = {sigma}"),
                value: rep.max_relative_violation,
                limit: Some(1e-9),
                pass: rep.pass,
                note: format!("{} pairs in [-5, 5]", rep.pairs),
            });
        }
        None => lines.push(CheckLine::verdict(
            "incremental dissipation",
            true,
            "no declared sigma, skipped",
        )),
    }
    let q = plant.output_dim();
    for (i, exo) in s.build_exosystems(q)?.iter().enumerate() {
        let rep = check_monotone(
            &exo.model,
            &MonotoneSampler {
                range: (-5.0, 5.0),
                pairs: 1000,
                seed: s.sim.seed + i as u64,
            },
        );
        lines.push(CheckLine {
            name: format!("exosystem {} monotone", i + 1),
            value: rep.max_normalized,
            limit: Some(1e-12),
            pass: rep.pass,
            note: String::new(),
        });
    }
    if let Ok(built) = s.build() {
        if let Controller::DynamicEdges { edges, .. } = built.closed_loop.controller() {
            let mut rng = ChaCha8Rng::seed_from_u64(s.sim.seed);
            let n = edges.state_dim();
            for (g, e) in edges.edges().iter().enumerate() {
                let class = e.class();
                let single = iofp_sync::controllers::DynamicEdgeBank::new(vec![*e], n / edges.edges().len().max(1));
                let mut worst = f64::NEG_INFINITY;
                for _ in 0..1000 {
                    let eta: Vec<f64> = (0..single.state_dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    let rho: Vec<f64> = (0..single.state_dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    worst = worst.max(single.dissipation_excess(&eta, &rho, class));
                }
                lines.push(CheckLine {
                    name: format!("edge {} {}", g + 1, class_name(class)),
                    value: worst,
                    limit: Some(1e-12),
                    pass: class != PassivityClass::NotPassive && worst <= 1e-12,
                    note: format!("leak {}, feedthrough {}", e.leak, e.feedthrough),
                });
            }
        }
    }
    Ok(CheckReport {
        title: format!("passivity check: {}", s.name),
        lines,
    })
}

fn class_name(c: PassivityClass) -> &'static str {
    match c {
        PassivityClass::NotPassive => "not passive",
        PassivityClass::Passive => "passive",
        PassivityClass::InputStrictlyPassive => "input strictly passive",
    }
}

/// Random pairs for the double-sum identity.
pub const LEMMA_PAIRS: usize = 1000;

/// Projector identities, the double-sum identity for both weightings, the
/// disturbance projection `(B ⊗ I) H = (Π ⊗ I) R` and the storage
/// cross-checks, each below `10⁻¹⁰`.
pub fn check_lemmas(s: &Scenario) -> Result<CheckReport, ScenarioError> {
    let graph = s.graph.build()?;
    let ops = GraphOperators::new(&graph).map_err(|e| ScenarioError::Validation {
        path: "graph".into(),
        message: e.to_string(),
    })?;
    let plant = s.build_plant()?;
    let q = plant.output_dim();
    let n = plant.state_dim();
    let nn = graph.n_nodes();
    let mut lines = Vec::new();
    let r = IdentityResiduals::compute(&ops);
    lines.push(CheckLine::below(
        "B B⁺ = L L⁺ = Π",
        r.incidence_projector.max(r.laplacian_projector),
        IDENTITY_TOL,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(s.sim.seed);
    let uniform = DMatrix::from_element(nn, nn, 1.0 / nn as f64);
    let (mut worst_a, mut worst_u) = (0.0f64, 0.0f64);
    for _ in 0..LEMMA_PAIRS {
        let theta: Vec<f64> = (0..nn * q).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let vartheta: Vec<f64> = (0..nn * q).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (form, ds) = lemma2_sides(&theta, &vartheta, graph.adjacency(), q);
        worst_a = worst_a.max((form - ds).abs());
        let (form, ds) = lemma2_sides(&theta, &vartheta, &uniform, q);
        worst_u = worst_u.max((form - ds).abs());
    }
    lines.push(CheckLine::below("double sum, graph weights", worst_a, IDENTITY_TOL));
    lines.push(CheckLine::below("double sum, weights 1/N", worst_u, IDENTITY_TOL));

    let exos = s.build_exosystems(q)?;
    let models: Vec<ExoModel> = exos.iter().map(|e| e.model.clone()).collect();
    let r_stack = stack_output_matrices(&models, q);
    let h = compute_h(&ops, &r_stack, q).map_err(|e| ScenarioError::Validation {
        path: "exosystem".into(),
        message: e.to_string(),
    })?;
    let proj = (kron_identity(&ops.incidence, q) * &h - kron_identity(&ops.projector, q) * &r_stack).amax();
    lines.push(CheckLine::below("(B ⊗ I) H = (Π ⊗ I) R", proj, IDENTITY_TOL));

    let p = plant
        .storage_matrix()
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let (mut worst_v, mut worst_w) = (0.0f64, 0.0f64);
    for _ in 0..LEMMA_PAIRS / 10 {
        let x: Vec<f64> = (0..nn * n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v1 = eval_v1(&x, &ops, &p);
        worst_v = worst_v.max((v1 - double_sum(&x, graph.adjacency(), &p, &x)).abs() / v1.abs().max(1.0));
        let w1 = eval_w1(&x, nn, &p);
        worst_w = worst_w.max((w1 - double_sum(&x, &uniform, &p, &x)).abs() / w1.abs().max(1.0));
    }
    lines.push(CheckLine::below(
        "V1 form vs double sum (relative)",
        worst_v,
        IDENTITY_TOL,
    ));
    lines.push(CheckLine::below(
        "W1 form vs double sum (relative)",
        worst_w,
        IDENTITY_TOL,
    ));
    Ok(CheckReport {
        title: format!("lemma check: {}", s.name),
        lines,
    })
}
