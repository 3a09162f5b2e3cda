//! Scenario files: a TOML description of graph, plant, exosystems,
//! controller, integration and output settings. Node and edge indices in
//! files are 1-based.

use std::path::Path;
use std::sync::Arc;

use iofp_sync::controllers::{Controller, ControllerConfig, ControllerFamily, LinearEdge};
use iofp_sync::exosystems::{constant_exo, rotation_exo, ExoModel, Exosystem, Generator};
use iofp_sync::graph::{verify_incidence, Graph, GraphOperators, IncidenceReport};
use iofp_sync::plants::{chua, vanderpol, LurePlant, PiecewiseLinear};
use iofp_sync::simulator::{ClosedLoop, DivergenceGuard, InitialConditions, SimConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid {path}: {message}")]
    Validation { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Validation {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub graph: GraphSpec,
    pub plant: PlantSpec,
    #[serde(rename = "exosystem", default)]
    pub exosystems: Vec<ExoSpec>,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Exactly one of `adjacency`, `laplacian`, `edges` (with `nodes`) or
/// `complete` describes the graph; `scale` multiplies all weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplacian: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete: Option<CompleteSpec>,
    /// Printed incidence matrix checked against `L = B Bᵀ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incidence: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incidence_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteSpec {
    pub nodes: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Vanderpol {
        nu: f64,
    },
    Chua {
        c1: f64,
        c2: f64,
        tau_b: f64,
        tau_star: f64,
        z0: f64,
        z1: f64,
        z2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExoSpec {
    /// No disturbance at this node.
    None {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<usize>,
    },
    /// `ẇ = 0`, `d = w`.
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
    /// `ẇ = ω [[0, 1], [−1, 0]] w`, `d = R w`.
    Rotation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<usize>,
        omega: f64,
        output: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
    /// `ẇ = S w` with skew-symmetric `S`, `d = R w`.
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<usize>,
        generator: Vec<Vec<f64>>,
        output: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
}

impl ExoSpec {
    fn node(&self) -> Option<usize> {
        match self {
            ExoSpec::None { node }
            | ExoSpec::Constant { node, .. }
            | ExoSpec::Rotation { node, .. }
            | ExoSpec::Linear { node, .. } => *node,
        }
    }
}

/// A single value for every node/edge, or one value each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gains {
    Uniform(f64),
    PerItem(Vec<f64>),
}

impl Gains {
    fn expand(&self, count: usize, path: &str) -> Result<Vec<f64>, ScenarioError> {
        match self {
            Gains::Uniform(v) => Ok(vec![*v; count]),
            Gains::PerItem(v) if v.len() == count => Ok(v.clone()),
            Gains::PerItem(v) => Err(invalid(path, format!("expected {count} values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDynamicsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<usize>,
    pub leak: f64,
    pub feedthrough: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Gains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Gains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_model: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_gain: Option<f64>,
    /// Given edge systems in incidence-column order.
    #[serde(rename = "edge", default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeDynamicsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    pub init_range: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
    pub divergence_threshold: f64,
    pub max_steps: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            t_final: 100.0,
            dt: 1e-3,
            seed: 1,
            init_range: [-3.0, 3.0],
            initial_states: None,
            divergence_threshold: 1e6,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Every `csv_stride`-th integration step is written.
    pub csv_stride: usize,
    pub plots: bool,
    /// Tolerance on `e(t)` used for the settling time.
    pub sync_tolerance: f64,
    /// Time `e(t)` must stay below tolerance to count as settled.
    pub settle_dwell: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            csv_stride: 10,
            plots: true,
            sync_tolerance: 1e-2,
            settle_dwell: 20.0,
        }
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<String>,
    pub controller: Option<String>,
    pub no_plots: bool,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate_structure()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn with_overrides(&self, ov: &Overrides) -> Result<Self, ScenarioError> {
        let mut s = self.clone();
        if let Some(seed) = ov.seed {
            s.sim.seed = seed;
        }
        if let Some(t) = ov.t_final {
            s.sim.t_final = t;
        }
        if let Some(dt) = ov.dt {
            s.sim.dt = dt;
        }
        if let Some(out) = &ov.out {
            s.output.dir = Some(out.clone());
        }
        if let Some(c) = &ov.controller {
            s.controller.family = c.clone();
        }
        if ov.no_plots {
            s.output.plots = false;
        }
        s.validate_structure()?;
        Ok(s)
    }

    /// Output directory, defaulting to `out/<name>`.
    pub fn output_dir(&self) -> String {
        self.output.dir.clone().unwrap_or_else(|| format!("out/{}", self.name))
    }

    pub fn family(&self) -> Result<ControllerFamily, ScenarioError> {
        self.controller
            .family
            .parse()
            .map_err(|e| invalid("controller.family", e))
    }

    /// Checks that need no numerics: version, counts, signs and the
    /// controller family name.
    pub fn validate_structure(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be a non-empty file-name-safe string"));
        }
        let n = self.graph.node_count()?;
        if self.exosystems.len() != n {
            return Err(invalid(
                "exosystem",
                format!("expected {n} blocks (one per node), got {}", self.exosystems.len()),
            ));
        }
        for (i, e) in self.exosystems.iter().enumerate() {
            if let Some(node) = e.node() {
                if node != i + 1 {
                    return Err(invalid(
                        format!("exosystem[{}].node", i + 1),
                        format!("block {} is labelled node {node}", i + 1),
                    ));
                }
            }
        }
        self.family()?;
        let sim = &self.sim;
        if !(sim.t_final > 0.0 && sim.t_final.is_finite()) {
            return Err(invalid("sim.t_final", "must be positive"));
        }
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if !(sim.init_range[0] < sim.init_range[1]) {
            return Err(invalid("sim.init_range", "lower bound must be below upper bound"));
        }
        if !(sim.divergence_threshold > 0.0) {
            return Err(invalid("sim.divergence_threshold", "must be positive"));
        }
        if self.output.csv_stride == 0 {
            return Err(invalid("output.csv_stride", "must be at least 1"));
        }
        if !(self.output.sync_tolerance > 0.0) {
            return Err(invalid("output.sync_tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn build_plant(&self) -> Result<LurePlant, ScenarioError> {
        match &self.plant {
            PlantSpec::Vanderpol { nu } => vanderpol(*nu).map_err(|e| invalid("plant.nu", e)),
            PlantSpec::Chua {
                c1,
                c2,
                tau_b,
                tau_star,
                z0,
                z1,
                z2,
            } => {
                let phi = PiecewiseLinear::new(*tau_b, *tau_star, *z0, *z1, *z2).map_err(|e| invalid("plant", e))?;
                chua(*c1, *c2, phi).map_err(|e| invalid("plant", e))
            }
        }
    }

    pub fn build_exosystems(&self, q: usize) -> Result<Vec<Exosystem>, ScenarioError> {
        self.exosystems
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let path = format!("exosystem[{}]", i + 1);
                let res = match spec {
                    ExoSpec::None { .. } => Exosystem::new(ExoModel::silent(q), None),
                    ExoSpec::Constant { initial, .. } => constant_exo(q, initial.clone()),
                    ExoSpec::Rotation {
                        omega, output, initial, ..
                    } => {
                        let r = matrix(output, &format!("{path}.output"))?;
                        if r.nrows() != q {
                            return Err(invalid(
                                format!("{path}.output"),
                                format!("expected {q} rows, got {}", r.nrows()),
                            ));
                        }
                        rotation_exo(*omega, initial.clone(), r)
                    }
                    ExoSpec::Linear {
                        generator,
                        output,
                        initial,
                        ..
                    } => {
                        let s = matrix(generator, &format!("{path}.generator"))?;
                        let r = matrix(output, &format!("{path}.output"))?;
                        if r.nrows() != q {
                            return Err(invalid(
                                format!("{path}.output"),
                                format!("expected {q} rows, got {}", r.nrows()),
                            ));
                        }
                        ExoModel::new(Generator::Linear(s), r).and_then(|m| Exosystem::new(m, initial.clone()))
                    }
                };
                res.map_err(|e| invalid(path, e))
            })
            .collect()
    }

    fn controller_config(&self, family: ControllerFamily, graph: &Graph) -> Result<ControllerConfig, ScenarioError> {
        let (n, e) = (graph.n_nodes(), graph.n_edges());
        let c = &self.controller;
        let mut cfg = ControllerConfig::new(family, n, e);
        if let Some(g) = &c.gamma {
            cfg.gamma = g.expand(n, "controller.gamma")?;
        }
        if let Some(d) = &c.delta {
            cfg.delta = d.expand(e, "controller.delta")?;
        }
        if let Some(a) = c.adaptive {
            cfg.adaptive = a;
        }
        if let Some(im) = c.internal_model {
            cfg.internal_model = im;
        }
        if let Some(k) = c.static_gain {
            cfg.static_gain = k;
        }
        if family.uses_dynamic_edges() {
            if c.edges.len() != e {
                return Err(invalid(
                    "controller.edge",
                    format!("{family} needs {e} edge systems (one per edge), got {}", c.edges.len()),
                ));
            }
            for (g, spec) in c.edges.iter().enumerate() {
                if let Some(label) = spec.edge {
                    if label != g + 1 {
                        return Err(invalid(
                            format!("controller.edge[{}].edge", g + 1),
                            format!("block {} is labelled edge {label}", g + 1),
                        ));
                    }
                }
            }
            cfg.edges = c
                .edges
                .iter()
                .map(|s| LinearEdge {
                    leak: s.leak,
                    feedthrough: s.feedthrough,
                })
                .collect();
        }
        Ok(cfg)
    }

    /// Builds every runtime object, enforcing all hypotheses.
    pub fn build(&self) -> Result<Built, ScenarioError> {
        self.validate_structure()?;
        let graph = self.graph.build()?;
        let incidence = self.graph.incidence_report(&graph)?;
        if let Some(rep) = &incidence {
            if !rep.pass {
                return Err(invalid(
                    "graph.incidence",
                    format!("B Bᵀ differs from L by {:e}", rep.residual),
                ));
            }
        }
        let ops = GraphOperators::new(&graph).map_err(|e| invalid("graph", e))?;
        let plant = Arc::new(self.build_plant()?);
        let q = iofp_sync::Plant::output_dim(plant.as_ref());
        let exos = self.build_exosystems(q)?;
        let family = self.family()?;
        let cfg = self.controller_config(family, &graph)?;
        let models: Vec<ExoModel> = exos.iter().map(|e| e.model.clone()).collect();
        let controller = Controller::build(cfg, &graph, &ops, &models, q).map_err(|e| invalid("controller", e))?;
        let closed_loop =
            ClosedLoop::new(graph, ops, plant.clone(), exos, controller).map_err(|e| invalid("exosystem", e))?;
        let sim = SimConfig {
            t_final: self.sim.t_final,
            h: self.sim.dt,
            guard: DivergenceGuard {
                threshold: self.sim.divergence_threshold,
            },
            max_steps: self.sim.max_steps,
        };
        sim.grid().map_err(|e| invalid("sim", e))?;
        let init = InitialConditions {
            range: (self.sim.init_range[0], self.sim.init_range[1]),
            seed: self.sim.seed,
            plant_states: self.sim.initial_states.clone(),
        };
        let z0 = closed_loop
            .initial_state(&init)
            .map_err(|e| invalid("sim.initial_states", e))?;
        Ok(Built {
            closed_loop,
            plant,
            sim,
            init,
            z0,
            family,
            incidence,
        })
    }
}

/// Runtime objects assembled from a scenario.
#[derive(Debug, Clone)]
pub struct Built {
    pub closed_loop: ClosedLoop,
    pub plant: Arc<LurePlant>,
    pub sim: SimConfig,
    pub init: InitialConditions,
    pub z0: Vec<f64>,
    pub family: ControllerFamily,
    pub incidence: Option<IncidenceReport>,
}

pub(crate) fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(invalid(
            path,
            format!("row {} has {} entries, expected {c}", i + 1, row.len()),
        ));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl GraphSpec {
    fn forms(&self) -> usize {
        [
            self.adjacency.is_some(),
            self.laplacian.is_some(),
            self.edges.is_some(),
            self.complete.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    pub fn node_count(&self) -> Result<usize, ScenarioError> {
        if self.forms() != 1 {
            return Err(invalid(
                "graph",
                "give exactly one of adjacency, laplacian, edges or complete",
            ));
        }
        let n = if let Some(a) = &self.adjacency {
            a.len()
        } else if let Some(l) = &self.laplacian {
            l.len()
        } else if let Some(c) = &self.complete {
            c.nodes
        } else {
            self.nodes
                .ok_or_else(|| invalid("graph.nodes", "required with an edge list"))?
        };
        if n == 0 {
            return Err(invalid("graph", "graph must have at least one node"));
        }
        if let Some(nodes) = self.nodes {
            if nodes != n {
                return Err(invalid(
                    "graph.nodes",
                    format!("{nodes} disagrees with the {n} nodes of the graph"),
                ));
            }
        }
        Ok(n)
    }

    /// Graph with weights scaled; may be disconnected.
    pub fn build(&self) -> Result<Graph, ScenarioError> {
        let n = self.node_count()?;
        let scale = self.scale.unwrap_or(1.0);
        if !(scale > 0.0) {
            return Err(invalid("graph.scale", "must be positive"));
        }
        if let Some(a) = &self.adjacency {
            let a = matrix(a, "graph.adjacency")? * scale;
            Graph::from_adjacency(a).map_err(|e| invalid("graph.adjacency", e))
        } else if let Some(l) = &self.laplacian {
            let l = matrix(l, "graph.laplacian")?;
            if l.nrows() != l.ncols() {
                return Err(invalid("graph.laplacian", "must be square"));
            }
            let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -l[(i, j)] * scale });
            let row_sum = (0..n)
                .map(|i| (0..n).map(|j| l[(i, j)]).sum::<f64>().abs())
                .fold(0.0, f64::max);
            if row_sum > 1e-12 * l.amax().max(1.0) {
                return Err(invalid("graph.laplacian", "rows must sum to zero"));
            }
            Graph::from_adjacency(a).map_err(|e| invalid("graph.laplacian", e))
        } else if let Some(c) = &self.complete {
            Graph::complete(c.nodes, c.weight * scale).map_err(|e| invalid("graph.complete", e))
        } else {
            let edges = self.edges.as_ref().expect("edge form");
            let mut list = Vec::with_capacity(edges.len());
            for (g, e) in edges.iter().enumerate() {
                if e.from == 0 || e.to == 0 || e.from > n || e.to > n {
                    return Err(invalid(
                        format!("graph.edges[{}]", g + 1),
                        format!("node indices are 1-based and at most {n}, got ({}, {})", e.from, e.to),
                    ));
                }
                list.push((e.from - 1, e.to - 1, e.weight * scale));
            }
            Graph::from_edges(n, &list).map_err(|e| invalid("graph.edges", e))
        }
    }

    pub fn incidence_report(&self, graph: &Graph) -> Result<Option<IncidenceReport>, ScenarioError> {
        let Some(rows) = &self.incidence else {
            return Ok(None);
        };
        let b = matrix(rows, "graph.incidence")? * self.incidence_scale.unwrap_or(1.0);
        verify_incidence(graph, &b)
            .map(Some)
            .map_err(|e| invalid("graph.incidence", e))
    }
}
