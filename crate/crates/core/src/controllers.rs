//! Distributed synchronizing controllers.
//!
//! * Node-placed adaptive internal-model controllers driven by the relative
//!   output `ρᵢ = Σⱼ aᵢⱼ (yⱼ − yᵢ)`:
//!   `ξ̇ᵢ = sᵢ(ξᵢ) − Rᵢᵀρᵢ`, `k̇ᵢ = γᵢ ρᵢᵀρᵢ`, `uᵢ = −Rᵢξᵢ + kᵢρᵢ`.
//! * Edge-placed adaptive internal-model controllers driven by
//!   `ϱ_g = Σⱼ b_jg yⱼ`: `ζ̇_g = s(ζ_g) + H_gᵀϱ_g`, `κ̇_g = δ_g ϱ_gᵀϱ_g`,
//!   `v_g = H_g ζ_g + κ_g ϱ_g`, with plant input `u = −(B ⊗ I_q) v` and
//!   `H = (B⁺ ⊗ I_q) R`.
//! * Given passive edge dynamics `η̇_g = ψ_g(η_g, ϱ_g)`, `v_g = φ_g(η_g, ϱ_g)`,
//!   optionally combined with node internal models (complete uniform graphs
//!   only) and adaptive edge gains `v_{2g} = κ_g ϱ_g`.
//!
//! All stacked vectors are node-major (or edge-major): entry `i·q + k` is
//! channel `k` of node `i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::exosystems::ExoModel;
use crate::graph::{CompletenessError, Graph, GraphOperators};
use crate::linalg::{dot, kron_identity_mul, kron_identity_tr_mul};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown controller family {0:?}")]
    UnknownFamily(String),
    #[error("{family} requires a complete graph: {source}")]
    NotCompleteGraph {
        family: ControllerFamily,
        source: CompletenessError,
    },
    #[error("{family} requires uniform edge weights: {source}")]
    NonUniformWeight {
        family: ControllerFamily,
        source: CompletenessError,
    },
    #[error("{family} requires a disturbance-free network, node {} has a disturbance", .node + 1)]
    DisturbancesPresent { family: ControllerFamily, node: usize },
    #[error("edge {} is {found:?}, {family} requires {required:?}", .edge + 1)]
    EdgeNotPassive {
        family: ControllerFamily,
        edge: usize,
        found: PassivityClass,
        required: PassivityClass,
    },
    #[error("{what} gain {} must be positive, got {value}", .index + 1)]
    NonPositiveGain {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("internal model of node {} has output dimension {got}, plants have {expected}", .node + 1)]
    ModelOutputMismatch { node: usize, expected: usize, got: usize },
}

/// Controller family selected by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerFamily {
    /// Adaptive internal-model controllers at the nodes.
    NodeAdaptiveIm,
    /// Adaptive internal-model controllers at the edges.
    EdgeAdaptiveIm,
    /// Given input-strictly-passive edges, disturbance-free network.
    DynamicEdges,
    /// Given input-strictly-passive edges plus node internal models on a
    /// complete uniform graph.
    DynamicEdgesIm,
    /// Given passive edges with adaptive edge gains, disturbance-free.
    DynamicEdgesAdaptive,
    /// Given passive edges with adaptive edge gains and node internal models
    /// on a complete uniform graph.
    DynamicEdgesAdaptiveIm,
    /// `u = ρ`, the static diffusive baseline.
    StaticDiffusive,
}

impl ControllerFamily {
    pub const ALL: [ControllerFamily; 7] = [
        ControllerFamily::NodeAdaptiveIm,
        ControllerFamily::EdgeAdaptiveIm,
        ControllerFamily::DynamicEdges,
        ControllerFamily::DynamicEdgesIm,
        ControllerFamily::DynamicEdgesAdaptive,
        ControllerFamily::DynamicEdgesAdaptiveIm,
        ControllerFamily::StaticDiffusive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerFamily::NodeAdaptiveIm => "node_adaptive_im",
            ControllerFamily::EdgeAdaptiveIm => "edge_adaptive_im",
            ControllerFamily::DynamicEdges => "dynamic_edges",
            ControllerFamily::DynamicEdgesIm => "dynamic_edges_im",
            ControllerFamily::DynamicEdgesAdaptive => "dynamic_edges_adaptive",
            ControllerFamily::DynamicEdgesAdaptiveIm => "dynamic_edges_adaptive_im",
            ControllerFamily::StaticDiffusive => "static_diffusive",
        }
    }

    /// Whether the plant inputs are formed through `−(B ⊗ I_q)`, so that
    /// `Σᵢ uᵢ` cancels the node internal-model term only.
    pub fn is_edge_placed(self) -> bool {
        !matches!(
            self,
            ControllerFamily::NodeAdaptiveIm | ControllerFamily::StaticDiffusive
        )
    }

    pub fn uses_dynamic_edges(self) -> bool {
        matches!(
            self,
            ControllerFamily::DynamicEdges
                | ControllerFamily::DynamicEdgesIm
                | ControllerFamily::DynamicEdgesAdaptive
                | ControllerFamily::DynamicEdgesAdaptiveIm
        )
    }

    fn requires_complete_graph(self) -> bool {
        matches!(
            self,
            ControllerFamily::DynamicEdgesIm | ControllerFamily::DynamicEdgesAdaptiveIm
        )
    }

    fn requires_no_disturbance(self) -> bool {
        matches!(
            self,
            ControllerFamily::DynamicEdges | ControllerFamily::DynamicEdgesAdaptive
        )
    }

    fn required_edge_class(self) -> PassivityClass {
        match self {
            ControllerFamily::DynamicEdgesAdaptive | ControllerFamily::DynamicEdgesAdaptiveIm => {
                PassivityClass::Passive
            }
            _ => PassivityClass::InputStrictlyPassive,
        }
    }
}

impl fmt::Display for ControllerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerFamily {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| ControllerError::UnknownFamily(s.to_string()))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ControllerError> {
    if expected == got {
        Ok(())
    } else {
        Err(ControllerError::DimensionMismatch { what, expected, got })
    }
}

/// `ρ = −(L ⊗ I_q) y`.
pub fn node_coupling(y: &[f64], ops: &GraphOperators, q: usize) -> Result<Vec<f64>, ControllerError> {
    check_len("stacked outputs", ops.n_nodes() * q, y.len())?;
    let mut rho = vec![0.0; y.len()];
    kron_identity_mul(&ops.laplacian, q, y, &mut rho);
    rho.iter_mut().for_each(|r| *r = -*r);
    Ok(rho)
}

/// `ϱ = (Bᵀ ⊗ I_q) y`.
pub fn edge_coupling(y: &[f64], ops: &GraphOperators, q: usize) -> Result<Vec<f64>, ControllerError> {
    check_len("stacked outputs", ops.n_nodes() * q, y.len())?;
    let mut varrho = vec![0.0; ops.n_edges() * q];
    kron_identity_tr_mul(&ops.incidence, q, y, &mut varrho);
    Ok(varrho)
}

/// Plant inputs from edge outputs, `u = −(B ⊗ I_q) v`.
pub fn edge_to_node_input(v: &[f64], ops: &GraphOperators, q: usize) -> Result<Vec<f64>, ControllerError> {
    check_len("stacked edge outputs", ops.n_edges() * q, v.len())?;
    let mut u = vec![0.0; ops.n_nodes() * q];
    kron_identity_mul(&ops.incidence, q, v, &mut u);
    u.iter_mut().for_each(|x| *x = -*x);
    Ok(u)
}

/// Block-diagonal `R = diag(R₁, …, R_N)`, of size `(N·q) × Σmᵢ`.
pub fn stack_output_matrices(models: &[ExoModel], q: usize) -> DMatrix<f64> {
    let m: usize = models.iter().map(ExoModel::dim).sum();
    let mut r = DMatrix::zeros(models.len() * q, m);
    let mut col = 0;
    for (i, model) in models.iter().enumerate() {
        r.view_mut((i * q, col), (q, model.dim()))
            .copy_from(model.output_matrix());
        col += model.dim();
    }
    r
}

/// `H = (B⁺ ⊗ I_q) R`, of size `(E·q) × m`. Block row `g` is `H_g`.
pub fn compute_h(ops: &GraphOperators, r_stack: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>, ControllerError> {
    check_len("rows of R", ops.n_nodes() * q, r_stack.nrows())?;
    let b_pinv_q = crate::linalg::kron_identity(&ops.incidence_pinv, q);
    Ok(b_pinv_q * r_stack)
}

/// Returns `ρ` and `ϱ` together; edge families need the second, node
/// internal models the first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Signals {
    pub rho: Vec<f64>,
    pub varrho: Vec<f64>,
    /// Edge outputs `v_g` (total, including adaptive parts); empty for
    /// node-placed families.
    pub v: Vec<f64>,
}

/// Node-placed internal models and adaptive gains.
#[derive(Debug, Clone)]
pub struct NodeControllerBank {
    models: Vec<ExoModel>,
    offsets: Vec<usize>,
    gamma: Vec<f64>,
    adaptive: bool,
    internal_model: bool,
    static_gain: f64,
    q: usize,
}

impl NodeControllerBank {
    /// With `adaptive = false` the gain is fixed to `static_gain` and not part
    /// of the state; with `internal_model = false` there are no `ξ` states.
    pub fn new(
        models: Vec<ExoModel>,
        gamma: Vec<f64>,
        q: usize,
        adaptive: bool,
        internal_model: bool,
        static_gain: f64,
    ) -> Result<Self, ControllerError> {
        check_len("update gains gamma", models.len(), gamma.len())?;
        if adaptive {
            if let Some((index, &value)) = gamma.iter().enumerate().find(|(_, g)| !(**g > 0.0)) {
                return Err(ControllerError::NonPositiveGain {
                    what: "gamma",
                    index,
                    value,
                });
            }
        }
        for (node, m) in models.iter().enumerate() {
            if m.output_dim() != q {
                return Err(ControllerError::ModelOutputMismatch {
                    node,
                    expected: q,
                    got: m.output_dim(),
                });
            }
        }
        let mut offsets = Vec::with_capacity(models.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for m in &models {
            acc += if internal_model { m.dim() } else { 0 };
            offsets.push(acc);
        }
        Ok(NodeControllerBank {
            models,
            offsets,
            gamma,
            adaptive,
            internal_model,
            static_gain,
            q,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.models.len()
    }

    pub fn xi_dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn gain_dim(&self) -> usize {
        if self.adaptive {
            self.models.len()
        } else {
            0
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive
    }

    pub fn has_internal_model(&self) -> bool {
        self.internal_model
    }

    pub fn static_gain(&self) -> f64 {
        self.static_gain
    }

    pub fn models(&self) -> &[ExoModel] {
        &self.models
    }

    /// Offset of node `i`'s `ξᵢ` within the stacked `ξ`.
    pub fn xi_offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// `ξ̇ᵢ = sᵢ(ξᵢ) − Rᵢᵀρᵢ` and `k̇ᵢ = γᵢ ρᵢᵀρᵢ`.
    pub fn derivative(&self, xi: &[f64], rho: &[f64], xi_dot: &mut [f64], k_dot: &mut [f64]) {
        let q = self.q;
        for (i, model) in self.models.iter().enumerate() {
            let rho_i = &rho[i * q..(i + 1) * q];
            if self.internal_model {
                let (a, b) = (self.offsets[i], self.offsets[i + 1]);
                let out = &mut xi_dot[a..b];
                model.field(&xi[a..b], out);
                let r = model.output_matrix();
                for (j, o) in out.iter_mut().enumerate() {
                    *o -= (0..q).map(|k| r[(k, j)] * rho_i[k]).sum::<f64>();
                }
            }
            if self.adaptive {
                k_dot[i] = self.gamma[i] * dot(rho_i, rho_i);
            }
        }
    }

    /// `uᵢ = −Rᵢξᵢ + kᵢρᵢ`.
    pub fn output(&self, xi: &[f64], k: &[f64], rho: &[f64], u: &mut [f64]) {
        let q = self.q;
        for (i, model) in self.models.iter().enumerate() {
            let gain = if self.adaptive { k[i] } else { self.static_gain };
            let ui = &mut u[i * q..(i + 1) * q];
            for kk in 0..q {
                ui[kk] = gain * rho[i * q + kk];
            }
            if self.internal_model {
                let (a, b) = (self.offsets[i], self.offsets[i + 1]);
                let r = model.output_matrix();
                for kk in 0..q {
                    ui[kk] -= (a..b).map(|j| r[(kk, j - a)] * xi[j]).sum::<f64>();
                }
            }
        }
    }
}

/// Edge-placed internal models with adaptive gains.
#[derive(Debug, Clone)]
pub struct EdgeControllerBank {
    /// Node exosystem models forming the stacked generator `s(w)`.
    models: Vec<ExoModel>,
    offsets: Vec<usize>,
    h: DMatrix<f64>,
    delta: Vec<f64>,
    adaptive: bool,
    internal_model: bool,
    static_gain: f64,
    q: usize,
    m: usize,
}

impl EdgeControllerBank {
    pub fn new(
        ops: &GraphOperators,
        models: Vec<ExoModel>,
        delta: Vec<f64>,
        q: usize,
        adaptive: bool,
        internal_model: bool,
        static_gain: f64,
    ) -> Result<Self, ControllerError> {
        check_len("exosystem models", ops.n_nodes(), models.len())?;
        check_len("update gains delta", ops.n_edges(), delta.len())?;
        if adaptive {
            if let Some((index, &value)) = delta.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
                return Err(ControllerError::NonPositiveGain {
                    what: "delta",
                    index,
                    value,
                });
            }
        }
        for (node, m) in models.iter().enumerate() {
            if m.output_dim() != q {
                return Err(ControllerError::ModelOutputMismatch {
                    node,
                    expected: q,
                    got: m.output_dim(),
                });
            }
        }
        let r = stack_output_matrices(&models, q);
        let h = compute_h(ops, &r, q)?;
        let mut offsets = vec![0];
        for model in &models {
            offsets.push(offsets.last().unwrap() + model.dim());
        }
        let m = *offsets.last().unwrap();
        Ok(EdgeControllerBank {
            models,
            offsets,
            h,
            delta,
            adaptive,
            internal_model,
            static_gain,
            q,
            m,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.delta.len()
    }

    /// Dimension `m = Σmᵢ` of each `ζ_g`.
    pub fn model_dim(&self) -> usize {
        self.m
    }

    pub fn zeta_dim(&self) -> usize {
        if self.internal_model {
            self.n_edges() * self.m
        } else {
            0
        }
    }

    pub fn gain_dim(&self) -> usize {
        if self.adaptive {
            self.n_edges()
        } else {
            0
        }
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive
    }

    pub fn has_internal_model(&self) -> bool {
        self.internal_model
    }

    fn stacked_field(&self, zeta_g: &[f64], out: &mut [f64]) {
        for (i, model) in self.models.iter().enumerate() {
            let (a, b) = (self.offsets[i], self.offsets[i + 1]);
            model.field(&zeta_g[a..b], &mut out[a..b]);
        }
    }

    /// `ζ̇_g = s(ζ_g) + H_gᵀϱ_g` and `κ̇_g = δ_g ϱ_gᵀϱ_g`.
    pub fn derivative(&self, zeta: &[f64], varrho: &[f64], zeta_dot: &mut [f64], kappa_dot: &mut [f64]) {
        let (q, m) = (self.q, self.m);
        for g in 0..self.n_edges() {
            let vr = &varrho[g * q..(g + 1) * q];
            if self.internal_model {
                let zg = &zeta[g * m..(g + 1) * m];
                let out = &mut zeta_dot[g * m..(g + 1) * m];
                self.stacked_field(zg, out);
                for (j, o) in out.iter_mut().enumerate() {
                    *o += (0..q).map(|k| self.h[(g * q + k, j)] * vr[k]).sum::<f64>();
                }
            }
            if self.adaptive {
                kappa_dot[g] = self.delta[g] * dot(vr, vr);
            }
        }
    }

    /// `v_g = H_g ζ_g + κ_g ϱ_g`.
    pub fn output(&self, zeta: &[f64], kappa: &[f64], varrho: &[f64], v: &mut [f64]) {
        let (q, m) = (self.q, self.m);
        for g in 0..self.n_edges() {
            let gain = if self.adaptive { kappa[g] } else { self.static_gain };
            for k in 0..q {
                let mut acc = gain * varrho[g * q + k];
                if self.internal_model {
                    let zg = &zeta[g * m..(g + 1) * m];
                    acc += (0..m).map(|j| self.h[(g * q + k, j)] * zg[j]).sum::<f64>();
                }
                v[g * q + k] = acc;
            }
        }
    }
}

/// Dissipativity class of a given edge system with storage `½ηᵀη`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PassivityClass {
    NotPassive,
    /// `Ψ̇ ≤ vᵀϱ`.
    Passive,
    /// `Ψ̇ ≤ −ϱᵀϱ + vᵀϱ`.
    InputStrictlyPassive,
}

/// Linear edge system `η̇ = −leak·η + ϱ`, `v = η + feedthrough·ϱ`, applied
/// per output channel. `leak = 0, feedthrough = 1` is the integrator edge and
/// `leak = 1, feedthrough = 1` the leaky edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEdge {
    pub leak: f64,
    pub feedthrough: f64,
}

impl LinearEdge {
    pub const INTEGRATOR: LinearEdge = LinearEdge {
        leak: 0.0,
        feedthrough: 1.0,
    };
    pub const LEAKY: LinearEdge = LinearEdge {
        leak: 1.0,
        feedthrough: 1.0,
    };

    /// With `Ψ = ½η²`: `Ψ̇ = −leak·η² + ηϱ = −leak·η² + vϱ − feedthrough·ϱ²`.
    pub fn class(&self) -> PassivityClass {
        if self.leak < 0.0 || self.feedthrough < 0.0 {
            PassivityClass::NotPassive
        } else if self.feedthrough >= 1.0 {
            PassivityClass::InputStrictlyPassive
        } else {
            PassivityClass::Passive
        }
    }
}

/// Given dynamic edges, one [`LinearEdge`] per edge, each with `q` states.
#[derive(Debug, Clone)]
pub struct DynamicEdgeBank {
    edges: Vec<LinearEdge>,
    q: usize,
}

impl DynamicEdgeBank {
    pub fn new(edges: Vec<LinearEdge>, q: usize) -> Self {
        DynamicEdgeBank { edges, q }
    }

    pub fn edges(&self) -> &[LinearEdge] {
        &self.edges
    }

    pub fn state_dim(&self) -> usize {
        self.edges.len() * self.q
    }

    /// Weakest passivity class among the edges.
    pub fn class(&self) -> PassivityClass {
        self.edges
            .iter()
            .map(LinearEdge::class)
            .min()
            .unwrap_or(PassivityClass::InputStrictlyPassive)
    }

    pub fn derivative(&self, eta: &[f64], varrho: &[f64], eta_dot: &mut [f64]) {
        let q = self.q;
        for (g, e) in self.edges.iter().enumerate() {
            for k in 0..q {
                let idx = g * q + k;
                eta_dot[idx] = -e.leak * eta[idx] + varrho[idx];
            }
        }
    }

    /// Edge outputs `v_g` (the `v_{1g}` part when combined with adaptation).
    pub fn output(&self, eta: &[f64], varrho: &[f64], v: &mut [f64]) {
        let q = self.q;
        for (g, e) in self.edges.iter().enumerate() {
            for k in 0..q {
                let idx = g * q + k;
                v[idx] = eta[idx] + e.feedthrough * varrho[idx];
            }
        }
    }

    /// `Ψ_g(η_g) = ½ η_gᵀη_g`, per edge.
    pub fn storage(&self, eta: &[f64]) -> Vec<f64> {
        eta.chunks(self.q.max(1))
            .take(self.edges.len())
            .map(|c| 0.5 * dot(c, c))
            .collect()
    }

    /// Largest `Ψ̇_g − supply_g` over the edges, where the supply is
    /// `−ϱᵀϱ + vᵀϱ` for the strict class and `vᵀϱ` for the passive class.
    /// Nonpositive when the declared dissipation inequality holds.
    pub fn dissipation_excess(&self, eta: &[f64], varrho: &[f64], class: PassivityClass) -> f64 {
        let q = self.q;
        let mut eta_dot = vec![0.0; eta.len()];
        let mut v = vec![0.0; eta.len()];
        self.derivative(eta, varrho, &mut eta_dot);
        self.output(eta, varrho, &mut v);
        let mut worst = f64::NEG_INFINITY;
        for g in 0..self.edges.len() {
            let r = g * q..(g + 1) * q;
            let rate = dot(&eta[r.clone()], &eta_dot[r.clone()]);
            let mut supply = dot(&v[r.clone()], &varrho[r.clone()]);
            if class == PassivityClass::InputStrictlyPassive {
                supply -= dot(&varrho[r.clone()], &varrho[r]);
            }
            worst = worst.max(rate - supply);
        }
        worst
    }
}

/// User-facing controller configuration, before hypothesis checks.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub family: ControllerFamily,
    /// Per-node update gains `γᵢ`.
    pub gamma: Vec<f64>,
    /// Per-edge update gains `δ_g`.
    pub delta: Vec<f64>,
    /// Given edge systems for the dynamic-edge families.
    pub edges: Vec<LinearEdge>,
    /// Internal models; when `None` they copy the exosystem models.
    pub internal_models: Option<Vec<ExoModel>>,
    /// Adaptive gain law on/off for the node and edge families.
    pub adaptive: bool,
    /// Internal model on/off for the node and edge families.
    pub internal_model: bool,
    /// Gain used when `adaptive` is off.
    pub static_gain: f64,
}

impl ControllerConfig {
    /// Unit update gains, adaptation and internal models on.
    pub fn new(family: ControllerFamily, n_nodes: usize, n_edges: usize) -> Self {
        ControllerConfig {
            family,
            gamma: vec![1.0; n_nodes],
            delta: vec![1.0; n_edges],
            edges: Vec::new(),
            internal_models: None,
            adaptive: true,
            internal_model: true,
            static_gain: 1.0,
        }
    }
}

/// A fully built controller, ready to be wired into a closed loop.
///
/// State layout: `[ξ | ζ | η]` (whichever apply) followed separately by the
/// adaptive gains `[k]` or `[κ]`.
#[derive(Debug, Clone)]
pub enum Controller {
    Node {
        family: ControllerFamily,
        bank: NodeControllerBank,
    },
    Edge {
        bank: EdgeControllerBank,
    },
    DynamicEdges {
        family: ControllerFamily,
        edges: DynamicEdgeBank,
        /// Node internal models (`ξ` only, no node gains).
        internal_models: Option<NodeControllerBank>,
        /// Adaptive edge update gains `δ_g`.
        delta: Option<Vec<f64>>,
        /// Common edge weight `a` of the complete graph when required.
        uniform_weight: Option<f64>,
    },
}

impl Controller {
    /// Builds the controller and enforces the hypotheses of its family.
    pub fn build(
        config: ControllerConfig,
        graph: &Graph,
        ops: &GraphOperators,
        exo_models: &[ExoModel],
        q: usize,
    ) -> Result<Self, ControllerError> {
        let family = config.family;
        let n = graph.n_nodes();
        check_len("exosystem models", n, exo_models.len())?;
        let models = match config.internal_models {
            Some(m) => {
                check_len("internal models", n, m.len())?;
                m
            }
            None => exo_models.to_vec(),
        };
        match family {
            ControllerFamily::NodeAdaptiveIm => Ok(Controller::Node {
                family,
                bank: NodeControllerBank::new(
                    models,
                    config.gamma,
                    q,
                    config.adaptive,
                    config.internal_model,
                    config.static_gain,
                )?,
            }),
            ControllerFamily::StaticDiffusive => Ok(Controller::Node {
                family,
                bank: NodeControllerBank::new(
                    models.iter().map(|_| ExoModel::silent(q)).collect(),
                    vec![1.0; n],
                    q,
                    false,
                    false,
                    1.0,
                )?,
            }),
            ControllerFamily::EdgeAdaptiveIm => Ok(Controller::Edge {
                bank: EdgeControllerBank::new(
                    ops,
                    models,
                    config.delta,
                    q,
                    config.adaptive,
                    config.internal_model,
                    config.static_gain,
                )?,
            }),
            _ => {
                check_len("edge systems", graph.n_edges(), config.edges.len())?;
                let required = family.required_edge_class();
                for (edge, e) in config.edges.iter().enumerate() {
                    let found = e.class();
                    if found < required {
                        return Err(ControllerError::EdgeNotPassive {
                            family,
                            edge,
                            found,
                            required,
                        });
                    }
                }
                if family.requires_no_disturbance() {
                    if let Some(node) = exo_models.iter().position(|m| m.dim() > 0) {
                        return Err(ControllerError::DisturbancesPresent { family, node });
                    }
                }
                let uniform_weight = if family.requires_complete_graph() {
                    Some(graph.complete_uniform_weight().map_err(|e| match e {
                        CompletenessError::NotComplete { .. } => {
                            ControllerError::NotCompleteGraph { family, source: e }
                        }
                        CompletenessError::NonUniform { .. } => ControllerError::NonUniformWeight { family, source: e },
                    })?)
                } else {
                    None
                };
                let internal_models = if family.requires_complete_graph() {
                    Some(NodeControllerBank::new(models, vec![1.0; n], q, false, true, 0.0)?)
                } else {
                    None
                };
                let delta = match family {
                    ControllerFamily::DynamicEdgesAdaptive | ControllerFamily::DynamicEdgesAdaptiveIm => {
                        check_len("update gains delta", graph.n_edges(), config.delta.len())?;
                        if let Some((index, &value)) = config.delta.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
                            return Err(ControllerError::NonPositiveGain {
                                what: "delta",
                                index,
                                value,
                            });
                        }
                        Some(config.delta)
                    }
                    _ => None,
                };
                Ok(Controller::DynamicEdges {
                    family,
                    edges: DynamicEdgeBank::new(config.edges, q),
                    internal_models,
                    delta,
                    uniform_weight,
                })
            }
        }
    }

    pub fn family(&self) -> ControllerFamily {
        match self {
            Controller::Node { family, .. } | Controller::DynamicEdges { family, .. } => *family,
            Controller::Edge { .. } => ControllerFamily::EdgeAdaptiveIm,
        }
    }

    /// Dimension of the internal-model states `ξ` (node-placed).
    pub fn xi_dim(&self) -> usize {
        match self {
            Controller::Node { bank, .. } => bank.xi_dim(),
            Controller::DynamicEdges {
                internal_models: Some(bank),
                ..
            } => bank.xi_dim(),
            _ => 0,
        }
    }

    /// Dimension of the edge internal-model states `ζ`.
    pub fn zeta_dim(&self) -> usize {
        match self {
            Controller::Edge { bank } => bank.zeta_dim(),
            _ => 0,
        }
    }

    /// Dimension of the given edge states `η`.
    pub fn eta_dim(&self) -> usize {
        match self {
            Controller::DynamicEdges { edges, .. } => edges.state_dim(),
            _ => 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.xi_dim() + self.zeta_dim() + self.eta_dim()
    }

    pub fn gain_dim(&self) -> usize {
        match self {
            Controller::Node { bank, .. } => bank.gain_dim(),
            Controller::Edge { bank } => bank.gain_dim(),
            Controller::DynamicEdges { delta, .. } => delta.as_ref().map_or(0, Vec::len),
        }
    }

    /// Whether gains are attached to nodes (`k`) rather than edges (`κ`).
    pub fn gains_on_nodes(&self) -> bool {
        matches!(self, Controller::Node { .. })
    }

    /// Evaluates the controller: writes the plant inputs `u`, the controller
    /// state derivative and the gain derivative, and returns the coupling
    /// signals.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        ops: &GraphOperators,
        q: usize,
        y: &[f64],
        state: &[f64],
        gains: &[f64],
        u: &mut [f64],
        state_dot: &mut [f64],
        gain_dot: &mut [f64],
    ) -> Signals {
        let mut rho = vec![0.0; y.len()];
        kron_identity_mul(&ops.laplacian, q, y, &mut rho);
        rho.iter_mut().for_each(|r| *r = -*r);
        match self {
            Controller::Node { bank, .. } => {
                bank.derivative(state, &rho, state_dot, gain_dot);
                bank.output(state, gains, &rho, u);
                Signals {
                    rho,
                    varrho: Vec::new(),
                    v: Vec::new(),
                }
            }
            Controller::Edge { bank } => {
                let mut varrho = vec![0.0; ops.n_edges() * q];
                kron_identity_tr_mul(&ops.incidence, q, y, &mut varrho);
                bank.derivative(state, &varrho, state_dot, gain_dot);
                let mut v = vec![0.0; varrho.len()];
                bank.output(state, gains, &varrho, &mut v);
                kron_identity_mul(&ops.incidence, q, &v, u);
                u.iter_mut().for_each(|x| *x = -*x);
                Signals { rho, varrho, v }
            }
            Controller::DynamicEdges {
                edges,
                internal_models,
                delta,
                ..
            } => {
                let mut varrho = vec![0.0; ops.n_edges() * q];
                kron_identity_tr_mul(&ops.incidence, q, y, &mut varrho);
                let xi_dim = internal_models.as_ref().map_or(0, |b| b.xi_dim());
                let (xi, eta) = state.split_at(xi_dim);
                let (xi_dot, eta_dot) = state_dot.split_at_mut(xi_dim);
                edges.derivative(eta, &varrho, eta_dot);
                let mut v = vec![0.0; varrho.len()];
                edges.output(eta, &varrho, &mut v);
                if let Some(delta) = delta {
                    for (g, d) in delta.iter().enumerate() {
                        let vr = &varrho[g * q..(g + 1) * q];
                        gain_dot[g] = d * dot(vr, vr);
                        for k in 0..q {
                            v[g * q + k] += gains[g] * vr[k];
                        }
                    }
                }
                kron_identity_mul(&ops.incidence, q, &v, u);
                u.iter_mut().for_each(|x| *x = -*x);
                if let Some(bank) = internal_models {
                    bank.derivative(xi, &rho, xi_dot, &mut []);
                    let mut u_im = vec![0.0; u.len()];
                    bank.output(xi, &[], &vec![0.0; rho.len()], &mut u_im);
                    for (a, b) in u.iter_mut().zip(&u_im) {
                        *a += b;
                    }
                }
                Signals { rho, varrho, v }
            }
        }
    }
}
