//! Trajectory diagnostics: synchronization error, the quadratic
//! disagreement forms, composite Lyapunov functions and gain monitoring.
//!
//! With the quadratic storage `Φ(x, x′) = (x − x′)ᵀP(x − x′)` the
//! disagreement forms are
//!
//! * `V₁(x) = ½ Σᵢ Σⱼ aᵢⱼ Φ(xᵢ, xⱼ) = x̃ᵀ(L ⊗ P)x̃`,
//! * `W₁(x) = (1/2N) Σᵢ Σⱼ Φ(xᵢ, xⱼ) = x̃ᵀ(Π ⊗ P)x̃`.
//!
//! The plant inequality `(x − x′)ᵀP(f − f′) ≤ σ|Δy|² + Δyᵀ(Δu + Δd)` is the
//! derivative of `½Φ`, so the composite functions carry `½V₁` and `½W₁`;
//! with the unhalved forms the controller cross terms would not cancel.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::controllers::{Controller, ControllerFamily};
use crate::graph::GraphOperators;
use crate::linalg::{dot, kron_identity_mul, norm, sorted_symmetric_eigen};
use crate::simulator::{ClosedLoop, StateLayout, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no composite Lyapunov function is defined for {0}")]
    UnknownFamily(ControllerFamily),
    #[error("internal-model dimension {model} does not match the exosystem states {exo}")]
    MissingExoStates { model: usize, exo: usize },
    #[error("plant has no quadratic storage matrix")]
    MissingStorage,
    #[error("quadratic form {form} disagrees with the double sum {double_sum}")]
    CrossCheck { form: f64, double_sum: f64 },
}

/// Centered outputs at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncError {
    /// `e = ‖(Π ⊗ I_q) y‖`.
    pub e: f64,
    /// `‖yᵢ − ȳ‖` for each node.
    pub per_node: Vec<f64>,
}

pub fn sync_error(y: &[f64], n_nodes: usize, q: usize) -> Result<SyncError, AnalysisError> {
    if y.len() != n_nodes * q || n_nodes == 0 {
        return Err(AnalysisError::DimensionMismatch {
            what: "stacked outputs",
            expected: n_nodes * q,
            got: y.len(),
        });
    }
    let mut mean = vec![0.0; q];
    for i in 0..n_nodes {
        for k in 0..q {
            mean[k] += y[i * q + k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_nodes as f64);
    let per_node: Vec<f64> = (0..n_nodes)
        .map(|i| (0..q).map(|k| (y[i * q + k] - mean[k]).powi(2)).sum::<f64>().sqrt())
        .collect();
    let e = per_node.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(SyncError { e, per_node })
}

/// Synchronization error along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMetrics {
    pub times: Vec<f64>,
    /// `e(t)` at every stored step.
    pub errors: Vec<f64>,
    /// `‖yᵢ(T) − ȳ(T)‖`.
    pub final_per_node: Vec<f64>,
    pub tolerance: f64,
    pub dwell: f64,
    /// Earliest time after which `e` stays below the tolerance.
    pub settling_time: Option<f64>,
    /// Whether `e` stayed below the tolerance for at least `dwell` before
    /// the end of the horizon.
    pub settled: bool,
}

impl SyncMetrics {
    pub fn from_trajectory(lp: &ClosedLoop, traj: &Trajectory, tolerance: f64, dwell: f64) -> Self {
        let l = lp.layout();
        let mut errors = Vec::with_capacity(traj.len());
        let mut final_per_node = vec![0.0; l.n_nodes];
        let mut y = vec![0.0; l.n_nodes * l.q];
        for z in traj.states() {
            outputs(lp, z, &mut y);
            let se = sync_error(&y, l.n_nodes, l.q).expect("layout-consistent outputs");
            errors.push(se.e);
            final_per_node = se.per_node;
        }
        Self::from_series(traj.times.clone(), errors, final_per_node, tolerance, dwell)
    }

    pub fn from_series(
        times: Vec<f64>,
        errors: Vec<f64>,
        final_per_node: Vec<f64>,
        tolerance: f64,
        dwell: f64,
    ) -> Self {
        let last_bad = errors.iter().rposition(|&e| !(e < tolerance));
        let settling_time = match last_bad {
            None => times.first().copied(),
            Some(k) if k + 1 < times.len() => Some(times[k + 1]),
            Some(_) => None,
        };
        let end = times.last().copied().unwrap_or(0.0);
        let settled = settling_time.is_some_and(|ts| end - ts >= dwell);
        SyncMetrics {
            times,
            errors,
            final_per_node,
            tolerance,
            dwell,
            settling_time,
            settled,
        }
    }

    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    /// Largest `e(t)` for `t ∈ [t0, t1]`.
    pub fn max_on(&self, t0: f64, t1: f64) -> f64 {
        window(&self.times, t0, t1)
            .map(|k| self.errors[k])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `e(t)` for `t ∈ [t0, t1]`.
    pub fn min_on(&self, t0: f64, t1: f64) -> f64 {
        window(&self.times, t0, t1)
            .map(|k| self.errors[k])
            .fold(f64::INFINITY, f64::min)
    }
}

fn window(times: &[f64], t0: f64, t1: f64) -> impl Iterator<Item = usize> + '_ {
    // Half-step slack so grid points computed as k·h are not missed.
    let slack = if times.len() > 1 {
        0.5 * (times[1] - times[0])
    } else {
        0.0
    };
    (0..times.len()).filter(move |&k| times[k] >= t0 - slack && times[k] <= t1 + slack)
}

fn outputs(lp: &ClosedLoop, z: &[f64], y: &mut [f64]) {
    let l = lp.layout();
    for i in 0..l.n_nodes {
        lp.plant().output(&z[l.x_node(i)], &mut y[i * l.q..(i + 1) * l.q]);
    }
}

/// `x̃ = (Π ⊗ I_n) x`.
pub fn center(x: &[f64], n_nodes: usize, n: usize) -> Vec<f64> {
    let mut mean = vec![0.0; n];
    for i in 0..n_nodes {
        for k in 0..n {
            mean[k] += x[i * n + k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_nodes as f64);
    (0..n_nodes * n).map(|idx| x[idx] - mean[idx % n]).collect()
}

/// `θᵀ(M ⊗ P)ϑ` for `N × N` `M` and `n × n` `P`.
pub fn kron_form(theta: &[f64], m: &DMatrix<f64>, p: &DMatrix<f64>, vartheta: &[f64]) -> f64 {
    let nn = m.nrows();
    let n = p.nrows();
    let mut acc = 0.0;
    for i in 0..nn {
        for j in 0..nn {
            let mij = m[(i, j)];
            if mij == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for a in 0..n {
                for b in 0..n {
                    inner += theta[i * n + a] * p[(a, b)] * vartheta[j * n + b];
                }
            }
            acc += mij * inner;
        }
    }
    acc
}

/// `½ Σᵢ Σⱼ wᵢⱼ (θᵢ − θⱼ)ᵀ P (ϑᵢ − ϑⱼ)`.
pub fn double_sum(theta: &[f64], weights: &DMatrix<f64>, p: &DMatrix<f64>, vartheta: &[f64]) -> f64 {
    let nn = weights.nrows();
    let n = p.nrows();
    let mut acc = 0.0;
    let mut dt = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for i in 0..nn {
        for j in 0..nn {
            let wij = weights[(i, j)];
            if wij == 0.0 {
                continue;
            }
            for k in 0..n {
                dt[k] = theta[i * n + k] - theta[j * n + k];
                dv[k] = vartheta[i * n + k] - vartheta[j * n + k];
            }
            let mut inner = 0.0;
            for a in 0..n {
                for b in 0..n {
                    inner += dt[a] * p[(a, b)] * dv[b];
                }
            }
            acc += wij * inner;
        }
    }
    0.5 * acc
}

/// `V₁ = x̃ᵀ(L ⊗ P)x̃`.
pub fn eval_v1(x: &[f64], ops: &GraphOperators, p: &DMatrix<f64>) -> f64 {
    let xt = center(x, ops.n_nodes(), p.nrows());
    kron_form(&xt, &ops.laplacian, p, &xt)
}

/// `V₁` with the double-sum cross-check, accepted within `10⁻¹⁰·max(1, |V₁|)`.
pub fn eval_v1_checked(
    x: &[f64],
    ops: &GraphOperators,
    adjacency: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64, AnalysisError> {
    let form = eval_v1(x, ops, p);
    let ds = double_sum(x, adjacency, p, x);
    if (form - ds).abs() <= 1e-10 * form.abs().max(1.0) {
        Ok(form)
    } else {
        Err(AnalysisError::CrossCheck { form, double_sum: ds })
    }
}

/// `W₁ = x̃ᵀ(Π ⊗ P)x̃`.
pub fn eval_w1(x: &[f64], n_nodes: usize, p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let xt = center(x, n_nodes, n);
    // Π x̃ = x̃, so the form reduces to Σᵢ x̃ᵢᵀ P x̃ᵢ.
    (0..n_nodes)
        .map(|i| {
            let xi = &xt[i * n..(i + 1) * n];
            (0..n)
                .map(|a| xi[a] * (0..n).map(|b| p[(a, b)] * xi[b]).sum::<f64>())
                .sum::<f64>()
        })
        .sum()
}

/// `W₁` with the double-sum cross-check using uniform weights `1/N`.
pub fn eval_w1_checked(x: &[f64], n_nodes: usize, p: &DMatrix<f64>) -> Result<f64, AnalysisError> {
    let form = eval_w1(x, n_nodes, p);
    let weights = DMatrix::from_element(n_nodes, n_nodes, 1.0 / n_nodes as f64);
    let ds = double_sum(x, &weights, p, x);
    if (form - ds).abs() <= 1e-10 * form.abs().max(1.0) {
        Ok(form)
    } else {
        Err(AnalysisError::CrossCheck { form, double_sum: ds })
    }
}

/// Coefficients `(λ₂λ_min(P), λ_max(L)λ_max(P))` of the quadratic sandwich
/// `c₁‖x̃‖² ≤ V₁(x) ≤ c₂‖x̃‖²`.
pub fn sandwich_bounds(ops: &GraphOperators, p: &DMatrix<f64>) -> (f64, f64) {
    let (pe, _) = sorted_symmetric_eigen(p);
    let pmin = pe[0];
    let pmax = pe[pe.len() - 1];
    (ops.lambda2 * pmin, ops.lambda_max() * pmax)
}

/// Proof constants of a composite Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConstants {
    /// `k⋆` or `κ⋆`; for non-adaptive configurations, the fixed gain.
    pub gain_star: Option<f64>,
    /// Decay margin `ε`.
    pub epsilon: Option<f64>,
}

/// Composite Lyapunov function values along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace {
    pub family: ControllerFamily,
    pub p: DMatrix<f64>,
    pub constants: LyapunovConstants,
    /// `½V₁` or `½W₁` part.
    pub disagreement: Vec<f64>,
    /// Total composite value.
    pub values: Vec<f64>,
}

/// Outcome of a per-step nonincrease check.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Largest `V(t+h) − V(t) − 10⁻⁸(1 + V(t))`; nonpositive on success.
    pub worst_excess: f64,
    /// Largest raw increase `V(t+h) − V(t)`.
    pub max_increase: f64,
    pub first_violation: Option<usize>,
    pub pass: bool,
}

/// Checks `V(t+h) ≤ V(t) + tol·(1 + V(t))` at every step.
pub fn check_nonincreasing(values: &[f64], tol: f64) -> MonotonicityReport {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let mut first_violation = None;
    for (k, pair) in values.windows(2).enumerate() {
        let inc = pair[1] - pair[0];
        let excess = inc - tol * (1.0 + pair[0].abs());
        max_increase = max_increase.max(inc);
        worst_excess = worst_excess.max(excess);
        if (excess > 0.0 || !pair[1].is_finite()) && first_violation.is_none() {
            first_violation = Some(k + 1);
        }
    }
    MonotonicityReport {
        worst_excess,
        max_increase,
        first_violation,
        pass: first_violation.is_none(),
    }
}

impl LyapunovTrace {
    pub fn monotonicity(&self) -> MonotonicityReport {
        check_nonincreasing(&self.values, 1e-8)
    }
}

/// Default `k⋆ = κ⋆ = 2σ/λ₂`.
pub fn default_gain_star(sigma: f64, lambda2: f64) -> f64 {
    2.0 * sigma / lambda2
}

fn deviation_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(disagreement part, total)` of a composite function at one state.
type Composite<'a> = dyn Fn(&[f64]) -> (f64, f64) + 'a;

/// Evaluates the composite Lyapunov function matching the controller family
/// at every stored step.
///
/// * node: `½V₁ + ½Σ|ξᵢ − wᵢ|² + Σ(kᵢ − k⋆)²/(2γᵢ)`
/// * edge: `½W₁ + ½Σ|ζ_g − w|² + Σ(κ_g − κ⋆)²/(2δ_g)`
/// * given edges: `½W₁ + ΣΨ_g`, plus `Σ|ξᵢ − wᵢ|²/(2aN)` with node internal
///   models and `Σ(κ_g − κ⋆)²/(2δ_g)` with adaptive edge gains.
///
/// `gain_star` defaults to `2σ/λ₂`; `p` defaults to the plant's storage
/// matrix.
pub fn eval_full_lyapunov(
    lp: &ClosedLoop,
    traj: &Trajectory,
    gain_star: Option<f64>,
    p: Option<&DMatrix<f64>>,
) -> Result<LyapunovTrace, AnalysisError> {
    let family = lp.controller().family();
    if family == ControllerFamily::StaticDiffusive {
        return Err(AnalysisError::UnknownFamily(family));
    }
    let p = match p {
        Some(p) => p.clone(),
        None => lp
            .plant()
            .storage_matrix()
            .ok_or(AnalysisError::MissingStorage)?
            .clone(),
    };
    let l = lp.layout();
    if p.nrows() != l.n || p.ncols() != l.n {
        return Err(AnalysisError::DimensionMismatch {
            what: "storage matrix",
            expected: l.n,
            got: p.nrows(),
        });
    }
    let ops = lp.ops();
    let sigma = lp.plant().sigma().unwrap_or(0.0);
    let lambda2 = ops.lambda2;
    let star = gain_star.unwrap_or_else(|| default_gain_star(sigma, lambda2));
    let exo_dim = l.w.len();

    let eval: Box<Composite> = match lp.controller() {
        Controller::Node { bank, .. } => {
            if bank.has_internal_model() && bank.xi_dim() != exo_dim {
                return Err(AnalysisError::MissingExoStates {
                    model: bank.xi_dim(),
                    exo: exo_dim,
                });
            }
            let gamma = bank.gamma().to_vec();
            let adaptive = bank.is_adaptive();
            let lyap_l = l.clone();
            let p = p.clone();
            Box::new(move |z: &[f64]| {
                let part = 0.5 * eval_v1(&z[lyap_l.x.clone()], ops, &p);
                let mut rest = 0.5 * deviation_sq(&z[lyap_l.xi.clone()], &z[lyap_l.w.clone()]);
                if adaptive {
                    rest += z[lyap_l.gains.clone()]
                        .iter()
                        .zip(&gamma)
                        .map(|(k, g)| (k - star).powi(2) / (2.0 * g))
                        .sum::<f64>();
                }
                (part, part + rest)
            })
        }
        Controller::Edge { bank } => {
            if bank.has_internal_model() && bank.model_dim() != exo_dim {
                return Err(AnalysisError::MissingExoStates {
                    model: bank.model_dim(),
                    exo: exo_dim,
                });
            }
            let delta = bank.delta().to_vec();
            let adaptive = bank.is_adaptive();
            let m = bank.model_dim();
            let lyap_l = l.clone();
            let p = p.clone();
            Box::new(move |z: &[f64]| {
                let part = 0.5 * eval_w1(&z[lyap_l.x.clone()], lyap_l.n_nodes, &p);
                let w = &z[lyap_l.w.clone()];
                let mut rest = 0.0;
                for zg in z[lyap_l.zeta.clone()].chunks(m.max(1)) {
                    rest += 0.5 * deviation_sq(zg, w);
                }
                if adaptive {
                    rest += z[lyap_l.gains.clone()]
                        .iter()
                        .zip(&delta)
                        .map(|(k, d)| (k - star).powi(2) / (2.0 * d))
                        .sum::<f64>();
                }
                (part, part + rest)
            })
        }
        Controller::DynamicEdges {
            edges,
            internal_models,
            delta,
            uniform_weight,
            ..
        } => {
            if let Some(bank) = internal_models {
                if bank.xi_dim() != exo_dim {
                    return Err(AnalysisError::MissingExoStates {
                        model: bank.xi_dim(),
                        exo: exo_dim,
                    });
                }
            }
            let im_scale = uniform_weight.map(|a| 1.0 / (2.0 * a * l.n_nodes as f64));
            let has_im = internal_models.is_some();
            let delta = delta.clone();
            let edges = edges.clone();
            let lyap_l = l.clone();
            let p = p.clone();
            Box::new(move |z: &[f64]| {
                let part = 0.5 * eval_w1(&z[lyap_l.x.clone()], lyap_l.n_nodes, &p);
                let mut rest: f64 = edges.storage(&z[lyap_l.eta.clone()]).iter().sum();
                if has_im {
                    rest += im_scale.unwrap_or(0.0) * deviation_sq(&z[lyap_l.xi.clone()], &z[lyap_l.w.clone()]);
                }
                if let Some(delta) = &delta {
                    rest += z[lyap_l.gains.clone()]
                        .iter()
                        .zip(delta)
                        .map(|(k, d)| (k - star).powi(2) / (2.0 * d))
                        .sum::<f64>();
                }
                (part, part + rest)
            })
        }
    };

    let constants = match family {
        ControllerFamily::DynamicEdges | ControllerFamily::DynamicEdgesIm => LyapunovConstants {
            gain_star: None,
            epsilon: Some(lambda2 - sigma),
        },
        ControllerFamily::NodeAdaptiveIm => LyapunovConstants {
            gain_star: Some(star),
            epsilon: Some((star * lambda2 - sigma) * lambda2),
        },
        _ => LyapunovConstants {
            gain_star: Some(star),
            epsilon: Some(star * lambda2 - sigma),
        },
    };
    let (disagreement, values): (Vec<f64>, Vec<f64>) = traj.states().map(&eval).unzip();
    Ok(LyapunovTrace {
        family,
        p,
        constants,
        disagreement,
        values,
    })
}

/// Adaptive-gain monitoring.
#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub nondecreasing: bool,
    /// Most negative per-step change (zero when nondecreasing).
    pub worst_decrease: f64,
    /// `(step, gain index)` of the first decrease.
    pub first_decrease: Option<(usize, usize)>,
    pub finals: Vec<f64>,
    /// Largest relative change over the final tenth of the horizon.
    pub tail_relative_change: f64,
    /// `tail_relative_change < 10⁻⁶`.
    pub plateaued: bool,
}

/// Checks per-step nondecrease of every gain and whether the gains
/// plateaued over the final tenth of the horizon. `gains[k]` holds all gains
/// at step `k`.
pub fn gain_monitor_series(times: &[f64], gains: &[&[f64]]) -> GainReport {
    let count = gains.first().map_or(0, |g| g.len());
    let mut worst_decrease: f64 = 0.0;
    let mut first_decrease = None;
    for k in 1..gains.len() {
        for j in 0..count {
            let diff = gains[k][j] - gains[k - 1][j];
            if diff < 0.0 {
                worst_decrease = worst_decrease.min(diff);
                if first_decrease.is_none() {
                    first_decrease = Some((k, j));
                }
            }
        }
    }
    let finals = gains.last().map(|g| g.to_vec()).unwrap_or_default();
    let mut tail_relative_change: f64 = 0.0;
    if let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) {
        let t_tail = t_end - 0.1 * (t_end - t0);
        let start = times.iter().position(|&t| t >= t_tail).unwrap_or(0);
        for j in 0..count {
            let a = gains[start][j];
            let b = finals[j];
            let change = (b - a).abs();
            let rel = if change == 0.0 {
                0.0
            } else {
                change / b.abs().max(a.abs())
            };
            tail_relative_change = tail_relative_change.max(rel);
        }
    }
    GainReport {
        nondecreasing: first_decrease.is_none(),
        worst_decrease,
        first_decrease,
        finals,
        tail_relative_change,
        plateaued: tail_relative_change < 1e-6,
    }
}

pub fn gain_monitor(layout: &StateLayout, traj: &Trajectory) -> GainReport {
    let gains: Vec<&[f64]> = traj.states().map(|z| &z[layout.gains.clone()]).collect();
    gain_monitor_series(&traj.times, &gains)
}

/// `max |(B ⊗ I_q) H w − (Π ⊗ I_q) R w|` for one exosystem state `w`.
pub fn feedforward_residual(ops: &GraphOperators, h: &DMatrix<f64>, r: &DMatrix<f64>, q: usize, w: &[f64]) -> f64 {
    let hw: Vec<f64> = (0..h.nrows())
        .map(|i| (0..w.len()).map(|j| h[(i, j)] * w[j]).sum())
        .collect();
    let d: Vec<f64> = (0..r.nrows())
        .map(|i| (0..w.len()).map(|j| r[(i, j)] * w[j]).sum())
        .collect();
    let mut lhs = vec![0.0; ops.n_nodes() * q];
    let mut rhs = vec![0.0; ops.n_nodes() * q];
    kron_identity_mul(&ops.incidence, q, &hw, &mut lhs);
    kron_identity_mul(&ops.projector, q, &d, &mut rhs);
    lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `‖Σᵢ uᵢ‖` for stacked inputs.
pub fn input_sum_residual(u: &[f64], q: usize) -> f64 {
    let mut sum = vec![0.0; q];
    for (idx, v) in u.iter().enumerate() {
        sum[idx % q] += v;
    }
    norm(&sum)
}

/// `θᵀ(L ⊗ I_q)ϑ` and its double-sum form, for identity checks.
pub fn lemma2_sides(theta: &[f64], vartheta: &[f64], weights: &DMatrix<f64>, q: usize) -> (f64, f64) {
    let n = weights.nrows();
    let deg = weights.row_sum();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            deg[i] - weights[(i, i)]
        } else {
            -weights[(i, j)]
        }
    });
    let mut lv = vec![0.0; theta.len()];
    kron_identity_mul(&lap, q, vartheta, &mut lv);
    let form = dot(theta, &lv);
    let ds = double_sum(theta, weights, &DMatrix::identity(q, q), vartheta);
    (form, ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sync_error_examples() {
        let se = sync_error(&[2.0; 4], 4, 1).unwrap();
        assert_eq!(se.e, 0.0);
        let se = sync_error(&[1.0, 0.0, 0.0, 0.0], 4, 1).unwrap();
        assert_abs_diff_eq!(se.e, 0.75f64.sqrt(), epsilon = 1e-15);
        let shifted = sync_error(&[4.5, 3.5, 3.5, 3.5], 4, 1).unwrap();
        assert_abs_diff_eq!(shifted.e, se.e, epsilon = 1e-14);
        assert!(sync_error(&[1.0; 3], 4, 1).is_err());
    }

    #[test]
    fn v1_examples() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let ops = GraphOperators::new(&g).unwrap();
        let p = DMatrix::identity(2, 2);
        assert_eq!(eval_v1(&[0.3, -1.0, 0.3, -1.0], &ops, &p), 0.0);
        let x = [1.0, 0.0, 0.0, 0.0];
        assert_abs_diff_eq!(eval_v1(&x, &ops, &p), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            eval_v1_checked(&x, &ops, g.adjacency(), &p).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn w1_examples() {
        let p = DMatrix::identity(2, 2);
        assert_eq!(eval_w1(&[1.0, 2.0, 1.0, 2.0], 2, &p), 0.0);
        assert_abs_diff_eq!(eval_w1(&[1.0, 0.0, 0.0, 0.0], 2, &p), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            eval_w1_checked(&[1.0, 0.0, 0.0, 0.0], 2, &p).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            eval_w1(&[3.0, 7.0, 2.0, 7.0], 2, &p),
            eval_w1(&[1.0, 0.0, 0.0, 0.0], 2, &p),
            epsilon = 1e-14
        );
    }

    #[test]
    fn monotonicity_examples() {
        assert!(check_nonincreasing(&[3.0, 2.0, 2.0, 1.0], 1e-8).pass);
        let r = check_nonincreasing(&[3.0, 2.0, 2.5], 1e-8);
        assert!(!r.pass);
        assert_eq!(r.first_violation, Some(2));
        // A round-off sized increase is tolerated.
        assert!(check_nonincreasing(&[1.0, 1.0 + 1e-9], 1e-8).pass);
    }

    #[test]
    fn gain_monitor_examples() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let flat = [[1.0, 2.0]; 4];
        let rows: Vec<&[f64]> = flat.iter().map(|r| r.as_slice()).collect();
        let rep = gain_monitor_series(&times, &rows);
        assert!(rep.nondecreasing && rep.plateaued);
        assert_eq!(rep.finals, vec![1.0, 2.0]);

        let bad = [[1.0], [1.5], [1.4], [1.6]];
        let rows: Vec<&[f64]> = bad.iter().map(|r| r.as_slice()).collect();
        let rep = gain_monitor_series(&times, &rows);
        assert!(!rep.nondecreasing);
        assert_eq!(rep.first_decrease, Some((2, 0)));

        let times: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let growing: Vec<[f64; 1]> = (0..11).map(|k| [1.0 + k as f64]).collect();
        let rows: Vec<&[f64]> = growing.iter().map(|r| r.as_slice()).collect();
        assert!(!gain_monitor_series(&times, &rows).plateaued);
    }

    #[test]
    fn input_sum_examples() {
        assert_eq!(input_sum_residual(&[1.0, -2.0, -1.0, 2.0], 2), 0.0);
        assert_abs_diff_eq!(input_sum_residual(&[1.0, 0.0, 2.0], 1), 3.0);
    }
}
