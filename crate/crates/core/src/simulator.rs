//! Closed-loop assembly and fixed-step RK4 integration.
//!
//! The stacked state is `[x (N·n) | w (Σmᵢ) | controller states | gains]`,
//! where the controller block is `[ξ | ζ | η]` (whichever the family uses).

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controllers::{Controller, ControllerError, Signals};
use crate::exosystems::Exosystem;
use crate::graph::{Graph, GraphOperators};
use crate::linalg::norm;
use crate::plants::Plant;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },
    #[error("diverged at t = {t} (state norm {norm:e})")]
    Diverged {
        t: f64,
        norm: f64,
        trajectory: Box<Trajectory>,
    },
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Index ranges of each block in the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub n_nodes: usize,
    /// Plant state dimension `n`.
    pub n: usize,
    /// Plant output dimension `q`.
    pub q: usize,
    pub x: Range<usize>,
    pub w: Range<usize>,
    /// Offsets of each `wᵢ` inside the `w` block, length `N + 1`.
    pub w_offsets: Vec<usize>,
    pub xi: Range<usize>,
    pub zeta: Range<usize>,
    pub eta: Range<usize>,
    pub gains: Range<usize>,
}

impl StateLayout {
    pub fn total(&self) -> usize {
        self.gains.end
    }

    /// Controller block `[ξ | ζ | η]`.
    pub fn controller(&self) -> Range<usize> {
        self.xi.start..self.eta.end
    }

    pub fn x_node(&self, i: usize) -> Range<usize> {
        self.x.start + i * self.n..self.x.start + (i + 1) * self.n
    }

    pub fn w_node(&self, i: usize) -> Range<usize> {
        self.w.start + self.w_offsets[i]..self.w.start + self.w_offsets[i + 1]
    }
}

/// Plant outputs, inputs, disturbances and coupling signals at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub signals: Signals,
}

/// `N` copies of one plant, their exosystems and a controller over a graph.
///
/// Sharing one plant object across nodes makes the network homogeneous by
/// construction; heterogeneity enters only through the disturbances.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    graph: Graph,
    ops: GraphOperators,
    plant: Arc<dyn Plant>,
    exosystems: Vec<Exosystem>,
    controller: Controller,
    layout: StateLayout,
}

impl ClosedLoop {
    pub fn new(
        graph: Graph,
        ops: GraphOperators,
        plant: Arc<dyn Plant>,
        exosystems: Vec<Exosystem>,
        controller: Controller,
    ) -> Result<Self, SimError> {
        let n_nodes = graph.n_nodes();
        if exosystems.len() != n_nodes {
            return Err(SimError::DimensionMismatch {
                what: "exosystems",
                expected: n_nodes,
                got: exosystems.len(),
            });
        }
        let (n, q) = (plant.state_dim(), plant.output_dim());
        for e in &exosystems {
            if e.model.output_dim() != q {
                return Err(SimError::DimensionMismatch {
                    what: "exosystem output",
                    expected: q,
                    got: e.model.output_dim(),
                });
            }
        }
        let x = 0..n_nodes * n;
        let mut w_offsets = vec![0];
        for e in &exosystems {
            w_offsets.push(w_offsets.last().unwrap() + e.dim());
        }
        let w = x.end..x.end + w_offsets[n_nodes];
        let xi = w.end..w.end + controller.xi_dim();
        let zeta = xi.end..xi.end + controller.zeta_dim();
        let eta = zeta.end..zeta.end + controller.eta_dim();
        let gains = eta.end..eta.end + controller.gain_dim();
        let layout = StateLayout {
            n_nodes,
            n,
            q,
            x,
            w,
            w_offsets,
            xi,
            zeta,
            eta,
            gains,
        };
        Ok(ClosedLoop {
            graph,
            ops,
            plant,
            exosystems,
            controller,
            layout,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn ops(&self) -> &GraphOperators {
        &self.ops
    }

    pub fn plant(&self) -> &dyn Plant {
        self.plant.as_ref()
    }

    pub fn exosystems(&self) -> &[Exosystem] {
        &self.exosystems
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    /// Evaluates all derived signals at a stacked state, optionally writing
    /// the stacked derivative.
    fn eval(&self, z: &[f64], dz: Option<&mut [f64]>) -> Channels {
        let l = &self.layout;
        let (q, nn) = (l.q, l.n_nodes);
        let mut y = vec![0.0; nn * q];
        let mut d = vec![0.0; nn * q];
        for i in 0..nn {
            self.plant.output(&z[l.x_node(i)], &mut y[i * q..(i + 1) * q]);
            self.exosystems[i]
                .model
                .disturbance(&z[l.w_node(i)], &mut d[i * q..(i + 1) * q]);
        }
        let mut u = vec![0.0; nn * q];
        let mut scratch_state = vec![0.0; l.controller().len()];
        let mut scratch_gain = vec![0.0; l.gains.len()];
        let (state_dot, gain_dot): (&mut [f64], &mut [f64]) = match dz {
            Some(dz) => {
                // Plant derivatives need u and are filled in by the caller.
                let (_, rest) = dz.split_at_mut(l.w.start);
                let (wdot, rest) = rest.split_at_mut(l.w.len());
                for i in 0..nn {
                    let r = l.w_offsets[i]..l.w_offsets[i + 1];
                    self.exosystems[i].model.field(&z[l.w_node(i)], &mut wdot[r]);
                }
                rest.split_at_mut(l.controller().len())
            }
            None => (&mut scratch_state, &mut scratch_gain),
        };
        let signals = self.controller.evaluate(
            &self.ops,
            q,
            &y,
            &z[l.controller()],
            &z[l.gains.clone()],
            &mut u,
            state_dot,
            gain_dot,
        );
        Channels { y, u, d, signals }
    }

    /// Derived channels at one stacked state.
    pub fn channels(&self, z: &[f64]) -> Channels {
        self.eval(z, None)
    }

    /// Stacked vector field. Fails when any component is non-finite.
    pub fn derivative(&self, t: f64, z: &[f64], dz: &mut [f64]) -> Result<(), SimError> {
        let l = &self.layout;
        let ch = self.eval(z, Some(dz));
        let q = l.q;
        for i in 0..l.n_nodes {
            let xr = l.x_node(i);
            self.plant.derivative(
                &z[xr.clone()],
                &ch.u[i * q..(i + 1) * q],
                &ch.d[i * q..(i + 1) * q],
                &mut dz[xr],
            );
        }
        if dz.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::NonFiniteDerivative { t })
        }
    }

    /// Initial stacked state. Plant states, exosystem states without a fixed
    /// initial value and given edge states `η` are drawn uniformly from
    /// `init.range` in that order; internal-model states and gains start at
    /// zero.
    pub fn initial_state(&self, init: &InitialConditions) -> Result<Vec<f64>, SimError> {
        let l = &self.layout;
        let mut z = vec![0.0; l.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let (lo, hi) = init.range;
        let draw = |rng: &mut ChaCha8Rng| rng.gen_range(lo..=hi);
        match &init.plant_states {
            Some(x0) => {
                if x0.len() != l.n_nodes {
                    return Err(SimError::DimensionMismatch {
                        what: "initial plant states",
                        expected: l.n_nodes,
                        got: x0.len(),
                    });
                }
                for (i, xi) in x0.iter().enumerate() {
                    if xi.len() != l.n {
                        return Err(SimError::DimensionMismatch {
                            what: "initial plant state",
                            expected: l.n,
                            got: xi.len(),
                        });
                    }
                    z[l.x_node(i)].copy_from_slice(xi);
                }
            }
            None => z[l.x.clone()].iter_mut().for_each(|v| *v = draw(&mut rng)),
        }
        for (i, e) in self.exosystems.iter().enumerate() {
            let r = l.w_node(i);
            match &e.initial_state {
                Some(w0) => z[r].copy_from_slice(w0),
                None => z[r].iter_mut().for_each(|v| *v = draw(&mut rng)),
            }
        }
        z[l.eta.clone()].iter_mut().for_each(|v| *v = draw(&mut rng));
        Ok(z)
    }
}

/// Initial-condition protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub range: (f64, f64),
    pub seed: u64,
    /// Explicit plant states, one per node; drawn when absent.
    pub plant_states: Option<Vec<Vec<f64>>>,
}

impl InitialConditions {
    pub fn random(seed: u64) -> Self {
        InitialConditions {
            range: (-3.0, 3.0),
            seed,
            plant_states: None,
        }
    }
}

/// Trips when the state norm exceeds `threshold` or any entry is non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceGuard {
    pub threshold: f64,
}

impl Default for DivergenceGuard {
    fn default() -> Self {
        DivergenceGuard { threshold: 1e6 }
    }
}

impl DivergenceGuard {
    /// `Err(norm)` when tripped.
    pub fn check(&self, z: &[f64]) -> Result<(), f64> {
        divergence_guard(z, self.threshold)
    }
}

pub fn divergence_guard(z: &[f64], threshold: f64) -> Result<(), f64> {
    let nz = norm(z);
    if z.iter().all(|v| v.is_finite()) && nz <= threshold {
        Ok(())
    } else {
        Err(nz)
    }
}

/// Classical four-stage Runge–Kutta step.
pub fn rk4_step<F>(mut f: F, t: f64, z: &[f64], h: f64) -> Result<Vec<f64>, SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), SimError>,
{
    let dim = z.len();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    f(t, z, &mut k1)?;
    for i in 0..dim {
        tmp[i] = z[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..dim {
        tmp[i] = z[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..dim {
        tmp[i] = z[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4)?;
    let out: Vec<f64> = (0..dim)
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(SimError::NonFiniteDerivative { t })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    pub h: f64,
    pub guard: DivergenceGuard,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_final: 100.0,
            h: 1e-3,
            guard: DivergenceGuard::default(),
            max_steps: 10_000_000,
        }
    }
}

impl SimConfig {
    /// Number of steps and the step actually used. When `T / h` is not an
    /// integer the horizon is split into `⌈T / h⌉` equal steps, so the grid
    /// stays uniform, ends exactly at `T` and never uses a step above `h`.
    pub fn grid(&self) -> Result<(usize, f64), SimError> {
        if !(self.h > 0.0) || !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(SimError::InvalidHorizon(format!(
                "T = {} and h = {} must both be positive",
                self.t_final, self.h
            )));
        }
        let ratio = self.t_final / self.h;
        let nearest = ratio.round();
        let exact = (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0);
        let steps = if exact { nearest } else { ratio.ceil() };
        if steps > self.max_steps as f64 {
            return Err(SimError::InvalidHorizon(format!(
                "{steps} steps exceed the limit of {}",
                self.max_steps
            )));
        }
        let steps = steps as usize;
        let h = if exact { self.h } else { self.t_final / steps as f64 };
        Ok((steps, h))
    }

    pub fn n_steps(&self) -> Result<usize, SimError> {
        self.grid().map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Completed,
    Diverged { t: f64 },
}

/// Stacked states at `t_k = k·h`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    data: Vec<f64>,
    pub status: Status,
}

impl Trajectory {
    pub fn new(h: f64, dim: usize) -> Self {
        Trajectory {
            h,
            dim,
            times: Vec::new(),
            data: Vec::new(),
            status: Status::Completed,
        }
    }

    pub fn push(&mut self, t: f64, z: &[f64]) {
        debug_assert_eq!(z.len(), self.dim);
        self.times.push(t);
        self.data.extend_from_slice(z);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.len())
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.len().checked_sub(1).map(|k| self.state(k))
    }

    /// Derived channels at every stored step.
    pub fn channels(&self, lp: &ClosedLoop) -> Vec<Channels> {
        self.states().map(|z| lp.channels(z)).collect()
    }
}

/// Integrates the closed loop from `z0` with fixed-step RK4, storing every
/// step.
pub fn simulate(lp: &ClosedLoop, z0: Vec<f64>, config: &SimConfig) -> Result<Trajectory, SimError> {
    if z0.len() != lp.dim() {
        return Err(SimError::DimensionMismatch {
            what: "initial state",
            expected: lp.dim(),
            got: z0.len(),
        });
    }
    let (steps, h) = config.grid()?;
    let mut traj = Trajectory::new(h, lp.dim());
    traj.times.reserve(steps + 1);
    traj.data.reserve((steps + 1) * lp.dim());
    if let Err(nz) = config.guard.check(&z0) {
        traj.push(0.0, &z0);
        traj.status = Status::Diverged { t: 0.0 };
        return Err(SimError::Diverged {
            t: 0.0,
            norm: nz,
            trajectory: Box::new(traj),
        });
    }
    traj.push(0.0, &z0);
    let mut z = z0;
    for k in 0..steps {
        let t = k as f64 * h;
        let next = match rk4_step(|t, z, dz| lp.derivative(t, z, dz), t, &z, h) {
            Ok(next) => next,
            Err(SimError::NonFiniteDerivative { .. }) => {
                let t_next = (k + 1) as f64 * h;
                traj.status = Status::Diverged { t: t_next };
                return Err(SimError::Diverged {
                    t: t_next,
                    norm: f64::NAN,
                    trajectory: Box::new(traj),
                });
            }
            Err(e) => return Err(e),
        };
        let t_next = (k + 1) as f64 * h;
        if let Err(nz) = config.guard.check(&next) {
            traj.push(t_next, &next);
            traj.status = Status::Diverged { t: t_next };
            return Err(SimError::Diverged {
                t: t_next,
                norm: nz,
                trajectory: Box::new(traj),
            });
        }
        traj.push(t_next, &next);
        z = next;
    }
    Ok(traj)
}
