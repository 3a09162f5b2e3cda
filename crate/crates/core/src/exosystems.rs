//! Disturbance generators `ẇ = s(w)`, `d = R w` with a monotone
//! (non-expansive) vector field: `s(0) = 0` and
//! `(w − w′)ᵀ (s(w) − s(w′)) ≤ 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{dot, max_abs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExoError {
    #[error("generator matrix is not skew-symmetric (max |S + Sᵀ| = {residual:e})")]
    NotSkew { residual: f64 },
    #[error("generator does not vanish at the origin")]
    NonZeroAtOrigin,
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type GeneratorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Vector field of an exosystem.
#[derive(Clone)]
pub enum Generator {
    /// `s(w) = 0`: constant disturbances.
    Zero,
    /// `s(w) = S w` with `S` skew-symmetric.
    Linear(DMatrix<f64>),
    /// User-registered field; monotonicity is only spot-checked.
    Custom(GeneratorFn),
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Zero => f.write_str("Zero"),
            Generator::Linear(s) => f.debug_tuple("Linear").field(s).finish(),
            Generator::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Generator {
    pub fn eval(&self, w: &[f64], out: &mut [f64]) {
        match self {
            Generator::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Generator::Linear(s) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..w.len()).map(|j| s[(i, j)] * w[j]).sum();
                }
            }
            Generator::Custom(f) => f(w, out),
        }
    }
}

/// The `(s, R)` pair of an exosystem. Internal-model controllers carry
/// copies of these.
#[derive(Debug, Clone)]
pub struct ExoModel {
    dim: usize,
    generator: Generator,
    output: DMatrix<f64>,
}

impl ExoModel {
    pub fn new(generator: Generator, output: DMatrix<f64>) -> Result<Self, ExoError> {
        let dim = output.ncols();
        if let Generator::Linear(s) = &generator {
            if s.shape() != (dim, dim) {
                return Err(ExoError::DimensionMismatch {
                    what: "generator",
                    expected: dim,
                    got: s.nrows(),
                });
            }
            let residual = max_abs(&(s + s.transpose()));
            if residual > 1e-12 * max_abs(s).max(1.0) {
                return Err(ExoError::NotSkew { residual });
            }
        }
        let model = ExoModel { dim, generator, output };
        let mut at_zero = vec![0.0; dim];
        model.generator.eval(&vec![0.0; dim], &mut at_zero);
        if at_zero.iter().any(|&v| v != 0.0) {
            return Err(ExoError::NonZeroAtOrigin);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn output_dim(&self) -> usize {
        self.output.nrows()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn output_matrix(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn field(&self, w: &[f64], out: &mut [f64]) {
        self.generator.eval(w, out)
    }

    /// `d = R w`.
    pub fn disturbance(&self, w: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..self.dim).map(|j| self.output[(k, j)] * w[j]).sum();
        }
    }

    /// No-disturbance model with output dimension `q`.
    pub fn silent(q: usize) -> Self {
        ExoModel {
            dim: 0,
            generator: Generator::Zero,
            output: DMatrix::zeros(q, 0),
        }
    }
}

/// An exosystem model plus an optional fixed initial state. When the initial
/// state is absent the simulator draws it from the initial-condition box.
#[derive(Debug, Clone)]
pub struct Exosystem {
    pub model: ExoModel,
    pub initial_state: Option<Vec<f64>>,
}

impl Exosystem {
    pub fn new(model: ExoModel, initial_state: Option<Vec<f64>>) -> Result<Self, ExoError> {
        if let Some(w0) = &initial_state {
            if w0.len() != model.dim() {
                return Err(ExoError::DimensionMismatch {
                    what: "initial state",
                    expected: model.dim(),
                    got: w0.len(),
                });
            }
        }
        Ok(Exosystem { model, initial_state })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }
}

/// Constant disturbance: `ẇ = 0`, `d = w`, with `w ∈ ℝ^q`.
pub fn constant_exo(q: usize, w0: Option<Vec<f64>>) -> Result<Exosystem, ExoError> {
    let model = ExoModel::new(Generator::Zero, DMatrix::identity(q, q))?;
    Exosystem::new(model, w0)
}

/// Sinusoidal disturbance: `ẇ = ω [[0, 1], [−1, 0]] w`, `d = R w`.
pub fn rotation_exo(omega: f64, w0: Option<Vec<f64>>, r: DMatrix<f64>) -> Result<Exosystem, ExoError> {
    if r.ncols() != 2 {
        return Err(ExoError::DimensionMismatch {
            what: "output matrix columns",
            expected: 2,
            got: r.ncols(),
        });
    }
    let s = DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0]);
    let model = ExoModel::new(Generator::Linear(s), r)?;
    Exosystem::new(model, w0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSampler {
    pub range: (f64, f64),
    pub pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    /// Largest `(w − w′)ᵀ (s(w) − s(w′))` over the samples.
    pub max_inner: f64,
    /// Largest inner product divided by `‖w − w′‖²`.
    pub max_normalized: f64,
    pub pass: bool,
}

/// Spot-checks the monotonicity of the generator on random pairs; passes
/// when every inner product is at most `10⁻¹² ‖w − w′‖²`.
pub fn check_monotone(model: &ExoModel, sampler: &MonotoneSampler) -> MonotoneReport {
    let m = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut max_inner = if m == 0 { 0.0 } else { f64::NEG_INFINITY };
    let mut max_normalized = max_inner;
    let mut pass = true;
    let (mut sa, mut sb) = (vec![0.0; m], vec![0.0; m]);
    for _ in 0..sampler.pairs {
        if m == 0 {
            break;
        }
        let a: Vec<f64> = (0..m)
            .map(|_| rng.gen_range(sampler.range.0..=sampler.range.1))
            .collect();
        let b: Vec<f64> = (0..m)
            .map(|_| rng.gen_range(sampler.range.0..=sampler.range.1))
            .collect();
        model.field(&a, &mut sa);
        model.field(&b, &mut sb);
        let dw: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let ds: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x - y).collect();
        let inner = dot(&dw, &ds);
        let scale = dot(&dw, &dw);
        max_inner = max_inner.max(inner);
        if scale > 0.0 {
            max_normalized = max_normalized.max(inner / scale);
        }
        if inner > 1e-12 * scale {
            pass = false;
        }
    }
    MonotoneReport {
        max_inner,
        max_normalized,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampler() -> MonotoneSampler {
        MonotoneSampler {
            range: (-10.0, 10.0),
            pairs: 1000,
            seed: 3,
        }
    }

    #[test]
    fn constant_disturbance() {
        let e = constant_exo(1, Some(vec![2.5])).unwrap();
        let mut wdot = [1.0];
        e.model.field(&[2.5], &mut wdot);
        assert_eq!(wdot, [0.0]);
        let mut d = [0.0];
        e.model.disturbance(&[2.5], &mut d);
        assert_eq!(d, [2.5]);
        let zero = constant_exo(1, Some(vec![0.0])).unwrap();
        zero.model.disturbance(&[0.0], &mut d);
        assert_eq!(d, [0.0]);
    }

    #[test]
    fn rotation_generator_at_start() {
        let e = rotation_exo(1.0, Some(vec![1.0, 0.0]), DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let mut wdot = [0.0; 2];
        e.model.field(&[1.0, 0.0], &mut wdot);
        assert_eq!(wdot, [0.0, -1.0]);
        let mut d = [0.0];
        e.model.disturbance(&[1.0, 0.0], &mut d);
        assert_eq!(d, [1.0]);
    }

    #[test]
    fn monotone_reports() {
        let c = constant_exo(2, None).unwrap();
        let rep = check_monotone(&c.model, &sampler());
        assert!(rep.pass);
        assert_eq!(rep.max_inner, 0.0);

        let r = rotation_exo(2.3, None, DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let rep = check_monotone(&r.model, &sampler());
        assert!(rep.pass);
        assert!(rep.max_inner.abs() < 1e-12);

        let expanding: GeneratorFn = Arc::new(|w: &[f64], out: &mut [f64]| out.copy_from_slice(w));
        let bad = ExoModel::new(Generator::Custom(expanding), DMatrix::identity(2, 2)).unwrap();
        let rep = check_monotone(&bad, &sampler());
        assert!(!rep.pass);
        assert!(rep.max_inner > 0.0);
    }

    #[test]
    fn rejects_invalid_generators() {
        let not_skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            ExoModel::new(Generator::Linear(not_skew), DMatrix::identity(2, 2)),
            Err(ExoError::NotSkew { .. })
        ));
        let offset: GeneratorFn = Arc::new(|_: &[f64], out: &mut [f64]| out.iter_mut().for_each(|o| *o = 1.0));
        assert!(matches!(
            ExoModel::new(Generator::Custom(offset), DMatrix::identity(1, 1)),
            Err(ExoError::NonZeroAtOrigin)
        ));
        assert!(matches!(
            constant_exo(2, Some(vec![1.0])),
            Err(ExoError::DimensionMismatch { .. })
        ));
    }
}
