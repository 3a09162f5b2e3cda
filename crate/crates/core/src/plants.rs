//! Node dynamics `ẋ = f(x, u, d)`, `y = h(x)`.
//!
//! The built-in plants are Lur'e systems: a passive linear block in feedback
//! with a static nonlinearity,
//!
//! ```text
//! ẋ = A x + B (−φ(y) + u + d),   y = C x,
//! ```
//!
//! with a storage matrix `P = Pᵀ > 0` such that `AᵀP + PA ⪯ 0` and
//! `PB = Cᵀ`. When `φ` has Lipschitz constant `ϖ` on `[−τ⋆, τ⋆]` and is
//! nondecreasing outside that interval, the plant satisfies the incremental
//! output-feedback passivity inequality with `σ = ϖ` and storage
//! `Φ(x, x′) = ½ (x − x′)ᵀ P (x − x′)`.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{asymmetry, max_abs, sorted_symmetric_eigen};

/// Tolerance on `λ_max(AᵀP + PA)` and `|PB − Cᵀ|`.
pub const CERTIFICATE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("Van der Pol parameter nu must be positive, got {0}")]
    NonPositiveNu(f64),
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("breakpoints must satisfy 0 < tau_b < tau_star, got tau_b = {tau_b}, tau_star = {tau_star}")]
    BadBreakpoints { tau_b: f64, tau_star: f64 },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("storage matrix P must be symmetric positive definite")]
    StorageNotPositiveDefinite,
    #[error("passivity certificate fails: max eig(AᵀP+PA) = {max_eig:e}, max |PB − Cᵀ| = {pb_residual:e}")]
    CertificateFailed { max_eig: f64, pb_residual: f64 },
    #[error("nonlinearity is not nondecreasing outside [-tau_star, tau_star] near {at}")]
    NotMonotoneTails { at: f64 },
    #[error("sigma = {sigma} is below the Lipschitz bound {bound} of the nonlinearity")]
    SigmaBelowLipschitz { sigma: f64, bound: f64 },
    #[error("plant has no quadratic storage matrix")]
    NoStorageMatrix,
}

/// Behavioural interface every node plant conforms to.
///
/// `derivative` must be deterministic and locally Lipschitz on the region a
/// simulation visits; this is a documented contract, not a runtime check.
pub trait Plant: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn derivative(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]);
    fn output(&self, x: &[f64], y: &mut [f64]);

    /// Quadratic storage matrix `P` when the plant has one.
    fn storage_matrix(&self) -> Option<&DMatrix<f64>> {
        None
    }

    /// Declared shortage of passivity.
    fn sigma(&self) -> Option<f64> {
        None
    }

    fn name(&self) -> &str;
}

/// Piecewise-linear odd characteristic of Chua's diode: slope `−z0` on
/// `[−τ_b, τ_b]`, `−z1` on the middle bands and `+z2` outside `[−τ⋆, τ⋆]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseLinear {
    pub tau_b: f64,
    pub tau_star: f64,
    pub z0: f64,
    pub z1: f64,
    pub z2: f64,
}

impl PiecewiseLinear {
    pub fn new(tau_b: f64, tau_star: f64, z0: f64, z1: f64, z2: f64) -> Result<Self, PlantError> {
        if !(tau_b > 0.0 && tau_b < tau_star) {
            return Err(PlantError::BadBreakpoints { tau_b, tau_star });
        }
        if !(z2 > 0.0) {
            return Err(PlantError::NonPositiveParameter { name: "z2", value: z2 });
        }
        Ok(PiecewiseLinear {
            tau_b,
            tau_star,
            z0,
            z1,
            z2,
        })
    }

    fn eval_nonneg(&self, t: f64) -> f64 {
        if t <= self.tau_b {
            -self.z0 * t
        } else if t <= self.tau_star {
            -self.z0 * self.tau_b - self.z1 * (t - self.tau_b)
        } else {
            -self.z0 * self.tau_b - self.z1 * (self.tau_star - self.tau_b) + self.z2 * (t - self.tau_star)
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t >= 0.0 {
            self.eval_nonneg(t)
        } else {
            -self.eval_nonneg(-t)
        }
    }

    /// Slope of the band containing `t` (interior points only).
    pub fn slope(&self, t: f64) -> f64 {
        let a = t.abs();
        if a < self.tau_b {
            -self.z0
        } else if a < self.tau_star {
            -self.z1
        } else {
            self.z2
        }
    }
}

/// Static nonlinearity in the feedback path of a Lur'e plant. Applied
/// componentwise when the output has more than one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    /// `φ(y) = ν (y³/3 − y)`.
    CubicMinusLinear {
        nu: f64,
    },
    PiecewiseLinear(PiecewiseLinear),
}

impl Nonlinearity {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Nonlinearity::CubicMinusLinear { nu } => nu * (y * y * y / 3.0 - y),
            Nonlinearity::PiecewiseLinear(pw) => pw.eval(y),
        }
    }

    /// Interval half-width outside which `φ` is nondecreasing.
    pub fn tau_star(&self) -> f64 {
        match self {
            Nonlinearity::CubicMinusLinear { .. } => 1.0,
            Nonlinearity::PiecewiseLinear(pw) => pw.tau_star,
        }
    }

    /// Lipschitz constant `ϖ` on `[−τ⋆, τ⋆]`.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            // |φ′| = ν |y² − 1| ≤ ν on [−1, 1]
            Nonlinearity::CubicMinusLinear { nu } => nu.abs(),
            Nonlinearity::PiecewiseLinear(pw) => pw.z0.abs().max(pw.z1.abs()),
        }
    }

    /// Grid spot-check that `φ` is nondecreasing on `[τ⋆, τ⋆ + span]` and
    /// its mirror image.
    pub fn check_monotone_tails(&self, span: f64, samples: usize) -> Result<(), PlantError> {
        let ts = self.tau_star();
        let step = span / samples.max(1) as f64;
        for side in [1.0, -1.0] {
            let mut prev = self.eval(side * ts);
            for k in 1..=samples {
                let t = side * (ts + k as f64 * step);
                let cur = self.eval(t);
                let increasing = if side > 0.0 { cur >= prev } else { cur <= prev };
                if !increasing {
                    return Err(PlantError::NotMonotoneTails { at: t });
                }
                prev = cur;
            }
        }
        Ok(())
    }
}

/// Result of checking `AᵀP + PA ⪯ 0` and `PB = Cᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub max_eig: f64,
    pub pb_residual: f64,
    pub pass: bool,
}

pub fn check_passivity_certificate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> CertificateReport {
    let lyap = a.transpose() * p + p * a;
    let (eigs, _) = sorted_symmetric_eigen(&lyap);
    let max_eig = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_eig = if max_eig.is_finite() { max_eig } else { 0.0 };
    let pb = p * b;
    let ct = c.transpose();
    let pb_residual = if pb.shape() == ct.shape() {
        pb.iter().zip(ct.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    CertificateReport {
        max_eig,
        pb_residual,
        pass: max_eig <= CERTIFICATE_TOL && pb_residual <= CERTIFICATE_TOL,
    }
}

/// Lur'e plant with a passivity certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct LurePlant {
    name: String,
    a: DMatrix<f64>,
    b_in: DMatrix<f64>,
    c_out: DMatrix<f64>,
    phi: Nonlinearity,
    p: DMatrix<f64>,
    sigma: f64,
}

impl LurePlant {
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<f64>,
        b_in: DMatrix<f64>,
        c_out: DMatrix<f64>,
        phi: Nonlinearity,
        p: DMatrix<f64>,
        sigma: f64,
    ) -> Result<Self, PlantError> {
        let n = a.nrows();
        let q = c_out.nrows();
        let dim = |what, expected: (usize, usize), got: (usize, usize)| {
            if expected == got {
                Ok(())
            } else {
                Err(PlantError::DimensionMismatch {
                    what,
                    expected: format!("{}x{}", expected.0, expected.1),
                    got: format!("{}x{}", got.0, got.1),
                })
            }
        };
        dim("A", (n, n), a.shape())?;
        dim("B", (n, q), b_in.shape())?;
        dim("C", (q, n), c_out.shape())?;
        dim("P", (n, n), p.shape())?;
        if asymmetry(&p, 1e-12 * max_abs(&p).max(1.0)).is_some() {
            return Err(PlantError::StorageNotPositiveDefinite);
        }
        let (p_eigs, _) = sorted_symmetric_eigen(&p);
        if n > 0 && !(p_eigs[0] > 0.0) {
            return Err(PlantError::StorageNotPositiveDefinite);
        }
        let cert = check_passivity_certificate(&a, &b_in, &c_out, &p);
        if !cert.pass {
            return Err(PlantError::CertificateFailed {
                max_eig: cert.max_eig,
                pb_residual: cert.pb_residual,
            });
        }
        phi.check_monotone_tails(10.0 * phi.tau_star().max(1.0), 2000)?;
        let bound = phi.lipschitz_bound();
        if sigma < bound {
            return Err(PlantError::SigmaBelowLipschitz { sigma, bound });
        }
        Ok(LurePlant {
            name: name.into(),
            a,
            b_in,
            c_out,
            phi,
            p,
            sigma,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_in(&self) -> &DMatrix<f64> {
        &self.b_in
    }

    pub fn c_out(&self) -> &DMatrix<f64> {
        &self.c_out
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.phi
    }

    pub fn certificate(&self) -> CertificateReport {
        check_passivity_certificate(&self.a, &self.b_in, &self.c_out, &self.p)
    }
}

impl Plant for LurePlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn output_dim(&self) -> usize {
        self.c_out.nrows()
    }

    fn derivative(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) {
        let n = self.a.nrows();
        let q = self.c_out.nrows();
        let mut drive = vec![0.0; q];
        for k in 0..q {
            let mut y = 0.0;
            for j in 0..n {
                y += self.c_out[(k, j)] * x[j];
            }
            drive[k] = -self.phi.eval(y) + u[k] + d[k];
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.a[(i, j)] * x[j];
            }
            for k in 0..q {
                acc += self.b_in[(i, k)] * drive[k];
            }
            dx[i] = acc;
        }
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        for k in 0..self.c_out.nrows() {
            y[k] = (0..x.len()).map(|j| self.c_out[(k, j)] * x[j]).sum();
        }
    }

    fn storage_matrix(&self) -> Option<&DMatrix<f64>> {
        Some(&self.p)
    }

    fn sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Van der Pol oscillator with output `y = x₂`, in Lur'e form with
/// `φ(y) = ν (y³/3 − y)`, `P = I₂` and `σ = ν`.
pub fn vanderpol(nu: f64) -> Result<LurePlant, PlantError> {
    if !(nu > 0.0) {
        return Err(PlantError::NonPositiveNu(nu));
    }
    LurePlant::new(
        "vanderpol",
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        Nonlinearity::CubicMinusLinear { nu },
        DMatrix::identity(2, 2),
        nu,
    )
}

/// Dimensionless Chua circuit with output `y = x₁`.
///
/// The input enters as `c₁ (u + d)`, so `B = (c₁, 0, 0)ᵀ`, `C = (1, 0, 0)` and
/// `P = diag(1/c₁, 1, 1/c₂)` certifies the linear part.
pub fn chua(c1: f64, c2: f64, phi: PiecewiseLinear) -> Result<LurePlant, PlantError> {
    for (name, value) in [("c1", c1), ("c2", c2)] {
        if !(value > 0.0) {
            return Err(PlantError::NonPositiveParameter { name, value });
        }
    }
    let phi = PiecewiseLinear::new(phi.tau_b, phi.tau_star, phi.z0, phi.z1, phi.z2)?;
    let nl = Nonlinearity::PiecewiseLinear(phi);
    LurePlant::new(
        "chua",
        DMatrix::from_row_slice(3, 3, &[-c1, c1, 0.0, 1.0, -1.0, 1.0, 0.0, -c2, 0.0]),
        DMatrix::from_column_slice(3, 1, &[c1, 0.0, 0.0]),
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        nl,
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0 / c1, 1.0, 1.0 / c2])),
        nl.lipschitz_bound(),
    )
}

/// Sampling box for the incremental dissipation check.
#[derive(Debug, Clone, PartialEq)]
pub struct IofpSampler {
    pub state_range: (f64, f64),
    pub input_range: (f64, f64),
    pub disturbance_range: (f64, f64),
    pub pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IofpReport {
    pub sigma: f64,
    pub pairs: usize,
    /// Largest raw `LHS − RHS`.
    pub max_violation: f64,
    /// Largest `(LHS − RHS) / (1 + |RHS|)`.
    pub max_relative_violation: f64,
    pub pass: bool,
    pub region: IofpSampler,
}

/// Sample point `(x, u, d)` of the incremental inequality.
pub type Sample<'a> = (&'a [f64], &'a [f64], &'a [f64]);

/// Evaluates both sides of the incremental dissipation inequality for the
/// storage `½ (x − x′)ᵀ P (x − x′)`, returning `(lhs, rhs)`.
pub fn iofp_sides(plant: &dyn Plant, p: &DMatrix<f64>, sigma: f64, a: Sample, b: Sample) -> (f64, f64) {
    let n = plant.state_dim();
    let q = plant.output_dim();
    let mut fa = vec![0.0; n];
    let mut fb = vec![0.0; n];
    plant.derivative(a.0, a.1, a.2, &mut fa);
    plant.derivative(b.0, b.1, b.2, &mut fb);
    let mut lhs = 0.0;
    for i in 0..n {
        let dxi = a.0[i] - b.0[i];
        for j in 0..n {
            lhs += dxi * p[(i, j)] * (fa[j] - fb[j]);
        }
    }
    let mut ya = vec![0.0; q];
    let mut yb = vec![0.0; q];
    plant.output(a.0, &mut ya);
    plant.output(b.0, &mut yb);
    let mut rhs = 0.0;
    for k in 0..q {
        let dy = ya[k] - yb[k];
        rhs += sigma * dy * dy + dy * ((a.1[k] + a.2[k]) - (b.1[k] + b.2[k]));
    }
    (lhs, rhs)
}

/// Samples random pairs and checks the incremental dissipation inequality
/// with tolerance `10⁻⁹ (1 + |RHS|)`.
pub fn check_iofp(plant: &dyn Plant, sigma: f64, sampler: &IofpSampler) -> Result<IofpReport, PlantError> {
    let p = plant.storage_matrix().ok_or(PlantError::NoStorageMatrix)?;
    let n = plant.state_dim();
    let q = plant.output_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut draw =
        |range: (f64, f64), len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(range.0..=range.1)).collect() };
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_relative = f64::NEG_INFINITY;
    let mut pass = true;
    for _ in 0..sampler.pairs {
        let (x1, u1, d1) = (
            draw(sampler.state_range, n),
            draw(sampler.input_range, q),
            draw(sampler.disturbance_range, q),
        );
        let (x2, u2, d2) = (
            draw(sampler.state_range, n),
            draw(sampler.input_range, q),
            draw(sampler.disturbance_range, q),
        );
        let (lhs, rhs) = iofp_sides(plant, p, sigma, (&x1, &u1, &d1), (&x2, &u2, &d2));
        let violation = lhs - rhs;
        max_violation = max_violation.max(violation);
        max_relative = max_relative.max(violation / (1.0 + rhs.abs()));
        if violation > 1e-9 * (1.0 + rhs.abs()) {
            pass = false;
        }
    }
    Ok(IofpReport {
        sigma,
        pairs: sampler.pairs,
        max_violation,
        max_relative_violation: max_relative,
        pass,
        region: sampler.clone(),
    })
}
