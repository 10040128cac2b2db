//! Per-particle contact program: nonnegative cone coefficients that best
//! explain a measured end-effector wrench under a diagonal Gaussian noise
//! model, solved exactly by active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanics::{ContactAdjoint, Frame, FrictionCone, Wrench};

pub const FORCE_VARIANCE_FLOOR: f64 = 1e-8;
pub const MOMENT_VARIANCE_FLOOR: f64 = 1e-10;

/// Relative stationarity and dual-feasibility tolerance of the solver.
pub const KKT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error("wrench frame {found} does not match adjoint target {expected}")]
    Frame { expected: Frame, found: Frame },
}

/// Diagonal measurement covariance over `[Fx, Fy, Fz, Mx, My, Mz]`, in N² and
/// (N·m)². Entries are floored at construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub sigma_diag: [f64; 6],
}

impl SensorNoise {
    pub fn new(variances: [f64; 6]) -> Result<Self, QpError> {
        let mut sigma_diag = variances;
        for (i, v) in sigma_diag.iter_mut().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(QpError::Noise(format!("variance {i} is {v}")));
            }
            let floor = if i < 3 { FORCE_VARIANCE_FLOOR } else { MOMENT_VARIANCE_FLOOR };
            *v = v.max(floor);
        }
        Ok(Self { sigma_diag })
    }

    /// Isotropic model from per-component standard deviations.
    pub fn from_std(force_std: f64, moment_std: f64) -> Result<Self, QpError> {
        let (f, m) = (force_std * force_std, moment_std * moment_std);
        Self::new([f, f, f, m, m, m])
    }

    pub fn std_devs(&self) -> [f64; 6] {
        self.sigma_diag.map(f64::sqrt)
    }

    /// Whitening weights `Σ^{-1/2}`.
    pub fn weights(&self) -> Vector6<f64> {
        Vector6::from_fn(|i, _| 1.0 / self.sigma_diag[i].sqrt())
    }

    pub fn scaled(&self, c: f64) -> Result<Self, QpError> {
        Self::new(self.sigma_diag.map(|v| v * c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactQpResult {
    pub alpha: Vec<f64>,
    /// Contact force in the contact frame; the moment is identically zero.
    pub gamma_c: Wrench,
    pub predicted_ee: Wrench,
    /// Minimised objective `‖W(Γ_E − A B α)‖²`.
    pub residual: f64,
    /// KKT violation relative to the problem scale `‖M‖_F ‖Wb‖`.
    pub kkt_gap: f64,
}

/// Unnormalised likelihood `exp(−r/2)`.
pub fn contact_likelihood(residual: f64) -> f64 {
    (-0.5 * residual).exp()
}

/// Whitened design matrix `W A B` (6 × N_f). Only the force block of the
/// adjoint contributes since the contact transmits no moment.
pub fn design_matrix(adj: &ContactAdjoint, edges: &[Vector3<f64>], w: &Vector6<f64>) -> DMatrix<f64> {
    let e = Matrix3xX::from_columns(edges);
    let ab = adj.matrix.fixed_columns::<3>(0) * e;
    let mut m = DMatrix::from_iterator(6, edges.len(), ab.iter().copied());
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= w[i];
    }
    m
}

pub fn solve_contact_qp(
    gamma_e: &Wrench,
    adj: &ContactAdjoint,
    cone: &FrictionCone,
    noise: &SensorNoise,
) -> Result<ContactQpResult, QpError> {
    if gamma_e.frame != adj.target {
        return Err(QpError::Frame { expected: adj.target, found: gamma_e.frame });
    }
    if !gamma_e.is_finite() {
        return Err(QpError::NonFinite("wrench"));
    }
    if !adj.matrix.iter().all(|x| x.is_finite()) {
        return Err(QpError::NonFinite("adjoint"));
    }
    if !cone.edges.iter().all(|e| e.iter().all(|x| x.is_finite())) {
        return Err(QpError::NonFinite("cone edges"));
    }
    let w = noise.weights();
    let m = design_matrix(adj, &cone.edges, &w);
    let b = DVector::from_iterator(6, gamma_e.to_vector().component_mul(&w).iter().copied());
    let alpha = nnls(&m, &b);
    let r = &b - &m * &alpha;
    let residual = r.norm_squared();
    let kkt_gap = kkt_violation(&m, &b, &alpha);

    let force: Vector3<f64> = cone.edges.iter().zip(alpha.iter()).map(|(e, a)| e * *a).sum();
    let gamma_c = Wrench::new(force, Vector3::zeros(), adj.source);
    let predicted_ee = Wrench::from_vector(&(adj.matrix * gamma_c.to_vector()), adj.target);
    Ok(ContactQpResult { alpha: alpha.iter().copied().collect(), gamma_c, predicted_ee, residual, kkt_gap })
}

/// Gradient-based KKT violation of `x` for `min_{x≥0} ½‖Mx − b‖²`, scaled by
/// `‖M‖_F ‖b‖`.
pub fn kkt_violation(m: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let g = m.tr_mul(&(m * x - b));
    let scale = m.norm() * b.norm().max(m.norm() * x.norm());
    if scale == 0.0 {
        return 0.0;
    }
    let worst = x
        .iter()
        .zip(g.iter())
        .map(|(&xi, &gi)| if xi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max);
    worst / scale
}

/// Lawson–Hanson active-set NNLS. The passive set stays linearly independent
/// in exact arithmetic; the least-squares step uses a pseudoinverse so
/// near-dependent columns cannot blow up.
pub fn nnls(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = m.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    // columns whose trial step was non-positive, excluded until x changes
    let mut rejected = vec![false; n];
    let scale = m.norm() * b.norm();
    if scale == 0.0 {
        return x;
    }
    let tol = KKT_TOL * 1e-2 * scale;

    for _ in 0..(4 * n + 10) {
        let w = m.tr_mul(&(b - m * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !rejected[j] && w[j] > tol)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        let mut s = passive_solve(m, b, &passive);
        if s[j] <= 0.0 {
            passive[j] = false;
            rejected[j] = true;
            continue;
        }
        rejected.iter_mut().for_each(|r| *r = false);

        for _ in 0..n {
            let step = (0..n)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            if !step.is_finite() {
                break;
            }
            x += (&s - &x) * step.clamp(0.0, 1.0);
            for i in 0..n {
                if passive[i] && (x[i] <= 0.0 || s[i] <= 0.0 && x[i] <= 1e-14 * x.amax()) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            s = passive_solve(m, b, &passive);
        }
        x = s.map(|v| v.max(0.0));
    }
    x
}

/// Minimum-norm least-squares solution restricted to the passive columns.
fn passive_solve(m: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    if cols.is_empty() {
        return DVector::zeros(passive.len());
    }
    let sub = m.select_columns(&cols);
    let svd = sub.svd(true, true);
    let eps = svd.singular_values.max() * 1e-13 * (m.nrows().max(cols.len()) as f64);
    let sol = svd.solve(b, eps).expect("svd computed with both bases");
    let mut out = DVector::zeros(passive.len());
    for (k, &c) in cols.iter().enumerate() {
        out[c] = sol[k];
    }
    out
}
