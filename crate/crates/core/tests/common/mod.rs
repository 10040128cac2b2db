//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector6};
use scope_core::mechanics::{ContactAdjoint, FrictionCone, Wrench};
use scope_core::qp::SensorNoise;

/// Whitened problem `(M, b)` assembled column by column from the adjoint
/// applied to pure-force contact wrenches.
pub fn whitened_problem(
    gamma_e: &Wrench,
    adj: &ContactAdjoint,
    cone: &FrictionCone,
    noise: &SensorNoise,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = cone.edges.len();
    let mut m = DMatrix::zeros(6, n);
    for (j, e) in cone.edges.iter().enumerate() {
        let col = adj.matrix * Vector6::new(e.x, e.y, e.z, 0.0, 0.0, 0.0);
        for i in 0..6 {
            m[(i, j)] = col[i] / noise.sigma_diag[i].sqrt();
        }
    }
    let g = gamma_e.to_vector();
    let b = DVector::from_fn(6, |i, _| g[i] / noise.sigma_diag[i].sqrt());
    (m, b)
}

pub fn objective(m: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (m * x - b).norm_squared()
}

/// Cyclic coordinate descent with exact projected line search per coordinate.
pub fn coordinate_descent(m: &DMatrix<f64>, b: &DVector<f64>, mut x: DVector<f64>, max_sweeps: usize) -> DVector<f64> {
    let n = m.ncols();
    let col_sq: Vec<f64> = (0..n).map(|j| m.column(j).norm_squared()).collect();
    let mut r = b - m * &x;
    let mut last = r.norm_squared();
    for _ in 0..max_sweeps {
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let g = m.column(j).dot(&r);
            let new = (x[j] + g / col_sq[j]).max(0.0);
            let d = new - x[j];
            if d != 0.0 {
                r -= m.column(j) * d;
                x[j] = new;
            }
        }
        let obj = r.norm_squared();
        if last - obj <= 1e-15 * last.max(1e-300) {
            break;
        }
        last = obj;
    }
    x
}

/// Best nonnegative solution supported on at most three columns. An NNLS
/// optimum always admits a basic solution whose support has linearly
/// independent columns, and `rank(M) ≤ 3` here.
pub fn support_enumeration(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = m.ncols();
    let mut best = DVector::zeros(n);
    let mut best_obj = objective(m, b, &best);
    let mut consider = |cols: &[usize]| {
        let sub = m.select_columns(cols);
        let gram = sub.transpose() * &sub;
        let Some(chol) = gram.clone().cholesky() else { return };
        let sol = chol.solve(&(sub.transpose() * b));
        if sol.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return;
        }
        let mut x = DVector::zeros(n);
        for (k, &c) in cols.iter().enumerate() {
            x[c] = sol[k];
        }
        let obj = objective(m, b, &x);
        if obj < best_obj {
            best_obj = obj;
            best = x;
        }
    };
    for a in 0..n {
        consider(&[a]);
        for c in a + 1..n {
            consider(&[a, c]);
            for d in c + 1..n {
                consider(&[a, c, d]);
            }
        }
    }
    best
}

/// Grid search over `[0, α_max]^n` with `steps` points per axis, polished by
/// coordinate descent.
pub fn grid_search(m: &DMatrix<f64>, b: &DVector<f64>, alpha_max: f64, steps: usize) -> DVector<f64> {
    let n = m.ncols();
    let total = steps.pow(n as u32);
    let mut best = DVector::zeros(n);
    let mut best_obj = f64::INFINITY;
    let mut x = DVector::zeros(n);
    for code in 0..total {
        let mut c = code;
        for j in 0..n {
            x[j] = alpha_max * (c % steps) as f64 / (steps - 1) as f64;
            c /= steps;
        }
        let obj = objective(m, b, &x);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from(&x);
        }
    }
    coordinate_descent(m, b, best, 200_000)
}

/// Oracle minimum: the better of the polished grid search and the polished
/// support enumeration.
pub fn oracle_minimum(m: &DMatrix<f64>, b: &DVector<f64>, alpha_max: f64, steps: usize) -> f64 {
    let grid = grid_search(m, b, alpha_max, steps);
    let support = coordinate_descent(m, b, support_enumeration(m, b), 10_000);
    objective(m, b, &grid).min(objective(m, b, &support))
}

/// Search box for the grid: twice the force magnitude over the smallest
/// edge projection on the cone axis.
pub fn alpha_max(gamma_e: &Wrench, cone: &FrictionCone) -> f64 {
    let proj = cone.edges.iter().map(|e| e.dot(&cone.normal)).fold(f64::INFINITY, f64::min).max(1e-3);
    (2.0 * gamma_e.force.norm() / proj).max(1e-6)
}
