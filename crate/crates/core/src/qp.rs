//! `min αᵀHα + fᵀα` over the unit simplex.
//!
//! Accelerated projected gradient with adaptive restart, followed by an
//! equality-constrained polish on the detected support.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_QP_TOL: f64 = 1e-10;
pub const DEFAULT_QP_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// `‖α − Π(α − ∇)‖` on the rescaled objective.
    pub gradient_map_norm: f64,
    pub converged: bool,
}

/// Simplex weights produced by a meta-design problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaWeights {
    pub alpha_tilde: Vec<f64>,
    pub objective_value: f64,
    pub solver_report: SolverReport,
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

pub fn objective(h: &[Vec<f64>], f: &[f64], x: &[f64]) -> f64 {
    let quad: f64 = h
        .iter()
        .zip(x)
        .map(|(row, xi)| xi * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    quad + f.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

fn gradient(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    2.0 * h * x + f
}

fn gradient_map(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let g = gradient(h, f, x);
    let p = project_simplex((x - g).as_slice());
    x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn validate(h: &[Vec<f64>], f: &[f64]) -> Result<()> {
    let n = f.len();
    if n == 0 {
        return Err(Error::dim("empty QP"));
    }
    if h.len() != n || h.iter().any(|row| row.len() != n) {
        return Err(Error::dim(format!("H must be {n}x{n}")));
    }
    if h.iter().flatten().chain(f).any(|v| !v.is_finite()) {
        return Err(Error::config("QP data must be finite"));
    }
    let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, row) in h.iter().enumerate() {
        for (j, v) in row.iter().enumerate().take(i) {
            if (v - h[j][i]).abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::config("H must be symmetric"));
            }
        }
    }
    Ok(())
}

/// Solves the KKT system restricted to `support`; `None` if singular or
/// the solution leaves the simplex.
fn polish(h: &DMatrix<f64>, f: &DVector<f64>, support: &[usize]) -> Option<DVector<f64>> {
    let k = support.len();
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = 2.0 * h[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = -f[i];
    }
    rhs[k] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = DVector::<f64>::zeros(h.nrows());
    for (a, &i) in support.iter().enumerate() {
        if sol[a] < -1e-12 {
            return None;
        }
        x[i] = sol[a].max(0.0);
    }
    let s = x.sum();
    Some(x / s)
}

pub fn solve_simplex_qp(h: &[Vec<f64>], f: &[f64], tol: f64, max_iter: usize) -> Result<MetaWeights> {
    validate(h, f)?;
    if !(tol > 0.0) {
        return Err(Error::config("QP tolerance must be > 0"));
    }
    let n = f.len();
    if n == 1 {
        return Ok(MetaWeights {
            alpha_tilde: vec![1.0],
            objective_value: objective(h, f, &[1.0]),
            solver_report: SolverReport {
                iterations: 0,
                gradient_map_norm: 0.0,
                converged: true,
            },
        });
    }

    // rescale so the argmin is computed on O(1) data
    let h_max = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let f_max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if h_max > 0.0 {
        1.0 / h_max
    } else if f_max > 0.0 {
        1.0 / f_max
    } else {
        1.0
    };
    let hs = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]) * scale);
    let fs = DVector::from_fn(n, |i, _| f[i] * scale);
    let lip = 2.0 * SymmetricEigen::new(hs.clone()).eigenvalues.max().max(0.0);
    let step = if lip > 1e-12 { 1.0 / lip } else { 1.0 };
    let obj = |x: &DVector<f64>| x.dot(&(&hs * x)) + fs.dot(x);

    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = x.clone();
    let mut best_obj = obj(&x);
    let mut gm = gradient_map(&hs, &fs, &x);
    let mut iterations = 0;

    while iterations < max_iter && gm > tol {
        iterations += 1;
        let g = gradient(&hs, &fs, &y);
        let x_new = DVector::from_vec(project_simplex((&y - step * g).as_slice()));
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart momentum when it points uphill
        if (&y - &x_new).dot(&(&x_new - &x)) > 0.0 {
            t = 1.0;
            y = x_new.clone();
        } else {
            y = &x_new + ((t - 1.0) / t_new) * (&x_new - &x);
            t = t_new;
        }
        x = x_new;
        let fx = obj(&x);
        if fx <= best_obj {
            best_obj = fx;
            best = x.clone();
        }
        if iterations % 10 == 0 || iterations == max_iter {
            gm = gradient_map(&hs, &fs, &best);
        }
    }

    let support: Vec<usize> = (0..n).filter(|&i| best[i] > 1e-9).collect();
    if !support.is_empty() {
        if let Some(p) = polish(&hs, &fs, &support) {
            let p_gm = gradient_map(&hs, &fs, &p);
            if obj(&p) <= best_obj + 1e-14 * best_obj.abs().max(1.0) && p_gm <= gm.max(tol) {
                best = p;
            }
        }
    }
    gm = gradient_map(&hs, &fs, &best);

    let mut alpha: Vec<f64> = best.iter().map(|&v| v.max(0.0)).collect();
    let s: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|v| *v /= s);
    Ok(MetaWeights {
        objective_value: objective(h, f, &alpha),
        alpha_tilde: alpha,
        solver_report: SolverReport {
            iterations,
            gradient_map_norm: gm,
            converged: gm <= tol,
        },
    })
}
