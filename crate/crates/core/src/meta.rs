//! Controller design from a meta-dataset of previously tuned systems.
//!
//! The new controller is a convex combination `Σ α̃_i C_i` of the stored
//! controllers. Weights come from a simplex-constrained quadratic program
//! that trades the VRFT fit on the target's data against each stored
//! controller's closed-loop performance and the similarity of its training
//! record to the target's.

use serde::{Deserialize, Serialize};

use crate::controller::{combine, ControllerBasis, ControllerParams};
use crate::error::{Error, Result};
use crate::lti::TransferFunction;
use crate::motor::Dataset;
use crate::qp::{solve_simplex_qp, MetaWeights, DEFAULT_QP_MAX_ITER, DEFAULT_QP_TOL};
use crate::vrft::{build_instruments, dot, regression, FilterSpec, InstrumentSet, VirtualErrorConvention};

/// One previously handled system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEntry {
    /// Open-loop-identifiable training record `{u_i, ỹ_i}`.
    pub dataset: Dataset,
    pub controller: ControllerParams,
    /// Output of the system under `controller` for `closed_loop_reference`.
    pub closed_loop_response: Vec<f64>,
    pub closed_loop_reference: Vec<f64>,
    pub system_label: String,
}

/// Which signals feed the two statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticsMode {
    /// Similarity from training outputs, performance from closed-loop
    /// responses.
    #[default]
    SimilarityFromTraining,
    /// Similarity from closed-loop responses, performance from training
    /// outputs.
    SimilarityFromClosedLoop,
}

/// Per-entry statistics, both mean squared errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaStatistics {
    /// `J̃_i`: tracking error of entry `i` against the desired response.
    pub perf: Vec<f64>,
    /// `S_i`: output mismatch between the target and entry `i`.
    pub sim: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaDesignConfig {
    pub lambda_j: f64,
    pub lambda_s: f64,
    pub filter: FilterSpec,
    pub iv: bool,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub convention: VirtualErrorConvention,
    pub statistics: StatisticsMode,
}

impl Default for MetaDesignConfig {
    fn default() -> Self {
        MetaDesignConfig {
            lambda_j: 1e16,
            lambda_s: 1e17,
            filter: FilterSpec::default(),
            iv: true,
            qp_tol: DEFAULT_QP_TOL,
            qp_max_iter: DEFAULT_QP_MAX_ITER,
            convention: VirtualErrorConvention::default(),
            statistics: StatisticsMode::default(),
        }
    }
}

impl MetaDesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_j >= 0.0 && self.lambda_j.is_finite()) || !(self.lambda_s >= 0.0 && self.lambda_s.is_finite()) {
            return Err(Error::config("regularization weights must be finite and >= 0"));
        }
        if !(self.qp_tol > 0.0) || self.qp_max_iter == 0 {
            return Err(Error::config("QP tolerance and iteration budget must be positive"));
        }
        Ok(())
    }
}

/// Quadratic program `min α̃ᵀHα̃ + fᵀα̃ (+ constant)` on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaQp {
    pub h: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub constant: f64,
}

impl MetaQp {
    pub fn value(&self, x: &[f64]) -> f64 {
        crate::qp::objective(&self.h, &self.f, x) + self.constant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDesign {
    pub controller: ControllerParams,
    pub weights: MetaWeights,
    pub statistics: MetaStatistics,
}

fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len().min(b.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(a[..n].iter().zip(&b[..n]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64)
}

/// Desired response for the statistics: `M r` on the closed-loop reference,
/// or on the target's training reference when performance is measured on
/// training outputs.
pub fn desired_response(
    meta: &[MetaEntry],
    target: &Dataset,
    m: &TransferFunction,
    mode: StatisticsMode,
) -> Result<Vec<f64>> {
    let r = match mode {
        StatisticsMode::SimilarityFromTraining => &meta.first().ok_or(Error::EmptyInput)?.closed_loop_reference,
        StatisticsMode::SimilarityFromClosedLoop => target
            .r
            .as_ref()
            .ok_or_else(|| Error::config("target dataset has no reference signal"))?,
    };
    m.simulate(r)
}

/// Mean squared errors over the shorter of each compared pair.
pub fn compute_statistics(
    meta: &[MetaEntry],
    target: &Dataset,
    y_desired: &[f64],
    mode: StatisticsMode,
) -> Result<MetaStatistics> {
    if meta.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut perf = Vec::with_capacity(meta.len());
    let mut sim = Vec::with_capacity(meta.len());
    for e in meta {
        match mode {
            StatisticsMode::SimilarityFromTraining => {
                perf.push(mse(y_desired, &e.closed_loop_response)?);
                sim.push(mse(&target.y, &e.dataset.y)?);
            }
            StatisticsMode::SimilarityFromClosedLoop => {
                perf.push(mse(y_desired, &e.dataset.y)?);
                sim.push(mse(&target.y, &e.closed_loop_response)?);
            }
        }
    }
    Ok(MetaStatistics { perf, sim })
}

/// Builds the QP from regressor columns `φ_k` (one per basis element), the
/// filtered target `uᴸ`, optional instruments and the stored controllers.
pub fn assemble_qp_from_parts(
    phi: &[Vec<f64>],
    u_l: &[f64],
    instruments: Option<&[Vec<f64>]>,
    controllers: &[ControllerParams],
    stats: &MetaStatistics,
    lambda_j: f64,
    lambda_s: f64,
) -> Result<MetaQp> {
    let m = controllers.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if stats.perf.len() != m || stats.sim.len() != m {
        return Err(Error::dim("statistics do not match the number of controllers"));
    }
    let n_alpha = phi.len();
    if controllers.iter().any(|c| c.alpha.len() != n_alpha) {
        return Err(Error::dim("controller dimension does not match the regressor"));
    }
    if phi.iter().any(|c| c.len() != u_l.len()) {
        return Err(Error::dim("regressor columns and target differ in length"));
    }
    // ψ_i = Φ a_i, one column per stored controller
    let psi: Vec<Vec<f64>> = controllers
        .iter()
        .map(|c| {
            (0..u_l.len())
                .map(|t| phi.iter().zip(&c.alpha).map(|(col, a)| a * col[t]).sum())
                .collect()
        })
        .collect();

    let (mut h, mut f, constant) = match instruments {
        None => {
            let h: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| dot(&psi[i], &psi[j])).collect()).collect();
            let f: Vec<f64> = psi.iter().map(|p| -2.0 * dot(p, u_l)).collect();
            (h, f, dot(u_l, u_l))
        }
        Some(zeta) => {
            if zeta.len() != n_alpha {
                return Err(Error::dim(format!(
                    "instrument dimension {} does not match basis dimension {n_alpha}",
                    zeta.len()
                )));
            }
            if zeta.iter().any(|z| z.len() != u_l.len()) {
                return Err(Error::dim("instrument length does not match the regressor"));
            }
            // P = Zᵀ Ψ (n_α × M), w = Zᵀ uᴸ
            let p: Vec<Vec<f64>> = zeta.iter().map(|z| psi.iter().map(|ps| dot(z, ps)).collect()).collect();
            let w: Vec<f64> = zeta.iter().map(|z| dot(z, u_l)).collect();
            let h = (0..m)
                .map(|i| (0..m).map(|j| (0..n_alpha).map(|k| p[k][i] * p[k][j]).sum()).collect())
                .collect();
            let f = (0..m).map(|i| -2.0 * (0..n_alpha).map(|k| p[k][i] * w[k]).sum::<f64>()).collect();
            (h, f, dot(&w, &w))
        }
    };
    for i in 0..m {
        h[i][i] += lambda_j * stats.perf[i];
        f[i] += lambda_s * stats.sim[i];
    }
    if h.iter().flatten().chain(&f).any(|v| !v.is_finite()) {
        return Err(Error::config("meta QP has non-finite coefficients"));
    }
    Ok(MetaQp { h, f, constant })
}

pub fn assemble_meta_qp(
    meta: &[MetaEntry],
    target: &Dataset,
    instruments: Option<&InstrumentSet>,
    stats: &MetaStatistics,
    m: &TransferFunction,
    cfg: &MetaDesignConfig,
) -> Result<MetaQp> {
    let first = meta.first().ok_or(Error::EmptyInput)?;
    let basis = ControllerBasis::from_id(&first.controller.basis_id, target.sample_time)?;
    let reg = regression(target, m, &basis, &cfg.filter, cfg.convention)?;
    let controllers: Vec<ControllerParams> = meta.iter().map(|e| e.controller.clone()).collect();
    assemble_qp_from_parts(
        &reg.psi,
        &reg.u_l,
        instruments.map(|z| z.zeta.as_slice()),
        &controllers,
        stats,
        cfg.lambda_j,
        cfg.lambda_s,
    )
}

/// Full pipeline: statistics, instruments, QP, convex combination.
///
/// `instrument_data` is a second record of the target under the same
/// protocol; it is required when `cfg.iv` is set.
pub fn design_meta_controller(
    meta: &[MetaEntry],
    target: &Dataset,
    instrument_data: Option<&Dataset>,
    m: &TransferFunction,
    cfg: &MetaDesignConfig,
) -> Result<MetaDesign> {
    cfg.validate()?;
    let first = meta.first().ok_or(Error::EmptyInput)?;
    if meta.iter().any(|e| e.controller.basis_id != first.controller.basis_id) {
        return Err(Error::dim("meta-dataset controllers do not share a basis"));
    }
    if let Some(bad) = meta.iter().find(|e| e.dataset.sample_time != target.sample_time) {
        return Err(Error::SampleTimeMismatch(bad.dataset.sample_time, target.sample_time));
    }
    let basis = ControllerBasis::from_id(&first.controller.basis_id, target.sample_time)?;
    let y_desired = desired_response(meta, target, m, cfg.statistics)?;
    let statistics = compute_statistics(meta, target, &y_desired, cfg.statistics)?;
    let instruments = if cfg.iv {
        let second = instrument_data.ok_or_else(|| Error::config("instrumental variables need a second experiment"))?;
        Some(build_instruments(second, m, &basis, &cfg.filter, cfg.convention)?)
    } else {
        None
    };
    let qp = assemble_meta_qp(meta, target, instruments.as_ref(), &statistics, m, cfg)?;
    let mut weights = solve_simplex_qp(&qp.h, &qp.f, cfg.qp_tol, cfg.qp_max_iter)?;
    weights.objective_value += qp.constant;
    let controllers: Vec<ControllerParams> = meta.iter().map(|e| e.controller.clone()).collect();
    let controller = combine(&controllers, &weights.alpha_tilde)?;
    Ok(MetaDesign {
        controller,
        weights,
        statistics,
    })
}
