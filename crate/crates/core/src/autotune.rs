//! Reference-model auto-tuning on top of the meta design.
//!
//! The closed-loop target `M(q⁻¹; φ) = (1 − φ)q⁻¹ / (1 − φq⁻¹)` is chosen by
//! an outer derivative-free search over `φ`; for each candidate the meta QP
//! is re-solved and scored with `J^auto = J^perf + J^meta` on a calibration
//! record disjoint from the design record.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerBasis, ControllerParams};
use crate::error::{Error, Result};
use crate::gopt::{minimize, OptBudget, SearchSpace};
use crate::lti::TransferFunction;
use crate::meta::{design_meta_controller, MetaDesign, MetaDesignConfig, MetaEntry, MetaStatistics};
use crate::motor::Dataset;
use crate::qp::MetaWeights;
use crate::vrft::{virtual_error, VirtualErrorConvention};

/// Pole of the fixed reference model used to build the meta-dataset.
pub const FIXED_PHI: f64 = 0.9391;
/// Numerator of the fixed model as sometimes tabulated (DC gain 10).
pub const LITERAL_FIXED_NUMERATOR: f64 = 0.609;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub phi: f64,
    pub tf: TransferFunction,
}

impl ReferenceModel {
    pub fn new(phi: f64, ts: f64) -> Result<Self> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::config(format!("reference pole {phi} outside (0, 1)")));
        }
        Ok(ReferenceModel {
            phi,
            tf: TransferFunction::first_order(1.0 - phi, phi, ts)?,
        })
    }

    /// The fixed model; `literal` keeps the tabulated numerator instead of
    /// the unity-gain one.
    pub fn fixed(literal: bool, ts: f64) -> Result<Self> {
        let mut m = Self::new(FIXED_PHI, ts)?;
        if literal {
            m.tf = TransferFunction::first_order(LITERAL_FIXED_NUMERATOR, FIXED_PHI, ts)?;
        }
        Ok(m)
    }

    /// First time [s] after which the unit-step response stays within
    /// `tol` of its final value.
    pub fn settling_time(&self, tol: f64) -> f64 {
        let ts = self.tf.sample_time();
        let horizon = ((20.0 / (1.0 - self.phi)) as usize).max(100);
        let s = self.tf.step_response(horizon);
        let fin = self.tf.dc_gain();
        let last_out = s.iter().rposition(|v| (v - fin).abs() > tol * fin.abs());
        last_out.map_or(0.0, |k| (k + 1) as f64 * ts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModelSpace {
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for ReferenceModelSpace {
    fn default() -> Self {
        ReferenceModelSpace {
            phi_min: 0.9550,
            phi_max: 0.9991,
        }
    }
}

impl ReferenceModelSpace {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.phi_min && self.phi_min < self.phi_max && self.phi_max < 1.0) {
            return Err(Error::config("reference model space needs 0 < phi_min < phi_max < 1"));
        }
        Ok(())
    }

    pub fn contains(&self, phi: f64) -> bool {
        phi >= self.phi_min && phi <= self.phi_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    pub q_weight: f64,
    pub r_weight: f64,
    pub n_itr: usize,
    /// Seed of the outer search.
    pub seed: u64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig {
            q_weight: 1e8,
            r_weight: 1e3,
            n_itr: 30,
            seed: 0,
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_weight >= 0.0 && self.r_weight >= 0.0) {
            return Err(Error::config("calibration weights must be >= 0"));
        }
        if self.n_itr == 0 {
            return Err(Error::config("calibration n_itr must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutotuneStep {
    pub phi: f64,
    /// `None` when the candidate failed (scored as `+∞` by the search).
    pub j_auto: Option<f64>,
    pub j_perf: Option<f64>,
    pub j_meta: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub error: Option<String>,
}

impl AutotuneStep {
    /// Score seen by the outer search.
    pub fn score(&self) -> f64 {
        self.j_auto.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutotuneResult {
    pub phi_star: f64,
    pub weights: MetaWeights,
    pub controller: ControllerParams,
    pub statistics: MetaStatistics,
    pub j_auto: f64,
    pub j_perf: f64,
    pub j_meta: f64,
    pub trace: Vec<AutotuneStep>,
}

/// `Σ Q ẽ_v² + R Δu²` with `u = C ẽ_v` from rest on the calibration record.
pub fn eval_j_perf(
    phi: f64,
    controller: &ControllerParams,
    calib: &Dataset,
    cfg: &CalibConfig,
    convention: VirtualErrorConvention,
) -> Result<f64> {
    calib.validate()?;
    let m = ReferenceModel::new(phi, calib.sample_time)?;
    let e_v = virtual_error(&calib.y, &m.tf, convention)?;
    if e_v.is_empty() {
        return Err(Error::EmptyInput);
    }
    let c = ControllerBasis::from_id(&controller.basis_id, calib.sample_time)?.controller_tf(controller)?;
    let u = c.simulate(&e_v)?;
    let mut prev = 0.0;
    let mut total = 0.0;
    for (e, ut) in e_v.iter().zip(&u) {
        total += cfg.q_weight * e * e + cfg.r_weight * (ut - prev).powi(2);
        prev = *ut;
    }
    Ok(total)
}

/// `Σ_i S_i Σ_t (M(φ) r(t) − y_i^cl(t))²` over the stored responses.
pub fn eval_j_meta(
    phi: f64,
    meta: &[MetaEntry],
    stats: &MetaStatistics,
    reference: &[f64],
    ts: f64,
) -> Result<f64> {
    if stats.sim.len() != meta.len() {
        return Err(Error::dim("similarity weights do not match the meta-dataset"));
    }
    let m = ReferenceModel::new(phi, ts)?;
    let y_d = m.tf.simulate(reference)?;
    let mut total = 0.0;
    for (e, s) in meta.iter().zip(&stats.sim) {
        let t_cl = e.closed_loop_response.len();
        if reference.len() < t_cl {
            return Err(Error::dim(format!(
                "reference has {} samples, closed-loop responses {t_cl}",
                reference.len()
            )));
        }
        total += s * y_d[..t_cl]
            .iter()
            .zip(&e.closed_loop_response)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

/// Identical content is accepted only when the provenance seeds tell the two
/// experiments apart (noise-free repeats).
fn check_disjoint(calib: &Dataset, target: &Dataset) -> Result<()> {
    let distinct_seeds = match (&calib.provenance, &target.provenance) {
        (Some(a), Some(b)) => a.seed != b.seed,
        _ => false,
    };
    if calib.label == target.label || (calib.content_hash() == target.content_hash() && !distinct_seeds) {
        return Err(Error::config(
            "calibration data must come from an experiment distinct from the design data",
        ));
    }
    Ok(())
}

/// Bi-level search: outer derivative-free over `φ`, inner meta QP.
#[allow(clippy::too_many_arguments)]
pub fn autotune(
    meta: &[MetaEntry],
    target: &Dataset,
    instrument_data: Option<&Dataset>,
    calib: &Dataset,
    space: &ReferenceModelSpace,
    cfg: &CalibConfig,
    meta_cfg: &MetaDesignConfig,
    reference: &[f64],
) -> Result<AutotuneResult> {
    space.validate()?;
    cfg.validate()?;
    check_disjoint(calib, target)?;
    if meta.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ts = target.sample_time;
    let mut trace: Vec<AutotuneStep> = Vec::with_capacity(cfg.n_itr + 1);
    let mut best: Option<(f64, f64, MetaDesign, f64, f64)> = None;

    let evaluate = |phi: f64| -> Result<(MetaDesign, f64, f64)> {
        let m = ReferenceModel::new(phi, ts)?;
        let design = design_meta_controller(meta, target, instrument_data, &m.tf, meta_cfg)?;
        let j_perf = eval_j_perf(phi, &design.controller, calib, cfg, meta_cfg.convention)?;
        let j_meta = eval_j_meta(phi, meta, &design.statistics, reference, ts)?;
        Ok((design, j_perf, j_meta))
    };

    let search = SearchSpace::new(vec![space.phi_min], vec![space.phi_max], vec![false])?;
    let budget = OptBudget::with(cfg.n_itr, cfg.seed);
    let outcome = minimize(
        |x| {
            let phi = x[0];
            match evaluate(phi) {
                Ok((design, j_perf, j_meta)) if (j_perf + j_meta).is_finite() => {
                    let j_auto = j_perf + j_meta;
                    trace.push(AutotuneStep {
                        phi,
                        j_auto: Some(j_auto),
                        j_perf: Some(j_perf),
                        j_meta: Some(j_meta),
                        weights: Some(design.weights.alpha_tilde.clone()),
                        error: None,
                    });
                    if best.as_ref().is_none_or(|b| j_auto < b.1) {
                        best = Some((phi, j_auto, design, j_perf, j_meta));
                    }
                    j_auto
                }
                other => {
                    let error = match other {
                        Err(e) => e.to_string(),
                        Ok(_) => "non-finite objective".to_string(),
                    };
                    trace.push(AutotuneStep {
                        phi,
                        j_auto: None,
                        j_perf: None,
                        j_meta: None,
                        weights: None,
                        error: Some(error),
                    });
                    f64::INFINITY
                }
            }
        },
        &search,
        &budget,
    );
    match outcome {
        Ok(_) => {}
        Err(Error::AllInfeasible) => {
            let why = trace.iter().find_map(|s| s.error.clone()).unwrap_or_default();
            return Err(Error::config(format!("every reference-model candidate failed: {why}")));
        }
        Err(e) => return Err(e),
    }
    let (phi_star, j_auto, design, j_perf, j_meta) = best.ok_or(Error::AllInfeasible)?;
    Ok(AutotuneResult {
        phi_star,
        weights: design.weights,
        controller: design.controller,
        statistics: design.statistics,
        j_auto,
        j_perf,
        j_meta,
        trace,
    })
}
