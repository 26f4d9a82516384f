//! Virtual reference feedback tuning for one plant.
//!
//! From a single record `{u, ỹ}` the virtual error `e_v` is formed, filtered
//! by `F`, and the controller coefficients are fitted so that
//! `C(q⁻¹; α) e_vᴸ(t) ≈ uᴸ(t)`, by least squares or with instrumental
//! variables taken from a second, independent record.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerBasis, ControllerParams};
use crate::error::{Error, Result};
use crate::lti::{z_roots, SimState, TransferFunction, STABILITY_TOL};
use crate::motor::Dataset;

/// Relative singular-value floor for a usable regressor matrix.
pub const RANK_TOL: f64 = 1e-10;

/// How the virtual error is formed from the measured output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualErrorConvention {
    /// `e_v = (M⁻¹ − 1) ỹ`, inverting `M` after removing its input delay.
    #[default]
    Inverse,
    /// `e_v = (M − 1) ỹ`.
    Literal,
}

/// Weighting filter `F(q⁻¹)` applied to both `u` and `e_v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterSpec {
    /// `F = M (1 − M)` for the reference model in use.
    #[default]
    DefaultMOneMinusM,
    Identity,
    Custom(TransferFunction),
}

impl FilterSpec {
    pub fn resolve(&self, m: &TransferFunction) -> Result<TransferFunction> {
        match self {
            FilterSpec::DefaultMOneMinusM => {
                let one = TransferFunction::gain(1.0, m.sample_time())?;
                m.mul(&one.sub(m)?)
            }
            FilterSpec::Identity => TransferFunction::gain(1.0, m.sample_time()),
            FilterSpec::Custom(f) => {
                if !f.is_stable() {
                    return Err(Error::InvalidTransferFunction(
                        "custom VRFT filter must be stable".into(),
                    ));
                }
                if f.sample_time() != m.sample_time() {
                    return Err(Error::SampleTimeMismatch(f.sample_time(), m.sample_time()));
                }
                Ok(f.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSignals {
    pub e_v: Vec<f64>,
    pub u_l: Vec<f64>,
    pub e_v_l: Vec<f64>,
    pub convention: VirtualErrorConvention,
}

impl VirtualSignals {
    pub fn len(&self) -> usize {
        self.e_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_v.is_empty()
    }
}

/// `(M⁻¹ − 1) y` realized causally: with `M = q⁻ᵈ N'(q⁻¹)/D(q⁻¹)` the
/// virtual reference is `r_v(t) = D/N' · y(t + d)`, so the result is `d`
/// samples shorter than `y`.
pub fn inverse_virtual_error(y: &[f64], m: &TransferFunction) -> Result<Vec<f64>> {
    if m.is_zero() {
        return Err(Error::ZeroNumerator);
    }
    if !m.is_stable() {
        return Err(Error::InvalidTransferFunction(
            "reference model must be stable".into(),
        ));
    }
    let d = m.input_delay();
    let num_tail = &m.num()[d..];
    if z_roots(num_tail)
        .iter()
        .any(|&(re, im)| re.hypot(im) >= 1.0 - STABILITY_TOL)
    {
        return Err(Error::NonMinimumPhase);
    }
    if y.len() <= d {
        return Err(Error::EmptyInput);
    }
    let inverse = TransferFunction::new(m.den().to_vec(), num_tail.to_vec(), m.sample_time())?;
    // samples before y[d] are known and seed the input history
    let n_in = inverse.num().len() - 1;
    let past: Vec<f64> = (0..n_in).map(|k| if k < d { y[d - 1 - k] } else { 0.0 }).collect();
    let n_out = inverse.den().len() - 1;
    let mut sim = SimState::with_history(inverse, &past, &vec![0.0; n_out])?;
    let r_v: Vec<f64> = y[d..].iter().map(|&w| sim.step(w)).collect();
    Ok(r_v.iter().zip(y).map(|(rv, yt)| rv - yt).collect())
}

/// `(M − 1) y`, same length as `y`.
pub fn literal_virtual_error(y: &[f64], m: &TransferFunction) -> Result<Vec<f64>> {
    let one = TransferFunction::gain(1.0, m.sample_time())?;
    m.sub(&one)?.simulate(y)
}

pub fn virtual_error(y: &[f64], m: &TransferFunction, convention: VirtualErrorConvention) -> Result<Vec<f64>> {
    match convention {
        VirtualErrorConvention::Inverse => inverse_virtual_error(y, m),
        VirtualErrorConvention::Literal => literal_virtual_error(y, m),
    }
}

pub fn build_virtual_signals(
    data: &Dataset,
    m: &TransferFunction,
    filter: &FilterSpec,
    convention: VirtualErrorConvention,
) -> Result<VirtualSignals> {
    data.validate()?;
    if m.sample_time() != data.sample_time {
        return Err(Error::SampleTimeMismatch(m.sample_time(), data.sample_time));
    }
    let e_v = virtual_error(&data.y, m, convention)?;
    let f = filter.resolve(m)?;
    let u_l = f.simulate(&data.u[..e_v.len()])?;
    let e_v_l = f.simulate(&e_v)?;
    Ok(VirtualSignals {
        e_v,
        u_l,
        e_v_l,
        convention,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentSource {
    SecondExperiment,
    None,
}

/// Instrument vectors `ζ(t)` stored column-wise: `zeta[k][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSet {
    pub zeta: Vec<Vec<f64>>,
    pub source: InstrumentSource,
}

impl InstrumentSet {
    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn len(&self) -> usize {
        self.zeta.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, t: usize) -> Vec<f64> {
        self.zeta.iter().map(|col| col[t]).collect()
    }
}

/// The regressor of a second experiment under the same protocol: its noise
/// is independent of the design record's.
pub fn build_instruments(
    second: &Dataset,
    m: &TransferFunction,
    basis: &ControllerBasis,
    filter: &FilterSpec,
    convention: VirtualErrorConvention,
) -> Result<InstrumentSet> {
    let vs = build_virtual_signals(second, m, filter, convention)?;
    let zeta = basis.regressors(&vs.e_v_l)?;
    if zeta.iter().flatten().any(|z| !z.is_finite()) {
        return Err(Error::InvalidConfig("instrument contains non-finite values".into()));
    }
    Ok(InstrumentSet {
        zeta,
        source: InstrumentSource::SecondExperiment,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvCriterion {
    /// Solve `Σ ζ ψᵀ α = Σ ζ uᴸ`.
    #[default]
    Aggregate,
    /// Per-sample weighted least squares with weights `‖ζ(t)‖²`.
    LiteralIv,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrftOptions {
    pub convention: VirtualErrorConvention,
    pub iv: IvCriterion,
}

/// Regressor columns `ψ_k = β_k e_vᴸ` and the filtered target `uᴸ`.
pub struct Regression {
    pub psi: Vec<Vec<f64>>,
    pub u_l: Vec<f64>,
}

pub fn regression(
    data: &Dataset,
    m: &TransferFunction,
    basis: &ControllerBasis,
    filter: &FilterSpec,
    convention: VirtualErrorConvention,
) -> Result<Regression> {
    let vs = build_virtual_signals(data, m, filter, convention)?;
    let psi = basis.regressors(&vs.e_v_l)?;
    Ok(Regression { psi, u_l: vs.u_l })
}

pub(crate) fn columns_to_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Singular values of the column matrix, descending.
pub fn singular_values(cols: &[Vec<f64>]) -> Vec<f64> {
    let mut sv: Vec<f64> = columns_to_matrix(cols)
        .singular_values()
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn check_rank(cols: &[Vec<f64>]) -> Result<()> {
    let sv = singular_values(cols);
    let max = sv.first().copied().unwrap_or(0.0);
    let min = sv.last().copied().unwrap_or(0.0);
    if !(max > 0.0) || !(min > RANK_TOL * max) {
        return Err(Error::IllConditioned(sv));
    }
    Ok(())
}

fn least_squares(cols: &[Vec<f64>], target: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut a = columns_to_matrix(cols);
    let mut b = DVector::from_column_slice(target);
    if let Some(w) = weights {
        for (i, wi) in w.iter().enumerate() {
            let s = wi.max(0.0).sqrt();
            a.row_mut(i).scale_mut(s);
            b[i] *= s;
        }
    }
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let sol = svd
        .solve(&b, RANK_TOL * max)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// Instrumental-variable estimate from the aggregate normal equations.
pub(crate) fn iv_solve(psi: &[Vec<f64>], zeta: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>> {
    let n = psi.len();
    let a = DMatrix::from_fn(n, n, |i, j| dot(&zeta[i], &psi[j]));
    let rhs = DVector::from_fn(n, |i, _| dot(&zeta[i], target));
    let sv = a.singular_values();
    let max = sv.max();
    if !(max > 0.0) || !(sv.min() > RANK_TOL * max) {
        let mut v: Vec<f64> = sv.iter().copied().collect();
        v.sort_by(|x, y| y.total_cmp(x));
        return Err(Error::IllConditioned(v));
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned(sv.iter().copied().collect()))?;
    Ok(sol.iter().copied().collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vrft_design(
    data: &Dataset,
    m: &TransferFunction,
    basis: &ControllerBasis,
    filter: &FilterSpec,
    instruments: Option<&InstrumentSet>,
    opts: VrftOptions,
) -> Result<ControllerParams> {
    let reg = regression(data, m, basis, filter, opts.convention)?;
    check_rank(&reg.psi)?;
    let alpha = match instruments {
        None => least_squares(&reg.psi, &reg.u_l, None)?,
        Some(z) => {
            if z.dim() != basis.dim() {
                return Err(Error::dim(format!(
                    "instrument dimension {} does not match basis dimension {}",
                    z.dim(),
                    basis.dim()
                )));
            }
            if z.len() != reg.u_l.len() {
                return Err(Error::dim(format!(
                    "instrument length {} does not match design length {}",
                    z.len(),
                    reg.u_l.len()
                )));
            }
            match opts.iv {
                IvCriterion::Aggregate => iv_solve(&reg.psi, &z.zeta, &reg.u_l)?,
                IvCriterion::LiteralIv => {
                    let w: Vec<f64> = (0..z.len())
                        .map(|t| z.zeta.iter().map(|c| c[t] * c[t]).sum())
                        .collect();
                    least_squares(&reg.psi, &reg.u_l, Some(&w))?
                }
            }
        }
    };
    ControllerParams::new(alpha, basis.id.clone())
}
