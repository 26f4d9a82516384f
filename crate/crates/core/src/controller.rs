//! Linearly parameterized controllers `C(q⁻¹; α) = αᵀ β(q⁻¹)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{poly_add, poly_mul, TransferFunction};

pub const PI_BASIS_ID: &str = "pi";

/// Coefficients over a named controller basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub alpha: Vec<f64>,
    pub basis_id: String,
}

impl ControllerParams {
    pub fn new(alpha: Vec<f64>, basis_id: impl Into<String>) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("controller coefficients must be finite"));
        }
        Ok(ControllerParams {
            alpha,
            basis_id: basis_id.into(),
        })
    }

    /// PI controller with proportional gain `kp` and integral gain `ki`.
    pub fn pi(kp: f64, ki: f64) -> Result<Self> {
        Self::new(vec![kp, ki], PI_BASIS_ID)
    }
}

/// The vector `β(q⁻¹)` of basis transfer functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerBasis {
    pub id: String,
    pub components: Vec<TransferFunction>,
}

impl ControllerBasis {
    pub fn new(id: impl Into<String>, components: Vec<TransferFunction>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::config("controller basis must be non-empty"))?;
        let ts = first.sample_time();
        if let Some(bad) = components.iter().find(|c| c.sample_time() != ts) {
            return Err(Error::SampleTimeMismatch(ts, bad.sample_time()));
        }
        Ok(ControllerBasis {
            id: id.into(),
            components,
        })
    }

    /// `[1; (Ts/2)(1 + q⁻¹)/(1 - q⁻¹)]`: proportional term plus a Tustin
    /// integrator.
    pub fn pi(ts: f64) -> Result<Self> {
        Self::new(
            PI_BASIS_ID,
            vec![
                TransferFunction::gain(1.0, ts)?,
                TransferFunction::new(vec![ts / 2.0, ts / 2.0], vec![1.0, -1.0], ts)?,
            ],
        )
    }

    /// Resolves a known basis identifier at the given sample time.
    pub fn from_id(id: &str, ts: f64) -> Result<Self> {
        match id {
            PI_BASIS_ID => Self::pi(ts),
            other => Err(Error::config(format!("unknown controller basis '{other}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn sample_time(&self) -> f64 {
        self.components[0].sample_time()
    }

    /// Assembles `αᵀβ` over the common denominator of the basis.
    pub fn controller_tf(&self, params: &ControllerParams) -> Result<TransferFunction> {
        if params.basis_id != self.id {
            return Err(Error::dim(format!(
                "controller basis '{}' does not match '{}'",
                params.basis_id, self.id
            )));
        }
        if params.alpha.len() != self.dim() {
            return Err(Error::dim(format!(
                "expected {} controller coefficients, got {}",
                self.dim(),
                params.alpha.len()
            )));
        }
        // common denominator: product of distinct component denominators
        let mut dens: Vec<&[f64]> = Vec::new();
        for c in &self.components {
            if !dens.contains(&c.den()) {
                dens.push(c.den());
            }
        }
        let common = dens.iter().fold(vec![1.0], |acc, d| poly_mul(&acc, d));
        let mut num = vec![0.0];
        for (c, &a) in self.components.iter().zip(&params.alpha) {
            let mut cofactor = vec![1.0];
            for d in &dens {
                if *d != c.den() {
                    cofactor = poly_mul(&cofactor, d);
                }
            }
            let term: Vec<f64> = poly_mul(c.num(), &cofactor).iter().map(|x| x * a).collect();
            num = poly_add(&num, &term);
        }
        TransferFunction::new(num, common, self.sample_time())
    }

    /// Regressor columns `β_k(q⁻¹) x(t)`, zero initial state.
    pub fn regressors(&self, signal: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.components.iter().map(|c| c.simulate(signal)).collect()
    }
}

/// Convex (or any linear) combination of controllers sharing one basis:
/// coefficients `Σ w_i α_i`.
pub fn combine(controllers: &[ControllerParams], weights: &[f64]) -> Result<ControllerParams> {
    let first = controllers
        .first()
        .ok_or_else(|| Error::dim("cannot combine an empty controller set"))?;
    if controllers.len() != weights.len() {
        return Err(Error::dim(format!(
            "{} controllers but {} weights",
            controllers.len(),
            weights.len()
        )));
    }
    let n = first.alpha.len();
    let mut alpha = vec![0.0; n];
    for (c, &w) in controllers.iter().zip(weights) {
        if c.basis_id != first.basis_id || c.alpha.len() != n {
            return Err(Error::dim("controllers do not share a basis"));
        }
        for (acc, a) in alpha.iter_mut().zip(&c.alpha) {
            *acc += w * a;
        }
    }
    ControllerParams::new(alpha, first.basis_id.clone())
}
