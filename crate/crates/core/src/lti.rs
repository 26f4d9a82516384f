//! Discrete-time SISO transfer functions in the backward-shift operator `q⁻¹`.
//!
//! A [`TransferFunction`] stores numerator and denominator coefficients in
//! ascending powers of `q⁻¹`, so `num = [b0, b1]`, `den = [1, a1]` is
//!
//! ```text
//!        b0 + b1 q⁻¹
//! G  =  -------------      y(t) = b0 u(t) + b1 u(t-1) - a1 y(t-1)
//!         1 + a1 q⁻¹
//! ```
//!
//! The denominator is always stored monic (`den[0] == 1`). Algebra never
//! cancels common factors numerically; only exactly identical denominators
//! are shared when adding.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Poles with modulus at or above `1 - STABILITY_TOL` count as unstable.
pub const STABILITY_TOL: f64 = 1e-9;
pub const DEFAULT_NORM_HORIZON: usize = 100_000;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfRepr", into = "TfRepr")]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    ts: f64,
}

/// Wire form: `{"num": [...], "den": [...], "ts": seconds}`.
#[derive(Serialize, Deserialize)]
struct TfRepr {
    num: Vec<f64>,
    den: Vec<f64>,
    ts: f64,
}

impl TryFrom<TfRepr> for TransferFunction {
    type Error = Error;

    fn try_from(r: TfRepr) -> Result<Self> {
        TransferFunction::new(r.num, r.den, r.ts)
    }
}

impl From<TransferFunction> for TfRepr {
    fn from(tf: TransferFunction) -> Self {
        TfRepr {
            num: tf.num,
            den: tf.den,
            ts: tf.ts,
        }
    }
}

fn trim_trailing_zeros(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    p
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

pub(crate) fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(0.0) + b.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Roots in the z-plane of `p[0] + p[1] q⁻¹ + ... + p[n] q⁻ⁿ`, i.e. of
/// `p[0] zⁿ + p[1] zⁿ⁻¹ + ... + p[n]`. Roots at infinity (from `p[0] == 0`)
/// are dropped together with leading zeros.
pub(crate) fn z_roots(p: &[f64]) -> Vec<(f64, f64)> {
    let p = trim_trailing_zeros(p.to_vec());
    let lead = match p.iter().position(|&c| c != 0.0) {
        Some(k) => k,
        None => return Vec::new(),
    };
    let p = &p[lead..];
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![(-p[1] / p[0], 0.0)];
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        companion[(0, k)] = -p[k + 1] / p[0];
    }
    for k in 1..n {
        companion[(k, k - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

impl TransferFunction {
    /// Builds a transfer function, dividing through by `den[0]`.
    pub fn new(num: Vec<f64>, den: Vec<f64>, ts: f64) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidTransferFunction(
                "numerator and denominator must be non-empty".into(),
            ));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidTransferFunction(
                "coefficients must be finite".into(),
            ));
        }
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::InvalidTransferFunction(format!(
                "sample time must be positive, got {ts}"
            )));
        }
        let d0 = den[0];
        if d0 == 0.0 {
            return Err(Error::InvalidTransferFunction(
                "den[0] == 0, cannot normalize to monic form".into(),
            ));
        }
        let num = trim_trailing_zeros(num.into_iter().map(|c| c / d0).collect());
        let den = trim_trailing_zeros(den.into_iter().map(|c| c / d0).collect());
        Ok(TransferFunction { num, den, ts })
    }

    pub fn gain(k: f64, ts: f64) -> Result<Self> {
        Self::new(vec![k], vec![1.0], ts)
    }

    /// Pure delay `q⁻ⁿ`.
    pub fn delay(n: usize, ts: f64) -> Result<Self> {
        let mut num = vec![0.0; n + 1];
        num[n] = 1.0;
        Self::new(num, vec![1.0], ts)
    }

    /// `b q⁻¹ / (1 - a q⁻¹)`.
    pub fn first_order(b: f64, a: f64, ts: f64) -> Result<Self> {
        Self::new(vec![0.0, b], vec![1.0, -a], ts)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn sample_time(&self) -> f64 {
        self.ts
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&c| c == 0.0)
    }

    /// Number of leading zero numerator coefficients (pure input delay).
    pub fn input_delay(&self) -> usize {
        self.num.iter().take_while(|&&c| c == 0.0).count()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num[0] == 0.0
    }

    /// `num(1) / den(1)`, the static gain. Infinite for an integrator.
    pub fn dc_gain(&self) -> f64 {
        self.num.iter().sum::<f64>() / self.den.iter().sum::<f64>()
    }

    fn check_ts(&self, other: &Self) -> Result<()> {
        if self.ts != other.ts {
            return Err(Error::SampleTimeMismatch(self.ts, other.ts));
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Result<Self> {
        Self::new(
            self.num.iter().map(|c| c * k).collect(),
            self.den.clone(),
            self.ts,
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_ts(other)?;
        if self.den == other.den {
            return Self::new(poly_add(&self.num, &other.num), self.den.clone(), self.ts);
        }
        let num = poly_add(
            &poly_mul(&self.num, &other.den),
            &poly_mul(&other.num, &self.den),
        );
        Self::new(num, poly_mul(&self.den, &other.den), self.ts)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0)?)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_ts(other)?;
        Self::new(
            poly_mul(&self.num, &other.num),
            poly_mul(&self.den, &other.den),
            self.ts,
        )
    }

    /// Complementary sensitivity `C G / (1 + C G)` of the unity-feedback loop
    /// with plant `self` and controller `controller`.
    pub fn feedback(&self, controller: &Self) -> Result<Self> {
        feedback(self, controller)
    }

    /// Poles as `(re, im)` pairs in the z-plane.
    pub fn poles(&self) -> Vec<(f64, f64)> {
        z_roots(&self.den)
    }

    /// Zeros as `(re, im)` pairs in the z-plane, excluding the origin zeros
    /// that come from pure delays.
    pub fn zeros(&self) -> Vec<(f64, f64)> {
        z_roots(&self.num)
    }

    /// True iff every pole lies strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.poles()
            .iter()
            .all(|&(re, im)| re.hypot(im) < 1.0 - STABILITY_TOL)
    }

    pub fn simulate(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut state = SimState::new(self.clone());
        Ok(input.iter().map(|&u| state.step(u)).collect())
    }

    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut state = SimState::new(self.clone());
        (0..n)
            .map(|t| state.step(if t == 0 { 1.0 } else { 0.0 }))
            .collect()
    }

    pub fn step_response(&self, n: usize) -> Vec<f64> {
        let mut state = SimState::new(self.clone());
        (0..n).map(|_| state.step(1.0)).collect()
    }

    /// H2 norm by impulse-response summation: at least `horizon` samples,
    /// then extended until the squared samples of the last window fall below
    /// `tail_tol`.
    pub fn l2_norm(&self, horizon: usize, tail_tol: f64) -> Result<f64> {
        if horizon == 0 {
            return Err(Error::config("norm horizon must be at least 1"));
        }
        if !self.is_stable() {
            return Err(Error::NormDiverges);
        }
        if self.is_zero() {
            return Ok(0.0);
        }
        let window = 2 * (self.den.len().max(self.num.len())) + 1;
        let mut recent: VecDeque<f64> = VecDeque::with_capacity(window);
        let mut tail = 0.0;
        let mut sum = 0.0;
        let mut state = SimState::new(self.clone());
        let mut t = 0usize;
        loop {
            let h = state.step(if t == 0 { 1.0 } else { 0.0 });
            let inc = h * h;
            sum += inc;
            tail += inc;
            recent.push_back(inc);
            if recent.len() > window {
                tail -= recent.pop_front().unwrap_or(0.0);
            }
            t += 1;
            if t >= horizon && t >= window && tail.max(0.0) < tail_tol {
                break;
            }
        }
        Ok(sum.sqrt())
    }

    pub fn l2_norm_default(&self) -> Result<f64> {
        self.l2_norm(DEFAULT_NORM_HORIZON, DEFAULT_TAIL_TOL)
    }
}

/// `C G / (1 + C G)` in monic form, without pole-zero cancellation.
pub fn feedback(plant: &TransferFunction, controller: &TransferFunction) -> Result<TransferFunction> {
    plant.check_ts(controller)?;
    let open_num = poly_mul(&plant.num, &controller.num);
    let open_den = poly_mul(&plant.den, &controller.den);
    let den = poly_add(&open_den, &open_num);
    if den[0] == 0.0 {
        return Err(Error::InvalidTransferFunction(
            "algebraic loop: 1 + C(0)G(0) == 0".into(),
        ));
    }
    TransferFunction::new(open_num, den, plant.ts)
}

/// Stateful difference-equation realization of a [`TransferFunction`].
///
/// Histories are zero unless seeded with [`SimState::with_history`].
#[derive(Debug, Clone)]
pub struct SimState {
    tf: TransferFunction,
    // most recent sample first
    inputs: VecDeque<f64>,
    outputs: VecDeque<f64>,
}

impl SimState {
    pub fn new(tf: TransferFunction) -> Self {
        let inputs = VecDeque::from(vec![0.0; tf.num.len() - 1]);
        let outputs = VecDeque::from(vec![0.0; tf.den.len() - 1]);
        SimState { tf, inputs, outputs }
    }

    /// Seeds the histories; `past_inputs[0]` is `u(t-1)`, `past_outputs[0]`
    /// is `y(t-1)`.
    pub fn with_history(tf: TransferFunction, past_inputs: &[f64], past_outputs: &[f64]) -> Result<Self> {
        let mut s = Self::new(tf);
        if past_inputs.len() != s.inputs.len() || past_outputs.len() != s.outputs.len() {
            return Err(Error::dim(format!(
                "history lengths must be ({}, {}), got ({}, {})",
                s.inputs.len(),
                s.outputs.len(),
                past_inputs.len(),
                past_outputs.len()
            )));
        }
        s.inputs = past_inputs.iter().copied().collect();
        s.outputs = past_outputs.iter().copied().collect();
        Ok(s)
    }

    pub fn transfer_function(&self) -> &TransferFunction {
        &self.tf
    }

    /// Direct feedthrough coefficient `num[0]`.
    pub fn feedthrough(&self) -> f64 {
        self.tf.num[0]
    }

    /// Output contribution of the stored histories, i.e. `y(t)` minus the
    /// `num[0] u(t)` term.
    pub fn free_response(&self) -> f64 {
        let from_inputs: f64 = self.tf.num[1..]
            .iter()
            .zip(&self.inputs)
            .map(|(b, u)| b * u)
            .sum();
        let from_outputs: f64 = self.tf.den[1..]
            .iter()
            .zip(&self.outputs)
            .map(|(a, y)| a * y)
            .sum();
        from_inputs - from_outputs
    }

    /// Advances one sample and returns `y(t)`.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.tf.num[0] * u + self.free_response();
        self.push(u, y);
        y
    }

    fn push(&mut self, u: f64, y: f64) {
        if !self.inputs.is_empty() {
            self.inputs.pop_back();
            self.inputs.push_front(u);
        }
        if !self.outputs.is_empty() {
            self.outputs.pop_back();
            self.outputs.push_front(y);
        }
    }

    /// Commits a sample whose output was computed externally (closed-loop
    /// simulation resolves the algebraic part itself).
    pub(crate) fn commit(&mut self, u: f64, y: f64) {
        self.push(u, y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub delta_g: f64,
    pub epsilon: f64,
    pub is_similar: bool,
}

/// ε-similarity of two stable plants through the H2 norm of their difference.
pub fn check_similarity(g1: &TransferFunction, g2: &TransferFunction, epsilon: f64) -> Result<SimilarityReport> {
    if !g1.is_stable() || !g2.is_stable() {
        return Err(Error::NormDiverges);
    }
    let delta_g = g1.sub(g2)?.l2_norm_default()?;
    Ok(SimilarityReport {
        delta_g,
        epsilon,
        is_similar: delta_g <= epsilon,
    })
}
