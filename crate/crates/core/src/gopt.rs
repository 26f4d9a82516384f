//! Budgeted derivative-free minimization over a box.
//!
//! A set-membership surrogate: from the samples so far a Lipschitz constant
//! `L` is estimated, giving upper and lower envelopes
//! `ub(x) = min_i f_i + L‖x − x_i‖`, `lb(x) = max_i f_i − L‖x − x_i‖`.
//! Exploitation minimizes the central estimate `(ub + lb)/2` over random
//! and trust-region candidates; exploration samples the candidate farthest
//! from every previous sample. All geometry lives in the unit cube, with
//! optional log scaling per dimension.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::error::{Error, Result};

/// Box constraints in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub log_scale: Vec<bool>,
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, log_scale: Vec<bool>) -> Result<Self> {
        let s = SearchSpace {
            lower,
            upper,
            log_scale,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || self.upper.len() != d || self.log_scale.len() != d {
            return Err(Error::dim("search space bounds must be non-empty and of equal length"));
        }
        for k in 0..d {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!("bad bounds [{lo}, {hi}] in dimension {k}")));
            }
            if self.log_scale[k] && lo <= 0.0 {
                return Err(Error::config(format!("log-scaled dimension {k} needs a positive lower bound")));
            }
        }
        Ok(())
    }

    /// `Kp ∈ [1e-2, 30]`, `Ki ∈ [1e-4, 1e-1]` with `Ki` in log scale.
    pub fn pi_default() -> Self {
        SearchSpace {
            lower: vec![1e-2, 1e-4],
            upper: vec![30.0, 1e-1],
            log_scale: vec![false, true],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, &v)| {
                let v = v.clamp(0.0, 1.0);
                let (lo, hi) = (self.lower[k], self.upper[k]);
                let x = if self.log_scale[k] {
                    (lo.ln() + v * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + v * (hi - lo)
                };
                x.clamp(lo, hi)
            })
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| {
                let (lo, hi) = (self.lower[k], self.upper[k]);
                let u = if self.log_scale[k] {
                    (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (v - lo) / (hi - lo)
                };
                u.clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.from_unit(&vec![0.5; self.dim()])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| v >= self.lower[k] && v <= self.upper[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptBudget {
    /// Evaluations after the initial center sample.
    pub n_itr: usize,
    pub seed: u64,
    /// Safety factor on the observed Lipschitz constant.
    pub gamma: f64,
    /// Random candidates scored per iteration.
    pub n_candidates: usize,
    /// Forced exploration period.
    pub explore_every: usize,
}

impl Default for OptBudget {
    fn default() -> Self {
        OptBudget {
            n_itr: 30,
            seed: 0,
            gamma: 1.5,
            n_candidates: 2000,
            explore_every: 6,
        }
    }
}

impl OptBudget {
    pub fn with(n_itr: usize, seed: u64) -> Self {
        OptBudget {
            n_itr,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Initial,
    Exploit,
    Explore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSample {
    pub point: Vec<f64>,
    /// `+∞` for infeasible candidates.
    pub value: f64,
    pub kind: SampleKind,
    /// The objective returned NaN or `−∞`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub samples: Vec<OptSample>,
    pub best_point: Vec<f64>,
    pub best_value: f64,
}

impl OptTrace {
    /// Running minimum after each sample.
    pub fn running_best(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.samples
            .iter()
            .map(|s| {
                best = best.min(s.value);
                best
            })
            .collect()
    }

    pub fn n_infeasible(&self) -> usize {
        self.samples.iter().filter(|s| s.value == f64::INFINITY).count()
    }

    /// CSV with header `iter,x0,..,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.best_point.len();
        let header: Vec<String> = std::iter::once("iter".to_string())
            .chain((0..d).map(|k| format!("x{k}")))
            .chain(std::iter::once("value".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, s) in self.samples.iter().enumerate() {
            let xs: Vec<String> = s.point.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{i},{},{:e}", xs.join(","), s.value)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

struct Surrogate<'a> {
    points: &'a [Vec<f64>],
    values: &'a [f64],
    lip: f64,
}

impl Surrogate<'_> {
    fn central(&self, x: &[f64]) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        for (p, &v) in self.points.iter().zip(self.values) {
            if v.is_finite() {
                let d = self.lip * dist(x, p);
                ub = ub.min(v + d);
                lb = lb.max(v - d);
            }
        }
        0.5 * (ub + lb)
    }
}

fn lipschitz_estimate(points: &[Vec<f64>], values: &[f64], gamma: f64) -> f64 {
    let mut slope: f64 = 0.0;
    for i in 0..points.len() {
        for j in 0..i {
            if values[i].is_finite() && values[j].is_finite() {
                let d = dist(&points[i], &points[j]);
                if d > 1e-15 {
                    slope = slope.max((values[i] - values[j]).abs() / d);
                }
            }
        }
    }
    (gamma * slope).max(1e-12)
}

/// Minimizes a black-box objective with exactly `1 + n_itr` evaluations.
///
/// `+∞` marks infeasible points; NaN and `−∞` are mapped to `+∞` and flagged.
/// Returns `AllInfeasible` when no sample is finite.
pub fn minimize<F>(mut objective: F, space: &SearchSpace, budget: &OptBudget) -> Result<OptTrace>
where
    F: FnMut(&[f64]) -> f64,
{
    space.validate()?;
    if budget.n_itr == 0 {
        return Err(Error::config("optimizer budget n_itr must be >= 1"));
    }
    let d = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(budget.n_itr + 1);
    let mut values: Vec<f64> = Vec::with_capacity(budget.n_itr + 1);
    let mut samples = Vec::with_capacity(budget.n_itr + 1);

    let mut evaluate = |u: Vec<f64>, kind: SampleKind, units: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let x = space.from_unit(&u);
        let raw = objective(&x);
        let flagged = raw.is_nan() || raw == f64::NEG_INFINITY;
        let value = if flagged { f64::INFINITY } else { raw };
        units.push(u);
        values.push(value);
        samples.push(OptSample {
            point: x,
            value,
            kind,
            flagged,
        });
    };

    evaluate(vec![0.5; d], SampleKind::Initial, &mut units, &mut values);
    let mut radius = 0.25;
    let mut last_best = values[0];

    for it in 1..=budget.n_itr {
        let best_idx = argmin(&values);
        let any_feasible = values[best_idx].is_finite();
        let lip = lipschitz_estimate(&units, &values, budget.gamma);

        let mut candidates: Vec<Vec<f64>> = (0..budget.n_candidates)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        if any_feasible {
            let anchor = units[best_idx].clone();
            for _ in 0..budget.n_candidates {
                candidates.push(
                    anchor
                        .iter()
                        .map(|&a| (a + radius * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0))
                        .collect(),
                );
            }
        }
        let min_sep = |c: &[f64]| units.iter().map(|p| dist(c, p)).fold(f64::INFINITY, f64::min);

        let forced_explore = budget.explore_every > 0 && it % budget.explore_every == 0;
        let mut choice = None;
        if any_feasible && !forced_explore {
            let sur = Surrogate {
                points: &units,
                values: &values,
                lip,
            };
            let mut best_c = f64::INFINITY;
            for c in &candidates {
                if min_sep(c) < 1e-9 {
                    continue;
                }
                let v = sur.central(c);
                if v < best_c {
                    best_c = v;
                    choice = Some(c.clone());
                }
            }
            // no predicted improvement: explore instead
            if best_c >= values[best_idx] {
                choice = None;
            }
        }
        let (u, kind) = match choice {
            Some(c) => (c, SampleKind::Exploit),
            None => {
                let far = candidates
                    .iter()
                    .max_by(|a, b| min_sep(a).total_cmp(&min_sep(b)))
                    .cloned()
                    .unwrap_or_else(|| vec![0.5; d]);
                (far, SampleKind::Explore)
            }
        };
        evaluate(u, kind, &mut units, &mut values);

        let new_best = values[argmin(&values)];
        if kind == SampleKind::Exploit {
            radius = if new_best < last_best { (radius * 1.5).min(0.5) } else { (radius * 0.5).max(1e-6) };
        }
        last_best = new_best;
    }

    let best_idx = argmin(&values);
    if !values[best_idx].is_finite() {
        return Err(Error::AllInfeasible);
    }
    Ok(OptTrace {
        best_point: samples[best_idx].point.clone(),
        best_value: values[best_idx],
        samples,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// `Σ_t (y(t) − y_d(t))²` over the common length.
pub fn tracking_score(y: &[f64], y_desired: &[f64]) -> f64 {
    y.iter().zip(y_desired).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Tunes `[Kp, Ki]` so the closed-loop response tracks `y_desired`.
///
/// `plant_runner` maps gains to a response, or `None` if the loop is
/// unstable (scored `+∞`).
pub fn tune_pi_gains<R>(
    mut plant_runner: R,
    y_desired: &[f64],
    space: &SearchSpace,
    budget: &OptBudget,
) -> Result<(ControllerParams, OptTrace)>
where
    R: FnMut(&ControllerParams) -> Option<Vec<f64>>,
{
    if space.dim() != 2 {
        return Err(Error::dim("PI tuning needs a two-dimensional search space"));
    }
    if y_desired.is_empty() {
        return Err(Error::EmptyInput);
    }
    let trace = minimize(
        |x| {
            let Ok(c) = ControllerParams::pi(x[0], x[1]) else {
                return f64::INFINITY;
            };
            match plant_runner(&c) {
                Some(y) if y.len() >= y_desired.len() => tracking_score(&y, y_desired),
                _ => f64::INFINITY,
            }
        },
        space,
        budget,
    )?;
    let c = ControllerParams::pi(trace.best_point[0], trace.best_point[1])?;
    Ok((c, trace))
}
