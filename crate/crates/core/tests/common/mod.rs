#![allow(dead_code)]

use metaddc::controller::ControllerParams;
use metaddc::lti::TransferFunction;
use metaddc::motor::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const TS: f64 = 1e-3;

/// `b q⁻¹ / (1 − a q⁻¹)`.
pub fn plant(a: f64, b: f64) -> TransferFunction {
    TransferFunction::first_order(b, a, TS).unwrap()
}

/// `(1 − φ) q⁻¹ / (1 − φ q⁻¹)`.
pub fn model(phi: f64) -> TransferFunction {
    TransferFunction::first_order(1.0 - phi, phi, TS).unwrap()
}

/// PI gains that make `b q⁻¹/(1 − a q⁻¹)` in closed loop equal `model(φ)`.
pub fn ideal_pi(a: f64, b: f64, phi: f64) -> (f64, f64) {
    let kp = (1.0 - phi) * (1.0 + a) / (2.0 * b);
    let ki = (1.0 - phi) * (1.0 - a) / (b * TS);
    (kp, ki)
}

pub fn ideal_controller(a: f64, b: f64, phi: f64) -> ControllerParams {
    let (kp, ki) = ideal_pi(a, b, phi);
    ControllerParams::pi(kp, ki).unwrap()
}

pub fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Piecewise-constant random input, switching every `hold` samples.
pub fn random_steps(n: usize, hold: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = 0.0;
    (0..n)
        .map(|t| {
            if t % hold == 0 {
                v = rng.random_range(-1.0..1.0);
            }
            v
        })
        .collect()
}

/// Open-loop record `y = G u + v`.
pub fn open_loop_data(g: &TransferFunction, u: &[f64], noise: Option<&[f64]>, label: &str) -> Dataset {
    let mut y = g.simulate(u).unwrap();
    if let Some(v) = noise {
        for (yt, vt) in y.iter_mut().zip(v) {
            *yt += vt;
        }
    }
    Dataset::new(u.to_vec(), y, None, g.sample_time(), label).unwrap()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Meta-dataset whose closed-loop responses were all produced by `model(φ₀)`:
/// each stored controller is the ideal PI of its plant for `φ₀`.
pub struct KnownOptimum {
    pub meta: Vec<metaddc::meta::MetaEntry>,
    pub target: Dataset,
    pub instrument: Dataset,
    pub calib: Dataset,
    pub reference: Vec<f64>,
}

pub fn known_optimum_family(phi0: f64) -> KnownOptimum {
    use metaddc::controller::ControllerBasis;
    use metaddc::lti::feedback;
    let plants = [(0.95, 0.10), (0.96, 0.08), (0.97, 0.05), (0.98, 0.04), (0.94, 0.15)];
    let u = random_steps(2000, 40, 11);
    let reference = vec![1500.0; 1000];
    let basis = ControllerBasis::pi(TS).unwrap();
    let meta = plants
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let controller = ideal_controller(a, b, phi0);
            let cl = feedback(&plant(a, b), &basis.controller_tf(&controller).unwrap()).unwrap();
            metaddc::meta::MetaEntry {
                dataset: open_loop_data(&plant(a, b), &u, None, &format!("m{i}")),
                controller,
                closed_loop_response: cl.simulate(&reference).unwrap(),
                closed_loop_reference: reference.clone(),
                system_label: format!("m{i}"),
            }
        })
        .collect();
    let g = plant(0.965, 0.07);
    KnownOptimum {
        meta,
        target: open_loop_data(&g, &u, None, "target"),
        instrument: open_loop_data(&g, &random_steps(2000, 40, 12), None, "instrument"),
        calib: open_loop_data(&g, &random_steps(2000, 40, 13), None, "calib"),
        reference,
    }
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let k = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= k * p;
            }
            b[row] -= k * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Minimum of `xᵀHx + fᵀx` on the simplex by enumerating every support.
pub fn active_set_min(h: &[Vec<f64>], f: &[f64]) -> f64 {
    let m = f.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << m) {
        let s: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = s.len();
        // [2H_SS 1; 1ᵀ 0] [x; ν] = [−f_S; 1]
        let mut a = vec![vec![0.0; k + 1]; k + 1];
        let mut b = vec![0.0; k + 1];
        for (p, &i) in s.iter().enumerate() {
            for (q, &j) in s.iter().enumerate() {
                a[p][q] = 2.0 * h[i][j];
            }
            a[p][k] = 1.0;
            a[k][p] = 1.0;
            b[p] = -f[i];
        }
        b[k] = 1.0;
        let Some(sol) = solve_dense(a, b) else { continue };
        if sol[..k].iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut x = vec![0.0; m];
        for (p, &i) in s.iter().enumerate() {
            x[i] = sol[p].max(0.0);
        }
        best = best.min(metaddc::qp::objective(h, f, &x));
    }
    best
}

pub fn random_pd(m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let rows = m + 2;
    let a: Vec<Vec<f64>> = (0..rows).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..m)
        .map(|i| (0..m).map(|j| (0..rows).map(|r| a[r][i] * a[r][j]).sum()).collect())
        .collect()
}
