//! Simulated BLDC motor + inertial load family and closed-loop experiments.
//!
//! Only the speed loop is modeled: the quadrature current is assumed to track
//! its set-point instantly, so the plant from `i_q` [A] to speed [rpm] is the
//! zero-order-hold discretization of `J ω̇ = K_t i_q − B ω`.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerBasis, ControllerParams};
use crate::error::{Error, Result};
use crate::lti::{feedback, SimState, TransferFunction};

pub const SAMPLE_TIME: f64 = 1e-3;
pub const RAD_S_TO_RPM: f64 = 60.0 / (2.0 * PI);

/// Load inertias [kg·m²] of the ten disc configurations.
pub const LOAD_INERTIAS: [f64; 10] = [
    0.0465e-3, 0.1149e-3, 0.2248e-3, 0.2565e-3, 0.3397e-3, 0.4928e-3, 0.5442e-3, 0.5820e-3,
    0.6969e-3, 0.7497e-3,
];

/// Conservative PI used for every data-collection campaign.
pub const CONSERVATIVE_KP: f64 = 6.836e-1;
pub const CONSERVATIVE_KI: f64 = 1.892e-3;

pub const DEFAULT_NOISE_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotorVariant {
    /// 4 pole pairs, 7 A rated current.
    Shinano,
    /// 7 pole pairs, 5.46 A rated current.
    Maxon,
}

impl MotorVariant {
    /// Effective torque constant per unit of commanded current. The Maxon
    /// variant is scaled by the rated-current ratio 7 / 5.46.
    pub fn torque_constant(self) -> f64 {
        match self {
            MotorVariant::Shinano => 2.0e-4,
            MotorVariant::Maxon => 2.0e-4 * 7.0 / 5.46,
        }
    }

    /// Shared by both variants so that time constants order like inertias.
    pub fn viscous_friction(self) -> f64 {
        1.6e-6
    }

    /// Multiplier on the load inertia accounting for the rotor.
    pub fn inertia_scale(self) -> f64 {
        match self {
            MotorVariant::Shinano => 1.0,
            MotorVariant::Maxon => 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorConfig {
    pub config_id: u32,
    /// kg·m²
    pub inertia: f64,
    /// N·m per commanded ampere
    pub torque_constant: f64,
    /// N·m·s/rad
    pub viscous_friction: f64,
    /// s
    pub sample_time: f64,
}

impl MotorConfig {
    pub fn new(config_id: u32, variant: MotorVariant, load_inertia: f64) -> Self {
        MotorConfig {
            config_id,
            inertia: load_inertia * variant.inertia_scale(),
            torque_constant: variant.torque_constant(),
            viscous_friction: variant.viscous_friction(),
            sample_time: SAMPLE_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0) {
            return Err(Error::config(format!("config {}: inertia must be > 0", self.config_id)));
        }
        if !(self.torque_constant > 0.0) {
            return Err(Error::config(format!(
                "config {}: torque constant must be > 0",
                self.config_id
            )));
        }
        if !(self.viscous_friction >= 0.0) {
            return Err(Error::config(format!(
                "config {}: viscous friction must be >= 0",
                self.config_id
            )));
        }
        if !(self.sample_time > 0.0) {
            return Err(Error::config(format!(
                "config {}: sample time must be > 0",
                self.config_id
            )));
        }
        Ok(())
    }
}

/// The 20 motor + load configurations: ids 1–10 on the Shinano motor,
/// 11–20 on the Maxon motor, loads in increasing inertia.
pub fn default_family() -> Vec<MotorConfig> {
    [MotorVariant::Shinano, MotorVariant::Maxon]
        .iter()
        .enumerate()
        .flat_map(|(v, &variant)| {
            LOAD_INERTIAS
                .iter()
                .enumerate()
                .map(move |(k, &j)| MotorConfig::new((v * 10 + k + 1) as u32, variant, j))
        })
        .collect()
}

/// Exact ZOH discretization `b q⁻¹ / (1 − a q⁻¹)` with output in rpm.
pub fn make_plant(cfg: &MotorConfig) -> Result<TransferFunction> {
    cfg.validate()?;
    if cfg.viscous_friction == 0.0 {
        return Err(Error::config(format!(
            "config {}: zero viscous friction gives an integrating plant",
            cfg.config_id
        )));
    }
    let a = (-cfg.viscous_friction * cfg.sample_time / cfg.inertia).exp();
    let b = cfg.torque_constant / cfg.viscous_friction * (1.0 - a) * RAD_S_TO_RPM;
    TransferFunction::first_order(b, a, cfg.sample_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Output noise standard deviation [rpm].
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: DEFAULT_NOISE_SIGMA,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig { sigma: 0.0, seed: 0 }
    }

    /// Child stream for an independent experiment.
    pub fn derive(&self, config_id: u32, stream: u64) -> NoiseConfig {
        NoiseConfig {
            sigma: self.sigma,
            seed: derive_seed(self.seed, config_id as u64, stream),
        }
    }

    /// White Gaussian sequence `v(t) ~ wn(0, σ²)`.
    pub fn sequence(&self, len: usize) -> Result<Vec<f64>> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("noise sigma must be finite and >= 0"));
        }
        if self.sigma == 0.0 {
            return Ok(vec![0.0; len]);
        }
        let normal = Normal::new(0.0, self.sigma).map_err(|e| Error::config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Order-independent seed for `(base, a, b)` so parallel runs reproduce.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ a) ^ b.wrapping_mul(0xA24B_AED4_963E_E407))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub motor: Option<MotorConfig>,
}

/// One experiment: input `u` [A], measured output `y` [rpm] and, for
/// closed-loop records, the reference `r` [rpm].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub r: Option<Vec<f64>>,
    pub sample_time: f64,
    pub label: String,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>, r: Option<Vec<f64>>, sample_time: f64, label: impl Into<String>) -> Result<Self> {
        let ds = Dataset {
            u,
            y,
            r,
            sample_time,
            label: label.into(),
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.is_empty() {
            return Err(Error::EmptyInput);
        }
        if self.u.len() != self.y.len() || self.r.as_ref().is_some_and(|r| r.len() != self.u.len()) {
            return Err(Error::dim("dataset signals must have equal lengths"));
        }
        if !(self.sample_time > 0.0) {
            return Err(Error::config("dataset sample time must be > 0"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.sample_time
    }

    /// Hash of the exact sample values (labels excluded).
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.u.iter().chain(&self.y) {
            v.to_bits().hash(&mut h);
        }
        if let Some(r) = &self.r {
            for v in r {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Repeating staircase reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProtocol {
    /// rpm
    pub levels: Vec<f64>,
    /// seconds per level
    pub dwell: f64,
    /// seconds
    pub duration: f64,
}

impl Default for ReferenceProtocol {
    fn default() -> Self {
        ReferenceProtocol {
            levels: vec![1500.0, 750.0, 0.0],
            dwell: 2.0,
            duration: 20.0,
        }
    }
}

impl ReferenceProtocol {
    pub fn signal(&self, ts: f64) -> Result<Vec<f64>> {
        if self.levels.is_empty() || !(self.dwell > 0.0) || !(self.duration > 0.0) {
            return Err(Error::config("reference protocol needs levels, dwell > 0, duration > 0"));
        }
        let n = samples_for(self.duration, ts);
        let per_level = samples_for(self.dwell, ts).max(1);
        Ok((0..n)
            .map(|t| self.levels[(t / per_level) % self.levels.len()])
            .collect())
    }
}

pub(crate) fn samples_for(duration: f64, ts: f64) -> usize {
    (duration / ts).round() as usize
}

/// Constant reference of `amplitude` applied from `t = 0`.
pub fn step_reference(amplitude: f64, duration: f64, ts: f64) -> Vec<f64> {
    vec![amplitude; samples_for(duration, ts)]
}

pub fn conservative_pi() -> ControllerParams {
    ControllerParams::pi(CONSERVATIVE_KP, CONSERVATIVE_KI).expect("finite gains")
}

/// Closed-loop poles of `C G / (1 + C G)`; `Err(UnstableLoop)` if any lies on
/// or outside the unit circle.
pub fn check_loop(plant: &TransferFunction, controller: &TransferFunction) -> Result<()> {
    let cl = feedback(plant, controller)?;
    if cl.is_stable() {
        Ok(())
    } else {
        Err(Error::UnstableLoop { poles: cl.poles() })
    }
}

/// Simulates `u = C(r − ỹ)`, `ỹ = G u + v` from rest.
pub fn run_closed_loop(
    plant: &TransferFunction,
    controller: &ControllerParams,
    reference: &[f64],
    noise: &NoiseConfig,
) -> Result<Dataset> {
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ts = plant.sample_time();
    let c_tf = ControllerBasis::from_id(&controller.basis_id, ts)?.controller_tf(controller)?;
    check_loop(plant, &c_tf)?;

    let v = noise.sequence(reference.len())?;
    let mut g = SimState::new(plant.clone());
    let mut c = SimState::new(c_tf);
    let (g0, c0) = (g.feedthrough(), c.feedthrough());
    let denom = 1.0 + g0 * c0;

    let mut u = Vec::with_capacity(reference.len());
    let mut y = Vec::with_capacity(reference.len());
    for (&r, &vt) in reference.iter().zip(&v) {
        let (p, q) = (g.free_response(), c.free_response());
        let y_clean = (p + g0 * (q + c0 * (r - vt))) / denom;
        let e = r - y_clean - vt;
        let ut = q + c0 * e;
        g.commit(ut, y_clean);
        c.commit(e, ut);
        u.push(ut);
        y.push(y_clean + vt);
    }
    let mut ds = Dataset::new(u, y, Some(reference.to_vec()), ts, "closed-loop")?;
    ds.provenance = Some(Provenance {
        seed: noise.seed,
        motor: None,
    });
    Ok(ds)
}

/// Experiment protocol shared by every configuration of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignProtocol {
    pub reference: ReferenceProtocol,
    pub noise: NoiseConfig,
    pub controller: ControllerParams,
    /// Distinguishes repeated campaigns (training, instrument, ...).
    pub stream: u64,
}

impl Default for CampaignProtocol {
    fn default() -> Self {
        CampaignProtocol {
            reference: ReferenceProtocol::default(),
            noise: NoiseConfig::default(),
            controller: conservative_pi(),
            stream: 0,
        }
    }
}

/// One closed-loop record per configuration under an identical reference.
pub fn collect_campaign(cfgs: &[MotorConfig], protocol: &CampaignProtocol) -> Result<Vec<Dataset>> {
    cfgs.par_iter()
        .map(|cfg| collect_one(cfg, protocol))
        .collect()
}

pub fn collect_one(cfg: &MotorConfig, protocol: &CampaignProtocol) -> Result<Dataset> {
    let plant = make_plant(cfg)?;
    let reference = protocol.reference.signal(cfg.sample_time)?;
    let noise = protocol.noise.derive(cfg.config_id, protocol.stream);
    let mut ds = run_closed_loop(&plant, &protocol.controller, &reference, &noise)?;
    ds.label = format!("cfg{:02}-s{}", cfg.config_id, protocol.stream);
    ds.provenance = Some(Provenance {
        seed: noise.seed,
        motor: Some(cfg.clone()),
    });
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(j: f64) -> MotorConfig {
        MotorConfig {
            config_id: 2,
            inertia: j,
            torque_constant: 0.05,
            viscous_friction: 1e-4,
            sample_time: 1e-3,
        }
    }

    #[test]
    fn plant_pole_regression() {
        let g = make_plant(&cfg(0.1149e-3)).unwrap();
        let a = -g.den()[1];
        let expect = (-1e-4 * 1e-3 / 1.149e-4f64).exp();
        assert!((a - expect).abs() < 1e-15);
        assert!((a - 0.999_13).abs() < 5e-6);
        assert!(g.is_stable());
    }

    #[test]
    fn heavier_load_is_slower() {
        let a1 = -make_plant(&cfg(1e-4)).unwrap().den()[1];
        let a2 = -make_plant(&cfg(2e-4)).unwrap().den()[1];
        assert!(a2 > a1);
        let a_big = -make_plant(&cfg(1e6)).unwrap().den()[1];
        assert!((1.0 - a_big).abs() < 1e-12);
    }

    #[test]
    fn frictionless_plant_rejected() {
        let mut c = cfg(1e-4);
        c.viscous_friction = 0.0;
        assert!(make_plant(&c).is_err());
        c.inertia = -1.0;
        assert!(make_plant(&c).is_err());
    }

    #[test]
    fn pi_loop_removes_offset() {
        // k q⁻¹ with a stabilizing PI
        let plant = TransferFunction::new(vec![0.0, 0.5], vec![1.0], 1e-3).unwrap();
        let pi = ControllerParams::pi(0.2, 100.0).unwrap();
        let ds = run_closed_loop(&plant, &pi, &vec![10.0; 3000], &NoiseConfig::noiseless()).unwrap();
        assert!((ds.y.last().unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn unstable_loop_reports_poles() {
        let plant = TransferFunction::first_order(1.0, 0.5, 1e-3).unwrap();
        let pi = ControllerParams::pi(5.0, 0.0).unwrap();
        match run_closed_loop(&plant, &pi, &[1.0; 10], &NoiseConfig::noiseless()) {
            Err(Error::UnstableLoop { poles }) => assert!(!poles.is_empty()),
            other => panic!("expected UnstableLoop, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_data() {
        let plant = make_plant(&default_family()[3]).unwrap();
        let r = step_reference(1500.0, 1.0, 1e-3);
        let n = NoiseConfig { sigma: 5.0, seed: 42 };
        let a = run_closed_loop(&plant, &conservative_pi(), &r, &n).unwrap();
        let b = run_closed_loop(&plant, &conservative_pi(), &r, &n).unwrap();
        assert_eq!(a, b);
        let c = run_closed_loop(&plant, &conservative_pi(), &r, &NoiseConfig { sigma: 5.0, seed: 43 }).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn family_shape() {
        let fam = default_family();
        assert_eq!(fam.len(), 20);
        let ids: Vec<u32> = fam.iter().map(|c| c.config_id).collect();
        assert_eq!(ids, (1..=20).collect::<Vec<_>>());
        assert_eq!(fam[1].inertia, 0.1149e-3);
    }

    #[test]
    fn protocol_signal() {
        let r = ReferenceProtocol::default().signal(1e-3).unwrap();
        assert_eq!(r.len(), 20_000);
        assert_eq!(r[0], 1500.0);
        assert_eq!(r[2000], 750.0);
        assert_eq!(r[4000], 0.0);
        assert_eq!(r[6000], 1500.0);
    }

    #[test]
    fn empty_campaign() {
        assert!(collect_campaign(&[], &CampaignProtocol::default()).unwrap().is_empty());
    }
}
