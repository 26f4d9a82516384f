//! End-to-end comparison on the simulated motor family.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autotune::{autotune, AutotuneResult, CalibConfig, ReferenceModel, ReferenceModelSpace};
use crate::controller::{ControllerBasis, ControllerParams};
use crate::error::{Error, Result};
use crate::gopt::{tune_pi_gains, OptBudget, SearchSpace};
use crate::io::write_json;
use crate::meta::{design_meta_controller, MetaDesignConfig, MetaEntry};
use crate::motor::{
    collect_one, conservative_pi, default_family, make_plant, run_closed_loop, step_reference, CampaignProtocol,
    Dataset, MotorConfig, NoiseConfig, ReferenceProtocol,
};
use crate::vrft::{build_instruments, vrft_design, VrftOptions};

/// Noise streams of the experiments run on each configuration.
pub mod streams {
    pub const TRAINING: u64 = 0;
    pub const INSTRUMENT: u64 = 1;
    pub const META_DEPLOY: u64 = 2;
    pub const TEST_DEPLOY: u64 = 3;
    /// Tuning experiment `k` uses `TUNING_BASE + k`.
    pub const TUNING_BASE: u64 = 1_000;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub family: Vec<MotorConfig>,
    /// Number of configurations drawn into the meta-dataset.
    pub n_meta: usize,
    pub split_seed: u64,
    pub noise: NoiseConfig,
    pub training: ReferenceProtocol,
    /// Step amplitude [rpm] of tuning and deployment experiments.
    pub step_amplitude: f64,
    /// Duration [s] of each tuning / meta closed-loop experiment.
    pub tuning_duration: f64,
    /// Duration [s] of the test deployment.
    pub deploy_duration: f64,
    pub tuning_space: SearchSpace,
    pub tuning_budget: OptBudget,
    pub design: MetaDesignConfig,
    pub calib: CalibConfig,
    pub space: ReferenceModelSpace,
    pub vrft: VrftOptions,
    /// Use the tabulated (non-unity gain) numerator for the fixed model.
    pub literal_fixed_model: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: default_family(),
            n_meta: 10,
            split_seed: 0,
            noise: NoiseConfig::default(),
            training: ReferenceProtocol::default(),
            step_amplitude: 1500.0,
            tuning_duration: 5.0,
            deploy_duration: 3.0,
            tuning_space: SearchSpace::pi_default(),
            tuning_budget: OptBudget::default(),
            design: MetaDesignConfig::default(),
            calib: CalibConfig::default(),
            space: ReferenceModelSpace::default(),
            vrft: VrftOptions::default(),
            literal_fixed_model: false,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.family.len() < 2 {
            return Err(Error::config("family needs at least two configurations"));
        }
        if self.n_meta == 0 || self.n_meta >= self.family.len() {
            return Err(Error::config("n_meta must leave both splits non-empty"));
        }
        let mut ids: Vec<u32> = self.family.iter().map(|c| c.config_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.family.len() {
            return Err(Error::config("configuration ids must be unique"));
        }
        for c in &self.family {
            c.validate()?;
        }
        if !(self.tuning_duration > 0.0 && self.deploy_duration > 0.0) {
            return Err(Error::config("experiment durations must be > 0"));
        }
        self.tuning_space.validate()?;
        self.design.validate()?;
        self.calib.validate()?;
        self.space.validate()
    }

    pub fn sample_time(&self) -> f64 {
        self.family[0].sample_time
    }

    pub fn fixed_model(&self) -> Result<ReferenceModel> {
        ReferenceModel::fixed(self.literal_fixed_model, self.sample_time())
    }

    fn campaign(&self, stream: u64) -> CampaignProtocol {
        CampaignProtocol {
            reference: self.training.clone(),
            noise: self.noise,
            controller: conservative_pi(),
            stream,
        }
    }
}

/// Seeded partition of the family into (meta, test).
pub fn split(cfg: &ExperimentConfig) -> Result<(Vec<MotorConfig>, Vec<MotorConfig>)> {
    cfg.validate()?;
    let mut idx: Vec<usize> = (0..cfg.family.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.split_seed));
    let (m, t) = idx.split_at(cfg.n_meta);
    let pick = |ix: &[usize]| {
        let mut v: Vec<MotorConfig> = ix.iter().map(|&i| cfg.family[i].clone()).collect();
        v.sort_by_key(|c| c.config_id);
        v
    };
    Ok((pick(m), pick(t)))
}

/// Tunes `[Kp, Ki]` on the live (simulated) loop against the fixed model.
pub fn tune_online(cfg: &ExperimentConfig, motor: &MotorConfig) -> Result<ControllerParams> {
    let plant = make_plant(motor)?;
    let ts = cfg.sample_time();
    let r = step_reference(cfg.step_amplitude, cfg.tuning_duration, ts);
    let y_d = cfg.fixed_model()?.tf.simulate(&r)?;
    let mut k = 0u64;
    let runner = |c: &ControllerParams| {
        let noise = cfg.noise.derive(motor.config_id, streams::TUNING_BASE + k);
        k += 1;
        run_closed_loop(&plant, c, &r, &noise).ok().map(|d| d.y)
    };
    match tune_pi_gains(runner, &y_d, &cfg.tuning_space, &cfg.tuning_budget) {
        Ok((c, _)) => Ok(c),
        Err(Error::AllInfeasible) => Err(Error::TuningFailed {
            config_id: motor.config_id,
        }),
        Err(e) => Err(e),
    }
}

/// One entry per meta configuration: training record, tuned PI and its
/// deployed step response.
pub fn build_meta_dataset(cfg: &ExperimentConfig, configs: &[MotorConfig]) -> Result<Vec<MetaEntry>> {
    let ts = cfg.sample_time();
    configs
        .par_iter()
        .map(|motor| {
            let dataset = collect_one(motor, &cfg.campaign(streams::TRAINING))?;
            let controller = tune_online(cfg, motor)?;
            let r = step_reference(cfg.step_amplitude, cfg.tuning_duration, ts);
            let noise = cfg.noise.derive(motor.config_id, streams::META_DEPLOY);
            let cl = run_closed_loop(&make_plant(motor)?, &controller, &r, &noise)?;
            Ok(MetaEntry {
                dataset,
                controller,
                closed_loop_response: cl.y,
                closed_loop_reference: r,
                system_label: format!("cfg{:02}", motor.config_id),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Smgo,
    Meta,
    Vrft,
    AMeta,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smgo, Method::Meta, Method::Vrft, Method::AMeta];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Smgo => "SMGO",
            Method::Meta => "META",
            Method::Vrft => "VRFT",
            Method::AMeta => "A_META",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorStats {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for fewer than two values).
    pub std: f64,
}

impl IndicatorStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        IndicatorStats { values, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    /// Configurations with a stable designed loop, in `values` order.
    pub config_ids: Vec<u32>,
    /// `‖y_d − y‖₂` [rpm]
    pub mismatch: IndicatorStats,
    /// `‖r − y‖₂` [rpm]
    pub tracking: IndicatorStats,
    /// `‖Δu‖₂` [A]
    pub input_effort: IndicatorStats,
    /// Experiment time [s] spent on each new motor.
    pub collection_time: f64,
    /// Configurations whose designed loop was unstable.
    pub unstable: Vec<u32>,
}

/// Deployment record used for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub method: Method,
    pub config_id: u32,
    pub controller: ControllerParams,
    pub sample_time: f64,
    pub r: Vec<f64>,
    pub y_desired: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub mismatch: f64,
    pub tracking: f64,
    pub input_effort: f64,
}

pub fn indicators(r: &[f64], y_desired: &[f64], y: &[f64], u: &[f64]) -> Indicators {
    let l2 = |it: &mut dyn Iterator<Item = f64>| it.map(|v| v * v).sum::<f64>().sqrt();
    let mut prev = 0.0;
    Indicators {
        mismatch: l2(&mut y_desired.iter().zip(y).map(|(a, b)| a - b)),
        tracking: l2(&mut r.iter().zip(y).map(|(a, b)| a - b)),
        input_effort: l2(&mut u.iter().map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<MetricsRow>,
    pub responses: Vec<Response>,
    pub autotune: Vec<(u32, AutotuneResult)>,
}

pub fn collection_time(cfg: &ExperimentConfig, method: Method) -> f64 {
    match method {
        Method::Smgo => cfg.tuning_budget.n_itr as f64 * cfg.tuning_duration,
        Method::Meta | Method::Vrft | Method::AMeta => 2.0 * cfg.training.duration,
    }
}

struct PerConfig {
    outcomes: Vec<(Method, Option<Response>)>,
    autotune: AutotuneResult,
}

fn deploy(
    cfg: &ExperimentConfig,
    motor: &MotorConfig,
    method: Method,
    controller: ControllerParams,
    model: &ReferenceModel,
) -> Result<Option<Response>> {
    let ts = cfg.sample_time();
    let r = step_reference(cfg.step_amplitude, cfg.deploy_duration, ts);
    let noise = cfg.noise.derive(motor.config_id, streams::TEST_DEPLOY);
    match run_closed_loop(&make_plant(motor)?, &controller, &r, &noise) {
        Ok(d) => Ok(Some(Response {
            method,
            config_id: motor.config_id,
            controller,
            sample_time: ts,
            y_desired: model.tf.simulate(&r)?,
            r,
            y: d.y,
            u: d.u,
        })),
        Err(Error::UnstableLoop { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_one(cfg: &ExperimentConfig, meta: &[MetaEntry], motor: &MotorConfig) -> Result<PerConfig> {
    let ts = cfg.sample_time();
    let fixed = cfg.fixed_model()?;
    let data: Dataset = collect_one(motor, &cfg.campaign(streams::TRAINING))?;
    let second: Dataset = collect_one(motor, &cfg.campaign(streams::INSTRUMENT))?;
    let basis_id = &meta.first().ok_or(Error::EmptyInput)?.controller.basis_id;
    let basis = ControllerBasis::from_id(basis_id, ts)?;

    let smgo = tune_online(cfg, motor)?;
    let instruments = build_instruments(&second, &fixed.tf, &basis, &cfg.design.filter, cfg.vrft.convention)?;
    let vrft = vrft_design(&data, &fixed.tf, &basis, &cfg.design.filter, Some(&instruments), cfg.vrft)?;
    let meta_design = design_meta_controller(meta, &data, Some(&second), &fixed.tf, &cfg.design)?;
    let reference = &meta[0].closed_loop_reference;
    let auto = autotune(meta, &data, Some(&second), &second, &cfg.space, &cfg.calib, &cfg.design, reference)?;
    let auto_model = ReferenceModel::new(auto.phi_star, ts)?;

    let outcomes = vec![
        (Method::Smgo, deploy(cfg, motor, Method::Smgo, smgo, &fixed)?),
        (Method::Meta, deploy(cfg, motor, Method::Meta, meta_design.controller, &fixed)?),
        (Method::Vrft, deploy(cfg, motor, Method::Vrft, vrft, &fixed)?),
        (Method::AMeta, deploy(cfg, motor, Method::AMeta, auto.controller.clone(), &auto_model)?),
    ];
    Ok(PerConfig {
        outcomes,
        autotune: auto,
    })
}

/// Runs all four methods on every test configuration and aggregates the
/// indicators. Unstable designs are listed per row and excluded from means.
/// Config ids, indicators of stable runs, and ids of unstable runs.
type Bucket = (Vec<u32>, Vec<Indicators>, Vec<u32>);

pub fn run_comparison(cfg: &ExperimentConfig, meta: &[MetaEntry], test: &[MotorConfig]) -> Result<Comparison> {
    if meta.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per: Vec<PerConfig> = test.par_iter().map(|m| run_one(cfg, meta, m)).collect::<Result<_>>()?;

    let mut buckets: BTreeMap<Method, Bucket> = BTreeMap::new();
    let mut responses = Vec::new();
    for (motor, pc) in test.iter().zip(&per) {
        for (method, resp) in &pc.outcomes {
            let b = buckets.entry(*method).or_default();
            match resp {
                Some(r) => {
                    b.0.push(motor.config_id);
                    b.1.push(indicators(&r.r, &r.y_desired, &r.y, &r.u));
                    responses.push(r.clone());
                }
                None => b.2.push(motor.config_id),
            }
        }
    }
    let rows = Method::ALL
        .iter()
        .map(|m| {
            let (ids, ind, unstable) = buckets.remove(m).unwrap_or_default();
            MetricsRow {
                method: *m,
                config_ids: ids,
                mismatch: IndicatorStats::from_values(ind.iter().map(|i| i.mismatch).collect()),
                tracking: IndicatorStats::from_values(ind.iter().map(|i| i.tracking).collect()),
                input_effort: IndicatorStats::from_values(ind.iter().map(|i| i.input_effort).collect()),
                collection_time: collection_time(cfg, *m),
                unstable,
            }
        })
        .collect();
    let autotune = test.iter().zip(per).map(|(m, pc)| (m.config_id, pc.autotune)).collect();
    Ok(Comparison {
        rows,
        responses,
        autotune,
    })
}

/// Meta build plus comparison on the seeded split.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<(Vec<MetaEntry>, Comparison)> {
    let (meta_cfgs, test_cfgs) = split(cfg)?;
    let meta = build_meta_dataset(cfg, &meta_cfgs)?;
    let cmp = run_comparison(cfg, &meta, &test_cfgs)?;
    Ok((meta, cmp))
}

pub fn unstable_count(rows: &[MetricsRow]) -> usize {
    rows.iter().map(|r| r.unstable.len()).sum()
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_csv_lines(rows: &[MetricsRow]) -> Vec<String> {
    let mut out = vec![
        "method,mismatch_mean,mismatch_std,tracking_mean,tracking_std,input_effort_mean,input_effort_std,collection_time,n_stable,n_unstable"
            .to_string(),
    ];
    for r in rows {
        out.push(format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.mismatch.mean,
            r.mismatch.std,
            r.tracking.mean,
            r.tracking.std,
            r.input_effort.mean,
            r.input_effort.std,
            r.collection_time,
            r.config_ids.len(),
            r.unstable.len()
        ));
    }
    out
}

/// Writes `metrics.csv`, `metrics_per_config.csv`, `metrics.json`,
/// `responses/<method>_cfgXX.csv` and, when present, `autotune/`.
pub fn emit_report(
    rows: &[MetricsRow],
    responses: &[Response],
    autotune: &[(u32, AutotuneResult)],
    out_dir: &Path,
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    std::fs::create_dir_all(out_dir)?;
    write_lines(&out_dir.join("metrics.csv"), metrics_csv_lines(rows))?;
    let mut per = vec!["method,config_id,mismatch,tracking,input_effort".to_string()];
    for r in rows {
        for (k, id) in r.config_ids.iter().enumerate() {
            per.push(format!(
                "{},{},{},{},{}",
                r.method, id, r.mismatch.values[k], r.tracking.values[k], r.input_effort.values[k]
            ));
        }
    }
    write_lines(&out_dir.join("metrics_per_config.csv"), per)?;
    write_json(&out_dir.join("metrics.json"), &rows)?;

    let resp_dir = out_dir.join("responses");
    std::fs::create_dir_all(&resp_dir)?;
    for resp in responses {
        let ts = resp.sample_time;
        let lines = std::iter::once("t,r,y_desired,y,u".to_string()).chain((0..resp.y.len()).map(|k| {
            format!(
                "{},{},{},{},{}",
                k as f64 * ts,
                resp.r[k],
                resp.y_desired[k],
                resp.y[k],
                resp.u[k]
            )
        }));
        write_lines(&resp_dir.join(format!("{}_cfg{:02}.csv", resp.method, resp.config_id)), lines)?;
    }

    if !autotune.is_empty() {
        let dir = out_dir.join("autotune");
        std::fs::create_dir_all(&dir)?;
        for (id, res) in autotune {
            write_json(&dir.join(format!("cfg{id:02}.json")), res)?;
            let lines = std::iter::once("iter,phi,j_auto,j_perf,j_meta".to_string()).chain(
                res.trace
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let f = |v: Option<f64>| v.map_or_else(|| "inf".to_string(), |v| v.to_string());
                        format!("{i},{},{},{},{}", s.phi, f(s.j_auto), f(s.j_perf), f(s.j_meta))
                    }),
            );
            write_lines(&dir.join(format!("cfg{id:02}_trace.csv")), lines)?;
        }
    }
    Ok(())
}
