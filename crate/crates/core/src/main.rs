use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use metaddc::autotune::{autotune, CalibConfig, ReferenceModel, ReferenceModelSpace};
use metaddc::bench::{emit_report, metrics_csv_lines, run_bench, split, unstable_count, ExperimentConfig, MetricsRow};
use metaddc::controller::{ControllerBasis, ControllerParams};
use metaddc::io::{read_dataset, read_json, read_meta_dir, write_dataset, write_json, write_meta_dir};
use metaddc::meta::{design_meta_controller, MetaDesignConfig};
use metaddc::motor::{check_loop, collect_campaign, conservative_pi, make_plant, CampaignProtocol, Dataset};
use metaddc::vrft::{build_instruments, vrft_design, FilterSpec, VirtualErrorConvention, VrftOptions};
use metaddc::{bench, Error, Result};

const EXIT_UNSTABLE: u8 = 2;

#[derive(Parser)]
#[command(name = "metaddc", version, about = "Meta-design of data-driven PI speed controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate design and instrument records for every configuration.
    Collect(CollectArgs),
    /// Tune the meta configurations and store the meta-dataset.
    BuildMeta(BuildMetaArgs),
    /// Design a controller from the meta-dataset for a new record.
    DesignMeta(DesignMetaArgs),
    /// Single-record VRFT design.
    Vrft(VrftArgs),
    /// Meta design with an auto-tuned reference model.
    Autotune(AutotuneArgs),
    /// Full SMGO / META / VRFT / A-META comparison.
    Bench(BenchArgs),
    /// Print a stored comparison.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the meta/test split seed.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Override the output noise standard deviation [rpm].
    #[arg(long)]
    sigma: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.noise.seed = s;
        }
        if let Some(s) = self.split_seed {
            cfg.split_seed = s;
        }
        if let Some(s) = self.sigma {
            cfg.noise.sigma = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct CollectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildMetaArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Reference model, `phi=<pole>`.
    #[arg(long, default_value = "phi=0.9391", value_parser = parse_model)]
    model: f64,
    /// Use the tabulated fixed-model numerator (DC gain != 1).
    #[arg(long)]
    literal_fixed_model: bool,
    #[arg(long, value_enum, default_value_t = Convention::Inverse)]
    convention: Convention,
    /// Exit successfully even if the designed loop is unstable on the plant
    /// recorded in the data sidecar.
    #[arg(long)]
    allow_unstable: bool,
}

impl ModelArgs {
    fn model(&self, ts: f64) -> Result<ReferenceModel> {
        if self.literal_fixed_model {
            ReferenceModel::fixed(true, ts)
        } else {
            ReferenceModel::new(self.model, ts)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Inverse,
    Literal,
}

impl From<Convention> for VirtualErrorConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Inverse => VirtualErrorConvention::Inverse,
            Convention::Literal => VirtualErrorConvention::Literal,
        }
    }
}

fn parse_model(s: &str) -> std::result::Result<f64, String> {
    let v = s.strip_prefix("phi=").unwrap_or(s);
    v.parse::<f64>().map_err(|e| format!("bad model '{s}': {e}"))
}

#[derive(Args)]
struct DesignMetaArgs {
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    instrument: Option<PathBuf>,
    #[arg(long, default_value_t = 1e16)]
    lambda_j: f64,
    #[arg(long, default_value_t = 1e17)]
    lambda_s: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VrftArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    instrument: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AutotuneArgs {
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Calibration record; also the instrument unless `--instrument` is given.
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    instrument: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9550)]
    phi_min: f64,
    #[arg(long, default_value_t = 0.9991)]
    phi_max: f64,
    #[arg(long, default_value_t = 1e8)]
    q: f64,
    #[arg(long, default_value_t = 1e3)]
    r: f64,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e16)]
    lambda_j: f64,
    #[arg(long, default_value_t = 1e17)]
    lambda_s: f64,
    #[arg(long)]
    allow_unstable: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    allow_unstable: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding `metrics.json`.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    allow_unstable: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(Error::UnstableLoop { poles }) => {
            eprintln!("error: designed loop is unstable, poles {poles:?}");
            ExitCode::from(EXIT_UNSTABLE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
            Ok(())
        }
    }
}

/// Stability check against the plant recorded in the dataset sidecar.
fn check_designed(data: &Dataset, c: &ControllerParams, allow: bool) -> Result<()> {
    let Some(motor) = data.provenance.as_ref().and_then(|p| p.motor.as_ref()) else {
        return Ok(());
    };
    let plant = make_plant(motor)?;
    let ctf = ControllerBasis::from_id(&c.basis_id, data.sample_time)?.controller_tf(c)?;
    match check_loop(&plant, &ctf) {
        Err(Error::UnstableLoop { poles }) if allow => {
            eprintln!("warning: designed loop is unstable, poles {poles:?}");
            Ok(())
        }
        other => other,
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Collect(a) => {
            let cfg = a.cfg.load()?;
            for stream in [bench::streams::TRAINING, bench::streams::INSTRUMENT] {
                let protocol = CampaignProtocol {
                    reference: cfg.training.clone(),
                    noise: cfg.noise,
                    controller: conservative_pi(),
                    stream,
                };
                for ds in collect_campaign(&cfg.family, &protocol)? {
                    write_dataset(&a.out.join(format!("{}.csv", ds.label)), &ds)?;
                }
            }
            say(&format!("wrote {} records to {}", 2 * cfg.family.len(), a.out.display()))?;
        }
        Command::BuildMeta(a) => {
            let cfg = a.cfg.load()?;
            let (meta_cfgs, test_cfgs) = split(&cfg)?;
            let meta = bench::build_meta_dataset(&cfg, &meta_cfgs)?;
            write_meta_dir(&a.out, &meta)?;
            let ids = |v: &[metaddc::MotorConfig]| v.iter().map(|c| c.config_id).collect::<Vec<_>>();
            write_json(
                &a.out.join("split.json"),
                &serde_json::json!({ "meta": ids(&meta_cfgs), "test": ids(&test_cfgs) }),
            )?;
            say(&format!("wrote {} meta entries to {}", meta.len(), a.out.display()))?;
        }
        Command::DesignMeta(a) => {
            let meta = read_meta_dir(&a.meta)?;
            let data = read_dataset(&a.data)?;
            let second = a.instrument.as_deref().map(read_dataset).transpose()?;
            let m = a.model.model(data.sample_time)?;
            let cfg = MetaDesignConfig {
                lambda_j: a.lambda_j,
                lambda_s: a.lambda_s,
                iv: second.is_some(),
                convention: a.model.convention.into(),
                ..Default::default()
            };
            let design = design_meta_controller(&meta, &data, second.as_ref(), &m.tf, &cfg)?;
            check_designed(&data, &design.controller, a.model.allow_unstable)?;
            emit(&design, a.out.as_deref())?;
        }
        Command::Vrft(a) => {
            let data = read_dataset(&a.data)?;
            let m = a.model.model(data.sample_time)?;
            let basis = ControllerBasis::pi(data.sample_time)?;
            let filter = FilterSpec::default();
            let convention: VirtualErrorConvention = a.model.convention.into();
            let instruments = match &a.instrument {
                Some(p) => Some(build_instruments(&read_dataset(p)?, &m.tf, &basis, &filter, convention)?),
                None => None,
            };
            let opts = VrftOptions {
                convention,
                ..Default::default()
            };
            let c = vrft_design(&data, &m.tf, &basis, &filter, instruments.as_ref(), opts)?;
            check_designed(&data, &c, a.model.allow_unstable)?;
            emit(&c, a.out.as_deref())?;
        }
        Command::Autotune(a) => {
            let meta = read_meta_dir(&a.meta)?;
            let data = read_dataset(&a.data)?;
            let calib = read_dataset(&a.calib)?;
            let second = match &a.instrument {
                Some(p) => read_dataset(p)?,
                None => calib.clone(),
            };
            let space = ReferenceModelSpace {
                phi_min: a.phi_min,
                phi_max: a.phi_max,
            };
            let cc = CalibConfig {
                q_weight: a.q,
                r_weight: a.r,
                n_itr: a.iters,
                seed: a.seed,
            };
            let mc = MetaDesignConfig {
                lambda_j: a.lambda_j,
                lambda_s: a.lambda_s,
                ..Default::default()
            };
            let reference = meta.first().ok_or(Error::EmptyInput)?.closed_loop_reference.clone();
            let res = autotune(&meta, &data, Some(&second), &calib, &space, &cc, &mc, &reference)?;
            check_designed(&data, &res.controller, a.allow_unstable)?;
            emit(&res, a.out.as_deref())?;
        }
        Command::Bench(a) => {
            let mut cfg = a.cfg.load()?;
            cfg.output_dir = Some(a.out.clone());
            let (meta, cmp) = run_bench(&cfg)?;
            write_meta_dir(&a.out.join("meta"), &meta)?;
            emit_report(&cmp.rows, &cmp.responses, &cmp.autotune, &a.out)?;
            print_rows(&cmp.rows)?;
            return Ok(unstable_exit(&cmp.rows, a.allow_unstable));
        }
        Command::Report(a) => {
            let rows: Vec<MetricsRow> = read_json(&a.dir.join("metrics.json"))?;
            print_rows(&rows)?;
            return Ok(unstable_exit(&rows, a.allow_unstable));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn say(line: &str) -> Result<()> {
    writeln!(std::io::stdout().lock(), "{line}")?;
    Ok(())
}

fn print_rows(rows: &[MetricsRow]) -> Result<()> {
    for line in metrics_csv_lines(rows) {
        say(&line)?;
    }
    for r in rows.iter().filter(|r| !r.unstable.is_empty()) {
        eprintln!("{}: unstable designed loop on configurations {:?}", r.method, r.unstable);
    }
    Ok(())
}

fn unstable_exit(rows: &[MetricsRow], allow: bool) -> ExitCode {
    if unstable_count(rows) > 0 && !allow {
        ExitCode::from(EXIT_UNSTABLE)
    } else {
        ExitCode::SUCCESS
    }
}
