//! The `coalfrag` command line.
//!
//! Each subcommand is one [`ExperimentConfig`] variant; the same value can be
//! given as flags or as a JSON file through `--config`. Results go to
//! `--out` (or standard output) and every file written gets a
//! `<out>.manifest.json` next to it. Output bytes depend only on the config:
//! replicate `i` always draws from the substream `(seed, tag, i)`, whatever
//! the worker count.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::coalescent::simulate;
use crate::density::{g, h, h_n, h_product, size_biased_marginal_density, DensityContext, NORMALIZER_MC};
use crate::error::{Error, Result};
use crate::excursion::{sample_theta_fragmentation, ThetaSequence};
use crate::measure::{marginal_density_test, martingale_check, MarginalReport, MartingalePoint};
use crate::model::{EquivalenceClass, SubordinatorSpec};
use crate::parallel::{try_map_replicates, with_workers};
use crate::partition::MassPartition;
use crate::pde::{pde_residual, ResidualReport, DEFAULT_TOL};
use crate::rng::{StreamTag, Streams};
use crate::stats::MCEstimate;
use crate::VERSION;

type Spec = SubordinatorSpec<f64>;

fn parse_spec(s: &str) -> std::result::Result<Spec, String> {
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| format!("cannot read spec file {s}: {e}"))?
    };
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescentArgs {
    /// Initial number of clusters of mass 1/n.
    #[arg(long)]
    pub n: usize,
    /// Standard-coalescent time; the chain runs for t + ½ ln n.
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentationArgs {
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 1 << 16)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
    /// Jump sizes of the exchangeable bridge, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Use σ = 1 − Σθ² instead of σ² = 1 − Σθ².
    #[arg(long)]
    #[serde(default)]
    pub literal_sigma: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityWhat {
    #[value(name = "g")]
    #[serde(rename = "g")]
    G,
    #[value(name = "h")]
    #[serde(rename = "h")]
    H,
    /// The product density of a whole partition.
    #[value(name = "H")]
    #[serde(rename = "H")]
    Product,
    #[value(name = "hn")]
    #[serde(rename = "hn")]
    Hn,
    #[value(name = "marginal")]
    #[serde(rename = "marginal")]
    Marginal,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long, value_enum)]
    pub what: DensityWhat,
    /// Inline JSON or a path to a JSON file.
    #[arg(long, value_parser = parse_spec)]
    pub spec: Spec,
    #[arg(long)]
    pub t: f64,
    /// Mass (g, h, marginal), masses of a unit partition (H) or a prefix (hn).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub mc: u64,
    #[arg(long, default_value_t = NORMALIZER_MC)]
    #[serde(default = "default_normalizer_mc")]
    pub normalizer_mc: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleArgs {
    #[arg(long, value_parser = parse_spec)]
    pub spec: Spec,
    #[arg(long, value_delimiter = ',', required = true)]
    pub t_list: Vec<f64>,
    #[arg(long, default_value_t = 1 << 14)]
    pub grid: usize,
    #[arg(long, default_value_t = 2000)]
    pub replicates: u64,
    #[arg(long, default_value_t = 10_000)]
    pub mc: u64,
    #[arg(long, default_value_t = NORMALIZER_MC)]
    #[serde(default = "default_normalizer_mc")]
    pub normalizer_mc: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalArgs {
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 1 << 16)]
    pub grid: usize,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: u64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeArgs {
    #[arg(long, value_parser = parse_spec)]
    pub spec: Spec,
    #[arg(long)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub x_list: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub mc: u64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long, value_parser = parse_spec)]
    pub spec: Spec,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e6)]
    pub x_max: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
}

fn default_normalizer_mc() -> u64 {
    NORMALIZER_MC
}

/// One experiment, as given on the command line or in a `--config` file.
#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    /// Finite additive coalescent from n clusters of mass 1/n (CSV).
    SimulateCoalescent(CoalescentArgs),
    /// Fragments of the Brownian or θ-bridge fragmentation (CSV).
    SimulateFragmentation(FragmentationArgs),
    /// One density evaluation (JSON).
    Density(DensityArgs),
    /// Mean of the density along Brownian fragmentations (JSON).
    VerifyMartingale(MartingaleArgs),
    /// Chi-square test of the size-biased marginal (JSON).
    VerifyMarginal(MarginalArgs),
    /// Residual of the integro-differential equation for g (JSON).
    VerifyPde(PdeArgs),
    /// Finite-grid check of φ(x)x^{δ−1} → 0 (JSON).
    ClassifySpec(ClassifyArgs),
}

#[derive(Parser, Debug)]
#[command(name = "coalfrag", version, about = "Additive coalescent and fragmentation experiments")]
struct Cli {
    /// JSON experiment config, used instead of a subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<ExperimentConfig>,
}

/// Bytes produced by an experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Output {
    pub bytes: Vec<u8>,
    pub is_csv: bool,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn need(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(config_error(msg))
    }
}

impl ExperimentConfig {
    /// Loads a config file; a top-level `"out"` entry is returned separately.
    pub fn from_json_file(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        let text = std::fs::read_to_string(path)?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        let out = value
            .as_object_mut()
            .and_then(|o| o.remove("out"))
            .and_then(|v| v.as_str().map(PathBuf::from));
        let config = serde_json::from_value(value).map_err(|e| config_error(e.to_string()))?;
        Ok((config, out))
    }

    /// Range checks on every numeric knob.
    pub fn validate(&self) -> Result<()> {
        let nonneg = |t: f64| t >= 0.0 && t.is_finite();
        match self {
            ExperimentConfig::SimulateCoalescent(a) => {
                need(a.n >= 1, "n must be at least 1")?;
                need(a.replicates >= 1, "replicates must be at least 1")?;
                need(
                    a.t.is_finite() && a.t + 0.5 * (a.n as f64).ln() >= 0.0,
                    "t must be at least −½ ln n",
                )
            }
            ExperimentConfig::SimulateFragmentation(a) => {
                need(nonneg(a.t), "t must be nonnegative")?;
                need(a.grid >= 2, "grid must be at least 2")?;
                need(a.replicates >= 1, "replicates must be at least 1")
            }
            ExperimentConfig::Density(a) => {
                need(nonneg(a.t), "t must be nonnegative")?;
                need(a.mc >= 1 && a.normalizer_mc >= 1, "mc must be at least 1")?;
                need(!a.x.is_empty(), "x must list at least one mass")
            }
            ExperimentConfig::VerifyMartingale(a) => {
                need(a.t_list.iter().all(|&t| nonneg(t)), "times must be nonnegative")?;
                need(a.grid >= 2, "grid must be at least 2")?;
                need(a.replicates >= 2, "replicates must be at least 2")?;
                need(a.mc >= 1 && a.normalizer_mc >= 1, "mc must be at least 1")
            }
            ExperimentConfig::VerifyMarginal(a) => {
                need(nonneg(a.t), "t must be nonnegative")?;
                need(a.grid >= 2, "grid must be at least 2")?;
                need(a.replicates >= 2, "replicates must be at least 2")?;
                need(a.bins >= 2, "bins must be at least 2")
            }
            ExperimentConfig::VerifyPde(a) => {
                need(nonneg(a.t), "t must be nonnegative")?;
                need(a.mc >= 1, "mc must be at least 1")?;
                need(a.tol > 0.0, "tol must be positive")?;
                need(a.x_list.iter().all(|&x| x > 0.0 && x <= 1.0), "x values must lie in (0,1]")
            }
            ExperimentConfig::ClassifySpec(a) => {
                need(a.delta > 0.0 && a.delta < 1.0, "δ must lie in (0,1)")?;
                need(a.x_max >= 1e3, "x_max must be at least 1e3")
            }
        }
    }

    /// Runs the experiment on the current thread pool.
    pub fn execute(&self) -> Result<Output> {
        self.validate()?;
        match self {
            ExperimentConfig::SimulateCoalescent(a) => coalescent_csv(a),
            ExperimentConfig::SimulateFragmentation(a) => fragmentation_csv(a),
            ExperimentConfig::Density(a) => json(&density_value(a)?),
            ExperimentConfig::VerifyMartingale(a) => json(&martingale_report(a)?),
            ExperimentConfig::VerifyMarginal(a) => json(&MarginalOutput::new(marginal_density_test(
                a.t,
                a.grid,
                a.replicates,
                a.bins,
                &Streams::new(a.seed),
            )?)),
            ExperimentConfig::VerifyPde(a) => json(&pde_report(a)?),
            ExperimentConfig::ClassifySpec(a) => json(&classify_report(a)?),
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<Output> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(Output { bytes, is_csv: false })
}

fn coalescent_csv(a: &CoalescentArgs) -> Result<Output> {
    let initial = MassPartition::monodisperse(a.n)?;
    let duration = a.t + 0.5 * (a.n as f64).ln();
    let streams = Streams::new(a.seed);
    let blocks = try_map_replicates(a.replicates, |r| {
        let mut rng = streams.stream(StreamTag::Coalescent, r);
        let traj = simulate(&initial, duration, &mut rng)?;
        let mut s = String::new();
        let row = |s: &mut String, e: usize, time: f64, p: &MassPartition| {
            let _ = writeln!(s, "{r},{e},{time},{},{},{}", p.len(), p.nth_largest(1), p.nth_largest(2));
        };
        row(&mut s, 0, 0.0, &traj.initial);
        for (i, (time, p)) in traj.events.iter().enumerate() {
            row(&mut s, i + 1, *time, p);
        }
        Ok(s)
    })?;
    let mut out = String::from("replicate,event_index,time,k,largest_mass,second_mass\n");
    blocks.iter().for_each(|b| out.push_str(b));
    Ok(Output {
        bytes: out.into_bytes(),
        is_csv: true,
    })
}

fn fragmentation_csv(a: &FragmentationArgs) -> Result<Output> {
    let theta = if a.theta.is_empty() {
        ThetaSequence::brownian()
    } else if a.literal_sigma {
        ThetaSequence::literal(a.theta.clone())?
    } else {
        ThetaSequence::from_theta(a.theta.clone())?
    };
    let streams = Streams::new(a.seed);
    let blocks = try_map_replicates(a.replicates, |r| {
        let mut rng = streams.stream(StreamTag::Fragmentation, r);
        let sample = sample_theta_fragmentation(&theta, a.t, a.grid, &mut rng)?;
        let mut s = String::new();
        for (rank, m) in sample.partition.masses().iter().enumerate() {
            let _ = writeln!(s, "{r},{},{m}", rank + 1);
        }
        Ok(s)
    })?;
    let mut out = String::from("replicate,rank,mass\n");
    blocks.iter().for_each(|b| out.push_str(b));
    Ok(Output {
        bytes: out.into_bytes(),
        is_csv: true,
    })
}

fn density_value(a: &DensityArgs) -> Result<MCEstimate> {
    let ctx = DensityContext::new(a.spec, a.seed).with_normalizer_mc(a.normalizer_mc);
    let mut rng = Streams::new(a.seed).stream(StreamTag::Density, 0);
    let single = || -> Result<f64> {
        match a.x.as_slice() {
            [x] => Ok(*x),
            _ => Err(config_error("this density takes exactly one x")),
        }
    };
    match a.what {
        DensityWhat::G => g(a.t, single()?, &a.spec, a.mc, &mut rng),
        DensityWhat::H => h(a.t, single()?, &ctx, a.mc, &mut rng),
        DensityWhat::Product => h_product(a.t, &MassPartition::new(a.x.clone())?, &ctx, a.mc, &mut rng),
        DensityWhat::Hn => h_n(a.t, &a.x, &ctx, a.mc, &mut rng),
        DensityWhat::Marginal => size_biased_marginal_density(a.t, single()?, &ctx, a.mc, &mut rng),
    }
}

#[derive(Serialize)]
struct MartingaleOutput {
    spec: Spec,
    points: Vec<MartingalePoint>,
    /// Largest pairwise difference between times, in combined standard errors.
    max_pairwise_z: f64,
}

fn martingale_report(a: &MartingaleArgs) -> Result<MartingaleOutput> {
    let ctx = DensityContext::new(a.spec, a.seed).with_normalizer_mc(a.normalizer_mc);
    let points = martingale_check(&ctx, &a.t_list, a.grid, a.replicates, a.mc, &Streams::new(a.seed))?;
    let mut max_pairwise_z = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let se = p.estimate.stderr.hypot(q.estimate.stderr);
            let d = (p.estimate.value - q.estimate.value).abs();
            if se > 0.0 {
                max_pairwise_z = max_pairwise_z.max(d / se);
            }
        }
    }
    Ok(MartingaleOutput {
        spec: a.spec,
        points,
        max_pairwise_z,
    })
}

#[derive(Serialize)]
struct MarginalOutput {
    #[serde(flatten)]
    report: MarginalReport,
}

impl MarginalOutput {
    fn new(report: MarginalReport) -> Self {
        Self { report }
    }
}

#[derive(Serialize)]
struct PdeEntry {
    #[serde(flatten)]
    report: ResidualReport,
    pass: bool,
}

#[derive(Serialize)]
struct PdeOutput {
    spec: Spec,
    tol: f64,
    results: Vec<PdeEntry>,
    warning: Option<String>,
}

fn pde_report(a: &PdeArgs) -> Result<PdeOutput> {
    let streams = Streams::new(a.seed);
    let results = a
        .x_list
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = streams.stream(StreamTag::Pde, i as u64);
            let report = pde_residual(a.t, x, &a.spec, a.mc, a.tol, a.seed ^ (i as u64 + 1), &mut rng)?;
            Ok(PdeEntry {
                pass: report.passes(4.0, a.tol),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let warning = (!a.spec.has_finite_levy_measure())
        .then(|| "infinite Lévy measure: the equation's hypotheses are not established, results are exploratory".to_string());
    Ok(PdeOutput {
        spec: a.spec,
        tol: a.tol,
        results,
        warning,
    })
}

#[derive(Serialize)]
struct ClassifyOutput {
    spec: Spec,
    delta: f64,
    x_max: f64,
    tol: f64,
    class: EquivalenceClass,
    profile: Vec<(f64, f64)>,
}

fn classify_report(a: &ClassifyArgs) -> Result<ClassifyOutput> {
    Ok(ClassifyOutput {
        spec: a.spec,
        delta: a.delta,
        x_max: a.x_max,
        tol: a.tol,
        class: a.spec.classify_equivalence(a.delta, a.x_max, a.tol)?,
        profile: a.spec.equivalence_profile(a.delta, a.x_max)?,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    output: String,
    wall_time_seconds: f64,
}

/// Path of the manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_outputs(config: &ExperimentConfig, out: Option<&Path>, output: &Output, started: Instant) -> Result<()> {
    match out {
        None => {
            std::io::stdout().write_all(&output.bytes)?;
        }
        Some(path) => {
            std::fs::write(path, &output.bytes)?;
            let manifest = Manifest {
                config,
                version: VERSION,
                output: path.display().to_string(),
                wall_time_seconds: started.elapsed().as_secs_f64(),
            };
            let mut bytes = serde_json::to_vec_pretty(&manifest)?;
            bytes.push(b'\n');
            std::fs::write(manifest_path(path), bytes)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn report_error(kind: &str, message: String) {
    let body = serde_json::to_string(&ErrorReport { error: kind, message })
        .unwrap_or_else(|_| format!("{{\"error\":\"{kind}\"}}"));
    eprintln!("{body}");
}

/// Parses `args` (program name first) and runs the experiment; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", e.to_string().trim_end().to_string());
            return 2;
        }
    };
    let started = Instant::now();
    let (config, out) = match (&cli.config, cli.command) {
        (Some(path), None) => match ExperimentConfig::from_json_file(path) {
            Ok((c, o)) => (c, cli.out.or(o)),
            Err(e) => {
                report_error(e.kind(), e.to_string());
                return 1;
            }
        },
        (None, Some(c)) => (c, cli.out),
        (Some(_), Some(_)) => {
            report_error("usage", "give either a subcommand or --config, not both".into());
            return 2;
        }
        (None, None) => {
            report_error("usage", "a subcommand or --config <json> is required".into());
            return 2;
        }
    };
    let result = with_workers(cli.workers, || config.execute())
        .and_then(|r| r)
        .and_then(|output| write_outputs(&config, out.as_deref(), &output, started));
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.kind(), e.to_string());
            1
        }
    }
}
