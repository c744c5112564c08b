mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use output::{sig, Format, Outputs};
use stopsum::em::{em_fit, EmConfig, PlanShape};
use stopsum::exit::*;
use stopsum::sampling::{st_summary, t_pmf, SamplingPlan, ScanRule};
use stopsum::sim::{sim_exit, sim_sampling, verify_tilting_identity, IdentityTarget, MeanEstimate};
use stopsum::MixedExpStep;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl From<stopsum::Error> for CliError {
    fn from(e: stopsum::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses a decimal, a fraction `num/den`, or `inf`.
fn number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let den = parse(den)?;
            if den == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            parse(num)? / den
        }
        None => parse(s)?,
    };
    if value.is_nan() {
        return Err(format!("not a number: {s:?}"));
    }
    Ok(value)
}

#[derive(Parser)]
#[command(name = "stopsum", version, about = "Exact distributions of stopping times and stopped sums")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exit-time pmf of the two-sided exponential walk.
    ExitPmf(ExitPmfArgs),
    /// Total defectives under the k-run (or k-of-m scan) switching rule.
    Sampling(SamplingArgs),
    /// EM estimate of the defect probability from observed switching times.
    Em(EmArgs),
    /// Seeded Monte Carlo.
    Sim {
        #[command(subcommand)]
        which: SimCommand,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    Exit(SimExitArgs),
    Sampling(SimSamplingArgs),
    /// Both sides of the tilting identity, simulated under the two measures.
    Identity {
        #[command(subcommand)]
        target: IdentityCommand,
    },
}

#[derive(Subcommand)]
enum IdentityCommand {
    Exit(IdentityExitArgs),
    Sampling(IdentitySamplingArgs),
}

#[derive(Args, Serialize, Clone, Copy)]
struct WalkArgs {
    /// Probability of an upward step.
    #[arg(long, value_parser = number)]
    p: f64,
    #[arg(long, value_parser = number)]
    theta1: f64,
    #[arg(long, value_parser = number)]
    theta2: f64,
    /// Lower barrier distance, or `inf`.
    #[arg(long, value_parser = number)]
    a: f64,
    #[arg(long, value_parser = number)]
    b: f64,
}

impl WalkArgs {
    fn model(&self) -> Result<ExitModel> {
        let step = MixedExpStep::new(self.p, self.theta1, self.theta2)?;
        Ok(if self.a == f64::INFINITY {
            ExitModel::one_sided(step, self.b)?
        } else {
            ExitModel::two_sided(step, self.a, self.b)?
        })
    }
}

#[derive(Args, Serialize, Clone, Copy)]
struct PlanArgs {
    /// Items per lot.
    #[arg(long)]
    n: u32,
    #[arg(long, value_parser = number)]
    p: f64,
    /// Acceptance number.
    #[arg(long)]
    c: u32,
    /// Run length.
    #[arg(long)]
    k: u32,
    /// Use the k-of-m scan rule with this window.
    #[arg(long)]
    scan: Option<u32>,
}

impl PlanArgs {
    fn plan(&self) -> Result<(SamplingPlan, Option<ScanRule>)> {
        let plan = SamplingPlan::new(self.n, self.p, self.c, self.k)?;
        let scan = self.scan.map(|m| ScanRule::new(self.k, m)).transpose()?;
        Ok((plan, scan))
    }
}

#[derive(Args, Serialize)]
struct ExitPmfArgs {
    #[command(flatten)]
    walk: WalkArgs,
    /// Largest m written; 0 prints the summary only.
    #[arg(long, default_value_t = 50)]
    mmax: usize,
    /// Truncation order; defaults to the larger of 256 and `4 * mmax`.
    #[arg(long)]
    order: Option<usize>,
    /// Write h(m), the pmf of T given an upward exit.
    #[arg(long)]
    conditional: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SamplingArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Largest m written; defaults to the truncation order used.
    #[arg(long)]
    mmax: Option<usize>,
    /// Percentile levels, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = number, default_value = "0.5")]
    levels: Vec<f64>,
    /// Starting truncation order; doubled until the levels are captured.
    #[arg(long, default_value_t = 256)]
    order: usize,
    /// Also write the pmf of T.
    #[arg(long)]
    t_pmf: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EmArgs {
    /// Observed switching times, one per line or comma separated.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    c: u32,
    #[arg(long)]
    k: u32,
    #[arg(long, value_parser = number, default_value = "0.5")]
    p0: f64,
    #[arg(long, value_parser = number, default_value = "1e-8")]
    epsilon: f64,
    #[arg(long, value_parser = number, default_value = "0.05")]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// JSON output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[arg(long, default_value_t = 100_000)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct SimExitArgs {
    #[command(flatten)]
    walk: WalkArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Step cap; 0 picks a default for one-sided walks with positive drift.
    #[arg(long, default_value_t = 0)]
    horizon: u64,
    #[arg(long, default_value_t = 50)]
    mmax: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimSamplingArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 200)]
    mmax: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct IdentityExitArgs {
    #[command(flatten)]
    walk: WalkArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 0)]
    horizon: u64,
    #[arg(long, value_parser = number, default_value = "1")]
    u: f64,
    /// Tilt: a number, `star` for the nonzero root of E(e^{wZ}) = 1, or
    /// `wu` for the root of u E(e^{wZ}) = 1.
    #[arg(long, default_value = "0")]
    w: String,
    /// JSON report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct IdentitySamplingArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = number, default_value = "1")]
    u: f64,
    /// Tilt on the defective count, `w = ln t`.
    #[arg(long, value_parser = number, default_value = "1")]
    t: f64,
    /// JSON report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn line(key: &str, value: impl std::fmt::Display) {
    println!("{key} = {value}");
}

fn estimate(key: &str, e: &MeanEstimate) {
    println!("{key} = {} (se {})", sig(e.mean), sig(e.se));
}

fn rows(values: &[f64], mmax: usize) -> Vec<(usize, f64)> {
    values.iter().copied().enumerate().take(mmax + 1).collect()
}

fn finish(outputs: Outputs) -> Result<()> {
    for path in outputs.write()? {
        line("wrote", path.display());
    }
    Ok(())
}

fn exit_pmf(args: &ExitPmfArgs) -> Result<()> {
    let model = args.walk.model()?;
    let order = args.order.unwrap_or_else(|| default_order(args.mmax).max(256)).max(args.mmax + 1);
    let (column, pmf) = match model.lower {
        LowerBarrier::Infinite => {
            line("P(T<inf)", sig(one_sided_prob_finite(&model.step, model.b)?));
            ("prob", one_sided_conditional_pmf(&model.step, model.b, order, Precision::Double)?)
        }
        LowerBarrier::Finite(_) => {
            line("P(S_T>=b)", sig(exit_up_probability(&model)?));
            let dist = exit_pgf_series(&model, order)?;
            line(&format!("mass(order {order})"), sig(dist.mass_total));
            let mut mean_order = order;
            let mean = loop {
                match expected_exit_time(&model, mean_order) {
                    Err(stopsum::Error::Truncation { suggested, .. }) if suggested <= 1 << 14 => mean_order = suggested,
                    other => break other?,
                }
            };
            line("E(T)", sig(mean.mean));
            if args.conditional {
                ("prob", exit_conditional_pgf_series(&model, order, Precision::Double)?)
            } else {
                ("prob", dist.pmf_t)
            }
        }
    };
    if model.lower == LowerBarrier::Infinite {
        line(&format!("conditional mass(order {order})"), sig(pmf.iter().sum()));
    }
    if args.mmax == 0 {
        return Ok(());
    }
    let table = rows(&pmf, args.mmax);
    line(&format!("mass(m<={})", args.mmax), sig(table.iter().map(|r| r.1).sum()));
    if let Some(out) = &args.out {
        let mut outputs = Outputs::new("exit-pmf", args, out.clone(), args.format);
        outputs.table("", column, table);
        finish(outputs)?;
    }
    Ok(())
}

fn sampling(args: &SamplingArgs) -> Result<()> {
    let (plan, scan) = args.plan.plan()?;
    let summary = st_summary(&plan, scan, &args.levels, args.order)?;
    let dist = &summary.distribution;
    line("E(S_T)", sig(summary.mean));
    for (level, m) in summary.levels.iter().zip(&summary.percentiles) {
        line(&format!("percentile({})", sig(*level)), m);
    }
    line("order", dist.order);
    line("captured", sig(dist.captured));
    if scan.is_none() {
        line("E(T)", sig(plan.expected_t()));
    }
    let Some(out) = &args.out else {
        return Ok(());
    };
    let mmax = args.mmax.unwrap_or(dist.order);
    let mut outputs = Outputs::new("sampling", args, out.clone(), args.format);
    outputs.field("mean", summary.mean);
    outputs.field("levels", &summary.levels);
    outputs.field("percentiles", &summary.percentiles);
    outputs.table("", "prob", rows(&dist.pmf, mmax));
    outputs.table("cdf", "cdf", rows(&dist.cdf, mmax));
    if args.t_pmf {
        outputs.table("t", "prob", rows(&t_pmf(&plan, scan, mmax)?, mmax));
    }
    finish(outputs)
}

fn read_taus(path: &PathBuf) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("bad observation {t:?} in {}", path.display()))))
        .collect()
}

fn em(args: &EmArgs) -> Result<()> {
    let taus = read_taus(&args.data)?;
    let mut config = EmConfig::new(PlanShape::new(args.n, args.c, args.k)?);
    config.p0 = args.p0;
    config.epsilon = args.epsilon;
    config.alpha = args.alpha;
    config.max_iter = args.max_iter;
    let fit = em_fit(&taus, &config)?;
    let se = fit.fisher.powf(-0.5);
    line("p_hat", sig(fit.p_hat));
    line("SE", sig(se));
    line("CI", format!("({}, {})", sig(fit.ci.0), sig(fit.ci.1)));
    line("iterations", fit.iterations);
    if let Some(out) = &args.out {
        let mut outputs = Outputs::new("em", args, out.clone(), Format::Json);
        if let serde_json::Value::Object(map) = serde_json::to_value(&fit).unwrap() {
            for (key, value) in map {
                outputs.field(&key, value);
            }
        }
        outputs.field("se", se);
        outputs.field("taus", &taus);
        finish(outputs)?;
    }
    Ok(())
}

fn sim_exit_cmd(args: &SimExitArgs) -> Result<()> {
    let model = args.walk.model()?;
    let sim = sim_exit(&model, args.run.runs, args.run.seed, args.horizon)?;
    line("runs", sim.n_runs);
    line("rng", &sim.rng);
    line("horizon", sim.truncation_horizon);
    line("censored", sig(sim.censored_fraction()));
    estimate("P(S_T>=b)", &sim.prob_up(model.b));
    estimate("E(T)", &sim.mean_t());
    estimate("E(S_T)", &sim.mean_s());
    if let Some(out) = &args.out {
        let mut outputs = Outputs::new("sim exit", args, out.clone(), args.format);
        outputs.table("", "prob", rows(&sim.pmf_t(args.mmax), args.mmax));
        finish(outputs)?;
    }
    Ok(())
}

fn sim_sampling_cmd(args: &SimSamplingArgs) -> Result<()> {
    let (plan, scan) = args.plan.plan()?;
    let sim = sim_sampling(&plan, scan, args.run.runs, args.run.seed)?;
    line("runs", sim.n_runs);
    line("rng", &sim.rng);
    let (t, s) = (sim.mean_t(), sim.mean_s());
    estimate("E(T)", &t);
    estimate("E(S_T)", &s);
    line("np E(T)", sig(plan.sample.mean() * t.mean));
    if let Some(out) = &args.out {
        let mut outputs = Outputs::new("sim sampling", args, out.clone(), args.format);
        outputs.table("", "prob", rows(&sim.pmf_s(args.mmax), args.mmax));
        finish(outputs)?;
    }
    Ok(())
}

fn tilt(model: &ExitModel, u: f64, w: &str) -> Result<f64> {
    match w {
        "star" => Ok(model.step.w_star()),
        "wu" => Ok(w_u_point(&model.step, u)?),
        other => number(other).map_err(CliError::Usage),
    }
}

fn identity(target: &IdentityTarget, u: f64, w: f64, run: &RunArgs, out: Option<&PathBuf>, args: impl Serialize) -> Result<()> {
    let report = verify_tilting_identity(target, u, w, run.runs, run.seed)?;
    line("u", sig(u));
    line("w", sig(w));
    line("rng", &report.rng);
    estimate("lhs", &report.lhs);
    estimate("rhs", &report.rhs);
    line("z", sig(report.z_score));
    estimate("wald", &report.wald);
    line("wald z", sig(report.wald_z));
    line("censored", report.censored);
    if let Some(out) = out {
        let mut outputs = Outputs::new("sim identity", args, out.clone(), Format::Json);
        outputs.field("report", &report);
        finish(outputs)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExitPmf(args) => exit_pmf(&args),
        Command::Sampling(args) => sampling(&args),
        Command::Em(args) => em(&args),
        Command::Sim { which } => match which {
            SimCommand::Exit(args) => sim_exit_cmd(&args),
            SimCommand::Sampling(args) => sim_sampling_cmd(&args),
            SimCommand::Identity { target } => match target {
                IdentityCommand::Exit(args) => {
                    let model = args.walk.model()?;
                    let w = tilt(&model, args.u, &args.w)?;
                    let target = IdentityTarget::Exit { model, horizon: args.horizon };
                    identity(&target, args.u, w, &args.run, args.out.as_ref(), &args)
                }
                IdentityCommand::Sampling(args) => {
                    let (plan, scan) = args.plan.plan()?;
                    if !(args.t > 0.0) {
                        return Err(CliError::Usage(format!("t must be positive, got {}", args.t)));
                    }
                    let target = IdentityTarget::Sampling { plan, scan };
                    identity(&target, args.u, args.t.ln(), &args.run, args.out.as_ref(), &args)
                }
            },
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(1)
        }
    }
}
