use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use z2lab::config::{RunConfig, RunKind};
use z2lab::observables::{LoopKind, PlaneClass};
use z2lab::oracle::QuadratureSpec;
use z2lab::run::{self, RunOptions, RunStatus};
use z2lab::stats::BinSize;
use z2lab::Error;

#[derive(Parser)]
#[command(name = "z2lab", version, about = "Monte Carlo, exact quadrature and bounds for the Z2 gauge model with [-1,1] links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the gauge model and write loop, Creutz and plaquette tables.
    RunGauge(RunArgs),
    /// Sample the two-wall model and write correlator and effective-mass tables.
    RunTwowall(RunArgs),
    /// Tabulate the analytic bounds on a grid of (beta, omega, d).
    Bounds(BoundsArgs),
    /// Exact values by quadrature for the observables a config would measure.
    Oracle(OracleArgs),
    /// Check GKS I and II on every monomial up to a per-variable degree.
    GksScan(GksArgs),
    /// Post-process a finished run's checkpoint.
    Fit(FitArgs),
    /// Continue a run from its checkpoint.
    Resume(ResumeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop with a checkpoint once every chain has done this many sweeps.
    #[arg(long)]
    halt_after: Option<u64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    omega: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    dim: Vec<usize>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gauge,
    TwoWall,
}

impl From<Kind> for RunKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Gauge => RunKind::Gauge,
            Kind::TwoWall => RunKind::TwoWall,
        }
    }
}

#[derive(Args)]
struct QuadArgs {
    #[arg(long, default_value_t = 16)]
    nodes: usize,
    #[arg(long, default_value_t = 128)]
    max_nodes: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

impl QuadArgs {
    fn spec(&self) -> QuadratureSpec {
        QuadratureSpec { n_nodes: self.nodes, max_nodes: self.max_nodes, convergence_tol: self.tol, ..QuadratureSpec::default() }
    }
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "gauge")]
    kind: Kind,
    #[command(flatten)]
    quad: QuadArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GksArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "gauge")]
    kind: Kind,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args)]
struct FitArgs {
    #[command(subcommand)]
    what: FitKind,
}

#[derive(Clone, Copy, ValueEnum)]
enum Plane {
    Temporal,
    Spatial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loop {
    Wilson,
    Ising,
}

#[derive(Subcommand)]
enum FitKind {
    /// Fit -ln W = sigma R T + rho (R + T) + c over the listed loop sizes.
    AreaLaw {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "temporal")]
        plane: Plane,
        #[arg(long = "loop", value_enum, default_value = "wilson")]
        loop_kind: Loop,
        /// Comma-separated RxT sizes, e.g. 1x1,1x2,2x2.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<String>,
        #[arg(long)]
        bin_size: Option<usize>,
    },
    /// Effective masses of the axis-averaged correlator.
    EffectiveMass {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bin_size: Option<usize>,
    },
}

#[derive(Args)]
struct ResumeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Must describe the same trajectory as the checkpoint's config echo.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    halt_after: Option<u64>,
}

fn load(args: &RunArgs) -> z2lab::Result<RunConfig> {
    let mut c = RunConfig::from_path(&args.config)?;
    if let Some(s) = args.seed {
        c.run.seed = s;
    }
    if let Some(n) = args.chains {
        c.run.chains = n;
    }
    if let Some(o) = &args.out {
        c.run.output_dir = o.clone();
    }
    Ok(c)
}

fn emit(text: &str, out: Option<&Path>) -> z2lab::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn report(outcome: &run::RunOutcome) {
    match outcome.status {
        RunStatus::Completed => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        RunStatus::Halted { sweeps } => {
            println!("halted after {sweeps} sweeps; checkpoint {}", outcome.files[0].display());
        }
    }
}

fn bin(b: Option<usize>) -> BinSize {
    b.map(BinSize::Fixed).unwrap_or(BinSize::Auto)
}

fn parse_size(s: &str) -> z2lab::Result<(usize, usize)> {
    let bad = || Error::InvalidParams(format!("loop size {s:?} is not of the form RxT"));
    let (r, t) = s.split_once('x').ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, t.trim().parse().map_err(|_| bad())?))
}

fn execute(cli: Cli) -> z2lab::Result<()> {
    match cli.command {
        Command::RunGauge(a) => {
            let c = load(&a)?;
            report(&run::run_gauge(&c, &RunOptions { halt_after: a.halt_after })?);
        }
        Command::RunTwowall(a) => {
            let c = load(&a)?;
            report(&run::run_twowall(&c, &RunOptions { halt_after: a.halt_after })?);
        }
        Command::Bounds(a) => {
            let mut grid = Vec::new();
            for &b in &a.beta {
                for &w in &a.omega {
                    for &d in &a.dim {
                        grid.push((b, w, d));
                    }
                }
            }
            emit(&run::bounds_table(&grid)?, a.out.as_deref())?;
        }
        Command::Oracle(a) => {
            let c = RunConfig::from_path(&a.config)?;
            emit(&run::oracle_table(a.kind.into(), &c, &a.quad.spec())?, a.out.as_deref())?;
        }
        Command::GksScan(a) => {
            let c = RunConfig::from_path(&a.config)?;
            let r = run::gks_report(a.kind.into(), &c, a.degree, &a.quad.spec())?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            if !r.violations.is_empty() {
                return Err(Error::InvalidParams(format!("{} GKS violations", r.violations.len())));
            }
        }
        Command::Fit(FitArgs { what }) => match what {
            FitKind::AreaLaw { checkpoint, plane, loop_kind, sizes, bin_size } => {
                let cp = run::load_series(&checkpoint)?;
                let sizes = sizes.iter().map(|s| parse_size(s)).collect::<z2lab::Result<Vec<_>>>()?;
                let plane = match plane {
                    Plane::Temporal => PlaneClass::Temporal,
                    Plane::Spatial => PlaneClass::Spatial,
                };
                let kind = match loop_kind {
                    Loop::Wilson => LoopKind::Wilson,
                    Loop::Ising => LoopKind::Ising,
                };
                let fit = run::fit_area_law(&cp, plane, kind, &sizes, bin(bin_size))?;
                println!("{}", serde_json::to_string_pretty(&fit)?);
            }
            FitKind::EffectiveMass { checkpoint, bin_size } => {
                let cp = run::load_series(&checkpoint)?;
                println!("x,m_eff,err,status");
                for (x, m) in run::fit_effective_mass(&cp, bin(bin_size))?.into_iter().enumerate() {
                    match m {
                        Ok(e) => println!("{x},{},{},ok", e.mean, e.error),
                        Err(_) => println!("{x},,,undefined"),
                    }
                }
            }
        },
        Command::Resume(a) => {
            let mut c = a.config.as_deref().map(RunConfig::from_path).transpose()?;
            if let Some(o) = &a.out {
                let base = match c.take() {
                    Some(c) => c,
                    None => run::load_series(&a.checkpoint)?.config,
                };
                c = Some(RunConfig { run: z2lab::config::RunSection { output_dir: o.clone(), ..base.run.clone() }, ..base });
            }
            report(&run::resume(&a.checkpoint, c.as_ref(), &RunOptions { halt_after: a.halt_after })?);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Toml(_) => 1,
        Error::NotConverged { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
