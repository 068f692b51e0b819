//! `wavedisp`: dispersion diagrams, group velocities, branch-point traces
//! and transient signals for a three-layer waveguide.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "wavedisp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Serialize)]
pub struct Common {
    /// Layer stack as TOML (`preset = "reference"` or H1..H3, c1..c3, rho1..rho3).
    /// Defaults to the reference stack.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "WAVEDISP_THREADS", default_value_t = 0)]
    #[serde(skip)]
    pub threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Continue branches along Im omega = const and label them.
    Diagram(DiagramArgs),
    /// Group velocities on the real axis by finite differences and by the bilinear identity.
    Gv(GvArgs),
    /// Trace branch points from small linking parameters to the physical waveguide.
    Trace(TraceArgs),
    /// Synthesise the transient field at distance L.
    Synthesize(SynthArgs),
}

#[derive(Args, Serialize)]
pub struct DiagramArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.0)]
    pub im_omega: f64,
    /// Largest Re W = (Re omega)^2 on the line.
    #[arg(long, default_value_t = 900.0)]
    pub wmax: f64,
    #[arg(long, default_value_t = 19)]
    pub branches: usize,
    /// Node spacing in omega.
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// Height on the imaginary axis where branches are seeded.
    #[arg(long, default_value_t = 20.0)]
    pub im0: f64,
}

#[derive(Args, Serialize)]
pub struct GvArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 900.0)]
    pub wmax: f64,
    #[arg(long, default_value_t = 19)]
    pub branches: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 20.0)]
    pub im0: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Lower,
    Upper,
    Diagonal,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Squared,
    Printed,
}

#[derive(Args, Serialize)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Branch point `mu,nu,m,n`; repeat for several.
    #[arg(long = "id", required = true, value_parser = parse_id)]
    pub ids: Vec<[usize; 4]>,
    /// Trace the conjugate member as well.
    #[arg(long)]
    pub both_signs: bool,
    #[arg(long, default_value_t = 0.01)]
    pub eps0: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub end: f64,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    /// Path in the (eps1, eps2) plane; defaults by layer pair.
    #[arg(long, value_enum)]
    pub shape: Option<Shape>,
    #[arg(long, value_enum, default_value_t = Factor::Squared)]
    pub factor: Factor,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum ContourName {
    A,
    B,
    C,
    Custom,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = ContourName::A)]
    pub contour: ContourName,
    /// Height of a custom contour.
    #[arg(long, default_value_t = 1.0)]
    pub rise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub band_lo: f64,
    #[arg(long, default_value_t = 30.0)]
    pub band_hi: f64,
    /// `all`, `type1`, `type2`, `type3`, `type23` or a list of branch ids like `2,3,5`.
    #[arg(long, default_value = "all")]
    pub subset: String,
    /// Distance from the source.
    #[arg(long = "L", alias = "distance", default_value_t = 10.0)]
    pub distance: f64,
    /// Source and receiver depth; `top` is y = H3.
    #[arg(long, default_value = "top")]
    pub y0: String,
    #[arg(long, default_value_t = 15.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 19)]
    pub branches: usize,
    #[arg(long, default_value_t = 20.0)]
    pub im0: f64,
    /// Also write the all-mode real-axis signal and the paired difference.
    #[arg(long)]
    pub compare: bool,
    /// Reject the run if a selected branch's integrand exceeds this multiple
    /// of its real-axis peak anywhere on the contour.
    #[arg(long)]
    pub growth_factor: Option<f64>,
    /// Time window `t0,t1` over which the relative RMS against the real-axis
    /// signal is reported; repeat for several. Defaults to the whole grid.
    #[arg(long = "window", value_parser = parse_window, requires = "compare")]
    pub windows: Vec<(f64, f64)>,
}

fn parse_id(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected four comma-separated indices mu,nu,m,n".to_string())
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected t0,t1")?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    let (a, b) = (parse(a)?, parse(b)?);
    if a < b {
        Ok((a, b))
    } else {
        Err("window needs t0 < t1".into())
    }
}

/// Bad input that is caught by the front end rather than the library.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<wavedisp::Error>() {
        Some(le) if le.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Diagram(a) => a.common.threads,
        Command::Gv(a) => a.common.threads,
        Command::Trace(a) => a.common.threads,
        Command::Synthesize(a) => a.common.threads,
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    let res = match &cli.command {
        Command::Diagram(a) => commands::diagram(a),
        Command::Gv(a) => commands::gv(a),
        Command::Trace(a) => commands::trace(a),
        Command::Synthesize(a) => commands::synthesize(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
