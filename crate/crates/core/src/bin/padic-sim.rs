use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use padic_alloy::experiment::{cmd_compare, cmd_stability, cmd_sweep, cmd_threshold, cmd_verify, ExperimentConfig, Report};
use padic_alloy::threshold::Scheme;
use padic_alloy::{Error, ScalarMode};

/// Coded matrix multiplication experiments. Writes CSV to stdout or --out.
///
/// Exit status: 0 success, 1 a verify check failed, 2 invalid config.
#[derive(Parser)]
#[command(name = "padic-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Typical recovery threshold per scheme.
    Threshold(Overrides),
    /// Per-trial completion at equal worker counts and at minimum + delta.
    Compare(Overrides),
    /// Real-mode decode error of the random code against EP.
    Stability(Overrides),
    /// Invariant suite; exits 1 if any check fails.
    Verify(Overrides),
    /// Global-code failure probability at a fraction of capacity.
    Sweep(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: global-padic, alloy-strassen, ep.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    #[arg(long)]
    x: Option<usize>,
    #[arg(long)]
    y: Option<usize>,
    #[arg(long)]
    z: Option<usize>,
    /// Field: a prime below 2^32, or `real`.
    #[arg(long)]
    q: Option<ScalarMode>,
    /// Worker fault probability.
    #[arg(long)]
    pf: Option<f64>,
    /// Target failure probability for `threshold`.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shared worker count for `compare`.
    #[arg(long)]
    workers: Option<usize>,
    /// Extra workers over the minimum for `compare`.
    #[arg(long)]
    delta: Option<usize>,
    /// Block size P,S,Q.
    #[arg(long, value_delimiter = ',')]
    block: Option<Vec<usize>>,
    /// Rate as a fraction of capacity for `sweep`.
    #[arg(long)]
    rate_fraction: Option<f64>,
    /// Sweep grid sides; size `s` means an s x s grid.
    #[arg(long, value_delimiter = ',')]
    sides: Option<Vec<usize>>,
    /// Decomposition JSON for `verify` to check as well.
    #[arg(long)]
    decomposition: Option<PathBuf>,
}

impl Overrides {
    fn resolve(self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scheme {
            c.schemes = s;
        }
        if let Some(x) = self.x {
            c.shape.0 = x;
        }
        if let Some(y) = self.y {
            c.shape.1 = y;
        }
        if let Some(z) = self.z {
            c.shape.2 = z;
        }
        if let Some(q) = self.q {
            c.field = q;
        }
        if let Some(pf) = self.pf {
            c.p_f = pf;
        }
        if let Some(eps) = self.eps {
            c.epsilon = eps;
        }
        if self.trials.is_some() {
            c.trials = self.trials;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if let Some(d) = self.delta {
            c.delta = d;
        }
        if let Some(b) = self.block {
            let [p, s, q] = b[..] else {
                return Err(Error::InvalidParameter(format!("--block takes P,S,Q, got {} values", b.len())));
            };
            c.block = Some((p, s, q));
        }
        if let Some(r) = self.rate_fraction {
            c.rate_fraction = r;
        }
        if let Some(sides) = self.sides {
            c.sizes = sides.into_iter().map(|s| (s, s)).collect();
        }
        if self.decomposition.is_some() {
            c.decomposition = self.decomposition;
        }
        Ok(c)
    }
}

fn run(command: Command) -> Result<Report, Error> {
    let (overrides, f): (Overrides, fn(&ExperimentConfig) -> Result<Report, Error>) = match command {
        Command::Threshold(o) => (o, cmd_threshold),
        Command::Compare(o) => (o, cmd_compare),
        Command::Stability(o) => (o, cmd_stability),
        Command::Verify(o) => (o, cmd_verify),
        Command::Sweep(o) => (o, cmd_sweep),
    };
    let config = overrides.resolve()?;
    let report = f(&config)?;
    match &config.out {
        Some(path) => std::fs::write(path, &report.csv)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?,
        None => print!("{}", report.csv),
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(report) if report.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("padic-sim: invariant check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("padic-sim: {e}");
            ExitCode::from(2)
        }
    }
}
