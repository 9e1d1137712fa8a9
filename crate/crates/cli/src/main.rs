use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bricklayer::curve::{build_trace, scale_trace, Window};
use bricklayer::experiment::{run_experiment, Experiment, ExperimentConfig, DEFAULT_SEED};
use bricklayer::format::{brick_table, curve_table, profile_table, Table};
use bricklayer::scaling::{default_eps, level_grid, local_time_profile, step_at_time, Estimator};
use bricklayer::walk::{discrete_brick_trace, simulate_walk};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Longest table written when no stride is given.
const MAX_DEFAULT_ROWS: usize = 100_000;

#[derive(Parser)]
#[command(name = "bricklayer", version, about = "Simulate the random bricklayer and verify its limit laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lay blocks with a simple random walk and write rows (k, site, height).
    Walk {
        /// Number of steps; the table has one more row.
        #[arg(long, default_value_t = 10_000)]
        n_steps: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Write the rescaled bricklayer curve as rows (t, x, h).
    Curve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Occupation)]
        estimator: EstimatorArg,
        /// Sideways stretch of the curve.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        c: f64,
        /// Upward stretch of the curve.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        d: f64,
        /// Keep every stride-th point; defaults to at most 100000 rows.
        #[arg(long)]
        stride: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Write the local-time profile y -> l(y, t) on an even level grid.
    Profile {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Band)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        y_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        y_max: f64,
        #[arg(long, default_value_t = 101)]
        levels: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Run a verification experiment and write its JSON report.
    ///
    /// Exits 0 on pass and 1 on a failed verdict.
    Verify {
        /// area, density, reversal, levy, signed, knight or coverage.
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
        /// Replicates (walks or samples per side); each experiment has its own default.
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 0.001)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        c: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        d: f64,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        x_lo: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        x_hi: f64,
        #[arg(long, default_value_t = 0.5)]
        h_hi: f64,
        /// Coverage cell size.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Coverage step budget per walk.
        #[arg(long, default_value_t = 100_000_000)]
        budget: u64,
        /// Write the report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Diffusive scale: one time unit is n steps, one space unit sqrt(n) sites.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    /// Time horizon; the walk runs ceil(n t) steps unless --n-steps is set.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long)]
    n_steps: Option<usize>,
    /// Band half-width; defaults to n^(-1/4).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

impl RunArgs {
    fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("--n must be at least 1".into());
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(format!("--t must be finite and nonnegative, got {}", self.t));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        self.n_steps.unwrap_or_else(|| step_at_time(self.n, self.t) as usize)
    }

    fn estimator(&self, tag: EstimatorArg) -> Estimator {
        match tag {
            EstimatorArg::Band => Estimator::Band { eps: self.eps.unwrap_or_else(|| default_eps(self.n)) },
            EstimatorArg::Occupation => Estimator::Occupation,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Write here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Band,
    Occupation,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: bricklayer::Error| e.to_string())
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>, String> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| format!("cannot write {}: {e}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(table: &Table, out: &Output) -> Result<(), String> {
    let mut w = sink(out.output.as_ref())?;
    match out.format {
        Format::Csv => table.write_csv(&mut w),
        Format::Json => table.write_json(&mut w),
    }
    .map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Walk { n_steps, seed, out } => {
            let trace = discrete_brick_trace(&simulate_walk(n_steps, seed));
            emit(&brick_table(&trace), &out)?;
        }
        Command::Curve { run, estimator, c, d, stride, out } => {
            run.validate()?;
            let steps = run.steps();
            let stride = stride.unwrap_or_else(|| (steps + 1).div_ceil(MAX_DEFAULT_ROWS).max(1));
            let walk = simulate_walk(steps, run.seed);
            let trace = build_trace(&walk, run.n, run.estimator(estimator), stride).map_err(|e| e.to_string())?;
            let trace = scale_trace(&trace, c, d).map_err(|e| e.to_string())?;
            emit(&curve_table(&trace), &out)?;
        }
        Command::Profile { run, estimator, y_min, y_max, levels, out } => {
            run.validate()?;
            let walk = simulate_walk(run.steps(), run.seed);
            let grid = level_grid(y_min, y_max, levels).map_err(|e| e.to_string())?;
            let profile =
                local_time_profile(&walk, run.n, run.t, &grid, run.estimator(estimator)).map_err(|e| e.to_string())?;
            emit(&profile_table(&profile), &out)?;
        }
        Command::Verify {
            experiment,
            replicates,
            n,
            t,
            eps,
            seed,
            alpha,
            c,
            d,
            x_lo,
            x_hi,
            h_hi,
            delta,
            budget,
            output,
        } => {
            let cfg = ExperimentConfig {
                replicates,
                n,
                t,
                eps,
                seed,
                alpha,
                c,
                d,
                window: Window { x_lo, x_hi, h_hi },
                delta,
                step_budget: budget,
                ..ExperimentConfig::new(experiment)
            };
            let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
            let text = report.to_json().map_err(|e| e.to_string())?;
            let mut w = sink(output.as_ref())?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| e.to_string())?;
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
