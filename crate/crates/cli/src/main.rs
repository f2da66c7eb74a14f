use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgp_cli::{
    cmd_constants, cmd_render, cmd_rp, cmd_solve, cmd_sweep, CliResult, FieldChoice, Overrides,
    SweepOverrides,
};

#[derive(Parser)]
#[command(
    name = "sgp",
    version,
    about = "p-Laplacian systems on the Sierpinski gasket"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    starts: Option<usize>,
    /// Residual tolerance for the solver and the certificate.
    #[arg(long)]
    tol: Option<f64>,
    /// Use this embedding constant instead of estimating it.
    #[arg(long)]
    k_override: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            level: self.level,
            starts: self.starts,
            tol: self.tol,
            k_override: self.k_override,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Field {
    U,
    V,
}

#[derive(Subcommand)]
enum Command {
    /// Solve both branches, certify, and write tables, renders and the certificate.
    Solve(RunArgs),
    /// Estimate the renormalization factor r_p.
    Rp {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 7)]
        max_level: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Print K, kappa, kappa0, d0, coefficient norms and region membership.
    Constants(RunArgs),
    /// Solve and certify over a (lambda, gamma) grid; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Lambda range as LO,HI.
        #[arg(long, value_parser = parse_range)]
        lambda_range: Option<[f64; 2]>,
        /// Gamma range as LO,HI.
        #[arg(long, value_parser = parse_range)]
        gamma_range: Option<[f64; 2]>,
        /// Points per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Grid points solved concurrently.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render one component of a solution table as SVG.
    Render {
        solution: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value = "u")]
        field: Field,
    },
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([num(lo)?, num(hi)?])
}

fn run(cli: Cli) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Solve(a) => cmd_solve(a.config.as_deref(), &a.overrides(), &mut out).map(drop),
        Command::Rp { p, max_level, tol } => cmd_rp(p, max_level, tol, &mut out).map(drop),
        Command::Constants(a) => {
            cmd_constants(a.config.as_deref(), &a.overrides(), &mut out).map(drop)
        }
        Command::Sweep {
            run,
            lambda_range,
            gamma_range,
            grid,
            workers,
        } => {
            let sweep = SweepOverrides {
                lambda: lambda_range,
                gamma: gamma_range,
                points: grid,
                workers,
            };
            cmd_sweep(run.config.as_deref(), &run.overrides(), &sweep, &mut out).map(drop)
        }
        Command::Render {
            solution,
            output,
            field,
        } => {
            let f = match field {
                Field::U => FieldChoice::U,
                Field::V => FieldChoice::V,
            };
            cmd_render(&solution, &output, f, &mut out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
