use std::path::PathBuf;
use std::process::ExitCode;

use adhesion_cli::export::fmt_f64;
use adhesion_cli::{scenario_schema, simulate, sweep, verify, CliError, Options, Scenario};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adhesion", version, about = "Sticky-particle simulation and verification")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "ADHESION_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export cluster states, turbulence data and sample trajectories.
    Simulate(RunArgs),
    /// Run the configured checks and write a report.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Allow test-only perturbations of the flow.
        #[arg(long, hide = true)]
        enable_fault_injection: bool,
        /// Add this drift rate to every block velocity before checking.
        #[arg(long, hide = true, requires = "enable_fault_injection", allow_hyphen_values = true)]
        inject_velocity_bias: Option<f64>,
    },
    /// Tabulate turbulent widths and Burgers distance over particle counts.
    Sweep(RunArgs),
    /// Print the JSON schema of scenario files.
    Schema,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed; overrides `run.samples.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self, velocity_bias: Option<f64>) -> Result<(Scenario, Options), CliError> {
        let scenario = Scenario::load(&self.scenario)?;
        let opts = Options {
            out: self.out.clone(),
            seed: self.seed,
            velocity_bias,
        };
        Ok((scenario, opts))
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {k} threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(args) => {
            let (scenario, opts) = args.load(None)?;
            let outcome = simulate(&scenario, &opts)?;
            println!("wrote {} files", outcome.manifest.files.len());
            Ok(0)
        }
        Command::Verify {
            run,
            inject_velocity_bias,
            ..
        } => {
            let (scenario, opts) = run.load(inject_velocity_bias)?;
            let outcome = verify(&scenario, &opts)?;
            for r in &outcome.reports {
                let status = if r.pass { "PASS" } else { "FAIL" };
                println!(
                    "{status} {} residual={} tolerance={}",
                    r.name,
                    fmt_f64(r.residual),
                    fmt_f64(r.tolerance)
                );
            }
            Ok(outcome.exit_code())
        }
        Command::Sweep(args) => {
            let (scenario, opts) = args.load(None)?;
            let (rows, _) = sweep(&scenario, &opts)?;
            for r in rows {
                println!("n={} max_width={}", r.n, fmt_f64(r.max_width));
            }
            Ok(0)
        }
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&scenario_schema()).expect("schema prints"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
