use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use quadsafe::{config, oracle, presets, run_scenario};

#[derive(Parser)]
#[command(name = "quadsafe", version, about = "Quadrotor CBF safety-filter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, events.csv and summary.txt.
    Run {
        /// Scenario file, or presets:NAME.
        scenario: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the step size, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Reserved; must be 0 if given.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in scenarios.
    Presets,
    /// Validate a scenario without running it.
    Check {
        /// Scenario file, or presets:NAME.
        scenario: String,
    },
    /// Finite-difference check of the barrier chains.
    Oracle {
        /// In-set states per chain.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// RNG seed for the sampled states.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Exit code 2 is reserved for a non-finite simulation state.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { scenario, out, dt, seed } => {
            if seed.is_some_and(|s| s != 0) {
                eprintln!("error: --seed: only 0 is supported (reserved for noise injection)");
                return ExitCode::from(1);
            }
            match run_scenario(&scenario, dt, &out) {
                Ok(summary) => {
                    print!("{}", summary.render_brief());
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Presets => {
            for p in presets::ALL {
                println!("presets:{:<22} {}", p.name, p.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Check { scenario } => match config::load(&scenario).and_then(|f| f.to_scenario()) {
            Ok(sc) => {
                println!(
                    "ok: {} steps, {} barrier(s), filters high={} low={}",
                    sc.step_count(),
                    sc.barriers.len(),
                    sc.filters.high,
                    sc.filters.low
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Oracle { samples, seed } => {
            let reports = oracle::run_all(samples, seed);
            let mut ok = true;
            for r in &reports {
                println!(
                    "{:<18} samples={} max_rel_err_H={:.3e} max_rel_err_top={:.3e} {}",
                    r.domain.name(),
                    r.samples,
                    r.max_lie_error(),
                    r.top_error,
                    if r.passed() { "ok" } else { "FAIL" }
                );
                ok &= r.passed();
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
