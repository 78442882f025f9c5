use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, LevelFilter};

use npns::audit::{audit_dir, DEFAULT_C_AUDIT};
use npns::mms::{verify_mms, MmsCase};
use npns::oracle1d::{compare_steady_2d, oracle_input, steady_oracle_1d};
use npns::run::{latest_checkpoint, resume_simulation};
use npns::sweep::{load_sweep, sweep};
use npns::{load_config, run_simulation, Result, SimError};

/// The only environment override: where results go.
const OUTPUT_ENV: &str = "NPNS_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "npns", version, about = "Nernst-Planck-Navier-Stokes electrodiffusion simulator")]
struct Cli {
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Simulate {
        config: PathBuf,
        /// Results directory, overriding the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Continue the run in the results directory from its newest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Manufactured-solution convergence study: poisson, np, stokes or coupled.
    VerifyMms {
        case: String,
        /// Cells per axis, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        resolutions: Vec<usize>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Steady 1D profiles between the x-walls of a two-species config.
    #[command(name = "oracle-1d")]
    Oracle1d {
        config: PathBuf,
        /// CSV output, default oracle.csv in the results directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also drive the 2D code to steady state on a strip and compare.
        #[arg(long)]
        compare: bool,
    },
    /// Run the cross product of parameter ranges.
    Sweep {
        config: PathBuf,
        /// Sweep directory, overriding the sweep file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Audit balances and monitors of a finished run.
    Audit {
        dir: PathBuf,
        /// Constant C of tol_audit = C (dt + h^2).
        #[arg(long, default_value_t = DEFAULT_C_AUDIT)]
        c_audit: f64,
    },
}

fn output_dir(flag: Option<PathBuf>, configured: &Path) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| configured.to_path_buf())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, output, resume } => {
            let spec = load_config(&config)?;
            let dir = output_dir(output, &spec.output_dir);
            let result = if resume {
                let cp = latest_checkpoint(&dir)?;
                info!("resuming from {}", cp.display());
                resume_simulation(&dir, &cp)?
            } else {
                run_simulation(&spec, Some(&dir))?
            };
            let s = &result.summary;
            println!(
                "{} steps, t = {:.6}, stop {}, min c {:.3e}, B {:.6e}, results in {}",
                s.steps,
                s.t,
                s.stop.as_str(),
                s.min_c,
                s.monitors[0],
                dir.display()
            );
        }
        Command::VerifyMms { case, resolutions, csv } => {
            let case: MmsCase = case.parse()?;
            let table = verify_mms(case, &resolutions)?;
            print!("{table}");
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv()).map_err(|source| SimError::Io { path, source })?;
            }
        }
        Command::Oracle1d { config, output, compare } => {
            let spec = load_config(&config)?;
            let sol = steady_oracle_1d(&oracle_input(&spec)?)?;
            let path = match output {
                Some(p) => p,
                None => {
                    let dir = output_dir(None, &spec.output_dir);
                    std::fs::create_dir_all(&dir).map_err(|source| SimError::Io {
                        path: dir.clone(),
                        source,
                    })?;
                    dir.join("oracle.csv")
                }
            };
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["x", "c1", "c2", "phi"])?;
            for (j, x) in sol.x.iter().enumerate() {
                let f = |v: f64| format!("{v:.16e}");
                w.write_record([f(*x), f(sol.c[0][j]), f(sol.c[1][j]), f(sol.phi[j])])?;
            }
            w.flush().map_err(|source| SimError::Io {
                path: path.clone(),
                source,
            })?;
            println!("oracle residual {:.3e}, {} Newton updates, written to {}", sol.residual, sol.trace.len(), path.display());
            if compare {
                let tol = if spec.steady_tol > 0.0 { spec.steady_tol } else { 1e-10 };
                let cmp = compare_steady_2d(&spec, &sol, 4, tol)?;
                println!(
                    "2D steady after {} steps: L_inf c1 {:.3e}, c2 {:.3e}, phi {:.3e}",
                    cmp.steps, cmp.linf[0], cmp.linf[1], cmp.linf[2]
                );
            }
        }
        Command::Sweep { config, output } => {
            let spec = load_sweep(&config)?;
            let root = output_dir(output, &spec.output_dir);
            let rows = sweep(&spec, &root)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} runs, {} failed, summary in {}", rows.len(), failed, root.join(npns::sweep::SWEEP_SUMMARY).display());
        }
        Command::Audit { dir, c_audit } => {
            let audit = audit_dir(&dir, c_audit)?;
            print!("{}", audit.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
