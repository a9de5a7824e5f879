//! Command-line front end: run scenarios, dump kernel sets, run convergence
//! studies.
//!
//! Exit codes: 0 success, 1 configuration error, 2 simulation abort
//! (diagnostics still written), 3 non-monotone convergence distances
//! (report still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lag2ch::scenario::{
    converge_scenario, dump_greens, fmt_f64, load_scenario, parse_coeff, run_scenario,
};
use lag2ch::timeint::SimOutcome;
use lag2ch::{grid::Grid, Error, MAX_KERNEL_N};

#[derive(Parser)]
#[command(
    name = "lag2ch",
    about = "Lagrangian semi-discrete two-component Camassa-Holm solver"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write CSV artifacts.
    Run {
        /// Scenario JSON path.
        file: PathBuf,
    },
    /// Build the kernel set for a coefficient and dump it as CSV.
    Greens {
        /// Coefficient spec: constant:<v>, table:<path>, or fig3.
        #[arg(long)]
        coeff: String,
        /// Grid spacing (default 0.2 for fig3).
        #[arg(long)]
        dxi: Option<f64>,
        /// Cell count (default 41 for fig3).
        #[arg(long)]
        n: Option<usize>,
        /// Left endpoint (default centers the window).
        #[arg(long)]
        xi0: Option<f64>,
        /// Output CSV path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Self-convergence study across grid refinements.
    Converge {
        /// Scenario JSON path (coarsest level).
        file: PathBuf,
        /// Number of refinement levels (>= 3).
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("LAG2CH_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { file } => cmd_run(&file),
        Cmd::Greens {
            coeff,
            dxi,
            n,
            xi0,
            out,
        } => cmd_greens(&coeff, dxi, n, xi0, &out),
        Cmd::Converge { file, levels, out } => cmd_converge(&file, levels, out.as_deref()),
    }
}

fn config_error(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn cmd_run(file: &std::path::Path) -> ExitCode {
    let cfg = match load_scenario(file) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    match run_scenario(&cfg) {
        Ok(summary) => {
            for p in &summary.written {
                println!("wrote {}", p.display());
            }
            match summary.outcome {
                SimOutcome::Completed => ExitCode::SUCCESS,
                SimOutcome::Aborted { reason, t } => {
                    eprintln!("simulation aborted at t = {t}: {reason}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e @ (Error::Config(_) | Error::Json(_) | Error::InvalidGrid(_))) => config_error(&e),
        Err(e @ (Error::WindowTooSmall(_) | Error::InvalidInit(_))) => config_error(&e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_greens(
    coeff: &str,
    dxi: Option<f64>,
    n: Option<usize>,
    xi0: Option<f64>,
    out: &std::path::Path,
) -> ExitCode {
    let is_preset = coeff == "fig3";
    let dxi = dxi.unwrap_or(if is_preset { 0.2 } else { 1.0 });
    let n = n.unwrap_or(if is_preset { 41 } else { 64 });
    if n > MAX_KERNEL_N {
        return config_error(&Error::Config(format!(
            "n = {n} exceeds the kernel cap {MAX_KERNEL_N}"
        )));
    }
    let xi0 = xi0.unwrap_or(-(n as f64 - 1.0) * dxi / 2.0);
    let grid = match Grid::new(n, dxi, xi0) {
        Ok(g) => g,
        Err(e) => return config_error(&e),
    };
    let a = match parse_coeff(coeff, &grid) {
        Ok(a) => a,
        Err(e) => return config_error(&e),
    };
    match dump_greens(&grid, &a, out) {
        Ok(residual) => {
            println!(
                "wrote {} (identity residual max = {})",
                out.display(),
                fmt_f64(residual)
            );
            ExitCode::SUCCESS
        }
        Err(e) => config_error(&e),
    }
}

fn cmd_converge(file: &std::path::Path, levels: usize, out: Option<&std::path::Path>) -> ExitCode {
    if levels < 3 {
        return config_error(&Error::Config(format!("need >= 3 levels, got {levels}")));
    }
    let cfg = match load_scenario(file) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    let report = match converge_scenario(&cfg, levels) {
        Ok(r) => r,
        Err(e) => return config_error(&e),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &json) {
                return config_error(&Error::Io(e));
            }
            println!("wrote {}", p.display());
        }
        None => println!("{json}"),
    }
    if report.monotone {
        ExitCode::SUCCESS
    } else {
        eprintln!("convergence distances are not monotone");
        ExitCode::from(3)
    }
}
