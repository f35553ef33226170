use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Parser, Subcommand};

use pavflow_cli::commands::{self, SweepAxis};
use pavflow_cli::config::parse_onto;
use pavflow_cli::presets::{preset, PRESET_NAMES};

/// Mixed-fleet mode-switching traffic model.
///
/// Every command reads one scenario (a preset, optionally overridden
/// by a config file), writes CSV and JSON files under the output
/// directory, and prints a one-line summary. Runs are deterministic:
/// the same scenario and seed produce byte-identical files.
#[derive(Parser)]
#[command(name = "pavflow", version, after_help = preset_help())]
struct Cli {
    /// Scenario preset to start from (run with --help for the list).
    #[arg(long, global = true, default_value = "default")]
    preset: String,

    /// Scenario file; keys present override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for the stochastic commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario; write capacity, phase, and trajectory
    /// series.
    Simulate,
    /// Run the scenario against its matched memoryless baseline.
    Compare,
    /// Sweep one knob: gamma, initial-fraction, or rate-grid.
    Sweep {
        /// Which knob to vary.
        axis: String,
    },
    /// Price the paired scenarios under an empirical speed trace.
    Ngsim {
        /// CSV speed profile with a time_s,speed_mps header.
        profile: PathBuf,
    },
    /// Search a quadratic stability certificate over the HDV-leader
    /// rate grid.
    StabilityScan,
    /// Tabulate the lockout approximation error against the stage
    /// count.
    ErlangCheck,
    /// Cross-check the particle engines against the deterministic
    /// solution.
    OracleValidate,
    /// Solve the fixed point, probe uniqueness, and price it.
    Equilibrium,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = preset(&cli.preset)?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg = parse_onto(&text, cfg)?;
    }
    cfg.validate()?;
    let out = &cli.out;

    match cli.command {
        Command::Simulate => {
            let r = commands::simulate_cmd(&cfg, out)?;
            println!(
                "simulate {}: {} samples, steady C {:.4} veh/h/lane, final C {:.4}, \
                 converged at {} s",
                r.label, r.samples, r.steady_c_vphpl, r.final_c_vphpl, r.convergence_time_s
            );
        }
        Command::Compare => {
            let r = commands::compare_cmd(&cfg, out)?;
            println!(
                "compare {}: steady gap {:+.4} veh/h/lane, L2 {:.4} coupled vs {:.4} baseline",
                r.label, r.steady_gap, r.l2_dependent, r.l2_independent
            );
        }
        Command::Sweep { axis } => {
            let axis = SweepAxis::from_str(&axis)?;
            let r = commands::sweep_cmd(&cfg, axis, out)?;
            println!("sweep {} {}: {} rows", r.axis, r.label, r.rows);
        }
        Command::Ngsim { profile } => {
            let r = commands::ngsim_cmd(&cfg, &profile, out)?;
            println!(
                "ngsim {}: {} samples over [{}, {}] s, max |gap| {:.4} veh/h/lane",
                r.label, r.samples, r.profile_start_s, r.profile_end_s, r.max_abs_gap
            );
        }
        Command::StabilityScan => {
            let r = commands::stability_scan_cmd(&cfg, out)?;
            println!(
                "stability-scan {}: {}/{} cells certified, best margin {:.3e}, \
                 worst abscissa {:.3e}",
                r.label, r.feasible_cells, r.cells, r.best_margin, r.worst_abscissa
            );
        }
        Command::ErlangCheck => {
            let r = commands::erlang_check_cmd(&cfg, out)?;
            println!(
                "erlang-check {}: W1 threshold {} s crossed at k = {}, W1 = {:.4} s",
                r.label, r.threshold_s, r.crossing_k, r.w1_at_crossing_s
            );
        }
        Command::OracleValidate => {
            let r = commands::oracle_validate_cmd(&cfg, out, cli.seed)?;
            println!(
                "oracle-validate {}: {} mode, max gap to reference {:.5} \
                 (bound {:.5}, {}), engines differ by {:.5}",
                r.label,
                r.mode,
                r.max_ode_gap,
                r.fluctuation_bound,
                if r.within_bound { "within" } else { "EXCEEDED" },
                r.mode_max_gap
            );
        }
        Command::Equilibrium => {
            let r = commands::equilibrium_cmd(&cfg, out, cli.seed)?;
            println!(
                "equilibrium {}: sum_h {:.6}, steady C {:.4} veh/h/lane, {} fixed point(s)",
                r.label, r.sum_h, r.steady_c_vphpl, r.multistart.n_clusters
            );
        }
    }
    Ok(())
}

fn preset_help() -> String {
    format!("Presets:\n  {}", PRESET_NAMES.join("\n  "))
}

/// Bad input exits 1, numerical breakdown exits 2. Errors that never
/// reached the model (I/O, argument parsing) count as bad input.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<pavflow::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print to stdout and succeed; real
            // usage errors land on stderr and exit 1.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
