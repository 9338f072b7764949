//! `emt-sim`: run a netlist through the transient engine and emit CSV
//! waveforms.
//!
//! Exit codes: 0 on success, 1 for netlist or usage errors, 2 for solver
//! failures (the failure time is reported on stderr).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use emt_core::engine::{
    column_labels, first_step_system, run_transient, EngineError, SolverConfig, Waveforms,
};
use emt_core::netlist::{parse_netlist, validate, Circuit};

#[derive(Parser)]
#[command(name = "emt-sim", version, about = "Desk-scale electromagnetic-transient simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a netlist and write CSV waveforms.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Netlist file.
    input: PathBuf,

    /// Output CSV path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Override the initial time step (seconds).
    #[arg(long)]
    dt0: Option<f64>,

    /// Override the smallest allowed step (seconds).
    #[arg(long)]
    dt_min: Option<f64>,

    /// Override the largest allowed step (seconds).
    #[arg(long)]
    dt_max: Option<f64>,

    /// Override the LTE accept/reject tolerance.
    #[arg(long)]
    lte_tol: Option<f64>,

    /// Override the Newton-Raphson iteration cap.
    #[arg(long)]
    nr_max_iter: Option<u32>,

    /// Dump the first-step system in MatrixMarket coordinate format to
    /// PREFIX.Y.mtx and PREFIX.J.mtx before simulating.
    #[arg(long, value_name = "PREFIX")]
    dump_matrix: Option<PathBuf>,

    /// Restrict output to these columns (comma-separated; unknown and
    /// derived series both allowed).
    #[arg(long, value_delimiter = ',', value_name = "NAME,...")]
    probe: Option<Vec<String>>,

    /// Solve the DC operating point only and emit the single t=0 row.
    #[arg(long)]
    dc_only: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(CliError::Usage(msg)) => {
                eprintln!("emt-sim: {msg}");
                ExitCode::from(1)
            }
            Err(CliError::Solver(e)) => {
                eprintln!("emt-sim: {e}");
                ExitCode::from(2)
            }
        },
    }
}

enum CliError {
    /// Netlist, argument or I/O problems: exit 1.
    Usage(String),
    /// Engine failures: exit 2.
    Solver(EngineError),
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> CliError {
        match e {
            EngineError::Invalid(_) => CliError::Usage(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.input.display())))?;
    let circuit =
        parse_netlist(&text).map_err(|e| CliError::Usage(format!("{}: {e}", args.input.display())))?;
    if let Err(errors) = validate(&circuit) {
        let joined = errors
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("\n  ");
        return Err(CliError::Usage(format!(
            "{}: invalid circuit:\n  {joined}",
            args.input.display()
        )));
    }

    let cfg = build_config(&circuit, args)?;

    // Probe names must resolve before any solving starts.
    let labels = column_labels(&circuit)?;
    let selected: Vec<String> = match &args.probe {
        Some(probes) => {
            for name in probes {
                if !labels.iter().any(|l| l == name) {
                    return Err(CliError::Usage(format!(
                        "unknown probe '{name}'; available columns: {}",
                        labels.join(", ")
                    )));
                }
            }
            probes.clone()
        }
        // Default output is the unknown vector; derived series are
        // opt-in through --probe.
        None => {
            let unknowns = count_unknowns(&circuit)?;
            labels[..unknowns].to_vec()
        }
    };

    if let Some(prefix) = &args.dump_matrix {
        dump_matrix_market(&circuit, &cfg, prefix)?;
    }

    let waveforms = run_transient(&circuit, &cfg)?;
    for w in &waveforms.warnings {
        eprintln!("emt-sim: warning at t={}s: {}", w.time, w.message);
    }

    let csv = render_csv(&waveforms, &selected);
    match &args.output {
        Some(path) => fs::write(path, csv)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => {
            io::stdout()
                .write_all(csv.as_bytes())
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    Ok(())
}

fn build_config(circuit: &Circuit, args: &RunArgs) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::from_tran(&circuit.tran);
    let positive = |name: &str, v: f64| -> Result<f64, CliError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Usage(format!("--{name} must be positive")))
        }
    };
    if let Some(v) = args.dt0 {
        cfg.dt0 = positive("dt0", v)?;
    }
    if let Some(v) = args.dt_min {
        cfg.dt_min = positive("dt-min", v)?;
    }
    if let Some(v) = args.dt_max {
        cfg.dt_max = positive("dt-max", v)?;
    }
    if let Some(v) = args.lte_tol {
        cfg.lte_tol = positive("lte-tol", v)?;
    }
    if let Some(v) = args.nr_max_iter {
        if v < 2 {
            return Err(CliError::Usage("--nr-max-iter must be at least 2".into()));
        }
        cfg.nr_max_iter = v;
    }
    if args.dc_only {
        cfg.t_stop = 0.0;
    }
    Ok(cfg)
}

fn count_unknowns(circuit: &Circuit) -> Result<usize, CliError> {
    Ok(emt_core::mna::build_index(circuit).total())
}

/// CSV with a `time` column plus the selected series. Floats print in
/// Rust's shortest round-trip form: locale-independent, `.` decimal
/// separator, exact to re-parse.
fn render_csv(waveforms: &Waveforms, selected: &[String]) -> String {
    let mut out = String::new();
    out.push_str("time");
    for name in selected {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let columns: Vec<&[f64]> = selected
        .iter()
        .map(|name| waveforms.column(name).expect("validated probe"))
        .collect();
    for row in 0..waveforms.rows() {
        out.push_str(&format!("{}", waveforms.times[row]));
        for col in &columns {
            out.push(',');
            out.push_str(&format!("{}", col[row]));
        }
        out.push('\n');
    }
    out
}

fn dump_matrix_market(
    circuit: &Circuit,
    cfg: &SolverConfig,
    prefix: &Path,
) -> Result<(), CliError> {
    let (y, j, _labels) = first_step_system(circuit, cfg)?;
    let entries: Vec<(usize, usize, f64)> = y.entries().collect();
    let mut ym = String::new();
    ym.push_str("%%MatrixMarket matrix coordinate real general\n");
    ym.push_str("% first-step MNA system matrix Y\n");
    ym.push_str(&format!("{} {} {}\n", y.dim(), y.dim(), entries.len()));
    for (r, c, v) in entries {
        ym.push_str(&format!("{} {} {v}\n", r + 1, c + 1));
    }
    let mut jm = String::new();
    jm.push_str("%%MatrixMarket matrix array real general\n");
    jm.push_str("% first-step MNA source vector J\n");
    jm.push_str(&format!("{} 1\n", j.len()));
    for v in &j {
        jm.push_str(&format!("{v}\n"));
    }
    let y_path = path_with_suffix(prefix, ".Y.mtx");
    let j_path = path_with_suffix(prefix, ".J.mtx");
    fs::write(&y_path, ym).map_err(|e| CliError::Usage(format!("{}: {e}", y_path.display())))?;
    fs::write(&j_path, jm).map_err(|e| CliError::Usage(format!("{}: {e}", j_path.display())))?;
    Ok(())
}

fn path_with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}
