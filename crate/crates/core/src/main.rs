use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crane_lab::scenario::{
    evaluate_metrics, load_grid, read_csv, run_scenario, sweep, write_csv, MetricsReport, ScenarioConfig, Trace,
};

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_ABORTED: u8 = 3;
const EXIT_USAGE: u8 = 1;

#[derive(Parser)]
#[command(name = "crane-lab", version, about = "Closed-loop knuckle boom crane simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "CRANE_LAB_OUT", default_value = "out")]
        out: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario over a parameter grid.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, env = "CRANE_LAB_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Compute metrics from a trace CSV.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn write_trace(trace: &Trace, dir: &Path) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(format!("{}.csv", trace.meta.scenario_id));
    let file = File::create(&path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    write_csv(trace, BufWriter::new(file)).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

fn exit_for(report: &MetricsReport) -> u8 {
    if report.aborted {
        EXIT_ABORTED
    } else if report.has_not_converged() {
        EXIT_NOT_CONVERGED
    } else {
        0
    }
}

fn simulate(scenario: &Path, out: &Path, seed: Option<u64>) -> Result<u8, String> {
    let mut cfg = ScenarioConfig::load(scenario).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let run = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let path = write_trace(&run.trace, out)?;
    eprintln!("wrote {}", path.display());
    if let Some(e) = &run.aborted {
        eprintln!("simulation aborted: {e}");
    }
    let report = evaluate_metrics(&run.trace);
    print!("{report}");
    Ok(exit_for(&report))
}

fn run_sweep(scenario: &Path, grid: &Path, out: &Path) -> Result<u8, String> {
    let text = std::fs::read_to_string(scenario).map_err(|e| format!("cannot read {}: {e}", scenario.display()))?;
    let template: toml::Value = toml::from_str(&text).map_err(|e| e.to_string())?;
    let grid = load_grid(grid).map_err(|e| e.to_string())?;
    let cells = sweep(&template, &grid).map_err(|e| e.to_string())?;
    let mut rows = vec![MetricsReport::HEADER.to_string()];
    let mut code = 0;
    for cell in &cells {
        match &cell.run {
            Ok(run) => {
                write_trace(&run.trace, out)?;
                let report = evaluate_metrics(&run.trace);
                rows.push(report.csv_row());
                code = code.max(exit_for(&report));
            }
            Err(e) => {
                eprintln!("cell {} failed: {e}", cell.id);
                code = EXIT_ABORTED;
            }
        }
    }
    let report = rows.join("\n") + "\n";
    let path = out.join("sweep_report.csv");
    std::fs::write(&path, &report).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    print!("{report}");
    Ok(code)
}

fn metrics(trace: &Path) -> Result<u8, String> {
    let file = File::open(trace).map_err(|e| format!("cannot open {}: {e}", trace.display()))?;
    let trace = read_csv(BufReader::new(file)).map_err(|e| e.to_string())?;
    let report = evaluate_metrics(&trace);
    print!("{report}");
    Ok(exit_for(&report))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate { scenario, out, seed } => simulate(scenario, out, *seed),
        Command::Sweep { scenario, grid, out } => run_sweep(scenario, grid, out),
        Command::Metrics { trace } => metrics(trace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
