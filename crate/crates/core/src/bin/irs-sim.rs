//! Command-line driver: single runs, sweeps and convergence traces.
//!
//! ```text
//! irs-sim --preset desk --drops 30 --out results/run.csv
//! irs-sim --sweep pmax_dbm=10,20,30,40,50 --methods proposed,nis --out results/pmax.csv
//! irs-sim --preset paper --methods proposed --drops 5 --trace --out results/conv.csv
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use irs_sim::experiment::{run_experiment, write_outputs, ExperimentSpec, OutputPaths, Sweep};
use irs_sim::optimizer::Method;
use irs_sim::scenario::{load_config, ScenarioConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// M = 40, N = 6, K = 4, 8x8 elements.
    Paper,
    /// M = 8, N = 4, K = 4, 4x4 elements.
    Desk,
}

#[derive(Debug, Parser)]
#[command(
    version,
    about = "Multi-IRS mmWave beamforming and surface-selection simulator"
)]
struct Args {
    /// JSON scenario file; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Comma-separated subset of proposed, wis, rps, nis.
    #[arg(long, value_delimiter = ',', default_value = "proposed,wis,rps,nis")]
    methods: Vec<Method>,
    /// Monte Carlo drops per sweep point.
    #[arg(long, default_value_t = 30)]
    drops: usize,
    /// Master seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep one axis: `pmax_dbm=...`, `elements_L=...` or `irs_count_N=...`.
    #[arg(long)]
    sweep: Option<Sweep>,
    /// Per-drop CSV; the summary and trace files are written next to it.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-iteration convergence traces.
    #[arg(long)]
    trace: bool,
}

fn run(args: Args) -> irs_sim::Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config(
            &std::fs::read_to_string(path)
                .map_err(|e| irs_sim::Error::Experiment(format!("{}: {e}", path.display())))?,
        )?,
        None => match args.preset {
            Preset::Paper => ScenarioConfig::paper(),
            Preset::Desk => ScenarioConfig::desk(),
        },
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let spec = ExperimentSpec {
        methods: args.methods,
        drops: args.drops,
        sweep: args.sweep,
        trace: args.trace,
        workers: args.workers,
        ..ExperimentSpec::new(config)
    };
    let output = run_experiment(&spec)?;
    let paths = OutputPaths::from_csv(&args.out);
    write_outputs(&output, &paths, spec.trace)?;

    println!(
        "{:<10} {:>10} {:>6} {:>6} {:>10} {:>10}",
        "method", "axis", "ok", "infeas", "mean", "std"
    );
    for g in &output.summary.groups {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let axis = g.axis_value.map_or("-".to_string(), |v| v.to_string());
        println!(
            "{:<10} {:>10} {:>6} {:>6} {:>10} {:>10}",
            g.method.name(),
            axis,
            g.feasible,
            g.infeasible,
            fmt(g.mean),
            fmt(g.std)
        );
    }
    println!(
        "wrote {} and {}",
        paths.csv.display(),
        paths.summary.display()
    );
    if spec.trace {
        println!("wrote {}", paths.trace.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
