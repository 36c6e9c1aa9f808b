//! A small power sweep through the experiment driver, written to a
//! temporary directory as CSV and JSON.
//!
//! ```text
//! cargo run --release --example monte_carlo_sweep
//! ```

use irs_sim::experiment::{run_experiment, write_outputs, ExperimentSpec, OutputPaths};
use irs_sim::optimizer::Method;
use irs_sim::scenario::ScenarioConfig;

fn main() -> irs_sim::Result<()> {
    let mut config = ScenarioConfig::desk();
    config.noise_dbm = -130.0;
    let spec = ExperimentSpec {
        methods: vec![Method::Proposed, Method::Wis],
        drops: 3,
        sweep: Some("pmax_dbm=20,30,40".parse()?),
        ..ExperimentSpec::new(config)
    };
    let output = run_experiment(&spec)?;

    let dir = std::env::temp_dir().join("irs-sim-sweep");
    let paths = OutputPaths::from_csv(&dir.join("pmax.csv"));
    write_outputs(&output, &paths, false)?;

    for g in &output.summary.groups {
        println!(
            "{:8} P_max {:>4} dBm: {}/{} feasible, mean {}",
            g.method.name(),
            g.axis_value.unwrap_or(f64::NAN),
            g.feasible,
            g.drops,
            g.mean.map_or("-".into(), |m| format!("{m:.4} bps/Hz"))
        );
    }
    println!(
        "wrote {} and {}",
        paths.csv.display(),
        paths.summary.display()
    );
    Ok(())
}
