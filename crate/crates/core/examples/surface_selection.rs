//! Enumerates every surface-to-user assignment for one state and compares
//! the best one with the nearest-geometry rule.
//!
//! ```text
//! cargo run --release --example surface_selection
//! ```

use irs_sim::optimizer::{initial_state, DropInstance, Method, OptimOptions};
use irs_sim::scenario::{drop_seed, ScenarioConfig};
use irs_sim::selection::{
    best_assignment, enumerate_best_assignment, AssignmentScorer, Ranking, SelectionOptions,
};

fn main() -> irs_sim::Result<()> {
    let mut config = ScenarioConfig::desk();
    config.noise_dbm = -130.0;
    let instance = DropInstance::generate(&config, drop_seed(config.seed, 1))?;
    let state = initial_state(Method::Proposed, &instance, &OptimOptions::default());
    let noise = instance.budget.noise;
    let scorer = AssignmentScorer::new(&state, &instance.channels, noise);

    println!(
        "{} candidates (K^N)",
        scorer.candidates().unwrap_or(u64::MAX)
    );
    println!(
        "nearest rule {:?}: {:.4} bps/Hz",
        instance.nearest,
        scorer.sum_rate(&instance.nearest)
    );
    println!(
        "claimed rule {:?}: {:.4} bps/Hz",
        instance.claimed,
        scorer.sum_rate(&instance.claimed)
    );

    let best = enumerate_best_assignment(
        &state,
        &instance.channels,
        noise,
        &SelectionOptions::default(),
    )?;
    println!(
        "best sum rate {:?}: {:.4} bps/Hz",
        best.assignment, best.sum_rate
    );

    let fair = best_assignment(
        &scorer,
        Ranking::MinSinr,
        None,
        &SelectionOptions::default(),
    )?
    .expect("every assignment has a finite weakest SINR");
    println!(
        "best weakest user {:?}: {:.4} bps/Hz",
        fair.assignment, fair.sum_rate
    );
    Ok(())
}
