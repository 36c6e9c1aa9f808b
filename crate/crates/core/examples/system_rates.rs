//! Evaluates SINRs and rates of a random-phase, matched-filter state and
//! shows how the selection changes them.
//!
//! ```text
//! cargo run --release --example system_rates
//! ```

use irs_sim::optimizer::{initial_state, DropInstance, Method, OptimOptions};
use irs_sim::scenario::{drop_seed, ScenarioConfig};
use irs_sim::system::{sinrs, sum_rate, user_rates, BeamformingState};

fn main() -> irs_sim::Result<()> {
    let mut config = ScenarioConfig::desk();
    config.noise_dbm = -130.0;
    let instance = DropInstance::generate(&config, drop_seed(config.seed, 0))?;
    let noise = instance.budget.noise;
    let ch = &instance.channels;

    for method in [Method::Wis, Method::Nis] {
        let state = initial_state(method, &instance, &OptimOptions::default());
        report(method.name(), &state, ch, noise);
    }

    let mut state = initial_state(Method::Nis, &instance, &OptimOptions::default());
    state.selection = BeamformingState::selection_from(&instance.claimed, ch.users());
    report("claimed", &state, ch, noise);
    Ok(())
}

fn report(label: &str, state: &BeamformingState, ch: &irs_sim::channel::ChannelSet, noise: f64) {
    let s: Vec<String> = sinrs(state, ch, noise)
        .iter()
        .map(|x| format!("{:8.3}", 10.0 * x.log10()))
        .collect();
    let r: Vec<String> = user_rates(state, ch, noise)
        .iter()
        .map(|x| format!("{x:.3}"))
        .collect();
    println!(
        "{label:8} power {:.1} mW | SINR dB [{}] | rates [{}] | sum {:.4} bps/Hz",
        state.power(),
        s.join(" "),
        r.join(" "),
        sum_rate(state, ch, noise)
    );
}
