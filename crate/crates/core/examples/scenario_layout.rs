//! Drops users for a few Monte Carlo seeds and shows both nearest-geometry
//! selection rules.
//!
//! ```text
//! cargo run --release --example scenario_layout
//! ```

use irs_sim::scenario::{
    drop_seed, nearest_user_per_surface, place_users, stream, users_claim_nearest_surface,
    ScenarioConfig, Stream,
};

fn main() -> irs_sim::Result<()> {
    let config = ScenarioConfig::desk();
    config.validate()?;
    let b = config.budget();
    println!(
        "desk preset: M={} N={} K={} L={} | P_max={} mW noise={:e} mW SINR_min={:.3}",
        config.antennas,
        config.surfaces,
        config.users,
        config.elements(),
        b.p_max,
        b.noise,
        b.sinr_min
    );
    println!("config hash {}", config.hash());
    for (n, p) in config.irs_positions.iter().enumerate() {
        println!("surface {n} at ({:.0}, {:.0}) m", p[0], p[1]);
    }

    for d in 0..3 {
        let seed = drop_seed(config.seed, d);
        let layout = place_users(&config, &mut stream(seed, Stream::Placement));
        println!("\ndrop {d} (seed {seed:#018x})");
        for (k, u) in layout.users.iter().enumerate() {
            println!(
                "  user {k} at ({:6.1}, {:6.1}) m, {:6.1} m from the mBS",
                u[0], u[1], layout.dist_bs_user[k]
            );
        }
        println!(
            "  each surface -> nearest user: {:?}",
            nearest_user_per_surface(&config, &layout)
        );
        println!(
            "  users claim nearest surface:  {:?}",
            users_claim_nearest_surface(&config, &layout)
        );
    }
    Ok(())
}
