//! Synthesizes the channels of one drop, prints per-link energies and
//! round-trips the channels through the JSON dump format.
//!
//! ```text
//! cargo run --release --example channel_synthesis
//! ```

use irs_sim::channel::{ChannelSet, PathLossParams};
use irs_sim::scenario::{drop_seed, place_users, stream, ScenarioConfig, Stream};

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn main() -> irs_sim::Result<()> {
    let config = ScenarioConfig::desk();
    let seed = drop_seed(config.seed, 0);
    let layout = place_users(&config, &mut stream(seed, Stream::Placement));
    let channels = ChannelSet::generate(&config, &layout, seed)?;

    let (los, nlos) = (PathLossParams::los(), PathLossParams::nlos());
    println!(
        "mean path loss at 100 m: LOS {:.1} dB, NLOS {:.1} dB",
        -db(los.mean_power(100.0)),
        -db(nlos.mean_power(100.0))
    );

    for (n, h) in channels.bs_irs.iter().enumerate() {
        println!(
            "mBS -> surface {n}: {:5.1} m, ||H||_F^2 = {:7.1} dB",
            layout.dist_bs_irs[n],
            db(h.norm_squared())
        );
    }
    for (n, rows) in channels.irs_user.iter().enumerate() {
        let e: Vec<String> = rows
            .iter()
            .map(|r| format!("{:7.1}", db(r.norm_squared())))
            .collect();
        println!("surface {n} -> users (dB): {}", e.join(" "));
    }
    println!("direct links active: {}", channels.direct_active);

    let dump = channels.to_dump(&config, seed);
    let (back, back_seed) = ChannelSet::from_dump(&dump, &config)?;
    assert_eq!(back_seed, seed);
    assert_eq!(back, channels);
    println!("dump round trip ok ({} bytes)", dump.len());
    Ok(())
}
