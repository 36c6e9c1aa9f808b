//! Checks numerically that the dual and quadratic transforms are tight at
//! their closed-form auxiliary variables, for a random state.
//!
//! ```text
//! cargo run --release --example fp_transforms
//! ```

use irs_sim::fp::{
    f1a, f2, f2a, f3a, f3b, stack_theta, update_alpha, update_beta, update_epsilon, FpState,
    ThetaTerms,
};
use irs_sim::scenario::{stream, Stream};
use irs_sim::system::testing::{random_channels, random_state};
use irs_sim::system::{sinrs, sum_rate};

fn main() {
    let mut rng = stream(7, Stream::Angles);
    let noise = 0.3;
    for trial in 0..5 {
        let ch = random_channels(&mut rng, 8, 4, 4, 16);
        let state = random_state(&mut rng, &ch);
        let rate = sum_rate(&state, &ch, noise);

        let mut fp = FpState::new(ch.users());
        fp.alpha = update_alpha(&sinrs(&state, &ch, noise));
        let dual = f1a(&state, &fp, &ch, noise);

        fp.epsilon = update_epsilon(&state, &fp, &ch, noise);
        let (p2, p2a) = (
            f2(&state, &fp.alpha, &ch, noise),
            f2a(&state, &fp, &ch, noise),
        );

        let terms = ThetaTerms::new(&state, &ch);
        let theta = stack_theta(&state.theta);
        fp.beta = update_beta(&terms, &theta, &fp.alpha, noise);
        let (p3a, p3b) = (
            f3a(&terms, &theta, &fp.alpha, noise),
            f3b(&terms, &theta, &fp, noise),
        );

        println!(
            "trial {trial}: sum rate {rate:.6} | dual gap {:.1e} | precoder gap {:.1e} | phase gap {:.1e}",
            (dual - rate).abs() / rate,
            (p2a - p2).abs() / p2.abs(),
            (p3b - p3a).abs() / p3a.abs()
        );
    }
}
