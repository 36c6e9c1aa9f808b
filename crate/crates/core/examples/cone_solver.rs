//! Builds a small concave quadratic problem with a power ball, unit-modulus
//! boxes and one second-order cone, solves it with the interior-point
//! solver and prints the certificate.
//!
//! ```text
//! cargo run --release --example cone_solver
//! ```

use irs_sim::cone::{kkt_residual, solve, AffineForm, Ball, ConeProblem, Soc, SolveOptions};
use irs_sim::{CMatrix, CVector, C64};

fn main() -> irs_sim::Result<()> {
    let c = |re: f64, im: f64| C64::new(re, im);
    let mut p = ConeProblem::new(3);
    // Q = F^H F with F = diag(1, 2, 0.5); v pulls towards (1, i, 1).
    p.q_factor = CMatrix::from_diagonal(&CVector::from_vec(vec![
        c(1.0, 0.0),
        c(2.0, 0.0),
        c(0.5, 0.0),
    ]));
    p.v = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)]);
    p.balls.push(Ball {
        indices: vec![0, 1],
        radius: 0.8,
    });
    p.boxed.push(2);
    // 2 Re{x_0} >= ||[x_1, 0.1]||, Im{x_0} = 0.
    p.socs.push(Soc {
        gain: 2.0,
        lhs: AffineForm::linear(CVector::from_vec(vec![
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ])),
        rhs: vec![AffineForm::linear(CVector::from_vec(vec![
            c(0.0, 0.0),
            c(1.0, 0.0),
            c(0.0, 0.0),
        ]))],
        sigma: 0.1,
    });
    p.validate()?;

    let report = solve(&p, None, &SolveOptions::default());
    println!(
        "status {:?} after {} Newton steps",
        report.status, report.iterations
    );
    println!("objective {:.8}", report.objective);
    for (i, x) in report.x.iter().enumerate() {
        println!(
            "  x_{i} = {:+.6} {:+.6}i  (|x| = {:.6})",
            x.re,
            x.im,
            x.norm()
        );
    }
    println!("violation {:?}", p.violation(&report.x));
    println!(
        "KKT residual {:.2e}",
        kkt_residual(&p, &report.x, &report.multipliers)
    );
    for (k, step) in report.history.iter().enumerate() {
        println!(
            "  outer {k:2}: objective {:.8} kkt {:.1e} gap {:.1e}",
            step.objective, step.kkt_residual, step.gap
        );
    }

    // The same problem round-trips through JSON, e.g. for offline debugging.
    assert_eq!(ConeProblem::from_json(&p.to_json())?, p);
    Ok(())
}
