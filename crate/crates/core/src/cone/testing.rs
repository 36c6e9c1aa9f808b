//! Random problem generators for tests, examples and benchmarks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AffineForm, Ball, ConeProblem, Soc};
use crate::{CMatrix, CVector, C64};

/// Vector with i.i.d. `CN(0, 1)` entries.
pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| cn(rng))
}

fn cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random problem of dimension `dim` with `socs` second-order cones that is
/// strictly feasible at the returned point.
///
/// Every coordinate lies in one ball; with `boxed` every coordinate is also
/// boxed. Cones carry random offsets, 1-4 right-hand forms and a gain 1.2x
/// the value that would make the returned point lie on the boundary.
pub fn random_feasible<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    socs: usize,
    boxed: bool,
) -> (ConeProblem, CVector) {
    let n = dim;
    let mut x0 = random_vector(rng, n);
    if boxed {
        for c in x0.iter_mut() {
            *c = *c / c.norm().max(1e-12) * rng.random_range(0.05..0.7);
        }
    } else {
        let r: f64 = rng.random_range(0.2..2.0);
        x0 *= C64::new(r / x0.norm().max(1e-12), 0.0);
    }
    let radius = x0.norm() * rng.random_range(1.1..2.5);

    let mut p = ConeProblem::new(n);
    let rank = rng.random_range(1..=n + 1);
    p.q_factor = CMatrix::from_fn(rank, n, |_, _| cn(rng));
    p.v = random_vector(rng, n) * C64::new(rng.random_range(0.1..3.0), 0.0);
    p.constant = rng.random_range(-1.0..1.0);
    p.balls.push(Ball {
        indices: (0..n).collect(),
        radius,
    });
    if boxed {
        p.boxed = (0..n).collect();
    }
    for _ in 0..socs {
        let mut a = random_vector(rng, n);
        let ax = a.dot(&x0);
        a *= C64::from_polar(1.0, -ax.arg());
        let ax = a.dot(&x0);
        let lhs_off = C64::new(rng.random_range(-0.2..0.2) * ax.re, 0.0);
        let lhs = AffineForm {
            row: a,
            offset: lhs_off,
        };
        let rhs: Vec<AffineForm> = (0..rng.random_range(1..=4))
            .map(|_| AffineForm {
                row: random_vector(rng, n),
                offset: if rng.random_bool(0.5) {
                    cn(rng) * 0.3
                } else {
                    C64::new(0.0, 0.0)
                },
            })
            .collect();
        let sigma = rng.random_range(0.05..1.0);
        let right =
            (rhs.iter().map(|f| f.eval(&x0).norm_sqr()).sum::<f64>() + sigma * sigma).sqrt();
        let gain = 1.2 * right / lhs.eval(&x0).re;
        p.socs.push(Soc {
            gain,
            lhs,
            rhs,
            sigma,
        });
    }
    (p, x0)
}
