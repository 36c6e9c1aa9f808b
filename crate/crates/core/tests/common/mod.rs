//! Shared test helpers: a projected-gradient reference solver for cone
//! problems and a generator of problems it can handle exactly.
//!
//! The reference solver is deliberately independent of the interior-point
//! code: accelerated projected gradient ascent whose projection onto the
//! feasible set is computed by Dykstra's alternating projections. Every
//! constraint set has an exact projection because second-order cones are
//! generated with orthonormal rows.

#![allow(dead_code)]

use irs_sim::cone::{AffineForm, Ball, ConeProblem, Soc};
use irs_sim::{CMatrix, CVector, C64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn cnormal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| cnormal(rng))
}

/// One constraint set with an exact Euclidean projection.
enum Set {
    /// Disjoint balls.
    Balls(Vec<(Vec<usize>, f64)>),
    /// Coordinates in the closed unit disc.
    Discs(Vec<usize>),
    /// `gain Re{w_0 + c_0} >= ||[w_1 + c_1, ..., sigma]||`, `Im{w_0 + c_0} = 0`
    /// in coordinates `w_i = d_i^H x` along orthonormal directions `d_i`.
    Cone {
        dirs: Vec<CVector>,
        offsets: Vec<C64>,
        gain: f64,
        sigma: f64,
    },
}

/// Projects `(t, z)` onto `{gain t >= sqrt(||z||^2 + sigma^2)}`.
fn project_hyperboloid(t: f64, z: &[C64], gain: f64, sigma: f64) -> (f64, Vec<C64>) {
    let zn2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    if gain * t >= (zn2 + sigma * sigma).sqrt() {
        return (t, z.to_vec());
    }
    // Stationarity: t' = t + lambda gain, z' = z / (1 + lambda / (gain t')),
    // with lambda fixed by gain t' = sqrt(||z'||^2 + sigma^2).
    let phi = |lambda: f64| {
        let tp = t + lambda * gain;
        let shrink = 1.0 + lambda / (gain * tp);
        zn2 / (shrink * shrink) + sigma * sigma - (gain * tp).powi(2)
    };
    let mut lo = (-t / gain).max(0.0);
    let mut hi = lo + 1.0;
    while phi(hi) > 0.0 {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tp = t + hi * gain;
    let shrink = 1.0 + hi / (gain * tp);
    (tp, z.iter().map(|c| c / shrink).collect())
}

impl Set {
    fn project(&self, x: &CVector) -> CVector {
        let mut y = x.clone();
        match self {
            Set::Balls(balls) => {
                for (idx, r) in balls {
                    let n = idx.iter().map(|&i| y[i].norm_sqr()).sum::<f64>().sqrt();
                    if n > *r {
                        for &i in idx {
                            y[i] *= r / n;
                        }
                    }
                }
            }
            Set::Discs(idx) => {
                for &i in idx {
                    let n = y[i].norm();
                    if n > 1.0 {
                        y[i] /= n;
                    }
                }
            }
            Set::Cone {
                dirs,
                offsets,
                gain,
                sigma,
            } => {
                let w: Vec<C64> = dirs
                    .iter()
                    .zip(offsets)
                    .map(|(d, c)| d.dotc(x) + c)
                    .collect();
                let (t, z) = project_hyperboloid(w[0].re, &w[1..], *gain, *sigma);
                let mut target = vec![C64::new(t, 0.0)];
                target.extend(z);
                for (i, d) in dirs.iter().enumerate() {
                    y += d * (target[i] - w[i]);
                }
            }
        }
        y
    }
}

/// Reference solver for problems from [`random_problem`].
pub struct Reference {
    sets: Vec<Set>,
    q: CMatrix,
    v: CVector,
    constant: f64,
}

impl Reference {
    /// Euclidean projection onto the intersection (Dykstra).
    pub fn project(&self, x: &CVector) -> CVector {
        let mut y = x.clone();
        let mut incr: Vec<CVector> = self.sets.iter().map(|_| CVector::zeros(x.len())).collect();
        for sweep in 0..100_000 {
            let before = y.clone();
            for (s, p) in self.sets.iter().zip(incr.iter_mut()) {
                let shifted = &y + &*p;
                let z = s.project(&shifted);
                *p = shifted - &z;
                y = z;
            }
            let tol = 1e-13 * (1.0 + y.norm());
            if (&y - before).norm() <= tol
                && self.sets.iter().all(|s| (s.project(&y) - &y).norm() <= tol)
            {
                break;
            }
            assert!(sweep < 99_999, "projection did not converge");
        }
        y
    }

    pub fn objective(&self, x: &CVector) -> f64 {
        -(x.dotc(&(&self.q * x))).re + 2.0 * self.v.dotc(x).re - self.constant
    }

    /// Accelerated projected gradient ascent with adaptive restart, for at
    /// most `iterations` steps; stops early once a plain projected step no
    /// longer ascends.
    pub fn solve(&self, iterations: usize) -> CVector {
        let n = self.v.len();
        let lmax = self.q.clone().symmetric_eigenvalues().max().max(1e-12);
        let step = |y: &CVector| self.project(&(y + (&self.v - &self.q * y) / C64::new(lmax, 0.0)));
        let mut x = self.project(&CVector::zeros(n));
        let mut y = x.clone();
        let mut momentum = 1.0_f64;
        let mut fx = self.objective(&x);
        for _ in 0..iterations {
            let plain = momentum == 1.0;
            let next = step(&y);
            let fnext = self.objective(&next);
            if fnext < fx {
                if plain {
                    // Not even a plain step ascends: stationary up to the
                    // projection accuracy.
                    break;
                }
                momentum = 1.0;
                y = x.clone();
                continue;
            }
            let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let moved = (&next - &x).norm();
            y = &next + (&next - &x) * C64::new((momentum - 1.0) / m_next, 0.0);
            x = next;
            fx = fnext;
            momentum = m_next;
            if moved <= 1e-12 * (1.0 + x.norm()) {
                break;
            }
        }
        x
    }
}

/// Random complex unitary matrix (QR of a Gaussian matrix).
fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| cnormal(rng)).qr().q()
}

/// Random problem with a strictly feasible point and its reference solver.
///
/// The left-side directions of different cones are orthogonal, so their
/// equality rows are independent; this caps `socs` at `dim`.
///
/// Coordinates are split between up to two disjoint balls and unit discs;
/// every second-order cone uses orthonormal rows, random offsets, gain and
/// sigma, and is placed so the returned point is strictly inside it.
pub fn random_problem<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    socs: usize,
) -> (ConeProblem, CVector, Reference) {
    let mut p = ConeProblem::new(dim);
    let rank = rng.random_range(1..=dim);
    p.q_factor =
        CMatrix::from_fn(rank, dim, |_, _| cnormal(rng)) / C64::new((dim as f64).sqrt(), 0.0);
    p.v = cvec(rng, dim) * C64::new(2.0, 0.0);

    let mut order: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let in_balls = rng.random_range(0..=dim);
    let split = rng.random_range(0..=in_balls);
    let mut x0 = CVector::zeros(dim);
    for idx in [&order[..split], &order[split..in_balls]] {
        if idx.is_empty() {
            continue;
        }
        let mut indices = idx.to_vec();
        indices.sort_unstable();
        let radius = rng.random_range(0.5..2.0);
        let dir = cvec(rng, indices.len());
        let scale = rng.random_range(0.1..0.6) * radius / dir.norm();
        for (j, &i) in indices.iter().enumerate() {
            x0[i] = dir[j] * scale;
        }
        p.balls.push(Ball { indices, radius });
    }
    let mut boxed: Vec<usize> = order[in_balls..].to_vec();
    // A few ball coordinates are boxed as well.
    boxed.extend(
        order[..in_balls]
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.2)),
    );
    boxed.sort_unstable();
    for &i in &boxed {
        if !p.balls.iter().any(|b| b.indices.contains(&i)) {
            x0[i] = cnormal(rng) * C64::new(0.4, 0.0);
        }
        if x0[i].norm() >= 0.9 {
            let n = x0[i].norm();
            x0[i] *= 0.5 / n;
        }
    }
    p.boxed = boxed.clone();

    let socs = socs.min(dim);
    let lhs_dirs = unitary(rng, dim);
    let mut sets = vec![
        Set::Balls(
            p.balls
                .iter()
                .map(|b| (b.indices.clone(), b.radius))
                .collect(),
        ),
        Set::Discs(boxed),
    ];
    for c in 0..socs {
        let k = rng.random_range(0..dim.min(4));
        // Orthonormal completion of the cone's left direction.
        let mut seed = CMatrix::from_fn(dim, k + 1, |_, _| cnormal(rng));
        seed.set_column(0, &lhs_dirs.column(c));
        let u = seed.qr().q();
        let dirs: Vec<CVector> = (0..=k).map(|i| u.column(i).into_owned()).collect();
        let gain = rng.random_range(0.5..2.0);
        let sigma = if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.01..0.5)
        };
        let rhs_offsets: Vec<C64> = (0..k).map(|_| cnormal(rng) * C64::new(0.3, 0.0)).collect();
        let rhs_norm = (dirs[1..]
            .iter()
            .zip(&rhs_offsets)
            .map(|(d, c)| (d.dotc(&x0) + c).norm_sqr())
            .sum::<f64>()
            + sigma * sigma)
            .sqrt();
        let lhs_value = (rhs_norm / gain) * rng.random_range(1.05..1.6) + 0.02;
        let lhs_offset = C64::new(lhs_value, 0.0) - dirs[0].dotc(&x0);
        let row = |d: &CVector| d.map(|c| c.conj());
        p.socs.push(Soc {
            gain,
            lhs: AffineForm {
                row: row(&dirs[0]),
                offset: lhs_offset,
            },
            rhs: dirs[1..]
                .iter()
                .zip(&rhs_offsets)
                .map(|(d, &c)| AffineForm {
                    row: row(d),
                    offset: c,
                })
                .collect(),
            sigma,
        });
        let mut offsets = vec![lhs_offset];
        offsets.extend(rhs_offsets);
        sets.push(Set::Cone {
            dirs,
            offsets,
            gain,
            sigma,
        });
    }
    let reference = Reference {
        sets,
        q: p.q(),
        v: p.v.clone(),
        constant: p.constant,
    };
    (p, x0, reference)
}
