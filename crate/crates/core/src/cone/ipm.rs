//! Primal log-barrier interior-point method.
//!
//! Barrier `psi = -sum log(s0^2 - ||s1||^2) - sum log(s)`; for each barrier
//! weight `t` Newton's method minimizes `t f(u) + psi(u)` subject to the
//! equality rows (infeasible-start Newton until the rows hold), then `t`
//! grows by `mu`. Central points give the duals `z = 2 J s / (t det(s))`
//! and the duality gap `nu / t`, where `nu` is the total barrier degree.
//!
//! A phase-I problem (`min tau` with every dense cone relaxed by `tau`)
//! decides feasibility and provides a strictly feasible start when no
//! usable warm start is supplied.

use nalgebra::{DMatrix, DVector};

use super::lift::{interior, soc_det, Cone, Lifted};
use super::newton::{kkt_solve, Block, Hessian};
use super::{ConeProblem, Multipliers, OuterStep, SolveOptions, SolveReport, SolveStatus};
use crate::CVector;

/// Switch from infeasible-start to feasible Newton steps below this
/// equality residual.
const EQ_SWITCH: f64 = 1e-10;
/// Centering stops once the Newton decrement `lambda^2 / 2` falls below this.
const CENTERED: f64 = 1e-10;
/// A decrement below this that no longer halves per step has hit the
/// rounding floor and counts as centered.
const CENTERED_FLOOR: f64 = 1e-3;
/// Phase I accepts a point whose cone margin is at least this large at once.
const PHASE1_MARGIN: f64 = 1e-3;
/// Phase I declares infeasibility when the best cone margin is provably
/// below this.
const PHASE1_INFEASIBLE: f64 = 1e-8;
/// Largest barrier weight tried before giving up on the tolerances.
const T_MAX: f64 = 1e16;
/// Share of the distance to the cone boundary a Newton step may cover.
/// Steps that nearly touch the boundary leave the iterate far from the
/// central path and stall the next centering.
const FRACTION_TO_BOUNDARY: f64 = 0.5;

/// Value, gradient and (optionally) Hessian of `t f + psi`; `None` outside
/// the barrier domain.
fn eval(
    lp: &Lifted,
    u: &DVector<f64>,
    t: f64,
    hessian: bool,
) -> Option<(f64, DVector<f64>, Option<Hessian>)> {
    let nv = lp.nv;
    let pairs = lp.n;
    let mut phi = t * lp.f(u);
    let mut grad = lp.grad_f(u) * t;
    let mut blocks = vec![Block::default(); if hessian { pairs } else { 0 }];
    let mut tail = vec![0.0; if hessian { nv - 2 * pairs } else { 0 }];
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if hessian {
        let s = (2.0 * t).sqrt();
        for r in 0..lp.quad.nrows() {
            cols.push(lp.quad.row(r).transpose() * s);
        }
    }
    for cone in &lp.cones {
        let s = cone.slack(u);
        if !interior(cone, &s) {
            return None;
        }
        match cone {
            Cone::Orthant { i } => {
                phi -= s[0].ln();
                grad[*i] -= 1.0 / s[0];
                if hessian {
                    tail[i - 2 * pairs] += 1.0 / (s[0] * s[0]);
                }
            }
            Cone::Ball { idx, .. } => {
                let d = soc_det(&s);
                phi -= d.ln();
                for (r, &i) in idx.iter().enumerate() {
                    grad[i] += 2.0 * s[r + 1] / d;
                }
                if hessian {
                    let mut col = DVector::zeros(nv);
                    for (r, &i) in idx.iter().enumerate() {
                        if i % 2 == 0 {
                            blocks[i / 2].iso += 2.0 / d;
                        }
                        col[i] = 2.0 * s[r + 1] / d;
                    }
                    cols.push(col);
                }
            }
            Cone::Pair { j, .. } => {
                let d = soc_det(&s);
                let (p, q) = (s[1], s[2]);
                phi -= d.ln();
                grad[2 * j] += 2.0 * p / d;
                grad[2 * j + 1] += 2.0 * q / d;
                if hessian {
                    // Box indices are distinct, so each pair carries at most
                    // one rank-one term.
                    let b = &mut blocks[*j];
                    b.iso += 2.0 / d;
                    b.r = [2.0 * p / d, 2.0 * q / d];
                }
            }
            Cone::Dense { g, .. } => {
                let d = soc_det(&s);
                phi -= d.ln();
                let mut js = s.clone();
                js.rows_mut(1, s.len() - 1).neg_mut();
                grad.gemv_tr(-2.0 / d, g, &js, 1.0);
                if hessian {
                    let w = js / d.sqrt();
                    let m = w.len();
                    let mut wbar = DMatrix::identity(m, m);
                    wbar[(0, 0)] = w[0];
                    for a in 1..m {
                        wbar[(0, a)] = w[a];
                        wbar[(a, 0)] = w[a];
                        for b in 1..m {
                            wbar[(a, b)] += w[a] * w[b] / (1.0 + w[0]);
                        }
                    }
                    let fac = g.tr_mul(&wbar) * (2.0 / d).sqrt();
                    cols.extend(fac.column_iter().map(|c| c.into_owned()));
                }
            }
        }
    }
    let hess = hessian.then(|| Hessian {
        blocks,
        tail,
        f: if cols.is_empty() {
            DMatrix::zeros(nv, 0)
        } else {
            DMatrix::from_columns(&cols)
        },
    });
    Some((phi, grad, hess))
}

/// Largest step keeping every cone slack in the interior.
fn max_step(lp: &Lifted, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for cone in &lp.cones {
        let s = cone.slack(u);
        let ds = cone.dir(du);
        let step = if cone.is_orthant() {
            if ds[0] < 0.0 {
                -s[0] / ds[0]
            } else {
                f64::INFINITY
            }
        } else {
            let tail_s = s.rows(1, s.len() - 1);
            let tail_d = ds.rows(1, ds.len() - 1);
            let a = ds[0] * ds[0] - tail_d.norm_squared();
            let b = 2.0 * (s[0] * ds[0] - tail_s.dot(&tail_d));
            let c = soc_det(&s);
            smallest_positive_root(a, b, c)
        };
        best = best.min(step);
    }
    best
}

/// Smallest positive root of `a x^2 + b x + c` with `c > 0`.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= 1e-15 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots
        .iter()
        .copied()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Center {
    Converged,
    Stopped,
    Budget,
    Stalled,
}

fn residual_norm(lp: &Lifted, u: &DVector<f64>, nu: &DVector<f64>, t: f64) -> f64 {
    match eval(lp, u, t, false) {
        Some((_, g, _)) => {
            let rd = if lp.eq.nrows() > 0 {
                g + lp.eq.tr_mul(nu)
            } else {
                g
            };
            (rd.norm_squared() + lp.eq_residual(u).norm_squared()).sqrt()
        }
        None => f64::INFINITY,
    }
}

/// Newton centering for barrier weight `t`.
fn center(
    lp: &Lifted,
    u: &mut DVector<f64>,
    nu: &mut DVector<f64>,
    t: f64,
    budget: &mut usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Center {
    let mut previous = f64::INFINITY;
    loop {
        let Some((phi, g, Some(h))) = eval(lp, u, t, true) else {
            return Center::Stalled;
        };
        let rp = lp.eq_residual(u);
        let feasible = rp.amax() <= EQ_SWITCH;
        let factor = h.factor();
        let (mut du, nu_plus) = kkt_solve(&factor, &lp.eq, &g, &rp);
        project_step(lp, &mut du, &rp);
        let lambda2 = du.dot(&h.apply(&du)).max(0.0);
        if feasible {
            *nu = nu_plus.clone();
            if lambda2 <= 2.0 * CENTERED || (lambda2 <= CENTERED_FLOOR && lambda2 > 0.5 * previous)
            {
                return Center::Converged;
            }
            previous = lambda2;
            if stop(u) {
                return Center::Stopped;
            }
        }
        if *budget == 0 {
            return Center::Budget;
        }
        *budget -= 1;

        let mut alpha = (FRACTION_TO_BOUNDARY * max_step(lp, u, &du)).min(1.0);
        if feasible {
            let slope = g.dot(&du);
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &*u + &du * alpha;
                match eval(lp, &trial, t, false) {
                    Some((p, _, _)) if lambda2 < 1e-6 || p <= phi + 0.01 * alpha * slope => {
                        *u = trial;
                        accepted = true;
                        break;
                    }
                    _ => alpha *= 0.5,
                }
            }
            if !accepted {
                return Center::Stalled;
            }
        } else {
            previous = f64::INFINITY;
            let dnu = &nu_plus - &*nu;
            let r0 = residual_norm(lp, u, nu, t);
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &*u + &du * alpha;
                let trial_nu = &*nu + &dnu * alpha;
                if residual_norm(lp, &trial, &trial_nu, t) <= (1.0 - 0.01 * alpha) * r0 {
                    *u = trial;
                    *nu = trial_nu;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Center::Stalled;
            }
        }
    }
}

/// Removes the rounding error of a Newton step on the (orthonormal)
/// equality rows so that a full step lands exactly on them.
fn project_step(lp: &Lifted, du: &mut DVector<f64>, rp: &DVector<f64>) {
    if lp.eq.nrows() > 0 {
        let miss = &lp.eq * &*du + rp;
        du.gemv_tr(-1.0, &lp.eq, &miss, 1.0);
    }
}

fn total_degree(lp: &Lifted) -> f64 {
    lp.cones.iter().map(Cone::degree).sum()
}

/// Dual estimate at `u` for weight `t`.
///
/// Without a step these are the central-path duals `z = -grad psi(s) / t`;
/// with the Newton step `du` (and its equality multipliers `nu`) the
/// linearization `z = -(grad psi(s) + hess psi(s) ds) / t` is used, which
/// is far more accurate when `u` is only approximately centered.
fn duals(
    lp: &Lifted,
    u: &DVector<f64>,
    du: Option<&DVector<f64>>,
    nu: &DVector<f64>,
    t: f64,
    socs: usize,
) -> Multipliers {
    let cones = lp
        .cones
        .iter()
        .map(|cone| {
            let s = cone.slack(u);
            let ds = du
                .map(|d| cone.dir(d))
                .unwrap_or_else(|| DVector::zeros(s.len()));
            if cone.is_orthant() {
                DVector::from_element(1, (1.0 / s[0] - ds[0] / (s[0] * s[0])) / t)
            } else {
                let d = soc_det(&s);
                let mut js = s.clone();
                js.rows_mut(1, s.len() - 1).neg_mut();
                let mut jds = ds.clone();
                jds.rows_mut(1, ds.len() - 1).neg_mut();
                let coupling = js.dot(&ds);
                let mut z = js * (2.0 / d - 4.0 * coupling / (d * d));
                z.axpy(2.0 / d, &jds, 1.0);
                z / t
            }
        })
        .collect();
    let mut eq = DVector::zeros(socs);
    if !nu.is_empty() {
        let per_row = &lp.eq_map * nu;
        for (r, &owner) in lp.eq_owner.iter().enumerate() {
            eq[owner] = per_row[r] / t;
        }
    }
    Multipliers { cones, eq }
}

/// The better (by KKT residual) of the plain and Newton-corrected duals.
fn best_duals(
    lp: &Lifted,
    u: &DVector<f64>,
    nu: &DVector<f64>,
    t: f64,
    socs: usize,
) -> (Multipliers, f64) {
    let plain = duals(lp, u, None, nu, t, socs);
    let plain_kkt = lp.kkt(u, &plain);
    let corrected = eval(lp, u, t, true).map(|(_, g, h)| {
        let h = h.expect("hessian requested");
        let (du, nu_plus) = kkt_solve(&h.factor(), &lp.eq, &g, &lp.eq_residual(u));
        let m = duals(lp, u, Some(&du), &nu_plus, t, socs);
        let k = lp.kkt(u, &m);
        (m, k)
    });
    match corrected {
        Some((m, k)) if k < plain_kkt => (m, k),
        _ => (plain, plain_kkt),
    }
}

fn strictly_inside(lp: &Lifted, u: &DVector<f64>) -> bool {
    lp.cones.iter().all(|c| interior(c, &c.slack(u)))
}

/// Phase-I problem: variables `(u, tau)`, minimize `tau`, dense cones
/// relaxed to `s0 + tau >= ||s1||`, plus `tau >= -1`.
fn phase_one_problem(lp: &Lifted) -> Lifted {
    let nv = lp.nv + 1;
    let tau = lp.nv;
    let mut cones: Vec<Cone> = lp
        .cones
        .iter()
        .map(|c| match c {
            Cone::Dense { g, h } => {
                let mut g1 = g.clone().insert_column(tau, 0.0);
                g1[(0, tau)] = 1.0;
                Cone::Dense {
                    g: g1,
                    h: h.clone(),
                }
            }
            other => other.clone(),
        })
        .collect();
    cones.push(Cone::Orthant { i: tau });
    let mut lin = DVector::zeros(nv);
    lin[tau] = -0.5;
    Lifted {
        nv,
        quad: DMatrix::zeros(0, nv),
        lin,
        cones,
        eq: lp.eq.clone().insert_column(tau, 0.0),
        ..lp.clone()
    }
}

enum PhaseOne {
    Feasible(DVector<f64>),
    /// Carries the point of least cone violation found.
    Infeasible(DVector<f64>),
    Budget,
}

fn phase_one(
    lp: &Lifted,
    start: &DVector<f64>,
    opts: &SolveOptions,
    budget: &mut usize,
) -> PhaseOne {
    let p1 = phase_one_problem(lp);
    let tau = lp.nv;
    let worst = lp.cones[lp.first_dense..]
        .iter()
        .map(|c| {
            let s = c.slack(start);
            s.rows(1, s.len() - 1).norm() - s[0]
        })
        .fold(-0.5, f64::max);
    let mut u = start.clone().insert_row(tau, worst + 1.0);
    let mut nu = DVector::zeros(p1.eq.nrows());
    let degree = total_degree(&p1);
    let mut t = 1.0;
    let stop = |u: &DVector<f64>| u[tau] <= -PHASE1_MARGIN;
    loop {
        let outcome = center(&p1, &mut u, &mut nu, t, budget, &stop);
        let feasible = p1.eq_residual(&u).amax() <= EQ_SWITCH;
        if feasible && u[tau] < 0.0 && (outcome == Center::Stopped || u[tau] <= -PHASE1_MARGIN) {
            return PhaseOne::Feasible(u.remove_row(tau));
        }
        if outcome == Center::Budget {
            return PhaseOne::Budget;
        }
        let gap = degree / t;
        if feasible && outcome == Center::Converged {
            if u[tau] < -1e-10 && gap <= -u[tau] {
                return PhaseOne::Feasible(u.remove_row(tau));
            }
            if u[tau] - gap >= -PHASE1_INFEASIBLE {
                return PhaseOne::Infeasible(u.remove_row(tau));
            }
        }
        if t > T_MAX {
            let strict = feasible && u[tau] < -1e-10;
            let point = u.remove_row(tau);
            return if strict {
                PhaseOne::Feasible(point)
            } else {
                PhaseOne::Infeasible(point)
            };
        }
        t *= opts.mu;
    }
}

/// Solves `problem` (see the module docs for the formulation).
///
/// `warm_start` is used directly when it (or a slightly shrunk copy) is
/// strictly feasible; otherwise it seeds phase I. When phase I proves the
/// cones cannot all hold, the report carries status `Infeasible` and the
/// point of least cone violation it reached (balls and boxes satisfied).
///
/// # Panics
///
/// Panics if `problem` fails [`ConeProblem::validate`].
pub fn solve(
    problem: &ConeProblem,
    warm_start: Option<&CVector>,
    opts: &SolveOptions,
) -> SolveReport {
    problem.validate().expect("invalid cone problem");
    let lp = Lifted::new(problem);
    let socs = problem.socs.len();
    let mut budget = opts.max_iter;
    let fallback = warm_start
        .cloned()
        .unwrap_or_else(|| CVector::zeros(problem.dim));
    let give_up = |status: SolveStatus, x: CVector, used: usize| SolveReport {
        objective: problem.objective(&x),
        x,
        status,
        kkt_residual: f64::INFINITY,
        iterations: used,
        multipliers: Multipliers::zeros(problem),
        history: vec![],
    };
    if lp.inconsistent {
        return give_up(SolveStatus::Infeasible, fallback, 0);
    }

    let zero = DVector::zeros(lp.nv);
    let mut start = None;
    if let Some(w) = warm_start.filter(|w| w.len() == problem.dim) {
        let uw = lp.to_scaled(w);
        for delta in [0.0, 1e-3, 1e-2, 1e-1] {
            let cand = &uw * (1.0 - delta);
            if strictly_inside(&lp, &cand) && lp.eq_residual(&cand).amax() <= 1e-6 {
                start = Some(cand);
                break;
            }
        }
    }
    let mut u = match start {
        Some(u) => u,
        None if strictly_inside(&lp, &zero) && lp.eq_residual(&zero).amax() <= 1e-6 => zero,
        None => {
            let seed = warm_start
                .filter(|w| w.len() == problem.dim)
                .map(|w| lp.to_scaled(w) * 0.9)
                .filter(|c| {
                    lp.cones[..lp.first_dense]
                        .iter()
                        .all(|k| interior(k, &k.slack(c)))
                })
                .unwrap_or(zero);
            match phase_one(&lp, &seed, opts, &mut budget) {
                PhaseOne::Feasible(u) => u,
                PhaseOne::Infeasible(u) => {
                    return give_up(
                        SolveStatus::Infeasible,
                        lp.to_complex(&u),
                        opts.max_iter - budget,
                    )
                }
                PhaseOne::Budget => {
                    return give_up(SolveStatus::MaxIter, fallback, opts.max_iter - budget)
                }
            }
        }
    };

    let degree = total_degree(&lp);
    let mut nu = DVector::zeros(lp.eq.nrows());
    let mut t = 1.0;
    let mut history = Vec::new();
    let mut best: Option<(DVector<f64>, Multipliers, f64)> = None;
    let no_stop = |_: &DVector<f64>| false;
    let status = loop {
        let outcome = center(&lp, &mut u, &mut nu, t, &mut budget, &no_stop);
        let feasible = lp.eq_residual(&u).amax() <= opts.feas_tol;
        if feasible && outcome != Center::Budget {
            let (mult, kkt) = best_duals(&lp, &u, &nu, t, socs);
            let x = lp.to_complex(&u);
            let f = lp.f(&u);
            let gap = degree / t / f.abs().max(1.0);
            history.push(OuterStep {
                objective: problem.objective(&x),
                kkt_residual: kkt,
                gap,
            });
            best = Some((u.clone(), mult, kkt));
            if kkt <= opts.kkt_tol && gap <= opts.gap_tol {
                break SolveStatus::Optimal;
            }
        }
        if outcome == Center::Budget || budget == 0 || t > T_MAX {
            break SolveStatus::MaxIter;
        }
        t *= opts.mu;
    };
    let iterations = opts.max_iter - budget;
    match best {
        Some((u, multipliers, kkt)) => {
            let x = lp.to_complex(&u);
            SolveReport {
                objective: problem.objective(&x),
                x,
                status,
                kkt_residual: kkt,
                iterations,
                multipliers,
                history,
            }
        }
        None => {
            let x = lp.to_complex(&u);
            give_up(SolveStatus::MaxIter, x, iterations)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{kkt_residual, testing, AffineForm, Ball, Soc};
    use crate::scenario::{stream, Stream};
    use crate::{CMatrix, C64};
    use approx::assert_relative_eq;

    fn unit_q(n: usize) -> ConeProblem {
        let mut p = ConeProblem::new(n);
        p.q_factor = CMatrix::identity(n, n);
        p
    }

    #[test]
    fn root_finder() {
        assert_relative_eq!(smallest_positive_root(1.0, -3.0, 2.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(smallest_positive_root(0.0, -2.0, 1.0), 0.5);
        assert_eq!(smallest_positive_root(1.0, 3.0, 2.0), f64::INFINITY);
        assert_relative_eq!(smallest_positive_root(-1.0, 0.0, 4.0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn origin_is_the_unconstrained_maximum() {
        let mut p = unit_q(3);
        p.balls.push(Ball {
            indices: vec![0, 1, 2],
            radius: 1.0,
        });
        let r = solve(&p, None, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.x.norm() < 1e-6, "{}", r.x);
        assert!(r.objective.abs() < 1e-10);
        assert!(r.kkt_residual <= 1e-6);
    }

    #[test]
    fn interior_linear_optimum() {
        let mut p = unit_q(3);
        p.v[0] = C64::new(1.0, 0.0);
        p.balls.push(Ball {
            indices: vec![0, 1, 2],
            radius: 10.0,
        });
        let r = solve(&p, None, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - C64::new(1.0, 0.0)).norm() < 1e-5);
        assert!(r.x[1].norm() < 1e-5 && r.x[2].norm() < 1e-5);
        assert_relative_eq!(r.objective, 1.0, max_relative = 1e-5);
    }

    #[test]
    fn active_ball() {
        // maximize 2 Re{x_0} with |x| <= 2 (Q = 0): x = 2 e_0, value 4.
        let mut p = ConeProblem::new(2);
        p.v[0] = C64::new(1.0, 0.0);
        p.balls.push(Ball {
            indices: vec![0, 1],
            radius: 2.0,
        });
        let r = solve(&p, None, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 4.0, max_relative = 1e-5);
        assert!(r.x.norm() <= 2.0 + 1e-8);
    }

    #[test]
    fn boxes_clip_coordinates() {
        // maximize -|x|^2 + 2 Re{3 conj(x_j)}: unconstrained 3, clipped to 1.
        let mut p = unit_q(4);
        p.v = CVector::from_element(4, C64::new(0.0, 3.0));
        p.boxed = (0..4).collect();
        let r = solve(&p, None, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        for j in 0..4 {
            assert!((r.x[j] - C64::new(0.0, 1.0)).norm() < 1e-5, "{}", r.x[j]);
        }
        assert!(p.violation(&r.x).boxed <= 1e-8);
    }

    fn soc_instance(gain: f64) -> ConeProblem {
        // One cone: gain Re{x_0} >= ||[x_1, 0.1]||, Im{x_0} = 0.
        let mut p = unit_q(2);
        p.v[1] = C64::new(1.0, 0.0);
        p.balls.push(Ball {
            indices: vec![0, 1],
            radius: 1.0,
        });
        let e = |j: usize| {
            let mut r = CVector::zeros(2);
            r[j] = C64::new(1.0, 0.0);
            AffineForm::linear(r)
        };
        p.socs.push(Soc {
            gain,
            lhs: e(0),
            rhs: vec![e(1)],
            sigma: 0.1,
        });
        p
    }

    #[test]
    fn cone_constraint_binds() {
        let p = soc_instance(1.0);
        let r = solve(&p, None, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        let v = p.violation(&r.x);
        assert!(v.max() <= 1e-6, "{v:?}");
        // With x_0 = sqrt(x_1^2 + 0.01) the objective is 2 x_1 - 2 x_1^2 - 0.01,
        // maximized at x_1 = 1/2.
        assert!((r.x[1] - C64::new(0.5, 0.0)).norm() < 1e-5, "{}", r.x);
        assert_relative_eq!(r.x[0].re, 0.26f64.sqrt(), epsilon = 1e-5);
        assert!(r.kkt_residual <= 1e-6);
        let hist = &r.history;
        for w in hist.windows(2) {
            assert!(w[1].objective >= w[0].objective - 1e-9 * w[0].objective.abs().max(1.0));
        }
    }

    #[test]
    fn infeasible_cone_detected() {
        // gain Re{x_0} >= ||[x_1, 5]|| cannot hold inside the unit ball.
        let mut p = soc_instance(1.0);
        p.socs[0].sigma = 5.0;
        let r = solve(&p, None, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Infeasible);
        // The returned point leans toward the cone: the least violation is
        // at x = e_0.
        assert!(r.x.norm() <= 1.0);
        assert!(r.x[0].re > 0.5 && r.x[1].norm() < 0.5, "{}", r.x);
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let p = soc_instance(2.0);
        let cold = solve(&p, None, &SolveOptions::default());
        let warm = solve(&p, Some(&cold.x), &SolveOptions::default());
        assert_eq!(warm.status, SolveStatus::Optimal);
        assert!((warm.x.clone() - &cold.x).norm() < 1e-5);
    }

    #[test]
    fn kkt_residual_examples() {
        let mut p = unit_q(3);
        p.v[0] = C64::new(1.0, 0.0);
        p.balls.push(Ball {
            indices: vec![0, 1, 2],
            radius: 10.0,
        });
        let mut opt = CVector::zeros(3);
        opt[0] = C64::new(1.0, 0.0);
        assert!(kkt_residual(&p, &opt, &Multipliers::zeros(&p)) <= 1e-10);
        let mut rng = stream(3, Stream::Angles);
        for _ in 0..10 {
            let (q, x0) = testing::random_feasible(&mut rng, 6, 2, true);
            let r = solve(&q, Some(&x0), &SolveOptions::default());
            assert_eq!(r.status, SolveStatus::Optimal);
            let noise = testing::random_vector(&mut rng, 6) * C64::new(1e-2, 0.0);
            let perturbed = &r.x + noise;
            assert!(kkt_residual(&q, &perturbed, &r.multipliers) > 1e-4);
            assert!((kkt_residual(&q, &r.x, &r.multipliers) - r.kkt_residual).abs() < 1e-12);
        }
    }

    #[test]
    fn random_instances_solve_to_optimality() {
        let mut rng = stream(11, Stream::Angles);
        for i in 0..30 {
            let (p, x0) = testing::random_feasible(&mut rng, 1 + i % 12, i % 5, i % 2 == 0);
            let r = solve(&p, None, &SolveOptions::default());
            assert_eq!(r.status, SolveStatus::Optimal, "instance {i}");
            assert!(r.kkt_residual <= 1e-6);
            let v = p.violation(&r.x);
            assert!(
                v.ball <= 1e-8 && v.boxed <= 1e-8 && v.soc <= 1e-6 && v.imag <= 1e-6,
                "{v:?}"
            );
            assert!(r.objective >= p.objective(&x0) - 1e-9 * r.objective.abs().max(1.0));
        }
    }

    #[test]
    fn scaling_objective_keeps_argmax() {
        let mut rng = stream(12, Stream::Angles);
        for _ in 0..5 {
            let (p, _) = testing::random_feasible(&mut rng, 8, 3, false);
            let r = solve(&p, None, &SolveOptions::default());
            let lam: f64 = 37.5;
            let mut q = p.clone();
            q.q_factor *= C64::new(lam.sqrt(), 0.0);
            q.v *= C64::new(lam, 0.0);
            q.constant *= lam;
            let rq = solve(&q, None, &SolveOptions::default());
            assert!((rq.x.clone() - &r.x).norm() <= 1e-6 * r.x.norm().max(1.0));
            assert_relative_eq!(rq.objective, lam * r.objective, max_relative = 1e-6);
        }
    }

    #[test]
    fn dense_q_round_trip_and_dump() {
        let mut rng = stream(13, Stream::Angles);
        let (p, _) = testing::random_feasible(&mut rng, 5, 2, true);
        let mut d = p.clone();
        d.set_dense_q(&p.q()).unwrap();
        assert!((d.q() - p.q()).norm() <= 1e-10 * p.q().norm());
        let back = ConeProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let mut bad = CMatrix::identity(5, 5);
        bad[(0, 0)] = C64::new(-1.0, 0.0);
        assert!(d.set_dense_q(&bad).is_err());
    }
}
