//! Fractional-programming machinery of the alternating optimizer.
//!
//! The sum rate `sum_k log2(1 + SINR_k)` is rewritten with the Lagrangian
//! dual transform (auxiliary `alpha`), which leaves the sum of ratios
//!
//! ```text
//! f2 = sum_k (1 + alpha_k) |g_kk|^2 / (sum_i |g_ki|^2 + sigma^2),   g_ki = H_k^H p_i
//! ```
//!
//! Each ratio is then replaced by its quadratic transform (auxiliary
//! `epsilon` for the precoder block, `beta` for the phase block), giving a
//! concave quadratic in the block variable. The assembly functions emit the
//! resulting problems in the form accepted by [`crate::cone::solve`]:
//!
//! - precoder block: variable `vec(P)` (columns stacked), one ball for the
//!   power budget and one second-order cone per user for the SINR target;
//! - phase block: variable `Theta = [theta_1; ...; theta_N]`, one box per
//!   element (relaxed unit modulus) and one cone per user.
//!
//! Rows of every cone are written so that `row . x` (unconjugated product)
//! is `g_ki` for the precoder block and `conj(g_ki)` for the phase block;
//! both have the same modulus, and `Im = 0` constrains the same quantity.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::cone::{AffineForm, Ball, ConeProblem, Soc};
use crate::scenario::LinearBudget;
use crate::system::{link_gains, sinrs_from_gains, BeamformingState};
use crate::{CMatrix, CVector, C64};

/// Auxiliary variables of the three transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub alpha: Vec<f64>,
    pub epsilon: Vec<C64>,
    pub beta: Vec<C64>,
}

impl FpState {
    /// All-zero auxiliaries for `users` users.
    pub fn new(users: usize) -> Self {
        FpState {
            alpha: vec![0.0; users],
            epsilon: vec![C64::new(0.0, 0.0); users],
            beta: vec![C64::new(0.0, 0.0); users],
        }
    }
}

/// Optimal Lagrangian-dual auxiliaries: `alpha_k = SINR_k`.
pub fn update_alpha(sinrs: &[f64]) -> Vec<f64> {
    sinrs.to_vec()
}

/// Dual-transformed rate
/// `sum log2(1 + alpha) - sum alpha / ln2 + sum (1 + alpha) SINR / ((1 + SINR) ln2)`.
pub fn f1a_value(sinrs: &[f64], alpha: &[f64]) -> f64 {
    sinrs
        .iter()
        .zip(alpha)
        .map(|(&s, &a)| (1.0 + a).log2() - a / LN_2 + (1.0 + a) * s / ((1.0 + s) * LN_2))
        .sum()
}

/// [`f1a_value`] at the SINRs of `state`.
pub fn f1a(state: &BeamformingState, fp: &FpState, channels: &ChannelSet, noise: f64) -> f64 {
    f1a_value(
        &sinrs_from_gains(&link_gains(state, channels), noise),
        &fp.alpha,
    )
}

/// `sum_i |g_ki|^2 + sigma^2` (interference over all users, including `k`).
fn total_power(gains: &CMatrix, noise: f64, k: usize) -> f64 {
    gains.row(k).iter().map(|g| g.norm_sqr()).sum::<f64>() + noise
}

/// Sum of ratios `sum_k (1 + alpha_k) |g_kk|^2 / (sum_i |g_ki|^2 + sigma^2)`
/// for a gain matrix `g_ki`.
pub fn ratio_sum(gains: &CMatrix, alpha: &[f64], noise: f64) -> f64 {
    (0..gains.nrows())
        .map(|k| (1.0 + alpha[k]) * gains[(k, k)].norm_sqr() / total_power(gains, noise, k))
        .sum()
}

/// Quadratic transform of [`ratio_sum`] with auxiliaries `aux`:
/// `sum_k 2 sqrt(1 + alpha_k) Re{aux_k^* g_kk} - |aux_k|^2 (sum_i |g_ki|^2 + sigma^2)`.
pub fn quadratic_transform(gains: &CMatrix, alpha: &[f64], aux: &[C64], noise: f64) -> f64 {
    (0..gains.nrows())
        .map(|k| {
            2.0 * (1.0 + alpha[k]).sqrt() * (aux[k].conj() * gains[(k, k)]).re
                - aux[k].norm_sqr() * total_power(gains, noise, k)
        })
        .sum()
}

/// Maximizer of [`quadratic_transform`] over the auxiliaries:
/// `aux_k = sqrt(1 + alpha_k) g_kk / (sum_i |g_ki|^2 + sigma^2)`.
pub fn optimal_auxiliary(gains: &CMatrix, alpha: &[f64], noise: f64) -> Vec<C64> {
    (0..gains.nrows())
        .map(|k| gains[(k, k)] * ((1.0 + alpha[k]).sqrt() / total_power(gains, noise, k)))
        .collect()
}

/// Precoder-block ratio sum `f2(P)` at the current state.
pub fn f2(state: &BeamformingState, alpha: &[f64], channels: &ChannelSet, noise: f64) -> f64 {
    ratio_sum(&link_gains(state, channels), alpha, noise)
}

/// Precoder-block quadratic transform `f2a(P, epsilon)`.
pub fn f2a(state: &BeamformingState, fp: &FpState, channels: &ChannelSet, noise: f64) -> f64 {
    quadratic_transform(&link_gains(state, channels), &fp.alpha, &fp.epsilon, noise)
}

/// Optimal `epsilon` for the current precoder.
pub fn update_epsilon(
    state: &BeamformingState,
    fp: &FpState,
    channels: &ChannelSet,
    noise: f64,
) -> Vec<C64> {
    optimal_auxiliary(&link_gains(state, channels), &fp.alpha, noise)
}

/// `vec(P)`: precoder columns stacked.
pub fn stack_precoder(precoder: &CMatrix) -> CVector {
    CVector::from_column_slice(precoder.as_slice())
}

/// Inverse of [`stack_precoder`].
pub fn unstack_precoder(x: &CVector, antennas: usize, users: usize) -> CMatrix {
    CMatrix::from_column_slice(antennas, users, x.as_slice())
}

/// `Theta = [theta_1; ...; theta_N]`.
pub fn stack_theta(theta: &[CVector]) -> CVector {
    let all: Vec<C64> = theta.iter().flat_map(|t| t.iter().copied()).collect();
    CVector::from_vec(all)
}

/// Inverse of [`stack_theta`].
pub fn unstack_theta(x: &CVector, surfaces: usize, elements: usize) -> Vec<CVector> {
    (0..surfaces)
        .map(|n| x.rows(n * elements, elements).into_owned())
        .collect()
}

/// `sqrt(1 + 1 / SINR_min)`, or `None` when the target is not positive (no
/// SINR constraint).
fn cone_gain(sinr_min: f64) -> Option<f64> {
    (sinr_min > 0.0 && sinr_min.is_finite()).then(|| (1.0 + 1.0 / sinr_min).sqrt())
}

/// Row `r` placed in block `block` of a stacked vector of `blocks` blocks.
fn block_row(r: &CVector, block: usize, blocks: usize) -> CVector {
    let m = r.len();
    let mut out = CVector::zeros(m * blocks);
    out.rows_mut(block * m, m).copy_from(r);
    out
}

/// Precoder subproblem over `vec(P)` given `alpha` and `epsilon`:
///
/// ```text
/// maximize  -P^H Z P + 2 Re{V^H P} - g
/// s.t.      ||P||^2 <= P_max
///           sqrt(1 + 1/SINR_min) Re{H_k^H p_k} >= ||[H_k^H p_1, ..., H_k^H p_K, sigma]||
///           Im{H_k^H p_k} = 0
/// ```
///
/// with `Z = I_K (x) sum_k |eps_k|^2 H_k H_k^H`, `v_k = sqrt(1 + alpha_k) eps_k H_k`
/// and `g = sum_k |eps_k|^2 sigma^2`. The SINR cones are omitted when
/// `SINR_min <= 0`.
pub fn assemble_p_subproblem(
    state: &BeamformingState,
    fp: &FpState,
    channels: &ChannelSet,
    budget: &LinearBudget,
) -> ConeProblem {
    let rows = crate::system::effective_channels(state, channels);
    let (m, k) = (channels.antennas(), channels.users());
    let mut p = ConeProblem::new(m * k);

    let mut factor = CMatrix::zeros(k * k, m * k);
    for (u, row) in rows.iter().enumerate() {
        let scaled = row * C64::new(fp.epsilon[u].norm(), 0.0);
        for block in 0..k {
            factor
                .view_mut((u * k + block, block * m), (1, m))
                .copy_from(&scaled.transpose());
        }
    }
    p.q_factor = factor;
    for (u, row) in rows.iter().enumerate() {
        let v = row.map(|c| c.conj()) * (fp.epsilon[u] * (1.0 + fp.alpha[u]).sqrt());
        p.v.rows_mut(u * m, m).copy_from(&v);
    }
    p.constant = fp.epsilon.iter().map(|e| e.norm_sqr()).sum::<f64>() * budget.noise;
    p.balls.push(Ball {
        indices: (0..m * k).collect(),
        radius: budget.p_max.sqrt(),
    });

    if let Some(gain) = cone_gain(budget.sinr_min) {
        for (u, row) in rows.iter().enumerate() {
            p.socs.push(Soc {
                gain,
                lhs: AffineForm::linear(block_row(row, u, k)),
                rhs: (0..k)
                    .map(|i| AffineForm::linear(block_row(row, i, k)))
                    .collect(),
                sigma: budget.noise.sqrt(),
            });
        }
    }
    p
}

/// Linear coefficients of the phase block.
///
/// With `Theta` stacked, `g_ki = Theta^H B_{k,i} + d_ki` where block `n` of
/// `B_{k,i}` is `a_{n,k} diag(h_{n,k}^H) H_n p_i` and `d_ki = h_k^H p_i` is
/// the direct-link contribution (zero unless the direct link is active).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTerms {
    /// `b[k][i]` = `B_{k,i}` (length `N L`).
    pub b: Vec<Vec<CVector>>,
    /// `K x K` direct gains `d_ki`.
    pub direct: CMatrix,
}

impl ThetaTerms {
    pub fn new(state: &BeamformingState, channels: &ChannelSet) -> Self {
        let (n_s, k, l) = (channels.surfaces(), channels.users(), channels.elements());
        // H_n p_i for every surface and user.
        let incident: Vec<CMatrix> = channels
            .bs_irs
            .iter()
            .map(|h| h * &state.precoder)
            .collect();
        let b = (0..k)
            .map(|u| {
                (0..k)
                    .map(|i| {
                        let mut out = CVector::zeros(n_s * l);
                        for n in 0..n_s {
                            let a = state.selection[(n, u)];
                            if a == 0.0 {
                                continue;
                            }
                            let h = &channels.irs_user[n][u];
                            for e in 0..l {
                                out[n * l + e] = h[e] * incident[n][(e, i)] * a;
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        let direct = if channels.direct_active {
            CMatrix::from_fn(k, k, |u, i| {
                channels.direct[u].dot(&state.precoder.column(i))
            })
        } else {
            CMatrix::zeros(k, k)
        };
        ThetaTerms { b, direct }
    }

    pub fn users(&self) -> usize {
        self.b.len()
    }

    /// Gains `g_ki = Theta^H B_{k,i} + d_ki` at stacked phases `theta`.
    pub fn gains(&self, theta: &CVector) -> CMatrix {
        let k = self.users();
        CMatrix::from_fn(k, k, |u, i| theta.dotc(&self.b[u][i]) + self.direct[(u, i)])
    }
}

/// Phase-block ratio sum `f3a(Theta)`.
pub fn f3a(terms: &ThetaTerms, theta: &CVector, alpha: &[f64], noise: f64) -> f64 {
    ratio_sum(&terms.gains(theta), alpha, noise)
}

/// Phase-block quadratic transform `f3b(Theta, beta)`.
pub fn f3b(terms: &ThetaTerms, theta: &CVector, fp: &FpState, noise: f64) -> f64 {
    quadratic_transform(&terms.gains(theta), &fp.alpha, &fp.beta, noise)
}

/// Optimal `beta` for the current phases.
pub fn update_beta(terms: &ThetaTerms, theta: &CVector, alpha: &[f64], noise: f64) -> Vec<C64> {
    optimal_auxiliary(&terms.gains(theta), alpha, noise)
}

/// Phase subproblem over `Theta` given `alpha` and `beta`:
///
/// ```text
/// maximize  -Theta^H U Theta + 2 Re{Theta^H D} - c
/// s.t.      |theta_{n,l}| <= 1
///           sqrt(1 + 1/SINR_min) Re{g_kk} >= ||[g_k1, ..., g_kK, sigma]||
///           Im{g_kk} = 0
/// ```
///
/// with `U = sum_k |beta_k|^2 sum_i B_{k,i} B_{k,i}^H`; without the direct
/// link `D = sum_k sqrt(1 + alpha_k) beta_k^* B_{k,k}` and
/// `c = sum_k |beta_k|^2 sigma^2`. The direct gains `d_ki` add
/// `-sum_k |beta_k|^2 sum_i d_ki^* B_{k,i}` to `D` and
/// `sum_k |beta_k|^2 sum_i |d_ki|^2 - 2 sqrt(1 + alpha_k) Re{beta_k^* d_kk}` to
/// `c`, and enter the cones as offsets. The SINR cones are omitted when
/// `SINR_min <= 0`.
pub fn assemble_theta_subproblem(
    terms: &ThetaTerms,
    fp: &FpState,
    budget: &LinearBudget,
) -> ConeProblem {
    let k = terms.users();
    let dim = terms
        .b
        .first()
        .and_then(|r| r.first())
        .map_or(0, |b| b.len());
    let mut p = ConeProblem::new(dim);
    let noise = budget.noise;

    let mut factor = CMatrix::zeros(k * k, dim);
    for u in 0..k {
        let w = fp.beta[u].norm();
        for i in 0..k {
            let row = terms.b[u][i].map(|c| c.conj() * w);
            factor.row_mut(u * k + i).copy_from(&row.transpose());
        }
    }
    p.q_factor = factor;

    let mut constant = 0.0;
    for u in 0..k {
        let s = (1.0 + fp.alpha[u]).sqrt();
        let b2 = fp.beta[u].norm_sqr();
        p.v.axpy(fp.beta[u].conj() * s, &terms.b[u][u], C64::new(1.0, 0.0));
        for i in 0..k {
            let d = terms.direct[(u, i)];
            if d != C64::new(0.0, 0.0) {
                p.v.axpy(-d.conj() * b2, &terms.b[u][i], C64::new(1.0, 0.0));
                constant += b2 * d.norm_sqr();
            }
        }
        constant += b2 * noise - 2.0 * s * (fp.beta[u].conj() * terms.direct[(u, u)]).re;
    }
    p.constant = constant;
    p.boxed = (0..dim).collect();

    if let Some(gain) = cone_gain(budget.sinr_min) {
        let form = |u: usize, i: usize| AffineForm {
            row: terms.b[u][i].map(|c| c.conj()),
            offset: terms.direct[(u, i)].conj(),
        };
        for u in 0..k {
            p.socs.push(Soc {
                gain,
                lhs: form(u, u),
                rhs: (0..k).map(|i| form(u, i)).collect(),
                sigma: noise.sqrt(),
            });
        }
    }
    p
}

/// Projects every coordinate onto the unit circle; zeros map to `1`.
pub fn project_unit_modulus(theta: &CVector) -> CVector {
    theta.map(|t| {
        let r = t.norm();
        if r > 0.0 {
            t / r
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{stream, Stream};
    use crate::system::testing::{random_channels, random_state};
    use crate::system::{sinrs, sum_rate};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn budget(sinr_min: f64) -> LinearBudget {
        LinearBudget {
            p_max: 4.0,
            noise: 0.7,
            sinr_min,
        }
    }

    fn instance(seed: u64, direct: bool) -> (ChannelSet, BeamformingState) {
        let mut rng = stream(seed, Stream::Angles);
        let mut ch = random_channels(&mut rng, 4, 3, 3, 5);
        ch.direct_active = direct;
        let st = random_state(&mut rng, &ch);
        (ch, st)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn alpha_is_the_sinr() {
        assert_eq!(update_alpha(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(update_alpha(&[3.0]), vec![3.0]);
        assert_eq!(f1a_value(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn f1a_is_tight_at_alpha_opt() {
        for seed in 0..20 {
            let (ch, st) = instance(seed, seed % 2 == 0);
            let s = sinrs(&st, &ch, 0.7);
            let fp = FpState {
                alpha: update_alpha(&s),
                ..FpState::new(3)
            };
            let rate = sum_rate(&st, &ch, 0.7);
            assert!(rel(f1a(&st, &fp, &ch, 0.7), rate) <= 1e-10);
        }
    }

    #[test]
    fn f1a_is_maximized_per_user_at_the_sinr() {
        for s in [0.0, 0.3, 1.0, 7.5] {
            let best = f1a_value(&[s], &[s]);
            for a in (0..400).map(|i| i as f64 * 0.05) {
                let v = f1a_value(&[s], &[a]);
                assert!(v <= best + 1e-14, "alpha {a} beats optimum at sinr {s}");
                if (a - s).abs() > 1e-9 {
                    assert!(v < best);
                }
            }
        }
    }

    #[test]
    fn epsilon_examples() {
        // One user: H^H p = 1, sigma^2 = 1, alpha = 0 -> eps = 1 / 2.
        let g = CMatrix::from_element(1, 1, c(1.0, 0.0));
        assert_relative_eq!(optimal_auxiliary(&g, &[0.0], 1.0)[0].re, 0.5);
        let (ch, mut st) = instance(1, false);
        st.precoder.fill(c(0.0, 0.0));
        let fp = FpState::new(3);
        assert!(update_epsilon(&st, &fp, &ch, 0.7)
            .iter()
            .all(|e| e.norm() == 0.0));
    }

    #[test]
    fn quadratic_transforms_are_tight() {
        for seed in 0..30 {
            let (ch, st) = instance(seed, seed % 3 == 0);
            let mut fp = FpState::new(3);
            fp.alpha = sinrs(&st, &ch, 0.7);
            fp.epsilon = update_epsilon(&st, &fp, &ch, 0.7);
            assert!(rel(f2a(&st, &fp, &ch, 0.7), f2(&st, &fp.alpha, &ch, 0.7)) <= 1e-10);

            let terms = ThetaTerms::new(&st, &ch);
            let theta = stack_theta(&st.theta);
            fp.beta = update_beta(&terms, &theta, &fp.alpha, 0.7);
            assert!(
                rel(
                    f3b(&terms, &theta, &fp, 0.7),
                    f3a(&terms, &theta, &fp.alpha, 0.7)
                ) <= 1e-10
            );
            // The phase-block ratio sum is the precoder-block one in other
            // coordinates.
            assert!(
                rel(
                    f3a(&terms, &theta, &fp.alpha, 0.7),
                    f2(&st, &fp.alpha, &ch, 0.7)
                ) <= 1e-12
            );
        }
    }

    #[test]
    fn auxiliaries_are_maximizers() {
        let (ch, st) = instance(4, true);
        let mut fp = FpState::new(3);
        fp.alpha = sinrs(&st, &ch, 0.7);
        fp.epsilon = update_epsilon(&st, &fp, &ch, 0.7);
        let terms = ThetaTerms::new(&st, &ch);
        let theta = stack_theta(&st.theta);
        fp.beta = update_beta(&terms, &theta, &fp.alpha, 0.7);
        let base2 = f2a(&st, &fp, &ch, 0.7);
        let base3 = f3b(&terms, &theta, &fp, 0.7);
        for k in 0..3 {
            for d in [c(1e-3, 0.0), c(-1e-3, 0.0), c(0.0, 1e-3), c(0.0, -1e-3)] {
                let mut e = fp.clone();
                e.epsilon[k] += d;
                assert!(f2a(&st, &e, &ch, 0.7) <= base2);
                let mut b = fp.clone();
                b.beta[k] += d;
                assert!(f3b(&terms, &theta, &b, 0.7) <= base3);
            }
        }
    }

    #[test]
    fn theta_terms_reproduce_the_link_gains() {
        for direct in [false, true] {
            let (ch, st) = instance(5, direct);
            let terms = ThetaTerms::new(&st, &ch);
            let want = link_gains(&st, &ch);
            let got = terms.gains(&stack_theta(&st.theta));
            assert!((got - &want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn p_subproblem_objective_is_f2a() {
        for seed in 0..20 {
            let (ch, st) = instance(seed, seed % 2 == 1);
            let mut fp = FpState::new(3);
            let mut rng = stream(seed, Stream::InitPhases);
            fp.alpha = (0..3).map(|_| rng.random_range(0.0..4.0)).collect();
            fp.epsilon = (0..3)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let prob = assemble_p_subproblem(&st, &fp, &ch, &budget(0.5));
            // Evaluate at an unrelated precoder.
            let mut other = st.clone();
            other.precoder = random_state(&mut rng, &ch).precoder;
            let x = stack_precoder(&other.precoder);
            assert!(rel(prob.objective(&x), f2a(&other, &fp, &ch, 0.7)) <= 1e-10);
            let q = prob.q();
            let eig = q.clone().symmetric_eigen().eigenvalues;
            assert!(eig.min() >= -1e-9 * q.norm());
            assert!(prob.validate().is_ok());
        }
    }

    #[test]
    fn p_subproblem_structure() {
        let (ch, st) = instance(6, false);
        let mut fp = FpState::new(3);
        fp.epsilon = vec![c(0.3, 0.1); 3];
        let prob = assemble_p_subproblem(&st, &fp, &ch, &budget(0.5));
        assert_eq!(prob.dim, 12);
        assert_eq!(prob.balls.len(), 1);
        assert_relative_eq!(prob.balls[0].radius, 2.0);
        assert_eq!(prob.socs.len(), 3);
        // Z = I_K (x) z: off-diagonal blocks vanish, diagonal blocks agree.
        let q = prob.q();
        for a in 0..3 {
            for b in 0..3 {
                let block = q.view((4 * a, 4 * b), (4, 4));
                if a == b {
                    assert!((block - q.view((0, 0), (4, 4))).norm() <= 1e-12);
                } else {
                    assert_eq!(block.norm(), 0.0);
                }
            }
        }
        // SOC sides: lhs is H_k^H p_k, rhs lists all H_k^H p_i plus sigma.
        let gains = link_gains(&st, &ch);
        let x = stack_precoder(&st.precoder);
        let soc = &prob.socs[1];
        assert!((soc.lhs.eval(&x) - gains[(1, 1)]).norm() <= 1e-12);
        let (_, right, _) = soc.sides(&x);
        let want = (gains.row(1).iter().map(|g| g.norm_sqr()).sum::<f64>() + 0.7).sqrt();
        assert_relative_eq!(right, want, max_relative = 1e-12);
        assert_relative_eq!(soc.gain, 3.0f64.sqrt(), max_relative = 1e-15);
        assert!(assemble_p_subproblem(&st, &fp, &ch, &budget(0.0))
            .socs
            .is_empty());
    }

    #[test]
    fn single_user_q_has_rank_one() {
        let mut rng = stream(7, Stream::Angles);
        let ch = random_channels(&mut rng, 5, 2, 1, 3);
        let mut st = random_state(&mut rng, &ch);
        st.selection.fill(1.0);
        let mut fp = FpState::new(1);
        fp.epsilon = vec![c(0.4, -0.2)];
        let prob = assemble_p_subproblem(&st, &fp, &ch, &budget(0.5));
        assert_eq!(prob.q_factor.nrows(), 1);
        let eig = prob.q().symmetric_eigen().eigenvalues;
        let big = eig.iter().filter(|e| e.abs() > 1e-12 * eig.amax()).count();
        assert_eq!(big, 1);
    }

    #[test]
    fn theta_subproblem_objective_is_f3b() {
        for seed in 0..20 {
            let (ch, st) = instance(seed, seed % 2 == 0);
            let terms = ThetaTerms::new(&st, &ch);
            let mut rng = stream(seed, Stream::InitPhases);
            let mut fp = FpState::new(3);
            fp.alpha = (0..3).map(|_| rng.random_range(0.0..4.0)).collect();
            fp.beta = (0..3)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let prob = assemble_theta_subproblem(&terms, &fp, &budget(0.5));
            let theta = stack_theta(&random_state(&mut rng, &ch).theta);
            assert!(rel(prob.objective(&theta), f3b(&terms, &theta, &fp, 0.7)) <= 1e-10);
            let q = prob.q();
            assert!(q.clone().symmetric_eigen().eigenvalues.min() >= -1e-9 * q.norm());
            assert_eq!(prob.boxed.len(), 15);
            // Cone forms evaluate to conj(g_ki).
            let gains = terms.gains(&theta);
            for (u, soc) in prob.socs.iter().enumerate() {
                for (i, f) in soc.rhs.iter().enumerate() {
                    assert!((f.eval(&theta) - gains[(u, i)].conj()).norm() <= 1e-12 * gains.norm());
                }
            }
        }
    }

    #[test]
    fn unassigned_surface_does_not_enter_the_phase_problem() {
        let (ch, mut st) = instance(8, false);
        st.selection.row_mut(1).fill(0.0);
        let terms = ThetaTerms::new(&st, &ch);
        for row in &terms.b {
            for b in row {
                assert!(b.rows(5, 5).iter().all(|z| z.norm() == 0.0));
            }
        }
        let mut fp = FpState::new(3);
        fp.beta = vec![c(0.2, 0.3); 3];
        fp.alpha = vec![1.0; 3];
        let prob = assemble_theta_subproblem(&terms, &fp, &budget(0.5));
        let base = stack_theta(&st.theta);
        let mut moved = base.clone();
        for e in 5..10 {
            moved[e] = c(-0.3, 0.9);
        }
        assert_relative_eq!(
            prob.objective(&base),
            prob.objective(&moved),
            max_relative = 1e-14
        );
    }

    #[test]
    fn scalar_beta_example() {
        // N = L = K = 1, a = 1, Theta^H B = 1, sigma^2 = 1, alpha = 0 -> 1/2.
        let terms = ThetaTerms {
            b: vec![vec![CVector::from_element(1, c(1.0, 0.0))]],
            direct: CMatrix::zeros(1, 1),
        };
        let theta = CVector::from_element(1, c(1.0, 0.0));
        assert_relative_eq!(update_beta(&terms, &theta, &[0.0], 1.0)[0].re, 0.5);
        let (ch, mut st) = instance(9, false);
        st.precoder.fill(c(0.0, 0.0));
        let terms = ThetaTerms::new(&st, &ch);
        let beta = update_beta(&terms, &stack_theta(&st.theta), &[1.0; 3], 0.7);
        assert!(beta.iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn projection_examples() {
        let third = std::f64::consts::FRAC_PI_3;
        let x = CVector::from_vec(vec![C64::from_polar(0.5, third), c(0.0, 0.0), c(-3.0, 4.0)]);
        let y = project_unit_modulus(&x);
        assert!((y[0] - C64::from_polar(1.0, third)).norm() < 1e-15);
        assert_eq!(y[1], c(1.0, 0.0));
        assert!(y.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn stacking_round_trips() {
        let (ch, st) = instance(10, false);
        let x = stack_precoder(&st.precoder);
        assert_eq!(x[5], st.precoder[(1, 1)]);
        assert_eq!(unstack_precoder(&x, 4, 3), st.precoder);
        let t = stack_theta(&st.theta);
        assert_eq!(t[7], st.theta[1][2]);
        assert_eq!(unstack_theta(&t, ch.surfaces(), ch.elements()), st.theta);
    }
}
