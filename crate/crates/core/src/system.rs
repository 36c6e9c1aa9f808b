//! Cascaded and effective channels, SINR and achievable rates.
//!
//! The per-link gain `g_{k,i} = H_k^H p_i` (user `k` listening, precoder of
//! user `i`) is the central quantity; everything else derives from the
//! `K x K` gain matrix returned by [`link_gains`].

use nalgebra::DMatrix;

use crate::channel::ChannelSet;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Transmit precoder, surface phases and surface-to-user selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState {
    /// `M x K` precoder, column `k` is `p_k`.
    pub precoder: CMatrix,
    /// Per-surface reflection vectors `theta_n` (diagonal of `Theta_n`).
    pub theta: Vec<CVector>,
    /// `N x K` selection matrix with entries in {0, 1}.
    pub selection: DMatrix<f64>,
}

impl BeamformingState {
    /// Total transmit power `sum_k ||p_k||^2`.
    pub fn power(&self) -> f64 {
        self.precoder.norm_squared()
    }

    /// Builds the one-hot selection matrix from a per-surface user index.
    pub fn selection_from(assignment: &[usize], users: usize) -> DMatrix<f64> {
        DMatrix::from_fn(assignment.len(), users, |n, k| {
            f64::from(u8::from(assignment[n] == k))
        })
    }

    /// Per-surface served user when every row of the selection is one-hot.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        self.selection
            .row_iter()
            .map(|r| {
                let ones: Vec<usize> = (0..r.len()).filter(|&k| r[k] == 1.0).collect();
                (ones.len() == 1 && r.iter().all(|&a| a == 0.0 || a == 1.0)).then(|| ones[0])
            })
            .collect()
    }
}

/// `theta_n^H diag(h_{n,k}^H) H_n`, returned as the entries of a length-`M` row.
pub fn cascaded_channel(irs_user: &CVector, theta: &CVector, bs_irs: &CMatrix) -> Result<CVector> {
    let l = bs_irs.nrows();
    if irs_user.len() != l || theta.len() != l {
        return Err(Error::Shape(format!(
            "cascade needs length-{l} vectors, got {} and {}",
            irs_user.len(),
            theta.len()
        )));
    }
    let weights = CVector::from_fn(l, |i, _| theta[i].conj() * irs_user[i]);
    Ok(bs_irs.transpose() * weights)
}

/// Cascaded rows for every (surface, user) pair, indexed `[n][k]`.
pub fn cascades(state: &BeamformingState, channels: &ChannelSet) -> Vec<Vec<CVector>> {
    channels
        .bs_irs
        .iter()
        .enumerate()
        .map(|(n, h)| {
            channels.irs_user[n]
                .iter()
                .map(|hk| cascaded_channel(hk, &state.theta[n], h).expect("consistent shapes"))
                .collect()
        })
        .collect()
}

/// `H_k^H = sum_n a_{n,k} hat h_{n,k}^H` (+ `h_k^H` when the direct link is on).
pub fn effective_channel(state: &BeamformingState, channels: &ChannelSet, k: usize) -> CVector {
    let mut row = if channels.direct_active {
        channels.direct[k].clone()
    } else {
        CVector::zeros(channels.antennas())
    };
    for n in 0..channels.surfaces() {
        let a = state.selection[(n, k)];
        if a != 0.0 {
            let c = cascaded_channel(
                &channels.irs_user[n][k],
                &state.theta[n],
                &channels.bs_irs[n],
            )
            .expect("consistent shapes");
            row.axpy(C64::new(a, 0.0), &c, C64::new(1.0, 0.0));
        }
    }
    row
}

/// Effective rows of all users.
pub fn effective_channels(state: &BeamformingState, channels: &ChannelSet) -> Vec<CVector> {
    (0..channels.users())
        .map(|k| effective_channel(state, channels, k))
        .collect()
}

/// `K x K` gains `G[(k, i)] = H_k^H p_i` for given effective rows.
pub fn gains_from_rows(rows: &[CVector], precoder: &CMatrix) -> CMatrix {
    CMatrix::from_fn(rows.len(), precoder.ncols(), |k, i| {
        rows[k].dot(&precoder.column(i))
    })
}

/// `K x K` gains `G[(k, i)] = H_k^H p_i`.
pub fn link_gains(state: &BeamformingState, channels: &ChannelSet) -> CMatrix {
    gains_from_rows(&effective_channels(state, channels), &state.precoder)
}

/// SINR of user `k` from a gain matrix (interference over `i != k`).
pub fn sinr_from_gains(gains: &CMatrix, noise: f64, k: usize) -> f64 {
    let interference: f64 = (0..gains.ncols())
        .filter(|&i| i != k)
        .map(|i| gains[(k, i)].norm_sqr())
        .sum();
    gains[(k, k)].norm_sqr() / (interference + noise)
}

/// SINR of every user from a gain matrix.
pub fn sinrs_from_gains(gains: &CMatrix, noise: f64) -> Vec<f64> {
    (0..gains.nrows())
        .map(|k| sinr_from_gains(gains, noise, k))
        .collect()
}

/// SINR of user `k`.
pub fn sinr(state: &BeamformingState, channels: &ChannelSet, noise: f64, k: usize) -> f64 {
    let row = effective_channel(state, channels, k);
    let g = gains_from_rows(std::slice::from_ref(&row), &state.precoder);
    let interference: f64 = (0..g.ncols())
        .filter(|&i| i != k)
        .map(|i| g[(0, i)].norm_sqr())
        .sum();
    g[(0, k)].norm_sqr() / (interference + noise)
}

/// SINR of every user.
pub fn sinrs(state: &BeamformingState, channels: &ChannelSet, noise: f64) -> Vec<f64> {
    sinrs_from_gains(&link_gains(state, channels), noise)
}

/// `log2(1 + SINR_k)` per user.
pub fn user_rates(state: &BeamformingState, channels: &ChannelSet, noise: f64) -> Vec<f64> {
    sinrs(state, channels, noise)
        .into_iter()
        .map(|s| (1.0 + s).log2())
        .collect()
}

/// `sum_k log2(1 + SINR_k)` in bps/Hz.
pub fn sum_rate(state: &BeamformingState, channels: &ChannelSet, noise: f64) -> f64 {
    rate_of_sinrs(&sinrs(state, channels, noise))
}

/// `sum_k log2(1 + s_k)`.
pub fn rate_of_sinrs(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

/// Random unit-scale instances for tests, examples and benchmarks.
pub mod testing {
    use nalgebra::DMatrix;
    use rand::Rng;

    use super::BeamformingState;
    use crate::channel::ChannelSet;
    use crate::{CMatrix, CVector, C64};

    fn entry<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    /// Vector with entries uniform on the square `[-1, 1] x [-1, 1]`.
    pub fn random_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| entry(rng))
    }

    /// Random precoder and phases with a random 0/1 selection matrix.
    pub fn random_state<R: Rng + ?Sized>(rng: &mut R, channels: &ChannelSet) -> BeamformingState {
        let (m, k, l) = (channels.antennas(), channels.users(), channels.elements());
        BeamformingState {
            precoder: CMatrix::from_fn(m, k, |_, _| entry(rng)),
            theta: (0..channels.surfaces())
                .map(|_| random_vec(rng, l))
                .collect(),
            selection: DMatrix::from_fn(channels.surfaces(), k, |_, _| {
                f64::from(rng.random_range(0..2u8))
            }),
        }
    }

    /// Unit-scale random channels (`m` antennas, `n` surfaces, `k` users,
    /// `l` elements) with the direct link switched off.
    pub fn random_channels<R: Rng + ?Sized>(
        rng: &mut R,
        m: usize,
        n: usize,
        k: usize,
        l: usize,
    ) -> ChannelSet {
        ChannelSet {
            direct: (0..k).map(|_| random_vec(rng, m)).collect(),
            bs_irs: (0..n)
                .map(|_| CMatrix::from_fn(l, m, |_, _| entry(rng)))
                .collect(),
            irs_user: (0..n)
                .map(|_| (0..k).map(|_| random_vec(rng, l)).collect())
                .collect(),
            direct_active: false,
        }
    }
}
