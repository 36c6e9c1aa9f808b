//! Saleh-Valenzuela mmWave channel synthesis.
//!
//! Every link is a sum of a few rank-one propagation paths. The first path of
//! each link is the line-of-sight path: its azimuth follows from the planar
//! geometry and its gain uses the LOS path-loss parameters. The remaining
//! paths use the NLOS parameters at the same link distance and draw their
//! azimuth uniformly on `[-pi/2, pi/2]`. Geometry is planar, so every
//! elevation angle (only the surface arrays use one) is drawn uniformly on
//! `[-pi/4, pi/4]`.
//!
//! Storage convention: user-side channels are stored as the entries of the
//! row vectors `h_k^H` and `h_{n,k}^H` (so `h_k^H p` is the plain dot product
//! of the stored vector with `p`), while `H_n` is stored as the `L x M`
//! matrix itself.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scenario::{stream, Layout, ScenarioConfig, Stream};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Log-distance path loss `kappa = a + 10 b log10(d) + xi`, `xi ~ N(0, sigma_xi^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossParams {
    pub a: f64,
    pub b: f64,
    pub sigma_xi: f64,
}

impl PathLossParams {
    /// Line-of-sight parameters of the reference deployment.
    pub fn los() -> Self {
        PathLossParams {
            a: 61.4,
            b: 2.0,
            sigma_xi: 5.8,
        }
    }

    /// Non-line-of-sight parameters of the reference deployment.
    pub fn nlos() -> Self {
        PathLossParams {
            a: 72.0,
            b: 2.92,
            sigma_xi: 8.7,
        }
    }

    /// Path loss in dB at distance `d` for a given shadowing draw.
    pub fn kappa_db(&self, d: f64, xi: f64) -> f64 {
        self.a + 10.0 * self.b * d.log10() + xi
    }

    /// Mean path power `E|g|^2` including the log-normal shadowing mean.
    pub fn mean_power(&self, d: f64) -> f64 {
        let s = self.sigma_xi * std::f64::consts::LN_10 / 10.0;
        10f64.powf(-0.1 * self.kappa_db(d, 0.0)) * (0.5 * s * s).exp()
    }
}

/// Uniform linear array response, entry `m` = `exp(j pi m sin(phi)) / sqrt(M)`.
pub fn ula_response(phi: f64, m: usize) -> CVector {
    let norm = 1.0 / (m as f64).sqrt();
    let s = phi.sin();
    CVector::from_fn(m, |i, _| C64::from_polar(norm, PI * i as f64 * s))
}

/// Uniform planar array response over an `L_v x L_h` grid.
///
/// Element `(l_v, l_h)` has phase `pi (l_v sin(az) sin(el) + l_h cos(el))`
/// and sits at index `l_v * L_h + l_h` (vertical-major).
pub fn upa_response(az: f64, el: f64, rows: usize, cols: usize) -> CVector {
    let norm = 1.0 / ((rows * cols) as f64).sqrt();
    let (v, h) = (az.sin() * el.sin(), el.cos());
    CVector::from_fn(rows * cols, |i, _| {
        let (lv, lh) = ((i / cols) as f64, (i % cols) as f64);
        C64::from_polar(norm, PI * (lv * v + lh * h))
    })
}

/// Draws one complex path gain `~ CN(0, 10^(-kappa/10))` with fresh shadowing.
pub fn sample_path_gain<R: Rng + ?Sized>(
    d: f64,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<C64> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::NonPositiveDistance(d));
    }
    let z: f64 = StandardNormal.sample(rng);
    let xi = params.sigma_xi * z;
    Ok(scaled_gain(10f64.powf(-0.1 * params.kappa_db(d, xi)), rng))
}

/// Circularly-symmetric complex Gaussian with the given variance.
fn scaled_gain<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * (0.5 * variance).sqrt()
}

/// Random streams feeding the generators.
pub struct ChannelRng<'a, R: Rng + ?Sized> {
    pub gains: &'a mut R,
    pub angles: &'a mut R,
}

fn path_params(config: &ScenarioConfig, path: usize) -> &PathLossParams {
    if path == 0 {
        &config.pathloss_los
    } else {
        &config.pathloss_nlos
    }
}

fn nlos_azimuth<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-FRAC_PI_2..=FRAC_PI_2)
}

fn elevation<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-FRAC_PI_4..=FRAC_PI_4)
}

/// Direct mBS -> user rows `h_k^H = sqrt(M / N_BU) sum_l rho_l a_t(phi_l)`.
pub fn gen_direct_channel<R: Rng + ?Sized>(
    layout: &Layout,
    config: &ScenarioConfig,
    rng: &mut ChannelRng<'_, R>,
) -> Result<Vec<CVector>> {
    let m = config.antennas;
    let paths = config.n_paths_bs_user;
    let scale = (m as f64 / paths as f64).sqrt();
    (0..config.users)
        .map(|k| {
            let d = layout.dist_bs_user[k];
            let mut h = CVector::zeros(m);
            for l in 0..paths {
                let phi = if l == 0 {
                    layout.az_bs_user[k]
                } else {
                    nlos_azimuth(rng.angles)
                };
                let g = sample_path_gain(d, path_params(config, l), rng.gains)?;
                h.axpy(g * scale, &ula_response(phi, m), C64::new(1.0, 0.0));
            }
            Ok(h)
        })
        .collect()
}

/// mBS -> surface matrices `H_n = sqrt(ML / N_BI) sum_l zeta_l a_r a_t^H` (`L x M`).
pub fn gen_bs_irs_channel<R: Rng + ?Sized>(
    layout: &Layout,
    config: &ScenarioConfig,
    rng: &mut ChannelRng<'_, R>,
) -> Result<Vec<CMatrix>> {
    let (m, l_count) = (config.antennas, config.elements());
    let paths = config.n_paths_bs_irs;
    let scale = ((m * l_count) as f64 / paths as f64).sqrt();
    (0..config.surfaces)
        .map(|n| {
            let d = layout.dist_bs_irs[n];
            let mut h = CMatrix::zeros(l_count, m);
            for l in 0..paths {
                let (aod, aoa) = if l == 0 {
                    (layout.az_bs_irs[n], layout.az_irs_bs[n])
                } else {
                    (nlos_azimuth(rng.angles), nlos_azimuth(rng.angles))
                };
                let el = elevation(rng.angles);
                let g = sample_path_gain(d, path_params(config, l), rng.gains)?;
                let ar = upa_response(aoa, el, config.rows, config.cols);
                let at = ula_response(aod, m);
                h += (ar * at.adjoint()) * (g * scale);
            }
            Ok(h)
        })
        .collect()
}

/// Surface -> user rows `h_{n,k}^H = sqrt(L / N_Ik) sum_l g_l a_t(az, el)`,
/// indexed `[n][k]`.
pub fn gen_irs_user_channel<R: Rng + ?Sized>(
    layout: &Layout,
    config: &ScenarioConfig,
    rng: &mut ChannelRng<'_, R>,
) -> Result<Vec<Vec<CVector>>> {
    let l_count = config.elements();
    let paths = config.n_paths_irs_user;
    let scale = (l_count as f64 / paths as f64).sqrt();
    (0..config.surfaces)
        .map(|n| {
            (0..config.users)
                .map(|k| {
                    let d = layout.dist_irs_user[n][k];
                    let mut h = CVector::zeros(l_count);
                    for l in 0..paths {
                        let az = if l == 0 {
                            layout.az_irs_user[n][k]
                        } else {
                            nlos_azimuth(rng.angles)
                        };
                        let el = elevation(rng.angles);
                        let g = sample_path_gain(d, path_params(config, l), rng.gains)?;
                        let a = upa_response(az, el, config.rows, config.cols);
                        h.axpy(g * scale, &a, C64::new(1.0, 0.0));
                    }
                    Ok(h)
                })
                .collect()
        })
        .collect()
}

/// Realized channels of one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Rows `h_k^H`, one per user (length M).
    pub direct: Vec<CVector>,
    /// `H_n`, one `L x M` matrix per surface.
    pub bs_irs: Vec<CMatrix>,
    /// Rows `h_{n,k}^H` (length L), indexed `[n][k]`.
    pub irs_user: Vec<Vec<CVector>>,
    /// Whether the direct link contributes to the received signal.
    pub direct_active: bool,
}

impl ChannelSet {
    /// Synthesizes all links of a drop from the drop's seed.
    ///
    /// Gains come from the [`Stream::PathGains`] stream and angles from the
    /// [`Stream::Angles`] stream; links are drawn in the order mBS->surface,
    /// surface->user, mBS->user.
    pub fn generate(config: &ScenarioConfig, layout: &Layout, seed: u64) -> Result<Self> {
        let mut gains = stream(seed, Stream::PathGains);
        let mut angles = stream(seed, Stream::Angles);
        let mut rng = ChannelRng {
            gains: &mut gains,
            angles: &mut angles,
        };
        let bs_irs = gen_bs_irs_channel(layout, config, &mut rng)?;
        let irs_user = gen_irs_user_channel(layout, config, &mut rng)?;
        let direct = gen_direct_channel(layout, config, &mut rng)?;
        Ok(ChannelSet {
            direct,
            bs_irs,
            irs_user,
            direct_active: config.include_direct_link,
        })
    }

    pub fn antennas(&self) -> usize {
        self.bs_irs.first().map_or(0, |h| h.ncols())
    }

    pub fn surfaces(&self) -> usize {
        self.bs_irs.len()
    }

    pub fn users(&self) -> usize {
        self.direct.len()
    }

    pub fn elements(&self) -> usize {
        self.bs_irs.first().map_or(0, |h| h.nrows())
    }

    /// Checks shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (m, l, k) = (self.antennas(), self.elements(), self.users());
        let finite = |v: &[C64]| v.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if self
            .bs_irs
            .iter()
            .any(|h| h.shape() != (l, m) || !finite(h.as_slice()))
        {
            return Err(Error::Shape(
                "mBS->surface matrices must be L x M and finite".into(),
            ));
        }
        if self
            .direct
            .iter()
            .any(|h| h.len() != m || !finite(h.as_slice()))
        {
            return Err(Error::Shape("direct rows must have length M".into()));
        }
        if self.irs_user.len() != self.surfaces()
            || self
                .irs_user
                .iter()
                .any(|r| r.len() != k || r.iter().any(|h| h.len() != l || !finite(h.as_slice())))
        {
            return Err(Error::Shape(
                "surface->user rows must be N x K vectors of length L".into(),
            ));
        }
        Ok(())
    }

    /// Serializes the channels together with the config hash and seed.
    pub fn to_dump(&self, config: &ScenarioConfig, seed: u64) -> String {
        let dump = ChannelDump {
            config_hash: config.hash(),
            seed,
            direct_active: self.direct_active,
            direct: self.direct.iter().map(|v| pairs(v.as_slice())).collect(),
            bs_irs: self
                .bs_irs
                .iter()
                .map(|h| {
                    h.row_iter()
                        .map(|r| pairs(&r.iter().copied().collect::<Vec<_>>()))
                        .collect()
                })
                .collect(),
            irs_user: self
                .irs_user
                .iter()
                .map(|r| r.iter().map(|v| pairs(v.as_slice())).collect())
                .collect(),
        };
        serde_json::to_string(&dump).expect("dump serializes")
    }

    /// Restores a dump written by [`ChannelSet::to_dump`] after checking that
    /// it belongs to `config`. Returns the channels and the drop seed.
    pub fn from_dump(text: &str, config: &ScenarioConfig) -> Result<(Self, u64)> {
        let dump: ChannelDump = serde_json::from_str(text)?;
        let expected = config.hash();
        if dump.config_hash != expected {
            return Err(Error::HashMismatch {
                expected,
                found: dump.config_hash,
            });
        }
        let vec = |p: &Vec<[f64; 2]>| {
            CVector::from_iterator(p.len(), p.iter().map(|c| C64::new(c[0], c[1])))
        };
        let mut bs_irs = Vec::with_capacity(dump.bs_irs.len());
        for rows in &dump.bs_irs {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Shape("ragged mBS->surface matrix".into()));
            }
            bs_irs.push(DMatrix::from_fn(rows.len(), cols, |i, j| {
                C64::new(rows[i][j][0], rows[i][j][1])
            }));
        }
        let set = ChannelSet {
            direct: dump.direct.iter().map(vec).collect(),
            bs_irs,
            irs_user: dump
                .irs_user
                .iter()
                .map(|r| r.iter().map(vec).collect())
                .collect(),
            direct_active: dump.direct_active,
        };
        set.validate()?;
        if (set.antennas(), set.surfaces(), set.users(), set.elements())
            != (
                config.antennas,
                config.surfaces,
                config.users,
                config.elements(),
            )
        {
            return Err(Error::Shape("dump dimensions differ from config".into()));
        }
        Ok((set, dump.seed))
    }
}

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

/// On-disk channel format: complex numbers as `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct ChannelDump {
    config_hash: String,
    seed: u64,
    direct_active: bool,
    direct: Vec<Vec<[f64; 2]>>,
    bs_irs: Vec<Vec<Vec<[f64; 2]>>>,
    irs_user: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Real-valued helper used by moment checks: `|v|^2` summed.
pub fn power(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}
