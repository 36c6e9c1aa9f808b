//! Scenario configuration, geometry and seeded randomness.
//!
//! A [`ScenarioConfig`] is read from a JSON document whose keys match the
//! field names used in the literature (`M`, `N`, `K`, `L_v`, `L_h`, ...).
//! Only `M`, `N` and `K` are mandatory; everything else defaults to the
//! reference deployment (mBS at the origin, six surfaces at x = 60/100/140 m,
//! y = +-40 m, users in a 10 m disc around (100, 0)).
//!
//! All power-like quantities are stored in dB in the document and converted
//! once through [`ScenarioConfig::budget`]; the optimizer only ever sees the
//! linear [`LinearBudget`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::PathLossParams;
use crate::{Error, Result};

/// Planar position in meters.
pub type Point = [f64; 2];

/// Surface positions of the reference deployment, in order.
pub const REFERENCE_IRS_POSITIONS: [Point; 6] = [
    [60.0, 40.0],
    [60.0, -40.0],
    [100.0, 40.0],
    [100.0, -40.0],
    [140.0, 40.0],
    [140.0, -40.0],
];

/// Disc in which users are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRegion {
    pub center: Point,
    pub radius: f64,
}

/// Full description of one simulated deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct ScenarioConfig {
    /// Antennas at the mBS (ULA).
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Number of surfaces.
    #[serde(rename = "N")]
    pub surfaces: usize,
    /// Number of single-antenna users.
    #[serde(rename = "K")]
    pub users: usize,
    /// Vertical element count per surface.
    #[serde(rename = "L_v")]
    pub rows: usize,
    /// Horizontal element count per surface.
    #[serde(rename = "L_h")]
    pub cols: usize,
    pub mbs_position: Point,
    pub irs_positions: Vec<Point>,
    pub user_region: UserRegion,
    #[serde(rename = "P_max_dbm")]
    pub p_max_dbm: f64,
    pub sinr_min_db: f64,
    pub noise_dbm: f64,
    pub n_paths_bs_irs: usize,
    pub n_paths_irs_user: usize,
    pub n_paths_bs_user: usize,
    pub pathloss_los: PathLossParams,
    pub pathloss_nlos: PathLossParams,
    pub seed: u64,
    /// Adds the direct mBS->user path to the received signal. Off by
    /// default: the direct links are treated as blocked.
    pub include_direct_link: bool,
}

/// Linear-unit view of the power-related fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBudget {
    /// Transmit power budget in mW.
    pub p_max: f64,
    /// Noise power in mW.
    pub noise: f64,
    /// Minimum SINR (linear ratio).
    pub sinr_min: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "M")]
    antennas: usize,
    #[serde(rename = "N")]
    surfaces: usize,
    #[serde(rename = "K")]
    users: usize,
    #[serde(rename = "L_v", default = "default_side")]
    rows: usize,
    #[serde(rename = "L_h", default = "default_side")]
    cols: usize,
    #[serde(default)]
    mbs_position: Point,
    #[serde(default)]
    irs_positions: Option<Vec<Point>>,
    #[serde(default = "default_region")]
    user_region: UserRegion,
    #[serde(rename = "P_max_dbm", default = "default_pmax")]
    p_max_dbm: f64,
    #[serde(default = "default_sinr_min")]
    sinr_min_db: f64,
    #[serde(default = "default_noise")]
    noise_dbm: f64,
    #[serde(default = "default_paths_bs_irs")]
    n_paths_bs_irs: usize,
    #[serde(default = "default_paths_irs_user")]
    n_paths_irs_user: usize,
    #[serde(default = "default_paths_bs_user")]
    n_paths_bs_user: usize,
    #[serde(default = "PathLossParams::los")]
    pathloss_los: PathLossParams,
    #[serde(default = "PathLossParams::nlos")]
    pathloss_nlos: PathLossParams,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    include_direct_link: bool,
}

fn default_side() -> usize {
    8
}
fn default_region() -> UserRegion {
    UserRegion {
        center: [100.0, 0.0],
        radius: 10.0,
    }
}
fn default_pmax() -> f64 {
    30.0
}
fn default_sinr_min() -> f64 {
    -20.0
}
fn default_noise() -> f64 {
    -90.0
}
fn default_paths_bs_irs() -> usize {
    5
}
fn default_paths_irs_user() -> usize {
    1
}
fn default_paths_bs_user() -> usize {
    3
}

impl TryFrom<RawConfig> for ScenarioConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        let irs_positions = match raw.irs_positions {
            Some(p) => p,
            None => reference_positions(raw.surfaces).ok_or_else(|| {
                Error::invalid(
                    "irs_positions",
                    format!(
                        "required when N > {} (no reference positions)",
                        REFERENCE_IRS_POSITIONS.len()
                    ),
                )
            })?,
        };
        let cfg = ScenarioConfig {
            antennas: raw.antennas,
            surfaces: raw.surfaces,
            users: raw.users,
            rows: raw.rows,
            cols: raw.cols,
            mbs_position: raw.mbs_position,
            irs_positions,
            user_region: raw.user_region,
            p_max_dbm: raw.p_max_dbm,
            sinr_min_db: raw.sinr_min_db,
            noise_dbm: raw.noise_dbm,
            n_paths_bs_irs: raw.n_paths_bs_irs,
            n_paths_irs_user: raw.n_paths_irs_user,
            n_paths_bs_user: raw.n_paths_bs_user,
            pathloss_los: raw.pathloss_los,
            pathloss_nlos: raw.pathloss_nlos,
            seed: raw.seed,
            include_direct_link: raw.include_direct_link,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn reference_positions(n: usize) -> Option<Vec<Point>> {
    (n <= REFERENCE_IRS_POSITIONS.len()).then(|| REFERENCE_IRS_POSITIONS[..n].to_vec())
}

/// Parses and validates a JSON configuration document.
pub fn load_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = serde_json::from_str(text)?;
    ScenarioConfig::try_from(raw)
}

/// `10^(x/10)`: dBm to mW (or dB to a linear ratio).
pub fn dbm_to_linear(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Bearing of `to` seen from `from`, in radians.
fn bearing(from: Point, to: Point) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

impl ScenarioConfig {
    /// Reference-scale deployment: M = 40, N = 6, K = 4, 8x8 elements.
    pub fn paper() -> Self {
        ScenarioConfig {
            antennas: 40,
            surfaces: 6,
            users: 4,
            rows: 8,
            cols: 8,
            mbs_position: [0.0, 0.0],
            irs_positions: REFERENCE_IRS_POSITIONS.to_vec(),
            user_region: default_region(),
            p_max_dbm: default_pmax(),
            sinr_min_db: default_sinr_min(),
            noise_dbm: default_noise(),
            n_paths_bs_irs: default_paths_bs_irs(),
            n_paths_irs_user: default_paths_irs_user(),
            n_paths_bs_user: default_paths_bs_user(),
            pathloss_los: PathLossParams::los(),
            pathloss_nlos: PathLossParams::nlos(),
            seed: 0,
            include_direct_link: false,
        }
    }

    /// Laptop-scale deployment: M = 8, N = 4, K = 4, 4x4 elements.
    pub fn desk() -> Self {
        ScenarioConfig {
            antennas: 8,
            rows: 4,
            cols: 4,
            ..Self::paper()
        }
        .with_surfaces(4)
        .expect("reference has six positions")
    }

    /// Reference deployment with `n` surfaces taken from the head of the
    /// reference position list.
    pub fn with_surfaces(mut self, n: usize) -> Result<Self> {
        self.irs_positions = reference_positions(n).ok_or_else(|| {
            Error::invalid(
                "N",
                format!("only {} reference positions", REFERENCE_IRS_POSITIONS.len()),
            )
        })?;
        self.surfaces = n;
        self.validate()?;
        Ok(self)
    }

    /// Elements per surface.
    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn budget(&self) -> LinearBudget {
        LinearBudget {
            p_max: dbm_to_linear(self.p_max_dbm),
            noise: dbm_to_linear(self.noise_dbm),
            sinr_min: dbm_to_linear(self.sinr_min_db),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (compact) JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.antennas),
            ("N", self.surfaces),
            ("K", self.users),
            ("L_v", self.rows),
            ("L_h", self.cols),
            ("n_paths_bs_irs", self.n_paths_bs_irs),
            ("n_paths_irs_user", self.n_paths_irs_user),
            ("n_paths_bs_user", self.n_paths_bs_user),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        if self.irs_positions.len() != self.surfaces {
            return Err(Error::invalid(
                "irs_positions",
                format!(
                    "{} positions for N = {}",
                    self.irs_positions.len(),
                    self.surfaces
                ),
            ));
        }
        let r = self.user_region.radius;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(
                "user_region",
                format!("radius must be > 0, got {r}"),
            ));
        }
        for (field, v) in [
            ("P_max_dbm", self.p_max_dbm),
            ("sinr_min_db", self.sinr_min_db),
            ("noise_dbm", self.noise_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        let b = self.budget();
        if !(b.noise > 0.0 && b.noise.is_finite()) {
            return Err(Error::invalid("noise_dbm", "noise power underflows"));
        }
        if !(b.p_max.is_finite() && b.sinr_min.is_finite() && b.sinr_min > 0.0) {
            return Err(Error::invalid("P_max_dbm", "power levels out of range"));
        }
        for (field, p) in [
            ("pathloss_los", &self.pathloss_los),
            ("pathloss_nlos", &self.pathloss_nlos),
        ] {
            if !(p.a.is_finite() && p.b.is_finite() && p.sigma_xi.is_finite() && p.sigma_xi >= 0.0)
            {
                return Err(Error::invalid(
                    field,
                    "a, b finite and sigma_xi >= 0 required",
                ));
            }
        }
        let finite = |p: &Point| p.iter().all(|c| c.is_finite());
        if !finite(&self.mbs_position) || !finite(&self.user_region.center) {
            return Err(Error::invalid("mbs_position", "coordinates must be finite"));
        }
        // Keeps every link distance strictly positive.
        let c = self.user_region.center;
        if dist(c, self.mbs_position) <= r {
            return Err(Error::invalid("user_region", "disc contains the mBS"));
        }
        for p in &self.irs_positions {
            if !finite(p) {
                return Err(Error::invalid(
                    "irs_positions",
                    "coordinates must be finite",
                ));
            }
            if dist(*p, self.mbs_position) == 0.0 {
                return Err(Error::invalid(
                    "irs_positions",
                    "surface co-located with the mBS",
                ));
            }
            if dist(*p, c) <= r {
                return Err(Error::invalid("user_region", "disc contains a surface"));
            }
        }
        Ok(())
    }
}

/// Independent random sub-streams of one drop.
///
/// Every drop owns a 64-bit seed (see [`drop_seed`]); each purpose below is
/// a separate ChaCha8 stream (`set_stream(purpose as u64)`) keyed by that
/// seed, so e.g. changing the number of users never perturbs the path gains
/// of a surface link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 0,
    PathGains = 1,
    Angles = 2,
    BaselinePhases = 3,
    InitPhases = 4,
}

/// Seed of drop `index` under `master` (SplitMix64 finalizer over
/// `master + index * golden`).
pub fn drop_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// User positions plus all link distances and line-of-sight bearings.
///
/// Bearings are measured in the global frame from the transmitting (or
/// receiving) node toward the other end of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub users: Vec<Point>,
    /// mBS -> surface n.
    pub dist_bs_irs: Vec<f64>,
    /// Surface n -> user k, indexed `[n][k]`.
    pub dist_irs_user: Vec<Vec<f64>>,
    /// mBS -> user k.
    pub dist_bs_user: Vec<f64>,
    /// Departure bearing at the mBS toward surface n.
    pub az_bs_irs: Vec<f64>,
    /// Arrival bearing at surface n (pointing back to the mBS).
    pub az_irs_bs: Vec<f64>,
    /// Departure bearing at surface n toward user k, `[n][k]`.
    pub az_irs_user: Vec<Vec<f64>>,
    /// Departure bearing at the mBS toward user k.
    pub az_bs_user: Vec<f64>,
}

impl Layout {
    /// Builds distances and bearings for fixed user positions.
    pub fn from_users(config: &ScenarioConfig, users: Vec<Point>) -> Self {
        let bs = config.mbs_position;
        let irs = &config.irs_positions;
        Layout {
            dist_bs_irs: irs.iter().map(|p| dist(bs, *p)).collect(),
            dist_irs_user: irs
                .iter()
                .map(|p| users.iter().map(|u| dist(*p, *u)).collect())
                .collect(),
            dist_bs_user: users.iter().map(|u| dist(bs, *u)).collect(),
            az_bs_irs: irs.iter().map(|p| bearing(bs, *p)).collect(),
            az_irs_bs: irs.iter().map(|p| bearing(*p, bs)).collect(),
            az_irs_user: irs
                .iter()
                .map(|p| users.iter().map(|u| bearing(*p, *u)).collect())
                .collect(),
            az_bs_user: users.iter().map(|u| bearing(bs, *u)).collect(),
            users,
        }
    }
}

/// Drops `K` users uniformly over the configured disc.
pub fn place_users<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Layout {
    let UserRegion { center, radius } = config.user_region;
    let users = (0..config.users)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            [center[0] + r * phi.cos(), center[1] + r * phi.sin()]
        })
        .collect();
    Layout::from_users(config, users)
}

/// Index of the user closest to each surface (ties to the lower index).
pub fn nearest_user_per_surface(config: &ScenarioConfig, layout: &Layout) -> Vec<usize> {
    (0..config.surfaces)
        .map(|n| argmin(&layout.dist_irs_user[n]))
        .collect()
}

/// Alternative nearest-surface rule: users, in index order, each claim the
/// closest surface not yet taken; leftover surfaces go to their nearest user.
pub fn users_claim_nearest_surface(config: &ScenarioConfig, layout: &Layout) -> Vec<usize> {
    let mut owner: Vec<Option<usize>> = vec![None; config.surfaces];
    for k in 0..config.users {
        let free = (0..config.surfaces)
            .filter(|&n| owner[n].is_none())
            .min_by(|&a, &b| layout.dist_irs_user[a][k].total_cmp(&layout.dist_irs_user[b][k]));
        if let Some(n) = free {
            owner[n] = Some(k);
        }
    }
    owner
        .iter()
        .enumerate()
        .map(|(n, o)| o.unwrap_or_else(|| argmin(&layout.dist_irs_user[n])))
        .collect()
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) },
        )
        .0
}
