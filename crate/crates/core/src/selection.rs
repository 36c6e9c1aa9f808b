//! Surface-to-user assignment by exhaustive enumeration.
//!
//! Every surface serves exactly one user, so an assignment is a vector of
//! `N` user indices (0-based) and there are `K^N` candidates. Candidates are
//! visited as base-`K` numbers with surface 0 as the most significant digit,
//! i.e. in lexicographic order; ties keep the lexicographically smallest
//! vector.
//!
//! Each candidate is scored from precomputed cascaded rows, so scoring
//! costs `O(N K M)` accumulation instead of a full channel rebuild. The
//! SINR target is not enforced unless a floor is passed explicitly.

use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::system::{cascades, gains_from_rows, rate_of_sinrs, sinrs_from_gains, BeamformingState};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Per-surface served user, 0-based.
pub type Assignment = Vec<usize>;

/// Default cap on the number of enumerated candidates.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionOptions {
    /// Largest `K^N` enumerated exhaustively.
    pub budget: u64,
    /// Fall back to greedy coordinate ascent when the budget is exceeded
    /// instead of failing. Off by default.
    pub greedy_fallback: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            budget: DEFAULT_BUDGET,
            greedy_fallback: false,
        }
    }
}

/// Order in which candidates are ranked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ranking {
    /// Sum rate.
    SumRate,
    /// Sum rate among candidates whose SINRs all reach the floor.
    SumRateAbove(f64),
    /// Smallest per-user SINR (max-min fairness).
    MinSinr,
}

/// Outcome of an assignment search.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub assignment: Assignment,
    pub sum_rate: f64,
    /// Candidates scored.
    pub candidates: u64,
    /// Whether all `K^N` candidates were visited.
    pub exhaustive: bool,
}

/// Precomputed cascades for scoring assignments at fixed precoder and
/// phases.
///
/// Effective channels are accumulated exactly as in
/// [`crate::system::effective_channel`], so scores are bit-identical to
/// [`crate::system::sum_rate`] at the same assignment.
pub struct AssignmentScorer {
    /// Cascaded rows `[n][k]`.
    cascades: Vec<Vec<CVector>>,
    /// Direct rows when the direct link is active.
    direct: Option<Vec<CVector>>,
    precoder: CMatrix,
    noise: f64,
}

impl AssignmentScorer {
    pub fn new(state: &BeamformingState, channels: &ChannelSet, noise: f64) -> Self {
        AssignmentScorer {
            cascades: cascades(state, channels),
            direct: channels.direct_active.then(|| channels.direct.clone()),
            precoder: state.precoder.clone(),
            noise,
        }
    }

    pub fn surfaces(&self) -> usize {
        self.cascades.len()
    }

    pub fn users(&self) -> usize {
        self.precoder.ncols()
    }

    fn sinrs(&self, assignment: &[usize]) -> Vec<f64> {
        let m = self.precoder.nrows();
        let one = C64::new(1.0, 0.0);
        let rows: Vec<CVector> = (0..self.users())
            .map(|k| {
                let mut row = self
                    .direct
                    .as_ref()
                    .map_or_else(|| CVector::zeros(m), |d| d[k].clone());
                for (n, &u) in assignment.iter().enumerate() {
                    if u == k {
                        row.axpy(one, &self.cascades[n][k], one);
                    }
                }
                row
            })
            .collect();
        sinrs_from_gains(&gains_from_rows(&rows, &self.precoder), self.noise)
    }

    /// Sum rate under `assignment`.
    pub fn sum_rate(&self, assignment: &[usize]) -> f64 {
        rate_of_sinrs(&self.sinrs(assignment))
    }

    /// Score of `assignment` under `ranking` (`-inf` when excluded).
    pub fn score(&self, assignment: &[usize], ranking: Ranking) -> f64 {
        let s = self.sinrs(assignment);
        match ranking {
            Ranking::SumRate => rate_of_sinrs(&s),
            Ranking::SumRateAbove(floor) if s.iter().any(|&x| x < floor) => f64::NEG_INFINITY,
            Ranking::SumRateAbove(_) => rate_of_sinrs(&s),
            Ranking::MinSinr => s.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Number of candidates `K^N`, `None` on overflow.
    pub fn candidates(&self) -> Option<u64> {
        (self.users() as u64).checked_pow(u32::try_from(self.surfaces()).ok()?)
    }
}

/// Assignment with lexicographic rank `index`.
fn decode(mut index: u64, surfaces: usize, users: usize) -> Assignment {
    let mut out = vec![0; surfaces];
    for slot in out.iter_mut().rev() {
        *slot = (index % users as u64) as usize;
        index /= users as u64;
    }
    out
}

/// Better of two `(rate, index)` pairs: higher rate, then smaller index.
fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Best assignment for the precoder and phases of `state`.
///
/// Enumerates all `K^N` candidates when that is within `opts.budget`;
/// otherwise returns [`Error::BudgetExceeded`], or a greedy result when
/// `opts.greedy_fallback` is set.
pub fn enumerate_best_assignment(
    state: &BeamformingState,
    channels: &ChannelSet,
    noise: f64,
    opts: &SelectionOptions,
) -> Result<Selection> {
    let scorer = AssignmentScorer::new(state, channels, noise);
    let start = state.assignment();
    best_assignment(&scorer, Ranking::SumRate, start, opts)
        .map(|s| s.expect("unconstrained search always has a candidate"))
}

/// Best assignment under `ranking`; `Ok(None)` when every candidate is
/// excluded. The reported `sum_rate` is always the sum rate of the winner.
///
/// `start` seeds the greedy fallback (all surfaces on user 0 when absent).
pub fn best_assignment(
    scorer: &AssignmentScorer,
    ranking: Ranking,
    start: Option<Assignment>,
    opts: &SelectionOptions,
) -> Result<Option<Selection>> {
    let (n, k) = (scorer.surfaces(), scorer.users());
    let found = match scorer.candidates() {
        Some(total) if total <= opts.budget => {
            let (rate, index) = (0..total)
                .into_par_iter()
                .map(|i| (scorer.score(&decode(i, n, k), ranking), i))
                .reduce(|| (f64::NEG_INFINITY, u64::MAX), better);
            Selection {
                assignment: decode(index.min(total - 1), n, k),
                sum_rate: rate,
                candidates: total,
                exhaustive: true,
            }
        }
        total => {
            if !opts.greedy_fallback {
                return Err(Error::BudgetExceeded {
                    candidates: total.map_or(u128::MAX, u128::from),
                    budget: u128::from(opts.budget),
                });
            }
            greedy(scorer, ranking, start.unwrap_or_else(|| vec![0; n]))
        }
    };
    if found.sum_rate == f64::NEG_INFINITY {
        return Ok(None);
    }
    let sum_rate = scorer.sum_rate(&found.assignment);
    Ok(Some(Selection { sum_rate, ..found }))
}

/// Coordinate ascent over surfaces until no single reassignment improves
/// the score; `sum_rate` of the result holds the score.
pub fn greedy(scorer: &AssignmentScorer, ranking: Ranking, start: Assignment) -> Selection {
    let mut current = start;
    let mut rate = scorer.score(&current, ranking);
    let mut scored = 1;
    loop {
        let mut improved = false;
        for n in 0..scorer.surfaces() {
            for u in 0..scorer.users() {
                if u == current[n] {
                    continue;
                }
                let mut trial = current.clone();
                trial[n] = u;
                let r = scorer.score(&trial, ranking);
                scored += 1;
                if r > rate {
                    rate = r;
                    current = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            return Selection {
                assignment: current,
                sum_rate: rate,
                candidates: scored,
                exhaustive: false,
            };
        }
    }
}
