//! Alternating optimization of precoder, surface phases and selection, and
//! the three baselines.
//!
//! One iteration of the proposed method updates, in order:
//!
//! 1. `alpha` in closed form (the SINRs);
//! 2. `epsilon` in closed form, then the precoder by a cone solve;
//! 3. `beta` in closed form, then the relaxed phases (`|theta| <= 1`);
//! 4. the selection by exhaustive enumeration.
//!
//! Every block step maximizes a minorant of the sum rate that is tight at
//! the current point, so the sum rate cannot decrease; a step that would
//! lower it (solver inaccuracy) is rejected and the previous block value is
//! kept.
//!
//! A random starting point rarely meets the SINR target, and then the block
//! problems themselves may be infeasible. The loop is therefore preceded by
//! a restoration phase: the same block steps, but a block whose problem is
//! infeasible is solved at the largest reachable relaxed target instead,
//! and the selection maximizes the weakest SINR. A restoration step is kept
//! when it raises the weakest user's SINR. The loop starts once the target is
//! met; a drop whose restoration stalls is reported infeasible.
//!
//! Baselines freeze some of the blocks:
//!
//! | method   | precoder | phases          | selection         |
//! |----------|----------|-----------------|-------------------|
//! | proposed | solved   | solved          | enumerated        |
//! | WIS      | solved   | solved          | all ones          |
//! | RPS      | solved   | random, frozen  | enumerated        |
//! | NIS      | solved   | solved          | nearest geometry  |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::cone::{solve, ConeProblem, SolveOptions, SolveStatus};
use crate::fp::{
    assemble_p_subproblem, assemble_theta_subproblem, f1a_value, project_unit_modulus,
    stack_precoder, stack_theta, unstack_precoder, unstack_theta, update_alpha, update_beta,
    update_epsilon, FpState, ThetaTerms,
};
use crate::scenario::{
    nearest_user_per_surface, place_users, stream, users_claim_nearest_surface, Layout,
    LinearBudget, ScenarioConfig, Stream,
};
use crate::selection::{best_assignment, AssignmentScorer, Ranking, SelectionOptions};
use crate::system::{effective_channels, rate_of_sinrs, sinrs, user_rates, BeamformingState};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Optimization method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    /// Without surface selection: every surface aids every user.
    Wis,
    /// Random, frozen surface phases.
    Rps,
    /// Nearest-geometry selection.
    Nis,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Wis, Method::Rps, Method::Nis];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Wis => "wis",
            Method::Rps => "rps",
            Method::Nis => "nis",
        }
    }

    fn solves_theta(self) -> bool {
        self != Method::Rps
    }

    fn selects(self) -> bool {
        matches!(self, Method::Proposed | Method::Rps)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::invalid(
                    "method",
                    format!("unknown method `{s}` (proposed, wis, rps, nis)"),
                )
            })
    }
}

/// How the nearest-geometry selection is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearestRule {
    /// Each surface serves its closest user.
    #[default]
    SurfaceToNearestUser,
    /// Users, in index order, claim their closest free surface.
    UserClaimsNearestSurface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Relative sum-rate change below which the loop has converged.
    pub tolerance: f64,
    pub max_iter: usize,
    pub solver: SolveOptions,
    pub selection: SelectionOptions,
    pub nearest_rule: NearestRule,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            tolerance: 1e-4,
            max_iter: 50,
            solver: SolveOptions::default(),
            selection: SelectionOptions::default(),
            nearest_rule: NearestRule::default(),
        }
    }
}

/// Termination of one drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    /// The SINR target could not be met; excluded from aggregates.
    InfeasibleDrop,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::InfeasibleDrop => "infeasible_drop",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Objective values at the end of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Sum rate (bps/Hz).
    pub sum_rate: f64,
    /// Dual-transformed rate with the iteration's `alpha`.
    pub f1a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub method: Method,
    pub trace: Vec<TracePoint>,
    /// State with relaxed phases (`|theta| <= 1`).
    pub final_state: BeamformingState,
    /// Per-user rates at the relaxed state.
    pub per_user_rates: Vec<f64>,
    pub status: Status,
    /// Iterations of the loop, one per trace point.
    pub iterations: usize,
    /// Rounds spent reaching the SINR target before the loop started.
    pub restoration_iterations: usize,
    pub sum_rate_relaxed: f64,
    /// Sum rate after projecting the phases onto the unit circle.
    pub sum_rate_projected: f64,
    /// Newton iterations spent in all cone solves.
    pub solver_iterations: usize,
}

impl OptimResult {
    pub fn min_user_rate(&self) -> f64 {
        self.per_user_rates
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// One Monte Carlo realization: user placement and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DropInstance {
    pub seed: u64,
    pub budget: LinearBudget,
    pub layout: Layout,
    pub channels: ChannelSet,
    /// Selection of the surface-to-nearest-user rule.
    pub nearest: Vec<usize>,
    /// Selection of the user-claims-nearest-surface rule.
    pub claimed: Vec<usize>,
}

impl DropInstance {
    /// Places users and synthesizes channels from `seed`.
    pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = place_users(config, &mut stream(seed, Stream::Placement));
        let channels = ChannelSet::generate(config, &layout, seed)?;
        Ok(DropInstance {
            seed,
            budget: config.budget(),
            nearest: nearest_user_per_surface(config, &layout),
            claimed: users_claim_nearest_surface(config, &layout),
            layout,
            channels,
        })
    }

    fn nearest_selection(&self, rule: NearestRule) -> DMatrix<f64> {
        let a = match rule {
            NearestRule::SurfaceToNearestUser => &self.nearest,
            NearestRule::UserClaimsNearestSurface => &self.claimed,
        };
        BeamformingState::selection_from(a, self.channels.users())
    }
}

/// Slack on the SINR target when deciding whether a state is feasible
/// inside the loop.
const SINR_SLACK: f64 = 1e-6;
/// Slack on the SINR target required of a converged drop.
const CONVERGED_SINR_SLACK: f64 = 1e-4;
/// Largest constraint violation of a solver point that did not reach its
/// tolerances but is still used.
const USABLE_VIOLATION: f64 = 1e-7;
/// Consecutive iterations without a successful block solve that abort a
/// drop.
const MAX_FAILURES: usize = 2;
/// Relative rise of the weakest SINR that counts as restoration progress.
const RESTORATION_GAIN: f64 = 1e-3;
/// Bisection steps on the relaxed target of one restoration block solve.
const RESTORATION_BISECTIONS: usize = 6;
/// Lowest relaxed target, relative to the true one.
const RESTORATION_FLOOR: f64 = 1e-6;

/// Unit-modulus phases with uniform random angles.
pub fn random_phases<R: Rng + ?Sized>(
    rng: &mut R,
    surfaces: usize,
    elements: usize,
) -> Vec<CVector> {
    (0..surfaces)
        .map(|_| {
            CVector::from_fn(elements, |_, _| {
                C64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>())
            })
        })
        .collect()
}

/// Matched filter to the effective channels with power `p_max / K` per
/// user. A user without any channel gets the first antenna.
pub fn matched_filter(rows: &[CVector], antennas: usize, p_max: f64) -> CMatrix {
    let k = rows.len();
    let amp = (p_max / k as f64).sqrt();
    let mut p = CMatrix::zeros(antennas, k);
    for (u, r) in rows.iter().enumerate() {
        let norm = r.norm();
        if norm > 0.0 {
            p.set_column(u, &(r.map(|c| c.conj()) * C64::new(amp / norm, 0.0)));
        } else {
            p[(0, u)] = C64::new(amp, 0.0);
        }
    }
    p
}

/// Starting point of `method` on `instance`.
pub fn initial_state(
    method: Method,
    instance: &DropInstance,
    opts: &OptimOptions,
) -> BeamformingState {
    let ch = &instance.channels;
    let (n, k, l) = (ch.surfaces(), ch.users(), ch.elements());
    let selection = match method {
        Method::Wis => DMatrix::from_element(n, k, 1.0),
        _ => instance.nearest_selection(opts.nearest_rule),
    };
    let phase_stream = if method == Method::Rps {
        Stream::BaselinePhases
    } else {
        Stream::InitPhases
    };
    let theta = random_phases(&mut stream(instance.seed, phase_stream), n, l);
    let mut state = BeamformingState {
        precoder: CMatrix::zeros(ch.antennas(), k),
        theta,
        selection,
    };
    state.precoder = matched_filter(
        &effective_channels(&state, ch),
        ch.antennas(),
        instance.budget.p_max,
    );
    state
}

fn meets_target(sinrs: &[f64], target: f64, slack: f64) -> bool {
    sinrs.iter().all(|&s| s >= target * (1.0 - slack))
}

/// Mutable state of one drop.
struct Run<'a> {
    instance: &'a DropInstance,
    opts: &'a OptimOptions,
    state: BeamformingState,
    rate: f64,
    feasible: bool,
    /// Successful block solves.
    solved: usize,
    solver_iterations: usize,
}

impl Run<'_> {
    fn noise(&self) -> f64 {
        self.instance.budget.noise
    }

    fn evaluate(&self, state: &BeamformingState) -> (f64, bool) {
        let s = sinrs(state, &self.instance.channels, self.noise());
        (
            rate_of_sinrs(&s),
            meets_target(&s, self.instance.budget.sinr_min, SINR_SLACK),
        )
    }

    /// Replaces the state when `candidate` keeps the sum rate from falling
    /// (or restores feasibility); returns whether it did.
    fn offer(&mut self, candidate: BeamformingState) -> bool {
        let (rate, feasible) = self.evaluate(&candidate);
        let better = if self.feasible {
            feasible && rate >= self.rate
        } else {
            feasible || rate >= self.rate
        };
        if better {
            self.state = candidate;
            self.rate = rate;
            self.feasible = feasible;
        }
        better
    }

    /// Smallest SINR relative to the target (infinite without a target).
    fn worst_ratio(&self, state: &BeamformingState) -> f64 {
        let target = self.instance.budget.sinr_min;
        if target <= 0.0 {
            return f64::INFINITY;
        }
        sinrs(state, &self.instance.channels, self.noise())
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            / target
    }

    /// Restoration acceptance: a feasible candidate, or one that raises the
    /// weakest SINR.
    fn offer_restoration(&mut self, candidate: BeamformingState) -> bool {
        let (rate, feasible) = self.evaluate(&candidate);
        let better = feasible || self.worst_ratio(&candidate) > self.worst_ratio(&self.state);
        if better {
            self.state = candidate;
            self.rate = rate;
            self.feasible = feasible;
        }
        better
    }

    /// Routes a candidate to the acceptance rule of the current phase.
    fn propose(&mut self, candidate: BeamformingState) -> bool {
        if self.feasible {
            self.offer(candidate)
        } else {
            self.offer_restoration(candidate)
        }
    }

    /// Solves a block problem; `None` marks a failed solve.
    fn solve_block(&mut self, problem: &ConeProblem, warm: &CVector) -> Option<CVector> {
        let report = solve(problem, Some(warm), &self.opts.solver);
        self.solver_iterations += report.iterations;
        let usable = match report.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIter => problem.violation(&report.x).max() <= USABLE_VIOLATION,
            SolveStatus::Infeasible => false,
        };
        if usable {
            self.solved += 1;
            Some(report.x)
        } else {
            None
        }
    }

    fn precoder_step(&mut self, fp: &mut FpState) {
        let instance = self.instance;
        let ch = &instance.channels;
        fp.epsilon = update_epsilon(&self.state, fp, ch, self.noise());
        let state = self.state.clone();
        let warm = stack_precoder(&state.precoder);
        if let Some(x) = self.block_solution(&warm, |budget| {
            assemble_p_subproblem(&state, fp, ch, budget)
        }) {
            let candidate = BeamformingState {
                precoder: unstack_precoder(&x, ch.antennas(), ch.users()),
                ..state
            };
            self.propose(candidate);
        }
    }

    fn theta_step(&mut self, fp: &mut FpState) {
        let instance = self.instance;
        let ch = &instance.channels;
        let terms = ThetaTerms::new(&self.state, ch);
        let current = stack_theta(&self.state.theta);
        fp.beta = update_beta(&terms, &current, &fp.alpha, self.noise());
        if let Some(x) = self.block_solution(&current, |budget| {
            assemble_theta_subproblem(&terms, fp, budget)
        }) {
            let candidate = BeamformingState {
                theta: unstack_theta(&x, ch.surfaces(), ch.elements()),
                ..self.state.clone()
            };
            self.propose(candidate);
        }
    }

    /// Solves a block at the SINR target. During restoration the target
    /// may be out of reach; the block is then solved at the largest target
    /// found by geometric bisection between the current weakest SINR and
    /// the true one.
    fn block_solution(
        &mut self,
        warm: &CVector,
        assemble: impl Fn(&LinearBudget) -> ConeProblem,
    ) -> Option<CVector> {
        let mut budget = self.instance.budget;
        if self.feasible || budget.sinr_min <= 0.0 {
            return self.solve_block(&assemble(&budget), warm);
        }
        let goal = budget.sinr_min;
        if let Some(x) = self.solve_block(&assemble(&budget), warm) {
            return Some(x);
        }
        let mut lo = (self.worst_ratio(&self.state) * goal).max(goal * RESTORATION_FLOOR);
        let mut hi = goal;
        let mut best = None;
        for _ in 0..RESTORATION_BISECTIONS {
            budget.sinr_min = (lo * hi).sqrt();
            match self.solve_block(&assemble(&budget), warm) {
                Some(x) => {
                    lo = budget.sinr_min;
                    best = Some(x);
                }
                None => hi = budget.sinr_min,
            }
        }
        best
    }

    /// Enumeration restricted to assignments meeting the SINR target at the
    /// current precoder and phases, so that the next precoder step stays
    /// feasible; the current assignment is kept when none qualifies. During
    /// restoration the max-min SINR assignment is used instead.
    fn selection_step(&mut self) -> Result<()> {
        let ch = &self.instance.channels;
        let scorer = AssignmentScorer::new(&self.state, ch, self.noise());
        let target = self.instance.budget.sinr_min;
        let ranking = if !self.feasible {
            Ranking::MinSinr
        } else if target > 0.0 {
            Ranking::SumRateAbove(target * (1.0 - SINR_SLACK))
        } else {
            Ranking::SumRate
        };
        if let Some(best) = best_assignment(
            &scorer,
            ranking,
            self.state.assignment(),
            &self.opts.selection,
        )? {
            let candidate = BeamformingState {
                selection: BeamformingState::selection_from(&best.assignment, ch.users()),
                ..self.state.clone()
            };
            self.propose(candidate);
        }
        Ok(())
    }
}

/// Runs `method` on one drop.
///
/// Fails only when the selection search exceeds its budget without a
/// fallback; solver trouble is reported through [`Status`].
pub fn run_method(
    method: Method,
    instance: &DropInstance,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    let state = initial_state(method, instance, opts);
    let mut run = Run {
        instance,
        opts,
        state,
        rate: 0.0,
        feasible: false,
        solved: 0,
        solver_iterations: 0,
    };
    (run.rate, run.feasible) = run.evaluate(&run.state);
    let ch = &instance.channels;
    let noise = instance.budget.noise;
    let target = instance.budget.sinr_min;

    // Restoration: block steps that raise the weakest SINR until the target
    // is met. These rounds are not part of the trace.
    let mut restoration_iterations = 0;
    let mut stalled = 0;
    while !run.feasible && restoration_iterations < opts.max_iter && stalled < MAX_FAILURES {
        restoration_iterations += 1;
        let before = run.worst_ratio(&run.state);
        let mut fp = FpState::new(ch.users());
        fp.alpha = update_alpha(&sinrs(&run.state, ch, noise));
        run.precoder_step(&mut fp);
        if method.solves_theta() && !run.feasible {
            run.theta_step(&mut fp);
        }
        if method.selects() && !run.feasible {
            run.selection_step()?;
        }
        let gained = run.worst_ratio(&run.state) > before * (1.0 + RESTORATION_GAIN);
        stalled = if run.feasible || gained {
            0
        } else {
            stalled + 1
        };
    }

    let mut trace: Vec<TracePoint> = Vec::new();
    let mut status = if run.feasible {
        Status::MaxIter
    } else {
        Status::InfeasibleDrop
    };
    let mut failed_iterations = 0;
    let iterations = if run.feasible { opts.max_iter } else { 0 };
    for _ in 0..iterations {
        let mut fp = FpState::new(ch.users());
        fp.alpha = update_alpha(&sinrs(&run.state, ch, noise));
        let solved = run.solved;
        run.precoder_step(&mut fp);
        if method.solves_theta() {
            run.theta_step(&mut fp);
        }
        failed_iterations = if run.solved == solved {
            failed_iterations + 1
        } else {
            0
        };
        if failed_iterations >= MAX_FAILURES {
            status = Status::InfeasibleDrop;
            break;
        }
        if method.selects() {
            run.selection_step()?;
        }
        let s = sinrs(&run.state, ch, noise);
        trace.push(TracePoint {
            sum_rate: run.rate,
            f1a: f1a_value(&s, &fp.alpha),
        });
        if let [.., prev, last] = trace.as_slice() {
            let change = (last.sum_rate - prev.sum_rate).abs() / last.sum_rate.max(1.0);
            if change < opts.tolerance && meets_target(&s, target, CONVERGED_SINR_SLACK) {
                status = Status::Converged;
                break;
            }
        }
    }
    if status == Status::MaxIter
        && !meets_target(&sinrs(&run.state, ch, noise), target, CONVERGED_SINR_SLACK)
    {
        status = Status::InfeasibleDrop;
    }

    let state = run.state;
    let per_user_rates = user_rates(&state, ch, noise);
    let projected = BeamformingState {
        theta: state.theta.iter().map(project_unit_modulus).collect(),
        ..state.clone()
    };
    Ok(OptimResult {
        method,
        iterations: trace.len(),
        trace,
        sum_rate_relaxed: per_user_rates.iter().sum(),
        sum_rate_projected: user_rates(&projected, ch, noise).iter().sum(),
        per_user_rates,
        final_state: state,
        status,
        restoration_iterations,
        solver_iterations: run.solver_iterations,
    })
}

/// The proposed joint optimization.
pub fn optimize(instance: &DropInstance, opts: &OptimOptions) -> Result<OptimResult> {
    run_method(Method::Proposed, instance, opts)
}

/// One of the baselines (WIS, RPS, NIS).
pub fn run_baseline(
    method: Method,
    instance: &DropInstance,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    if method == Method::Proposed {
        return Err(Error::invalid("method", "`proposed` is not a baseline"));
    }
    run_method(method, instance, opts)
}
