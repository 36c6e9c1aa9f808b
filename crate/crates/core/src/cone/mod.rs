//! Concave quadratic maximization over balls, boxes and second-order cones.
//!
//! A [`ConeProblem`] over `x in C^n` reads
//!
//! ```text
//! maximize    -x^H Q x + 2 Re{v^H x} - constant
//! subject to  ||x_S||   <= r                     (balls)
//!             |x_j|     <= 1                     (boxes)
//!             gain Re{a x + a0} >= ||[b_1 x + b_10, ..., b_K x + b_K0, sigma]||
//!             Im{a x + a0} = 0                   (second-order cones)
//! ```
//!
//! with `Q = F^H F` kept in factored form. [`solve`] lifts the problem to
//! real coordinates `[Re x_0, Im x_0, Re x_1, ...]`, equilibrates it and runs
//! a primal log-barrier interior-point method (phase I for feasibility,
//! infeasible-start Newton for the equality rows, Woodbury-structured Newton
//! systems). Every coordinate must be covered by at least one ball or box so
//! the feasible set is bounded.

mod ipm;
mod lift;
mod newton;
pub mod testing;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Result, C64};

pub use ipm::solve;

/// Complex affine form `row . x + offset` (unconjugated product).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub row: CVector,
    pub offset: C64,
}

impl AffineForm {
    pub fn linear(row: CVector) -> Self {
        AffineForm {
            row,
            offset: C64::new(0.0, 0.0),
        }
    }

    pub fn eval(&self, x: &CVector) -> C64 {
        self.row.dot(x) + self.offset
    }
}

/// `||x_S|| <= radius` over the coordinates `S = indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub indices: Vec<usize>,
    pub radius: f64,
}

/// `gain Re{lhs} >= ||[rhs_1, ..., rhs_K, sigma]||` with `Im{lhs} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Soc {
    pub gain: f64,
    pub lhs: AffineForm,
    pub rhs: Vec<AffineForm>,
    pub sigma: f64,
}

impl Soc {
    /// `(gain Re{lhs}, ||[rhs.., sigma]||, gain |Im{lhs}|)` at `x`.
    pub fn sides(&self, x: &CVector) -> (f64, f64, f64) {
        let l = self.lhs.eval(x);
        let r2: f64 =
            self.rhs.iter().map(|f| f.eval(x).norm_sqr()).sum::<f64>() + self.sigma * self.sigma;
        (self.gain * l.re, r2.sqrt(), self.gain * l.im.abs())
    }
}

/// Standard-form problem handed to [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProblem {
    pub dim: usize,
    /// `F` with `Q = F^H F` (`r x dim`).
    pub q_factor: CMatrix,
    pub v: CVector,
    pub constant: f64,
    pub balls: Vec<Ball>,
    /// Coordinates constrained to the closed unit disc.
    pub boxed: Vec<usize>,
    pub socs: Vec<Soc>,
}

/// Worst constraint violations at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Violation {
    /// Largest `||x_S|| - r` (absolute, clipped at 0).
    pub ball: f64,
    /// Largest `|x_j| - 1` (absolute, clipped at 0).
    pub boxed: f64,
    /// Largest cone violation relative to the size of both sides (or of
    /// the terms forming the left side, if larger).
    pub soc: f64,
    /// Largest `|Im{lhs}|`, on the same scale.
    pub imag: f64,
}

impl Violation {
    pub fn max(&self) -> f64 {
        self.ball.max(self.boxed).max(self.soc).max(self.imag)
    }
}

impl ConeProblem {
    /// Problem with zero objective and no constraints.
    pub fn new(dim: usize) -> Self {
        ConeProblem {
            dim,
            q_factor: CMatrix::zeros(0, dim),
            v: CVector::zeros(dim),
            constant: 0.0,
            balls: vec![],
            boxed: vec![],
            socs: vec![],
        }
    }

    /// Sets the quadratic term from a dense Hermitian PSD matrix.
    ///
    /// Eigenvalues down to `-1e-9 ||Q||` are accepted and clipped at zero.
    pub fn set_dense_q(&mut self, q: &CMatrix) -> Result<()> {
        if q.shape() != (self.dim, self.dim) {
            return Err(Error::Shape(format!("Q must be {0} x {0}", self.dim)));
        }
        let scale = q.norm();
        if (q - q.adjoint()).norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid("Q", "not Hermitian"));
        }
        let herm = (q + q.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let floor = -1e-9 * scale;
        if eig.eigenvalues.iter().any(|&l| l < floor) {
            return Err(Error::invalid("Q", "not positive semidefinite"));
        }
        let keep: Vec<usize> = (0..self.dim)
            .filter(|&i| eig.eigenvalues[i] > 0.0)
            .collect();
        self.q_factor = CMatrix::from_fn(keep.len(), self.dim, |r, c| {
            let i = keep[r];
            eig.eigenvectors[(c, i)].conj() * eig.eigenvalues[i].sqrt()
        });
        Ok(())
    }

    /// Dense `Q = F^H F`.
    pub fn q(&self) -> CMatrix {
        self.q_factor.adjoint() * &self.q_factor
    }

    /// `-x^H Q x + 2 Re{v^H x} - constant`.
    pub fn objective(&self, x: &CVector) -> f64 {
        -(&self.q_factor * x).norm_squared() + 2.0 * self.v.dotc(x).re - self.constant
    }

    /// Checks shapes and the boundedness requirement.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Shape("problem dimension must be positive".into()));
        }
        if self.q_factor.ncols() != n || self.v.len() != n {
            return Err(Error::Shape(
                "objective terms do not match the dimension".into(),
            ));
        }
        let mut covered = vec![false; n];
        for b in &self.balls {
            if !(b.radius > 0.0 && b.radius.is_finite()) || b.indices.iter().any(|&i| i >= n) {
                return Err(Error::invalid(
                    "balls",
                    "radius must be positive, indices in range",
                ));
            }
            b.indices.iter().for_each(|&i| covered[i] = true);
        }
        let mut boxed = vec![false; n];
        for &j in &self.boxed {
            if j >= n || boxed[j] {
                return Err(Error::invalid(
                    "boxed",
                    "indices must be in range and distinct",
                ));
            }
            boxed[j] = true;
            covered[j] = true;
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::invalid(
                "balls",
                "every coordinate needs a ball or box",
            ));
        }
        for s in &self.socs {
            if !s.gain.is_finite() || s.gain <= 0.0 || s.sigma.is_nan() || s.sigma < 0.0 {
                return Err(Error::invalid(
                    "socs",
                    "gain must be positive and sigma nonnegative",
                ));
            }
            if s.lhs.row.len() != n || s.rhs.iter().any(|f| f.row.len() != n) {
                return Err(Error::Shape("cone rows do not match the dimension".into()));
            }
        }
        let finite = |v: &[C64]| v.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite(self.q_factor.as_slice())
            || !finite(self.v.as_slice())
            || !self.constant.is_finite()
        {
            return Err(Error::invalid("Q", "objective must be finite"));
        }
        Ok(())
    }

    /// Worst violation of every constraint family at `x`.
    pub fn violation(&self, x: &CVector) -> Violation {
        let mut out = Violation::default();
        for b in &self.balls {
            let r = b
                .indices
                .iter()
                .map(|&i| x[i].norm_sqr())
                .sum::<f64>()
                .sqrt();
            out.ball = out.ball.max(r - b.radius);
        }
        for &j in &self.boxed {
            out.boxed = out.boxed.max(x[j].norm() - 1.0);
        }
        for s in &self.socs {
            let (l, r, im) = s.sides(x);
            // Near the apex both sides vanish; the terms forming the left
            // side then set the scale.
            let terms = s.gain * (s.lhs.row.norm() * x.norm() + s.lhs.offset.norm());
            let size = l.abs().max(r).max(terms).max(f64::MIN_POSITIVE);
            out.soc = out.soc.max((r - l) / size);
            out.imag = out.imag.max(im / size);
        }
        out.ball = out.ball.max(0.0);
        out.boxed = out.boxed.max(0.0);
        out.soc = out.soc.max(0.0);
        out
    }

    /// Structured-text dump (JSON, complex numbers as `[re, im]`).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ProblemDump::from(self)).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: ProblemDump = serde_json::from_str(text)?;
        let p = d.into_problem()?;
        p.validate()?;
        Ok(p)
    }
}

/// Tolerances and limits of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Primal feasibility (normalized equality residual).
    pub feas_tol: f64,
    /// Bound on the normalized KKT residual for an `Optimal` verdict.
    pub kkt_tol: f64,
    /// Relative duality gap.
    pub gap_tol: f64,
    /// Newton iterations across both phases.
    pub max_iter: usize,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-8,
            kkt_tol: 1e-6,
            gap_tol: 1e-5,
            max_iter: 500,
            mu: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Dual variables of the normalized real problem.
///
/// `cones` follows the order balls, boxes, second-order cones; `eq` holds
/// one multiplier per second-order cone (for its `Im{lhs} = 0` row).
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub cones: Vec<DVector<f64>>,
    pub eq: DVector<f64>,
}

impl Multipliers {
    /// All-zero multipliers shaped for `problem`.
    pub fn zeros(problem: &ConeProblem) -> Self {
        let mut cones: Vec<DVector<f64>> = problem
            .balls
            .iter()
            .map(|b| DVector::zeros(1 + 2 * b.indices.len()))
            .collect();
        cones.extend(problem.boxed.iter().map(|_| DVector::zeros(3)));
        cones.extend(
            problem
                .socs
                .iter()
                .map(|s| DVector::zeros(2 + 2 * s.rhs.len())),
        );
        Multipliers {
            cones,
            eq: DVector::zeros(problem.socs.len()),
        }
    }
}

/// Objective and KKT residual after one outer (barrier) iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    pub objective: f64,
    pub kkt_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: CVector,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// Newton iterations spent (both phases).
    pub iterations: usize,
    pub multipliers: Multipliers,
    pub history: Vec<OuterStep>,
}

/// Normalized KKT residual of `x` with the given multipliers: the largest of
/// stationarity, primal infeasibility, dual infeasibility and relative
/// complementarity, measured in the equilibrated real coordinates used by
/// [`solve`].
pub fn kkt_residual(problem: &ConeProblem, x: &CVector, multipliers: &Multipliers) -> f64 {
    let lifted = lift::Lifted::new(problem);
    lifted.kkt(&lifted.to_scaled(x), multipliers)
}

#[derive(Serialize, Deserialize)]
struct FormDump {
    row: Vec<[f64; 2]>,
    offset: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct SocDump {
    gain: f64,
    lhs: FormDump,
    rhs: Vec<FormDump>,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct BallDump {
    indices: Vec<usize>,
    radius: f64,
}

/// JSON layout of a [`ConeProblem`].
#[derive(Serialize, Deserialize)]
struct ProblemDump {
    dim: usize,
    q_factor: Vec<Vec<[f64; 2]>>,
    v: Vec<[f64; 2]>,
    constant: f64,
    balls: Vec<BallDump>,
    boxed: Vec<usize>,
    socs: Vec<SocDump>,
}

fn to_pairs(v: impl IntoIterator<Item = C64>) -> Vec<[f64; 2]> {
    v.into_iter().map(|c| [c.re, c.im]).collect()
}

fn from_pairs(p: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(p.len(), p.iter().map(|c| C64::new(c[0], c[1])))
}

impl From<&ConeProblem> for ProblemDump {
    fn from(p: &ConeProblem) -> Self {
        let form = |f: &AffineForm| FormDump {
            row: to_pairs(f.row.iter().copied()),
            offset: [f.offset.re, f.offset.im],
        };
        ProblemDump {
            dim: p.dim,
            q_factor: p
                .q_factor
                .row_iter()
                .map(|r| to_pairs(r.iter().copied()))
                .collect(),
            v: to_pairs(p.v.iter().copied()),
            constant: p.constant,
            balls: p
                .balls
                .iter()
                .map(|b| BallDump {
                    indices: b.indices.clone(),
                    radius: b.radius,
                })
                .collect(),
            boxed: p.boxed.clone(),
            socs: p
                .socs
                .iter()
                .map(|s| SocDump {
                    gain: s.gain,
                    lhs: form(&s.lhs),
                    rhs: s.rhs.iter().map(form).collect(),
                    sigma: s.sigma,
                })
                .collect(),
        }
    }
}

impl ProblemDump {
    fn into_problem(self) -> Result<ConeProblem> {
        let rows = self.q_factor.len();
        if self.q_factor.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Shape("q_factor rows must have length dim".into()));
        }
        let q = &self.q_factor;
        let form = |f: &FormDump| AffineForm {
            row: from_pairs(&f.row),
            offset: C64::new(f.offset[0], f.offset[1]),
        };
        Ok(ConeProblem {
            dim: self.dim,
            q_factor: DMatrix::from_fn(rows, self.dim, |i, j| C64::new(q[i][j][0], q[i][j][1])),
            v: from_pairs(&self.v),
            constant: self.constant,
            balls: self
                .balls
                .into_iter()
                .map(|b| Ball {
                    indices: b.indices,
                    radius: b.radius,
                })
                .collect(),
            boxed: self.boxed,
            socs: self
                .socs
                .iter()
                .map(|s| Soc {
                    gain: s.gain,
                    lhs: form(&s.lhs),
                    rhs: s.rhs.iter().map(form).collect(),
                    sigma: s.sigma,
                })
                .collect(),
        })
    }
}
