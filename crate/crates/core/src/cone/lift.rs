//! Real lifting and equilibration of a [`ConeProblem`].
//!
//! Complex coordinate `x_j` becomes the pair `(u_{2j}, u_{2j+1})` after
//! dividing by the variable scale `R` (largest ball radius, or 1). The
//! objective is divided by `omega`, the larger of its quadratic and linear
//! magnitudes over the scaled unit ball, and every cone is divided by its
//! largest row norm, so all quantities the barrier method sees are O(1).
//! The scaled problem is a minimization: `f(u) = ||A u||^2 - 2 l^T u`.

use nalgebra::{DMatrix, DVector};

use super::{ConeProblem, Multipliers};
use crate::{CVector, C64};

/// One conic constraint `s(u) in K` of the lifted problem.
#[derive(Debug, Clone)]
pub(crate) enum Cone {
    /// `(radius, u_idx)` in the second-order cone.
    Ball { idx: Vec<usize>, radius: f64 },
    /// `(radius, u_{2j}, u_{2j+1})` in the second-order cone.
    Pair { j: usize, radius: f64 },
    /// `G u + h` in the second-order cone.
    Dense { g: DMatrix<f64>, h: DVector<f64> },
    /// `u_i + 1 >= 0`.
    Orthant { i: usize },
}

impl Cone {
    /// Barrier degree.
    pub fn degree(&self) -> f64 {
        match self {
            Cone::Orthant { .. } => 1.0,
            _ => 2.0,
        }
    }

    pub fn slack(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            Cone::Ball { idx, radius } => DVector::from_iterator(
                1 + idx.len(),
                std::iter::once(*radius).chain(idx.iter().map(|&i| u[i])),
            ),
            Cone::Pair { j, radius } => DVector::from_vec(vec![*radius, u[2 * j], u[2 * j + 1]]),
            Cone::Dense { g, h } => g * u + h,
            Cone::Orthant { i } => DVector::from_element(1, u[*i] + 1.0),
        }
    }

    /// Linear part of the slack map applied to a direction.
    pub fn dir(&self, du: &DVector<f64>) -> DVector<f64> {
        match self {
            Cone::Ball { idx, .. } => DVector::from_iterator(
                1 + idx.len(),
                std::iter::once(0.0).chain(idx.iter().map(|&i| du[i])),
            ),
            Cone::Pair { j, .. } => DVector::from_vec(vec![0.0, du[2 * j], du[2 * j + 1]]),
            Cone::Dense { g, .. } => g * du,
            Cone::Orthant { i } => DVector::from_element(1, du[*i]),
        }
    }

    /// Adds `G^T z` (adjoint of the linear part) into `out`.
    pub fn add_adjoint(&self, z: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Cone::Ball { idx, .. } => idx
                .iter()
                .enumerate()
                .for_each(|(r, &i)| out[i] += z[r + 1]),
            Cone::Pair { j, .. } => {
                out[2 * j] += z[1];
                out[2 * j + 1] += z[2];
            }
            Cone::Dense { g, .. } => out.gemv_tr(1.0, g, z, 1.0),
            Cone::Orthant { i } => out[*i] += z[0],
        }
    }

    pub fn is_orthant(&self) -> bool {
        matches!(self, Cone::Orthant { .. })
    }
}

/// `s0^2 - ||s1||^2` for a second-order cone slack.
pub(crate) fn soc_det(s: &DVector<f64>) -> f64 {
    let tail = s.rows(1, s.len() - 1).norm_squared();
    (s[0] - tail.sqrt()) * (s[0] + tail.sqrt())
}

/// Interior test for a cone slack.
pub(crate) fn interior(cone: &Cone, s: &DVector<f64>) -> bool {
    if cone.is_orthant() {
        s[0] > 0.0
    } else {
        s[0] > 0.0 && soc_det(s) > 0.0
    }
}

/// Membership violation `max(0, ||s1|| - s0)` (or `max(0, -s0)`).
pub(crate) fn cone_violation(orthant: bool, s: &DVector<f64>) -> f64 {
    if orthant {
        (-s[0]).max(0.0)
    } else {
        (s.rows(1, s.len() - 1).norm() - s[0]).max(0.0)
    }
}

/// Real lifting of the complex row: `(Re{row x}, Im{row x})` coefficients.
pub(crate) fn lift_row(row: &CVector, scale: f64, width: usize) -> (DVector<f64>, DVector<f64>) {
    let mut re = DVector::zeros(width);
    let mut im = DVector::zeros(width);
    for (j, c) in row.iter().enumerate() {
        re[2 * j] = c.re * scale;
        re[2 * j + 1] = -c.im * scale;
        im[2 * j] = c.im * scale;
        im[2 * j + 1] = c.re * scale;
    }
    (re, im)
}

/// Orthonormal basis `E'` of the row space of `rows` with matching
/// right-hand side, the map from multipliers of `E'` back to `rows`, and
/// whether the system `rows u = rhs` is inconsistent.
fn independent_rows(
    rows: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, bool) {
    let (p, nv) = rows.shape();
    if p == 0 {
        return (
            DMatrix::zeros(0, nv),
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            false,
        );
    }
    let svd = rows.clone().svd(true, true);
    let (u, vt) = (
        svd.u.expect("left vectors"),
        svd.v_t.expect("right vectors"),
    );
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let r = keep.len();
    let eq = DMatrix::from_fn(r, nv, |a, c| vt[(keep[a], c)]);
    let ut_rhs = u.tr_mul(rhs);
    let eq_rhs = DVector::from_fn(r, |a, _| ut_rhs[keep[a]] / svd.singular_values[keep[a]]);
    let map = DMatrix::from_fn(p, r, |row, a| {
        u[(row, keep[a])] / svd.singular_values[keep[a]]
    });
    let projected = rows * eq.tr_mul(&eq_rhs);
    let inconsistent = (&projected - rhs).amax() > 1e-9 * rhs.amax().max(1.0);
    (eq, eq_rhs, map, inconsistent)
}

/// Equilibrated real form of a [`ConeProblem`].
#[derive(Debug, Clone)]
pub(crate) struct Lifted {
    pub n: usize,
    pub nv: usize,
    /// Variable scale `R`: `x = R (u_even + j u_odd)`.
    pub radius: f64,
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub cones: Vec<Cone>,
    /// Independent equality rows `eq u = eq_rhs` (orthonormal).
    pub eq: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    /// Original unit-norm rows, one per cone with a nonzero `Im{lhs}` row.
    pub eq_rows: DMatrix<f64>,
    /// Multipliers of `eq_rows` are `eq_map * nu` for multipliers `nu` of `eq`.
    pub eq_map: DMatrix<f64>,
    /// Second-order cone owning each row of `eq_rows`.
    pub eq_owner: Vec<usize>,
    /// Index of the first dense cone in `cones`.
    pub first_dense: usize,
    /// Some equality row reads `0 = c` with `c != 0`.
    pub inconsistent: bool,
}

impl Lifted {
    pub fn new(p: &ConeProblem) -> Self {
        let n = p.dim;
        let nv = 2 * n;
        let radius = p.balls.iter().map(|b| b.radius).fold(f64::NAN, f64::max);
        let radius = if radius.is_finite() && radius > 0.0 {
            radius
        } else {
            1.0
        };

        let fmax = if p.q_factor.nrows() == 0 {
            0.0
        } else {
            p.q_factor.clone().singular_values().max()
        };
        let omega = (radius * radius * fmax * fmax).max(2.0 * radius * p.v.norm());
        let omega = if omega > 0.0 && omega.is_finite() {
            omega
        } else {
            1.0
        };

        let qs = radius / omega.sqrt();
        let mut quad = DMatrix::zeros(2 * p.q_factor.nrows(), nv);
        for (r, row) in p.q_factor.row_iter().enumerate() {
            let (re, im) = lift_row(&row.transpose(), qs, nv);
            quad.set_row(2 * r, &re.transpose());
            quad.set_row(2 * r + 1, &im.transpose());
        }
        let ls = radius / omega;
        let lin = DVector::from_fn(nv, |i, _| {
            let c = p.v[i / 2];
            ls * if i % 2 == 0 { c.re } else { c.im }
        });

        let mut cones = Vec::new();
        for b in &p.balls {
            let idx = b.indices.iter().flat_map(|&j| [2 * j, 2 * j + 1]).collect();
            cones.push(Cone::Ball {
                idx,
                radius: b.radius / radius,
            });
        }
        for &j in &p.boxed {
            cones.push(Cone::Pair {
                j,
                radius: 1.0 / radius,
            });
        }
        let first_dense = cones.len();

        let mut eq_rows: Vec<DVector<f64>> = Vec::new();
        let mut eq_rhs = Vec::new();
        let mut eq_owner = Vec::new();
        let mut inconsistent = false;
        for (c, s) in p.socs.iter().enumerate() {
            let m = 2 + 2 * s.rhs.len();
            let mut g = DMatrix::zeros(m, nv);
            let mut h = DVector::zeros(m);
            let (re, im) = lift_row(&s.lhs.row, radius, nv);
            g.set_row(0, &(re * s.gain).transpose());
            h[0] = s.gain * s.lhs.offset.re;
            for (i, f) in s.rhs.iter().enumerate() {
                let (fr, fi) = lift_row(&f.row, radius, nv);
                g.set_row(1 + 2 * i, &fr.transpose());
                g.set_row(2 + 2 * i, &fi.transpose());
                h[1 + 2 * i] = f.offset.re;
                h[2 + 2 * i] = f.offset.im;
            }
            h[m - 1] = s.sigma;
            let gamma = (0..m)
                .map(|r| g.row(r).norm().max(h[r].abs()))
                .fold(0.0, f64::max);
            let gamma = if gamma > 0.0 { gamma } else { 1.0 };
            cones.push(Cone::Dense {
                g: g / gamma,
                h: h / gamma,
            });

            let rn = im.norm();
            let off = s.lhs.offset.im;
            if rn > 0.0 {
                eq_rows.push(im / rn);
                eq_rhs.push(-off / rn);
                eq_owner.push(c);
            } else if off != 0.0 {
                inconsistent = true;
            }
        }
        let mut rows = DMatrix::zeros(eq_rows.len(), nv);
        for (r, row) in eq_rows.iter().enumerate() {
            rows.set_row(r, &row.transpose());
        }
        let rhs = DVector::from_vec(eq_rhs);
        let (eq, eq_rhs, eq_map, dependent) = independent_rows(&rows, &rhs);
        inconsistent |= dependent;
        Lifted {
            n,
            nv,
            radius,
            quad,
            lin,
            cones,
            eq,
            eq_rhs,
            eq_rows: rows,
            eq_map,
            eq_owner,
            first_dense,
            inconsistent,
        }
    }

    /// Scaled real coordinates of a complex point.
    pub fn to_scaled(&self, x: &CVector) -> DVector<f64> {
        DVector::from_fn(2 * self.n, |i, _| {
            let c = x[i / 2];
            (if i % 2 == 0 { c.re } else { c.im }) / self.radius
        })
    }

    /// Complex point of scaled real coordinates (extra trailing entries ignored).
    pub fn to_complex(&self, u: &DVector<f64>) -> CVector {
        CVector::from_fn(self.n, |j, _| {
            C64::new(u[2 * j], u[2 * j + 1]) * self.radius
        })
    }

    /// Scaled objective `||A u||^2 - 2 l^T u`.
    pub fn f(&self, u: &DVector<f64>) -> f64 {
        (&self.quad * u).norm_squared() - 2.0 * self.lin.dot(u)
    }

    /// Gradient of the scaled objective.
    pub fn grad_f(&self, u: &DVector<f64>) -> DVector<f64> {
        let au = &self.quad * u;
        let mut g = self.quad.tr_mul(&au) * 2.0;
        g.axpy(-2.0, &self.lin, 1.0);
        g
    }

    /// Equality residual `eq u - eq_rhs`.
    pub fn eq_residual(&self, u: &DVector<f64>) -> DVector<f64> {
        if self.eq.nrows() == 0 {
            return DVector::zeros(0);
        }
        &self.eq * u - &self.eq_rhs
    }

    /// Normalized KKT residual of the scaled problem at `u`.
    pub fn kkt(&self, u: &DVector<f64>, m: &Multipliers) -> f64 {
        let mut stat = self.grad_f(u);
        let mut primal = self.eq_residual(u).amax();
        let mut dual: f64 = 0.0;
        let mut comp = 0.0;
        for (cone, z) in self.cones.iter().zip(&m.cones) {
            let mut neg = DVector::zeros(self.nv);
            cone.add_adjoint(z, &mut neg);
            stat -= neg;
            let s = cone.slack(u);
            primal = primal.max(cone_violation(cone.is_orthant(), &s));
            dual = dual.max(cone_violation(cone.is_orthant(), z));
            comp += s.dot(z);
        }
        for (r, &owner) in self.eq_owner.iter().enumerate() {
            stat.axpy(m.eq[owner], &self.eq_rows.row(r).transpose(), 1.0);
        }
        let f = self.f(u);
        let comp = comp.abs() / f.abs().max(1.0);
        stat.amax().max(primal).max(dual).max(comp)
    }
}
