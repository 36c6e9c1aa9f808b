//! Newton systems of the barrier method.
//!
//! The barrier Hessian has the structure `H = D + F F^T`: `D` is
//! block-diagonal (2x2 blocks `iso I + r r^T` for coordinate pairs from
//! boxes and the isotropic part of balls, kept in that form so they can be
//! inverted without cancellation near the boundary, plus scalar entries for
//! orthant variables) and
//! `F` collects low-rank factors (the quadratic objective, the rank-one part
//! of each ball and a scaled factor of each dense cone). When `F` is narrow
//! the system is solved with the Woodbury identity, otherwise `H` is formed
//! densely; equality rows are handled through their Schur complement.

use std::cell::OnceCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// 2x2 block `iso I + r r^T`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Block {
    pub iso: f64,
    pub r: [f64; 2],
}

impl Block {
    fn entries(&self) -> [f64; 3] {
        let [p, q] = self.r;
        [self.iso + p * p, p * q, self.iso + q * q]
    }
}

/// `D + F F^T`.
pub(crate) struct Hessian {
    /// Blocks for pairs `(2j, 2j + 1)`.
    pub blocks: Vec<Block>,
    /// Diagonal entries for variables after the pairs.
    pub tail: Vec<f64>,
    pub f: DMatrix<f64>,
}

impl Hessian {
    pub fn dim(&self) -> usize {
        2 * self.blocks.len() + self.tail.len()
    }

    fn apply_d(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for (j, blk) in self.blocks.iter().enumerate() {
            let (p, q) = (x[2 * j], x[2 * j + 1]);
            let proj = blk.r[0] * p + blk.r[1] * q;
            y[2 * j] = blk.iso * p + blk.r[0] * proj;
            y[2 * j + 1] = blk.iso * q + blk.r[1] * proj;
        }
        let off = 2 * self.blocks.len();
        for (i, d) in self.tail.iter().enumerate() {
            y[off + i] = d * x[off + i];
        }
        y
    }

    fn solve_d(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for (j, blk) in self.blocks.iter().enumerate() {
            let (p, q) = (x[2 * j], x[2 * j + 1]);
            let [rp, rq] = blk.r;
            let w = (rp * p + rq * q) / (blk.iso + rp * rp + rq * rq);
            y[2 * j] = (p - rp * w) / blk.iso;
            y[2 * j + 1] = (q - rq * w) / blk.iso;
        }
        let off = 2 * self.blocks.len();
        for (i, d) in self.tail.iter().enumerate() {
            y[off + i] = x[off + i] / d;
        }
        y
    }

    /// `H x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.apply_d(x);
        if self.f.ncols() > 0 {
            let ft = self.f.tr_mul(x);
            y.gemv(1.0, &self.f, &ft, 1.0);
        }
        y
    }

    fn d_positive(&self) -> bool {
        self.blocks.iter().all(|b| b.iso > 0.0) && self.tail.iter().all(|d| *d > 0.0)
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for (j, blk) in self.blocks.iter().enumerate() {
            let [a, b, c] = blk.entries();
            h[(2 * j, 2 * j)] = a;
            h[(2 * j, 2 * j + 1)] = b;
            h[(2 * j + 1, 2 * j)] = b;
            h[(2 * j + 1, 2 * j + 1)] = c;
        }
        let off = 2 * self.blocks.len();
        for (i, d) in self.tail.iter().enumerate() {
            h[(off + i, off + i)] = *d;
        }
        if self.f.ncols() > 0 {
            h.gemm(1.0, &self.f, &self.f.transpose(), 1.0);
        }
        h
    }

    pub fn factor(&self) -> Factor<'_> {
        let n = self.dim();
        let r = self.f.ncols();
        if self.d_positive() && 3 * r < 2 * n {
            let dinv_f = DMatrix::from_columns(
                &(0..r)
                    .map(|c| self.solve_d(&self.f.column(c).into()))
                    .collect::<Vec<_>>(),
            );
            let cap = DMatrix::identity(r, r) + self.f.tr_mul(&dinv_f);
            let cap = (&cap + cap.transpose()) * 0.5;
            if let Some(chol) = robust_cholesky(cap) {
                return Factor {
                    h: self,
                    woodbury: Some((dinv_f, chol)),
                    dense: OnceCell::new(),
                };
            }
        }
        Factor {
            h: self,
            woodbury: None,
            dense: OnceCell::new(),
        }
    }
}

/// Cholesky with a growing diagonal ridge if the matrix is numerically
/// indefinite.
pub(crate) fn robust_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut ridge = 1e-14 * scale;
    for _ in 0..12 {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        ridge *= 100.0;
    }
    None
}

/// Dense Cholesky of `S H S` with the Jacobi scaling `S = diag(H)^{-1/2}`.
struct Dense {
    scale: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Relative residual below which a Woodbury solve is trusted.
const WOODBURY_TRUST: f64 = 1e-10;

pub(crate) struct Factor<'a> {
    h: &'a Hessian,
    woodbury: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
    /// Built on first use, when Woodbury is unavailable or inaccurate.
    dense: OnceCell<Dense>,
}

impl Factor<'_> {
    fn dense(&self) -> &Dense {
        self.dense.get_or_init(|| {
            let mut m = self.h.dense();
            let scale = m
                .diagonal()
                .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 });
            for c in 0..m.ncols() {
                for r in 0..m.nrows() {
                    m[(r, c)] *= scale[r] * scale[c];
                }
            }
            let chol = robust_cholesky(m).expect("barrier Hessian is positive definite");
            Dense { scale, chol }
        })
    }

    fn woodbury_solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let (dinv_f, chol) = self.woodbury.as_ref()?;
        let y = self.h.solve_d(b);
        let w = chol.solve(&self.h.f.tr_mul(&y));
        let mut x = y;
        x.gemv(-1.0, dinv_f, &w, 1.0);
        Some(x)
    }

    fn dense_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let d = self.dense();
        d.chol
            .solve(&b.component_mul(&d.scale))
            .component_mul(&d.scale)
    }

    /// Two steps of iterative refinement; returns the solution and its
    /// relative residual.
    fn refine(
        &self,
        b: &DVector<f64>,
        raw: impl Fn(&DVector<f64>) -> DVector<f64>,
    ) -> (DVector<f64>, f64) {
        let mut x = raw(b);
        for _ in 0..2 {
            let r = b - self.h.apply(&x);
            x += raw(&r);
        }
        let res = (b - self.h.apply(&x)).norm() / b.norm().max(f64::MIN_POSITIVE);
        (x, res)
    }

    /// `H^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let first = self
            .woodbury
            .as_ref()
            .map(|_| self.refine(b, |v| self.woodbury_solve(v).expect("woodbury factor")));
        match first {
            Some((x, res)) if res <= WOODBURY_TRUST => x,
            Some((x, res)) => {
                let (y, dres) = self.refine(b, |v| self.dense_solve(v));
                if dres < res {
                    y
                } else {
                    x
                }
            }
            None => self.refine(b, |v| self.dense_solve(v)).0,
        }
    }
}

/// Solves `[H E^T; E 0] [dx; nu] = [-g; -rp]`.
pub(crate) fn kkt_solve(
    factor: &Factor<'_>,
    e: &DMatrix<f64>,
    g: &DVector<f64>,
    rp: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let a = factor.solve(&-g);
    let p = e.nrows();
    if p == 0 {
        return (a, DVector::zeros(0));
    }
    let cols: Vec<DVector<f64>> = (0..p)
        .map(|r| factor.solve(&e.row(r).transpose()))
        .collect();
    let y = DMatrix::from_columns(&cols);
    let s = e * &y;
    let s = (&s + s.transpose()) * 0.5;
    let rhs = e * &a + rp;
    let nu = match robust_cholesky(s.clone()) {
        Some(c) => c.solve(&rhs),
        None => s
            .pseudo_inverse(1e-12)
            .map(|pinv| pinv * &rhs)
            .unwrap_or_else(|_| DVector::zeros(p)),
    };
    let mut dx = a;
    dx.gemv(-1.0, &y, &nu, 1.0);
    (dx, nu)
}
