//! Gram-matrix Hilbert spaces and the linear algebra kernels built on them.
//!
//! All X-geometric quantities reduce to Euclidean ones through the Cholesky
//! factor `G = L Lᴴ`: the map `u ↦ Lᴴ u` is an isometry from `(Cⁿ, ⟨·,·⟩_X)` onto
//! Euclidean `Cⁿ`.

use std::sync::Arc;

use faer::prelude::SpSolver;
use faer::{MatRef, Side};

use crate::dense::{self, ZERO};
use crate::error::{Error, Result};
use crate::{CMat, C64};

const HERMITIAN_TOL: f64 = 1e-13;
const RANK_TOL: f64 = 1e-10;

const DENSE_SVD_LIMIT: usize = 600;

struct GramInner {
    gram: CMat,
    chol_l: CMat,
    /// Lower bandwidth of `chol_l`.
    chol_bw: usize,
}

/// Finite-dimensional Hilbert space `Cⁿ` with inner product `⟨u, v⟩_X = vᴴ G u`.
///
/// Cheap to clone; the Gram matrix and its Cholesky factor are shared.
#[derive(Clone)]
pub struct GramSpace {
    inner: Arc<GramInner>,
}

impl std::fmt::Debug for GramSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GramSpace").field("dim", &self.dim()).finish()
    }
}

impl GramSpace {
    /// Validates and factors a Gram matrix.
    pub fn new(gram: CMat) -> Result<Self> {
        let n = gram.nrows();
        if gram.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "Gram matrix must be square",
                expected: n,
                found: gram.ncols(),
            });
        }
        let scale = dense::max_abs(gram.as_ref());
        if n > 0 && scale == 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let dev = if n == 0 {
            0.0
        } else {
            dense::hermitian_deviation(gram.as_ref()) / scale
        };
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let herm = dense::hermitian_part(gram.as_ref());
        let chol_l = if n == 0 {
            dense::zeros(0, 0)
        } else {
            herm.cholesky(Side::Lower)
                .map_err(|_| Error::NotPositiveDefinite)?
                .compute_l()
        };
        for i in 0..n {
            let d = chol_l.read(i, i).re;
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
        }
        let chol_bw = bandwidth(chol_l.as_ref()).0;
        Ok(Self {
            inner: Arc::new(GramInner {
                gram: herm,
                chol_l,
                chol_bw,
            }),
        })
    }

    /// Euclidean space `Cⁿ`.
    pub fn euclidean(n: usize) -> Self {
        Self::new(dense::identity(n)).expect("identity is a valid Gram matrix")
    }

    pub fn dim(&self) -> usize {
        self.inner.gram.nrows()
    }

    pub fn gram(&self) -> MatRef<'_, C64> {
        self.inner.gram.as_ref()
    }

    /// Lower Cholesky factor of the Gram matrix.
    pub fn chol_l(&self) -> MatRef<'_, C64> {
        self.inner.chol_l.as_ref()
    }

    fn check_rows(&self, a: MatRef<'_, C64>, context: &'static str) -> Result<()> {
        if a.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found: a.nrows(),
            });
        }
        Ok(())
    }

    fn check_square(&self, a: MatRef<'_, C64>, context: &'static str) -> Result<()> {
        self.check_rows(a, context)?;
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found: a.ncols(),
            });
        }
        Ok(())
    }

    /// `⟨u, v⟩_X = vᴴ G u` for column vectors `u` and `v`.
    pub fn x_inner(&self, u: MatRef<'_, C64>, v: MatRef<'_, C64>) -> Result<C64> {
        self.check_rows(u, "x_inner(u)")?;
        self.check_rows(v, "x_inner(v)")?;
        if u.ncols() != 1 || v.ncols() != 1 {
            return Err(Error::Usage("x_inner expects column vectors".into()));
        }
        let gu = dense::matmul(self.gram(), u);
        let mut s = ZERO;
        for i in 0..self.dim() {
            s += v.read(i, 0).conj() * gu.read(i, 0);
        }
        Ok(s)
    }

    pub fn x_norm(&self, u: MatRef<'_, C64>) -> Result<f64> {
        Ok(self.x_inner(u, u)?.re.max(0.0).sqrt())
    }

    /// Matrix of pairwise inner products `Vᴴ G U`.
    pub fn inner_matrix(&self, u: MatRef<'_, C64>, v: MatRef<'_, C64>) -> CMat {
        v.adjoint() * dense::matmul(self.gram(), u)
    }

    fn banded(&self) -> bool {
        (self.inner.chol_bw + 1) * 8 <= self.dim()
    }

    fn lower_solve(&self, x: &mut CMat) {
        if !self.banded() {
            dense::solve_lower_in_place(self.chol_l(), x);
            return;
        }
        let (l, bw, n) = (self.chol_l(), self.inner.chol_bw, self.dim());
        for j in 0..x.ncols() {
            let c = x.col_as_slice_mut(j);
            for i in 0..n {
                let mut s = c[i];
                for k in i.saturating_sub(bw)..i {
                    s -= l.read(i, k) * c[k];
                }
                c[i] = s / l.read(i, i).re;
            }
        }
    }

    fn lower_adjoint_solve(&self, x: &mut CMat) {
        if !self.banded() {
            dense::solve_lower_adjoint_in_place(self.chol_l(), x);
            return;
        }
        let (l, bw, n) = (self.chol_l(), self.inner.chol_bw, self.dim());
        for j in 0..x.ncols() {
            let c = x.col_as_slice_mut(j);
            for i in (0..n).rev() {
                let mut s = c[i];
                for k in i + 1..(i + bw + 1).min(n) {
                    s -= l.read(k, i).conj() * c[k];
                }
                c[i] = s / l.read(i, i).re;
            }
        }
    }

    /// `G⁻¹ B`.
    pub fn solve_gram(&self, b: MatRef<'_, C64>) -> CMat {
        let mut x = b.to_owned();
        self.lower_solve(&mut x);
        self.lower_adjoint_solve(&mut x);
        x
    }

    /// `L⁻¹ B`.
    pub fn whiten_rows(&self, b: MatRef<'_, C64>) -> CMat {
        let mut x = b.to_owned();
        self.lower_solve(&mut x);
        x
    }

    /// `L⁻ᴴ B`.
    pub fn unwhiten_rows(&self, b: MatRef<'_, C64>) -> CMat {
        let mut x = b.to_owned();
        self.lower_adjoint_solve(&mut x);
        x
    }

    /// Euclidean representation `L⁻¹ F L⁻ᴴ` of the operator `G⁻¹ F` given by the
    /// form matrix `F`. Its singular values are the X-singular values of the
    /// operator.
    pub fn whiten_form(&self, form: MatRef<'_, C64>) -> CMat {
        let left = self.whiten_rows(form);
        let mut t = dense::adjoint(left.as_ref());
        self.lower_solve(&mut t);
        dense::adjoint(t.as_ref())
    }

    /// Form matrix `G B` of an operator `B`.
    pub fn form_of(&self, b: MatRef<'_, C64>) -> Result<CMat> {
        self.check_square(b, "form_of")?;
        Ok(dense::matmul(self.gram(), b))
    }

    /// Operator `G⁻¹ F` of a form matrix `F`.
    pub fn operator_of(&self, form: MatRef<'_, C64>) -> Result<CMat> {
        self.check_square(form, "operator_of")?;
        Ok(self.solve_gram(form))
    }

    /// X-adjoint `G⁻¹ Bᴴ G`.
    pub fn x_adjoint(&self, b: MatRef<'_, C64>) -> Result<CMat> {
        self.check_square(b, "x_adjoint")?;
        let bh_g = dense::adjoint(dense::matmul(self.gram(), b).as_ref());
        Ok(self.solve_gram(bh_g.as_ref()))
    }

    /// `(σ_min, σ_max)` of the operator `B` with respect to the X-norm.
    ///
    /// `σ_min` is `1/‖B⁻¹‖` for invertible `B` and `0` for numerically singular `B`.
    pub fn min_max_gsv(&self, b: MatRef<'_, C64>) -> Result<(f64, f64)> {
        let form = self.form_of(b)?;
        self.form_min_max_gsv(form.as_ref())
    }

    /// Same as [`GramSpace::min_max_gsv`] for the operator with form matrix `F`.
    pub fn form_min_max_gsv(&self, form: MatRef<'_, C64>) -> Result<(f64, f64)> {
        self.check_square(form, "form_min_max_gsv")?;
        if self.dim() == 0 {
            return Ok((0.0, 0.0));
        }
        let w = self.whiten_form(form);
        let eps_n = f64::EPSILON * self.dim() as f64;
        if self.dim() > DENSE_SVD_LIMIT {
            // Squared singular values: resolves σ_min down to about sqrt(ε)·σ_max.
            let e = dense::gram_eigenvalues(w.as_ref());
            let smax = e.last().unwrap().max(0.0).sqrt();
            let lmin = e[0];
            let smin = if lmin <= 4.0 * eps_n * smax * smax {
                0.0
            } else {
                lmin.sqrt()
            };
            return Ok((smin, smax));
        }
        let s = dense::singular_values(w.as_ref());
        let smax = s[0];
        let mut smin = *s.last().unwrap();
        if smin <= eps_n * smax {
            smin = 0.0;
        }
        Ok((smin, smax))
    }

    /// X-orthonormalizes the columns of `v` by twice-iterated modified
    /// Gram–Schmidt. A column whose remaining X-norm falls below `1e-10` times
    /// the largest input column norm is dropped.
    pub fn m_orthonormalize(&self, v: MatRef<'_, C64>) -> Result<Orthonormalized> {
        self.check_rows(v, "m_orthonormalize")?;
        let n = self.dim();
        let gv = dense::matmul(self.gram(), v);
        let mut max_norm = 0.0f64;
        for j in 0..v.ncols() {
            let mut s = ZERO;
            for i in 0..n {
                s += v.read(i, j).conj() * gv.read(i, j);
            }
            max_norm = max_norm.max(s.re.max(0.0).sqrt());
        }
        let mut basis: Vec<Vec<C64>> = Vec::new();
        let mut gbasis: Vec<Vec<C64>> = Vec::new();
        let mut dropped = 0;
        for j in 0..v.ncols() {
            let mut w: Vec<C64> = (0..n).map(|i| v.read(i, j)).collect();
            for _pass in 0..2 {
                for (q, gq) in basis.iter().zip(&gbasis) {
                    let mut c = ZERO;
                    for i in 0..n {
                        c += gq[i].conj() * w[i];
                    }
                    for i in 0..n {
                        w[i] -= c * q[i];
                    }
                }
            }
            let wm = dense::column(&w);
            let gw = dense::matmul(self.gram(), wm.as_ref());
            let mut s = ZERO;
            for i in 0..n {
                s += w[i].conj() * gw.read(i, 0);
            }
            let nrm = s.re.max(0.0).sqrt();
            if max_norm == 0.0 || nrm <= RANK_TOL * max_norm {
                dropped += 1;
                continue;
            }
            basis.push(w.iter().map(|x| *x / nrm).collect());
            gbasis.push((0..n).map(|i| gw.read(i, 0) / nrm).collect());
        }
        let q = CMat::from_fn(n, basis.len(), |i, k| basis[k][i]);
        Ok(Orthonormalized { q, dropped })
    }
}

/// Result of [`GramSpace::m_orthonormalize`].
#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub q: CMat,
    pub dropped: usize,
}

/// Band LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab() + self.kl + self.ku + i - j
    }

    pub fn new(a: MatRef<'_, C64>, kl: usize, ku: usize) -> Self {
        let n = a.nrows();
        let ldab = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            ab: vec![ZERO; ldab * n],
            ipiv: vec![0; n],
        };
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n.saturating_sub(1));
            for i in lo..=hi {
                let k = lu.idx(i, j);
                lu.ab[k] = a.read(i, j);
            }
        }
        lu.factor();
        lu
    }

    fn factor(&mut self) {
        let n = self.n;
        let mut ju = 0usize;
        for j in 0..n {
            let km = self.kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = -1.0;
            for r in 0..=km {
                let v = self.ab[self.idx(j + r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.ipiv[j] = j + p;
            let piv = self.ab[self.idx(j + p, j)];
            if piv == ZERO {
                continue;
            }
            ju = ju.max((j + self.ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let inv = piv.inv();
            for r in 1..=km {
                let k = self.idx(j + r, j);
                self.ab[k] *= inv;
            }
            for c in (j + 1)..=ju {
                let t = self.ab[self.idx(j, c)];
                if t == ZERO {
                    continue;
                }
                for r in 1..=km {
                    let l = self.ab[self.idx(j + r, j)];
                    let k = self.idx(j + r, c);
                    self.ab[k] -= l * t;
                }
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut CMat) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for c in 0..b.ncols() {
            let mut x: Vec<C64> = (0..n).map(|i| b.read(i, c)).collect();
            for j in 0..n {
                let p = self.ipiv[j];
                if p != j {
                    x.swap(j, p);
                }
                let km = self.kl.min(n - 1 - j);
                let xj = x[j];
                if xj != ZERO {
                    for r in 1..=km {
                        x[j + r] -= self.ab[self.idx(j + r, j)] * xj;
                    }
                }
            }
            for j in (0..n).rev() {
                x[j] /= self.ab[self.idx(j, j)];
                let xj = x[j];
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    x[i] -= self.ab[self.idx(i, j)] * xj;
                }
            }
            for i in 0..n {
                b.write(i, c, x[i]);
            }
        }
    }

    fn diag_abs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.ab[self.idx(j, j)].abs())
    }
}

/// Lower and upper bandwidth of a square matrix.
pub fn bandwidth(a: MatRef<'_, C64>) -> (usize, usize) {
    let (mut kl, mut ku) = (0usize, 0usize);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a.read(i, j) != ZERO {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
    }
    (kl, ku)
}

enum Factor {
    Dense(faer::linalg::solvers::PartialPivLu<C64>),
    Banded(BandedLu),
}

/// LU-based linear solver that switches to band storage for narrow-banded
/// matrices.
pub struct LinearSolver {
    factor: Factor,
    n: usize,
    pivot_ratio: f64,
}

impl LinearSolver {
    pub fn new(a: MatRef<'_, C64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "LinearSolver::new",
                expected: n,
                found: a.ncols(),
            });
        }
        let (kl, ku) = bandwidth(a);
        let banded = n >= 64 && (2 * kl + ku + 1) * 16 <= n;
        let (factor, pivot_ratio) = if banded {
            let lu = BandedLu::new(a, kl, ku);
            let r = ratio(lu.diag_abs());
            (Factor::Banded(lu), r)
        } else if n == 0 {
            return Ok(Self {
                factor: Factor::Banded(BandedLu::new(a, 0, 0)),
                n,
                pivot_ratio: 1.0,
            });
        } else {
            let lu = a.partial_piv_lu();
            let u = lu.compute_u();
            let r = ratio((0..n).map(|i| u.read(i, i).abs()));
            (Factor::Dense(lu), r)
        };
        Ok(Self {
            factor,
            n,
            pivot_ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `min |u_ii| / max |u_ii|` of the triangular factor; a cheap singularity
    /// indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, b: MatRef<'_, C64>) -> CMat {
        match &self.factor {
            Factor::Dense(lu) => lu.solve(b),
            Factor::Banded(lu) => {
                let mut x = b.to_owned();
                lu.solve_in_place(&mut x);
                x
            }
        }
    }
}

fn ratio(it: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in it {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 || !lo.is_finite() {
        0.0
    } else {
        lo / hi
    }
}
