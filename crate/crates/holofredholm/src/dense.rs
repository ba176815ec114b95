//! Small dense helpers on top of faer.

use faer::linalg::triangular_solve;
use faer::{Mat, MatRef, Parallelism, Side};

use crate::{CMat, C64};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn zeros(m: usize, n: usize) -> CMat {
    CMat::zeros(m, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn from_real(rows: &[&[f64]]) -> CMat {
    let m = rows.len();
    let n = if m == 0 { 0 } else { rows[0].len() };
    CMat::from_fn(m, n, |i, j| C64::new(rows[i][j], 0.0))
}

pub fn scaled(a: MatRef<'_, C64>, s: C64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a.read(i, j) * s)
}

/// `acc += s * a`.
pub fn axpy(acc: &mut CMat, s: C64, a: MatRef<'_, C64>) {
    if s == ZERO {
        return;
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = acc.read(i, j) + s * a.read(i, j);
            acc.write(i, j, v);
        }
    }
}

/// Column-compressed copy of a mostly-zero matrix for repeated products.
#[derive(Clone, Debug)]
pub struct ColumnSparse {
    nrows: usize,
    cols: Vec<Vec<(usize, C64)>>,
}

impl ColumnSparse {
    /// Compresses `a`, or returns `None` when more than one entry in eight is
    /// nonzero.
    pub fn compress(a: MatRef<'_, C64>) -> Option<Self> {
        let (m, k) = (a.nrows(), a.ncols());
        let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); k];
        let mut nnz = 0usize;
        for (p, c) in cols.iter_mut().enumerate() {
            for i in 0..m {
                let v = a.read(i, p);
                if v != ZERO {
                    c.push((i, v));
                    nnz += 1;
                }
            }
            if nnz * 8 > m * k {
                return None;
            }
        }
        Some(Self { nrows: m, cols })
    }

    pub fn mul(&self, b: MatRef<'_, C64>) -> CMat {
        let mut out = zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let o = out.col_as_slice_mut(j);
            for (p, c) in self.cols.iter().enumerate() {
                let bp = b.read(p, j);
                if bp == ZERO {
                    continue;
                }
                for &(i, v) in c {
                    o[i] += v * bp;
                }
            }
        }
        out
    }
}

/// `a * b`, looping over the nonzeros of `a` when it is mostly zero.
pub fn matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    if a.nrows() * a.ncols() < 4096 {
        return a * b;
    }
    match ColumnSparse::compress(a) {
        Some(s) => s.mul(b),
        None => a * b,
    }
}

/// `aᴴ * b` through [`matmul`].
pub fn adj_matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    matmul(adjoint(a).as_ref(), b)
}

/// Eigenvalues of `aᴴ a`, ascending. Real input takes the real path.
pub fn gram_eigenvalues(a: MatRef<'_, C64>) -> Vec<f64> {
    let n = a.ncols();
    if n == 0 {
        return Vec::new();
    }
    let mut w = if is_real(a) {
        let r = Mat::<f64>::from_fn(a.nrows(), n, |i, j| a.read(i, j).re);
        let g = r.transpose() * &r;
        g.selfadjoint_eigenvalues(Side::Lower)
    } else {
        let g = a.adjoint() * a;
        g.selfadjoint_eigenvalues(Side::Lower)
    };
    w.sort_by(|x, y| x.total_cmp(y));
    w
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a.read(i, j).abs());
        }
    }
    m
}

pub fn fro_norm(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a.read(i, j).norm_sqr();
        }
    }
    s.sqrt()
}

/// Largest entrywise deviation `|a_ij - conj(a_ji)|`.
pub fn hermitian_deviation(a: MatRef<'_, C64>) -> f64 {
    let n = a.nrows();
    let mut d = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            d = d.max((a.read(i, j) - a.read(j, i).conj()).abs());
        }
    }
    d
}

pub fn is_real(a: MatRef<'_, C64>) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a.read(i, j).im != 0.0 {
                return false;
            }
        }
    }
    true
}

pub fn hermitian_part(a: MatRef<'_, C64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| {
        (a.read(i, j) + a.read(j, i).conj()) * 0.5
    })
}

/// Eigenvalues of the Hermitian part of `a`, ascending. Real input takes the
/// real symmetric path.
pub fn hermitian_eigenvalues(a: MatRef<'_, C64>) -> Vec<f64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let mut w = if is_real(a) {
        let r = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a.read(i, j).re + a.read(j, i).re));
        r.selfadjoint_eigenvalues(Side::Lower)
    } else {
        hermitian_part(a).selfadjoint_eigenvalues(Side::Lower)
    };
    w.sort_by(|x, y| x.total_cmp(y));
    w
}

/// Singular values, nonincreasing.
pub fn singular_values(a: MatRef<'_, C64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s = a.singular_values();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Full SVD with singular values sorted nonincreasing.
pub struct SortedSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: MatRef<'_, C64>) -> SortedSvd {
    let dec = a.svd();
    let k = a.nrows().min(a.ncols());
    let sd = dec.s_diagonal();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&x, &y| sd.read(y).re.total_cmp(&sd.read(x).re));
    let (u0, v0) = (dec.u(), dec.v());
    let mut perm: Vec<usize> = idx.clone();
    perm.extend(k..a.nrows());
    let u = CMat::from_fn(a.nrows(), a.nrows(), |i, j| u0.read(i, perm[j]));
    let mut perm_v: Vec<usize> = idx.clone();
    perm_v.extend(k..a.ncols());
    let v = CMat::from_fn(a.ncols(), a.ncols(), |i, j| v0.read(i, perm_v[j]));
    let s = idx.iter().map(|&i| sd.read(i).re).collect();
    SortedSvd { u, s, v }
}

/// Orthonormal basis (Euclidean) of the numerical null space of `a`: right
/// singular vectors with singular value `<= tol`.
pub fn null_space(a: MatRef<'_, C64>, tol: f64) -> CMat {
    let n = a.ncols();
    if n == 0 {
        return zeros(0, 0);
    }
    if a.nrows() == 0 {
        return identity(n);
    }
    let d = svd(a);
    let mut cols = Vec::new();
    for j in 0..n {
        let sj = if j < d.s.len() { d.s[j] } else { 0.0 };
        if sj <= tol {
            cols.push(j);
        }
    }
    CMat::from_fn(n, cols.len(), |i, k| d.v.read(i, cols[k]))
}

/// Eigenvalues and eigenvectors of a general complex matrix.
pub fn eigen(a: MatRef<'_, C64>) -> (Vec<C64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let e = a.complex_eigendecomposition();
    let s = e.s().column_vector();
    let vals = (0..n).map(|i| s.read(i)).collect();
    (vals, e.u().to_owned())
}

pub fn eigenvalues(a: MatRef<'_, C64>) -> Vec<C64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues()
}

/// Solves `L x = b` in place for lower triangular `L`.
pub fn solve_lower_in_place(l: MatRef<'_, C64>, b: &mut CMat) {
    triangular_solve::solve_lower_triangular_in_place(l, b.as_mut(), Parallelism::None);
}

/// Solves `Lᴴ x = b` in place for lower triangular `L`.
pub fn solve_lower_adjoint_in_place(l: MatRef<'_, C64>, b: &mut CMat) {
    triangular_solve::solve_upper_triangular_in_place(l.adjoint(), b.as_mut(), Parallelism::None);
}

pub fn col(a: MatRef<'_, C64>, j: usize) -> CMat {
    CMat::from_fn(a.nrows(), 1, |i, _| a.read(i, j))
}

pub fn select_cols(a: MatRef<'_, C64>, cols: &[usize]) -> CMat {
    CMat::from_fn(a.nrows(), cols.len(), |i, k| a.read(i, cols[k]))
}

pub fn hcat(blocks: &[MatRef<'_, C64>]) -> CMat {
    let m = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let n: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(m, n);
    let mut off = 0;
    for b in blocks {
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                out.write(i, off + j, b.read(i, j));
            }
        }
        off += b.ncols();
    }
    out
}

/// Column vector from a slice.
pub fn column(v: &[C64]) -> CMat {
    CMat::from_fn(v.len(), 1, |i, _| v[i])
}
