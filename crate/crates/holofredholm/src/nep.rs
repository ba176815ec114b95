//! Contour-integral eigensolver and local Jordan structure.

use std::f64::consts::PI;

use faer::prelude::SpSolver;
use faer::MatRef;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::dense::{self, ZERO};
use crate::error::{Error, Result};
use crate::linalg::{GramSpace, LinearSolver};
use crate::opfun::{HolomorphicOpFunction, POLE_TOL};
use crate::output::fmt_f64;
use crate::{CMat, C64};

/// Above this dimension kernels are found by inverse subspace iteration
/// instead of a dense SVD.
const DENSE_LIMIT: usize = 600;
const POWER_STEPS: usize = 40;
const INVERSE_STEPS: usize = 3;

/// Ellipse `center + rx cos t + i ry sin t` with `nodes` trapezoidal nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contour {
    pub center: C64,
    pub rx: f64,
    pub ry: f64,
    pub nodes: usize,
}

impl Contour {
    pub fn ellipse(center: C64, rx: f64, ry: f64, nodes: usize) -> Result<Self> {
        if !(rx > 0.0 && ry > 0.0) {
            return Err(Error::Usage("contour semi-axes must be positive".into()));
        }
        if nodes < 16 {
            return Err(Error::Usage(format!("contour needs at least 16 nodes, got {nodes}")));
        }
        Ok(Self {
            center,
            rx,
            ry,
            nodes,
        })
    }

    pub fn circle(center: C64, radius: f64, nodes: usize) -> Result<Self> {
        Self::ellipse(center, radius, radius, nodes)
    }

    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        Self::ellipse(self.center, self.rx, self.ry, nodes)
    }

    pub fn radius(&self) -> f64 {
        self.rx.max(self.ry)
    }

    /// `((x - cx)/rx)² + ((y - cy)/ry)²`, below one inside the contour.
    pub fn level(&self, z: C64) -> f64 {
        let d = z - self.center;
        (d.re / self.rx).powi(2) + (d.im / self.ry).powi(2)
    }

    pub fn contains(&self, z: C64) -> bool {
        self.level(z) < 1.0
    }

    /// Nodes `z_j` and weights `w_j` with `(1/2πi)∮ g dz ≈ Σ w_j g(z_j)`.
    pub fn quadrature(&self) -> Vec<(C64, C64)> {
        let n = self.nodes;
        (0..n)
            .map(|j| {
                let t = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                let z = self.center + C64::new(self.rx * t.cos(), self.ry * t.sin());
                let dz = C64::new(-self.rx * t.sin(), self.ry * t.cos());
                (z, dz / C64::new(0.0, n as f64))
            })
            .collect()
    }

    /// Checks that no pole lies on or inside the contour.
    pub fn check_poles(&self, f: &HolomorphicOpFunction) -> Result<()> {
        for p in f.poles() {
            let lvl = self.level(p);
            if lvl <= 1.0 + POLE_TOL {
                return Err(Error::Contour(format!(
                    "pole {p} lies inside or on the contour; move the contour"
                )));
            }
        }
        Ok(())
    }
}

/// Knobs for the eigensolver and the Jordan analysis.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Width of the random probe block.
    pub probe_rank: usize,
    /// Relative singular value threshold for all rank decisions.
    pub rank_tol: f64,
    /// Eigenvalues closer than this times the contour radius are merged.
    pub cluster_tol: f64,
    pub p_init: usize,
    pub p_max: usize,
    pub seed: u64,
    /// Longest Jordan chain examined before giving up.
    pub max_chain: usize,
    /// Largest acceptable condition estimate of `A(z)` at a quadrature node.
    pub cond_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            probe_rank: 6,
            rank_tol: 1e-8,
            cluster_tol: 1e-8,
            p_init: 2,
            p_max: 8,
            seed: 0,
            max_chain: 8,
            cond_limit: 1e14,
        }
    }
}

/// One eigenvalue with its multiplicities and kernel.
#[derive(Clone, Debug)]
pub struct EigenEntry {
    pub lambda: C64,
    pub geo_mult: usize,
    pub alg_mult: usize,
    pub kappa: usize,
    /// X-orthonormal basis of `ker A(λ)`.
    pub vectors: CMat,
    /// `max ‖A(λ)v‖_X` over the kernel basis.
    pub residual: f64,
    /// `‖A(λ)‖_X`, the scale of the residual.
    pub norm: f64,
    /// Number of moment eigenvalues merged into this entry.
    pub moment_count: usize,
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub eigenvalues: Vec<EigenEntry>,
    pub total_alg: usize,
    /// Numerical rank of the Hankel moment matrix.
    pub moment_rank: usize,
    /// Moment eigenvalues that did not correspond to a kernel of `A(λ)`.
    pub rejected: usize,
    pub seed: u64,
    pub probe_rank: usize,
    pub moment_pairs: usize,
}

impl SpectralResult {
    pub const CSV_HEADER: &'static str = "re_lambda,im_lambda,geo,alg,kappa,residual";

    pub fn lambdas(&self) -> Vec<C64> {
        self.eigenvalues.iter().map(|e| e.lambda).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.eigenvalues {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(e.lambda.re),
                fmt_f64(e.lambda.im),
                e.geo_mult,
                e.alg_mult,
                e.kappa,
                fmt_f64(e.residual)
            ));
        }
        s
    }
}

fn random_block(n: usize, w: usize, seed: u64) -> CMat {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut v = dense::zeros(n, w);
    for j in 0..w {
        for i in 0..n {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            v.write(i, j, C64::new(re, im));
        }
    }
    v
}

/// Estimate of `‖G⁻¹F‖_X` by power iteration on the whitened form.
fn form_norm(space: &GramSpace, form: MatRef<'_, C64>) -> f64 {
    let n = space.dim();
    if n == 0 {
        return 0.0;
    }
    if n <= DENSE_LIMIT {
        return dense::singular_values(space.whiten_form(form).as_ref())[0];
    }
    let apply = |y: &CMat| -> CMat {
        let x = space.unwhiten_rows(y.as_ref());
        space.whiten_rows(dense::matmul(form, x.as_ref()).as_ref())
    };
    let fh = dense::adjoint(form);
    let apply_h = |y: &CMat| -> CMat {
        let x = space.unwhiten_rows(y.as_ref());
        space.whiten_rows(dense::matmul(fh.as_ref(), x.as_ref()).as_ref())
    };
    let mut y = random_block(n, 1, 0x5eed);
    let mut est = 0.0;
    for _ in 0..POWER_STEPS {
        let nrm = dense::fro_norm(y.as_ref());
        if nrm == 0.0 {
            return 0.0;
        }
        y = dense::scaled(y.as_ref(), C64::new(1.0 / nrm, 0.0));
        let ay = apply(&y);
        est = dense::fro_norm(ay.as_ref());
        y = apply_h(&ay);
    }
    est
}

/// `Σᵢ |fᵢ(λ)| ‖Aᵢ‖_X`, a scale for `A(λ)` that stays positive where
/// `A(λ)` itself vanishes.
fn term_scale(f: &HolomorphicOpFunction, lambda: C64) -> Result<f64> {
    let mut s = 0.0;
    for t in f.terms() {
        let c = t.scalar.eval(lambda)?;
        if c != ZERO {
            s += c.abs() * form_norm(f.space(), t.form.as_ref());
        }
    }
    Ok(s)
}

/// X-orthonormal bases of `ker A` and `ker A*` for the operator with form `F`.
struct KernelPair {
    right: CMat,
    left: CMat,
    norm: f64,
}

/// Singular values at most `rank_tol · max(‖F‖, scale)` count as kernel.
fn kernel_pair(space: &GramSpace, form: MatRef<'_, C64>, rank_tol: f64, scale: f64) -> Result<KernelPair> {
    let n = space.dim();
    if n <= DENSE_LIMIT {
        return Ok(dense_kernel_pair(space, form, rank_tol, scale));
    }
    let norm = form_norm(space, form);
    let right = iterative_kernel(space, form, norm.max(scale), rank_tol)?;
    let fh = dense::adjoint(form);
    let left = iterative_kernel(space, fh.as_ref(), norm.max(scale), rank_tol)?;
    Ok(KernelPair { right, left, norm })
}

fn dense_kernel_pair(space: &GramSpace, form: MatRef<'_, C64>, rank_tol: f64, scale: f64) -> KernelPair {
    let n = space.dim();
    let c = space.whiten_form(form);
    let d = dense::svd(c.as_ref());
    let norm = d.s.first().copied().unwrap_or(0.0);
    let ker: Vec<usize> = (0..n).filter(|&j| d.s[j] <= rank_tol * norm.max(scale)).collect();
    let mut right = dense::select_cols(d.v.as_ref(), &ker);
    let mut left = dense::select_cols(d.u.as_ref(), &ker);
    right = space.unwhiten_rows(right.as_ref());
    left = space.unwhiten_rows(left.as_ref());
    KernelPair { right, left, norm }
}

/// Kernel of `G⁻¹F` by inverse subspace iteration followed by a small SVD.
fn iterative_kernel(space: &GramSpace, form: MatRef<'_, C64>, norm: f64, rank_tol: f64) -> Result<CMat> {
    let n = space.dim();
    let solver = LinearSolver::new(form)?;
    if solver.pivot_ratio() == 0.0 {
        return Ok(dense_kernel_pair(space, form, rank_tol, norm).right);
    }
    let mut q = 8usize.min(n);
    loop {
        let mut z = random_block(n, q, 0x6b65726e + q as u64);
        for _ in 0..INVERSE_STEPS {
            let gz = dense::matmul(space.gram(), z.as_ref());
            z = solver.solve(gz.as_ref());
            z = space.m_orthonormalize(z.as_ref())?.q;
        }
        let w = space.whiten_rows(dense::matmul(form, z.as_ref()).as_ref());
        let d = dense::svd(w.as_ref());
        let k = z.ncols();
        let ker: Vec<usize> = (0..k)
            .filter(|&j| d.s.get(j).copied().unwrap_or(0.0) <= rank_tol * norm)
            .collect();
        // Orthonormalization may drop directions the iteration collapsed onto
        // the kernel, so compare with the requested width.
        if ker.len() < q || q >= n {
            let v = dense::select_cols(d.v.as_ref(), &ker);
            return Ok(z.as_ref() * v.as_ref());
        }
        q = (2 * q).min(n);
    }
}

/// Kernel dimensions of the block-Toeplitz matrices and the Jordan data they
/// determine.
#[derive(Clone, Debug)]
pub struct JordanInfo {
    pub kappa: usize,
    /// `k_κ`, the algebraic multiplicity.
    pub alg_mult: usize,
    pub geo_mult: usize,
    /// `k_1, k_2, …` up to the first repeated value.
    pub kernel_dims: Vec<usize>,
    /// X-orthonormal basis of `ker A(λ0)`.
    pub kernel: CMat,
    /// X-orthonormal basis of `ker A(λ0)*`.
    pub left_kernel: CMat,
    /// Chain components `U_0, …, U_{κ-1}` of a basis of `ker 𝒯_κ`.
    pub chains: Vec<CMat>,
    /// `‖A(λ0)‖_X`.
    pub norm: f64,
}

/// Computes `k_m = dim ker 𝒯_m` for `m = 1, 2, …` until it stagnates.
///
/// `ker 𝒯_{m+1}` is parameterized from `ker 𝒯_m`: a tuple `(u_0, …, u_{m-1})`
/// extends iff `Σ_{j≥1} A_j u_{m-j}` is orthogonal to `ker A(λ0)*`, and the
/// extensions add `ker A(λ0)` in the new slot. This is the Schur complement of
/// `𝒯_{m+1}` with respect to the invertible part of `A(λ0)`.
pub fn jordan_analysis(
    f: &HolomorphicOpFunction,
    lambda0: C64,
    max_m: usize,
    rank_tol: f64,
) -> Result<JordanInfo> {
    let space = f.space();
    let n = space.dim();
    let d0 = f.derivative_form(lambda0, 0)?;
    let kp = kernel_pair(space, d0.as_ref(), rank_tol, term_scale(f, lambda0)?)?;
    let g = kp.right.ncols();
    let x = kp.right;
    let y = kp.left;
    if g == 0 {
        return Ok(JordanInfo {
            kappa: 0,
            alg_mult: 0,
            geo_mult: 0,
            kernel_dims: vec![0],
            kernel: x,
            left_kernel: y,
            chains: Vec::new(),
            norm: kp.norm,
        });
    }
    let mut taylor: Vec<CMat> = vec![d0];
    let mut norms: Vec<f64> = vec![kp.norm];
    let mut chains: Vec<CMat> = vec![x.clone()];
    let mut dims = vec![g];
    let mut bordered: Option<faer::linalg::solvers::PartialPivLu<C64>> = None;
    let mut fact = 1.0;
    for l in 1.. {
        if taylor.len() <= l {
            fact *= l as f64;
            let dl = dense::scaled(f.derivative_form(lambda0, l)?.as_ref(), C64::new(1.0 / fact, 0.0));
            norms.push(form_norm(space, dl.as_ref()));
            taylor.push(dl);
        }
        let k = chains[0].ncols();
        let mut r = dense::zeros(n, k);
        for j in 1..=l {
            let t = taylor[j].as_ref() * chains[l - j].as_ref();
            dense::axpy(&mut r, C64::new(-1.0, 0.0), t.as_ref());
        }
        let obstruction = y.adjoint() * r.as_ref();
        let scale: f64 = norms[1..=l].iter().sum();
        let null = dense::null_space(obstruction.as_ref(), rank_tol * scale);
        let d = null.ncols();
        let next = d + g;
        let current = *dims.last().unwrap();
        if next == current {
            break;
        }
        if l >= max_m {
            dims.push(next);
            return Err(Error::Inconclusive {
                increments: dims,
                max_m,
            });
        }
        dims.push(next);
        let r = r.as_ref() * null.as_ref();
        if bordered.is_none() {
            bordered = Some(bordered_lu(space, taylor[0].as_ref(), x.as_ref(), y.as_ref()));
        }
        let lu = bordered.as_ref().unwrap();
        let mut rhs = dense::zeros(n + g, d);
        for jj in 0..d {
            for i in 0..n {
                rhs.write(i, jj, r.read(i, jj));
            }
        }
        let sol = lu.solve(rhs.as_ref());
        let w = CMat::from_fn(n, d, |i, jj| sol.read(i, jj));
        let zeros = dense::zeros(n, g);
        let mut new_chains: Vec<CMat> = chains
            .iter()
            .map(|u| dense::hcat(&[(u.as_ref() * null.as_ref()).as_ref(), zeros.as_ref()]))
            .collect();
        new_chains.push(dense::hcat(&[w.as_ref(), x.as_ref()]));
        chains = normalize_tuples(space, new_chains);
    }
    let kappa = dims.len();
    Ok(JordanInfo {
        kappa,
        alg_mult: *dims.last().unwrap(),
        geo_mult: g,
        kernel_dims: dims,
        kernel: x,
        left_kernel: y,
        chains,
        norm: kp.norm,
    })
}

/// LU of `[[F, G Y], [Xᴴ G, 0]]`, nonsingular when `X` and `Y` span the right
/// and left kernels of `F`.
fn bordered_lu(
    space: &GramSpace,
    f: MatRef<'_, C64>,
    x: MatRef<'_, C64>,
    y: MatRef<'_, C64>,
) -> faer::linalg::solvers::PartialPivLu<C64> {
    let n = f.nrows();
    let g = x.ncols();
    let gy = dense::matmul(space.gram(), y);
    let xg = dense::adjoint(dense::matmul(space.gram(), x).as_ref());
    let m = CMat::from_fn(n + g, n + g, |i, j| match (i < n, j < n) {
        (true, true) => f.read(i, j),
        (true, false) => gy.read(i, j - n),
        (false, true) => xg.read(i - n, j),
        (false, false) => ZERO,
    });
    m.partial_piv_lu()
}

/// Re-expresses the tuple basis so that it is orthonormal for the stacked X
/// inner product `Σ_i ⟨u_i, v_i⟩_X`.
fn normalize_tuples(space: &GramSpace, chains: Vec<CMat>) -> Vec<CMat> {
    let k = chains[0].ncols();
    let mut gm = dense::zeros(k, k);
    for u in &chains {
        let m = space.inner_matrix(u.as_ref(), u.as_ref());
        dense::axpy(&mut gm, C64::new(1.0, 0.0), m.as_ref());
    }
    let herm = dense::hermitian_part(gm.as_ref());
    let Ok(ch) = herm.cholesky(faer::Side::Lower) else {
        return chains;
    };
    let l = ch.compute_l();
    chains
        .into_iter()
        .map(|u| {
            let mut t = dense::adjoint(u.as_ref());
            dense::solve_lower_in_place(l.as_ref(), &mut t);
            dense::adjoint(t.as_ref())
        })
        .collect()
}

/// `(κ, alg)` at `λ0` from the kernel dimensions of the block-Toeplitz matrices.
pub fn jordan_kappa(f: &HolomorphicOpFunction, lambda0: C64, max_m: usize) -> Result<(usize, usize)> {
    let info = jordan_analysis(f, lambda0, max_m, SolverOptions::default().rank_tol)?;
    if info.geo_mult == 0 {
        return Err(Error::Usage(format!("{lambda0} is not an eigenvalue at the rank tolerance")));
    }
    Ok((info.kappa, info.alg_mult))
}

/// X-orthonormal basis of the span of all chain components at `λ0`.
pub fn generalized_eigenspace(f: &HolomorphicOpFunction, lambda0: C64) -> Result<CMat> {
    let info = jordan_analysis(f, lambda0, SolverOptions::default().max_chain, SolverOptions::default().rank_tol)?;
    if info.geo_mult == 0 {
        return Err(Error::Usage(format!("{lambda0} is not an eigenvalue at the rank tolerance")));
    }
    eigenspace_from(f.space(), &info)
}

pub(crate) fn eigenspace_from(space: &GramSpace, info: &JordanInfo) -> Result<CMat> {
    let blocks: Vec<MatRef<'_, C64>> = info.chains.iter().map(|u| u.as_ref()).collect();
    let all = dense::hcat(&blocks);
    Ok(space.m_orthonormalize(all.as_ref())?.q)
}

/// `Σ λ·alg(λ) / dim_ref` over all eigenvalues in the result.
pub fn weighted_mean(r: &SpectralResult, dim_ref: usize) -> Result<C64> {
    if dim_ref == 0 {
        return Err(Error::Usage("dim_ref must be positive".into()));
    }
    let mut s = ZERO;
    for e in &r.eigenvalues {
        s += e.lambda * e.alg_mult as f64;
    }
    Ok(s / dim_ref as f64)
}

/// Single-linkage clusters of `pts` at distance `tol`, as index lists.
fn cluster(pts: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        let mut c = i;
        while l[c] != r {
            let nx = l[c];
            l[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (pts[i] - pts[j]).abs() <= tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut label, i);
        match root_of[r] {
            Some(gi) => groups[gi].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

fn mean(pts: &[C64], idx: &[usize]) -> C64 {
    let mut s = ZERO;
    for &i in idx {
        s += pts[i];
    }
    s / idx.len() as f64
}

/// Eigenvalues inside `contour` by block-Hankel moments of `A(z)⁻¹ V`.
pub fn contour_eigensolve(
    f: &HolomorphicOpFunction,
    contour: &Contour,
    opts: &SolverOptions,
) -> Result<SpectralResult> {
    if opts.probe_rank == 0 {
        return Err(Error::Usage("probe rank must be positive".into()));
    }
    if !(opts.rank_tol > 0.0 && opts.cluster_tol > 0.0 && opts.cond_limit > 0.0) {
        return Err(Error::Usage("solver tolerances must be positive".into()));
    }
    if opts.p_init == 0 || opts.p_max < opts.p_init {
        return Err(Error::Usage("moment pair bounds must satisfy 1 <= p_init <= p_max".into()));
    }
    contour.check_poles(f)?;
    let space = f.space();
    let n = space.dim();
    let width = opts.probe_rank.min(n);
    let v = random_block(n, width, opts.seed);
    let gv = dense::matmul(space.gram(), v.as_ref());
    let rho = contour.radius();
    let quad = contour.quadrature();
    let kmax = 2 * opts.p_max;

    let solves: Vec<Result<(C64, C64, CMat)>> = quad
        .par_iter()
        .map(|&(z, w)| {
            f.check_point(z)?;
            let form = f.evaluate_form(z)?;
            let solver = LinearSolver::new(form.as_ref())?;
            if solver.pivot_ratio() < 1.0 / opts.cond_limit {
                return Err(Error::Contour(format!(
                    "A(z) is nearly singular at the quadrature node {z}; move the contour"
                )));
            }
            Ok((z, w, solver.solve(gv.as_ref())))
        })
        .collect();
    let mut moments: Vec<CMat> = (0..kmax).map(|_| dense::zeros(n, width)).collect();
    let mut ybar = 0.0f64;
    for s in solves {
        let (z, w, y) = s?;
        ybar = ybar.max(dense::fro_norm(y.as_ref()) / (width as f64).sqrt());
        let mu = (z - contour.center) / rho;
        let mut c = w;
        for m in moments.iter_mut() {
            dense::axpy(m, c, y.as_ref());
            c *= mu;
        }
    }
    let floor = ybar * rho;

    let mut p = opts.p_init;
    let (mus, rank) = loop {
        let hankel = |shift: usize| -> CMat {
            let mut h = dense::zeros(p * n, p * width);
            for bi in 0..p {
                for bj in 0..p {
                    let m = &moments[bi + bj + shift];
                    for j in 0..width {
                        for i in 0..n {
                            h.write(bi * n + i, bj * width + j, m.read(i, j));
                        }
                    }
                }
            }
            h
        };
        let h0 = hankel(0);
        let svd = h0.thin_svd();
        let sd = svd.s_diagonal();
        let mut order: Vec<usize> = (0..sd.nrows()).collect();
        order.sort_by(|&a, &b| sd.read(b).re.total_cmp(&sd.read(a).re));
        let s: Vec<f64> = order.iter().map(|&i| sd.read(i).re).collect();
        let smax = s.first().copied().unwrap_or(0.0);
        let thresh = opts.rank_tol * smax.max(floor);
        let r = s.iter().filter(|&&x| x > thresh).count();
        if r == p * width {
            if 2 * p <= opts.p_max {
                p *= 2;
                continue;
            }
            return Err(Error::Capacity(format!(
                "moment rank {r} fills the probe block of width {width} with {p} moment pairs; increase the probe rank"
            )));
        }
        if r == 0 {
            break (Vec::new(), 0);
        }
        let u0 = CMat::from_fn(p * n, r, |i, j| svd.u().read(i, order[j]));
        let w0 = CMat::from_fn(p * width, r, |i, j| svd.v().read(i, order[j]));
        let h1 = hankel(1);
        let mut b = u0.adjoint() * (h1.as_ref() * w0.as_ref());
        for j in 0..r {
            let inv = 1.0 / s[j];
            for i in 0..r {
                let v = b.read(i, j) * inv;
                b.write(i, j, v);
            }
        }
        break (dense::eigenvalues(b.as_ref()), r);
    };

    let inside: Vec<C64> = mus
        .iter()
        .map(|&m| contour.center + m * rho)
        .filter(|&z| contour.contains(z))
        .collect();
    let fine = cluster(&inside, opts.cluster_tol * rho);
    let fine_centers: Vec<C64> = fine.iter().map(|g| mean(&inside, g)).collect();
    let coarse = cluster(&fine_centers, opts.rank_tol.sqrt() * rho);

    let mut entries: Vec<EigenEntry> = Vec::new();
    let mut rejected = 0;
    let accept = |members: Vec<usize>, info: JordanInfo, lambda: C64, entries: &mut Vec<EigenEntry>| -> Result<()> {
        let residual = residual_of(f, lambda, info.kernel.as_ref())?;
        entries.push(EigenEntry {
            lambda,
            geo_mult: info.geo_mult,
            alg_mult: info.alg_mult,
            kappa: info.kappa,
            vectors: info.kernel,
            residual,
            norm: info.norm,
            moment_count: members.len(),
        });
        Ok(())
    };
    for group in coarse {
        let members: Vec<usize> = group.iter().flat_map(|&c| fine[c].iter().copied()).collect();
        if group.len() > 1 {
            // Defective eigenvalues split at the square root of the moment
            // accuracy; merge when the Jordan structure accounts for the split.
            let lambda = mean(&inside, &members);
            let info = jordan_analysis(f, lambda, opts.max_chain, opts.rank_tol)?;
            if info.alg_mult >= members.len() {
                accept(members, info, lambda, &mut entries)?;
                continue;
            }
        }
        for &c in &group {
            let lambda = fine_centers[c];
            let info = jordan_analysis(f, lambda, opts.max_chain, opts.rank_tol)?;
            if info.geo_mult == 0 {
                rejected += fine[c].len();
                continue;
            }
            accept(fine[c].clone(), info, lambda, &mut entries)?;
        }
    }
    entries.sort_by(|a, b| {
        a.lambda
            .re
            .total_cmp(&b.lambda.re)
            .then(a.lambda.im.total_cmp(&b.lambda.im))
    });
    let total_alg = entries.iter().map(|e| e.alg_mult).sum();
    Ok(SpectralResult {
        eigenvalues: entries,
        total_alg,
        moment_rank: rank,
        rejected,
        seed: opts.seed,
        probe_rank: width,
        moment_pairs: p,
    })
}

/// `max ‖A(λ)v‖_X` over the columns of `v`.
pub fn residual_of(f: &HolomorphicOpFunction, lambda: C64, v: MatRef<'_, C64>) -> Result<f64> {
    if v.ncols() == 0 {
        return Ok(0.0);
    }
    let form = f.evaluate_form(lambda)?;
    let w = f.space().whiten_rows((form.as_ref() * v).as_ref());
    let mut worst = 0.0f64;
    for j in 0..w.ncols() {
        let mut s = 0.0;
        for i in 0..w.nrows() {
            s += w.read(i, j).norm_sqr();
        }
        worst = worst.max(s.sqrt());
    }
    Ok(worst)
}

/// `‖A(λ)‖_X`.
pub fn operator_norm(f: &HolomorphicOpFunction, lambda: C64) -> Result<f64> {
    let form = f.evaluate_form(lambda)?;
    Ok(form_norm(f.space(), form.as_ref()))
}
