//! Built-in model problems and the name-addressable model registry.
//!
//! Every model is a reference operator function with a nested Galerkin
//! hierarchy, a T-coercivity witness and independently computed reference
//! eigenvalues.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use faer::MatRef;

use crate::dense::{self, ColumnSparse, ONE, ZERO};
use crate::error::{Error, Result};
use crate::galerkin::GalerkinHierarchy;
use crate::linalg::{GramSpace, LinearSolver};
use crate::nep::Contour;
use crate::opfun::{HolomorphicOpFunction, ScalarHolo};
use crate::tco::{coercivity_search, TCWitness, TnRule};
use crate::{c64, CMat, C64};

/// Shift scales tried by the witness search: zero, then powers of two.
pub fn default_scales() -> Vec<f64> {
    let mut s = vec![0.0];
    s.extend((-8..=16).map(|k| 2f64.powi(k)));
    s
}

const CRITICAL_CONTRAST_TOL: f64 = 1e-6;
const CONTOUR_NODES: usize = 64;

/// Piecewise linear finite elements on 1D meshes with homogeneous Dirichlet
/// conditions. Matrices act on interior nodal values.
pub mod p1 {
    use crate::{c64, CMat};

    pub fn uniform(a: f64, b: f64, elements: usize) -> Vec<f64> {
        (0..=elements)
            .map(|i| a + (b - a) * i as f64 / elements as f64)
            .collect()
    }

    /// Stiffness matrix of `∫ σ u' v'` with `σ` sampled at element midpoints.
    pub fn stiffness(nodes: &[f64], coef: impl Fn(f64) -> f64) -> CMat {
        let n = nodes.len() - 2;
        let mut k = CMat::zeros(n, n);
        for e in 0..nodes.len() - 1 {
            let h = nodes[e + 1] - nodes[e];
            let c = coef(0.5 * (nodes[e] + nodes[e + 1])) / h;
            add_element(&mut k, e, n, [[c, -c], [-c, c]]);
        }
        k
    }

    /// Consistent mass matrix of `∫ u v`.
    pub fn mass(nodes: &[f64]) -> CMat {
        let n = nodes.len() - 2;
        let mut m = CMat::zeros(n, n);
        for e in 0..nodes.len() - 1 {
            let h = nodes[e + 1] - nodes[e];
            add_element(&mut m, e, n, [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]);
        }
        m
    }

    fn add_element(a: &mut CMat, e: usize, n: usize, local: [[f64; 2]; 2]) {
        // Element e joins nodes e and e+1; interior dof of node i is i-1.
        let dofs = [e.checked_sub(1), if e < n { Some(e) } else { None }];
        for (p, dp) in dofs.iter().enumerate() {
            for (q, dq) in dofs.iter().enumerate() {
                if let (Some(i), Some(j)) = (dp, dq) {
                    let v = a.read(*i, *j) + c64(local[p][q], 0.0);
                    a.write(*i, *j, v);
                }
            }
        }
    }

    /// Nodal interpolation of the coarse hat functions on the fine mesh. The
    /// coarse mesh is `fine[idx]`, with `idx` strictly increasing from the
    /// first to the last fine node.
    pub fn embedding(fine: &[f64], idx: &[usize]) -> CMat {
        let nf = fine.len() - 2;
        let nc = idx.len() - 2;
        let mut e = CMat::zeros(nf, nc);
        for k in 1..=nc {
            let (l, m, r) = (idx[k - 1], idx[k], idx[k + 1]);
            for i in (l + 1)..r {
                let x = fine[i];
                let v = if i <= m {
                    (x - fine[l]) / (fine[m] - fine[l])
                } else {
                    (fine[r] - x) / (fine[r] - fine[m])
                };
                e.write(i - 1, k - 1, c64(v, 0.0));
            }
        }
        e
    }

    /// Largest element length.
    pub fn max_width(nodes: &[f64]) -> f64 {
        nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Element counts of the reference mesh and of the coarse levels.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshLevels {
    pub reference: usize,
    pub levels: Vec<usize>,
}

impl Default for MeshLevels {
    fn default() -> Self {
        Self {
            reference: 2048,
            levels: vec![32, 64, 128, 256],
        }
    }
}

impl MeshLevels {
    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Parameter {
            name: "levels".into(),
            reason,
        };
        if self.reference < 4 || self.reference % 2 != 0 {
            return Err(Error::Parameter {
                name: "reference".into(),
                reason: format!("element count must be even and at least 4, got {}", self.reference),
            });
        }
        if self.levels.is_empty() {
            return Err(bad("at least one level is required".into()));
        }
        for w in self.levels.windows(2) {
            if w[1] <= w[0] {
                return Err(bad("element counts must increase strictly".into()));
            }
        }
        for &l in &self.levels {
            if l < 2 || l % 2 != 0 || self.reference % l != 0 {
                return Err(bad(format!(
                    "element count {l} must be even and divide the reference count {}",
                    self.reference
                )));
            }
            if 8 * (l - 1) > self.reference - 1 {
                return Err(bad(format!(
                    "level with {l} elements exceeds one eighth of the reference dimension"
                )));
            }
        }
        for w in self.levels.windows(2) {
            if w[1] % w[0] != 0 {
                return Err(bad(format!("{} elements do not refine {}", w[1], w[0])));
            }
        }
        Ok(())
    }
}

/// A model: reference function, hierarchy, witness and reference data.
#[derive(Clone, Debug)]
pub struct ModelProblem {
    pub name: String,
    pub function: HolomorphicOpFunction,
    pub hierarchy: GalerkinHierarchy,
    pub witness: TCWitness,
    pub mesh_widths: Vec<f64>,
    pub reference_eigenvalues: Vec<C64>,
    /// How the reference eigenvalues were obtained.
    pub provenance: String,
    pub suggested_contours: Vec<Contour>,
    /// Window for pollution scans enclosing the leading reference eigenvalues.
    pub pollution_window: Contour,
    /// Point at which the witness was certified and compatibility is reported.
    pub tc_probe: C64,
    /// Circle `(center, radius)` inside the resolvent set for stability scans.
    pub resolvent_circle: (C64, f64),
    /// Shift scale `s` of `K = s·K₀` found by the coercivity search.
    pub shift_scale: f64,
    pub negative_control: bool,
}

fn scaled_form(a: &CMat, s: f64) -> CMat {
    dense::scaled(a.as_ref(), c64(s, 0.0))
}

fn neg_identity_poly() -> ScalarHolo {
    ScalarHolo::polynomial(vec![ZERO, c64(-1.0, 0.0)])
}

/// Circle around `eigs[k]` with radius `0.4` times the distance to the nearest
/// other listed eigenvalue or pole.
fn isolating_circle(eigs: &[C64], k: usize, poles: &[C64]) -> Result<Contour> {
    let gap = eigs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &z)| z)
        .chain(poles.iter().copied())
        .map(|z| (z - eigs[k]).abs())
        .fold(f64::INFINITY, f64::min);
    let r = if gap.is_finite() { 0.4 * gap } else { 1.0 };
    Contour::circle(eigs[k], r, CONTOUR_NODES)
}

/// Ellipse around the first `count` eigenvalues (assumed real) whose margin is
/// `0.4` times the distance to the nearest excluded eigenvalue.
fn enclosing_window(eigs: &[C64], count: usize) -> Result<Contour> {
    let (inside, outside) = eigs.split_at(count.min(eigs.len()));
    let lo = inside.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let hi = inside.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let gap = outside
        .iter()
        .flat_map(|o| inside.iter().map(move |i| (*o - *i).abs()))
        .fold(f64::INFINITY, f64::min);
    let margin = if gap.is_finite() { 0.4 * gap } else { 1.0 };
    Contour::ellipse(c64(0.5 * (lo + hi), 0.0), 0.5 * (hi - lo) + margin, 0.5 * margin, CONTOUR_NODES)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Parameter {
            name: name.into(),
            reason: format!("must be positive and finite, got {v}"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sign-changing coefficient problem.

/// Roots of `f` on `(lo, hi]` by a uniform scan followed by bisection.
fn scan_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let dx = (hi - lo) / steps as f64;
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=steps {
        let b = lo + dx * i as f64;
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                if m <= x0 || m >= x1 {
                    break;
                }
                let fm = f(m);
                if fm == 0.0 {
                    x0 = m;
                    x1 = m;
                    break;
                }
                if (fm < 0.0) == (f0 < 0.0) {
                    x0 = m;
                    f0 = fm;
                } else {
                    x1 = m;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Eigenvalues of `-(σu')' = λu` on `(-1, 1)`, `σ = σ₊` left of 0 and `-σ₋`
/// right of 0, Dirichlet ends, with `|λ| ≤ lambda_max`, sorted by modulus.
///
/// Positive `λ` solve `σ₊k₊ cos k₊ sinh k₋ = σ₋k₋ cosh k₋ sin k₊`, negative `λ`
/// solve `σ₊k₊ cosh k₊ sin k₋ = σ₋k₋ cos k₋ sinh k₊`, with `k± = sqrt(|λ|/σ±)`.
pub fn sign_changing_dispersion(sigma_plus: f64, sigma_minus: f64, lambda_max: f64) -> Vec<f64> {
    let pos = |l: f64| {
        let (kp, km) = ((l / sigma_plus).sqrt(), (l / sigma_minus).sqrt());
        sigma_plus * kp * kp.cos() * km.sinh() - sigma_minus * km * km.cosh() * kp.sin()
    };
    let neg = |mu: f64| {
        let (kp, km) = ((mu / sigma_plus).sqrt(), (mu / sigma_minus).sqrt());
        sigma_plus * kp * kp.cosh() * km.sin() - sigma_minus * km * km.cos() * kp.sinh()
    };
    let steps = (lambda_max * 2000.0).ceil() as usize;
    let mut out: Vec<f64> = scan_roots(pos, 1e-9, lambda_max, steps);
    out.extend(scan_roots(neg, 1e-9, lambda_max, steps).into_iter().map(|m| -m));
    out.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    out
}

/// Reflection witness on interior nodal values of a uniform symmetric mesh
/// with `elements` elements: the side with the larger coefficient is kept and
/// the other side becomes `-u + 2u(-x)`.
pub fn reflection_operator(elements: usize, keep_left: bool) -> CMat {
    let n = elements - 1;
    let half = elements / 2;
    let mut t = CMat::zeros(n, n);
    for i in 1..elements {
        let kept = if keep_left { i <= half } else { i >= half };
        if kept {
            t.write(i - 1, i - 1, ONE);
        } else {
            t.write(i - 1, i - 1, c64(-1.0, 0.0));
            t.write(i - 1, elements - i - 1, c64(2.0, 0.0));
        }
    }
    t
}

/// Mesh node indices of a coarse level inside the reference mesh.
fn level_indices(reference: usize, level: usize, graded_right: bool) -> Vec<usize> {
    let step = reference / level;
    if !graded_right {
        return (0..=level).map(|k| k * step).collect();
    }
    let half_c = level / 2;
    let half_r = reference / 2;
    let mut idx: Vec<usize> = (0..=half_c).map(|k| k * step).collect();
    for k in 1..=half_c {
        let t = k as f64 / half_c as f64;
        let phi = 0.5 * t * (1.0 + t);
        idx.push(half_r + (phi * half_r as f64).round() as usize);
    }
    idx
}

struct SignChangingParts {
    function: HolomorphicOpFunction,
    mass: CMat,
    t: CMat,
    nodes: Vec<f64>,
}

fn sign_changing_parts(sigma_plus: f64, sigma_minus: f64, reference: usize) -> Result<SignChangingParts> {
    check_positive("sigma_plus", sigma_plus)?;
    check_positive("sigma_minus", sigma_minus)?;
    if (sigma_minus / sigma_plus - 1.0).abs() <= CRITICAL_CONTRAST_TOL {
        return Err(Error::Parameter {
            name: "sigma_minus".into(),
            reason: "contrast within 1e-6 of the critical value 1; the reflection witness is not invertible there".into(),
        });
    }
    let nodes = p1::uniform(-1.0, 1.0, reference);
    let s = p1::stiffness(&nodes, |x| if x < 0.0 { sigma_plus } else { -sigma_minus });
    let m = p1::mass(&nodes);
    let gram = p1::stiffness(&nodes, |_| 1.0);
    let space = GramSpace::new(gram)?;
    let function = HolomorphicOpFunction::from_forms(
        space,
        vec![(ScalarHolo::constant(ONE), s), (neg_identity_poly(), m.clone())],
    )?;
    let t = reflection_operator(reference, sigma_plus > sigma_minus);
    Ok(SignChangingParts {
        function,
        mass: m,
        t,
        nodes,
    })
}

fn sign_changing_model(
    sigma_plus: f64,
    sigma_minus: f64,
    mesh: &MeshLevels,
    graded_right: bool,
) -> Result<ModelProblem> {
    mesh.validate()?;
    let parts = sign_changing_parts(sigma_plus, sigma_minus, mesh.reference)?;
    let f = parts.function;

    let eigs: Vec<C64> = sign_changing_dispersion(sigma_plus, sigma_minus, 60.0)
        .into_iter()
        .map(|x| c64(x, 0.0))
        .collect();
    if eigs.len() < 2 {
        return Err(Error::Setup("dispersion relation produced fewer than two eigenvalues".into()));
    }
    let mut positive: Vec<f64> = eigs.iter().map(|z| z.re).filter(|&x| x > 0.0).collect();
    positive.sort_by(|a, b| a.total_cmp(b));
    let probe = match positive.as_slice() {
        [a, b, ..] => c64(0.5 * (a + b), 0.0),
        _ => c64(0.5 * (eigs[0].re + eigs[1].re), 0.0),
    };

    let (s, _) = coercivity_search(&f, parts.t.as_ref(), parts.mass.as_ref(), probe, &default_scales())?;
    let k_form = scaled_form(&parts.mass, s);
    let witness = TCWitness::new(&f, parts.t, k_form, vec![probe], TnRule::Galerkin)?;

    let mut embeddings = Vec::new();
    let mut widths = Vec::new();
    for &l in &mesh.levels {
        let idx = level_indices(mesh.reference, l, graded_right);
        let coarse: Vec<f64> = idx.iter().map(|&i| parts.nodes[i]).collect();
        widths.push(p1::max_width(&coarse));
        embeddings.push(p1::embedding(&parts.nodes, &idx));
    }
    let hierarchy = GalerkinHierarchy::new(f.space().clone(), embeddings)?;
    let contours = vec![isolating_circle(&eigs, 0, &[])?, isolating_circle(&eigs, 1, &[])?];
    let window = enclosing_window(&eigs, 2)?;
    let (name, negative) = if graded_right {
        ("sign_changing_asym", true)
    } else {
        ("sign_changing", false)
    };
    Ok(ModelProblem {
        name: name.into(),
        function: f,
        hierarchy,
        witness,
        mesh_widths: widths,
        reference_eigenvalues: eigs,
        provenance: "roots of the interface dispersion relation (continuity of u and σu' at 0), bracketed bisection".into(),
        suggested_contours: contours,
        pollution_window: window,
        tc_probe: probe,
        resolvent_circle: (probe, 0.5),
        shift_scale: s,
        negative_control: negative,
    })
}

/// `-(σu')' = λu` on `(-1, 1)` with `σ = σ₊` on `(-1, 0)` and `σ = -σ₋` on
/// `(0, 1)`, P1 elements on uniform meshes symmetric about 0.
pub fn build_sign_changing(sigma_plus: f64, sigma_minus: f64, mesh: &MeshLevels) -> Result<ModelProblem> {
    sign_changing_model(sigma_plus, sigma_minus, mesh, false)
}

/// Negative control: same problem and witness, but the coarse meshes are
/// graded on `(0, 1)` so that the reflection does not map `X_n` into itself.
pub fn build_sign_changing_asym(sigma_plus: f64, sigma_minus: f64, mesh: &MeshLevels) -> Result<ModelProblem> {
    sign_changing_model(sigma_plus, sigma_minus, mesh, true)
}

// ---------------------------------------------------------------------------
// Rational metamaterial problem.

/// Quadratic pencil `Q(λ) = λ²Q₂ + λQ₁ + Q₀` from a metamaterial function
/// after multiplication by `λ - 1`.
#[derive(Clone, Debug)]
pub struct QuadraticPencil {
    pub q0: CMat,
    pub q1: CMat,
    pub q2: CMat,
}

impl QuadraticPencil {
    /// `(λ-1)(K₀ - λM) + λK₁`.
    pub fn metamaterial(k0: &CMat, k1: &CMat, m: &CMat) -> Self {
        Self {
            q0: -k0,
            q1: k0 + k1 + m,
            q2: -m,
        }
    }

    pub fn dim(&self) -> usize {
        self.q0.nrows()
    }

    pub fn evaluate(&self, z: C64) -> CMat {
        let mut a = self.q0.clone();
        dense::axpy(&mut a, z, self.q1.as_ref());
        dense::axpy(&mut a, z * z, self.q2.as_ref());
        a
    }

    /// All eigenpairs of the companion linearization `[[0, I], [-Q₀, -Q₁]] z =
    /// λ [[I, 0], [0, Q₂]] z`, `Q₂` invertible. Returns `(λ, x)` with `x` the
    /// first block.
    pub fn companion_eigenpairs(&self) -> Result<Vec<(C64, CMat)>> {
        let n = self.dim();
        let q2 = LinearSolver::new(self.q2.as_ref())?;
        if q2.pivot_ratio() == 0.0 {
            return Err(Error::Setup("leading coefficient of the quadratic pencil is singular".into()));
        }
        let rhs = dense::hcat(&[(-&self.q0).as_ref(), (-&self.q1).as_ref()]);
        let lower = q2.solve(rhs.as_ref());
        let a = CMat::from_fn(2 * n, 2 * n, |i, j| {
            if i < n {
                if j == i + n {
                    ONE
                } else {
                    ZERO
                }
            } else {
                lower.read(i - n, j)
            }
        });
        let (vals, vecs) = dense::eigen(a.as_ref());
        Ok(vals
            .into_iter()
            .enumerate()
            .map(|(k, l)| (l, CMat::from_fn(n, 1, |i, _| vecs.read(i, k))))
            .collect())
    }

    /// Eigenpairs near `shift` by Arnoldi on the shift-inverted companion
    /// pencil with a Krylov space of dimension `krylov`. Only Ritz pairs with
    /// relative pencil residual below `tol` are returned.
    pub fn shift_invert_eigenpairs(&self, shift: C64, krylov: usize, tol: f64) -> Result<Vec<(C64, CMat)>> {
        let n = self.dim();
        let m = krylov.min(2 * n);
        let qs = LinearSolver::new(self.evaluate(shift).as_ref())?;
        if qs.pivot_ratio() == 0.0 {
            return Err(Error::Setup(format!("shift {shift} is an eigenvalue of the pencil")));
        }
        let mut q1s = self.q1.clone();
        dense::axpy(&mut q1s, shift, self.q2.as_ref());
        let (q0m, q1m, q2m, q1sm) = (
            product(&self.q0),
            product(&self.q1),
            product(&self.q2),
            product(&q1s),
        );
        // (A - σB)⁻¹ B [f; g] with B = diag(I, Q₂).
        let op = |v: &CMat| -> CMat {
            let f = CMat::from_fn(n, 1, |i, _| v.read(i, 0));
            let g0 = CMat::from_fn(n, 1, |i, _| v.read(i + n, 0));
            let g = q2m(g0.as_ref());
            let rhs = g + q1sm(f.as_ref());
            let x = dense::scaled(qs.solve(rhs.as_ref()).as_ref(), c64(-1.0, 0.0));
            let y = &f + dense::scaled(x.as_ref(), shift);
            CMat::from_fn(2 * n, 1, |i, _| if i < n { x.read(i, 0) } else { y.read(i - n, 0) })
        };
        let mut basis: Vec<CMat> = Vec::with_capacity(m + 1);
        let mut h = CMat::zeros(m + 1, m);
        let v0 = CMat::from_fn(2 * n, 1, |i, _| c64(1.0 + (i % 7) as f64 * 0.1, 0.3 * (i % 3) as f64));
        let nrm = dense::fro_norm(v0.as_ref());
        basis.push(dense::scaled(v0.as_ref(), c64(1.0 / nrm, 0.0)));
        let mut steps = m;
        let mut beta = 0.0;
        for j in 0..m {
            let mut w = op(&basis[j]);
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = (b.adjoint() * &w).read(0, 0);
                    h.write(i, j, h.read(i, j) + c);
                    w -= dense::scaled(b.as_ref(), c);
                }
            }
            beta = dense::fro_norm(w.as_ref());
            h.write(j + 1, j, c64(beta, 0.0));
            if beta <= 1e-14 * dense::max_abs(h.as_ref()) {
                steps = j + 1;
                break;
            }
            basis.push(dense::scaled(w.as_ref(), c64(1.0 / beta, 0.0)));
        }
        let hm = CMat::from_fn(steps, steps, |i, j| h.read(i, j));
        let (theta, y) = dense::eigen(hm.as_ref());
        let scale = dense::max_abs(self.q0.as_ref())
            .max(dense::max_abs(self.q1.as_ref()))
            .max(dense::max_abs(self.q2.as_ref()));
        let mut out = Vec::new();
        for (k, th) in theta.iter().enumerate() {
            // Arnoldi residual of the shift-inverted operator.
            if th.abs() == 0.0 || beta * y.read(steps - 1, k).abs() > 1e-6 * th.abs() {
                continue;
            }
            let lambda = shift + th.inv();
            let mut x = CMat::zeros(n, 1);
            for (j, b) in basis.iter().take(steps).enumerate() {
                let c = y.read(j, k);
                for i in 0..n {
                    x.write(i, 0, x.read(i, 0) + b.read(i, 0) * c);
                }
            }
            let xn = dense::fro_norm(x.as_ref());
            if xn == 0.0 {
                continue;
            }
            let x = dense::scaled(x.as_ref(), c64(1.0 / xn, 0.0));
            let r = q0m(x.as_ref()) + dense::scaled(q1m(x.as_ref()).as_ref(), lambda)
                + dense::scaled(q2m(x.as_ref()).as_ref(), lambda * lambda);
            let denom = scale * (1.0 + lambda.abs()).powi(2);
            if dense::fro_norm(r.as_ref()) <= tol * denom {
                out.push((lambda, x));
            }
        }
        Ok(out)
    }
}

/// `x ↦ a x`, sparse when `a` is mostly zero.
fn product(a: &CMat) -> Box<dyn Fn(MatRef<'_, C64>) -> CMat + Send + Sync + '_> {
    match ColumnSparse::compress(a.as_ref()) {
        Some(s) => Box::new(move |x| s.mul(x)),
        None => Box::new(move |x| a * x),
    }
}

struct MetamaterialParts {
    function: HolomorphicOpFunction,
    k0: CMat,
    k1: CMat,
    m: CMat,
    nodes: Vec<f64>,
}

fn metamaterial_parts(elements: usize) -> Result<MetamaterialParts> {
    let nodes = p1::uniform(0.0, 1.0, elements);
    let k0 = p1::stiffness(&nodes, |x| if x < 0.5 { 1.0 } else { 0.0 });
    let k1 = p1::stiffness(&nodes, |x| if x < 0.5 { 0.0 } else { 1.0 });
    let m = p1::mass(&nodes);
    let space = GramSpace::new(&k0 + &k1)?;
    let function = HolomorphicOpFunction::from_forms(
        space,
        vec![
            (ScalarHolo::constant(ONE), k0.clone()),
            (
                ScalarHolo::rational(vec![ZERO, ONE], vec![c64(-1.0, 0.0), ONE])?,
                k1.clone(),
            ),
            (neg_identity_poly(), m.clone()),
        ],
    )?;
    Ok(MetamaterialParts {
        function,
        k0,
        k1,
        m,
        nodes,
    })
}

/// `F(λ) = K₀ + λ/(λ-1) K₁ - λM` on `(0, 1)` with P1 elements on `elements`
/// uniform elements, as a standalone operator function. For odd counts the
/// element containing `1/2` belongs to `K₁`.
pub fn metamaterial_function(elements: usize) -> Result<(HolomorphicOpFunction, QuadraticPencil)> {
    if elements < 2 {
        return Err(Error::Parameter {
            name: "elements".into(),
            reason: "at least 2 elements are required".into(),
        });
    }
    let p = metamaterial_parts(elements)?;
    let q = QuadraticPencil::metamaterial(&p.k0, &p.k1, &p.m);
    Ok((p.function, q))
}

/// Eigenvalues of the metamaterial pencil in `[lo, hi]` away from the pole,
/// from the shift-inverted companion linearization.
fn metamaterial_reference(q: &QuadraticPencil, lo: f64, hi: f64) -> Result<Vec<C64>> {
    let mut found: Vec<C64> = Vec::new();
    for shift in [0.5 * (lo + hi), lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)] {
        for (l, _) in q.shift_invert_eigenpairs(c64(shift, 0.0), 60, 1e-11)? {
            let keep = l.re >= lo && l.re <= hi && l.im.abs() <= 1e-8 * l.abs() && (l - 1.0).abs() >= 1e-4;
            if keep && found.iter().all(|z| (*z - l).abs() > 1e-8 * l.abs()) {
                found.push(c64(l.re, 0.0));
            }
        }
    }
    found.sort_by(|a, b| a.re.total_cmp(&b.re));
    Ok(found)
}

/// Rational metamaterial model `K₀ + λ/(λ-1) K₁ - λM` on `(0, 1)`, interface
/// at `1/2`, pole at `λ = 1`, witness `T = I`.
pub fn build_metamaterial(mesh: &MeshLevels) -> Result<ModelProblem> {
    mesh.validate()?;
    let parts = metamaterial_parts(mesh.reference)?;
    let f = parts.function;
    let q = QuadraticPencil::metamaterial(&parts.k0, &parts.k1, &parts.m);
    let eigs = metamaterial_reference(&q, 2.0, 60.0)?;
    if eigs.len() < 2 {
        return Err(Error::Setup(format!(
            "linearization oracle found {} eigenvalues in [2, 60]",
            eigs.len()
        )));
    }
    let probe = c64(0.5 * (eigs[0].re + eigs[1].re), 0.0);
    let n = f.dim();
    let t = dense::identity(n);
    let (s, _) = coercivity_search(&f, t.as_ref(), parts.m.as_ref(), probe, &default_scales())?;
    let witness = TCWitness::new(&f, t, scaled_form(&parts.m, s), vec![probe], TnRule::Galerkin)?;
    let mut embeddings = Vec::new();
    let mut widths = Vec::new();
    for &l in &mesh.levels {
        let idx = level_indices(mesh.reference, l, false);
        let coarse: Vec<f64> = idx.iter().map(|&i| parts.nodes[i]).collect();
        widths.push(p1::max_width(&coarse));
        embeddings.push(p1::embedding(&parts.nodes, &idx));
    }
    let hierarchy = GalerkinHierarchy::new(f.space().clone(), embeddings)?;
    let both = Contour::ellipse(
        c64(0.5 * (eigs[0].re + eigs[1].re), 0.0),
        0.5 * (eigs[1].re - eigs[0].re) + 0.25 * (eigs[0].re - 1.0),
        5.0,
        CONTOUR_NODES,
    )?;
    Ok(ModelProblem {
        name: "metamaterial".into(),
        function: f,
        hierarchy,
        witness,
        mesh_widths: widths,
        reference_eigenvalues: eigs.clone(),
        provenance: "quadratic pencil (λ-1)(K₀-λM)+λK₁ on the reference space, shift-inverted companion linearization, roots near λ=1 discarded".into(),
        suggested_contours: vec![isolating_circle(&eigs, 0, &[ONE])?, isolating_circle(&eigs, 1, &[ONE])?, both],
        pollution_window: both,
        tc_probe: probe,
        resolvent_circle: (probe, 0.5),
        shift_scale: s,
        negative_control: false,
    })
}

// ---------------------------------------------------------------------------
// Jordan block models.

fn jordan_witness(f: &HolomorphicOpFunction, probe: C64) -> Result<(TCWitness, f64)> {
    let n = f.dim();
    let t = dense::identity(n);
    let k0 = dense::identity(n);
    let (s, _) = coercivity_search(f, t.as_ref(), k0.as_ref(), probe, &default_scales())?;
    let w = TCWitness::new(f, t, scaled_form(&k0, s), vec![probe], TnRule::Galerkin)?;
    Ok((w, s))
}

/// `A(λ) = [[λ, 1], [0, λ]]` on `C²` with levels `span(e₁ + εe₂)` and `C²`.
pub fn build_jordan_toy(epsilon: f64) -> Result<ModelProblem> {
    if !epsilon.is_finite() || epsilon == 0.0 {
        return Err(Error::Parameter {
            name: "epsilon".into(),
            reason: "must be finite and nonzero so that the coarse level misses the eigenspace".into(),
        });
    }
    let space = GramSpace::euclidean(2);
    let nil = dense::from_real(&[&[0.0, 1.0], &[0.0, 0.0]]);
    let f = HolomorphicOpFunction::from_forms(
        space.clone(),
        vec![(ScalarHolo::identity(), dense::identity(2)), (ScalarHolo::constant(ONE), nil)],
    )?;
    let e1 = dense::from_real(&[&[1.0], &[epsilon]]);
    let hierarchy = GalerkinHierarchy::new(space, vec![e1, dense::identity(2)])?;
    let probe = c64(0.75, 0.0);
    let (witness, s) = jordan_witness(&f, probe)?;
    Ok(ModelProblem {
        name: "jordan_toy".into(),
        function: f,
        hierarchy,
        witness,
        mesh_widths: vec![1.0, 0.5],
        reference_eigenvalues: vec![ZERO],
        provenance: "det A(λ) = λ², closed form".into(),
        suggested_contours: vec![Contour::circle(ZERO, 0.5, CONTOUR_NODES)?],
        pollution_window: Contour::circle(ZERO, 0.5, CONTOUR_NODES)?,
        tc_probe: probe,
        resolvent_circle: (c64(1.5, 0.0), 0.5),
        shift_scale: s,
        negative_control: false,
    })
}

/// Perturbed Jordan family: `A(λ) = λI + [[0,1,0],[0,0,0],[0,0,-5]]` on `C³`
/// with the coarse level spanned by `(1, 0, a)` and `(0, 1, a)`, `a = sqrt(ε)`.
///
/// Both the eigenspace at 0 and its adjoint are missed by `O(a)`, so the
/// coarse eigenvalues split as `±i·sqrt(5)·a` while their mean is `O(a²)`.
pub fn build_jordan_family(defect: f64) -> Result<ModelProblem> {
    check_positive("defect", defect)?;
    let a = defect.sqrt();
    let space = GramSpace::euclidean(3);
    let b = dense::from_real(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, -5.0]]);
    let f = HolomorphicOpFunction::from_forms(
        space.clone(),
        vec![(ScalarHolo::identity(), dense::identity(3)), (ScalarHolo::constant(ONE), b)],
    )?;
    let e = dense::from_real(&[&[1.0, 0.0], &[0.0, 1.0], &[a, a]]);
    let hierarchy = GalerkinHierarchy::new(space, vec![e, dense::identity(3)])?;
    let probe = c64(0.75, 0.0);
    let (witness, s) = jordan_witness(&f, probe)?;
    Ok(ModelProblem {
        name: "jordan_family".into(),
        function: f,
        hierarchy,
        witness,
        mesh_widths: vec![a, 0.5 * a],
        reference_eigenvalues: vec![ZERO, c64(5.0, 0.0)],
        provenance: "block triangular matrix, closed form".into(),
        suggested_contours: vec![Contour::circle(ZERO, 1.0, CONTOUR_NODES)?],
        pollution_window: Contour::circle(ZERO, 1.0, CONTOUR_NODES)?,
        tc_probe: probe,
        resolvent_circle: (c64(2.5, 0.0), 0.5),
        shift_scale: s,
        negative_control: false,
    })
}

// ---------------------------------------------------------------------------
// Registry.

/// One scalar parameter of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub default: f64,
    pub description: String,
}

impl ParamSpec {
    pub fn new(name: &str, default: f64, description: &str) -> Self {
        Self {
            name: name.into(),
            default,
            description: description.into(),
        }
    }
}

/// Parameter values and an optional level list for a build.
#[derive(Clone, Debug, Default)]
pub struct ModelParams {
    pub values: BTreeMap<String, f64>,
    pub levels: Option<Vec<usize>>,
}

impl ModelParams {
    pub fn get(&self, spec: &ParamSpec) -> f64 {
        self.values.get(&spec.name).copied().unwrap_or(spec.default)
    }
}

pub type Builder = Arc<dyn Fn(&ModelParams) -> Result<ModelProblem> + Send + Sync>;

#[derive(Clone)]
pub struct ModelEntry {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    builder: Builder,
}

impl fmt::Debug for ModelEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelEntry")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ModelRegistry {
    entries: Vec<ModelEntry>,
}

fn mesh_from(params: &ModelParams, reference: f64) -> Result<MeshLevels> {
    if !(reference.fract() == 0.0 && reference >= 4.0) {
        return Err(Error::Parameter {
            name: "reference".into(),
            reason: format!("must be an integer element count, got {reference}"),
        });
    }
    let mut mesh = MeshLevels {
        reference: reference as usize,
        ..MeshLevels::default()
    };
    if let Some(l) = &params.levels {
        mesh.levels = l.clone();
    }
    Ok(mesh)
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `sign_changing`, `sign_changing_asym`, `metamaterial`, `jordan_toy`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        let sc_params = || {
            vec![
                ParamSpec::new("sigma_plus", 1.0, "coefficient on (-1,0)"),
                ParamSpec::new("sigma_minus", 0.5, "magnitude of the negative coefficient on (0,1)"),
                ParamSpec::new("reference", 2048.0, "reference element count"),
            ]
        };
        let p = sc_params();
        r.register_unchecked(
            "sign_changing",
            "sign-changing coefficient, symmetric meshes (positive control)",
            p.clone(),
            Arc::new(move |m: &ModelParams| {
                build_sign_changing(m.get(&p[0]), m.get(&p[1]), &mesh_from(m, m.get(&p[2]))?)
            }),
        );
        let p = sc_params();
        r.register_unchecked(
            "sign_changing_asym",
            "sign-changing coefficient, graded right half (negative control)",
            p.clone(),
            Arc::new(move |m: &ModelParams| {
                build_sign_changing_asym(m.get(&p[0]), m.get(&p[1]), &mesh_from(m, m.get(&p[2]))?)
            }),
        );
        let p = vec![ParamSpec::new("reference", 2048.0, "reference element count")];
        r.register_unchecked(
            "metamaterial",
            "rational function K0 + λ/(λ-1) K1 - λM, pole at 1",
            p.clone(),
            Arc::new(move |m: &ModelParams| build_metamaterial(&mesh_from(m, m.get(&p[0]))?)),
        );
        let p = vec![ParamSpec::new("epsilon", 0.1, "tilt of the coarse level span(e1 + epsilon e2)")];
        r.register_unchecked(
            "jordan_toy",
            "2x2 Jordan block [[λ,1],[0,λ]]",
            p.clone(),
            Arc::new(move |m: &ModelParams| {
                if let Some(l) = &m.levels {
                    if l.as_slice() != [1, 2] {
                        return Err(Error::Parameter {
                            name: "levels".into(),
                            reason: "jordan_toy has the fixed level dimensions 1,2".into(),
                        });
                    }
                }
                build_jordan_toy(m.get(&p[0]))
            }),
        );
        r
    }

    fn register_unchecked(&mut self, name: &str, description: &str, params: Vec<ParamSpec>, builder: Builder) {
        self.entries.push(ModelEntry {
            name: name.into(),
            description: description.into(),
            params,
            builder,
        });
    }

    /// Adds a model; names must be unique.
    pub fn register(
        &mut self,
        name: &str,
        description: &str,
        params: Vec<ParamSpec>,
        builder: Builder,
    ) -> Result<()> {
        if name.is_empty() || self.get(name).is_some() {
            return Err(Error::Usage(format!("model name '{name}' is empty or already registered")));
        }
        self.register_unchecked(name, description, params, builder);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ModelEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Builds a model after checking parameter names.
    pub fn build(&self, name: &str, params: &ModelParams) -> Result<ModelProblem> {
        let entry = self.get(name).ok_or_else(|| Error::UnknownModel(name.into()))?;
        for key in params.values.keys() {
            if !entry.params.iter().any(|p| &p.name == key) {
                return Err(Error::Parameter {
                    name: key.clone(),
                    reason: format!("not a parameter of model '{name}'"),
                });
            }
        }
        (entry.builder)(params)
    }

    /// One line per model: name followed by `param=default` pairs.
    pub fn listing(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let ps: Vec<String> = e
                .params
                .iter()
                .map(|p| format!("{}={} ({})", p.name, p.default, p.description))
                .collect();
            s.push_str(&format!("{}: {}", e.name, e.description));
            if !ps.is_empty() {
                s.push_str(&format!(" [{}]", ps.join("; ")));
            }
            s.push('\n');
        }
        s
    }
}
