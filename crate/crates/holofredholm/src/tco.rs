//! T-coercivity witnesses and T-compatibility diagnostics.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use faer::prelude::SpSolver;
use faer::MatRef;

use crate::dense;
use crate::error::{Error, Result};
use crate::galerkin::GalerkinHierarchy;
use crate::linalg::GramSpace;
use crate::opfun::HolomorphicOpFunction;
use crate::output::fmt_f64;
use crate::{CMat, C64};

const ANGLES: usize = 360;
const REFINE_STEPS: usize = 40;
const T_INVERTIBLE_TOL: f64 = 1e-10;
/// Discrete norms at or below this level count as exact reproduction of `T`.
pub const EXACT_TOL: f64 = 1e-10;

/// Distance of the numerical range of `C` from the origin, i.e.
/// `max_θ λ_min(Herm(e^{iθ} C))` clipped at zero, for a Euclidean matrix `C`.
fn numerical_range_distance(c: MatRef<'_, C64>) -> f64 {
    let n = c.nrows();
    if n == 0 {
        return 0.0;
    }
    // Real or Hermitian C has a conjugation-symmetric numerical range, so the
    // maximizing angles are 0 and π.
    let herm = dense::hermitian_deviation(c) <= 1e-14 * dense::max_abs(c);
    if herm || dense::is_real(c) {
        let w = dense::hermitian_eigenvalues(c);
        return w[0].max(-w[n - 1]).max(0.0);
    }
    let s = |th: f64| -> f64 {
        let e = C64::cis(th);
        let m = CMat::from_fn(n, n, |i, j| c.read(i, j) * e);
        dense::hermitian_eigenvalues(m.as_ref())[0]
    };
    let step = 2.0 * PI / ANGLES as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..ANGLES {
        let th = k as f64 * step;
        let v = s(th);
        if v > best.0 {
            best = (v, th);
        }
    }
    // Golden-section refinement on the bracketing interval.
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (s(x1), s(x2));
    for _ in 0..REFINE_STEPS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = s(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = s(x1);
        }
    }
    best.0.max(f1).max(f2).max(0.0)
}

/// `sup_θ inf_{‖u‖_X=1} Re(e^{iθ} ⟨B u, u⟩_X)` clipped at zero.
pub fn coercivity_constant(space: &GramSpace, b: MatRef<'_, C64>) -> Result<f64> {
    let form = space.form_of(b)?;
    coercivity_constant_form(space, form.as_ref())
}

/// [`coercivity_constant`] for the operator with form matrix `F`.
pub fn coercivity_constant_form(space: &GramSpace, form: MatRef<'_, C64>) -> Result<f64> {
    if form.nrows() != space.dim() || form.ncols() != space.dim() {
        return Err(Error::DimensionMismatch {
            context: "coercivity_constant",
            expected: space.dim(),
            found: form.nrows(),
        });
    }
    Ok(numerical_range_distance(space.whiten_form(form).as_ref()))
}

/// Rule producing the discrete operator `T_n` on level `n`.
#[derive(Clone, Default)]
pub enum TnRule {
    /// `T_n = P_n T|_{X_n}`.
    #[default]
    Galerkin,
    /// Caller-supplied coarse operator.
    Custom(Arc<dyn Fn(&GalerkinHierarchy, usize, MatRef<'_, C64>) -> CMat + Send + Sync>),
}

impl fmt::Debug for TnRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TnRule::Galerkin => write!(f, "Galerkin"),
            TnRule::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Bijection `T` and compact shift `K` such that `T*A(λ) + K` is coercive.
///
/// `K` is stored through its form matrix `G K`.
#[derive(Clone, Debug)]
pub struct TCWitness {
    t: CMat,
    k_form: CMat,
    rule: TnRule,
    probes: Vec<C64>,
    t_norm: f64,
    t_inv_norm: f64,
    coercivity: Vec<f64>,
}

impl TCWitness {
    /// Validates `T` (X-invertible) and coercivity of `T*A(λ) + K` at every probe.
    pub fn new(
        f: &HolomorphicOpFunction,
        t: CMat,
        k_form: CMat,
        probes: Vec<C64>,
        rule: TnRule,
    ) -> Result<Self> {
        let mut w = Self::unchecked(f.space(), t, k_form, probes, rule)?;
        if !(w.t_inv_norm.is_finite()) || 1.0 / w.t_inv_norm <= T_INVERTIBLE_TOL {
            return Err(Error::Witness(format!(
                "T is not invertible (smallest singular value {:e})",
                1.0 / w.t_inv_norm
            )));
        }
        let mut cs = Vec::with_capacity(w.probes.len());
        for &z in &w.probes {
            let c = coercivity_constant_form(f.space(), w.shifted_form(f, z)?.as_ref())?;
            if c <= 0.0 {
                return Err(Error::Witness(format!(
                    "T*A(λ) + K is not coercive at λ = {z}"
                )));
            }
            cs.push(c);
        }
        w.coercivity = cs;
        Ok(w)
    }

    /// Builds a witness without the coercivity check, for negative controls.
    pub fn unchecked(
        space: &GramSpace,
        t: CMat,
        k_form: CMat,
        probes: Vec<C64>,
        rule: TnRule,
    ) -> Result<Self> {
        let n = space.dim();
        for (m, name) in [(&t, "T"), (&k_form, "K")] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: if name == "T" { "witness T" } else { "witness K" },
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        let (smin, smax) = space.min_max_gsv(t.as_ref())?;
        Ok(Self {
            t,
            k_form,
            rule,
            probes,
            t_norm: smax,
            t_inv_norm: if smin > 0.0 { 1.0 / smin } else { f64::INFINITY },
            coercivity: Vec::new(),
        })
    }

    pub fn t(&self) -> MatRef<'_, C64> {
        self.t.as_ref()
    }

    pub fn k_form(&self) -> MatRef<'_, C64> {
        self.k_form.as_ref()
    }

    pub fn rule(&self) -> &TnRule {
        &self.rule
    }

    pub fn probes(&self) -> &[C64] {
        &self.probes
    }

    /// Coercivity constants at the probes, empty for unchecked witnesses.
    pub fn coercivity(&self) -> &[f64] {
        &self.coercivity
    }

    pub fn t_norm(&self) -> f64 {
        self.t_norm
    }

    pub fn t_inv_norm(&self) -> f64 {
        self.t_inv_norm
    }

    /// Form matrix of `T*A(λ) + K`, which is `Tᴴ Â(λ) + G K`.
    pub fn shifted_form(&self, f: &HolomorphicOpFunction, z: C64) -> Result<CMat> {
        let a = f.evaluate_form(z)?;
        Ok(dense::adj_matmul(self.t.as_ref(), a.as_ref()) + &self.k_form)
    }

    /// Form matrix of `T⁻* K`, which is `T⁻ᴴ (G K)`.
    pub fn t_inv_star_k_form(&self) -> CMat {
        let lu = self.t.adjoint().partial_piv_lu();
        lu.solve(self.k_form.as_ref())
    }

    /// Discrete operator `T_n` on level `n`.
    pub fn t_n(&self, h: &GalerkinHierarchy, n: usize) -> Result<CMat> {
        match &self.rule {
            TnRule::Galerkin => default_tn(h, n, self.t.as_ref()),
            TnRule::Custom(f) => Ok(f(h, n, self.t.as_ref())),
        }
    }
}

/// `T_n = P_n T|_{X_n}` in level coordinates.
pub fn default_tn(h: &GalerkinHierarchy, n: usize, t: MatRef<'_, C64>) -> Result<CMat> {
    let lv = h.level(n)?;
    let te = dense::matmul(t, lv.embedding());
    h.project_coefficients(n, te.as_ref())
}

/// `sup ‖(T - T_n) u_n‖_X / ‖u_n‖_X` over nonzero `u_n` in `X_n`.
pub fn discrete_norm(
    h: &GalerkinHierarchy,
    n: usize,
    t: MatRef<'_, C64>,
    t_n: MatRef<'_, C64>,
) -> Result<f64> {
    let lv = h.level(n)?;
    if t_n.nrows() != lv.dim() || t_n.ncols() != lv.dim() {
        return Err(Error::DimensionMismatch {
            context: "discrete_norm T_n",
            expected: lv.dim(),
            found: t_n.nrows(),
        });
    }
    let e = lv.embedding();
    let d = dense::matmul(t, e) - dense::matmul(e, t_n);
    let m = h.reference().inner_matrix(d.as_ref(), d.as_ref());
    let w = dense::hermitian_eigenvalues(lv.space().whiten_form(m.as_ref()).as_ref());
    Ok(w.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Reference-space quantities the level diagnostics are compared against.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceBounds {
    pub t_norm: f64,
    pub t_inv_norm: f64,
    /// `‖(A(λ) + T⁻*K)⁻¹‖` on the reference space.
    pub stability: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct CompatibilityRow {
    pub n: usize,
    pub dim: usize,
    pub disc_norm: f64,
    pub tn_norm: f64,
    pub tn_inv_norm: f64,
    pub stability: f64,
}

#[derive(Clone, Debug)]
pub struct CompatibilityReport {
    pub lambda: C64,
    pub tol: f64,
    pub rows: Vec<CompatibilityRow>,
    pub reference: ReferenceBounds,
    pub verdict: bool,
}

fn inv_norm(smin: f64) -> f64 {
    if smin > 0.0 {
        1.0 / smin
    } else {
        f64::INFINITY
    }
}

/// Discrete norms, `T_n` bounds and the stability of `A_n(λ) + P_n T⁻*K|_{X_n}`
/// on every level.
///
/// The verdict holds when the finest discrete norm is at most `tol` and the
/// sequence decreased tenfold from the first level, or reproduces `T` exactly.
pub fn compatibility_report(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    w: &TCWitness,
    lambda: C64,
    tol: f64,
) -> Result<CompatibilityReport> {
    if !(tol > 0.0) {
        return Err(Error::Usage("tolerance must be positive".into()));
    }
    if h.is_empty() {
        return Err(Error::Usage("hierarchy has no levels".into()));
    }
    let a = f.evaluate_form(lambda)?;
    let stab_form = &a + w.t_inv_star_k_form();
    let (smin_ref, _) = h.reference().form_min_max_gsv(stab_form.as_ref())?;
    let reference = ReferenceBounds {
        t_norm: w.t_norm(),
        t_inv_norm: w.t_inv_norm(),
        stability: inv_norm(smin_ref),
    };
    let mut rows = Vec::with_capacity(h.len());
    for (n, lv) in h.levels().iter().enumerate() {
        let tn = w.t_n(h, n)?;
        let disc = discrete_norm(h, n, w.t(), tn.as_ref())?;
        let (tmin, tmax) = lv.space().min_max_gsv(tn.as_ref())?;
        let coarse = h.compress_form(n, stab_form.as_ref())?;
        let (smin, _) = lv.space().form_min_max_gsv(coarse.as_ref())?;
        rows.push(CompatibilityRow {
            n,
            dim: lv.dim(),
            disc_norm: disc,
            tn_norm: tmax,
            tn_inv_norm: inv_norm(tmin),
            stability: inv_norm(smin),
        });
    }
    let first = rows[0].disc_norm;
    let last = rows[rows.len() - 1].disc_norm;
    let decreased = last <= first / 10.0 || rows.iter().all(|r| r.disc_norm <= EXACT_TOL);
    Ok(CompatibilityReport {
        lambda,
        tol,
        rows,
        reference,
        verdict: last <= tol && decreased,
    })
}

impl CompatibilityReport {
    pub const CSV_HEADER: &'static str = "n,dim,disc_norm,tn_norm,tn_inv_norm,stability";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n,
                r.dim,
                fmt_f64(r.disc_norm),
                fmt_f64(r.tn_norm),
                fmt_f64(r.tn_inv_norm),
                fmt_f64(r.stability)
            ));
        }
        s
    }

    /// `‖T‖/3 ≤ ‖T_n‖ ≤ ‖T‖ + disc_n` and `‖T_n⁻¹‖ ≤ 2‖T⁻¹‖` on every level whose
    /// discrete norm is at most `‖T⁻¹‖⁻¹/2`.
    pub fn tn_bounds_hold(&self) -> bool {
        let r = &self.reference;
        let slack = 1e-10 * r.t_norm;
        self.rows
            .iter()
            .filter(|row| row.disc_norm <= 0.5 / r.t_inv_norm)
            .all(|row| {
                row.tn_norm >= r.t_norm / 3.0 - slack
                    && row.tn_norm <= r.t_norm + row.disc_norm + slack
                    && row.tn_inv_norm <= 2.0 * r.t_inv_norm * (1.0 + 1e-10)
            })
    }

    /// Every level stability constant is finite.
    pub fn stability_finite(&self) -> bool {
        self.rows.iter().all(|r| r.stability.is_finite())
    }

    /// The stability constants on the finer half of the levels stay within
    /// `factor` times the reference value.
    pub fn stability_within_reference(&self, factor: f64) -> bool {
        let half = self.rows.len() / 2;
        self.rows[half..]
            .iter()
            .all(|r| r.stability <= factor * self.reference.stability)
    }
}

/// Searches the smallest scale `s` in `scales` for which `T*A(λ) + s·K₀` is
/// coercive with constant above `1e-6`, for the shift form `K₀`.
///
/// Returns `(s, constant)`.
pub fn coercivity_search(
    f: &HolomorphicOpFunction,
    t: MatRef<'_, C64>,
    shift_form: MatRef<'_, C64>,
    lambda: C64,
    scales: &[f64],
) -> Result<(f64, f64)> {
    const ACCEPT: f64 = 1e-6;
    let space = f.space();
    let a = f.evaluate_form(lambda)?;
    let base = space.whiten_form(dense::adj_matmul(t, a.as_ref()).as_ref());
    let shift = space.whiten_form(shift_form);
    let n = space.dim();
    let eval = |s: f64| -> f64 {
        let m = CMat::from_fn(n, n, |i, j| base.read(i, j) + shift.read(i, j) * s);
        numerical_range_distance(m.as_ref())
    };
    let mut sorted: Vec<f64> = scales.to_vec();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let monotone = dense::hermitian_deviation(shift_form) <= 1e-13 * dense::max_abs(shift_form)
        && dense::hermitian_eigenvalues(shift.as_ref())
            .first()
            .map_or(true, |&w| w >= 0.0);
    let real_range = dense::is_real(base.as_ref())
        || dense::hermitian_deviation(base.as_ref()) <= 1e-13 * dense::max_abs(base.as_ref());
    if monotone && real_range {
        // Numerical range symmetric about the real axis plus a positive
        // semidefinite shift: λ_min of the Hermitian part grows and -λ_max
        // shrinks with s, so past the first scale only λ_min can certify
        // coercivity and it is monotone.
        if let Some(&s0) = sorted.first() {
            let c = eval(s0);
            if c > ACCEPT {
                return Ok((s0, c));
            }
        }
        let (mut lo, mut hi) = (0usize, sorted.len());
        let mut found = None;
        while lo < hi {
            let mid = (lo + hi) / 2;
            let c = eval_re(&base, &shift, sorted[mid]);
            if c > ACCEPT {
                found = Some((sorted[mid], c));
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if let Some(r) = found {
            return Ok(r);
        }
    } else {
        for &s in &sorted {
            let c = eval(s);
            if c > ACCEPT {
                return Ok((s, c));
            }
        }
    }
    Err(Error::Witness(format!(
        "no scale in the list makes T*A({lambda}) + sK coercive"
    )))
}

/// `λ_min(Herm(base + s·shift))`, the coercivity constant at angle zero.
fn eval_re(base: &CMat, shift: &CMat, s: f64) -> f64 {
    let n = base.nrows();
    let m = CMat::from_fn(n, n, |i, j| base.read(i, j) + shift.read(i, j) * s);
    dense::hermitian_eigenvalues(m.as_ref())
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
}
