//! Holomorphic operator functions `A(λ) = Σᵢ fᵢ(λ) Aᵢ`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use faer::MatRef;

use crate::dense::{self, ONE, ZERO};
use crate::error::{Error, Result};
use crate::linalg::GramSpace;
use crate::{CMat, C64};

/// Points closer than this to a pole are rejected.
pub const POLE_TOL: f64 = 1e-12;
/// Default number of quadrature nodes for Cauchy-integral derivatives.
pub const CAUCHY_NODES: usize = 64;

type ScalarFn = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    /// Coefficients in ascending powers.
    Polynomial(Vec<C64>),
    Rational { num: Vec<C64>, den: Vec<C64> },
    Opaque { eval: ScalarFn, max_order: usize },
}

/// Scalar holomorphic coefficient function.
#[derive(Clone)]
pub struct ScalarHolo {
    kind: Kind,
    poles: Vec<C64>,
}

impl fmt::Debug for ScalarHolo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            Kind::Rational { num, den } => write!(f, "Rational({num:?} / {den:?})"),
            Kind::Opaque { max_order, .. } => {
                write!(f, "Opaque(max_order = {max_order}, poles = {:?})", self.poles)
            }
        }
    }
}

fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(ZERO, |acc, &a| acc * z + a)
}

fn trim(mut c: Vec<C64>) -> Vec<C64> {
    while c.len() > 1 && *c.last().unwrap() == ZERO {
        c.pop();
    }
    if c.is_empty() {
        c.push(ZERO);
    }
    c
}

/// Taylor coefficients of the polynomial `c` around `z`: `p(z + t) = Σ a_k t^k`.
fn taylor_shift(c: &[C64], z: C64) -> Vec<C64> {
    let mut a = c.to_vec();
    let n = a.len();
    for k in 0..n {
        for i in (k..n - 1).rev() {
            let v = a[i + 1] * z;
            a[i] += v;
        }
    }
    a
}

/// Roots of a polynomial through its companion matrix.
fn poly_roots(c: &[C64]) -> Vec<C64> {
    let c = trim(c.to_vec());
    let d = c.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let lead = c[d];
    let comp = CMat::from_fn(d, d, |i, j| {
        if i == 0 {
            -c[d - 1 - j] / lead
        } else if i == j + 1 {
            ONE
        } else {
            ZERO
        }
    });
    dense::eigenvalues(comp.as_ref())
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|k| k as f64).product()
}

impl ScalarHolo {
    pub fn constant(c: C64) -> Self {
        Self::polynomial(vec![c])
    }

    /// `λ ↦ λ`.
    pub fn identity() -> Self {
        Self::polynomial(vec![ZERO, ONE])
    }

    /// Polynomial with coefficients in ascending powers.
    pub fn polynomial(coeffs: Vec<C64>) -> Self {
        Self {
            kind: Kind::Polynomial(trim(coeffs)),
            poles: Vec::new(),
        }
    }

    /// Quotient of polynomials, coefficients in ascending powers. Poles are the
    /// roots of the denominator.
    pub fn rational(num: Vec<C64>, den: Vec<C64>) -> Result<Self> {
        let den = trim(den);
        if den.len() == 1 && den[0] == ZERO {
            return Err(Error::Usage("rational function with zero denominator".into()));
        }
        let poles = poly_roots(&den);
        Ok(Self {
            kind: Kind::Rational {
                num: trim(num),
                den,
            },
            poles,
        })
    }

    /// Function given only through an evaluation rule. Derivatives up to
    /// `max_order` are computed by Cauchy integrals.
    pub fn opaque(
        eval: impl Fn(C64) -> C64 + Send + Sync + 'static,
        max_order: usize,
        poles: Vec<C64>,
    ) -> Self {
        Self {
            kind: Kind::Opaque {
                eval: Arc::new(eval),
                max_order,
            },
            poles,
        }
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    pub fn is_opaque(&self) -> bool {
        matches!(self.kind, Kind::Opaque { .. })
    }

    pub fn nearest_pole_distance(&self, z: C64) -> f64 {
        self.poles
            .iter()
            .map(|p| (z - *p).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn check(&self, z: C64) -> Result<()> {
        for p in &self.poles {
            let d = (z - *p).abs();
            if d < POLE_TOL {
                return Err(Error::Domain {
                    point: z,
                    pole: *p,
                    distance: d,
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        self.check(z)?;
        Ok(match &self.kind {
            Kind::Polynomial(c) => horner(c, z),
            Kind::Rational { num, den } => horner(num, z) / horner(den, z),
            Kind::Opaque { eval, .. } => eval(z),
        })
    }

    /// `f⁽ʲ⁾(z)`. Closed forms for polynomial and rational kinds, Cauchy
    /// integrals for opaque functions.
    pub fn derivative(&self, z: C64, j: usize) -> Result<C64> {
        self.check(z)?;
        match &self.kind {
            Kind::Polynomial(c) => {
                let a = taylor_shift(c, z);
                Ok(a.get(j).copied().unwrap_or(ZERO) * factorial(j))
            }
            Kind::Rational { num, den } => {
                let p = taylor_shift(num, z);
                let q = taylor_shift(den, z);
                // Series division p/q up to order j.
                let mut r = vec![ZERO; j + 1];
                for k in 0..=j {
                    let mut s = p.get(k).copied().unwrap_or(ZERO);
                    for i in 0..k {
                        s -= r[i] * q.get(k - i).copied().unwrap_or(ZERO);
                    }
                    r[k] = s / q[0];
                }
                Ok(r[j] * factorial(j))
            }
            Kind::Opaque { max_order, .. } => {
                if j > *max_order {
                    return Err(Error::Usage(format!(
                        "derivative order {j} exceeds the declared limit {max_order}"
                    )));
                }
                if j == 0 {
                    return self.eval(z);
                }
                let r = (0.5 * self.nearest_pole_distance(z)).min(0.1);
                self.derivative_cauchy(z, j, r, CAUCHY_NODES)
            }
        }
    }

    /// Cauchy-integral derivative on the circle of radius `r` around `z` with
    /// `nodes` equispaced trapezoidal nodes.
    pub fn derivative_cauchy(&self, z: C64, j: usize, r: f64, nodes: usize) -> Result<C64> {
        if !(r > 0.0) || nodes == 0 {
            return Err(Error::Usage("Cauchy radius and node count must be positive".into()));
        }
        for p in &self.poles {
            if (*p - z).abs() <= r + POLE_TOL {
                return Err(Error::Domain {
                    point: z,
                    pole: *p,
                    distance: (*p - z).abs(),
                });
            }
        }
        let mut s = ZERO;
        for k in 0..nodes {
            let th = 2.0 * PI * k as f64 / nodes as f64;
            let e = C64::cis(th);
            let fz = match &self.kind {
                Kind::Polynomial(c) => horner(c, z + e * r),
                Kind::Rational { num, den } => horner(num, z + e * r) / horner(den, z + e * r),
                Kind::Opaque { eval, .. } => eval(z + e * r),
            };
            s += fz * C64::cis(-(j as f64) * th);
        }
        Ok(s * (factorial(j) / (nodes as f64 * r.powi(j as i32))))
    }

    /// `λ ↦ conj(f(conj(λ)))`.
    pub fn conj_reflect(&self) -> Self {
        let conj_all = |c: &[C64]| c.iter().map(|a| a.conj()).collect::<Vec<_>>();
        let kind = match &self.kind {
            Kind::Polynomial(c) => Kind::Polynomial(conj_all(c)),
            Kind::Rational { num, den } => Kind::Rational {
                num: conj_all(num),
                den: conj_all(den),
            },
            Kind::Opaque { eval, max_order } => {
                let f = eval.clone();
                Kind::Opaque {
                    eval: Arc::new(move |z: C64| f(z.conj()).conj()),
                    max_order: *max_order,
                }
            }
        };
        Self {
            kind,
            poles: self.poles.iter().map(|p| p.conj()).collect(),
        }
    }
}

/// One term `f(λ) Aᵢ`, stored through the form matrix `G Aᵢ`.
#[derive(Clone, Debug)]
pub struct Term {
    pub scalar: ScalarHolo,
    pub form: CMat,
}

/// Optional bounding disk of the domain of holomorphy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: C64,
    pub radius: f64,
}

/// Holomorphic operator function `A(λ) = Σᵢ fᵢ(λ) Aᵢ` on a Gram space.
#[derive(Clone, Debug)]
pub struct HolomorphicOpFunction {
    space: GramSpace,
    terms: Vec<Term>,
    bound: Option<Disk>,
}

impl HolomorphicOpFunction {
    /// Builds the function from operator matrices `Aᵢ`.
    pub fn from_operators(space: GramSpace, terms: Vec<(ScalarHolo, CMat)>) -> Result<Self> {
        let mut out = Vec::with_capacity(terms.len());
        for (f, a) in terms {
            let form = space.form_of(a.as_ref())?;
            out.push(Term { scalar: f, form });
        }
        Self::from_terms(space, out)
    }

    /// Builds the function from form matrices `G Aᵢ`.
    pub fn from_forms(space: GramSpace, terms: Vec<(ScalarHolo, CMat)>) -> Result<Self> {
        let out = terms
            .into_iter()
            .map(|(scalar, form)| Term { scalar, form })
            .collect();
        Self::from_terms(space, out)
    }

    fn from_terms(space: GramSpace, terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Usage("operator function needs at least one term".into()));
        }
        let n = space.dim();
        for t in &terms {
            if t.form.nrows() != n || t.form.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "operator function term",
                    expected: n,
                    found: t.form.nrows().max(t.form.ncols()),
                });
            }
        }
        Ok(Self {
            space,
            terms,
            bound: None,
        })
    }

    /// Restricts the domain to a disk.
    pub fn with_bound(mut self, bound: Disk) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn space(&self) -> &GramSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn bound(&self) -> Option<Disk> {
        self.bound
    }

    pub fn poles(&self) -> Vec<C64> {
        let mut p: Vec<C64> = Vec::new();
        for t in &self.terms {
            for q in t.scalar.poles() {
                if p.iter().all(|r| (*r - *q).abs() > POLE_TOL) {
                    p.push(*q);
                }
            }
        }
        p
    }

    pub fn nearest_pole_distance(&self, z: C64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.scalar.nearest_pole_distance(z))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks that `z` lies in the domain of holomorphy.
    pub fn check_point(&self, z: C64) -> Result<()> {
        if let Some(b) = self.bound {
            if (z - b.center).abs() > b.radius {
                return Err(Error::Usage(format!(
                    "point {z} lies outside the domain disk |λ - {}| <= {}",
                    b.center, b.radius
                )));
            }
        }
        for t in &self.terms {
            t.scalar.check(z)?;
        }
        Ok(())
    }

    /// Form matrix `Σᵢ fᵢ⁽ʲ⁾(λ) G Aᵢ` of the `j`-th derivative.
    pub fn derivative_form(&self, z: C64, j: usize) -> Result<CMat> {
        self.check_point(z)?;
        let n = self.dim();
        let mut acc = dense::zeros(n, n);
        for t in &self.terms {
            let c = if j == 0 {
                t.scalar.eval(z)?
            } else {
                t.scalar.derivative(z, j)?
            };
            dense::axpy(&mut acc, c, t.form.as_ref());
        }
        Ok(acc)
    }

    pub fn evaluate_form(&self, z: C64) -> Result<CMat> {
        self.derivative_form(z, 0)
    }

    /// Operator matrix `A(λ)`.
    pub fn evaluate(&self, z: C64) -> Result<CMat> {
        let f = self.evaluate_form(z)?;
        Ok(self.space.solve_gram(f.as_ref()))
    }

    /// Operator matrix `A⁽ʲ⁾(λ)`.
    pub fn derivative(&self, z: C64, j: usize) -> Result<CMat> {
        let f = self.derivative_form(z, j)?;
        Ok(self.space.solve_gram(f.as_ref()))
    }

    /// `λ ↦ A(conj λ)*`, formed termwise from X-adjoints.
    pub fn adjoint_function(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                scalar: t.scalar.conj_reflect(),
                form: dense::adjoint(t.form.as_ref()),
            })
            .collect();
        Self {
            space: self.space.clone(),
            terms,
            bound: self.bound.map(|b| Disk {
                center: b.center.conj(),
                radius: b.radius,
            }),
        }
    }

    /// Applies `M ↦ Pᴴ M P` to every term form and pairs the result with a new
    /// space.
    pub fn congruence(&self, space: GramSpace, p: MatRef<'_, C64>) -> Result<Self> {
        if p.nrows() != self.dim() || p.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                context: "congruence transform",
                expected: self.dim(),
                found: p.nrows(),
            });
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                scalar: t.scalar.clone(),
                form: p.adjoint() * dense::matmul(t.form.as_ref(), p),
            })
            .collect();
        Ok(Self {
            space,
            terms,
            bound: self.bound,
        })
    }
}
