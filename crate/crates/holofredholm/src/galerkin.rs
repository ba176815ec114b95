//! Nested Galerkin hierarchies `X₁ ⊂ X₂ ⊂ … ⊂ X`.

use faer::MatRef;

use crate::dense;
use crate::error::{Error, Result};
use crate::linalg::GramSpace;
use crate::opfun::HolomorphicOpFunction;
use crate::{CMat, C64};

const NESTED_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// One level: an embedding `E` whose columns span `X_n`, and the induced Gram
/// space `Eᴴ G E`.
#[derive(Clone, Debug)]
pub struct Level {
    embedding: CMat,
    space: GramSpace,
}

impl Level {
    pub fn embedding(&self) -> MatRef<'_, C64> {
        self.embedding.as_ref()
    }

    pub fn space(&self) -> &GramSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }
}

/// Cholesky pivots relative to the largest column norm, squared tolerance
/// `1e-10`.
fn full_rank(space: &GramSpace) -> bool {
    let g = space.gram();
    let l = space.chol_l();
    let scale = (0..space.dim()).map(|i| g.read(i, i).re).fold(0.0, f64::max);
    (0..space.dim()).all(|i| l.read(i, i).re.powi(2) > 1e-10 * scale)
}

#[derive(Clone, Debug)]
pub struct GalerkinHierarchy {
    reference: GramSpace,
    levels: Vec<Level>,
}

impl GalerkinHierarchy {
    /// Validates full column rank, increasing dimensions and nestedness.
    pub fn new(reference: GramSpace, embeddings: Vec<CMat>) -> Result<Self> {
        let n = reference.dim();
        let mut levels: Vec<Level> = Vec::with_capacity(embeddings.len());
        for (k, e) in embeddings.into_iter().enumerate() {
            if e.nrows() != n {
                return Err(Error::DimensionMismatch {
                    context: "level embedding rows",
                    expected: n,
                    found: e.nrows(),
                });
            }
            if let Some(prev) = levels.last() {
                if e.ncols() <= prev.dim() {
                    return Err(Error::Usage(format!(
                        "level dimensions must increase strictly ({} then {})",
                        prev.dim(),
                        e.ncols()
                    )));
                }
            }
            let coarse_gram = e.adjoint() * dense::matmul(reference.gram(), e.as_ref());
            let space = GramSpace::new(dense::hermitian_part(coarse_gram.as_ref()))
                .map_err(|_| Error::Usage(format!("level {k} embedding is rank deficient")))?;
            if !full_rank(&space) {
                return Err(Error::Usage(format!("level {k} embedding is rank deficient")));
            }
            levels.push(Level { embedding: e, space });
        }
        let h = Self { reference, levels };
        for k in 0..h.levels.len().saturating_sub(1) {
            let e = h.levels[k].embedding.clone();
            let r = &e - h.project_block(k + 1, e.as_ref())?;
            let defect = h.relative_defect(e.as_ref(), r.as_ref());
            if defect > NESTED_TOL {
                return Err(Error::NotNested { level: k, defect });
            }
        }
        Ok(h)
    }

    fn relative_defect(&self, e: MatRef<'_, C64>, r: MatRef<'_, C64>) -> f64 {
        let ge = self.reference.inner_matrix(e, e);
        let gr = self.reference.inner_matrix(r, r);
        let mut worst = 0.0f64;
        for j in 0..e.ncols() {
            let d = (gr.read(j, j).re.max(0.0) / ge.read(j, j).re).sqrt();
            worst = worst.max(d);
        }
        worst
    }

    pub fn reference(&self) -> &GramSpace {
        &self.reference
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, n: usize) -> Result<&Level> {
        self.levels
            .get(n)
            .ok_or_else(|| Error::Usage(format!("level {n} out of range ({} levels)", self.len())))
    }

    /// Coefficients `G_n⁻¹ Eᴴ G U` of the X-orthogonal projection of `U`.
    pub fn project_coefficients(&self, n: usize, u: MatRef<'_, C64>) -> Result<CMat> {
        let lv = self.level(n)?;
        if u.nrows() != self.reference.dim() {
            return Err(Error::DimensionMismatch {
                context: "project",
                expected: self.reference.dim(),
                found: u.nrows(),
            });
        }
        let rhs = lv.embedding.adjoint() * dense::matmul(self.reference.gram(), u);
        Ok(lv.space.solve_gram(rhs.as_ref()))
    }

    /// X-orthogonal projection `P_n U` of the columns of `U`.
    pub fn project_block(&self, n: usize, u: MatRef<'_, C64>) -> Result<CMat> {
        let c = self.project_coefficients(n, u)?;
        Ok(self.levels[n].embedding.as_ref() * c.as_ref())
    }

    /// X-orthogonal projection of a single vector.
    pub fn project(&self, n: usize, u: MatRef<'_, C64>) -> Result<CMat> {
        self.project_block(n, u)
    }

    /// Galerkin compression `A_n(λ) = P_n A(λ)|_{X_n}` as an operator function on
    /// the level space.
    pub fn compress(&self, n: usize, f: &HolomorphicOpFunction) -> Result<HolomorphicOpFunction> {
        self.check_function(f)?;
        let lv = self.level(n)?;
        f.congruence(lv.space.clone(), lv.embedding.as_ref())
    }

    /// Compression `Eᴴ F E` of a reference form matrix.
    pub fn compress_form(&self, n: usize, form: MatRef<'_, C64>) -> Result<CMat> {
        let lv = self.level(n)?;
        Ok(lv.embedding.adjoint() * dense::matmul(form, lv.embedding.as_ref()))
    }

    fn check_function(&self, f: &HolomorphicOpFunction) -> Result<()> {
        if f.dim() != self.reference.dim() {
            return Err(Error::DimensionMismatch {
                context: "operator function on hierarchy",
                expected: self.reference.dim(),
                found: f.dim(),
            });
        }
        Ok(())
    }

    /// `sup ‖(I - P_n) u‖_X` over unit `u` in the span of the X-orthonormal
    /// columns of `q`.
    pub fn best_approx_defect(&self, n: usize, q: MatRef<'_, C64>) -> Result<f64> {
        if q.ncols() == 0 {
            return Ok(0.0);
        }
        let gram_q = self.reference.inner_matrix(q, q);
        let id = dense::identity(q.ncols());
        let dev = dense::max_abs((&gram_q - &id).as_ref());
        if dev > ORTHONORMAL_TOL {
            return Err(Error::Usage(format!(
                "best_approx_defect needs X-orthonormal columns (deviation {dev:e})"
            )));
        }
        let r = q.to_owned() - self.project_block(n, q)?;
        let m = self.reference.inner_matrix(r.as_ref(), r.as_ref());
        let w = dense::hermitian_eigenvalues(m.as_ref());
        Ok(w.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    }
}
