//! Convergence experiments over a Galerkin hierarchy: approximation defects,
//! eigenvalue and eigenvector errors, multiplicity bookkeeping, fitted orders,
//! resolvent stability and spectral pollution.

use rayon::prelude::*;

use crate::dense;
use crate::error::{Error, Result};
use crate::galerkin::GalerkinHierarchy;
use crate::nep::{self, Contour, SolverOptions, SpectralResult};
use crate::opfun::HolomorphicOpFunction;
use crate::output::{fmt_f64, loglog_svg, Series};
use crate::{CMat, C64};

/// The single reference eigenvalue inside a contour and its spaces.
#[derive(Clone, Debug)]
pub struct ReferenceEigen {
    pub lambda: C64,
    pub kappa: usize,
    /// Algebraic multiplicity.
    pub dim_g: usize,
    /// X-orthonormal basis of the generalized eigenspace.
    pub eigenspace: CMat,
    /// X-orthonormal basis of the adjoint generalized eigenspace at `conj(λ)`.
    pub adjoint_eigenspace: CMat,
    /// X-orthonormal basis of `ker A(λ)`.
    pub kernel: CMat,
}

/// Solves the reference problem in `contour` and analyses its only eigenvalue.
pub fn reference_analysis(
    f: &HolomorphicOpFunction,
    contour: &Contour,
    opts: &SolverOptions,
) -> Result<ReferenceEigen> {
    let r = nep::contour_eigensolve(f, contour, opts)?;
    if r.eigenvalues.len() != 1 {
        return Err(Error::Setup(format!(
            "the contour must enclose exactly one reference eigenvalue, found {}",
            r.eigenvalues.len()
        )));
    }
    let lambda = r.eigenvalues[0].lambda;
    let info = nep::jordan_analysis(f, lambda, opts.max_chain, opts.rank_tol)?;
    let eigenspace = nep::eigenspace_from(f.space(), &info)?;
    let adj = f.adjoint_function();
    let adj_info = nep::jordan_analysis(&adj, lambda.conj(), opts.max_chain, opts.rank_tol)?;
    let adjoint_eigenspace = nep::eigenspace_from(adj.space(), &adj_info)?;
    Ok(ReferenceEigen {
        lambda,
        kappa: info.kappa,
        dim_g: info.alg_mult,
        eigenspace,
        adjoint_eigenspace,
        kernel: info.kernel,
    })
}

/// `(δ_n, δ_n*)` for every level.
pub fn deltas(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    contour: &Contour,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let re = reference_analysis(f, contour, opts)?;
    let mut d = Vec::with_capacity(h.len());
    let mut ds = Vec::with_capacity(h.len());
    for n in 0..h.len() {
        d.push(h.best_approx_defect(n, re.eigenspace.as_ref())?);
        ds.push(h.best_approx_defect(n, re.adjoint_eigenspace.as_ref())?);
    }
    Ok((d, ds))
}

/// Everything measured on one level.
#[derive(Clone, Debug)]
pub struct LevelRow {
    pub n: usize,
    pub dim: usize,
    pub h: f64,
    pub delta: f64,
    pub delta_star: f64,
    /// Best-approximation defect of the reference kernel.
    pub kernel_delta: f64,
    pub eigenvalues: Vec<C64>,
    /// `|λ0 - λ_n|` per computed eigenvalue.
    pub eig_errors: Vec<f64>,
    /// `|λ0 - λ̂_n|` for the multiplicity-weighted mean, when any were found.
    pub mean_error: Option<f64>,
    /// Worst X-distance of a computed unit kernel vector to the reference kernel.
    pub eigvec_error: Option<f64>,
    /// `Σ alg(λ_n)` over the contour.
    pub mult_sum: usize,
}

impl LevelRow {
    pub fn err_min(&self) -> Option<f64> {
        self.eig_errors.iter().copied().reduce(f64::min)
    }

    pub fn err_max(&self) -> Option<f64> {
        self.eig_errors.iter().copied().reduce(f64::max)
    }
}

fn conserved_after_capture(sums: &[usize], total: usize) -> bool {
    match sums.iter().position(|&m| m > 0) {
        Some(first) => {
            first + 1 < sums.len() && sums[first] <= total && sums[first + 1..].iter().all(|&m| m == total)
        }
        None => total == 0,
    }
}

/// Least-squares slopes of log error against log mesh width.
#[derive(Clone, Copy, Debug)]
pub struct FittedOrders {
    pub eig: f64,
    pub mean: Option<f64>,
    pub vec: Option<f64>,
    pub delta: Option<f64>,
    pub delta_star: Option<f64>,
    pub delta_product: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub reference: ReferenceEigen,
    pub rows: Vec<LevelRow>,
}

fn nan_or(x: Option<f64>) -> String {
    fmt_f64(x.unwrap_or(f64::NAN))
}

impl ConvergenceRecord {
    pub const CSV_HEADER: &'static str = "n,dim,h,delta,delta_star,err_min,err_max,err_mean,vec_err,mult,kappa,dim_g";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.dim,
                fmt_f64(r.h),
                fmt_f64(r.delta),
                fmt_f64(r.delta_star),
                nan_or(r.err_min()),
                nan_or(r.err_max()),
                nan_or(r.mean_error),
                nan_or(r.eigvec_error),
                r.mult_sum,
                self.reference.kappa,
                self.reference.dim_g
            ));
        }
        s
    }

    /// Fits orders on the levels that produced eigenvalues.
    pub fn fit_orders(&self) -> Result<FittedOrders> {
        let usable: Vec<&LevelRow> = self.rows.iter().filter(|r| r.err_max().is_some()).collect();
        let hs: Vec<f64> = usable.iter().map(|r| r.h).collect();
        let pick = |g: &dyn Fn(&LevelRow) -> Option<f64>| -> Vec<f64> {
            usable.iter().map(|r| g(r).unwrap_or(f64::NAN)).collect()
        };
        let eig = fit_slope(&hs, &pick(&|r| r.err_max())).ok_or(Error::InsufficientData {
            usable: usable.len(),
            required: 3,
        })?;
        Ok(FittedOrders {
            eig,
            mean: fit_slope(&hs, &pick(&|r| r.mean_error)),
            vec: fit_slope(&hs, &pick(&|r| r.eigvec_error)),
            delta: fit_slope(&hs, &pick(&|r| Some(r.delta))),
            delta_star: fit_slope(&hs, &pick(&|r| Some(r.delta_star))),
            delta_product: fit_slope(&hs, &pick(&|r| Some(r.delta * r.delta_star))),
        })
    }

    /// The first capturing level carries at most the reference algebraic
    /// multiplicity and every later level carries exactly that.
    pub fn multiplicity_conserved(&self) -> bool {
        let sums: Vec<usize> = self.rows.iter().map(|r| r.mult_sum).collect();
        conserved_after_capture(&sums, self.reference.dim_g)
    }

    /// `δ_n` and `δ_n*` are non-increasing up to a relative `slack`.
    pub fn deltas_monotone(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].delta <= w[0].delta * (1.0 + slack) + 1e-15
                && w[1].delta_star <= w[0].delta_star * (1.0 + slack) + 1e-15
        })
    }

    /// `max/min` of `err_max / (δ δ*)^(1/κ)` over the last `last` levels.
    pub fn ratio_variation(&self, last: usize) -> Option<f64> {
        let k = self.reference.kappa as f64;
        let ratios: Vec<f64> = self
            .tail(last)
            .iter()
            .map(|r| r.err_max().unwrap_or(f64::NAN) / (r.delta * r.delta_star).powf(1.0 / k))
            .collect();
        variation(&ratios)
    }

    /// `max/min` of `vec_err / (err_max + δ^ker)` over the last `last` levels.
    pub fn eigvec_constant_variation(&self, last: usize) -> Option<f64> {
        let ratios: Vec<f64> = self
            .tail(last)
            .iter()
            .map(|r| {
                r.eigvec_error.unwrap_or(f64::NAN) / (r.err_max().unwrap_or(f64::NAN) + r.kernel_delta)
            })
            .collect();
        variation(&ratios)
    }

    fn tail(&self, last: usize) -> &[LevelRow] {
        &self.rows[self.rows.len().saturating_sub(last)..]
    }

    /// Log-log plot of the errors and defects against the mesh width.
    pub fn to_svg(&self) -> String {
        let orders = self.fit_orders().ok();
        let mk = |label: &str, g: &dyn Fn(&LevelRow) -> Option<f64>, slope: Option<f64>| Series {
            label: label.into(),
            points: self.rows.iter().map(|r| (r.h, g(r).unwrap_or(f64::NAN))).collect(),
            slope,
        };
        let series = vec![
            mk("eigenvalue error", &|r| r.err_max(), orders.map(|o| o.eig)),
            mk("mean error", &|r| r.mean_error, orders.and_then(|o| o.mean)),
            mk("eigenvector error", &|r| r.eigvec_error, orders.and_then(|o| o.vec)),
            mk("delta", &|r| Some(r.delta), orders.and_then(|o| o.delta)),
            mk("delta*", &|r| Some(r.delta_star), orders.and_then(|o| o.delta_star)),
        ];
        loglog_svg("Convergence", "h", "error", &series)
    }
}

fn variation(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() || xs.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return None;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    Some(max / min)
}

/// Slope of the least-squares line through `(log h, log e)`, using the pairs
/// with positive finite entries. `None` with fewer than three such pairs.
pub fn fit_slope(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    line_fit(&pts).map(|(slope, _)| slope)
}

fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn check_widths(h: &GalerkinHierarchy, widths: &[f64]) -> Result<()> {
    if widths.len() != h.len() {
        return Err(Error::DimensionMismatch {
            context: "mesh widths per level",
            expected: h.len(),
            found: widths.len(),
        });
    }
    Ok(())
}

fn solve_level(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    n: usize,
    contour: &Contour,
    opts: &SolverOptions,
) -> Result<SpectralResult> {
    let fnn = h.compress(n, f)?;
    nep::contour_eigensolve(&fnn, contour, opts)
}

/// Full convergence record for the single reference eigenvalue in `contour`.
/// Levels are processed concurrently.
pub fn convergence_study(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    contour: &Contour,
    widths: &[f64],
    opts: &SolverOptions,
) -> Result<ConvergenceRecord> {
    check_widths(h, widths)?;
    let reference = reference_analysis(f, contour, opts)?;
    let space = h.reference();
    let rows = (0..h.len())
        .into_par_iter()
        .map(|n| -> Result<LevelRow> {
            let r = solve_level(h, f, n, contour, opts)?;
            let e = h.level(n)?.embedding();
            let mut vec_err: Option<f64> = None;
            for entry in &r.eigenvalues {
                let u = dense::matmul(e, entry.vectors.as_ref());
                let c = space.inner_matrix(u.as_ref(), reference.kernel.as_ref());
                let res = &u - dense::matmul(reference.kernel.as_ref(), c.as_ref());
                let m = space.inner_matrix(res.as_ref(), res.as_ref());
                let w = dense::hermitian_eigenvalues(m.as_ref());
                let worst = w.last().copied().unwrap_or(0.0).max(0.0).sqrt();
                vec_err = Some(vec_err.map_or(worst, |v| v.max(worst)));
            }
            let eigenvalues = r.lambdas();
            let eig_errors = eigenvalues.iter().map(|&l| (l - reference.lambda).abs()).collect();
            let mean_error = if eigenvalues.is_empty() {
                None
            } else {
                Some((nep::weighted_mean(&r, reference.dim_g)? - reference.lambda).abs())
            };
            Ok(LevelRow {
                n,
                dim: h.level(n)?.dim(),
                h: widths[n],
                delta: h.best_approx_defect(n, reference.eigenspace.as_ref())?,
                delta_star: h.best_approx_defect(n, reference.adjoint_eigenspace.as_ref())?,
                kernel_delta: h.best_approx_defect(n, reference.kernel.as_ref())?,
                eigenvalues,
                eig_errors,
                mean_error,
                eigvec_error: vec_err,
                mult_sum: r.total_alg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceRecord { reference, rows })
}

/// Total algebraic multiplicity inside `contour` on the reference space and
/// on every level.
#[derive(Clone, Debug)]
pub struct MultiplicityRecord {
    pub reference_total: usize,
    pub reference_eigenvalues: Vec<C64>,
    /// `(n, dim, total)` per level.
    pub rows: Vec<(usize, usize, usize)>,
}

impl MultiplicityRecord {
    /// Same rule as [`ConvergenceRecord::multiplicity_conserved`].
    pub fn conserved(&self) -> bool {
        let sums: Vec<usize> = self.rows.iter().map(|r| r.2).collect();
        conserved_after_capture(&sums, self.reference_total)
    }
}

pub fn multiplicity_study(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    contour: &Contour,
    opts: &SolverOptions,
) -> Result<MultiplicityRecord> {
    let r = nep::contour_eigensolve(f, contour, opts)?;
    let rows = (0..h.len())
        .into_par_iter()
        .map(|n| -> Result<(usize, usize, usize)> {
            let rn = solve_level(h, f, n, contour, opts)?;
            Ok((n, h.level(n)?.dim(), rn.total_alg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiplicityRecord {
        reference_total: r.total_alg,
        reference_eigenvalues: r.lambdas(),
        rows,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct StabilityRow {
    pub n: usize,
    pub dim: usize,
    /// `max ‖A_n(z)⁻¹‖` over the sample points, infinite if any is singular.
    pub sup: f64,
}

pub const STABILITY_CSV_HEADER: &str = "n,dim,sup_resolvent_norm";

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut s = String::from(STABILITY_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.n, r.dim, fmt_f64(r.sup)));
    }
    s
}

/// `count` equispaced points on the circle of `radius` about `center`.
pub fn circle_points(center: C64, radius: f64, count: usize) -> Vec<C64> {
    (0..count)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            center + C64::new(radius * t.cos(), radius * t.sin())
        })
        .collect()
}

/// Largest level resolvent norm over `points`, per level.
pub fn resolvent_stability_scan(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    points: &[C64],
) -> Result<Vec<StabilityRow>> {
    if points.is_empty() {
        return Err(Error::Usage("no sample points".into()));
    }
    for &z in points {
        f.check_point(z)?;
    }
    (0..h.len())
        .into_par_iter()
        .map(|n| -> Result<StabilityRow> {
            let fnn = h.compress(n, f)?;
            let mut sup = 0.0f64;
            for &z in points {
                let form = fnn.evaluate_form(z)?;
                let (smin, _) = fnn.space().form_min_max_gsv(form.as_ref())?;
                sup = sup.max(if smin > 0.0 { 1.0 / smin } else { f64::INFINITY });
            }
            Ok(StabilityRow {
                n,
                dim: fnn.dim(),
                sup,
            })
        })
        .collect()
}

/// `max/min` of the level suprema over the last `last` levels.
pub fn stability_variation(rows: &[StabilityRow], last: usize) -> Option<f64> {
    let tail: Vec<f64> = rows[rows.len().saturating_sub(last)..].iter().map(|r| r.sup).collect();
    variation(&tail)
}

#[derive(Clone, Debug)]
pub struct PollutionRow {
    pub n: usize,
    pub dim: usize,
    pub eigenvalues: Vec<C64>,
    /// Computed eigenvalues farther than `tol_match` from every reference one.
    pub spurious: Vec<C64>,
    /// Largest distance of a spurious eigenvalue to the reference spectrum.
    pub max_spurious_distance: f64,
}

#[derive(Clone, Debug)]
pub struct PollutionReport {
    pub reference: Vec<C64>,
    /// Matching tolerance per level and reference eigenvalue.
    pub tol_match: Vec<Vec<f64>>,
    pub rows: Vec<PollutionRow>,
}

impl PollutionReport {
    pub const CSV_HEADER: &'static str = "n,dim,n_eigs,n_spurious,max_spurious_distance";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n,
                r.dim,
                r.eigenvalues.len(),
                r.spurious.len(),
                fmt_f64(r.max_spurious_distance)
            ));
        }
        s
    }

    /// No spurious eigenvalues on the last `last` levels.
    pub fn clean_on_finest(&self, last: usize) -> bool {
        self.rows[self.rows.len().saturating_sub(last)..]
            .iter()
            .all(|r| r.spurious.is_empty())
    }
}

/// Eigenvalues of the reference function inside `window`.
pub fn reference_spectrum(f: &HolomorphicOpFunction, window: &Contour, opts: &SolverOptions) -> Result<Vec<C64>> {
    Ok(nep::contour_eigensolve(f, window, opts)?.lambdas())
}

const MIN_MATCH_TOL: f64 = 1e-8;

/// Counts level eigenvalues in `window` that approximate no reference
/// eigenvalue.
///
/// On level `n` each reference eigenvalue gets the tolerance `max(10 e_n, 1e-8)`,
/// where `e_n` is the distance predicted at `h_n` by a line fit of the log
/// nearest distances against log mesh width, or the observed finest distance
/// when fewer than three levels come near it.
pub fn pollution_scan(
    h: &GalerkinHierarchy,
    f: &HolomorphicOpFunction,
    window: &Contour,
    reference: &[C64],
    widths: &[f64],
    opts: &SolverOptions,
) -> Result<PollutionReport> {
    check_widths(h, widths)?;
    let levels = (0..h.len())
        .into_par_iter()
        .map(|n| -> Result<(usize, Vec<C64>)> {
            let r = solve_level(h, f, n, window, opts)?;
            Ok((h.level(n)?.dim(), r.lambdas()))
        })
        .collect::<Result<Vec<_>>>()?;
    let nearest = |eigs: &[C64], z: C64| -> f64 {
        eigs.iter().map(|&l| (l - z).abs()).fold(f64::INFINITY, f64::min)
    };
    let tol_match: Vec<Vec<f64>> = {
        let per_reference: Vec<Vec<f64>> = reference
            .iter()
            .map(|&z| {
                let d: Vec<f64> = levels.iter().map(|(_, e)| nearest(e, z)).collect();
                let pts: Vec<(f64, f64)> = widths
                    .iter()
                    .zip(&d)
                    .filter(|(x, y)| y.is_finite() && **y > 0.0 && **x > 0.0)
                    .map(|(x, y)| (x.ln(), y.ln()))
                    .collect();
                let fit = line_fit(&pts);
                let finest = d.last().copied().filter(|x| x.is_finite()).unwrap_or(0.0);
                widths
                    .iter()
                    .map(|&h| {
                        let predicted = match fit {
                            Some((slope, icpt)) => (icpt + slope * h.ln()).exp(),
                            None => finest,
                        };
                        (10.0 * predicted).max(MIN_MATCH_TOL)
                    })
                    .collect()
            })
            .collect();
        (0..levels.len())
            .map(|n| per_reference.iter().map(|t| t[n]).collect())
            .collect()
    };
    let rows = levels
        .into_iter()
        .enumerate()
        .map(|(n, (dim, eigenvalues))| {
            let mut spurious = Vec::new();
            let mut worst = 0.0f64;
            for &l in &eigenvalues {
                let matched = reference
                    .iter()
                    .zip(&tol_match[n])
                    .any(|(&z, &t)| (l - z).abs() <= t);
                if !matched {
                    spurious.push(l);
                    worst = worst.max(nearest(reference, l));
                }
            }
            PollutionRow {
                n,
                dim,
                eigenvalues,
                spurious,
                max_spurious_distance: worst,
            }
        })
        .collect();
    Ok(PollutionReport {
        reference: reference.to_vec(),
        tol_match,
        rows,
    })
}
