//! Experiment driver behind the `holofredholm` binary.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;

use holofredholm::convlab::{
    circle_points, convergence_study, pollution_scan, reference_spectrum, resolvent_stability_scan, stability_csv,
    stability_variation,
};
use holofredholm::models::{ModelParams, ModelProblem, ModelRegistry};
use holofredholm::nep::{contour_eigensolve, Contour, SolverOptions};
use holofredholm::tco::compatibility_report;
use holofredholm::{c64, Error};
use thiserror::Error;

pub use config::{ConfigError, Experiment, ExperimentConfig};

/// Levels inspected by the variation checks.
const TAIL: usize = 3;
/// Levels inspected by the pollution check.
const FINEST: usize = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("model: {0}")]
    Model(Error),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Model(_) => 2,
            RunError::Io(_) => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Result of one experiment: verdicts plus the artifacts to write.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub model: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub report_csv: String,
    pub svg: Option<String>,
}

impl Outcome {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            model: cfg.model.clone(),
            experiment: cfg.experiment,
            seed: cfg.seed,
            checks: Vec::new(),
            notes: Vec::new(),
            report_csv: String::new(),
            svg: None,
        }
    }

    fn check(&mut self, name: &'static str, pass: bool, detail: String) {
        self.checks.push(Check { name, pass, detail });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model);
        let _ = writeln!(s, "experiment: {}", self.experiment);
        let _ = writeln!(s, "seed: {}", self.seed);
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        if failed.is_empty() {
            let _ = writeln!(s, "status: pass");
        } else {
            let _ = writeln!(s, "status: fail ({})", failed.join(", "));
        }
        s
    }

    /// Writes `report.csv`, `summary.txt` and, when present, `convergence.svg`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), &self.report_csv)?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        if let Some(svg) = &self.svg {
            std::fs::write(dir.join("convergence.svg"), svg)?;
        }
        Ok(())
    }
}

pub fn list_models(registry: &ModelRegistry) -> String {
    registry.listing()
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    let d = SolverOptions::default();
    let t = &cfg.tolerances;
    SolverOptions {
        probe_rank: cfg.solver.probe_rank.unwrap_or(d.probe_rank),
        rank_tol: t.rank_tol,
        cluster_tol: t.cluster_tol,
        p_init: cfg.solver.p_init.unwrap_or(d.p_init),
        p_max: cfg.solver.p_max.unwrap_or(d.p_max),
        seed: cfg.seed,
        max_chain: cfg.solver.max_chain.unwrap_or(d.max_chain),
        cond_limit: t.cond_limit,
    }
}

fn value_error(key: &str, reason: String) -> RunError {
    RunError::Config(ConfigError::Value { key: key.into(), reason })
}

/// Contour from explicit keys, else the suggested contour `contour.index`
/// (default 0), else `fallback`.
fn resolve_contour(cfg: &ExperimentConfig, m: &ModelProblem, fallback: Option<&Contour>) -> Result<Contour, RunError> {
    let spec = &cfg.contour;
    if let (Some(re), Some(rx)) = (spec.center_re, spec.rx) {
        let nodes = spec.nodes.unwrap_or_else(|| m.suggested_contours.first().map_or(64, |c| c.nodes));
        let center = c64(re, spec.center_im.unwrap_or(0.0));
        return Contour::ellipse(center, rx, spec.ry.unwrap_or(rx), nodes)
            .map_err(|e| value_error("contour", e.to_string()));
    }
    let base = match (spec.index, fallback) {
        (None, Some(c)) => *c,
        (index, _) => {
            let k = index.unwrap_or(0);
            m.suggested_contours.get(k).cloned().ok_or_else(|| {
                value_error(
                    "contour.index",
                    format!("model '{}' suggests {} contours", m.name, m.suggested_contours.len()),
                )
            })?
        }
    };
    match spec.nodes {
        Some(n) => base.with_nodes(n).map_err(|e| value_error("contour.nodes", e.to_string())),
        None => Ok(base),
    }
}

fn build_model(cfg: &ExperimentConfig, registry: &ModelRegistry) -> Result<ModelProblem, RunError> {
    let params = ModelParams {
        values: cfg.params.clone(),
        levels: cfg.levels.clone(),
    };
    registry.build(&cfg.model, &params).map_err(RunError::Model)
}

/// Builds the model and runs the configured experiment. Numerical failures
/// inside the experiment become a failing `experiment` check.
pub fn execute(cfg: &ExperimentConfig, registry: &ModelRegistry) -> Result<Outcome, RunError> {
    let m = build_model(cfg, registry)?;
    let opts = solver_options(cfg);
    let mut out = Outcome::new(cfg);
    let contour = match cfg.experiment {
        Experiment::Pollution => Some(resolve_contour(cfg, &m, Some(&m.pollution_window))?),
        Experiment::Solve | Experiment::Converge => Some(resolve_contour(cfg, &m, None)?),
        Experiment::Tcompat | Experiment::Stability => None,
    };
    let result = match cfg.experiment {
        Experiment::Solve => solve(cfg, &m, contour.as_ref().unwrap(), &opts, &mut out),
        Experiment::Tcompat => tcompat(cfg, &m, &mut out),
        Experiment::Converge => converge(cfg, &m, contour.as_ref().unwrap(), &opts, &mut out),
        Experiment::Stability => stability(cfg, &m, &mut out),
        Experiment::Pollution => pollution(&m, contour.as_ref().unwrap(), &opts, &mut out),
    };
    if let Err(e) = result {
        out.check("experiment", false, e.to_string());
    }
    Ok(out)
}

/// Parses, runs and writes artifacts; returns the process exit code.
pub fn run_file(path: &Path, overrides: &Overrides, registry: &ModelRegistry) -> Result<i32, RunError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    overrides.apply(&mut cfg);
    let out = execute(&cfg, registry)?;
    out.write(&cfg.output_dir)?;
    Ok(out.exit_code())
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<std::path::PathBuf>,
    pub seed: Option<u64>,
    pub levels: Option<Vec<usize>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = &self.levels {
            cfg.levels = Some(l.clone());
        }
    }
}

fn solve(
    cfg: &ExperimentConfig,
    m: &ModelProblem,
    contour: &Contour,
    opts: &SolverOptions,
    out: &mut Outcome,
) -> holofredholm::Result<()> {
    let r = contour_eigensolve(&m.function, contour, opts)?;
    out.report_csv = r.to_csv();
    let tol = &cfg.tolerances;
    let worst = r
        .eigenvalues
        .iter()
        .map(|e| e.residual / e.norm)
        .fold(0.0f64, f64::max);
    out.check(
        "residual",
        worst <= tol.residual,
        format!("largest relative residual {worst:e}, bound {:e}", tol.residual),
    );
    let inside: Vec<_> = m.reference_eigenvalues.iter().filter(|z| contour.contains(**z)).collect();
    let missing: Vec<String> = inside
        .iter()
        .filter(|&&&z| {
            !r.eigenvalues
                .iter()
                .any(|e| (e.lambda - z).abs() <= tol.matching * (1.0 + z.abs()))
        })
        .map(|z| z.to_string())
        .collect();
    out.check(
        "reference_eigenvalues_found",
        missing.is_empty(),
        format!(
            "{} reference eigenvalues inside the contour, {} computed, missing [{}]",
            inside.len(),
            r.eigenvalues.len(),
            missing.join(", ")
        ),
    );
    Ok(())
}

fn tcompat(cfg: &ExperimentConfig, m: &ModelProblem, out: &mut Outcome) -> holofredholm::Result<()> {
    let lambda = match cfg.probe {
        (None, None) => m.tc_probe,
        (re, im) => c64(re.unwrap_or(0.0), im.unwrap_or(0.0)),
    };
    let rep = compatibility_report(&m.hierarchy, &m.function, &m.witness, lambda, cfg.tolerances.tcompat)?;
    out.report_csv = rep.to_csv();
    let finest = rep.rows.last().map_or(f64::NAN, |r| r.disc_norm);
    out.check(
        "tcompat_verdict",
        rep.verdict,
        format!("finest discrete norm {finest:e}, tolerance {:e}", rep.tol),
    );
    out.check(
        "tn_bounds",
        rep.tn_bounds_hold(),
        format!(
            "reference |T| = {}, |T^-1| = {}",
            rep.reference.t_norm, rep.reference.t_inv_norm
        ),
    );
    out.check(
        "stability_finite",
        rep.stability_finite(),
        format!("reference stability {}", rep.reference.stability),
    );
    if m.negative_control {
        out.notes.push(format!("'{}' is a negative control", m.name));
    }
    Ok(())
}

fn converge(
    cfg: &ExperimentConfig,
    m: &ModelProblem,
    contour: &Contour,
    opts: &SolverOptions,
    out: &mut Outcome,
) -> holofredholm::Result<()> {
    let rec = convergence_study(&m.hierarchy, &m.function, contour, &m.mesh_widths, opts)?;
    out.report_csv = rec.to_csv();
    out.svg = Some(rec.to_svg());
    let tol = &cfg.tolerances;
    let kappa = rec.reference.kappa;
    out.notes.push(format!(
        "reference eigenvalue {}, kappa {}, dim G {}",
        rec.reference.lambda, kappa, rec.reference.dim_g
    ));
    let sums: Vec<String> = rec.rows.iter().map(|r| r.mult_sum.to_string()).collect();
    out.check(
        "multiplicity_conserved",
        rec.multiplicity_conserved(),
        format!("level sums [{}], reference {}", sums.join(", "), rec.reference.dim_g),
    );
    out.check(
        "deltas_monotone",
        rec.deltas_monotone(tol.monotone_slack),
        format!("relative slack {:e}", tol.monotone_slack),
    );
    match rec.fit_orders() {
        Ok(o) => {
            if let Some(dp) = o.delta_product {
                let predicted = dp / kappa as f64;
                out.check(
                    "eigenvalue_order",
                    (o.eig - predicted).abs() <= tol.order_slack,
                    format!("fitted {}, predicted {predicted} from the delta product", o.eig),
                );
            }
            if let Some(mean) = o.mean {
                out.notes.push(format!("mean error order {mean}"));
            }
            if kappa == 1 {
                if let (Some(v), Some(d)) = (o.vec, o.delta) {
                    out.check(
                        "eigenvector_order",
                        (v - d).abs() <= tol.order_slack,
                        format!("fitted {v}, delta order {d}"),
                    );
                }
            }
        }
        Err(Error::InsufficientData { usable, required }) => out.notes.push(format!(
            "orders not fitted: {usable} usable levels, {required} required"
        )),
        Err(e) => return Err(e),
    }
    match rec.ratio_variation(TAIL) {
        Some(v) => out.check(
            "error_ratio_variation",
            v < tol.ratio_variation,
            format!("max/min of err/(delta delta*)^(1/kappa) = {v}"),
        ),
        None => out
            .notes
            .push("error ratio not formed: a level error or delta vanishes".into()),
    }
    if kappa == 1 {
        if let Some(v) = rec.eigvec_constant_variation(TAIL) {
            out.check(
                "eigenvector_constant_variation",
                v < tol.eigvec_variation,
                format!("max/min of vec_err/(err + delta) = {v}"),
            );
        }
    }
    Ok(())
}

fn stability(cfg: &ExperimentConfig, m: &ModelProblem, out: &mut Outcome) -> holofredholm::Result<()> {
    let s = &cfg.stability;
    let (c0, r0) = m.resolvent_circle;
    let center = c64(s.center_re.unwrap_or(c0.re), s.center_im.unwrap_or(c0.im));
    let points = circle_points(center, s.radius.unwrap_or(r0), s.points.unwrap_or(16));
    let rows = resolvent_stability_scan(&m.hierarchy, &m.function, &points)?;
    out.report_csv = stability_csv(&rows);
    out.check(
        "stability_finite",
        rows.iter().all(|r| r.sup.is_finite()),
        format!("circle center {center}, {} points", points.len()),
    );
    match stability_variation(&rows, TAIL) {
        Some(v) => out.check(
            "stability_variation",
            v < cfg.tolerances.stability_variation,
            format!("max/min over the last {TAIL} levels = {v}"),
        ),
        None => out.check("stability_variation", false, "a level resolvent is unbounded".into()),
    }
    Ok(())
}

fn pollution(m: &ModelProblem, window: &Contour, opts: &SolverOptions, out: &mut Outcome) -> holofredholm::Result<()> {
    let reference = reference_spectrum(&m.function, window, opts)?;
    let rep = pollution_scan(&m.hierarchy, &m.function, window, &reference, &m.mesh_widths, opts)?;
    out.report_csv = rep.to_csv();
    let counts: Vec<String> = rep.rows.iter().map(|r| r.spurious.len().to_string()).collect();
    out.check(
        "pollution_free",
        rep.clean_on_finest(FINEST),
        format!(
            "{} reference eigenvalues in the window, spurious per level [{}]",
            reference.len(),
            counts.join(", ")
        ),
    );
    Ok(())
}
