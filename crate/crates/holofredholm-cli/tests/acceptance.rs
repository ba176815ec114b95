//! Acceptance suite: one PASS/FAIL line per criterion, full-size models.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use holofredholm::convlab::{
    circle_points, convergence_study, fit_slope, multiplicity_study, pollution_scan, reference_spectrum,
    resolvent_stability_scan, stability_variation, ConvergenceRecord, MultiplicityRecord,
};
use holofredholm::dense;
use holofredholm::linalg::GramSpace;
use holofredholm::models::{build_jordan_family, ModelParams, ModelProblem, ModelRegistry};
use holofredholm::nep::{contour_eigensolve, weighted_mean, Contour, SolverOptions};
use holofredholm::opfun::{HolomorphicOpFunction, ScalarHolo};
use holofredholm::tco::{compatibility_report, CompatibilityReport};
use holofredholm::{c64, CMat, C64};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const RUNTIME_LIMIT: Duration = Duration::from_secs(60);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Timed<T> {
    value: T,
    elapsed: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let t = Instant::now();
    let value = f();
    Timed {
        value,
        elapsed: t.elapsed(),
    }
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn build(name: &str) -> Timed<ModelProblem> {
    timed(|| {
        ModelRegistry::with_defaults()
            .build(name, &ModelParams::default())
            .unwrap_or_else(|e| panic!("building {name}: {e}"))
    })
}

fn sign_changing() -> &'static Timed<ModelProblem> {
    static M: OnceLock<Timed<ModelProblem>> = OnceLock::new();
    M.get_or_init(|| build("sign_changing"))
}

fn sign_changing_asym() -> &'static Timed<ModelProblem> {
    static M: OnceLock<Timed<ModelProblem>> = OnceLock::new();
    M.get_or_init(|| build("sign_changing_asym"))
}

fn metamaterial() -> &'static Timed<ModelProblem> {
    static M: OnceLock<Timed<ModelProblem>> = OnceLock::new();
    M.get_or_init(|| build("metamaterial"))
}

fn jordan_toy() -> &'static Timed<ModelProblem> {
    static M: OnceLock<Timed<ModelProblem>> = OnceLock::new();
    M.get_or_init(|| build("jordan_toy"))
}

fn study(m: &ModelProblem, contour: &Contour) -> ConvergenceRecord {
    convergence_study(&m.hierarchy, &m.function, contour, &m.mesh_widths, &opts())
        .unwrap_or_else(|e| panic!("convergence study on {}: {e}", m.name))
}

/// Convergence record of the smallest sign_changing eigenvalue.
fn sc_record() -> &'static Timed<ConvergenceRecord> {
    static R: OnceLock<Timed<ConvergenceRecord>> = OnceLock::new();
    R.get_or_init(|| {
        let m = &sign_changing().value;
        timed(|| study(m, &m.suggested_contours[0]))
    })
}

/// Multiplicities inside the metamaterial contour enclosing both eigenvalues.
fn meta_multiplicity() -> &'static Timed<MultiplicityRecord> {
    static R: OnceLock<Timed<MultiplicityRecord>> = OnceLock::new();
    R.get_or_init(|| {
        let m = &metamaterial().value;
        let both = m.suggested_contours.last().unwrap();
        timed(|| multiplicity_study(&m.hierarchy, &m.function, both, &opts()).unwrap())
    })
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn criterion_1() -> Verdict {
    let sc = sign_changing();
    let rec = sc_record();
    let sc_time = sc.elapsed + rec.elapsed;
    let sc_ok = rec.value.multiplicity_conserved() && sc_time <= RUNTIME_LIMIT;

    let meta = metamaterial();
    let mult = meta_multiplicity();
    let meta_time = meta.elapsed + mult.elapsed;
    let meta_ok = mult.value.conserved() && mult.value.reference_total == 2 && meta_time <= RUNTIME_LIMIT;

    let toy = jordan_toy();
    let toy_rec = timed(|| study(&toy.value, &toy.value.suggested_contours[0]));
    let toy_time = toy.elapsed + toy_rec.elapsed;
    let toy_ok = toy_rec.value.multiplicity_conserved() && toy_rec.value.reference.dim_g == 2 && toy_time <= RUNTIME_LIMIT;

    let sums = |v: Vec<usize>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    verdict(
        sc_ok && meta_ok && toy_ok,
        format!(
            "sign_changing sums [{}] vs {} in {}; metamaterial sums [{}] vs {} in {}; jordan_toy sums [{}] vs {} in {}",
            sums(rec.value.rows.iter().map(|r| r.mult_sum).collect()),
            rec.value.reference.dim_g,
            secs(sc_time),
            sums(mult.value.rows.iter().map(|r| r.2).collect()),
            mult.value.reference_total,
            secs(meta_time),
            sums(toy_rec.value.rows.iter().map(|r| r.mult_sum).collect()),
            toy_rec.value.reference.dim_g,
            secs(toy_time),
        ),
    )
}

fn within(x: Option<f64>, target: f64, slack: f64) -> bool {
    x.is_some_and(|x| (x - target).abs() <= slack)
}

fn criterion_2() -> Verdict {
    let rec = &sc_record().value;
    let o = rec.fit_orders().unwrap();
    let ratio = rec.ratio_variation(3);
    let pass = within(o.delta, 1.0, 0.2)
        && within(o.delta_star, 1.0, 0.2)
        && within(Some(o.eig), 2.0, 0.2)
        && ratio.is_some_and(|r| r < 10.0);
    verdict(
        pass,
        format!(
            "delta order {:?}, delta* order {:?}, eigenvalue order {}, ratio variation {:?}",
            o.delta, o.delta_star, o.eig, ratio
        ),
    )
}

fn criterion_3() -> Verdict {
    let eps = [1e-2, 1e-4, 1e-6];
    let mut radius = Vec::new();
    let mut mean = Vec::new();
    let mut counts = Vec::new();
    for &e in &eps {
        let m = build_jordan_family(e).unwrap();
        let coarse = m.hierarchy.compress(0, &m.function).unwrap();
        let r = contour_eigensolve(&coarse, &m.suggested_contours[0], &opts()).unwrap();
        let lambda0 = m.reference_eigenvalues[0];
        radius.push(r.lambdas().iter().map(|l| (*l - lambda0).abs()).fold(0.0, f64::max));
        mean.push((weighted_mean(&r, 2).unwrap() - lambda0).abs());
        counts.push(r.total_alg);
    }
    let sr = fit_slope(&eps, &radius);
    let sm = fit_slope(&eps, &mean);
    verdict(
        counts.iter().all(|&c| c == 2) && within(sr, 0.5, 0.1) && within(sm, 1.0, 0.1),
        format!("cluster radius exponent {sr:?}, mean error exponent {sm:?}, cluster sizes {counts:?}"),
    )
}

fn criterion_4() -> Verdict {
    let rec = &sc_record().value;
    let o = rec.fit_orders().unwrap();
    let c = rec.eigvec_constant_variation(3);
    verdict(
        within(o.vec, 1.0, 0.2) && c.is_some_and(|c| c < 10.0),
        format!("eigenvector order {:?}, constant variation {c:?}", o.vec),
    )
}

fn report(m: &ModelProblem) -> CompatibilityReport {
    compatibility_report(&m.hierarchy, &m.function, &m.witness, m.tc_probe, 1e-10).unwrap()
}

fn criterion_5() -> Verdict {
    let pos = report(&sign_changing().value);
    let neg = report(&sign_changing_asym().value);
    let worst = pos.rows.iter().map(|r| r.disc_norm).fold(0.0, f64::max);
    let half = &pos.rows[pos.rows.len() / 2..];
    let bound = 2.0 * pos.reference.t_inv_norm;
    let tn_inv = half.iter().map(|r| r.tn_inv_norm).fold(0.0, f64::max);
    verdict(
        worst <= 1e-10 && pos.verdict && !neg.verdict && tn_inv <= bound,
        format!(
            "positive max discrete norm {worst:e}; negative verdict {} (finest {:e}); max |T_n^-1| {tn_inv} vs 2|T^-1| = {bound}",
            neg.verdict,
            neg.rows.last().unwrap().disc_norm
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [&sign_changing().value, &metamaterial().value] {
        let (c, r) = m.resolvent_circle;
        let rows = resolvent_stability_scan(&m.hierarchy, &m.function, &circle_points(c, r, 16)).unwrap();
        let finite = rows.iter().all(|r| r.sup.is_finite());
        let v = stability_variation(&rows, 3);
        pass &= finite && v.is_some_and(|v| v < 2.0);
        parts.push(format!("{} variation {v:?}", m.name));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_7() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [&sign_changing().value, &metamaterial().value] {
        let w = &m.pollution_window;
        let reference = reference_spectrum(&m.function, w, &opts()).unwrap();
        let rep = pollution_scan(&m.hierarchy, &m.function, w, &reference, &m.mesh_widths, &opts()).unwrap();
        pass &= !reference.is_empty() && rep.clean_on_finest(2);
        let counts: Vec<usize> = rep.rows.iter().map(|r| r.spurious.len()).collect();
        parts.push(format!("{} spurious per level {counts:?} around {} eigenvalues", m.name, reference.len()));
    }
    verdict(pass, parts.join("; "))
}

fn diagonal_pencil_error() -> f64 {
    let d = [1.0, 2.0, 3.0, 5.0];
    let n = d.len();
    let dm = CMat::from_fn(n, n, |i, j| if i == j { c64(d[i], 0.0) } else { c64(0.0, 0.0) });
    let f = HolomorphicOpFunction::from_operators(
        GramSpace::euclidean(n),
        vec![
            (ScalarHolo::constant(c64(1.0, 0.0)), dm),
            (ScalarHolo::polynomial(vec![c64(0.0, 0.0), c64(-1.0, 0.0)]), dense::identity(n)),
        ],
    )
    .unwrap();
    let c = Contour::circle(c64(2.5, 0.0), 2.0, 64).unwrap();
    let mut got = contour_eigensolve(&f, &c, &opts()).unwrap().lambdas();
    if got.len() != 3 {
        return f64::INFINITY;
    }
    got.sort_by(|a, b| a.re.total_cmp(&b.re));
    got.iter()
        .zip(&d[..3])
        .map(|(l, &e)| (*l - c64(e, 0.0)).abs())
        .fold(0.0, f64::max)
}

fn criterion_8() -> Verdict {
    let oracle = &metamaterial().value.reference_eigenvalues;
    let mut got: Vec<C64> = meta_multiplicity().value.reference_eigenvalues.clone();
    got.sort_by(|a, b| a.re.total_cmp(&b.re));
    let meta_err = if got.len() == oracle.len() {
        got.iter().zip(oracle).map(|(a, b)| (*a - *b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let diag_err = diagonal_pencil_error();
    verdict(
        meta_err <= 1e-8 && diag_err <= 1e-12,
        format!("metamaterial max deviation {meta_err:e} from the linearization; diagonal pencil {diag_err:e}"),
    )
}

fn random_matrix(rng: &mut StdRng, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_space(rng: &mut StdRng, n: usize) -> GramSpace {
    let b = random_matrix(rng, n, n);
    let g = b.adjoint() * &b + dense::identity(n);
    GramSpace::new(dense::hermitian_part(g.as_ref())).unwrap()
}

/// Attained ratios `‖Bu‖_X/‖u‖_X`: isotropic samples, then a shrinking local
/// search around the best one.
fn sampled_norm(g: &GramSpace, b: &CMat, rng: &mut StdRng, samples: usize) -> f64 {
    let n = g.dim();
    let ratio = |u: &CMat| g.x_norm((b * u).as_ref()).unwrap() / g.x_norm(u.as_ref()).unwrap();
    let global = samples / 5;
    let mut best_u = random_matrix(rng, n, 1);
    let mut best = ratio(&best_u);
    for _ in 1..global {
        let u = random_matrix(rng, n, 1);
        let r = ratio(&u);
        if r > best {
            best = r;
            best_u = u;
        }
    }
    let mut step = 0.5;
    for _ in global..samples {
        let scale = dense::max_abs(best_u.as_ref());
        let u = &best_u + dense::scaled(random_matrix(rng, n, 1).as_ref(), c64(step * scale, 0.0));
        let r = ratio(&u);
        if r > best {
            best = r;
            best_u = u;
        } else {
            step = (step * 0.995).max(1e-4);
        }
    }
    best
}

fn mobius() -> ScalarHolo {
    ScalarHolo::rational(vec![c64(1.0, 0.0), c64(2.0, 0.0)], vec![c64(-1.0, 0.0), c64(1.0, 0.0)]).unwrap()
}

fn criterion_9() -> Verdict {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut sandwich = 0.0f64;
    let mut upper_ok = true;
    for n in 1..=6 {
        for _ in 0..3 {
            let g = random_space(&mut rng, n);
            let b = random_matrix(&mut rng, n, n);
            let (_, hi) = g.min_max_gsv(b.as_ref()).unwrap();
            let lo = sampled_norm(&g, &b, &mut rng, 10_000);
            upper_ok &= lo <= hi * (1.0 + 1e-12);
            sandwich = sandwich.max(hi / lo - 1.0);
        }
    }

    let n = 3;
    let mut r = |_: usize, _: usize| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let terms = vec![
        (ScalarHolo::constant(c64(1.0, 0.0)), CMat::from_fn(n, n, &mut r)),
        (mobius(), CMat::from_fn(n, n, &mut r)),
        (
            ScalarHolo::polynomial(vec![c64(0.5, 0.0), c64(0.0, -1.0), c64(0.25, 0.0), c64(0.1, 0.0)]),
            CMat::from_fn(n, n, &mut r),
        ),
    ];
    let f = HolomorphicOpFunction::from_operators(GramSpace::euclidean(n), terms).unwrap();
    let h = 1e-5;
    let mut fd_err = 0.0f64;
    for z in [c64(2.0, 0.5), c64(-1.5, 1.0), c64(0.3, -2.0), c64(3.0, 0.0)] {
        let d = f.derivative(z, 1).unwrap();
        let fd = dense::scaled(
            (f.evaluate(z + h).unwrap() - f.evaluate(z - h).unwrap()).as_ref(),
            c64(0.5 / h, 0.0),
        );
        fd_err = fd_err.max(dense::max_abs((&d - &fd).as_ref()) / dense::max_abs(d.as_ref()));
    }

    let mut cauchy_err = 0.0f64;
    for s in [
        mobius(),
        ScalarHolo::rational(vec![c64(1.0, 0.0)], vec![c64(4.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]).unwrap(),
    ] {
        for z in [c64(2.0, 0.0), c64(-0.5, 0.7)] {
            let radius = 0.1 * s.nearest_pole_distance(z);
            for j in 0..=3 {
                let exact = s.derivative(z, j).unwrap();
                let approx = s.derivative_cauchy(z, j, radius, 64).unwrap();
                cauchy_err = cauchy_err.max((exact - approx).abs() / exact.abs().max(1.0));
            }
        }
    }
    verdict(
        upper_ok && sandwich <= 1e-2 && fd_err <= 1e-8 && cauchy_err <= 1e-10,
        format!(
            "gsv sandwich gap {sandwich:e} (sampled bound below: {upper_ok}); finite differences {fd_err:e}; Cauchy {cauchy_err:e}"
        ),
    )
}

fn run_cli(config: &Path, out: &Path) -> (i32, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_holofredholm"))
        .arg("run")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .status()
        .unwrap();
    (status.code().unwrap_or(-1), std::fs::read(out.join("report.csv")).unwrap_or_default())
}

fn criterion_10() -> Verdict {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_reproducibility");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("converge.cfg");
    std::fs::write(
        &config,
        "model.name = sign_changing\nmodel.reference = 512\nlevels = 8,16,32,64\nexperiment = converge\nseed = 7\n",
    )
    .unwrap();
    let (s1, a) = run_cli(&config, &dir.join("first"));
    let (s2, b) = run_cli(&config, &dir.join("second"));
    verdict(
        s1 == 0 && s2 == 0 && !a.is_empty() && a == b,
        format!("exit codes {s1}, {s2}; report.csv {} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("multiplicity conservation", criterion_1),
        ("eigenvalue order law", criterion_2),
        ("defective root law", criterion_3),
        ("eigenvector bound", criterion_4),
        ("T-compatibility verdicts", criterion_5),
        ("resolvent stability", criterion_6),
        ("no pollution", criterion_7),
        ("solver oracle equivalence", criterion_8),
        ("kernel-level oracles", criterion_9),
        ("reproducibility", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
