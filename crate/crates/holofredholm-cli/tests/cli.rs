use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use holofredholm::models::{build_jordan_family, ModelParams, ModelRegistry, ParamSpec};
use holofredholm_cli::{execute, list_models, ExperimentConfig};

const SMALL_SC: &str = "model.reference = 512\nlevels = 8,16,32,64\n";

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(name: &str, config: &str, extra: &[&str]) -> (i32, PathBuf) {
    let dir = scratch(name);
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_holofredholm"))
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&out)
        .args(extra)
        .env("HOLOFREDHOLM_THREADS", "1")
        .status()
        .unwrap();
    (status.code().unwrap(), out)
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn converge_on_jordan_toy() {
    let (code, out) = run("jordan_converge", "model.name = jordan_toy\nexperiment = converge\n", &[]);
    assert_eq!(code, 0, "{}", read(&out, "summary.txt"));
    let csv = read(&out, "report.csv");
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == "kappa").unwrap();
    assert!(lines.any(|l| l.split(',').nth(k) == Some("2")), "{csv}");
    assert!(read(&out, "convergence.svg").starts_with("<svg"));
}

#[test]
fn tcompat_verdicts_set_the_exit_status() {
    let (code, out) = run(
        "tcompat_positive",
        &format!("model.name = sign_changing\n{SMALL_SC}experiment = tcompat\n"),
        &[],
    );
    assert_eq!(code, 0, "{}", read(&out, "summary.txt"));
    assert!(read(&out, "summary.txt").contains("PASS tcompat_verdict"));

    let (code, out) = run(
        "tcompat_negative",
        &format!("model.name = sign_changing_asym\n{SMALL_SC}experiment = tcompat\n"),
        &[],
    );
    assert_eq!(code, 1);
    assert!(read(&out, "summary.txt").contains("FAIL tcompat_verdict"));
}

#[test]
fn config_errors_exit_with_two() {
    for (name, cfg) in [
        ("unknown_key", "model.name = jordan_toy\nexperiment = solve\ncontour.radius = 1\n"),
        ("unknown_model", "model.name = nope\nexperiment = solve\n"),
        ("bad_param", "model.name = jordan_toy\nmodel.sigma = 1\nexperiment = solve\n"),
        ("bad_tolerance", "model.name = jordan_toy\nexperiment = solve\ntolerances.residual = 0\n"),
        ("bad_index", "model.name = jordan_toy\nexperiment = solve\ncontour.index = 4\n"),
    ] {
        let (code, out) = run(name, cfg, &[]);
        assert_eq!(code, 2, "{name}");
        assert!(!out.join("report.csv").exists());
    }
}

#[test]
fn flags_override_the_config() {
    let cfg = "model.name = sign_changing\nmodel.reference = 512\nlevels = 8,16,32,64\nexperiment = stability\n";
    let (code, out) = run("levels_flag", cfg, &["--levels", "16,32,64", "--seed", "3"]);
    assert_eq!(code, 0, "{}", read(&out, "summary.txt"));
    assert_eq!(read(&out, "report.csv").lines().count(), 4);
    assert!(read(&out, "summary.txt").contains("seed: 3"));
    let (code, _) = run("bad_levels_flag", cfg, &["--levels", "16,0"]);
    assert_eq!(code, 2);
}

#[test]
fn solve_and_pollution_on_small_models() {
    let (code, out) = run(
        "solve",
        &format!("model.name = sign_changing\n{SMALL_SC}experiment = solve\ncontour.index = 1\ntolerances.matching = 1e-3\n"),
        &[],
    );
    assert_eq!(code, 0, "{}", read(&out, "summary.txt"));
    assert!(read(&out, "report.csv").starts_with("re_lambda,im_lambda,geo,alg,kappa,residual\n"));

    let (code, out) = run(
        "pollution",
        "model.name = metamaterial\nmodel.reference = 512\nlevels = 8,16,32,64\nexperiment = pollution\n",
        &[],
    );
    assert_eq!(code, 0, "{}", read(&out, "summary.txt"));
}

#[test]
fn list_models_command() {
    let out = Command::new(env!("CARGO_BIN_EXE_holofredholm")).arg("list-models").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split(':').next().unwrap()).collect();
    assert_eq!(names, ["sign_changing", "sign_changing_asym", "metamaterial", "jordan_toy"]);
}

#[test]
fn listing_follows_the_registry() {
    assert_eq!(list_models(&ModelRegistry::empty()), "");
    let mut reg = ModelRegistry::with_defaults();
    reg.register(
        "jordan_family",
        "perturbed Jordan block",
        vec![ParamSpec::new("defect", 1e-4, "squared coarse tilt")],
        Arc::new(|p: &ModelParams| build_jordan_family(p.values.get("defect").copied().unwrap_or(1e-4))),
    )
    .unwrap();
    assert_eq!(list_models(&reg).lines().count(), 5);

    let cfg = ExperimentConfig::parse("model.name = jordan_family\nmodel.defect = 1e-6\nexperiment = solve\n").unwrap();
    let out = execute(&cfg, &reg).unwrap();
    assert!(out.passed(), "{}", out.summary());
    assert!(execute(&cfg, &ModelRegistry::with_defaults()).is_err());
}
