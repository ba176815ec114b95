use holofredholm::convlab::{
    circle_points, convergence_study, fit_slope, multiplicity_study, pollution_scan, reference_analysis,
    reference_spectrum, resolvent_stability_scan, stability_variation, ConvergenceRecord,
};
use holofredholm::models::{build_jordan_family, build_jordan_toy, build_metamaterial, build_sign_changing, MeshLevels};
use holofredholm::nep::SolverOptions;
use holofredholm::{c64, Error};

fn mesh() -> MeshLevels {
    MeshLevels {
        reference: 256,
        levels: vec![4, 8, 16, 32],
    }
}

#[test]
fn slopes_of_power_laws() {
    let h = [0.1, 0.05, 0.025, 0.0125];
    let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
    assert!((fit_slope(&h, &e).unwrap() - 2.0).abs() < 1e-12);
    assert!(fit_slope(&h[..2], &e[..2]).is_none());
    let with_zero = [e[0], 0.0, e[2], e[3]];
    assert!((fit_slope(&h, &with_zero).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn sign_changing_orders_on_a_small_mesh() {
    let m = build_sign_changing(1.0, 0.5, &mesh()).unwrap();
    let opts = SolverOptions::default();
    let rec = convergence_study(&m.hierarchy, &m.function, &m.suggested_contours[0], &m.mesh_widths, &opts).unwrap();
    assert_eq!(rec.reference.kappa, 1);
    assert_eq!(rec.reference.dim_g, 1);
    assert!(rec.multiplicity_conserved());
    assert!(rec.deltas_monotone(1e-6));
    let o = rec.fit_orders().unwrap();
    assert!((o.eig - 2.0).abs() < 0.2, "{o:?}");
    assert!((o.delta.unwrap() - 1.0).abs() < 0.2, "{o:?}");
    assert!((o.vec.unwrap() - 1.0).abs() < 0.2, "{o:?}");
    assert!(rec.ratio_variation(3).unwrap() < 10.0);
    assert!(rec.eigvec_constant_variation(3).unwrap() < 10.0);
    let csv = rec.to_csv();
    assert!(csv.starts_with(ConvergenceRecord::CSV_HEADER));
    assert_eq!(csv.lines().count(), 5);
    assert!(rec.to_svg().starts_with("<svg"));
}

#[test]
fn jordan_toy_record() {
    let m = build_jordan_toy(0.1).unwrap();
    let opts = SolverOptions::default();
    let rec = convergence_study(&m.hierarchy, &m.function, &m.suggested_contours[0], &m.mesh_widths, &opts).unwrap();
    assert_eq!((rec.reference.kappa, rec.reference.dim_g), (2, 2));
    let sums: Vec<usize> = rec.rows.iter().map(|r| r.mult_sum).collect();
    assert_eq!(sums, [1, 2]);
    assert!(rec.multiplicity_conserved());
    assert!(matches!(rec.fit_orders(), Err(Error::InsufficientData { .. })));
}

#[test]
fn root_law_on_the_jordan_family() {
    let opts = SolverOptions::default();
    let eps = [1e-2, 1e-4, 1e-6];
    let mut radius = Vec::new();
    let mut mean = Vec::new();
    for &e in &eps {
        let m = build_jordan_family(e).unwrap();
        let rec =
            convergence_study(&m.hierarchy, &m.function, &m.suggested_contours[0], &m.mesh_widths, &opts).unwrap();
        let coarse = &rec.rows[0];
        radius.push(coarse.err_max().unwrap());
        mean.push(coarse.mean_error.unwrap());
    }
    assert!((fit_slope(&eps, &radius).unwrap() - 0.5).abs() < 0.1, "{radius:?}");
    assert!((fit_slope(&eps, &mean).unwrap() - 1.0).abs() < 0.1, "{mean:?}");
}

#[test]
fn two_eigenvalues_need_the_multiplicity_study() {
    let m = build_metamaterial(&mesh()).unwrap();
    let opts = SolverOptions::default();
    let both = m.suggested_contours.last().unwrap();
    assert!(matches!(reference_analysis(&m.function, both, &opts), Err(Error::Setup(_))));
    let rec = multiplicity_study(&m.hierarchy, &m.function, both, &opts).unwrap();
    assert_eq!(rec.reference_total, 2);
    assert!(rec.conserved());
}

#[test]
fn stability_and_pollution_on_positive_controls() {
    let opts = SolverOptions::default();
    let m = build_sign_changing(1.0, 0.5, &mesh()).unwrap();
    let (c, r) = m.resolvent_circle;
    let rows = resolvent_stability_scan(&m.hierarchy, &m.function, &circle_points(c, r, 8)).unwrap();
    assert!(rows.iter().all(|r| r.sup.is_finite()));
    assert!(stability_variation(&rows, 3).unwrap() < 2.0);

    let w = &m.pollution_window;
    let reference = reference_spectrum(&m.function, w, &opts).unwrap();
    assert_eq!(reference.len(), 2);
    let rep = pollution_scan(&m.hierarchy, &m.function, w, &reference, &m.mesh_widths, &opts).unwrap();
    assert!(rep.clean_on_finest(2));
    assert!(rep.to_csv().starts_with("n,dim,n_eigs,n_spurious,max_spurious_distance\n"));
}

#[test]
fn pollution_flags_eigenvalues_missing_from_the_reference() {
    let opts = SolverOptions::default();
    let m = build_sign_changing(1.0, 0.5, &mesh()).unwrap();
    let w = &m.pollution_window;
    let reference = reference_spectrum(&m.function, w, &opts).unwrap();
    let partial = [reference[0]];
    let rep = pollution_scan(&m.hierarchy, &m.function, w, &partial, &m.mesh_widths, &opts).unwrap();
    assert!(!rep.clean_on_finest(2));
    assert!(rep.rows[rep.rows.len() - 2..].iter().all(|r| r.spurious.len() == 1));
}

#[test]
fn stability_scan_rejects_poles_and_empty_samples() {
    let m = build_metamaterial(&mesh()).unwrap();
    assert!(resolvent_stability_scan(&m.hierarchy, &m.function, &[]).is_err());
    let at_pole = [c64(1.0, 0.0)];
    assert!(matches!(
        resolvent_stability_scan(&m.hierarchy, &m.function, &at_pole),
        Err(Error::Domain { .. })
    ));
}
