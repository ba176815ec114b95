use holofredholm::dense::{self, from_real};
use holofredholm::galerkin::GalerkinHierarchy;
use holofredholm::linalg::GramSpace;
use holofredholm::models::p1;
use holofredholm::opfun::{HolomorphicOpFunction, ScalarHolo};
use holofredholm::{c64, CMat, Error};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random(rng: &mut StdRng, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_spd(rng: &mut StdRng, n: usize) -> CMat {
    let b = random(rng, n, n);
    let mut g = b.adjoint() * b.as_ref();
    for i in 0..n {
        let v = g.read(i, i) + c64(n as f64, 0.0);
        g.write(i, i, v);
    }
    dense::hermitian_part(g.as_ref())
}

fn e1_hierarchy() -> GalerkinHierarchy {
    let e = from_real(&[&[1.0], &[0.0], &[0.0]]);
    GalerkinHierarchy::new(GramSpace::euclidean(3), vec![e]).unwrap()
}

/// Random nested hierarchy of dimensions 2, 4, 6 inside C^10.
fn nested(rng: &mut StdRng) -> GalerkinHierarchy {
    let g = GramSpace::new(random_spd(rng, 10)).unwrap();
    let basis = random(rng, 10, 6);
    let embeddings = [2, 4, 6]
        .iter()
        .map(|&k| CMat::from_fn(10, k, |i, j| basis.read(i, j)))
        .collect();
    GalerkinHierarchy::new(g, embeddings).unwrap()
}

#[test]
fn projection_onto_first_axis() {
    let h = e1_hierarchy();
    let u = from_real(&[&[1.0], &[2.0], &[3.0]]);
    let p = h.project(0, u.as_ref()).unwrap();
    assert!(dense::max_abs((&p - from_real(&[&[1.0], &[0.0], &[0.0]])).as_ref()) < 1e-15);
    let c = h.project_coefficients(0, u.as_ref()).unwrap();
    assert!((c.read(0, 0) - c64(1.0, 0.0)).abs() < 1e-15);
}

#[test]
fn defect_of_diagonal_vector() {
    let h = e1_hierarchy();
    let s = 0.5f64.sqrt();
    let q = from_real(&[&[s], &[s], &[0.0]]);
    let d = h.best_approx_defect(0, q.as_ref()).unwrap();
    assert!((d - s).abs() < 1e-14);
}

#[test]
fn defect_requires_orthonormal_columns() {
    let h = e1_hierarchy();
    let q = from_real(&[&[2.0], &[0.0], &[0.0]]);
    assert!(matches!(h.best_approx_defect(0, q.as_ref()), Err(Error::Usage(_))));
}

#[test]
fn p1_compression_matches_coarse_assembly() {
    let fine = p1::uniform(-1.0, 1.0, 64);
    let coarse = p1::uniform(-1.0, 1.0, 8);
    let idx: Vec<usize> = (0..=8).map(|i| 8 * i).collect();
    let sigma = |x: f64| if x < 0.0 { 1.0 } else { -0.5 };
    let m = p1::mass(&fine);
    let k = p1::stiffness(&fine, sigma);
    let e = p1::embedding(&fine, &idx);
    let h = GalerkinHierarchy::new(GramSpace::new(m.clone()).unwrap(), vec![e]).unwrap();
    let kc = h.compress_form(0, k.as_ref()).unwrap();
    let mc = h.compress_form(0, m.as_ref()).unwrap();
    assert!(dense::max_abs((&kc - p1::stiffness(&coarse, sigma)).as_ref()) < 1e-12);
    assert!(dense::max_abs((&mc - p1::mass(&coarse)).as_ref()) < 1e-12);
    assert!(dense::max_abs((h.level(0).unwrap().space().gram().to_owned() - p1::mass(&coarse)).as_ref()) < 1e-12);
}

#[test]
fn projection_is_selfadjoint_and_idempotent() {
    let mut rng = StdRng::seed_from_u64(3);
    let h = nested(&mut rng);
    let x = h.reference();
    for n in 0..h.len() {
        for _ in 0..20 {
            let u = random(&mut rng, 10, 1);
            let v = random(&mut rng, 10, 1);
            let pu = h.project(n, u.as_ref()).unwrap();
            let pv = h.project(n, v.as_ref()).unwrap();
            let lhs = x.x_inner(pu.as_ref(), v.as_ref()).unwrap();
            let rhs = x.x_inner(u.as_ref(), pv.as_ref()).unwrap();
            assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
            let ppu = h.project(n, pu.as_ref()).unwrap();
            assert!(dense::max_abs((&ppu - &pu).as_ref()) < 1e-11);
        }
    }
}

#[test]
fn galerkin_consistency() {
    let mut rng = StdRng::seed_from_u64(5);
    let h = nested(&mut rng);
    let a0 = random(&mut rng, 10, 10);
    let a1 = random(&mut rng, 10, 10);
    let f = HolomorphicOpFunction::from_operators(
        h.reference().clone(),
        vec![
            (ScalarHolo::constant(c64(1.0, 0.0)), a0),
            (ScalarHolo::polynomial(vec![c64(0.0, 0.0), c64(1.0, 0.0)]), a1),
        ],
    )
    .unwrap();
    let z = c64(0.3, -0.7);
    let a = f.evaluate(z).unwrap();
    for n in 0..h.len() {
        let fnn = h.compress(n, &f).unwrap();
        let an = fnn.evaluate(z).unwrap();
        let lv = h.level(n).unwrap();
        let e = lv.embedding();
        for _ in 0..20 {
            let u = random(&mut rng, lv.dim(), 1);
            let v = random(&mut rng, lv.dim(), 1);
            let lhs = lv.space().x_inner((&an * &u).as_ref(), v.as_ref()).unwrap();
            let eu = e * u.as_ref();
            let ev = e * v.as_ref();
            let rhs = h.reference().x_inner((&a * &eu).as_ref(), ev.as_ref()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn defects_decrease_along_the_hierarchy() {
    let mut rng = StdRng::seed_from_u64(9);
    let h = nested(&mut rng);
    for _ in 0..10 {
        let u = random(&mut rng, 10, 2);
        let q = h.reference().m_orthonormalize(u.as_ref()).unwrap().q;
        let d: Vec<f64> = (0..h.len()).map(|n| h.best_approx_defect(n, q.as_ref()).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{d:?}");
    }
}

#[test]
fn rejects_non_nested_levels() {
    let e0 = from_real(&[&[1.0], &[0.0], &[0.0]]);
    let e1 = from_real(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
    let r = GalerkinHierarchy::new(GramSpace::euclidean(3), vec![e0, e1]);
    assert!(matches!(r, Err(Error::NotNested { level: 0, .. })));
}

#[test]
fn rejects_non_increasing_or_deficient_levels() {
    let e0 = from_real(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
    let e1 = from_real(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
    assert!(GalerkinHierarchy::new(GramSpace::euclidean(3), vec![e0, e1]).is_err());
    let deficient = from_real(&[&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]]);
    assert!(GalerkinHierarchy::new(GramSpace::euclidean(3), vec![deficient]).is_err());
    let wrong_rows = from_real(&[&[1.0], &[0.0]]);
    assert!(matches!(
        GalerkinHierarchy::new(GramSpace::euclidean(3), vec![wrong_rows]),
        Err(Error::DimensionMismatch { .. })
    ));
}
