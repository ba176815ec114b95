use holofredholm::dense::{self, from_real};
use holofredholm::linalg::GramSpace;
use holofredholm::{c64, CMat, Error};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn vec2(a: f64, b: f64) -> CMat {
    dense::column(&[c64(a, 0.0), c64(b, 0.0)])
}

fn random_matrix(rng: &mut StdRng, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_spd(rng: &mut StdRng, n: usize) -> GramSpace {
    let b = random_matrix(rng, n, n);
    let g = b.adjoint() * &b + dense::identity(n);
    GramSpace::new(dense::hermitian_part(g.as_ref())).unwrap()
}

#[test]
fn x_inner_examples() {
    let e = GramSpace::euclidean(2);
    assert_eq!(e.x_inner(vec2(1.0, 0.0).as_ref(), vec2(0.0, 1.0).as_ref()).unwrap(), c64(0.0, 0.0));
    assert_eq!(e.x_inner(vec2(1.0, 1.0).as_ref(), vec2(1.0, 1.0).as_ref()).unwrap(), c64(2.0, 0.0));
    let g = GramSpace::new(from_real(&[&[2.0, 0.0], &[0.0, 3.0]])).unwrap();
    assert_eq!(g.x_inner(vec2(1.0, 1.0).as_ref(), vec2(1.0, 1.0).as_ref()).unwrap(), c64(5.0, 0.0));
}

#[test]
fn x_inner_rejects_wrong_length() {
    let e = GramSpace::euclidean(2);
    let u = dense::column(&[c64(1.0, 0.0); 3]);
    assert!(matches!(
        e.x_inner(u.as_ref(), u.as_ref()),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn gram_validation() {
    assert!(matches!(
        GramSpace::new(from_real(&[&[1.0, 0.5], &[0.0, 1.0]])),
        Err(Error::NotHermitian { .. })
    ));
    assert!(matches!(
        GramSpace::new(from_real(&[&[1.0, 0.0], &[0.0, -1.0]])),
        Err(Error::NotPositiveDefinite)
    ));
}

#[test]
fn x_adjoint_examples() {
    let mut rng = StdRng::seed_from_u64(1);
    let b = random_matrix(&mut rng, 3, 3);
    let e = GramSpace::euclidean(3);
    let bs = e.x_adjoint(b.as_ref()).unwrap();
    assert!(dense::max_abs((&bs - b.adjoint()).as_ref()) < 1e-15);

    let g = GramSpace::new(from_real(&[&[2.0, 0.0], &[0.0, 1.0]])).unwrap();
    let b = from_real(&[&[0.0, 1.0], &[0.0, 0.0]]);
    let bs = g.x_adjoint(b.as_ref()).unwrap();
    let expected = from_real(&[&[0.0, 0.0], &[2.0, 0.0]]);
    assert!(dense::max_abs((&bs - &expected).as_ref()) < 1e-15);

    // Self-adjoint with respect to the Gram matrix.
    let sa = g.operator_of(from_real(&[&[1.0, 2.0], &[2.0, 5.0]]).as_ref()).unwrap();
    let sas = g.x_adjoint(sa.as_ref()).unwrap();
    assert!(dense::max_abs((&sas - &sa).as_ref()) < 1e-14);
}

#[test]
fn x_adjoint_involution_and_identity() {
    let mut rng = StdRng::seed_from_u64(2);
    for trial in 0..100 {
        let n = 1 + trial % 6;
        let g = random_spd(&mut rng, n);
        let b = random_matrix(&mut rng, n, n);
        let u = random_matrix(&mut rng, n, 1);
        let v = random_matrix(&mut rng, n, 1);
        let bs = g.x_adjoint(b.as_ref()).unwrap();
        let bss = g.x_adjoint(bs.as_ref()).unwrap();
        assert!(dense::max_abs((&bss - &b).as_ref()) < 1e-12 * (1.0 + dense::max_abs(b.as_ref())) * 10.0);
        let bu = &b * &u;
        let bsv = &bs * &v;
        let lhs = g.x_inner(bu.as_ref(), v.as_ref()).unwrap();
        let rhs = g.x_inner(u.as_ref(), bsv.as_ref()).unwrap();
        let scale = g.x_norm(bu.as_ref()).unwrap() * g.x_norm(v.as_ref()).unwrap() + 1.0;
        assert!((lhs - rhs).abs() < 1e-12 * scale, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn min_max_gsv_examples() {
    let e = GramSpace::euclidean(2);
    let (lo, hi) = e.min_max_gsv(from_real(&[&[1.0, 0.0], &[0.0, 3.0]]).as_ref()).unwrap();
    assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
    let (lo, hi) = e.min_max_gsv(dense::zeros(2, 2).as_ref()).unwrap();
    assert_eq!((lo, hi), (0.0, 0.0));
    let g = GramSpace::new(from_real(&[&[4.0, 0.0], &[0.0, 1.0]])).unwrap();
    let (lo, hi) = g.min_max_gsv(dense::identity(2).as_ref()).unwrap();
    assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
}

#[test]
fn min_max_gsv_singular_and_inverse() {
    let mut rng = StdRng::seed_from_u64(3);
    let g = random_spd(&mut rng, 4);
    let b = random_matrix(&mut rng, 4, 4);
    let (lo, _) = g.min_max_gsv(b.as_ref()).unwrap();
    let binv = faer::prelude::SpSolver::solve(&b.partial_piv_lu(), dense::identity(4));
    let (_, hi_inv) = g.min_max_gsv(binv.as_ref()).unwrap();
    assert!((lo * hi_inv - 1.0).abs() < 1e-10);
    let rank1 = &b.col(0).as_2d().to_owned() * b.row(1).as_2d();
    assert_eq!(g.min_max_gsv(rank1.as_ref()).unwrap().0, 0.0);
}

#[test]
fn m_orthonormalize_examples() {
    let e = GramSpace::euclidean(2);
    let q = e.m_orthonormalize(vec2(2.0, 0.0).as_ref()).unwrap();
    assert!(dense::max_abs((&q.q - vec2(1.0, 0.0)).as_ref()) < 1e-15);
    assert_eq!(q.dropped, 0);

    let v = dense::hcat(&[vec2(1.0, 2.0).as_ref(), vec2(1.0, 2.0).as_ref()]);
    let q = e.m_orthonormalize(v.as_ref()).unwrap();
    assert_eq!((q.q.ncols(), q.dropped), (1, 1));

    let g = GramSpace::new(from_real(&[&[4.0, 0.0], &[0.0, 1.0]])).unwrap();
    let q = g.m_orthonormalize(vec2(1.0, 0.0).as_ref()).unwrap();
    assert!(dense::max_abs((&q.q - vec2(0.5, 0.0)).as_ref()) < 1e-15);
}

#[test]
fn m_orthonormalize_is_orthonormal() {
    let mut rng = StdRng::seed_from_u64(4);
    let g = random_spd(&mut rng, 6);
    let v = random_matrix(&mut rng, 6, 4);
    let q = g.m_orthonormalize(v.as_ref()).unwrap().q;
    let m = g.inner_matrix(q.as_ref(), q.as_ref());
    assert!(dense::max_abs((&m - dense::identity(4)).as_ref()) < 1e-12);
}

/// Random-sampling lower bound for `‖B‖_X`: isotropic samples, then random
/// perturbations of the best sample with a shrinking step. Every evaluated
/// ratio is attained, so the result never exceeds the true norm.
fn brute_force_max(g: &GramSpace, b: &CMat, rng: &mut StdRng, samples: usize) -> f64 {
    let n = g.dim();
    let ratio = |u: &CMat| {
        let bu = b * u;
        g.x_norm(bu.as_ref()).unwrap() / g.x_norm(u.as_ref()).unwrap()
    };
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
        let d = random_matrix(rng, n, 1);
        let u = &best_u + dense::scaled(d.as_ref(), c64(step * scale, 0.0));
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gsv_sandwich(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_spd(&mut rng, n);
        let b = random_matrix(&mut rng, n, n);
        let (_, hi) = g.min_max_gsv(b.as_ref()).unwrap();
        let brute = brute_force_max(&g, &b, &mut rng, 10_000);
        prop_assert!(brute <= hi * (1.0 + 1e-12));
        prop_assert!(hi <= brute * (1.0 + 1e-2), "brute {} computed {}", brute, hi);
    }

    #[test]
    fn x_inner_conjugate_symmetric(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_spd(&mut rng, n);
        let u = random_matrix(&mut rng, n, 1);
        let v = random_matrix(&mut rng, n, 1);
        let a = g.x_inner(u.as_ref(), v.as_ref()).unwrap();
        let b = g.x_inner(v.as_ref(), u.as_ref()).unwrap();
        prop_assert!((a - b.conj()).abs() < 1e-12 * (1.0 + a.abs()));
        prop_assert!(g.x_inner(u.as_ref(), u.as_ref()).unwrap().re > 0.0);
    }
}

#[test]
fn large_gram_paths_agree_with_dense() {
    // Tridiagonal Gram above the dense SVD limit exercises the banded solves and
    // the squared singular value path.
    let n = 700;
    let g = CMat::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => c64(2.0, 0.0),
        1 => c64(-1.0, 0.0),
        _ => c64(0.0, 0.0),
    });
    let space = GramSpace::new(g.clone()).unwrap();
    let b = CMat::from_fn(n, 3, |i, j| c64((i * (j + 1)) as f64 % 7.0, j as f64));
    let x = space.solve_gram(b.as_ref());
    assert!(dense::max_abs((&g * &x - &b).as_ref()) < 1e-9 * dense::max_abs(b.as_ref()));
    let (lo, hi) = space.min_max_gsv(dense::scaled(dense::identity(n).as_ref(), c64(3.0, 0.0)).as_ref()).unwrap();
    assert!((lo - 3.0).abs() < 1e-8 && (hi - 3.0).abs() < 1e-8);
}
