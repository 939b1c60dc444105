use evocore::discrete_ops::*;
use evocore::linalg::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn affine_nodes(n: usize, h: f64) -> CMat {
    CMat::from_fn(n + 1, 1, |k, _| c(k as f64 * h))
}

#[test]
fn interval_gradient_of_constant_and_linear() {
    let q = build_interval_ops(16, 1.0 / 16.0).unwrap();
    let ones = CMat::from_element(17, 1, c(1.0));
    assert_eq!(fro(&(&q.gmax * ones)), 0.0);
    let g = &q.gmax * affine_nodes(16, 1.0 / 16.0);
    for k in 0..16 {
        assert!((g[(k, 0)] - c(1.0)).norm() < 1e-12);
    }
}

#[test]
fn interval_duality_is_exact() {
    for n in [2usize, 3, 8, 16, 32, 64] {
        let q = build_interval_ops(n, 1.0 / n as f64).unwrap();
        let r = verify_duality(&q);
        assert!(!r.flagged && r.max_defect <= 1e-13, "n={n}: {r:?}");
        assert!(duality_defect_random(&q, 100, 1) <= 1e-13);
        assert_eq!(r.inclusion_defect, 0.0);
    }
}

#[test]
fn full_interior_breaks_duality() {
    let q = build_interval_ops(16, 1.0 / 16.0).unwrap().with_full_interior();
    let r = verify_duality(&q);
    assert!(r.flagged && r.max_defect > 1e-3, "{r:?}");
}

#[test]
fn interval_poincare_constant() {
    let n = 16usize;
    let q = build_interval_ops(n, 1.0 / n as f64).unwrap();
    let want = 2.0 * n as f64 * (std::f64::consts::PI / (2.0 * n as f64)).sin();
    let got = verify_duality(&q).poincare;
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    // dense SVD cross-check: interior gradient is a plain scaled difference matrix
    let svd = singular_values(&q.g_int());
    assert!((svd.last().unwrap() - want).abs() < 1e-10);
}

#[test]
fn grid_2d_duality_and_poincare() {
    let q = build_grid_ops_2d(8, 8, 1.0 / 8.0).unwrap();
    let ones = CMat::from_element(q.n0(), 1, c(1.0));
    assert!(fro(&(&q.gmax * ones)) < 1e-12);
    let r = verify_duality(&q);
    assert!(!r.flagged, "{r:?}");
    assert!(duality_defect_random(&q, 100, 2) <= 1e-13);
    assert!(r.poincare > 1.0, "{r:?}");
    assert_eq!(q.boundary_h0().len(), 32);
    assert_eq!(q.boundary_h1().len(), 32);
}

#[test]
fn grid_2d_rectangular() {
    let q = build_grid_ops_2d(4, 6, 0.25).unwrap();
    assert!(!verify_duality(&q).flagged);
}

#[test]
fn elasticity_1d_equals_interval() {
    let a = build_sym_elasticity_ops(1, &[12], 1.0 / 12.0).unwrap();
    let b = build_interval_ops(12, 1.0 / 12.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn elasticity_2d_rigid_motions_and_duality() {
    let (nx, ny, h) = (6usize, 5usize, 0.2);
    let q = build_sym_elasticity_ops(2, &[nx, ny], h).unwrap();
    let nn = (nx + 1) * (ny + 1);
    let field = |f: &dyn Fn(f64, f64) -> (f64, f64)| {
        let mut u = CMat::zeros(2 * nn, 1);
        for j in 0..=ny {
            for i in 0..=nx {
                let (a, b) = f(i as f64 * h, j as f64 * h);
                u[(i + (nx + 1) * j, 0)] = c(a);
                u[(nn + i + (nx + 1) * j, 0)] = c(b);
            }
        }
        u
    };
    for u in [field(&|_, _| (1.0, 0.0)), field(&|_, _| (0.0, 1.0)), field(&|x, y| (-y, x))] {
        assert!(fro(&(&q.gmax * u)) < 1e-12);
    }
    let kernel = nullspace(&q.gmax, 1e-10);
    assert_eq!(kernel.ncols(), 3);
    let shear = field(&|_, y| (y, 0.0));
    assert!(fro(&(&q.gmax * shear)) > 0.1);
    let r = verify_duality(&q);
    assert!(!r.flagged, "{r:?}");
    assert!(duality_defect_random(&q, 100, 3) <= 1e-13);
}

#[test]
fn elasticity_trace_product() {
    let (nx, ny, h) = (4usize, 4usize, 0.25);
    let q = build_sym_elasticity_ops(2, &[nx, ny], h).unwrap();
    // reduced H1 product against Σ tr(Φ*Ψ) h² for pointwise symmetric fields
    let npts = q.n1();
    let mut red = Complex64::new(0.0, 0.0);
    let mut tr = Complex64::new(0.0, 0.0);
    for p in 0..npts {
        let s = p as f64;
        let phi = [[c(s.sin()), Complex64::new(0.3, s)], [Complex64::new(0.3, s), c(s.cos())]];
        let psi = [[c(1.0 + s), Complex64::new(-s, 0.2)], [Complex64::new(-s, 0.2), c(0.5)]];
        let (a, b) = (voigt_reduce(phi), voigt_reduce(psi));
        for k in 0..3 {
            red += a[k].conj() * b[k] * (h * h);
        }
        for i in 0..2 {
            for j in 0..2 {
                tr += phi[j][i].conj() * psi[j][i] * (h * h);
            }
        }
    }
    assert!((red - tr).norm() <= 1e-13 * tr.norm().max(1.0));
    assert!(q.w1.iter().all(|&w| w == h * h));
}

#[test]
fn korn_constant_is_finite() {
    let q = build_sym_elasticity_ops(2, &[6, 6], 1.0 / 6.0).unwrap();
    let k = korn_constant(&q).unwrap();
    assert!(k.is_finite() && k >= 1.0, "{k}");
    assert!(korn_constant(&build_interval_ops(4, 0.25).unwrap()).is_err());
}

#[test]
fn range_projector_is_orthogonal() {
    for q in [
        build_interval_ops(8, 0.125).unwrap(),
        build_sym_elasticity_ops(2, &[4, 4], 0.25).unwrap(),
    ] {
        let p = range_projector(&q);
        let w1 = q.w1_mat();
        assert!(fro(&(&p * &p - &p)) <= 1e-12 * fro(&p));
        // self-adjoint in the H1 metric: W1 P = Pᴴ W1
        assert!(fro(&(&w1 * &p - p.adjoint() * &w1)) <= 1e-12 * fro(&(&w1 * &p)));
        assert!(fro(&(&p * &q.gmax - &q.gmax)) <= 1e-10 * fro(&q.gmax));
    }
}

#[test]
fn no_boundary_quartet_has_exact_adjoint() {
    let b = build_interval_ops(8, 0.125).unwrap();
    let q = OperatorQuartet::from_gradient(
        b.gmax.clone(),
        b.w0.clone(),
        b.w1.clone(),
        &[],
        QuartetMeta { kind: "no_boundary".into(), sizes: vec![8], h: 0.125 },
    )
    .unwrap();
    assert!(!verify_duality(&q).flagged);
    assert_eq!(q.boundary_h0().len(), 0);
}

proptest! {
    #[test]
    fn summation_by_parts(n in 2usize..40, h in 0.01f64..2.0, seed in 0u64..1000) {
        let q = build_interval_ops(n, h).unwrap();
        prop_assert!(duality_defect_random(&q, 10, seed) <= 1e-13);
    }
}
