use evocore::boundary_data::*;
use evocore::discrete_ops::*;
use evocore::linalg::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn col(m: &CMat, j: usize) -> CMat {
    m.columns(j, 1).into_owned()
}

#[test]
fn bd_identity_1d_and_2d() {
    for n in [8usize, 16, 32] {
        let q = build_interval_ops(n, 1.0 / n as f64).unwrap();
        let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
        assert_eq!(bd.dim_bdg(), 2);
        assert!(bd.angle_g <= 1e-9 && bd.angle_d <= 1e-9, "n={n}");
    }
    let q = build_grid_ops_2d(8, 8, 0.125).unwrap();
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
    let m = SobolevMetric::new(&q).unwrap();
    let nullity = bd_basis_nullspace(&q, &m, Side::G, DEFAULT_NULL_TOL).unwrap().ncols();
    assert_eq!(bd.dim_bdg(), 32);
    assert_eq!(nullity, 32);
    assert!(bd.angle_g <= 1e-9 && bd.angle_d <= 1e-9);
}

#[test]
fn elasticity_bd_spaces() {
    let q = build_sym_elasticity_ops(2, &[4, 4], 0.25).unwrap();
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
    assert_eq!(bd.dim_bdg(), 32);
    let r = bd.report();
    assert!(r.inverse_defect <= 1e-10 && r.unitarity_defect <= 1e-10, "{r:?}");
}

#[test]
fn no_boundary_means_no_bd() {
    let b = build_interval_ops(8, 0.125).unwrap();
    let q = OperatorQuartet::from_gradient(
        b.gmax.clone(),
        b.w0.clone(),
        b.w1.clone(),
        &[],
        QuartetMeta { kind: "no_boundary".into(), sizes: vec![8], h: 0.125 },
    )
    .unwrap();
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
    assert_eq!(bd.dim_bdg(), 0);
    assert_eq!(bd.dim_bdd(), 0);
}

#[test]
fn bases_are_orthonormal() {
    let q = build_grid_ops_2d(6, 5, 0.2).unwrap();
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
    let gg = bd.basis_bdg.adjoint() * &bd.metric.gram_g * &bd.basis_bdg;
    let gd = bd.basis_bdd.adjoint() * &bd.metric.gram_d * &bd.basis_bdd;
    assert!(fro(&(gg - identity(bd.dim_bdg()))) <= 1e-12);
    assert!(fro(&(gd - identity(bd.dim_bdd()))) <= 1e-12);
}

#[test]
fn sobolev_norm_and_dual_norm() {
    let q = build_interval_ops(16, 1.0 / 16.0).unwrap();
    let m = SobolevMetric::new(&q).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_cmat(&mut rng, 17, 1);
    let direct = (u.adjoint() * q.w0_mat() * &u)[(0, 0)].re
        + ((&q.gmax * &u).adjoint() * q.w1_mat() * (&q.gmax * &u))[(0, 0)].re;
    assert!((m.norm_g(&u).powi(2) - direct).abs() <= 1e-12 * direct);
    // dual norm is the supremum over unit vectors, attained at Γ⁻¹ r
    let r = random_cmat(&mut rng, 16, 1);
    let dn = m.dual_norm_d(&r);
    let mut best: f64 = 0.0;
    for _ in 0..2000 {
        let v = random_cmat(&mut rng, 16, 1);
        best = best.max((r.adjoint() * &v)[(0, 0)].norm() / m.norm_d(&v));
    }
    assert!(best <= dn * (1.0 + 1e-12));
    let opt = lu_solve(&m.gram_d, &r).unwrap();
    let att = (r.adjoint() * &opt)[(0, 0)].norm() / m.norm_d(&opt);
    assert!((att - dn).abs() <= 1e-10 * dn);
}

#[test]
fn trace_isometry_on_bd() {
    for q in [
        build_interval_ops(16, 1.0 / 16.0).unwrap(),
        build_grid_ops_2d(6, 6, 1.0 / 6.0).unwrap(),
        build_sym_elasticity_ops(2, &[4, 4], 0.25).unwrap(),
    ] {
        let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
        for j in 0..bd.dim_bdg() {
            let u = col(&bd.basis_bdg, j);
            let t = trace_functional(&q, &bd.metric, &u);
            let n = bd.metric.norm_g(&u);
            assert!((t.norm - n).abs() <= 1e-8 * n, "{} vs {n}", t.norm);
        }
        // contraction everywhere, strict off BD
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let u = random_cmat(&mut rng, q.n0(), 1);
            let t = trace_functional(&q, &bd.metric, &u);
            assert!(t.norm <= bd.metric.norm_g(&u) * (1.0 + 1e-12));
        }
        let x = &q.e_int_g * random_cmat(&mut rng, q.e_int_g.ncols(), 1);
        let u = &x + col(&bd.basis_bdg, 0);
        let t = trace_functional(&q, &bd.metric, &u);
        assert!(t.norm < bd.metric.norm_g(&u) * (1.0 - 1e-6));
    }
}

#[test]
fn kernel_of_trace_is_minimal_domain() {
    let q = build_grid_ops_2d(5, 5, 0.2).unwrap();
    let m = SobolevMetric::new(&q).unwrap();
    // covector map u ↦ W1 G u + Dᴴ W0 u
    let t = q.w1_mat() * &q.gmax + q.dmax.adjoint() * q.w0_mat();
    let ker = orthonormalize_in(&m.gram_g, &nullspace(&t, 1e-10)).unwrap();
    let dom = orthonormalize_in(&m.gram_g, &q.e_int_g).unwrap();
    assert!(principal_angle_sin(&m.gram_g, &ker, &dom) <= 1e-9);
    let x = &q.e_int_g * CMat::from_element(q.e_int_g.ncols(), 1, c(1.0));
    assert!(trace_functional(&q, &m, &x).norm <= 1e-12);
}

#[test]
fn linear_function_trace_hits_endpoints() {
    let n = 10;
    let h = 0.1;
    let q = build_interval_ops(n, h).unwrap();
    let m = SobolevMetric::new(&q).unwrap();
    let u = CMat::from_fn(n + 1, 1, |k, _| c(k as f64 * h));
    let t = trace_functional(&q, &m, &u);
    // covector is S^H W0 u: only the boundary H1 cells carry the pairing
    let bnd = q.boundary_h1();
    for k in 0..n {
        if !bnd.contains(&k) {
            assert!(t.covector[(k, 0)].norm() <= 1e-12);
        }
    }
    // ⟨Gu, y⟩ + ⟨u, Dy⟩ evaluated directly
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = random_cmat(&mut rng, n, 1);
    let direct = ((&q.gmax * &u).adjoint() * q.w1_mat() * &y)[(0, 0)]
        + (u.adjoint() * q.w0_mat() * (&q.dmax * &y))[(0, 0)];
    let via = (y.adjoint() * &t.covector)[(0, 0)].conj();
    assert!((direct - via).norm() <= 1e-12);
}

#[test]
fn hat_operators_are_unitary_inverses() {
    let q = build_interval_ops(16, 1.0 / 16.0).unwrap();
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
    let r = bd.report();
    assert!(r.inverse_defect <= 1e-10, "{r:?}");
    assert!(r.adjoint_defect <= 1e-10, "{r:?}");
    assert!(r.unitarity_defect <= 1e-10, "{r:?}");
    assert!(r.dtn_unitarity_defect <= 1e-9, "{r:?}");
    // dense cross-check: kernel basis from the SVD gives the same operator up to basis change
    let ng = bd_basis_nullspace(&q, &bd.metric, Side::G, DEFAULT_NULL_TOL).unwrap();
    let nd = bd_basis_nullspace(&q, &bd.metric, Side::D, DEFAULT_NULL_TOL).unwrap();
    let ghat2 = nd.adjoint() * &bd.metric.gram_d * &q.gmax * &ng;
    let tg = bd.basis_bdg.adjoint() * &bd.metric.gram_g * &ng;
    let td = bd.basis_bdd.adjoint() * &bd.metric.gram_d * &nd;
    assert!(fro(&(&td * &ghat2 - &bd.ghat * &tg)) <= 1e-10);
    // Ĝ then Ḋ is the identity on TR(G)
    assert!(fro(&(&bd.dhat * &bd.dtn - identity(2))) <= 1e-9);
}

#[test]
fn dtn_is_mesh_consistent() {
    let dtn = |n: usize| {
        let q = build_interval_ops(n, 1.0 / n as f64).unwrap();
        build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap().dtn
    };
    let (a, b) = (dtn(16), dtn(32));
    assert!(fro(&(&a - &b)) <= 1e-2, "{a} {b}");
    let flux = |n: usize| {
        let q = build_interval_ops(n, 1.0 / n as f64).unwrap();
        dtn_boundary_coordinates(&q, &SobolevMetric::new(&q).unwrap()).unwrap()
    };
    let (fa, fb) = (flux(16), flux(32));
    assert!(fro(&(&fa - &fb)) <= 1e-2 * fro(&fb), "{fa} {fb}");
    // continuous limit for u - u'' = 0 on (0,1): coth(1) on the diagonal
    let coth = 1.0 / 1f64.tanh();
    assert!((fb[(0, 0)].re - coth).abs() < 1e-2, "{fb}");
}
