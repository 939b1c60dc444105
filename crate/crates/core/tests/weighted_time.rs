use evocore::linalg::{random_cmat, ZERO};
use evocore::weighted_time::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gauss(t: f64, c: f64, w: f64) -> f64 {
    (-((t - c) / w).powi(2)).exp()
}

fn rel(a: &TimeSignal, b: &TimeSignal) -> f64 {
    a.sub(b).unwrap().norm() / b.norm()
}

#[test]
fn plancherel_and_round_trip() {
    let g = TimeGrid::centered(20.0, 1024, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let f = TimeSignal::new(g, random_cmat(&mut rng, 1024, 2)).unwrap();
        let s = fourier_laplace(&f);
        assert!((s.norm() - f.norm()).abs() <= 1e-10 * f.norm());
        let back = inverse_fourier_laplace(&s);
        assert!(rel(&back, &f) <= 1e-10);
    }
}

#[test]
fn single_bin_matches_closed_form() {
    let g = TimeGrid::new(-3.0, 0.05, 256, 0.7).unwrap();
    for m in [0usize, 1, 17, 128, 200] {
        let mut s = SpectralSignal::zeros(g, 1);
        let amp = Complex64::new(0.3, -1.2);
        s.values[(m, 0)] = amp;
        let f = inverse_fourier_laplace(&s);
        let tau = g.freq(m);
        for k in 0..g.n {
            let t = g.time(k);
            let want = amp * Complex64::from_polar(1.0, tau * t) * (g.nu * t).exp()
                / (g.n as f64 * g.dt).sqrt();
            assert!((f.samples[(k, 0)] - want).norm() <= 1e-10 * want.norm().max(1.0));
        }
    }
}

#[test]
fn freqs_are_signed_discrete_frequencies() {
    let g = TimeGrid::new(0.0, 0.5, 8, 1.0).unwrap();
    let f = fourier_laplace(&TimeSignal::zeros(g, 1));
    let w = 2.0 * std::f64::consts::PI / 4.0;
    let want = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0].map(|k| k * w);
    for (a, b) in f.freqs.iter().zip(want) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn derivative_matches_finite_differences() {
    let nu = 1.0;
    let dt = 1.0 / 1024.0;
    let g = TimeGrid::new(-8.0, dt, 16384, nu).unwrap();
    let prof = |t: f64| (0.5 * nu * t).exp() * gauss(t, 0.0, 1.0);
    let f = TimeSignal::from_fn(g, 1, |t, _| Complex64::new(prof(t), 0.0));
    let d = time_derivative(&f);
    // sixth-order centered differences as the oracle
    let mut num = 0.0;
    let mut den = 0.0;
    for k in g.n / 4..3 * g.n / 4 {
        let t = g.time(k);
        let fd = (-prof(t - 3.0 * dt) + 9.0 * prof(t - 2.0 * dt) - 45.0 * prof(t - dt)
            + 45.0 * prof(t + dt)
            - 9.0 * prof(t + 2.0 * dt)
            + prof(t + 3.0 * dt))
            / (60.0 * dt);
        let w = (-2.0 * nu * t).exp();
        num += (d.samples[(k, 0)].re - fd).powi(2) * w + d.samples[(k, 0)].im.powi(2) * w;
        den += fd * fd * w;
    }
    let err = (num / den).sqrt();
    assert!(err <= 1e-6, "derivative error {err}");
}

#[test]
fn derivative_and_antiderivative_are_inverse() {
    let g = TimeGrid::centered(40.0, 4096, 1.0).unwrap();
    let f = TimeSignal::from_fn(g, 2, |t, d| Complex64::new(gauss(t, d as f64, 1.0), 0.0));
    let back = antiderivative(&time_derivative(&f));
    assert!(rel(&back, &f) <= 1e-8);
    let back = time_derivative(&antiderivative(&f));
    assert!(rel(&back, &f) <= 1e-8);
}

#[test]
fn antiderivative_matches_cumulative_trapezoid() {
    let g = TimeGrid::centered(32.0, 4096, 1.0).unwrap();
    let prof = |t: f64| gauss(t, 0.0, 1.5) * (1.0 + 0.3 * t);
    let f = TimeSignal::from_fn(g, 1, |t, _| Complex64::new(prof(t), 0.0));
    let a = antiderivative(&f);
    let mut oracle = TimeSignal::zeros(g, 1);
    let mut acc = 0.0;
    for k in 1..g.n {
        acc += 0.5 * g.dt * (prof(g.time(k - 1)) + prof(g.time(k)));
        oracle.samples[(k, 0)] = Complex64::new(acc, 0.0);
    }
    let err = rel(&a, &oracle);
    assert!(err <= 1e-4, "antiderivative error {err}");
}

#[test]
fn antiderivative_norm_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for nu in [1.0, 2.0, 5.0] {
        let g = TimeGrid::centered(10.0, 512, nu).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let f = TimeSignal::new(g, random_cmat(&mut rng, 512, 1)).unwrap();
            worst = worst.max(antiderivative(&f).norm() / f.norm());
        }
        assert!(worst <= 1.0 / nu + 1e-8, "nu={nu}: {worst}");
    }
}

#[test]
fn antiderivative_is_causal_on_padded_input() {
    let g = TimeGrid::centered(40.0, 4096, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = random_cmat(&mut rng, 4096, 1);
    let f = TimeSignal::from_fn(g, 1, |t, _| {
        let k = ((t - g.t0) / g.dt).round() as usize;
        if t.abs() < 10.0 {
            noise[(k, 0)]
        } else {
            ZERO
        }
    });
    for a in [-8.0, 0.0, 5.0, 9.5] {
        let d = causality_defect(|s| Ok(antiderivative(s)), &f, a).unwrap();
        assert!(d <= 1e-6 * f.norm(), "a={a}: {d}");
    }
}

#[test]
fn spectral_symbol_leaks_across_a_jump() {
    let g = TimeGrid::centered(40.0, 4096, 1.0)
        .unwrap()
        .with_symbol(SymbolKind::Spectral);
    let f = TimeSignal::from_fn(g, 1, |t, _| Complex64::new(gauss(t, 0.0, 2.0), 0.0));
    let d = causality_defect(|s| Ok(antiderivative(s)), &f, 0.0).unwrap();
    assert!(d > 1e-6 * f.norm(), "{d}");
}

#[test]
fn recommended_nu() {
    assert_eq!(recommend_nu(0.1, 1024, 0.01), 4.0 / 10.24);
    assert_eq!(recommend_nu(3.0, 1024, 0.01), 3.0);
}

proptest! {
    #[test]
    fn plancherel_holds(seed in 0u64..1000, nu in 0.1f64..5.0, t0 in -5.0f64..5.0) {
        let g = TimeGrid::new(t0, 0.02, 256, nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = TimeSignal::new(g, random_cmat(&mut rng, 256, 1)).unwrap();
        let s = fourier_laplace(&f);
        prop_assert!((s.norm() - f.norm()).abs() <= 1e-10 * f.norm());
    }

    #[test]
    fn inner_product_is_preserved(seed in 0u64..1000) {
        let g = TimeGrid::new(-1.0, 0.05, 128, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = TimeSignal::new(g, random_cmat(&mut rng, 128, 2)).unwrap();
        let h = TimeSignal::new(g, random_cmat(&mut rng, 128, 2)).unwrap();
        let lhs = weighted_inner(&f, &h).unwrap();
        let (sf, sh) = (fourier_laplace(&f), fourier_laplace(&h));
        let rhs: Complex64 = sf.values.iter().zip(sh.values.iter()).map(|(a, b)| a.conj() * b).sum();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * f.norm() * h.norm());
    }
}
