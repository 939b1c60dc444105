//! Analytic material laws `z ↦ M(z)` on the disk `B(r, r)` with the block
//! structure
//!
//! ```text
//! M(z) = [[K(z), 0], [0, 0]] + z [[0, (M102; M112)], [(M120, M121), M122]]
//! ```
//!
//! acting on `H0 ⊕ H1 ⊕ Y`, and the well-posedness checks built on it.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EvoError, Result};
use crate::linalg::{hermitian_part, identity, min_eig_hermitian, spectral_norm, CMat, CVec};
use crate::weighted_time::{fourier_laplace, inverse_fourier_laplace, TimeSignal};

pub type KFn = Arc<dyn Fn(Complex64) -> CMat + Send + Sync>;

/// The `K` part of a material law.
#[derive(Clone)]
pub enum KFamily {
    Constant(CMat),
    /// `M0 + z M1`.
    M0PlusZM1 { m0: CMat, m1: CMat },
    /// Any analytic function, tagged with a name for reports.
    Custom { name: String, dim: usize, eval: KFn },
}

impl fmt::Debug for KFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KFamily::Constant(m) => write!(f, "Constant({}x{})", m.nrows(), m.ncols()),
            KFamily::M0PlusZM1 { m0, .. } => write!(f, "M0PlusZM1({}x{})", m0.nrows(), m0.ncols()),
            KFamily::Custom { name, dim, .. } => write!(f, "Custom({name}, {dim})"),
        }
    }
}

impl KFamily {
    pub fn dim(&self) -> usize {
        match self {
            KFamily::Constant(m) => m.nrows(),
            KFamily::M0PlusZM1 { m0, .. } => m0.nrows(),
            KFamily::Custom { dim, .. } => *dim,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            KFamily::Constant(_) => "constant",
            KFamily::M0PlusZM1 { .. } => "M0_plus_zM1",
            KFamily::Custom { name, .. } => name,
        }
    }

    pub fn eval(&self, z: Complex64) -> CMat {
        match self {
            KFamily::Constant(m) => m.clone(),
            KFamily::M0PlusZM1 { m0, m1 } => m0 + m1.map(|x| x * z),
            KFamily::Custom { eval, .. } => eval(z),
        }
    }

    /// `K'(0)`; exact for the closed families, Richardson-extrapolated
    /// central differences for `Custom`.
    pub fn derivative_at_zero(&self) -> CMat {
        match self {
            KFamily::Constant(m) => CMat::zeros(m.nrows(), m.ncols()),
            KFamily::M0PlusZM1 { m1, .. } => m1.clone(),
            KFamily::Custom { eval, .. } => {
                let d = |h: f64| (eval(Complex64::new(h, 0.0)) - eval(Complex64::new(-h, 0.0))) / Complex64::new(2.0 * h, 0.0);
                let h = 1e-3;
                (d(h / 2.0) * Complex64::new(4.0, 0.0) - d(h)) / Complex64::new(3.0, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaterialLaw {
    pub radius: f64,
    /// Dimensions of `H0` and `H1`; `K` acts on their sum.
    pub split_h0h1: (usize, usize),
    pub dim_obs: usize,
    pub k: KFamily,
    pub m102: CMat,
    pub m112: CMat,
    pub m120: CMat,
    pub m121: CMat,
    pub m122: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellPosednessCertificate {
    pub c0: f64,
    pub c1: f64,
    pub norm_j: f64,
    pub delta_tradeoff: f64,
    pub margin: f64,
}

impl WellPosednessCertificate {
    pub fn is_valid(&self) -> bool {
        self.margin > 0.0
    }
}

impl MaterialLaw {
    /// Law without a `Y` block: `M(z) = K(z)`.
    pub fn state_only(radius: f64, h0: usize, h1: usize, k: KFamily) -> Result<Self> {
        Self::new(
            radius,
            (h0, h1),
            k,
            CMat::zeros(h0, 0),
            CMat::zeros(h1, 0),
            CMat::zeros(0, h0),
            CMat::zeros(0, h1),
            CMat::zeros(0, 0),
        )
    }

    /// Law with the `z`-coupling blocks; `dim_obs` is read off `m122`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        radius: f64,
        split_h0h1: (usize, usize),
        k: KFamily,
        m102: CMat,
        m112: CMat,
        m120: CMat,
        m121: CMat,
        m122: CMat,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(EvoError::Precondition(format!("radius must be > 0, got {radius}")));
        }
        let (h0, h1) = split_h0h1;
        let y = m122.nrows();
        let shape = |name: &str, m: &CMat, r: usize, c: usize| {
            if m.nrows() != r || m.ncols() != c {
                Err(EvoError::Dimension(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        shape("M122", &m122, y, y)?;
        shape("M102", &m102, h0, y)?;
        shape("M112", &m112, h1, y)?;
        shape("M120", &m120, y, h0)?;
        shape("M121", &m121, y, h1)?;
        if k.dim() != h0 + h1 {
            return Err(EvoError::Dimension(format!(
                "K has dimension {}, expected {}",
                k.dim(),
                h0 + h1
            )));
        }
        let law = MaterialLaw {
            radius,
            split_h0h1,
            dim_obs: y,
            k,
            m102,
            m112,
            m120,
            m121,
            m122,
        };
        law.check_k_finite()?;
        Ok(law)
    }

    pub fn dim_state(&self) -> usize {
        self.split_h0h1.0 + self.split_h0h1.1
    }

    pub fn dim(&self) -> usize {
        self.dim_state() + self.dim_obs
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.radius).norm() < self.radius
    }

    fn check_k_finite(&self) -> Result<()> {
        let r = self.radius;
        for i in 0..16 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            for rho in [0.0, 0.5, 0.9] {
                let z = Complex64::new(r, 0.0) + Complex64::from_polar(rho * r, th);
                let k = self.k.eval(z);
                if k.nrows() != self.dim_state() || k.ncols() != self.dim_state() {
                    return Err(EvoError::Dimension("K(z) has the wrong shape".into()));
                }
                if k.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                    return Err(EvoError::Precondition(format!("K is not finite at z = {z}")));
                }
            }
        }
        Ok(())
    }

    /// The `z`-linear block `[[0, (M102; M112)], [(M120, M121), M122]]`.
    pub fn coupling_block(&self) -> CMat {
        let s = self.dim_state();
        let (h0, _) = self.split_h0h1;
        let mut m = CMat::zeros(self.dim(), self.dim());
        m.view_mut((0, s), (h0, self.dim_obs)).copy_from(&self.m102);
        m.view_mut((h0, s), (self.split_h0h1.1, self.dim_obs))
            .copy_from(&self.m112);
        m.view_mut((s, 0), (self.dim_obs, h0)).copy_from(&self.m120);
        m.view_mut((s, h0), (self.dim_obs, self.split_h0h1.1))
            .copy_from(&self.m121);
        m.view_mut((s, s), (self.dim_obs, self.dim_obs))
            .copy_from(&self.m122);
        m
    }

    /// `M(z)` without the disk check; used at limit points such as `z = 0`.
    pub fn evaluate_unchecked(&self, z: Complex64) -> CMat {
        let s = self.dim_state();
        let mut m = self.coupling_block().map(|x| x * z);
        let k = self.k.eval(z);
        let mut blk = m.view_mut((0, 0), (s, s));
        blk += k;
        m
    }

    /// `M'(0)`: `K'(0)` on the state block plus the coupling block.
    pub fn derivative_at_zero(&self) -> CMat {
        let s = self.dim_state();
        let mut m = self.coupling_block();
        let mut blk = m.view_mut((0, 0), (s, s));
        blk += self.k.derivative_at_zero();
        m
    }

    pub fn evaluate(&self, z: Complex64) -> Result<CMat> {
        if !self.contains(z) {
            return Err(EvoError::OutsideDisk {
                re: z.re,
                im: z.im,
                radius: self.radius,
            });
        }
        Ok(self.evaluate_unchecked(z))
    }

    pub fn check_nu(&self, nu: f64) -> Result<()> {
        if nu > 1.0 / (2.0 * self.radius) {
            Ok(())
        } else {
            Err(EvoError::Precondition(format!(
                "nu = {nu} must exceed 1/(2r) = {}",
                1.0 / (2.0 * self.radius)
            )))
        }
    }

    /// `J = ½ (M102 + M120^*; M112 + M121^*)` and its spectral norm.
    pub fn coupling_j(&self) -> (CMat, f64) {
        let (h0, h1) = self.split_h0h1;
        let mut j = CMat::zeros(h0 + h1, self.dim_obs);
        j.view_mut((0, 0), (h0, self.dim_obs))
            .copy_from(&(&self.m102 + self.m120.adjoint()).map(|x| x * 0.5));
        j.view_mut((h0, 0), (h1, self.dim_obs))
            .copy_from(&(&self.m112 + self.m121.adjoint()).map(|x| x * 0.5));
        let n = spectral_norm(&j);
        (j, n)
    }

    /// `min λ_min(Re z⁻¹ M(z))` over `z = 1/(it + nu)` with `t` on a symmetric
    /// log-spaced grid of `n_samples` points.
    pub fn positivity_margin(&self, nu: f64, n_samples: usize) -> Result<f64> {
        self.check_nu(nu)?;
        Ok(contour_min(nu, n_samples, |z| {
            self.evaluate_unchecked(z).map(|x| x / z)
        }))
    }

    /// Same as [`positivity_margin`](Self::positivity_margin) for the `K`
    /// block alone, which plays the role of `N` in the certificate.
    pub fn k_positivity_margin(&self, nu: f64, n_samples: usize) -> Result<f64> {
        self.check_nu(nu)?;
        Ok(contour_min(nu, n_samples, |z| self.k.eval(z).map(|x| x / z)))
    }

    /// Coarse sweep of `λ_min(Re z⁻¹ M(z))` over the open disk, on
    /// `n_radial x n_angular` polar samples about the center `r`.
    pub fn positivity_disk_sweep(&self, n_radial: usize, n_angular: usize) -> f64 {
        let r = self.radius;
        let pts: Vec<Complex64> = (1..=n_radial)
            .flat_map(|i| {
                let rho = 0.98 * r * i as f64 / n_radial as f64;
                (0..n_angular).map(move |j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / n_angular as f64;
                    Complex64::new(r, 0.0) + Complex64::from_polar(rho, th)
                })
            })
            .chain(std::iter::once(Complex64::new(r, 0.0)))
            .collect();
        pts.par_iter()
            .map(|&z| min_eig_hermitian(&self.evaluate_unchecked(z).map(|x| x / z)))
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// Certificate from sampled `c0` (positivity of `K`), `c1 = λ_min(Re M122)`
    /// and `‖J‖`.
    pub fn certify(&self, nu: f64, n_samples: usize) -> Result<WellPosednessCertificate> {
        let c0 = self.k_positivity_margin(nu, n_samples)?;
        let c1 = if self.dim_obs == 0 {
            f64::INFINITY
        } else {
            min_eig_hermitian(&self.m122)
        };
        let (_, nj) = self.coupling_j();
        if self.dim_obs == 0 {
            return Ok(WellPosednessCertificate {
                c0,
                c1,
                norm_j: nj,
                delta_tradeoff: 1.0,
                margin: c0,
            });
        }
        Ok(certify_wellposedness(c0, c1, nj))
    }
}

/// Symmetric log-spaced sample points `t` (including 0 when `n` is odd).
pub fn contour_times(n_samples: usize) -> Vec<f64> {
    let half = n_samples / 2;
    let mut ts = Vec::with_capacity(n_samples);
    if n_samples % 2 == 1 {
        ts.push(0.0);
    }
    for i in 0..half {
        let s = if half > 1 {
            -3.0 + 9.0 * i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let t = 10f64.powf(s);
        ts.push(t);
        ts.push(-t);
    }
    ts
}

fn contour_min(nu: f64, n_samples: usize, f: impl Fn(Complex64) -> CMat + Sync) -> f64 {
    contour_times(n_samples)
        .par_iter()
        .map(|&t| {
            let z = Complex64::new(nu, t).inv();
            min_eig_hermitian(&f(z))
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn margin_at(c0: f64, c1: f64, nj: f64, delta: f64) -> f64 {
    (c0 - delta * nj).min(c1 - nj / delta)
}

/// Maximizes `min(c0 − δ‖J‖, c1 − ‖J‖/δ)` over `δ > 0`.
pub fn certify_wellposedness(c0: f64, c1: f64, norm_j: f64) -> WellPosednessCertificate {
    if norm_j == 0.0 {
        return WellPosednessCertificate {
            c0,
            c1,
            norm_j,
            delta_tradeoff: 1.0,
            margin: c0.min(c1),
        };
    }
    // equalizer: norm_j δ² + (c1 − c0) δ − norm_j = 0
    let b = c1 - c0;
    let disc = (b * b + 4.0 * norm_j * norm_j).sqrt();
    let mut delta = if b <= 0.0 {
        (-b + disc) / (2.0 * norm_j)
    } else {
        2.0 * norm_j / (b + disc)
    };
    if !(delta.is_finite() && delta > 0.0) {
        delta = golden_log_delta(c0, c1, norm_j);
    }
    WellPosednessCertificate {
        c0,
        c1,
        norm_j,
        delta_tradeoff: delta,
        margin: margin_at(c0, c1, norm_j, delta),
    }
}

fn golden_log_delta(c0: f64, c1: f64, nj: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-6.0 * 10f64.ln(), 6.0 * 10f64.ln());
    let f = |s: f64| margin_at(c0, c1, nj, s.exp());
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    (0.5 * (a + b)).exp()
}

/// `M(∂₀⁻¹) f`: bin `k` of the spectrum is multiplied by `M(z_k)`.
pub fn apply_material_law(law: &MaterialLaw, f: &TimeSignal) -> Result<TimeSignal> {
    let grid = f.grid;
    law.check_nu(grid.nu)?;
    if f.dim() != law.dim() {
        return Err(EvoError::Dimension(format!(
            "signal dimension {} vs law dimension {}",
            f.dim(),
            law.dim()
        )));
    }
    let spec = fourier_laplace(f);
    let out = spec.map_bins(law.dim(), |k, v: CVec| {
        Ok(law.evaluate_unchecked(grid.inv_symbol(k)) * v)
    })?;
    Ok(inverse_fourier_laplace(&out))
}

/// Convenience: `M(z) = M0 + z M1` on a state space without `Y` block.
pub fn m0_plus_z_m1(m0: CMat, m1: CMat, radius: f64) -> Result<MaterialLaw> {
    let n = m0.nrows();
    MaterialLaw::state_only(radius, n, 0, KFamily::M0PlusZM1 { m0, m1 })
}

/// Convenience: constant law `M(z) = m` on a state space without `Y` block.
pub fn constant(m: CMat, radius: f64) -> Result<MaterialLaw> {
    let n = m.nrows();
    MaterialLaw::state_only(radius, n, 0, KFamily::Constant(m))
}

/// `M(z) = z · I`.
pub fn z_identity(n: usize, radius: f64) -> Result<MaterialLaw> {
    m0_plus_z_m1(CMat::zeros(n, n), identity(n), radius)
}

/// Hermitian part of the coupling block; should equal `[[0, J], [J^*, Re M122]]`.
pub fn coupling_block_real_part(law: &MaterialLaw) -> CMat {
    hermitian_part(&law.coupling_block())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, fro};

    #[test]
    fn identity_at_center() {
        let law = constant(identity(3), 1.0).unwrap();
        let m = law.evaluate(c(1.0)).unwrap();
        assert_eq!(m, identity(3));
    }

    #[test]
    fn outside_disk_rejected() {
        let law = constant(identity(2), 1.0).unwrap();
        assert!(matches!(law.evaluate(c(2.5)), Err(EvoError::OutsideDisk { .. })));
        assert!(law.evaluate(c(0.0)).is_err());
    }

    #[test]
    fn scalar_y_block_is_linear() {
        let law = MaterialLaw::new(
            1.0,
            (1, 0),
            KFamily::Constant(identity(1)),
            CMat::zeros(1, 1),
            CMat::zeros(0, 1),
            CMat::zeros(1, 1),
            CMat::zeros(1, 0),
            identity(1),
        )
        .unwrap();
        let m = law.evaluate(c(0.5)).unwrap();
        assert_eq!(m[(1, 1)], c(0.5));
        assert_eq!(m[(0, 0)], c(1.0));
    }

    #[test]
    fn j_of_identity_couplings() {
        let law = MaterialLaw::new(
            1.0,
            (2, 1),
            KFamily::Constant(identity(3)),
            identity(2),
            CMat::zeros(1, 2),
            identity(2),
            CMat::zeros(2, 1),
            identity(2),
        )
        .unwrap();
        let (j, n) = law.coupling_j();
        let mut want = CMat::zeros(3, 2);
        want.view_mut((0, 0), (2, 2)).copy_from(&identity(2));
        assert!(fro(&(j - want)) < 1e-15);
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certificate_edge_cases() {
        let z = certify_wellposedness(2.0, 3.0, 0.0);
        assert_eq!((z.delta_tradeoff, z.margin), (1.0, 2.0));
        let bad = certify_wellposedness(1.0, 1.0, 1.5);
        assert!(!bad.is_valid());
        let ok = certify_wellposedness(1.0, 1.0, 0.5f64.sqrt());
        assert!(ok.is_valid());
        assert!((ok.margin - (1.0 - 0.5f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn contour_times_are_symmetric() {
        let ts = contour_times(200);
        assert_eq!(ts.len(), 200);
        let s: f64 = ts.iter().sum();
        assert_eq!(s, 0.0);
        assert_eq!(contour_times(5).len(), 5);
    }
}
