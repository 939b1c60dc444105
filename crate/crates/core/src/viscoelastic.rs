//! The visco-elastic boundary control example on a 1D rod: memory kernels,
//! the stress law `(M − g∗)⁻¹`, the normal coupling `ν̂`, the boundary space
//! `U`, the observation map `C = j π_BD ι` and the assembled control system.
//!
//! Kernels are exponential sums `g(t) = g₀ + ∫₀ᵗ h` with
//! `h(t) = Σ α e^{−βt}`. The transform convention is
//! `ĝ(ξ) = (2π)^{-1/2} ∫ e^{−iξt} g(t) dt`, so `√(2π) ĝ(−i z⁻¹)` is the
//! Laplace transform of `g` at `s = z⁻¹`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_data::{build_bd_spaces, BDSpaces, DEFAULT_NULL_TOL};
use crate::control_system::{
    extract_control_equation, extract_observation_equation, BoundaryControlSpec, ReducedQuartet,
};
use crate::discrete_ops::{build_interval_ops, OperatorQuartet};
use crate::error::{EvoError, Result};
use crate::evo_solver::residual;
use crate::linalg::{
    diag, hermitian_part, identity, inverse, lu_solve_vec, min_eig_hermitian, spectral_norm,
    CMat, CVec, ZERO,
};
use crate::material_law::{certify_wellposedness, KFamily, MaterialLaw, WellPosednessCertificate};
use crate::weighted_time::{
    apply_scalar_multiplier, causality_defect, fourier_laplace, inverse_fourier_laplace,
    TimeSignal,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTerm {
    pub alpha: Complex64,
    pub beta: f64,
}

/// `g(t) = g₀ + Σ (α/β)(1 − e^{−βt})` for `t ≥ 0`, zero before.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MemoryKernel {
    pub g0: Complex64,
    #[serde(default)]
    pub terms: Vec<KernelTerm>,
}

impl MemoryKernel {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(g0: f64) -> Self {
        MemoryKernel {
            g0: Complex64::new(g0, 0.0),
            terms: vec![],
        }
    }

    pub fn exponential(alpha: f64, beta: f64, g0: f64) -> Self {
        MemoryKernel {
            g0: Complex64::new(g0, 0.0),
            terms: vec![KernelTerm {
                alpha: Complex64::new(alpha, 0.0),
                beta,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g0.re.is_finite() && self.g0.im.is_finite()) {
            return Err(EvoError::Config("kernel g0 must be finite".into()));
        }
        for t in &self.terms {
            if !(t.beta > 0.0 && t.beta.is_finite()) {
                return Err(EvoError::Config(format!("kernel rate beta = {} must be > 0", t.beta)));
            }
            if !(t.alpha.re.is_finite() && t.alpha.im.is_finite()) {
                return Err(EvoError::Config("kernel weight must be finite".into()));
            }
        }
        Ok(())
    }

    /// `|h|_{L₁} = Σ |α|/β`.
    pub fn l1_h(&self) -> f64 {
        self.terms.iter().map(|t| t.alpha.norm() / t.beta).sum()
    }

    /// `|h|_{L₁} + |g₀|`, the numerator of the convolution bound.
    pub fn bound_constant(&self) -> f64 {
        self.l1_h() + self.g0.norm()
    }

    pub fn h(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return ZERO;
        }
        self.terms.iter().map(|k| k.alpha * (-k.beta * t).exp()).sum()
    }

    pub fn g(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return ZERO;
        }
        self.g0
            + self
                .terms
                .iter()
                .map(|k| k.alpha / k.beta * (1.0 - (-k.beta * t).exp()))
                .sum::<Complex64>()
    }

    /// `ĥ(−i z⁻¹) = Σ α / (√(2π)(z⁻¹ + β))`.
    pub fn h_hat(&self, z: Complex64) -> Complex64 {
        let s = z.inv();
        self.terms.iter().map(|k| k.alpha / (s + k.beta)).sum::<Complex64>() / (2.0 * PI).sqrt()
    }

    /// `ĝ(−i z⁻¹)`.
    pub fn g_hat(&self, z: Complex64) -> Complex64 {
        self.scaled_transform(z) / (2.0 * PI).sqrt()
    }

    /// `√(2π) ĝ(−i z⁻¹) = z g₀ + Σ α z² / (1 + βz)`; finite at `z = 0`.
    pub fn scaled_transform(&self, z: Complex64) -> Complex64 {
        z * self.g0
            + self
                .terms
                .iter()
                .map(|k| k.alpha * z * z / (1.0 + k.beta * z))
                .sum::<Complex64>()
    }
}

/// `g ∗ s`, bin-wise multiplication by `√(2π) ĝ(−i z⁻¹)` at `z = 1/p`.
pub fn convolve_kernel(k: &MemoryKernel, s: &TimeSignal) -> TimeSignal {
    let grid = s.grid;
    apply_scalar_multiplier(s, |b| k.scaled_transform(grid.inv_symbol(b)))
}

/// Time-domain oracle: the trapezoidal sum `Σ_j w_j g(t_k − t_j) s(t_j)`
/// over `j ≤ k`, evaluated by recursion on each exponential. Assumes zero
/// history before the window.
pub fn convolve_kernel_direct(k: &MemoryKernel, s: &TimeSignal) -> TimeSignal {
    let grid = s.grid;
    let dt = grid.dt;
    let dim = s.dim();
    let c_int = k.g0 + k.terms.iter().map(|t| t.alpha / t.beta).sum::<Complex64>();
    let mut out = TimeSignal::zeros(grid, dim);
    for d in 0..dim {
        let mut running = ZERO;
        let mut exps = vec![ZERO; k.terms.len()];
        let mut prev = ZERO;
        for i in 0..grid.n {
            let cur = s.samples[(i, d)];
            running += 0.5 * dt * (prev + cur);
            let mut v = c_int * running;
            for (e, t) in exps.iter_mut().zip(&k.terms) {
                let q = (-t.beta * dt).exp();
                *e = q * *e + 0.5 * dt * (q * prev + cur);
                v -= t.alpha / t.beta * *e;
            }
            out.samples[(i, d)] = v;
            prev = cur;
        }
    }
    out
}

/// `(M − √(2π) ĝ(−i z⁻¹))⁻¹` for a scalar kernel acting on `M`'s space.
pub fn stress_law_eval(m: &CMat, k: &MemoryKernel, z: Complex64) -> Result<CMat> {
    let g = k.scaled_transform(z);
    let a = m - identity(m.nrows()).map(|x| x * g);
    inverse(&a).map_err(|_| {
        EvoError::Singular(format!("M − g(z) is singular at z = {z}; nu is too small"))
    })
}

/// Truncated series `Σ_k (2π)^{k/2} M^{-k} ĝ^k M⁻¹`. Fails when
/// `|√(2π) ĝ| ‖M⁻¹‖ ≥ 1`.
pub fn stress_law_neumann(m: &CMat, k: &MemoryKernel, z: Complex64) -> Result<CMat> {
    let minv = inverse(m)?;
    let g = k.scaled_transform(z);
    let q = g.norm() * spectral_norm(&minv);
    if q >= 1.0 {
        return Err(EvoError::Precondition(format!(
            "Neumann series diverges: |g| ‖M⁻¹‖ = {q}"
        )));
    }
    let step = minv.map(|x| x * g);
    let mut term = minv.clone();
    let mut sum = minv.clone();
    for _ in 0..2000 {
        term = &step * &term;
        sum += &term;
        if spectral_norm(&term) <= 1e-18 * spectral_norm(&sum) {
            break;
        }
    }
    Ok(sum)
}

/// Outward normal extension, given per `H1` dof of the scalar quartet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormalField {
    /// `N(x) = scale · (2x/L − 1)`, i.e. `−scale` at 0 and `+scale` at `L`.
    Linear { scale: f64 },
    /// Explicit values at the `H1` dofs (edge midpoints).
    Values { values: Vec<f64> },
}

impl Default for NormalField {
    fn default() -> Self {
        NormalField::Linear { scale: 1.0 }
    }
}

impl NormalField {
    pub fn edge_values(&self, n_cells: usize, length: f64) -> Result<Vec<f64>> {
        match self {
            NormalField::Linear { scale } => Ok((0..n_cells)
                .map(|e| scale * (2.0 * (e as f64 + 0.5) / n_cells as f64 - 1.0))
                .collect()),
            NormalField::Values { values } => {
                if values.len() != n_cells {
                    return Err(EvoError::Config(format!(
                        "normal field has {} values, expected {n_cells}",
                        values.len()
                    )));
                }
                let _ = length;
                Ok(values.clone())
            }
        }
    }
}

/// `ν̂ : BD(grad) → BD(div)` in orthonormal `BD` coordinates, together with
/// `P = Ḋν̂ + ν̂*Ĝ`.
#[derive(Debug, Clone)]
pub struct NormalCoupling {
    pub nuhat: CMat,
    pub operator: CMat,
    pub positivity: f64,
}

/// Node-to-dof averaging read off the stencil of `G`.
fn averaging(q: &OperatorQuartet) -> CMat {
    let mut a = CMat::zeros(q.n1(), q.n0());
    for i in 0..q.n1() {
        let nz: Vec<usize> = (0..q.n0()).filter(|&j| q.gmax[(i, j)].norm() > 0.0).collect();
        for &j in &nz {
            a[(i, j)] = Complex64::new(1.0 / nz.len() as f64, 0.0);
        }
    }
    a
}

/// `ν̂ f = π_BD(div)(f N)` with `f N` formed on `H1` dofs by averaging `f`.
pub fn build_normal_coupling(
    q: &OperatorQuartet,
    bd: &BDSpaces,
    normal_h1: &[f64],
) -> Result<NormalCoupling> {
    if normal_h1.len() != q.n1() {
        return Err(EvoError::Dimension(format!(
            "normal field has {} values, quartet has {} H1 dofs",
            normal_h1.len(),
            q.n1()
        )));
    }
    let fnorm = averaging(q);
    let nmul = diag(normal_h1) * fnorm;
    let nuhat = bd.basis_bdd.adjoint() * &bd.metric.gram_d * nmul * &bd.basis_bdg;
    let p = &bd.dhat * &nuhat + nuhat.adjoint() * &bd.ghat;
    let positivity = min_eig_hermitian(&p);
    if !(positivity > 0.0) {
        return Err(EvoError::Config(format!(
            "normal coupling is not positive: λ_min = {positivity:e}"
        )));
    }
    Ok(NormalCoupling {
        nuhat,
        operator: p,
        positivity,
    })
}

/// Gram matrix of `⟨f|g⟩_U = ½(⟨ν̂f|Ĝg⟩ + ⟨Ĝf|ν̂g⟩)` on `BD(grad)` coordinates.
/// The embedding `ι` is the identity in these coordinates.
pub fn build_u_space(nc: &NormalCoupling) -> CMat {
    hermitian_part(&nc.operator).map(|x| x * 0.5)
}

/// `j* = ½ π κ* π* (ν̂*Ĝ + Ḋν̂)` in coordinates, for a given `j`.
pub fn j_star(j: &CMat, bd: &BDSpaces, nc: &NormalCoupling) -> CMat {
    let inner = nc.nuhat.adjoint() * &bd.ghat + &bd.dhat * &nc.nuhat;
    j.adjoint() * inner.map(|x| x * 0.5)
}

/// Largest relative defect of `⟨jf|g⟩_U = ⟨f|j* g⟩` over random pairs. The
/// left side is evaluated on full node vectors, the right side from the
/// coordinate formula.
pub fn j_star_identity_defect(
    q: &OperatorQuartet,
    bd: &BDSpaces,
    normal_h1: &[f64],
    j: &CMat,
    nc: &NormalCoupling,
    pairs: usize,
    seed: u64,
) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let js = j_star(j, bd, nc);
    let nmul = diag(normal_h1) * averaging(q);
    let proj_d = &bd.basis_bdd * bd.basis_bdd.adjoint() * &bd.metric.gram_d;
    let gd = &bd.metric.gram_d;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let f = crate::linalg::random_cmat(&mut rng, j.ncols(), 1);
        let g = crate::linalg::random_cmat(&mut rng, j.nrows(), 1);
        let a = &bd.basis_bdg * (j * &f);
        let b = &bd.basis_bdg * &g;
        let nu_a = &proj_d * (&nmul * &a);
        let nu_b = &proj_d * (&nmul * &b);
        let ga = &q.gmax * &a;
        let gb = &q.gmax * &b;
        let lhs = ((nu_a.adjoint() * gd * gb)[(0, 0)] + (ga.adjoint() * gd * nu_b)[(0, 0)]) * 0.5;
        let rhs = (f.adjoint() * &js * &g)[(0, 0)];
        let scale = f.norm() * g.norm() * spectral_norm(&js).max(1.0);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    worst
}

fn one() -> f64 {
    1.0
}

/// Configuration of the rod. `rho` has 1 (uniform) or `n_cells + 1` values,
/// `stiffness` 1 or `n_cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscoSystemConfig {
    pub n_cells: usize,
    #[serde(default = "one")]
    pub length: f64,
    pub rho: Vec<f64>,
    /// `M` per cell, in `H1`-orthonormal coordinates.
    #[serde(rename = "mtensor")]
    pub stiffness: Vec<f64>,
    #[serde(default)]
    pub kernel: MemoryKernel,
    #[serde(default, rename = "normal_field")]
    pub normal: NormalField,
    pub nu: f64,
}

impl Default for ViscoSystemConfig {
    fn default() -> Self {
        ViscoSystemConfig {
            n_cells: 64,
            length: 1.0,
            rho: vec![1.0],
            stiffness: vec![1.0],
            kernel: MemoryKernel::zero(),
            normal: NormalField::default(),
            nu: 1.0,
        }
    }
}

fn expand(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>> {
    let out = match v.len() {
        1 => vec![v[0]; n],
        l if l == n => v.to_vec(),
        l => {
            return Err(EvoError::Config(format!(
                "{name} has {l} values, expected 1 or {n}"
            )))
        }
    };
    if out.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(EvoError::Config(format!("{name} must be strictly positive")));
    }
    Ok(out)
}

impl ViscoSystemConfig {
    pub fn rho_values(&self) -> Result<Vec<f64>> {
        expand("rho", &self.rho, self.n_cells + 1)
    }

    pub fn stiffness_values(&self) -> Result<Vec<f64>> {
        expand("stiffness", &self.stiffness, self.n_cells)
    }

    /// `c₁ = min ρ`.
    pub fn c1(&self) -> Result<f64> {
        Ok(self.rho_values()?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `c₂ = min M`.
    pub fn c2(&self) -> Result<f64> {
        Ok(self.stiffness_values()?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `‖M⁻¹‖ (|h|₁ + |g₀|)`: the weight must exceed this.
    pub fn critical_nu(&self) -> Result<f64> {
        Ok(self.kernel.bound_constant() / self.c2()?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 2 {
            return Err(EvoError::Config("n_cells must be at least 2".into()));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(EvoError::Config("length must be positive".into()));
        }
        self.rho_values()?;
        self.stiffness_values()?;
        self.kernel.validate()?;
        let crit = self.critical_nu()?;
        if !(self.nu > crit) {
            return Err(EvoError::Config(format!(
                "nu = {} violates the Neumann condition nu > ‖M⁻¹‖(|h|₁ + |g₀|) = {crit}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// The assembled rod: control system plus the pieces it was built from.
#[derive(Debug, Clone)]
pub struct ViscoSystem {
    pub cfg: ViscoSystemConfig,
    pub spec: BoundaryControlSpec,
    pub bd: BDSpaces,
    pub coupling: NormalCoupling,
    pub normal_h1: Vec<f64>,
    pub u_gram: CMat,
    pub j: CMat,
    /// Observation map on full node vectors, `U` coordinates.
    pub c_full: CMat,
    /// `π ρ π*` on reduced coordinates.
    pub rho_red: CMat,
    /// `M` on reduced `ran G` coordinates.
    pub m_red: CMat,
    uniform_m: Option<f64>,
}

fn stress_block(m_red: &CMat, uniform: Option<f64>, k: &MemoryKernel, z: Complex64) -> CMat {
    let g = k.scaled_transform(z);
    match uniform {
        Some(e) => identity(m_red.nrows()).map(|x| x / (e - g)),
        None => inverse(&(m_red - identity(m_red.nrows()).map(|x| x * g)))
            .unwrap_or_else(|_| CMat::from_element(m_red.nrows(), m_red.ncols(), Complex64::new(f64::NAN, 0.0))),
    }
}

/// Builds the control system `C_{M,F,B}` of the rod: state `(v, T, w, y)`,
/// `K(z) = diag(πρπ*, π(M − √(2π)ĝ)⁻¹π*, z)`, `M121 = (0, √2)`, `M122 = 1`,
/// `B = (0; 0; −√2; −1)`.
pub fn assemble_visco_system(cfg: &ViscoSystemConfig) -> Result<ViscoSystem> {
    cfg.validate()?;
    let n = cfg.n_cells;
    let q = build_interval_ops(n, cfg.length / n as f64)?;
    let red = ReducedQuartet::new(&q, 1e-10)?;
    let r = red.rank();
    if r != q.n1() {
        return Err(EvoError::Config(format!(
            "reduced gradient is not onto: rank {r}, {} H1 dofs",
            q.n1()
        )));
    }
    let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL)?;
    let normal_h1 = cfg.normal.edge_values(n, cfg.length)?;
    let coupling = build_normal_coupling(&q, &bd, &normal_h1)?;
    let u_gram = build_u_space(&coupling);
    let dv = bd.dim_bdg();
    // 1D: Grad = grad, Korn's embedding is the identity
    let j = identity(dv);
    let c_full = &j * bd.basis_bdg.adjoint() * q.gram_g();

    let rho = cfg.rho_values()?;
    let stiff = cfg.stiffness_values()?;
    let rho_red = red.lift0.adjoint() * q.w0_mat() * diag(&rho) * &red.lift0;
    let s1 = CMat::from_fn(q.n1(), r, |i, k| red.lift1[(i, k)] * q.w1[i].sqrt());
    let m_red = s1.adjoint() * diag(&stiff) * &s1;
    let uniform_m = if stiff.iter().all(|&e| e == stiff[0]) {
        Some(stiff[0])
    } else {
        None
    };

    let crit = cfg.critical_nu()?;
    let radius = if crit > 0.0 {
        (1.0 - 1e-9) / (2.0 * crit)
    } else {
        1e6
    };
    let state = 2 * r + dv;
    let kernel = cfg.kernel.clone();
    let (rho_c, m_c) = (rho_red.clone(), m_red.clone());
    let eval = move |z: Complex64| {
        let mut k = CMat::zeros(state, state);
        k.view_mut((0, 0), (r, r)).copy_from(&rho_c);
        k.view_mut((r, r), (r, r))
            .copy_from(&stress_block(&m_c, uniform_m, &kernel, z));
        for i in 0..dv {
            k[(2 * r + i, 2 * r + i)] = z;
        }
        k
    };
    let mut m121 = CMat::zeros(dv, r + dv);
    m121.view_mut((0, r), (dv, dv))
        .copy_from(&identity(dv).map(|x| x * 2f64.sqrt()));
    let law = MaterialLaw::new(
        radius,
        (r, r + dv),
        KFamily::Custom {
            name: "viscoelastic".into(),
            dim: state,
            eval: Arc::new(eval),
        },
        CMat::zeros(r, dv),
        CMat::zeros(r + dv, dv),
        CMat::zeros(dv, r),
        m121,
        identity(dv),
    )?;
    let mut b = CMat::zeros(state + dv, dv);
    b.view_mut((2 * r, 0), (dv, dv))
        .copy_from(&identity(dv).map(|x| x * -(2f64.sqrt())));
    b.view_mut((state, 0), (dv, dv)).copy_from(&identity(dv).map(|x| -x));
    let spec = BoundaryControlSpec::new(red, &c_full, &u_gram, b, law)?;
    Ok(ViscoSystem {
        cfg: cfg.clone(),
        spec,
        bd,
        coupling,
        normal_h1,
        u_gram,
        j,
        c_full,
        rho_red,
        m_red,
        uniform_m,
    })
}

impl ViscoSystem {
    pub fn quartet(&self) -> &OperatorQuartet {
        &self.spec.reduced.quartet
    }

    pub fn dim_u(&self) -> usize {
        self.spec.dim_u()
    }

    /// Stress block `π(M − √(2π)ĝ(−i z⁻¹))⁻¹π*` on reduced coordinates.
    pub fn stress_block(&self, z: Complex64) -> CMat {
        stress_block(&self.m_red, self.uniform_m, &self.cfg.kernel, z)
    }

    /// `min λ_min(Re z⁻¹ K(z))` over `n_samples` contour points at `nu`,
    /// split into the density, stress and `z` blocks.
    pub fn positivity_of_k(&self, nu: f64, n_samples: usize) -> Result<KPositivity> {
        self.spec.law.check_nu(nu)?;
        let ts = crate::material_law::contour_times(n_samples);
        let per: Vec<(f64, f64, f64)> = ts
            .par_iter()
            .map(|&t| {
                let s = Complex64::new(nu, t);
                let z = s.inv();
                let rho = min_eig_hermitian(&self.rho_red.map(|x| x * s));
                let st = min_eig_hermitian(&self.stress_block(z).map(|x| x * s));
                let zb = (s * z).re;
                (rho, st, zb)
            })
            .collect();
        let fold = |f: fn(&(f64, f64, f64)) -> f64| per.iter().map(f).fold(f64::INFINITY, f64::min);
        let density = fold(|x| x.0);
        let stress = fold(|x| x.1);
        let z_block = fold(|x| x.2);
        Ok(KPositivity {
            density,
            stress,
            z_block,
            total: density.min(stress).min(z_block),
        })
    }

    /// `λ_min` of the Hermitian part of the `(w, y)` block of `z⁻¹M(z)`,
    /// which does not depend on `z`.
    fn boundary_block_margin(&self) -> f64 {
        let law = &self.spec.law;
        let z = Complex64::new(law.radius, 0.0);
        let start = 2 * self.spec.dim_x();
        let len = law.dim() - start;
        let m = law.evaluate_unchecked(z).map(|x| x / z);
        min_eig_hermitian(&hermitian_part(&m.view((start, start), (len, len)).into_owned()))
    }

    /// Sampled `λ_min(Re z⁻¹M(z))`, from the diagonal blocks.
    pub fn positivity_margin(&self, nu: f64, n_samples: usize) -> Result<f64> {
        let k = self.positivity_of_k(nu, n_samples)?;
        Ok(k.density.min(k.stress).min(self.boundary_block_margin()))
    }

    /// Well-posedness certificate with `c0` from the blocks of `K`.
    pub fn certify(&self, nu: f64, n_samples: usize) -> Result<WellPosednessCertificate> {
        let c0 = self.positivity_of_k(nu, n_samples)?.total;
        let c1 = min_eig_hermitian(&self.spec.law.m122);
        let (_, nj) = self.spec.law.coupling_j();
        Ok(certify_wellposedness(c0, c1, nj))
    }

    /// `ν/‖M‖ − ‖M⁻¹‖²L / (1 − ν⁻¹‖M⁻¹‖L)` with `L = |h|₁ + |g₀|`.
    pub fn stress_lower_bound(&self, nu: f64) -> f64 {
        let mnorm = spectral_norm(&self.m_red);
        let minv = 1.0 / min_eig_hermitian(&self.m_red);
        let l = self.cfg.kernel.bound_constant();
        nu / mnorm - minv * minv * l / (1.0 - minv * l / nu)
    }

    /// Per-bin block elimination of `(v, T, w, y)`; equivalent to the dense
    /// solve of `(∂₀M(∂₀⁻¹) + A) U = F` but O(r³) per bin with `r × r` blocks.
    pub fn solve(&self, forcing: &TimeSignal) -> Result<TimeSignal> {
        let spec = &self.spec;
        if forcing.dim() != spec.dim() {
            return Err(EvoError::Dimension(format!(
                "forcing dimension {} vs system dimension {}",
                forcing.dim(),
                spec.dim()
            )));
        }
        let grid = forcing.grid;
        spec.law.check_nu(grid.nu)?;
        let r = spec.dim_x();
        let dv = spec.dim_v();
        let gt: Vec<f64> = spec.reduced.sigma.clone();
        let c = &spec.c;
        let ch = c.adjoint();
        let chc = &ch * c;
        let sqrt2 = 2f64.sqrt();
        let kernel = &self.cfg.kernel;
        let spectrum = fourier_laplace(forcing);
        let out = spectrum.map_bins(spec.dim(), |k, rhs| {
            let Some(p) = grid.symbol(k) else {
                // p → ∞: v and T vanish, the boundary rows stay algebraic
                let mut u = CVec::zeros(rhs.len());
                let fw = rhs.rows(2 * r, dv).into_owned();
                let y = rhs.rows(2 * r + dv, dv) - fw.map(|v| v * sqrt2);
                u.rows_mut(2 * r, dv).copy_from(&fw);
                u.rows_mut(2 * r + dv, dv).copy_from(&y);
                return Ok(u);
            };
            let z = p.inv();
            let g = kernel.scaled_transform(z);
            // (pS)⁻¹ = z (M − g)
            let sinv = (&self.m_red - identity(r).map(|x| x * g)).map(|x| x * z);
            let fx = rhs.rows(0, r).into_owned();
            let fz = rhs.rows(r, r).into_owned();
            let fw = rhs.rows(2 * r, dv).into_owned();
            let fy = rhs.rows(2 * r + dv, dv).into_owned();
            let mut lhs = self.rho_red.map(|x| x * p) + &chc;
            for i in 0..r {
                for j in 0..r {
                    lhs[(i, j)] += gt[i] * sinv[(i, j)] * gt[j];
                }
            }
            let sfz = &sinv * &fz;
            let b = fx - CVec::from_fn(r, |i, _| gt[i] * sfz[i]) + &ch * &fw;
            let x = lu_solve_vec(&lhs, &b).ok_or(EvoError::IllPosed { tau: grid.freq(k) })?;
            let zeta = &sinv * (fz + CVec::from_fn(r, |i, _| gt[i] * x[i]));
            let w = fw - c * &x;
            let y = fy - w.map(|v| v * sqrt2);
            let mut u = CVec::zeros(rhs.len());
            u.rows_mut(0, r).copy_from(&x);
            u.rows_mut(r, r).copy_from(&zeta);
            u.rows_mut(2 * r, dv).copy_from(&w);
            u.rows_mut(2 * r + dv, dv).copy_from(&y);
            Ok(u)
        })?;
        Ok(inverse_fourier_laplace(&out))
    }

    /// Total forcing `f + B u`; `f` defaults to zero.
    pub fn forcing(&self, u: &TimeSignal, f: Option<&TimeSignal>) -> Result<TimeSignal> {
        if u.dim() != self.dim_u() {
            return Err(EvoError::Dimension(format!(
                "control has dimension {}, expected {}",
                u.dim(),
                self.dim_u()
            )));
        }
        let bu = u.map_pointwise(&self.spec.b);
        match f {
            Some(f) => f.add(&bu),
            None => Ok(bu),
        }
    }

    /// Elastic energy `½(⟨ρv|v⟩ + ⟨M⁻¹T|T⟩)` per sample.
    pub fn energy(&self, sol: &TimeSignal) -> Result<Vec<f64>> {
        let r = self.spec.dim_x();
        let minv = inverse(&self.m_red)?;
        Ok((0..sol.grid.n)
            .map(|k| {
                let s = sol.at(k);
                let v = s.rows(0, r);
                let t = s.rows(r, r);
                0.5 * ((v.adjoint() * &self.rho_red * v)[(0, 0)].re
                    + (t.adjoint() * &minv * t)[(0, 0)].re)
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KPositivity {
    pub density: f64,
    pub stress: f64,
    pub z_block: f64,
    pub total: f64,
}

/// Consistency report of one demo run. Defects are relative to the size of
/// the data (`‖u‖ + ‖f‖`), except the domain-condition defect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub n_space: usize,
    pub n_time: usize,
    pub nu: f64,
    pub kernel_l1: f64,
    pub residual: f64,
    pub positivity_margin: f64,
    pub certificate: WellPosednessCertificate,
    /// `w + √2u + Cv`, the control boundary equation in `U` coordinates.
    pub boundary_control_residual: f64,
    /// `w − Cv + √2y`, the observation boundary equation.
    pub boundary_observation_residual: f64,
    pub control_extraction_defect: f64,
    pub observation_extraction_defect: f64,
    pub recovered_u_defect: f64,
    pub extraction_residual: f64,
    pub domain_condition_defect: f64,
    pub causality_defect: f64,
    pub max_energy: f64,
    pub consistent: bool,
    pub domain_condition_ok: bool,
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    /// Reduced-coordinate solution `(v, T, w, y)`.
    pub solution: TimeSignal,
    /// Velocity on nodes.
    pub v: TimeSignal,
    /// Stress on cells.
    pub t: TimeSignal,
    pub w: TimeSignal,
    pub y: TimeSignal,
    pub energy: Vec<f64>,
    pub report: DemoReport,
}

pub const CONSISTENCY_TOL: f64 = 1e-8;
pub const DOMAIN_TOL: f64 = 1e-6;

/// Solves the rod for control `u` (and optional total-space forcing `f`),
/// extracts `(w, y)` and `(w, u)` from the block equations and reports all
/// cross-checks.
pub fn run_demo(sys: &ViscoSystem, u: &TimeSignal, f: Option<&TimeSignal>) -> Result<DemoOutput> {
    let spec = &sys.spec;
    let grid = u.grid;
    if (grid.nu - sys.cfg.nu).abs() > 0.0 {
        return Err(EvoError::IncompatibleGrid(format!(
            "grid nu = {} but config nu = {}",
            grid.nu, sys.cfg.nu
        )));
    }
    let forcing = sys.forcing(u, f)?;
    let f0 = match f {
        Some(f) => f.clone(),
        None => TimeSignal::zeros(grid, spec.dim()),
    };
    let sol = sys.solve(&forcing)?;
    let evo = spec.evolutionary_system(grid.nu)?;
    let res = residual(&evo, &sol, &forcing, &[])?;
    let margin = sys.positivity_margin(grid.nu, 200)?;
    let cert = sys.certify(grid.nu, 200)?;

    let r = spec.dim_x();
    let dv = spec.dim_v();
    let x = sol.slice(0, r);
    let zeta = sol.slice(r, r);
    let w = sol.slice(2 * r, dv);
    let y = sol.slice(2 * r + dv, dv);
    let cv = x.map_pointwise(&spec.c);
    let s2 = Complex64::new(2f64.sqrt(), 0.0);
    let scale = (u.norm() + f0.norm()).max(1e-300);
    let rel = |a: &TimeSignal| a.norm() / scale;

    let bc = w.add(&u.scaled(s2))?.add(&cv)?;
    let bo = w.sub(&cv)?.add(&y.scaled(s2))?;

    let ec = extract_control_equation(spec, &x, &zeta, &f0, u)?;
    let eo = extract_observation_equation(spec, &x, &zeta, &f0, &y)?;
    let ctrl_def = rel(&ec.w.sub(&w)?).max(rel(&ec.other.sub(&y)?));
    let obs_def = rel(&eo.w.sub(&w)?);
    let u_def = rel(&eo.other.sub(u)?);
    let dom = spec.domain_condition_defect_trajectory(&zeta, &w)?;
    let a = grid.midpoint();
    let cd = causality_defect(|g| sys.solve(g), &forcing, a)?;
    let causality = cd / forcing.norm().max(1e-300);
    let energy = sys.energy(&sol)?;

    let bc_r = rel(&bc);
    let bo_r = rel(&bo);
    let ext_res = ec.residual.max(eo.residual);
    let consistent = [bc_r, bo_r, ctrl_def, obs_def, u_def]
        .iter()
        .all(|&d| d <= CONSISTENCY_TOL)
        && ext_res <= 1e-9;
    let report = DemoReport {
        n_space: sys.cfg.n_cells,
        n_time: grid.n,
        nu: grid.nu,
        kernel_l1: sys.cfg.kernel.bound_constant(),
        residual: res,
        positivity_margin: margin,
        certificate: cert,
        boundary_control_residual: bc_r,
        boundary_observation_residual: bo_r,
        control_extraction_defect: ctrl_def,
        observation_extraction_defect: obs_def,
        recovered_u_defect: u_def,
        extraction_residual: ext_res,
        domain_condition_defect: dom,
        causality_defect: causality,
        max_energy: energy.iter().cloned().fold(0.0, f64::max),
        consistent,
        domain_condition_ok: dom <= DOMAIN_TOL,
    };
    let red = &spec.reduced;
    let v_full = TimeSignal::new(grid, x.samples.clone() * red.lift0.transpose())?;
    let t_full = TimeSignal::new(grid, zeta.samples.clone() * red.lift1.transpose())?;
    Ok(DemoOutput {
        solution: sol,
        v: v_full,
        t: t_full,
        w,
        y,
        energy,
        report,
    })
}

/// Relative `L²_ν` difference between the run with the configured kernel and
/// the purely elastic run (kernel zero).
pub fn memory_effect(cfg: &ViscoSystemConfig, u: &TimeSignal) -> Result<f64> {
    let with = assemble_visco_system(cfg)?;
    let mut elastic_cfg = cfg.clone();
    elastic_cfg.kernel = MemoryKernel::zero();
    let without = assemble_visco_system(&elastic_cfg)?;
    let a = with.solve(&with.forcing(u, None)?)?;
    let b = without.solve(&without.forcing(u, None)?)?;
    Ok(a.sub(&b)?.norm() / b.norm().max(1e-300))
}
