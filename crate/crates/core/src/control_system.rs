//! Abstract boundary control systems `C_{M,F,B}` with `F = (−G; C)`.
//!
//! Everything is assembled on the reduced spaces `(ker G)^⊥ → ran G` in
//! orthonormal coordinates, where `G̃ = diag(σ)` and the weighted adjoint is
//! the conjugate transpose. The total space is ordered `(x, ζ, w, y)`.
//!
//! The system operator is `[[0, −F*, 0], [F, 0, 0], [0, 0, 0]]`, which makes
//! the first row read `∂₀ρx + G̃*ζ − C*w` as in the visco-elastic example.

use nalgebra::SVD;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::ops::Range;

use crate::boundary_data::{trace_functional_d, SobolevMetric};
use crate::discrete_ops::OperatorQuartet;
use crate::error::{EvoError, Result};
use crate::evo_solver::EvolutionarySystem;
use crate::linalg::{
    fro, inv_sqrt_hpd, lu_solve, random_cvec, spectral_norm, sqrt_hpd, CMat, CVec,
};
use crate::material_law::MaterialLaw;
use crate::weighted_time::{fourier_laplace, inverse_fourier_laplace, SpectralSignal, TimeSignal};

pub const ADJOINT_TOL: f64 = 1e-10;

/// A quartet together with orthonormal coordinates on `(ker G)^⊥` and `ran G`.
#[derive(Debug, Clone)]
pub struct ReducedQuartet {
    pub quartet: OperatorQuartet,
    pub metric: SobolevMetric,
    pub sigma: Vec<f64>,
    /// `n0 × r`, columns orthonormal in the `H0` weight.
    pub lift0: CMat,
    /// `n1 × r`, columns orthonormal in the `H1` weight.
    pub lift1: CMat,
}

impl ReducedQuartet {
    pub fn new(q: &OperatorQuartet, rel_tol: f64) -> Result<Self> {
        let s0: Vec<f64> = q.w0.iter().map(|w| w.sqrt()).collect();
        let s1: Vec<f64> = q.w1.iter().map(|w| w.sqrt()).collect();
        let m = CMat::from_fn(q.n1(), q.n0(), |i, j| q.gmax[(i, j)] * (s1[i] / s0[j]));
        let svd = SVD::new(m, true, true);
        let u = svd.u.ok_or_else(|| EvoError::Singular("SVD of G".into()))?;
        let v = svd
            .v_t
            .ok_or_else(|| EvoError::Singular("SVD of G".into()))?
            .adjoint();
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let mut idx: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > rel_tol * smax)
            .collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        if idx.is_empty() {
            return Err(EvoError::Precondition("G vanishes, reduced space is empty".into()));
        }
        let sigma: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
        let lift0 = CMat::from_fn(q.n0(), idx.len(), |i, k| v[(i, idx[k])] / s0[i]);
        let lift1 = CMat::from_fn(q.n1(), idx.len(), |i, k| u[(i, idx[k])] / s1[i]);
        Ok(ReducedQuartet {
            quartet: q.clone(),
            metric: SobolevMetric::new(q)?,
            sigma,
            lift0,
            lift1,
        })
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `G̃ = diag(σ)`.
    pub fn g_tilde(&self) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(
            self.rank(),
            self.sigma.iter().map(|&s| Complex64::new(s, 0.0)),
        ))
    }

    /// Orthonormal coordinates of the projection of `x ∈ H0` onto `(ker G)^⊥`.
    pub fn reduce_h0(&self, x: &CMat) -> CMat {
        self.lift0.adjoint() * self.quartet.w0_mat() * x
    }

    /// Orthonormal coordinates of the projection of `ζ ∈ H1` onto `ran G`.
    pub fn reduce_h1(&self, z: &CMat) -> CMat {
        self.lift1.adjoint() * self.quartet.w1_mat() * z
    }

    pub fn lift_h0(&self, x: &CMat) -> CMat {
        &self.lift0 * x
    }

    pub fn lift_h1(&self, z: &CMat) -> CMat {
        &self.lift1 * z
    }

    /// Maps reduced `ζ` to the covector of `γ_D ζ`.
    pub fn trace_matrix(&self) -> CMat {
        let q = &self.quartet;
        (q.w0_mat() * &q.dmax + q.gmax.adjoint() * q.w1_mat()) * &self.lift1
    }
}

/// `F = (−G̃; C)` and its adjoint `F* = (−G̃ᴴ, Cᴴ)` in orthonormal coordinates.
/// `F*` acts as `D̊ζ + C◇w`.
pub fn assemble_f(g_tilde: &CMat, c: &CMat) -> Result<(CMat, CMat)> {
    let r = g_tilde.ncols();
    if g_tilde.nrows() != r || c.ncols() != r {
        return Err(EvoError::Dimension(format!(
            "G̃ is {}x{}, C is {}x{}",
            g_tilde.nrows(),
            g_tilde.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let dv = c.nrows();
    let mut f = CMat::zeros(r + dv, r);
    f.view_mut((0, 0), (r, r)).copy_from(&(-g_tilde));
    f.view_mut((r, 0), (dv, r)).copy_from(c);
    let mut fs = CMat::zeros(r, r + dv);
    fs.view_mut((0, 0), (r, r)).copy_from(&(-g_tilde.adjoint()));
    fs.view_mut((0, r), (r, dv)).copy_from(&c.adjoint());
    let defect = fro(&(f.adjoint() - &fs));
    if defect > ADJOINT_TOL * fro(&f).max(1.0) {
        return Err(EvoError::Consistency(format!("F* defect {defect:e}")));
    }
    Ok((f, fs))
}

#[derive(Debug, Clone)]
pub struct BoundaryControlSpec {
    pub reduced: ReducedQuartet,
    /// Observation map `C`, `dim_v × r`, orthonormal coordinates on both sides.
    pub c: CMat,
    /// Representer of `C◇`, `r × dim_v`.
    pub c_dual: CMat,
    /// `Γ_V^{1/2}`: converts `V` coordinates into orthonormal ones.
    pub v_sqrt: CMat,
    /// Control injection, `total × dim_u`.
    pub b: CMat,
    pub law: MaterialLaw,
}

impl BoundaryControlSpec {
    /// `c_full` acts on full `H0` vectors and lands in `V` coordinates with
    /// Gram matrix `v_gram`. The law must be split as `(r, r + dim_v)`.
    pub fn new(
        reduced: ReducedQuartet,
        c_full: &CMat,
        v_gram: &CMat,
        b: CMat,
        law: MaterialLaw,
    ) -> Result<Self> {
        let dv = v_gram.nrows();
        if c_full.nrows() != dv || c_full.ncols() != reduced.quartet.n0() {
            return Err(EvoError::Dimension(format!(
                "C is {}x{}, expected {dv}x{}",
                c_full.nrows(),
                c_full.ncols(),
                reduced.quartet.n0()
            )));
        }
        let v_sqrt = sqrt_hpd(v_gram)?;
        let c = &v_sqrt * c_full * &reduced.lift0;
        Self::from_orthonormal(reduced, c, v_sqrt, b, law)
    }

    /// `c` already in orthonormal coordinates.
    pub fn from_orthonormal(
        reduced: ReducedQuartet,
        c: CMat,
        v_sqrt: CMat,
        b: CMat,
        law: MaterialLaw,
    ) -> Result<Self> {
        let r = reduced.rank();
        let dv = c.nrows();
        let (_, fs) = assemble_f(&reduced.g_tilde(), &c)?;
        let c_dual = fs.columns(r, dv).into_owned();
        if law.split_h0h1 != (r, r + dv) {
            return Err(EvoError::Dimension(format!(
                "law split {:?}, expected ({r}, {})",
                law.split_h0h1,
                r + dv
            )));
        }
        if b.nrows() != law.dim() {
            return Err(EvoError::Dimension(format!(
                "B has {} rows, total dimension is {}",
                b.nrows(),
                law.dim()
            )));
        }
        if v_sqrt.nrows() != dv || v_sqrt.ncols() != dv {
            return Err(EvoError::Dimension("V metric size".into()));
        }
        Ok(BoundaryControlSpec {
            reduced,
            c,
            c_dual,
            v_sqrt,
            b,
            law,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.reduced.rank()
    }

    pub fn dim_v(&self) -> usize {
        self.c.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.law.dim_obs
    }

    pub fn dim_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn x_range(&self) -> Range<usize> {
        0..self.dim_x()
    }

    pub fn zeta_range(&self) -> Range<usize> {
        let r = self.dim_x();
        r..2 * r
    }

    pub fn w_range(&self) -> Range<usize> {
        let r = self.dim_x();
        2 * r..2 * r + self.dim_v()
    }

    pub fn y_range(&self) -> Range<usize> {
        let s = 2 * self.dim_x() + self.dim_v();
        s..s + self.dim_y()
    }

    pub fn f_pair(&self) -> (CMat, CMat) {
        assemble_f(&self.reduced.g_tilde(), &self.c).expect("checked at construction")
    }

    /// `[[0, −F*, 0], [F, 0, 0], [0, 0, 0]]`.
    pub fn system_operator(&self) -> CMat {
        let (f, fs) = self.f_pair();
        let r = self.dim_x();
        let h1 = f.nrows();
        let mut a = CMat::zeros(self.dim(), self.dim());
        a.view_mut((0, r), (r, h1)).copy_from(&(-fs));
        a.view_mut((r, 0), (h1, r)).copy_from(&f);
        a
    }

    pub fn evolutionary_system(&self, nu: f64) -> Result<EvolutionarySystem> {
        EvolutionarySystem::new(self.law.clone(), self.system_operator(), nu)
    }

    /// `⟨Fx|(ζ,w)⟩ − ⟨x|F*(ζ,w)⟩` evaluated in the original weighted
    /// coordinates over random pairs, relative to the product of norms.
    pub fn adjoint_defect(&self, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let red = &self.reduced;
        let q = &red.quartet;
        let (f, fs) = self.f_pair();
        let f_norm = spectral_norm(&f).max(1.0);
        let c_full = self.c_in_v_coords();
        let v_gram = &self.v_sqrt * &self.v_sqrt;
        let r = self.dim_x();
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let xr = col(&random_cvec(&mut rng, r));
            let zr = col(&random_cvec(&mut rng, r));
            let w = col(&random_cvec(&mut rng, self.dim_v()));
            let x = red.lift_h0(&xr);
            let z = red.lift_h1(&zr);
            let gx = -(&q.gmax * &x);
            let lhs = (z.adjoint() * q.w1_mat() * gx)[(0, 0)]
                + (w.adjoint() * &v_gram * (&c_full * &xr))[(0, 0)];
            let mut zw = CMat::zeros(r + self.dim_v(), 1);
            zw.view_mut((0, 0), (r, 1)).copy_from(&zr);
            zw.view_mut((r, 0), (self.dim_v(), 1))
                .copy_from(&(&self.v_sqrt * &w));
            let fsx = red.lift_h0(&(&fs * zw));
            let rhs = (fsx.adjoint() * q.w0_mat() * &x)[(0, 0)];
            let scale = (fro(&xr) * (fro(&zr) + fro(&(&self.v_sqrt * &w)))).max(1e-300)
                * f_norm;
            worst = worst.max((lhs - rhs).norm() / scale);
        }
        worst
    }

    /// `C` mapping reduced `x` to `V` coordinates.
    fn c_in_v_coords(&self) -> CMat {
        lu_solve(&self.v_sqrt, &self.c).expect("V metric is positive definite")
    }

    /// `ζ₀ = −D̊⁻¹C◇w = (G̃ᴴ)⁻¹ Cᴴ w`, the reduced `ζ` that cancels `w`.
    pub fn admissible_zeta(&self, w: &CVec) -> CVec {
        let s = &self.c_dual * w;
        CVec::from_fn(s.len(), |i, _| s[i] / self.reduced.sigma[i])
    }

    /// `H₋₁(|G| + i)` norm of `γ_D(ζ + D̊⁻¹C◇w)` for reduced `ζ` and
    /// orthonormal `w`.
    pub fn domain_condition_defect(&self, zeta: &CVec, w: &CVec) -> f64 {
        let e = zeta - self.admissible_zeta(w);
        let full = self.reduced.lift_h1(&col(&e));
        trace_functional_d(&self.reduced.quartet, &self.reduced.metric, &full).norm
    }

    /// Nearest `ζ'` (least squares in reduced coordinates) with
    /// `γ_D(ζ' + D̊⁻¹C◇w) = 0`.
    pub fn project_admissible(&self, zeta: &CVec, w: &CVec) -> Result<CVec> {
        let t = self.reduced.trace_matrix();
        let e = zeta - self.admissible_zeta(w);
        let te = &t * &e;
        let pinv = t
            .clone()
            .pseudo_inverse(1e-12 * spectral_norm(&t).max(1e-300))
            .map_err(|m| EvoError::Singular(m.to_string()))?;
        Ok(zeta - pinv * te)
    }

    /// Per-sample supremum of the domain-condition defect along trajectories.
    pub fn domain_condition_defect_trajectory(
        &self,
        zeta: &TimeSignal,
        w: &TimeSignal,
    ) -> Result<f64> {
        zeta.grid.check_compatible(&w.grid)?;
        check_dim("zeta", zeta, self.dim_x())?;
        check_dim("w", w, self.dim_v())?;
        // ‖s‖_{H₋₁} = ‖Γ^{-1/2} s‖ with Γ the H1(|G| + i) Gram matrix
        let whiten = inv_sqrt_hpd(&self.reduced.metric.gram_g)? * self.reduced.trace_matrix();
        let adm = CMat::from_fn(self.dim_x(), self.dim_v(), |i, j| {
            self.c_dual[(i, j)] / self.reduced.sigma[i]
        });
        let e = &zeta.samples - &w.samples * adm.transpose();
        let defects = e * whiten.transpose();
        Ok(defects
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max))
    }
}

/// Output of an extraction: the `V` component, the other unknown and the
/// relative residual of the block solve.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub w: TimeSignal,
    pub other: TimeSignal,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtractionReport {
    pub residual: f64,
}

fn col(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

fn check_dim(name: &str, s: &TimeSignal, d: usize) -> Result<()> {
    if s.dim() != d {
        return Err(EvoError::Dimension(format!(
            "{name} has dimension {}, expected {d}",
            s.dim()
        )));
    }
    Ok(())
}

fn rows(m: &CMat, r: &[usize], c: &[usize]) -> CMat {
    CMat::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])])
}

fn pick(v: &CVec, idx: &[usize]) -> CVec {
    CVec::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Shared per-bin block solve. `known` stacks the known trajectories in the
/// order of `known_cols`; `unknown_cols` lists total-space columns solved
/// for, followed by `extra` (columns of `−B`) when present.
fn block_solve(
    spec: &BoundaryControlSpec,
    known: &SpectralSignal,
    known_cols: &[usize],
    f: &SpectralSignal,
    bu: Option<&SpectralSignal>,
    unknown_cols: &[usize],
    use_b_as_unknown: bool,
) -> Result<(SpectralSignal, f64)> {
    let grid = f.grid;
    let sys_a = spec.system_operator();
    let eq_rows: Vec<usize> = spec.w_range().chain(spec.y_range()).collect();
    let n_unknown = unknown_cols.len() + if use_b_as_unknown { spec.dim_u() } else { 0 };
    if n_unknown != eq_rows.len() {
        return Err(EvoError::Dimension(format!(
            "{n_unknown} unknowns against {} equations",
            eq_rows.len()
        )));
    }
    let b_rows = rows(&spec.b, &eq_rows, &(0..spec.dim_u()).collect::<Vec<_>>());
    let per_bin: Vec<Result<(CVec, f64, f64)>> = {
        use rayon::prelude::*;
        (0..grid.n)
            .into_par_iter()
            .map(|k| {
                let Some(p) = grid.symbol(k) else {
                    return Ok((CVec::zeros(n_unknown), 0.0, 0.0));
                };
                let mbin = spec.law.evaluate_unchecked(p.inv()).map(|x| x * p) + &sys_a;
                let mut lhs = CMat::zeros(n_unknown, n_unknown);
                lhs.view_mut((0, 0), (eq_rows.len(), unknown_cols.len()))
                    .copy_from(&rows(&mbin, &eq_rows, unknown_cols));
                if use_b_as_unknown {
                    lhs.view_mut((0, unknown_cols.len()), (eq_rows.len(), spec.dim_u()))
                        .copy_from(&(-&b_rows));
                }
                let mut rhs = pick(&f.bin(k), &eq_rows)
                    - rows(&mbin, &eq_rows, known_cols) * known.bin(k);
                if let Some(bu) = bu {
                    rhs += &b_rows * bu.bin(k);
                }
                let sol = lu_solve(&lhs, &col(&rhs)).ok_or_else(|| {
                    EvoError::Singular(format!(
                        "extraction block at bin {k} (tau = {})",
                        grid.freq(k)
                    ))
                })?;
                let sol = sol.column(0).into_owned();
                let res = (&lhs * &sol - &rhs).norm_squared();
                Ok((sol, res, rhs.norm_squared()))
            })
            .collect()
    };
    let mut out = SpectralSignal::zeros(grid, n_unknown);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, r) in per_bin.into_iter().enumerate() {
        let (v, a, b) = r?;
        out.set_bin(k, &v);
        num += a;
        den += b;
    }
    Ok((out, num.sqrt() / den.sqrt().max(1e-300)))
}

fn stack(parts: &[&TimeSignal]) -> Result<TimeSignal> {
    let grid = parts[0].grid;
    let dim: usize = parts.iter().map(|s| s.dim()).sum();
    let mut out = TimeSignal::zeros(grid, dim);
    let mut off = 0;
    for s in parts {
        grid.check_compatible(&s.grid)?;
        out.samples
            .view_mut((0, off), (grid.n, s.dim()))
            .copy_from(&s.samples);
        off += s.dim();
    }
    Ok(out)
}

/// Solves the `(w, y)` rows given `x`, `ζ`, forcing `f` (total space) and
/// control `u`: `[[∂₀K_VV, M112_V], [M121_V, M122]] (w; y) = rhs`.
pub fn extract_control_equation(
    spec: &BoundaryControlSpec,
    x: &TimeSignal,
    zeta: &TimeSignal,
    f: &TimeSignal,
    u: &TimeSignal,
) -> Result<Extraction> {
    spec.law.check_nu(f.grid.nu)?;
    check_dim("x", x, spec.dim_x())?;
    check_dim("zeta", zeta, spec.dim_x())?;
    check_dim("f", f, spec.dim())?;
    check_dim("u", u, spec.dim_u())?;
    let known = fourier_laplace(&stack(&[x, zeta])?);
    let known_cols: Vec<usize> = spec.x_range().chain(spec.zeta_range()).collect();
    let unknown: Vec<usize> = spec.w_range().chain(spec.y_range()).collect();
    let (sol, residual) = block_solve(
        spec,
        &known,
        &known_cols,
        &fourier_laplace(f),
        Some(&fourier_laplace(u)),
        &unknown,
        false,
    )?;
    let t = inverse_fourier_laplace(&sol);
    Ok(Extraction {
        w: t.slice(0, spec.dim_v()),
        other: t.slice(spec.dim_v(), spec.dim_y()),
        residual,
    })
}

/// Solves for `(w, u)` given `x`, `ζ`, `f` and the observation `y`:
/// `[[∂₀K_VV, −B_V], [M121_V, −B_Y]] (w; u) = rhs`.
pub fn extract_observation_equation(
    spec: &BoundaryControlSpec,
    x: &TimeSignal,
    zeta: &TimeSignal,
    f: &TimeSignal,
    y: &TimeSignal,
) -> Result<Extraction> {
    spec.law.check_nu(f.grid.nu)?;
    check_dim("x", x, spec.dim_x())?;
    check_dim("zeta", zeta, spec.dim_x())?;
    check_dim("f", f, spec.dim())?;
    check_dim("y", y, spec.dim_y())?;
    let known = fourier_laplace(&stack(&[x, zeta, y])?);
    let known_cols: Vec<usize> = spec
        .x_range()
        .chain(spec.zeta_range())
        .chain(spec.y_range())
        .collect();
    let unknown: Vec<usize> = spec.w_range().collect();
    let (sol, residual) = block_solve(
        spec,
        &known,
        &known_cols,
        &fourier_laplace(f),
        None,
        &unknown,
        true,
    )?;
    let t = inverse_fourier_laplace(&sol);
    Ok(Extraction {
        w: t.slice(0, spec.dim_v()),
        other: t.slice(spec.dim_v(), spec.dim_u()),
        residual,
    })
}
