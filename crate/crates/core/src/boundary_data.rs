//! Boundary data spaces `BD(G) = dom(G̊)^⊥ ⊆ H1(|G| + i)` and `BD(D)`, the
//! abstract traces `γ_G = G − G̊` as `H₋₁` functionals, the unitary
//! restrictions `Ĝ`, `Ḋ` and the Dirichlet-to-Neumann operator.
//!
//! Trace spaces are represented by their `BD` preimages. `γ_G` restricted to
//! `BD(G)` is isometric onto `TR(G)`, so orthonormal `BD` coordinates are also
//! orthonormal trace coordinates.

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::Serialize;

use crate::discrete_ops::OperatorQuartet;
use crate::error::{EvoError, Result};
use crate::linalg::{
    cholesky, identity, inv_sqrt_hpd, lu_solve, nullspace, principal_angle_sin, singular_values,
    spectral_norm, CMat,
};

pub const DEFAULT_NULL_TOL: f64 = 1e-8;
pub const ANGLE_TOL: f64 = 1e-9;
pub const HAT_TOL: f64 = 1e-10;

/// Gram matrices of `H1(|G| + i)` and `H1(|D| + i)` with their Cholesky
/// factors.
#[derive(Clone)]
pub struct SobolevMetric {
    pub gram_g: CMat,
    pub gram_d: CMat,
    chol_g: Cholesky<Complex64, nalgebra::Dyn>,
    chol_d: Cholesky<Complex64, nalgebra::Dyn>,
}

impl std::fmt::Debug for SobolevMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SobolevMetric({}, {})", self.gram_g.nrows(), self.gram_d.nrows())
    }
}

impl SobolevMetric {
    pub fn new(q: &OperatorQuartet) -> Result<Self> {
        let gram_g = q.gram_g();
        let gram_d = q.gram_d();
        let chol_g = cholesky(&gram_g)?;
        let chol_d = cholesky(&gram_d)?;
        Ok(SobolevMetric {
            gram_g,
            gram_d,
            chol_g,
            chol_d,
        })
    }

    pub fn norm_g(&self, u: &CMat) -> f64 {
        quad(&self.gram_g, u)
    }

    pub fn norm_d(&self, v: &CMat) -> f64 {
        quad(&self.gram_d, v)
    }

    /// `H₋₁(|D| + i)` norm of the functional `v ↦ rᴴ v` on `H1(|D| + i)`.
    pub fn dual_norm_d(&self, r: &CMat) -> f64 {
        let x = self.chol_d.solve(r);
        (r.adjoint() * x)[(0, 0)].re.max(0.0).sqrt()
    }

    /// `H₋₁(|G| + i)` norm of the functional `x ↦ sᴴ x` on `H1(|G| + i)`.
    pub fn dual_norm_g(&self, s: &CMat) -> f64 {
        let x = self.chol_g.solve(s);
        (s.adjoint() * x)[(0, 0)].re.max(0.0).sqrt()
    }
}

fn quad(g: &CMat, u: &CMat) -> f64 {
    (u.adjoint() * g * u)[(0, 0)].re.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    G,
    D,
}

/// The functional `v ↦ ⟨Gu|v⟩ + ⟨u|Dv⟩` (or the `D`-side analogue).
#[derive(Debug, Clone)]
pub struct TraceFunctional {
    /// Coefficient covector: the functional is `v ↦ covectorᴴ v`.
    pub covector: CMat,
    /// Representer in the unweighted-coordinate `H0`/`H1` inner product.
    pub representer: CMat,
    pub norm: f64,
}

/// `γ_G u` for `u ∈ H0`, as a functional on `H1(|D| + i)`.
pub fn trace_functional(q: &OperatorQuartet, metric: &SobolevMetric, u: &CMat) -> TraceFunctional {
    let w0 = q.w0_mat();
    let w1 = q.w1_mat();
    let r = &w1 * &q.gmax * u + q.dmax.adjoint() * &w0 * u;
    let rep = CMat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] / q.w1[i]);
    let norm = metric.dual_norm_d(&r);
    TraceFunctional {
        covector: r,
        representer: rep,
        norm,
    }
}

/// `γ_D v` for `v ∈ H1`, as a functional on `H1(|G| + i)`.
pub fn trace_functional_d(
    q: &OperatorQuartet,
    metric: &SobolevMetric,
    v: &CMat,
) -> TraceFunctional {
    let w0 = q.w0_mat();
    let w1 = q.w1_mat();
    let s = &w0 * &q.dmax * v + q.gmax.adjoint() * &w1 * v;
    let rep = CMat::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] / q.w0[i]);
    let norm = metric.dual_norm_g(&s);
    TraceFunctional {
        covector: s,
        representer: rep,
        norm,
    }
}

/// Symmetric (Löwdin) orthonormalization in the metric `gram`; keeps each
/// column attached to its boundary coordinate.
fn lowdin(gram: &CMat, b: &CMat) -> Result<CMat> {
    if b.ncols() == 0 {
        return Ok(b.clone());
    }
    let small = b.adjoint() * gram * b;
    Ok(b * inv_sqrt_hpd(&small)?)
}

fn selection(n: usize, idx: &[usize]) -> CMat {
    let mut e = CMat::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        e[(i, j)] = Complex64::new(1.0, 0.0);
    }
    e
}

/// Basis of `BD` from the orthocomplement of the minimal domain:
/// `Γ⁻¹ E_bnd`, orthonormalized.
pub fn bd_basis_orthocomplement(
    q: &OperatorQuartet,
    metric: &SobolevMetric,
    side: Side,
) -> Result<CMat> {
    let (gram, bnd, n) = match side {
        Side::G => (&metric.gram_g, q.boundary_h0(), q.n0()),
        Side::D => (&metric.gram_d, q.boundary_h1(), q.n1()),
    };
    let e = selection(n, &bnd);
    let raw = lu_solve(gram, &e).ok_or_else(|| EvoError::Singular("Sobolev Gram".into()))?;
    lowdin(gram, &raw)
}

/// Basis of `ker(1 − DG)` (side `G`) or `ker(1 − GD)` (side `D`) from the SVD.
pub fn bd_basis_nullspace(
    q: &OperatorQuartet,
    metric: &SobolevMetric,
    side: Side,
    rel_tol: f64,
) -> Result<CMat> {
    let (m, gram) = match side {
        Side::G => (identity(q.n0()) - &q.dmax * &q.gmax, &metric.gram_g),
        Side::D => (identity(q.n1()) - &q.gmax * &q.dmax, &metric.gram_d),
    };
    let n = nullspace(&m, rel_tol);
    crate::linalg::orthonormalize_in(gram, &n)
}

/// Orthonormal `BD` basis, checked against the second construction.
/// Returns the basis and the largest principal-angle sine between the two.
pub fn bd_basis(
    q: &OperatorQuartet,
    metric: &SobolevMetric,
    side: Side,
    rel_tol: f64,
) -> Result<(CMat, f64)> {
    let a = bd_basis_orthocomplement(q, metric, side)?;
    let b = bd_basis_nullspace(q, metric, side, rel_tol)?;
    let gram = match side {
        Side::G => &metric.gram_g,
        Side::D => &metric.gram_d,
    };
    let angle = principal_angle_sin(gram, &a, &b);
    if a.ncols() != b.ncols() || angle > ANGLE_TOL {
        return Err(EvoError::Consistency(format!(
            "BD({side:?}): orthocomplement has dimension {}, kernel has dimension {}, angle {angle:e}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok((a, angle))
}

#[derive(Debug, Clone)]
pub struct BDSpaces {
    pub metric: SobolevMetric,
    pub basis_bdg: CMat,
    pub basis_bdd: CMat,
    /// `Ĝ : BD(G) → BD(D)` in the orthonormal bases.
    pub ghat: CMat,
    /// `Ḋ : BD(D) → BD(G)`.
    pub dhat: CMat,
    /// DtN `TR(G) → TR(D)` in trace coordinates.
    pub dtn: CMat,
    pub angle_g: f64,
    pub angle_d: f64,
    pub null_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HatReport {
    /// `‖Ḋ Ĝ − 1‖`.
    pub inverse_defect: f64,
    /// `‖Ĝᴴ − Ḋ‖` (adjoint in the BD metrics).
    pub adjoint_defect: f64,
    /// `max |σ(Ĝ) − 1|`.
    pub unitarity_defect: f64,
    /// `max |σ(DtN) − 1|`.
    pub dtn_unitarity_defect: f64,
}

/// Matrices of `Ĝ` and `Ḋ` in the given orthonormal bases.
pub fn bd_hat_operators(
    q: &OperatorQuartet,
    metric: &SobolevMetric,
    bdg: &CMat,
    bdd: &CMat,
) -> Result<(CMat, CMat)> {
    let ghat = bdd.adjoint() * &metric.gram_d * &q.gmax * bdg;
    let dhat = bdg.adjoint() * &metric.gram_g * &q.dmax * bdd;
    // Ĝ must land in BD(D): the projection must not lose anything
    let lost = &q.gmax * bdg - bdd * &ghat;
    let lost_norm = (0..lost.ncols())
        .map(|j| metric.norm_d(&lost.columns(j, 1).into_owned()))
        .fold(0.0, f64::max);
    let inv = if ghat.nrows() > 0 {
        spectral_norm(&(&dhat * &ghat - identity(ghat.ncols())))
    } else {
        0.0
    };
    if lost_norm > HAT_TOL || inv > HAT_TOL {
        return Err(EvoError::Consistency(format!(
            "Ĝ leaves BD(D) by {lost_norm:e}, ‖ḊĜ − 1‖ = {inv:e}"
        )));
    }
    Ok((ghat, dhat))
}

pub fn build_bd_spaces(q: &OperatorQuartet, rel_tol: f64) -> Result<BDSpaces> {
    let metric = SobolevMetric::new(q)?;
    let (bdg, angle_g) = bd_basis(q, &metric, Side::G, rel_tol)?;
    let (bdd, angle_d) = bd_basis(q, &metric, Side::D, rel_tol)?;
    let (ghat, dhat) = bd_hat_operators(q, &metric, &bdg, &bdd)?;
    let dtn = dirichlet_to_neumann(&ghat);
    Ok(BDSpaces {
        metric,
        basis_bdg: bdg,
        basis_bdd: bdd,
        ghat,
        dhat,
        dtn,
        angle_g,
        angle_d,
        null_tol: rel_tol,
    })
}

/// `γ_D|BD(D) ∘ Ĝ ∘ (γ_G|BD(G))⁻¹`. With trace spaces carried by their
/// orthonormal BD preimages both traces are the identity in coordinates.
pub fn dirichlet_to_neumann(ghat: &CMat) -> CMat {
    ghat.clone()
}

/// DtN in boundary coordinates: Dirichlet values on the boundary `H0`
/// coordinates of the `BD(G)` extension, mapped to the flux covector
/// `(Γ_G u)_b`.
pub fn dtn_boundary_coordinates(q: &OperatorQuartet, metric: &SobolevMetric) -> Result<CMat> {
    let bnd = q.boundary_h0();
    let e = selection(q.n0(), &bnd);
    let raw = lu_solve(&metric.gram_g, &e).ok_or_else(|| EvoError::Singular("Γ_G".into()))?;
    // raw has boundary values (E^H Γ⁻¹ E); normalize to unit boundary values
    let vals = e.adjoint() * &raw;
    let ext = &raw * crate::linalg::inverse(&vals)?;
    Ok(e.adjoint() * &metric.gram_g * ext)
}

impl BDSpaces {
    pub fn report(&self) -> HatReport {
        let unit = |m: &CMat| {
            singular_values(m)
                .iter()
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let k = self.ghat.ncols();
        HatReport {
            inverse_defect: if k > 0 {
                spectral_norm(&(&self.dhat * &self.ghat - identity(k)))
            } else {
                0.0
            },
            adjoint_defect: if k > 0 {
                spectral_norm(&(self.ghat.adjoint() - &self.dhat))
            } else {
                0.0
            },
            unitarity_defect: unit(&self.ghat),
            dtn_unitarity_defect: unit(&self.dtn),
        }
    }

    pub fn dim_bdg(&self) -> usize {
        self.basis_bdg.ncols()
    }

    pub fn dim_bdd(&self) -> usize {
        self.basis_bdd.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_ops::build_interval_ops;

    #[test]
    fn interval_has_two_dimensional_bd() {
        let q = build_interval_ops(8, 0.125).unwrap();
        let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL).unwrap();
        assert_eq!(bd.dim_bdg(), 2);
        assert_eq!(bd.dim_bdd(), 2);
        let r = bd.report();
        assert!(r.inverse_defect < 1e-10 && r.unitarity_defect < 1e-10, "{r:?}");
    }

    #[test]
    fn trace_of_interior_vector_vanishes() {
        let q = build_interval_ops(8, 0.125).unwrap();
        let m = SobolevMetric::new(&q).unwrap();
        let mut u = CMat::zeros(9, 1);
        u[(3, 0)] = Complex64::new(1.0, 0.0);
        assert!(trace_functional(&q, &m, &u).norm < 1e-12);
    }
}
