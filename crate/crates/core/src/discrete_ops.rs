//! Formally skew-adjoint operator pairs `(G̊, G, D̊, D)` on staggered grids.
//!
//! `H0` and `H1` are coordinate spaces with diagonal quadrature weights
//! `w0`, `w1`. `G` is the full difference matrix. `G̊ = G E_intG` restricts it
//! to the boundary-vanishing subspace. `D̊ = D E_intD` is a restriction of
//! `D` to a subspace of `H1` with the same codimension.
//!
//! `D` is not simply the weighted adjoint `-W0⁻¹ Gᴴ W1`. On its own that
//! adjoint makes `ker(1 − DG)` trivial. Instead
//!
//! ```text
//! D = S − W0⁻¹ Gᴴ W1,      S [G B_G, E_intD] = [W0⁻¹ Γ_G B_G, 0],
//! ```
//!
//! with `Γ_G = W0 + Gᴴ W1 G` and `B_G = Γ_G⁻¹ E_bnd`. The closure `S` lives on
//! boundary rows only, so both duality relations
//! `⟨G̊x, y⟩ = −⟨x, Dy⟩` and `⟨Gx, y⟩ = −⟨x, D̊y⟩` hold exactly. It also makes
//! `DG = 1` on the `Γ_G`-orthocomplement of `dom(G̊)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::linalg::{
    c, inverse, max_eig_hermitian, random_cvec, range_basis, singular_values, CMat, ZERO,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartetMeta {
    /// `interval`, `grid2d`, `elasticity2d`, `no_boundary`, ...
    pub kind: String,
    pub sizes: Vec<usize>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorQuartet {
    pub gmax: CMat,
    pub dmax: CMat,
    pub e_int_g: CMat,
    pub e_int_d: CMat,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub meta: QuartetMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    /// Largest of the two duality defects, relative to `‖G‖`.
    pub max_defect: f64,
    /// `‖G E_intG − G̊‖` and `‖D E_intD − D̊‖` (zero by construction).
    pub inclusion_defect: f64,
    /// Smallest singular value of `G̊` between the weighted spaces.
    pub poincare: f64,
    pub flagged: bool,
}

pub const DUALITY_TOL: f64 = 1e-13;

fn wdiag(w: &[f64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(w.len(), w.iter().map(|&x| c(x))))
}

fn selection(n: usize, keep: &[usize]) -> CMat {
    let mut e = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        e[(i, j)] = c(1.0);
    }
    e
}

fn complement(n: usize, drop: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in drop {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Greedy pivoted Gram-Schmidt on the rows `cands` of `y`; returns `y.ncols()`
/// rows forming the best-conditioned square block it finds.
fn pick_rows(y: &CMat, cands: &[usize]) -> Result<Vec<usize>> {
    let m = y.ncols();
    let mut rows: Vec<(usize, nalgebra::DVector<Complex64>)> = cands
        .iter()
        .map(|&i| (i, y.row(i).transpose()))
        .collect();
    let scale = rows.iter().map(|r| r.1.norm()).fold(0.0, f64::max);
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m {
        let (best, norm) = rows
            .iter()
            .enumerate()
            .map(|(j, r)| (j, r.1.norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || norm <= 1e-12 * scale {
            return Err(EvoError::Singular(
                "boundary closure: candidate H1 rows do not span the trace space".into(),
            ));
        }
        let (idx, v) = rows.remove(best);
        let q = v.map(|x| x / c(norm));
        for r in rows.iter_mut() {
            let proj = q.dotc(&r.1);
            r.1 -= q.map(|x| x * proj);
        }
        picked.push(idx);
    }
    picked.sort_unstable();
    Ok(picked)
}

impl OperatorQuartet {
    /// Builds `(G̊, G, D̊, D)` from a gradient matrix and the list of boundary
    /// `H0` coordinates. The `H1` coordinates removed from `dom(D̊)` are picked
    /// among those whose stencil touches a boundary coordinate.
    pub fn from_gradient(
        g: CMat,
        w0: Vec<f64>,
        w1: Vec<f64>,
        boundary_h0: &[usize],
        meta: QuartetMeta,
    ) -> Result<Self> {
        let (n1, n0) = (g.nrows(), g.ncols());
        if w0.len() != n0 || w1.len() != n1 {
            return Err(EvoError::Dimension("weights do not match G".into()));
        }
        if w0.iter().chain(w1.iter()).any(|&w| !(w > 0.0)) {
            return Err(EvoError::Precondition("weights must be positive".into()));
        }
        let w0m = wdiag(&w0);
        let w1m = wdiag(&w1);
        let w0inv = wdiag(&w0.iter().map(|w| 1.0 / w).collect::<Vec<_>>());
        let adj = &w0inv * g.adjoint() * &w1m;
        let interior = complement(n0, boundary_h0);
        let m = boundary_h0.len();
        if m == 0 {
            return Ok(OperatorQuartet {
                dmax: -adj,
                gmax: g,
                e_int_g: CMat::identity(n0, n0),
                e_int_d: CMat::identity(n1, n1),
                w0,
                w1,
                meta,
            });
        }
        let gram = &w0m + g.adjoint() * &w1m * &g;
        let eb = selection(n0, boundary_h0);
        let bg = crate::linalg::lu_solve(&gram, &eb)
            .ok_or_else(|| EvoError::Singular("H1 Gram of G".into()))?;
        let y = &g * &bg;
        let cands: Vec<usize> = (0..n1)
            .filter(|&e| boundary_h0.iter().any(|&b| g[(e, b)] != ZERO))
            .collect();
        let picked = pick_rows(&y, &cands)?;
        let keep1 = complement(n1, &picked);
        let e1 = selection(n1, &keep1);
        let mut basis = CMat::zeros(n1, n1);
        basis.view_mut((0, 0), (n1, m)).copy_from(&y);
        basis.view_mut((0, m), (n1, n1 - m)).copy_from(&e1);
        let mut rhs = CMat::zeros(n0, n1);
        rhs.view_mut((0, 0), (n0, m))
            .copy_from(&(&w0inv * &gram * &bg));
        let s = rhs * inverse(&basis)?;
        let dmax = s - adj;
        Ok(OperatorQuartet {
            gmax: g,
            dmax,
            e_int_g: selection(n0, &interior),
            e_int_d: e1,
            w0,
            w1,
            meta,
        })
    }

    pub fn n0(&self) -> usize {
        self.gmax.ncols()
    }

    pub fn n1(&self) -> usize {
        self.gmax.nrows()
    }

    pub fn g_int(&self) -> CMat {
        &self.gmax * &self.e_int_g
    }

    pub fn d_int(&self) -> CMat {
        &self.dmax * &self.e_int_d
    }

    pub fn w0_mat(&self) -> CMat {
        wdiag(&self.w0)
    }

    pub fn w1_mat(&self) -> CMat {
        wdiag(&self.w1)
    }

    /// `W0 + Gᴴ W1 G`, the Gram matrix of `H1(|G| + i)`.
    pub fn gram_g(&self) -> CMat {
        self.w0_mat() + self.gmax.adjoint() * self.w1_mat() * &self.gmax
    }

    /// `W1 + Dᴴ W0 D`.
    pub fn gram_d(&self) -> CMat {
        self.w1_mat() + self.dmax.adjoint() * self.w0_mat() * &self.dmax
    }

    /// Boundary `H0` coordinates, i.e. those not in `dom(G̊)`.
    pub fn boundary_h0(&self) -> Vec<usize> {
        removed_coords(&self.e_int_g)
    }

    pub fn boundary_h1(&self) -> Vec<usize> {
        removed_coords(&self.e_int_d)
    }

    /// Same `G`, `D`, `D̊`, but `G̊ = G`: the boundary is not removed and the
    /// duality relation fails.
    pub fn with_full_interior(&self) -> Self {
        let mut q = self.clone();
        q.e_int_g = CMat::identity(self.n0(), self.n0());
        q
    }

    pub fn h0_inner(&self, x: &CMat, y: &CMat) -> CMat {
        x.adjoint() * self.w0_mat() * y
    }

    pub fn h1_inner(&self, x: &CMat, y: &CMat) -> CMat {
        x.adjoint() * self.w1_mat() * y
    }
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn removed_coords(e: &CMat) -> Vec<usize> {
    (0..e.nrows())
        .filter(|&i| e.row(i).iter().all(|x| *x == ZERO))
        .collect()
}

/// 1D interval with `n_cells` cells of width `h`: `H0` on nodes, `H1` on cells,
/// `G` the forward difference. Boundary nodes carry weight `h/2`.
pub fn build_interval_ops(n_cells: usize, h: f64) -> Result<OperatorQuartet> {
    build_interval_ops_weighted(n_cells, h, 0.5)
}

/// As [`build_interval_ops`] with boundary node weight `bw * h`.
pub fn build_interval_ops_weighted(n_cells: usize, h: f64, bw: f64) -> Result<OperatorQuartet> {
    if n_cells < 2 {
        return Err(EvoError::Precondition(format!("n_cells must be >= 2, got {n_cells}")));
    }
    if !(h > 0.0) || !(bw > 0.0) {
        return Err(EvoError::Precondition("h and boundary weight must be > 0".into()));
    }
    let n = n_cells;
    let mut g = CMat::zeros(n, n + 1);
    for k in 0..n {
        g[(k, k)] = c(-1.0 / h);
        g[(k, k + 1)] = c(1.0 / h);
    }
    let mut w0 = vec![h; n + 1];
    w0[0] = bw * h;
    w0[n] = bw * h;
    OperatorQuartet::from_gradient(
        g,
        w0,
        vec![h; n],
        &[0, n],
        QuartetMeta {
            kind: "interval".into(),
            sizes: vec![n],
            h,
        },
    )
}

fn node_weights_2d(nx: usize, ny: usize, h: f64) -> Vec<f64> {
    let f = |i: usize, n: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let mut w = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            w.push(h * h * f(i, nx) * f(j, ny));
        }
    }
    w
}

fn boundary_nodes_2d(nx: usize, ny: usize) -> Vec<usize> {
    let mut b = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if i == 0 || j == 0 || i == nx || j == ny {
                b.push(i + (nx + 1) * j);
            }
        }
    }
    b
}

/// MAC gradient: rows are x-edges then y-edges, columns are nodes.
fn mac_gradient(nx: usize, ny: usize, h: f64) -> CMat {
    let nn = (nx + 1) * (ny + 1);
    let nex = nx * (ny + 1);
    let ney = (nx + 1) * ny;
    let node = |i: usize, j: usize| i + (nx + 1) * j;
    let mut g = CMat::zeros(nex + ney, nn);
    for j in 0..=ny {
        for i in 0..nx {
            let e = i + nx * j;
            g[(e, node(i, j))] = c(-1.0 / h);
            g[(e, node(i + 1, j))] = c(1.0 / h);
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let e = nex + i + (nx + 1) * j;
            g[(e, node(i, j))] = c(-1.0 / h);
            g[(e, node(i, j + 1))] = c(1.0 / h);
        }
    }
    g
}

/// Rectangle with `nx x ny` cells of width `h` on a staggered grid: scalars
/// on nodes, gradient components on edges.
pub fn build_grid_ops_2d(nx: usize, ny: usize, h: f64) -> Result<OperatorQuartet> {
    if nx < 2 || ny < 2 {
        return Err(EvoError::Precondition("nx, ny must be >= 2".into()));
    }
    if !(h > 0.0) {
        return Err(EvoError::Precondition("h must be > 0".into()));
    }
    let g = mac_gradient(nx, ny, h);
    let w1 = vec![h * h; g.nrows()];
    OperatorQuartet::from_gradient(
        g,
        node_weights_2d(nx, ny, h),
        w1,
        &boundary_nodes_2d(nx, ny),
        QuartetMeta {
            kind: "grid2d".into(),
            sizes: vec![nx, ny],
            h,
        },
    )
}

/// Symmetrized gradient for displacement fields. In 1D this is the interval
/// quartet. In 2D, `H0 = (u1, u2)` on nodes and `H1` holds `ε11` on x-edges,
/// `ε22` on y-edges and `√2 ε12` at cell centres.
pub fn build_sym_elasticity_ops(dim: usize, sizes: &[usize], h: f64) -> Result<OperatorQuartet> {
    match dim {
        1 => {
            let n = *sizes
                .first()
                .ok_or_else(|| EvoError::Precondition("missing size".into()))?;
            build_interval_ops(n, h)
        }
        2 => {
            if sizes.len() != 2 {
                return Err(EvoError::Precondition("2D elasticity needs [nx, ny]".into()));
            }
            let (nx, ny) = (sizes[0], sizes[1]);
            if nx < 2 || ny < 2 || !(h > 0.0) {
                return Err(EvoError::Precondition("need nx, ny >= 2 and h > 0".into()));
            }
            let g = sym_gradient_2d(nx, ny, h);
            let nw = node_weights_2d(nx, ny, h);
            let mut w0 = nw.clone();
            w0.extend_from_slice(&nw);
            let nn = nw.len();
            let mut bnd = boundary_nodes_2d(nx, ny);
            let second: Vec<usize> = bnd.iter().map(|b| b + nn).collect();
            bnd.extend(second);
            let w1 = vec![h * h; g.nrows()];
            OperatorQuartet::from_gradient(
                g,
                w0,
                w1,
                &bnd,
                QuartetMeta {
                    kind: "elasticity2d".into(),
                    sizes: vec![nx, ny],
                    h,
                },
            )
        }
        _ => Err(EvoError::Precondition(format!("unsupported dimension {dim}"))),
    }
}

fn sym_gradient_2d(nx: usize, ny: usize, h: f64) -> CMat {
    let nn = (nx + 1) * (ny + 1);
    let nex = nx * (ny + 1);
    let ney = (nx + 1) * ny;
    let nc = nx * ny;
    let node = |i: usize, j: usize| i + (nx + 1) * j;
    let mut g = CMat::zeros(nex + ney + nc, 2 * nn);
    for j in 0..=ny {
        for i in 0..nx {
            let e = i + nx * j;
            g[(e, node(i, j))] = c(-1.0 / h);
            g[(e, node(i + 1, j))] = c(1.0 / h);
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let e = nex + i + (nx + 1) * j;
            g[(e, nn + node(i, j))] = c(-1.0 / h);
            g[(e, nn + node(i, j + 1))] = c(1.0 / h);
        }
    }
    // √2 · ½ (∂y u1 + ∂x u2), each derivative averaged over the two cell edges
    let a = std::f64::consts::SQRT_2 * 0.5 / (2.0 * h);
    for j in 0..ny {
        for i in 0..nx {
            let r = nex + ney + i + nx * j;
            for (ii, s) in [(i, -1.0), (i + 1, -1.0)] {
                g[(r, node(ii, j))] += c(s * a);
                g[(r, node(ii, j + 1))] += c(-s * a);
            }
            for (jj, s) in [(j, -1.0), (j + 1, -1.0)] {
                g[(r, nn + node(i, jj))] += c(s * a);
                g[(r, nn + node(i + 1, jj))] += c(-s * a);
            }
        }
    }
    g
}

/// Full gradient of a 2D displacement field: the MAC gradients of `u1` and
/// `u2` side by side, with weights `h²`.
pub fn full_gradient_2d(nx: usize, ny: usize, h: f64) -> CMat {
    let g = mac_gradient(nx, ny, h);
    let (r, cc) = (g.nrows(), g.ncols());
    let mut f = CMat::zeros(2 * r, 2 * cc);
    f.view_mut((0, 0), (r, cc)).copy_from(&g);
    f.view_mut((r, cc), (r, cc)).copy_from(&g);
    f
}

/// Smallest `κ` with `‖grad u‖ ≤ κ (‖u‖ + ‖Grad u‖)` on the 2D grid, from the
/// generalized eigenvalue problem `gradᴴ W grad x = λ (W0 + Gᴴ W1 G) x`.
/// (The returned value bounds the sharp constant from above by at most `√2`.)
pub fn korn_constant(q: &OperatorQuartet) -> Result<f64> {
    if q.meta.kind != "elasticity2d" {
        return Err(EvoError::Precondition("Korn constant needs a 2D elasticity quartet".into()));
    }
    let (nx, ny, h) = (q.meta.sizes[0], q.meta.sizes[1], q.meta.h);
    let f = full_gradient_2d(nx, ny, h);
    let wf = CMat::identity(f.nrows(), f.nrows()).map(|x| x * (h * h));
    let a = f.adjoint() * wf * &f;
    let b = q.gram_g();
    let s = crate::linalg::inv_sqrt_hpd(&b)?;
    let lmax = max_eig_hermitian(&(&s * a * &s));
    Ok(lmax.max(0.0).sqrt())
}

/// Reduced coordinates `(φ11, φ22, √2 φ12)` of a symmetric 2x2 matrix.
pub fn voigt_reduce(m: [[Complex64; 2]; 2]) -> [Complex64; 3] {
    [m[0][0], m[1][1], m[0][1] * std::f64::consts::SQRT_2]
}

/// `H1`-orthogonal projector onto `ran G` in `H1` coordinates.
pub fn range_projector(q: &OperatorQuartet) -> CMat {
    let s1: Vec<f64> = q.w1.iter().map(|w| w.sqrt()).collect();
    let s0: Vec<f64> = q.w0.iter().map(|w| 1.0 / w.sqrt()).collect();
    let go = wdiag(&s1) * &q.gmax * wdiag(&s0);
    let (qb, _) = range_basis(&go, 1e-10);
    let po = &qb * qb.adjoint();
    let inv1: Vec<f64> = s1.iter().map(|x| 1.0 / x).collect();
    wdiag(&inv1) * po * wdiag(&s1)
}

/// Duality defects relative to `‖G‖`, as matrices:
/// `E_Gᴴ (W0 D + Gᴴ W1)` and `(Gᴴ W1 + W0 D) E_D`.
pub fn duality_defect(q: &OperatorQuartet) -> f64 {
    let w0 = q.w0_mat();
    let w1 = q.w1_mat();
    let core = &w0 * &q.dmax + q.gmax.adjoint() * &w1;
    let a = q.e_int_g.adjoint() * &core;
    let b = &core * &q.e_int_d;
    let scale = crate::linalg::spectral_norm(&q.gmax).max(1.0);
    max_abs(&a).max(max_abs(&b)) / scale
}

/// Largest `|⟨G̊x, y⟩ + ⟨x, Dy⟩|` and `|⟨Gx, y⟩ + ⟨x, D̊y⟩|` over random pairs
/// of unit vectors, relative to `‖G‖`.
pub fn duality_defect_random(q: &OperatorQuartet, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = q.w0_mat();
    let w1 = q.w1_mat();
    let scale = crate::linalg::spectral_norm(&q.gmax).max(1.0);
    let unit = |v: CMat, w: &CMat| {
        let n = (v.adjoint() * w * &v)[(0, 0)].re.sqrt();
        v.map(|x| x / c(n))
    };
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let xi = random_cvec(&mut rng, q.e_int_g.ncols());
        let x = unit(&q.e_int_g * CMat::from_column_slice(xi.len(), 1, xi.as_slice()), &w0);
        let yv = random_cvec(&mut rng, q.n1());
        let y = unit(CMat::from_column_slice(yv.len(), 1, yv.as_slice()), &w1);
        let d1 = (y.adjoint() * &w1 * &q.gmax * &x)[(0, 0)] + ((&q.dmax * &y).adjoint() * &w0 * &x)[(0, 0)];
        let xv = random_cvec(&mut rng, q.n0());
        let x2 = unit(CMat::from_column_slice(xv.len(), 1, xv.as_slice()), &w0);
        let yi = random_cvec(&mut rng, q.e_int_d.ncols());
        let y2 = unit(&q.e_int_d * CMat::from_column_slice(yi.len(), 1, yi.as_slice()), &w1);
        let d2 = (y2.adjoint() * &w1 * &q.gmax * &x2)[(0, 0)] + ((&q.dmax * &y2).adjoint() * &w0 * &x2)[(0, 0)];
        worst = worst.max(d1.norm()).max(d2.norm());
    }
    worst / scale
}

/// Smallest singular value of `G̊` from `(dom G̊, H0 norm)` to `H1`.
pub fn poincare_constant(q: &OperatorQuartet) -> f64 {
    let e = &q.e_int_g;
    if e.ncols() == 0 {
        return f64::INFINITY;
    }
    let s1: Vec<f64> = q.w1.iter().map(|w| w.sqrt()).collect();
    let gi = wdiag(&s1) * q.g_int();
    let gram0 = e.adjoint() * q.w0_mat() * e;
    match crate::linalg::inv_sqrt_hpd(&gram0) {
        Ok(s) => singular_values(&(gi * s)).last().cloned().unwrap_or(0.0),
        Err(_) => 0.0,
    }
}

pub fn verify_duality(q: &OperatorQuartet) -> DualityReport {
    let max_defect = duality_defect(q);
    let inclusion = max_abs(&(q.g_int() - &q.gmax * &q.e_int_g))
        .max(max_abs(&(q.d_int() - &q.dmax * &q.e_int_d)));
    DualityReport {
        max_defect,
        inclusion_defect: inclusion,
        poincare: poincare_constant(q),
        flagged: max_defect > DUALITY_TOL,
    }
}

/// Real matrix view, for export.
pub fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|x| x.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rejects_tiny_grids() {
        assert!(build_interval_ops(1, 0.1).is_err());
        assert!(build_interval_ops(2, 0.5).is_ok());
    }

    #[test]
    fn boundary_coordinates_of_interval() {
        let q = build_interval_ops(6, 1.0 / 6.0).unwrap();
        assert_eq!(q.boundary_h0(), vec![0, 6]);
        assert_eq!(q.boundary_h1(), vec![0, 5]);
    }

    #[test]
    fn unsupported_elasticity_dim() {
        assert!(build_sym_elasticity_ops(3, &[2, 2, 2], 0.5).is_err());
    }

    #[test]
    fn voigt_is_isometric() {
        let m = [[c(1.0), Complex64::new(0.5, 1.0)], [Complex64::new(0.5, 1.0), c(-2.0)]];
        let v = voigt_reduce(m);
        let tr: f64 = m.iter().flatten().map(|x| x.norm_sqr()).sum();
        let red: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        assert!((tr - red).abs() < 1e-14);
    }
}
