//! Solver for `(∂₀ M(∂₀⁻¹) + A) u = f + Σ δ_{t_i} x_i` by independent dense
//! solves per frequency bin, plus an implicit-Euler reference for the
//! `M(z) = M0 + z M1` subclass.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EvoError, Result};
use crate::linalg::{fro, lu_solve, lu_solve_vec, min_eig_hermitian, nullspace, CMat, CVec};
use crate::material_law::MaterialLaw;
use crate::weighted_time::{
    causality_defect, fourier_laplace, inverse_fourier_laplace, SpectralSignal, TimeGrid,
    TimeSignal,
};

#[derive(Debug, Clone)]
pub struct EvolutionarySystem {
    pub law: MaterialLaw,
    pub a: CMat,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSource {
    pub t_impulse: f64,
    pub amplitude: CVec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub residual: f64,
    pub margin: f64,
    pub causality_defect: f64,
}

impl EvolutionarySystem {
    pub fn new(law: MaterialLaw, a: CMat, nu: f64) -> Result<Self> {
        if a.nrows() != law.dim() || a.ncols() != law.dim() {
            return Err(EvoError::Dimension(format!(
                "A is {}x{}, law has dimension {}",
                a.nrows(),
                a.ncols(),
                law.dim()
            )));
        }
        let skew = fro(&(&a + a.adjoint()));
        if skew > 1e-12 * fro(&a).max(1.0) {
            return Err(EvoError::Precondition(format!(
                "A is not skew-Hermitian: ‖A + A*‖ = {skew:e}"
            )));
        }
        law.check_nu(nu)?;
        Ok(EvolutionarySystem { law, a, nu })
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    /// `p M(1/p) + A`.
    pub fn bin_matrix(&self, p: Complex64) -> CMat {
        self.law.evaluate_unchecked(p.inv()).map(|x| x * p) + &self.a
    }

    /// `lim_{p→∞} (p M(1/p) + A)⁻¹`. With `N` an orthonormal basis of
    /// `ker M(0)` the limit is `N (N* (M'(0) + A) N)⁻¹ N*`; everything off
    /// the kernel is scaled away by `p`.
    pub fn limit_resolvent(&self) -> Result<CMat> {
        let n = nullspace(&self.law.evaluate_unchecked(Complex64::new(0.0, 0.0)), 1e-10);
        if n.ncols() == 0 {
            return Ok(CMat::zeros(self.dim(), self.dim()));
        }
        let q = self.law.derivative_at_zero() + &self.a;
        let s = n.adjoint() * q * &n;
        let sinv = lu_solve(&s, &CMat::identity(s.nrows(), s.ncols())).ok_or_else(|| {
            EvoError::Singular("algebraic part of the system at infinite frequency".into())
        })?;
        Ok(&n * sinv * n.adjoint())
    }

    fn check_grid(&self, g: &TimeGrid) -> Result<()> {
        if g.nu != self.nu {
            return Err(EvoError::IncompatibleGrid(format!(
                "grid nu = {} but system nu = {}",
                g.nu, self.nu
            )));
        }
        Ok(())
    }

    pub fn positivity_margin(&self, n_samples: usize) -> Result<f64> {
        self.law.positivity_margin(self.nu, n_samples)
    }
}

/// Transform of `amplitude · δ_{t_impulse}`: the limit of `fourier_laplace`
/// of unit-area pulses shrinking to `t_impulse`. On a grid point it equals
/// the transform of a single sample of height `1/dt`.
pub fn delta_spectrum(d: &DeltaSource, grid: &TimeGrid) -> Result<SpectralSignal> {
    let (lo, hi) = (grid.t0, grid.t0 + grid.window());
    if !(d.t_impulse >= lo && d.t_impulse < hi) {
        return Err(EvoError::Precondition(format!(
            "impulse time {} outside window [{lo}, {hi})",
            d.t_impulse
        )));
    }
    let mut s = SpectralSignal::zeros(*grid, d.amplitude.len());
    let norm = 1.0 / (grid.n as f64 * grid.dt).sqrt();
    for k in 0..grid.n {
        let e = (Complex64::new(-grid.nu, -grid.freq(k)) * d.t_impulse).exp() * norm;
        for (j, a) in d.amplitude.iter().enumerate() {
            s.values[(k, j)] = a * e;
        }
    }
    Ok(s)
}

fn forcing_spectrum(
    sys: &EvolutionarySystem,
    f: &TimeSignal,
    impulses: &[DeltaSource],
) -> Result<SpectralSignal> {
    sys.check_grid(&f.grid)?;
    if f.dim() != sys.dim() {
        return Err(EvoError::Dimension(format!(
            "forcing dimension {} vs system dimension {}",
            f.dim(),
            sys.dim()
        )));
    }
    let mut spec = fourier_laplace(f);
    for d in impulses {
        if d.amplitude.len() != sys.dim() {
            return Err(EvoError::Dimension("impulse amplitude dimension".into()));
        }
        spec.values += delta_spectrum(d, &f.grid)?.values;
    }
    Ok(spec)
}

/// Solves bin by bin. On the Nyquist bin of the Cayley calculus, where `∂₀`
/// is unbounded, the solution is the `p → ∞` limit: zero on the
/// differential part, the algebraic relations on the rest.
pub fn solve_frequency(
    sys: &EvolutionarySystem,
    f: &TimeSignal,
    impulses: &[DeltaSource],
) -> Result<TimeSignal> {
    let spec = forcing_spectrum(sys, f, impulses)?;
    let grid = f.grid;
    let limit = sys.limit_resolvent().map_err(|_| EvoError::IllPosed {
        tau: grid.freq(grid.nyquist()),
    })?;
    let sol = spec.map_bins(sys.dim(), |k, rhs| match grid.symbol(k) {
        None => Ok(&limit * rhs),
        Some(p) => lu_solve_vec(&sys.bin_matrix(p), &rhs).ok_or(EvoError::IllPosed {
            tau: grid.freq(k),
        }),
    })?;
    Ok(inverse_fourier_laplace(&sol))
}

/// `‖(∂₀M(∂₀⁻¹) + A) u − f − impulses‖_ν / max(‖f + impulses‖_ν, ε)`,
/// evaluated on the bins where `∂₀` is finite.
pub fn residual(
    sys: &EvolutionarySystem,
    u: &TimeSignal,
    f: &TimeSignal,
    impulses: &[DeltaSource],
) -> Result<f64> {
    u.grid.check_compatible(&f.grid)?;
    let rhs = forcing_spectrum(sys, f, impulses)?;
    let us = fourier_laplace(u);
    let grid = u.grid;
    let per_bin: Vec<(f64, f64)> = (0..grid.n)
        .into_par_iter()
        .map(|k| match grid.symbol(k) {
            None => (0.0, 0.0),
            Some(p) => {
                let r = sys.bin_matrix(p) * us.bin(k) - rhs.bin(k);
                let b = rhs.bin(k);
                (r.norm_squared(), b.norm_squared())
            }
        })
        .collect();
    let num: f64 = per_bin.iter().map(|x| x.0).sum();
    let den: f64 = per_bin.iter().map(|x| x.1).sum();
    Ok(num.sqrt() / den.sqrt().max(1e-300))
}

/// Implicit Euler for `M0 u' + M1 u + A u = f` from zero history.
pub fn solve_timestep_oracle(m0: &CMat, m1: &CMat, a: &CMat, f: &TimeSignal) -> Result<TimeSignal> {
    let n = m0.nrows();
    for (name, m) in [("M1", m1), ("A", a)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(EvoError::Dimension(format!("{name} must be {n}x{n}")));
        }
    }
    if f.dim() != n {
        return Err(EvoError::Dimension(format!("forcing has dimension {}", f.dim())));
    }
    if min_eig_hermitian(m0) < -1e-12 * fro(m0).max(1.0) {
        return Err(EvoError::Precondition("M0 must be positive semidefinite".into()));
    }
    let dt = f.grid.dt;
    let m0dt = m0.map(|x| x / dt);
    let step = &m0dt + m1 + a;
    let lu = step.clone().lu();
    if lu_solve(&step, &CMat::identity(n, n)).is_none() {
        return Err(EvoError::Singular("implicit Euler step matrix".into()));
    }
    let mut u = TimeSignal::zeros(f.grid, n);
    let mut prev = CVec::zeros(n);
    for k in 0..f.grid.n {
        let rhs = f.at(k) + &m0dt * &prev;
        let next = lu
            .solve(&rhs)
            .ok_or_else(|| EvoError::Singular("implicit Euler step".into()))?;
        u.samples.row_mut(k).copy_from(&next.transpose());
        prev = next;
    }
    Ok(u)
}

/// Solves and reports residual, sampled margin and the causality defect of
/// the solution map at the window midpoint.
pub fn solve_with_report(
    sys: &EvolutionarySystem,
    f: &TimeSignal,
    impulses: &[DeltaSource],
    n_samples: usize,
) -> Result<(TimeSignal, SolveReport)> {
    let margin = sys.positivity_margin(n_samples)?;
    if !(margin > 0.0) {
        return Err(EvoError::Precondition(format!(
            "sampled positivity margin {margin} is not positive at nu = {}",
            sys.nu
        )));
    }
    let u = solve_frequency(sys, f, impulses)?;
    let res = residual(sys, &u, f, impulses)?;
    let a = f.grid.midpoint();
    let cd = causality_defect(|g| solve_frequency(sys, g, &[]), f, a)?;
    let scale = f.norm();
    let causality = if scale > 0.0 { cd / scale } else { cd };
    Ok((
        u,
        SolveReport {
            residual: res,
            margin,
            causality_defect: causality,
        },
    ))
}

/// Zero forcing of the right shape, for impulse-only solves.
pub fn zero_forcing(sys: &EvolutionarySystem, grid: TimeGrid) -> TimeSignal {
    TimeSignal::zeros(grid, sys.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, c};
    use crate::material_law::constant;

    #[test]
    fn non_skew_a_rejected() {
        let law = constant(identity(2), 1.0).unwrap();
        assert!(EvolutionarySystem::new(law, identity(2), 1.0).is_err());
    }

    #[test]
    fn zero_amplitude_delta_is_zero() {
        let g = TimeGrid::centered(8.0, 64, 1.0).unwrap();
        let d = DeltaSource {
            t_impulse: 0.5,
            amplitude: CVec::zeros(2),
        };
        assert_eq!(delta_spectrum(&d, &g).unwrap().norm(), 0.0);
    }

    #[test]
    fn delta_at_origin_is_flat() {
        let g = TimeGrid::centered(8.0, 64, 1.0).unwrap();
        let d = DeltaSource {
            t_impulse: 0.0,
            amplitude: CVec::from_element(1, c(2.0)),
        };
        let s = delta_spectrum(&d, &g).unwrap();
        let want = 2.0 / 8f64.sqrt();
        for k in 0..g.n {
            assert!((s.values[(k, 0)] - c(want)).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let law = constant(identity(2), 1.0).unwrap();
        let sys = EvolutionarySystem::new(law, CMat::zeros(2, 2), 1.0).unwrap();
        let g = TimeGrid::centered(8.0, 64, 1.0).unwrap();
        let u = solve_frequency(&sys, &zero_forcing(&sys, g), &[]).unwrap();
        assert_eq!(u.norm(), 0.0);
        let e = solve_timestep_oracle(&identity(2), &CMat::zeros(2, 2), &CMat::zeros(2, 2), &zero_forcing(&sys, g)).unwrap();
        assert_eq!(e.norm(), 0.0);
    }
}
