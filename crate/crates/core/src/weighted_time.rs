//! Trajectories in the exponentially weighted space `H_{nu,0}(R; H)` sampled on
//! a uniform grid, together with the Fourier-Laplace transform and the
//! spectral calculus of the time derivative.
//!
//! A signal `f` is stored as an `n x dim` complex matrix of samples
//! `f(t_k)`, `t_k = t0 + k dt`. Norms carry the weight `exp(-2 nu t_k) dt`.
//!
//! The transform is the unitary discrete Fourier transform of the weighted
//! samples `sqrt(dt) exp(-nu t_k) f(t_k)`, with an extra phase
//! `exp(-i tau_k t0)` so that bin `k` carries the absolute-time convention of
//! the continuous transform. Consequently the Euclidean norm of a spectrum is
//! exactly the weighted norm of the signal.
//!
//! # Derivative symbol
//!
//! `∂₀` acts on bin `k` through a symbol `p_k` with `Re p_k = nu`. Two symbols
//! are available:
//!
//! * [`SymbolKind::Cayley`] (default): `p_k = nu + (2i/dt) tan(tau_k dt / 2)`.
//!   This is the trapezoidal rule applied to the weighted samples. Its inverse
//!   `1/p_k` has a one-sided geometric kernel, so `∂₀⁻¹` is causal up to the
//!   periodic wrap-around `exp(-nu n dt)`. At the Nyquist bin `p = ∞` and
//!   `z = 1/p = 0`: `∂₀⁻¹` annihilates that bin and `∂₀` is defined on its
//!   complement.
//! * [`SymbolKind::Spectral`]: `p_k = i tau_k + nu` exactly. Spectrally
//!   accurate, but the band-limited kernel of `1/p` rings on both sides of a
//!   jump, so truncated inputs see an `O(dt)` non-causal response.
//!
//! Both symbols give a normal operator with real part exactly `nu`, hence
//! `‖∂₀⁻¹‖ ≤ 1/nu` holds exactly on the grid.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::linalg::{CMat, CVec, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    #[default]
    Cayley,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
    pub nu: f64,
    #[serde(default)]
    pub symbol: SymbolKind,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize, nu: f64) -> Result<Self> {
        let g = TimeGrid {
            t0,
            dt,
            n,
            nu,
            symbol: SymbolKind::Cayley,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid of `n` samples covering `[-window/2, window/2)`.
    pub fn centered(window: f64, n: usize, nu: f64) -> Result<Self> {
        Self::new(-window / 2.0, window / n as f64, n, nu)
    }

    pub fn with_symbol(mut self, symbol: SymbolKind) -> Self {
        self.symbol = symbol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EvoError::InvalidGrid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(EvoError::InvalidGrid(format!("nu must be > 0, got {}", self.nu)));
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(EvoError::InvalidGrid(format!(
                "n must be a power of two >= 2, got {}",
                self.n
            )));
        }
        if !self.t0.is_finite() {
            return Err(EvoError::InvalidGrid("t0 must be finite".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.time(k)).collect()
    }

    pub fn midpoint(&self) -> f64 {
        self.t0 + 0.5 * self.window()
    }

    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Signed angular frequency of bin `k`; the Nyquist bin is negative.
    pub fn freq(&self, k: usize) -> f64 {
        let ks = if k >= self.n / 2 {
            k as f64 - self.n as f64
        } else {
            k as f64
        };
        2.0 * PI * ks / self.window()
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.freq(k)).collect()
    }

    /// Symbol of `∂₀` at bin `k`; `None` where it is infinite.
    pub fn symbol(&self, k: usize) -> Option<Complex64> {
        let tau = self.freq(k);
        match self.symbol {
            SymbolKind::Spectral => Some(Complex64::new(self.nu, tau)),
            SymbolKind::Cayley => {
                if k == self.nyquist() {
                    None
                } else {
                    let s = 2.0 / self.dt * (0.5 * tau * self.dt).tan();
                    Some(Complex64::new(self.nu, s))
                }
            }
        }
    }

    /// Symbol of `∂₀⁻¹`, i.e. the point `z_k = 1/p_k` on the circle
    /// `Re z⁻¹ = nu` at which material laws are evaluated.
    pub fn inv_symbol(&self, k: usize) -> Complex64 {
        match self.symbol(k) {
            Some(p) => p.inv(),
            None => ZERO,
        }
    }

    pub fn compatible(&self, other: &TimeGrid) -> bool {
        self == other
    }

    pub fn check_compatible(&self, other: &TimeGrid) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(EvoError::IncompatibleGrid(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Recommended weight: at least `nu_material` and large enough that the
/// weight decays meaningfully across the window.
pub fn recommend_nu(nu_material: f64, n: usize, dt: f64) -> f64 {
    nu_material.max(4.0 / (n as f64 * dt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub grid: TimeGrid,
    /// `n x dim` samples.
    pub samples: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSignal {
    pub grid: TimeGrid,
    /// `n x dim` bin values.
    pub values: CMat,
    pub freqs: Vec<f64>,
}

impl TimeSignal {
    pub fn new(grid: TimeGrid, samples: CMat) -> Result<Self> {
        if samples.nrows() != grid.n {
            return Err(EvoError::Dimension(format!(
                "signal has {} rows, grid has {} points",
                samples.nrows(),
                grid.n
            )));
        }
        if samples.ncols() == 0 {
            return Err(EvoError::Dimension("signal dimension must be >= 1".into()));
        }
        Ok(TimeSignal { grid, samples })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        TimeSignal {
            grid,
            samples: CMat::zeros(grid.n, dim),
        }
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64, usize) -> Complex64) -> Self {
        let samples = CMat::from_fn(grid.n, dim, |k, d| f(grid.time(k), d));
        TimeSignal { grid, samples }
    }

    /// Scalar-profile signal `profile(t) * amplitude`.
    pub fn from_profile(grid: TimeGrid, amplitude: &CVec, profile: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, amplitude.len(), |t, d| amplitude[d] * profile(t))
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn at(&self, k: usize) -> CVec {
        self.samples.row(k).transpose()
    }

    pub fn component(&self, d: usize) -> Vec<Complex64> {
        self.samples.column(d).iter().cloned().collect()
    }

    /// Columns `start..start+len` as a new signal.
    pub fn slice(&self, start: usize, len: usize) -> TimeSignal {
        TimeSignal {
            grid: self.grid,
            samples: self.samples.columns(start, len).into_owned(),
        }
    }

    /// Applies a constant matrix pointwise in time: `t -> m f(t)`.
    pub fn map_pointwise(&self, m: &CMat) -> TimeSignal {
        TimeSignal {
            grid: self.grid,
            samples: &self.samples * m.transpose(),
        }
    }

    pub fn scaled(&self, a: Complex64) -> TimeSignal {
        TimeSignal {
            grid: self.grid,
            samples: self.samples.map(|x| x * a),
        }
    }

    pub fn add(&self, other: &TimeSignal) -> Result<TimeSignal> {
        self.grid.check_compatible(&other.grid)?;
        check_dims(self, other)?;
        Ok(TimeSignal {
            grid: self.grid,
            samples: &self.samples + &other.samples,
        })
    }

    pub fn sub(&self, other: &TimeSignal) -> Result<TimeSignal> {
        self.grid.check_compatible(&other.grid)?;
        check_dims(self, other)?;
        Ok(TimeSignal {
            grid: self.grid,
            samples: &self.samples - &other.samples,
        })
    }

    /// `χ_{(-∞, a]}(m) f`.
    pub fn truncate_after(&self, a: f64) -> TimeSignal {
        let mut out = self.clone();
        for k in 0..self.grid.n {
            if self.grid.time(k) > a {
                out.samples.row_mut(k).fill(ZERO);
            }
        }
        out
    }

    /// Reversal `t0 + j dt -> t0 + (n-1-j) dt`, an anti-causal test map.
    pub fn time_reversed(&self) -> TimeSignal {
        let n = self.grid.n;
        TimeSignal {
            grid: self.grid,
            samples: CMat::from_fn(n, self.dim(), |k, d| self.samples[(n - 1 - k, d)]),
        }
    }

    pub fn norm(&self) -> f64 {
        weighted_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Writes the CSV form `t,re_0,im_0,...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for d in 0..self.dim() {
            header.push(format!("re_{d}"));
            header.push(format!("im_{d}"));
        }
        wr.write_record(&header)?;
        for k in 0..self.grid.n {
            let mut rec = vec![format!("{:?}", self.grid.time(k))];
            for d in 0..self.dim() {
                let x = self.samples[(k, d)];
                rec.push(format!("{:?}", x.re));
                rec.push(format!("{:?}", x.im));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the CSV form; `t0`, `dt`, `n` are recovered from the time column.
    pub fn read_csv<R: Read>(r: R, nu: f64) -> Result<TimeSignal> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let ncols = headers.len();
        if ncols < 3 || (ncols - 1) % 2 != 0 || &headers[0] != "t" {
            return Err(EvoError::Config(format!("bad signal CSV header: {headers:?}")));
        }
        for d in 0..(ncols - 1) / 2 {
            if headers[1 + 2 * d] != format!("re_{d}") || headers[2 + 2 * d] != format!("im_{d}") {
                return Err(EvoError::Config(format!("bad signal CSV header: {headers:?}")));
            }
        }
        let dim = (ncols - 1) / 2;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| EvoError::Config(format!("bad number {s:?}: {e}")))
            };
            times.push(parse(&rec[0])?);
            for d in 0..dim {
                values.push(Complex64::new(parse(&rec[1 + 2 * d])?, parse(&rec[2 + 2 * d])?));
            }
        }
        if times.len() < 2 {
            return Err(EvoError::Config("signal CSV needs at least two rows".into()));
        }
        let t0 = times[0];
        let dt = times[1] - times[0];
        let grid = TimeGrid::new(t0, dt, times.len(), nu)?;
        for (k, t) in times.iter().enumerate() {
            if (t - grid.time(k)).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(EvoError::Config(format!("time column is not uniform at row {k}")));
            }
        }
        let samples = DMatrix::from_row_slice(times.len(), dim, &values);
        TimeSignal::new(grid, samples)
    }
}

fn check_dims(a: &TimeSignal, b: &TimeSignal) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(EvoError::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

impl SpectralSignal {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        SpectralSignal {
            grid,
            values: CMat::zeros(grid.n, dim),
            freqs: grid.freqs(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn bin(&self, k: usize) -> CVec {
        self.values.row(k).transpose()
    }

    pub fn set_bin(&mut self, k: usize, v: &CVec) {
        self.values.row_mut(k).copy_from(&v.transpose());
    }

    /// Applies `op(k, v)` bin by bin. `op` may change the dimension, which
    /// must be the same for every bin.
    pub fn map_bins(
        &self,
        out_dim: usize,
        op: impl Fn(usize, CVec) -> Result<CVec> + Sync,
    ) -> Result<SpectralSignal> {
        use rayon::prelude::*;
        let rows: Vec<Result<CVec>> = (0..self.grid.n)
            .into_par_iter()
            .map(|k| op(k, self.bin(k)))
            .collect();
        let mut out = SpectralSignal::zeros(self.grid, out_dim);
        for (k, r) in rows.into_iter().enumerate() {
            let v = r?;
            if v.len() != out_dim {
                return Err(EvoError::Dimension(format!(
                    "bin operator returned {} entries, expected {out_dim}",
                    v.len()
                )));
            }
            out.set_bin(k, &v);
        }
        Ok(out)
    }
}

/// `⟨f|g⟩_{nu,0} = Σ_k f(t_k)^* g(t_k) exp(-2 nu t_k) dt` (left-endpoint rule).
pub fn weighted_inner(f: &TimeSignal, g: &TimeSignal) -> Result<Complex64> {
    f.grid.check_compatible(&g.grid)?;
    check_dims(f, g)?;
    let grid = f.grid;
    let mut acc = ZERO;
    for k in 0..grid.n {
        let w = (-2.0 * grid.nu * grid.time(k)).exp() * grid.dt;
        let mut row = ZERO;
        for d in 0..f.dim() {
            row += f.samples[(k, d)].conj() * g.samples[(k, d)];
        }
        acc += row * w;
    }
    Ok(acc)
}

pub fn weighted_norm(f: &TimeSignal) -> f64 {
    let grid = f.grid;
    let mut acc = 0.0;
    for k in 0..grid.n {
        let w = (-2.0 * grid.nu * grid.time(k)).exp() * grid.dt;
        let row: f64 = f.samples.row(k).iter().map(|x| x.norm_sqr()).sum();
        acc += row * w;
    }
    acc.sqrt()
}

fn fft_columns(m: &mut CMat, inverse: bool) {
    let n = m.nrows();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let scale = 1.0 / (n as f64).sqrt();
    for mut col in m.column_iter_mut() {
        let mut buf: Vec<Complex64> = col.iter().cloned().collect();
        fft.process(&mut buf);
        for (dst, src) in col.iter_mut().zip(buf) {
            *dst = src * scale;
        }
    }
}

/// Discrete Fourier-Laplace transform, unitary from `H_{nu,0}` onto the
/// Euclidean bin space.
pub fn fourier_laplace(f: &TimeSignal) -> SpectralSignal {
    let grid = f.grid;
    let sq = grid.dt.sqrt();
    let mut m = CMat::from_fn(grid.n, f.dim(), |k, d| {
        f.samples[(k, d)] * ((-grid.nu * grid.time(k)).exp() * sq)
    });
    fft_columns(&mut m, false);
    for k in 0..grid.n {
        let phase = Complex64::from_polar(1.0, -grid.freq(k) * grid.t0);
        for d in 0..m.ncols() {
            m[(k, d)] *= phase;
        }
    }
    SpectralSignal {
        grid,
        values: m,
        freqs: grid.freqs(),
    }
}

pub fn inverse_fourier_laplace(s: &SpectralSignal) -> TimeSignal {
    let grid = s.grid;
    let mut m = s.values.clone();
    for k in 0..grid.n {
        let phase = Complex64::from_polar(1.0, grid.freq(k) * grid.t0);
        for d in 0..m.ncols() {
            m[(k, d)] *= phase;
        }
    }
    fft_columns(&mut m, true);
    let isq = 1.0 / grid.dt.sqrt();
    for k in 0..grid.n {
        let w = (grid.nu * grid.time(k)).exp() * isq;
        for d in 0..m.ncols() {
            m[(k, d)] *= w;
        }
    }
    TimeSignal { grid, samples: m }
}

/// Applies a scalar multiplier `sym(k)` bin-wise.
pub fn apply_scalar_multiplier(f: &TimeSignal, sym: impl Fn(usize) -> Complex64) -> TimeSignal {
    let mut spec = fourier_laplace(f);
    for k in 0..spec.grid.n {
        let s = sym(k);
        for d in 0..spec.dim() {
            spec.values[(k, d)] *= s;
        }
    }
    inverse_fourier_laplace(&spec)
}

/// `∂₀ f`. For the Cayley symbol the Nyquist bin is projected out.
pub fn time_derivative(f: &TimeSignal) -> TimeSignal {
    let grid = f.grid;
    apply_scalar_multiplier(f, |k| grid.symbol(k).unwrap_or(ZERO))
}

/// `∂₀⁻¹ f`, the causal antiderivative `∫_{-∞}^t f`.
pub fn antiderivative(f: &TimeSignal) -> TimeSignal {
    let grid = f.grid;
    apply_scalar_multiplier(f, |k| grid.inv_symbol(k))
}

/// `‖χ_{(-∞,a]} F f − χ_{(-∞,a]} F χ_{(-∞,a]} f‖_nu`: how much input after
/// `a` leaks into output up to `a`.
pub fn causality_defect<F>(map: F, f: &TimeSignal, a: f64) -> Result<f64>
where
    F: Fn(&TimeSignal) -> Result<TimeSignal>,
{
    let full = map(f)?.truncate_after(a);
    let past = map(&f.truncate_after(a))?.truncate_after(a);
    Ok(full.sub(&past)?.norm())
}
