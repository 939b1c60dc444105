//! Run configuration: one JSON file naming the time grid, the system and the
//! check suites. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::boundary_data::{build_bd_spaces, BDSpaces, ANGLE_TOL, DEFAULT_NULL_TOL, HAT_TOL};
use crate::control_system::{BoundaryControlSpec, ReducedQuartet, ADJOINT_TOL};
use crate::discrete_ops::{
    build_grid_ops_2d, build_interval_ops, build_sym_elasticity_ops, verify_duality,
    OperatorQuartet, DUALITY_TOL,
};
use crate::error::{EvoError, Result};
use crate::evo_solver::{solve_frequency, EvolutionarySystem};
use crate::io::{read_json, read_quartet_bundle, MatrixJson};
use crate::linalg::{identity, CMat};
use crate::material_law::{KFamily, MaterialLaw};
use crate::viscoelastic::{
    assemble_visco_system, j_star_identity_defect, ViscoSystem, ViscoSystemConfig,
};
use crate::weighted_time::{causality_defect, SymbolKind, TimeGrid, TimeSignal};

pub const SCHEMA_VERSION: &str = "1";
pub const CAUSALITY_TOL: f64 = 1e-6;
pub const J_STAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Window length; the grid covers `[t0, t0 + window)`.
    pub window: f64,
    pub n: usize,
    pub nu: f64,
    /// Defaults to `−window/2`.
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub symbol: SymbolKind,
}

impl GridConfig {
    pub fn to_grid(&self) -> Result<TimeGrid> {
        let t0 = self.t0.unwrap_or(-self.window / 2.0);
        Ok(TimeGrid::new(t0, self.window / self.n as f64, self.n, self.nu)?.with_symbol(self.symbol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum KConfig {
    #[serde(rename = "constant")]
    Constant { k: MatrixJson },
    #[serde(rename = "M0_plus_zM1")]
    M0PlusZM1 { m0: MatrixJson, m1: MatrixJson },
}

/// `M(z) = K(z) ⊕ 0 + z·(coupling)`. Missing coupling blocks are zero;
/// the `Y` dimension is read off `m122` (absent = no `Y`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub radius: f64,
    pub h0: usize,
    pub h1: usize,
    pub k: KConfig,
    #[serde(default)]
    pub m102: Option<MatrixJson>,
    #[serde(default)]
    pub m112: Option<MatrixJson>,
    #[serde(default)]
    pub m120: Option<MatrixJson>,
    #[serde(default)]
    pub m121: Option<MatrixJson>,
    #[serde(default)]
    pub m122: Option<MatrixJson>,
}

fn block(m: &Option<MatrixJson>, rows: usize, cols: usize) -> Result<CMat> {
    match m {
        Some(m) => m.to_cmat(),
        None => Ok(CMat::zeros(rows, cols)),
    }
}

impl LawConfig {
    pub fn build(&self) -> Result<MaterialLaw> {
        let k = match &self.k {
            KConfig::Constant { k } => KFamily::Constant(k.to_cmat()?),
            KConfig::M0PlusZM1 { m0, m1 } => KFamily::M0PlusZM1 {
                m0: m0.to_cmat()?,
                m1: m1.to_cmat()?,
            },
        };
        let y = self.m122.as_ref().map_or(0, |m| m.rows);
        let (h0, h1) = (self.h0, self.h1);
        MaterialLaw::new(
            self.radius,
            (h0, h1),
            k,
            block(&self.m102, h0, y)?,
            block(&self.m112, h1, y)?,
            block(&self.m120, y, h0)?,
            block(&self.m121, y, h1)?,
            block(&self.m122, y, y)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuartetSource {
    Interval { n_cells: usize, length: f64 },
    Grid2d { nx: usize, ny: usize, h: f64 },
    Elasticity2d { nx: usize, ny: usize, h: f64 },
    Bundle { path: PathBuf },
}

impl QuartetSource {
    /// Relative bundle paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<OperatorQuartet> {
        match self {
            QuartetSource::Interval { n_cells, length } => {
                build_interval_ops(*n_cells, length / *n_cells as f64)
            }
            QuartetSource::Grid2d { nx, ny, h } => build_grid_ops_2d(*nx, *ny, *h),
            QuartetSource::Elasticity2d { nx, ny, h } => {
                build_sym_elasticity_ops(2, &[*nx, *ny], *h)
            }
            QuartetSource::Bundle { path } => read_quartet_bundle(&base.join(path)),
        }
    }
}

/// How `C : H0 → V` is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case", deny_unknown_fields)]
pub enum CRecipe {
    /// Coordinates of the `BD(G)` projection; `V = BD(G)` with its metric.
    BdProjection,
    /// Explicit `C` on full `H0` coordinates with a `V` Gram matrix
    /// (identity when absent).
    Matrix {
        c: MatrixJson,
        #[serde(default)]
        v_gram: Option<MatrixJson>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `(∂₀M(∂₀⁻¹) + A)U = F` with an explicit skew `A` (zero when absent).
    Evolutionary {
        law: LawConfig,
        #[serde(default)]
        a: Option<MatrixJson>,
    },
    /// Boundary control system on a quartet; the law acts on the reduced
    /// space `(x, ζ, w, y)`.
    BoundaryControl {
        quartet: QuartetSource,
        c: CRecipe,
        b: MatrixJson,
        law: LawConfig,
    },
    Viscoelastic {
        visco: ViscoSystemConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSuite {
    Positivity,
    Certificate,
    Duality,
    BdSpaces,
    Adjoint,
    JStar,
    Causality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub grid: GridConfig,
    pub system: SystemConfig,
    #[serde(default)]
    pub checks: Vec<CheckSuite>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(EvoError::Config(format!(
                "schema_version {:?} is not supported (expected {SCHEMA_VERSION:?})",
                self.schema_version
            )));
        }
        self.grid.to_grid()?;
        if let SystemConfig::Viscoelastic { visco } = &self.system {
            if visco.nu != self.grid.nu {
                return Err(EvoError::Config(format!(
                    "grid nu = {} differs from visco nu = {}",
                    self.grid.nu, visco.nu
                )));
            }
        }
        Ok(())
    }

    /// Overrides `nu` in the grid and, for the visco system, its config.
    pub fn set_nu(&mut self, nu: f64) {
        self.grid.nu = nu;
        if let SystemConfig::Viscoelastic { visco } = &mut self.system {
            visco.nu = nu;
        }
    }

    /// The default checks of each system kind when `checks` is empty.
    pub fn suites(&self) -> Vec<CheckSuite> {
        if !self.checks.is_empty() {
            return self.checks.clone();
        }
        use CheckSuite::*;
        match self.system {
            SystemConfig::Evolutionary { .. } => vec![Positivity, Certificate],
            SystemConfig::BoundaryControl { .. } => {
                vec![Positivity, Certificate, Duality, BdSpaces, Adjoint]
            }
            SystemConfig::Viscoelastic { .. } => {
                vec![Positivity, Certificate, Duality, BdSpaces, Adjoint, JStar]
            }
        }
    }
}

/// An assembled system of any kind.
#[derive(Debug, Clone)]
pub enum BuiltSystem {
    Evolutionary(Box<EvolutionarySystem>),
    Control {
        spec: Box<BoundaryControlSpec>,
        bd: Box<BDSpaces>,
    },
    Visco(Box<ViscoSystem>),
}

impl BuiltSystem {
    pub fn law(&self) -> &MaterialLaw {
        match self {
            BuiltSystem::Evolutionary(s) => &s.law,
            BuiltSystem::Control { spec, .. } => &spec.law,
            BuiltSystem::Visco(v) => &v.spec.law,
        }
    }

    pub fn quartet(&self) -> Option<&OperatorQuartet> {
        match self {
            BuiltSystem::Evolutionary(_) => None,
            BuiltSystem::Control { spec, .. } => Some(&spec.reduced.quartet),
            BuiltSystem::Visco(v) => Some(v.quartet()),
        }
    }

    pub fn bd_spaces(&self) -> Option<&BDSpaces> {
        match self {
            BuiltSystem::Evolutionary(_) => None,
            BuiltSystem::Control { bd, .. } => Some(bd),
            BuiltSystem::Visco(v) => Some(&v.bd),
        }
    }

    pub fn control_spec(&self) -> Option<&BoundaryControlSpec> {
        match self {
            BuiltSystem::Evolutionary(_) => None,
            BuiltSystem::Control { spec, .. } => Some(spec),
            BuiltSystem::Visco(v) => Some(&v.spec),
        }
    }

    pub fn evolutionary(&self, nu: f64) -> Result<EvolutionarySystem> {
        match self {
            BuiltSystem::Evolutionary(s) => EvolutionarySystem::new(s.law.clone(), s.a.clone(), nu),
            BuiltSystem::Control { spec, .. } => spec.evolutionary_system(nu),
            BuiltSystem::Visco(v) => v.spec.evolutionary_system(nu),
        }
    }

    /// Solution operator at the grid's `nu`; the visco system uses its
    /// structured solver.
    pub fn solve(&self, f: &TimeSignal) -> Result<TimeSignal> {
        match self {
            BuiltSystem::Visco(v) => v.solve(f),
            _ => solve_frequency(&self.evolutionary(f.grid.nu)?, f, &[]),
        }
    }

    pub fn positivity_margin(&self, nu: f64, samples: usize) -> Result<f64> {
        match self {
            BuiltSystem::Visco(v) => v.positivity_margin(nu, samples),
            _ => self.law().positivity_margin(nu, samples),
        }
    }

    pub fn certify(&self, nu: f64, samples: usize) -> Result<crate::material_law::WellPosednessCertificate> {
        match self {
            BuiltSystem::Visco(v) => v.certify(nu, samples),
            _ => self.law().certify(nu, samples),
        }
    }
}

pub fn build_system(sys: &SystemConfig, base: &Path, nu: f64) -> Result<BuiltSystem> {
    match sys {
        SystemConfig::Evolutionary { law, a } => {
            let law = law.build()?;
            let d = law.dim();
            let a = block(a, d, d)?;
            Ok(BuiltSystem::Evolutionary(Box::new(EvolutionarySystem::new(law, a, nu)?)))
        }
        SystemConfig::BoundaryControl { quartet, c, b, law } => {
            let q = quartet.build(base)?;
            let bd = build_bd_spaces(&q, DEFAULT_NULL_TOL)?;
            let (c_full, v_gram) = match c {
                CRecipe::BdProjection => {
                    (bd.basis_bdg.adjoint() * q.gram_g(), identity(bd.dim_bdg()))
                }
                CRecipe::Matrix { c, v_gram } => {
                    let c = c.to_cmat()?;
                    let g = match v_gram {
                        Some(g) => g.to_cmat()?,
                        None => identity(c.nrows()),
                    };
                    (c, g)
                }
            };
            let red = ReducedQuartet::new(&q, 1e-10)?;
            let spec = BoundaryControlSpec::new(red, &c_full, &v_gram, b.to_cmat()?, law.build()?)?;
            Ok(BuiltSystem::Control {
                spec: Box::new(spec),
                bd: Box::new(bd),
            })
        }
        SystemConfig::Viscoelastic { visco } => {
            Ok(BuiltSystem::Visco(Box::new(assemble_visco_system(visco)?)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: CheckSuite,
    pub passed: bool,
    /// The quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    /// Extra numbers of the suite (certificate constants, sub-defects).
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub schema_version: String,
    pub seed: u64,
    pub samples: usize,
    pub nu: f64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn upper(suite: CheckSuite, value: f64, threshold: f64, details: serde_json::Value) -> CheckResult {
    CheckResult {
        suite,
        passed: value <= threshold,
        value,
        threshold,
        details,
    }
}

fn positive(suite: CheckSuite, value: f64, details: serde_json::Value) -> CheckResult {
    CheckResult {
        suite,
        passed: value > 0.0,
        value,
        threshold: 0.0,
        details,
    }
}

fn skipped(suite: CheckSuite, why: &str) -> Result<CheckResult> {
    Err(EvoError::Config(format!("check {suite:?} does not apply: {why}")))
}

/// Smooth random forcing straddling the window midpoint, with long zero
/// padding on both sides so the periodic wrap of the transform stays far
/// below causality tolerances.
pub fn random_padded_forcing(grid: TimeGrid, dim: usize, seed: u64) -> TimeSignal {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = grid.window();
    let bumps: Vec<(f64, f64, Complex64)> = (0..dim)
        .map(|_| {
            let c = grid.t0 + w * rng.gen_range(0.45..0.55);
            let width = (w * rng.gen_range(0.005..0.02)).max(8.0 * grid.dt);
            (c, width, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        })
        .collect();
    TimeSignal::from_fn(grid, dim, |t, d| {
        let (c, width, a) = bumps[d];
        a * (-((t - c) / width).powi(2)).exp()
    })
}

pub fn run_check(
    suite: CheckSuite,
    sys: &BuiltSystem,
    grid: TimeGrid,
    seed: u64,
    samples: usize,
) -> Result<CheckResult> {
    let nu = grid.nu;
    use CheckSuite::*;
    Ok(match suite {
        Positivity => {
            let m = sys.positivity_margin(nu, samples)?;
            positive(suite, m, serde_json::json!({ "samples": samples }))
        }
        Certificate => {
            let c = sys.certify(nu, samples)?;
            positive(suite, c.margin, serde_json::to_value(c)?)
        }
        Duality => {
            let Some(q) = sys.quartet() else {
                return skipped(suite, "system has no operator quartet");
            };
            let r = verify_duality(q);
            upper(suite, r.max_defect, DUALITY_TOL, serde_json::to_value(r)?)
        }
        BdSpaces => {
            let Some(bd) = sys.bd_spaces() else {
                return skipped(suite, "system has no operator quartet");
            };
            let r = bd.report();
            let hat = r
                .inverse_defect
                .max(r.adjoint_defect)
                .max(r.unitarity_defect);
            let angle = bd.angle_g.max(bd.angle_d);
            let passed = hat <= HAT_TOL && angle <= ANGLE_TOL && r.dtn_unitarity_defect <= 1e-9;
            CheckResult {
                suite,
                passed,
                value: hat,
                threshold: HAT_TOL,
                details: serde_json::json!({
                    "hat": r,
                    "angle_g": bd.angle_g,
                    "angle_d": bd.angle_d,
                    "dim_bd_g": bd.dim_bdg(),
                    "dim_bd_d": bd.dim_bdd(),
                }),
            }
        }
        Adjoint => {
            let Some(spec) = sys.control_spec() else {
                return skipped(suite, "system is not a boundary control system");
            };
            let d = spec.adjoint_defect(100, seed);
            upper(suite, d, ADJOINT_TOL, serde_json::json!({ "pairs": 100 }))
        }
        JStar => {
            let BuiltSystem::Visco(v) = sys else {
                return skipped(suite, "system is not the visco-elastic rod");
            };
            let d = j_star_identity_defect(v.quartet(), &v.bd, &v.normal_h1, &v.j, &v.coupling, 100, seed);
            upper(suite, d, J_STAR_TOL, serde_json::json!({ "pairs": 100 }))
        }
        Causality => {
            let dim = sys.law().dim();
            let f = random_padded_forcing(grid, dim, seed);
            let cd = causality_defect(|g| sys.solve(g), &f, grid.midpoint())?;
            upper(suite, cd / f.norm().max(1e-300), CAUSALITY_TOL, serde_json::Value::Null)
        }
    })
}

/// Runs every requested suite. Config-level failures (a suite that does
/// not apply, an unbuildable system) are errors; failed checks are not.
pub fn run_checks(cfg: &RunConfig, base: &Path, seed: u64, samples: usize) -> Result<CheckReport> {
    let grid = cfg.grid.to_grid()?;
    let sys = build_system(&cfg.system, base, grid.nu)?;
    let checks = cfg
        .suites()
        .into_iter()
        .map(|s| run_check(s, &sys, grid, seed, samples))
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport {
        schema_version: SCHEMA_VERSION.into(),
        seed,
        samples,
        nu: grid.nu,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
