//! Run configuration, read from TOML.

use std::path::Path;

use biotplate::geometry::{CellGeometry, Rect};
use biotplate::material::{BiotParams, HookeTensor, LoadSpec, Polynomial};
use biotplate::twoscale::DEFAULT_DOF_BUDGET;
use biotplate::verify::{StudySettings, VerifySettings};
use nalgebra::Matrix3;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub loads: LoadConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub gel_lo: [f64; 2],
    pub gel_hi: [f64; 2],
    /// Through-thickness extent of the gel; the full thickness when absent.
    pub gel_span: Option<[f64; 2]>,
    pub omega_lo: [f64; 2],
    pub omega_hi: [f64; 2],
    pub eps: Vec<f64>,
    /// Elements per cell edge in the ε-problems, the macro cell data and the oracle.
    pub cell_n: usize,
    /// Elements per cell edge for the standalone corrector stages.
    pub corrector_n: usize,
    pub plate_m: usize,
    /// Plate elements per side for the monolithic two-scale oracle.
    pub oracle_m: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = CellGeometry::default();
        Self {
            gel_lo: g.gel_lo,
            gel_hi: g.gel_hi,
            gel_span: None,
            omega_lo: [0.0, 0.0],
            omega_hi: [1.0, 1.0],
            eps: vec![0.25, 0.125, 0.0625],
            cell_n: 4,
            corrector_n: 8,
            plate_m: 16,
            oracle_m: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Isotropic {
    pub young: f64,
    pub poisson: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Permeability {
    Scalar(f64),
    Matrix([[f64; 3]; 3]),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub fiber: Isotropic,
    pub gel: Isotropic,
    pub storage: f64,
    pub biot_alpha: f64,
    pub permeability: Permeability,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            fiber: Isotropic { young: 10.0, poisson: 0.3 },
            gel: Isotropic { young: 1.0, poisson: 0.35 },
            storage: 1.0,
            biot_alpha: 1.0,
            permeability: Permeability::Scalar(1.0),
        }
    }
}

/// A load component: a constant, a list of `[coef, a, b, c]` monomials
/// `coef · x1^a · x2^b · t^c`, or the same list as `"coef:a:b:c,..."`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum PolyInput {
    Constant(f64),
    Terms(Vec<[f64; 4]>),
    Text(String),
}

impl PolyInput {
    fn parse(&self, field: &'static str) -> Result<Polynomial, ConfigError> {
        match self {
            PolyInput::Constant(c) => Ok(Polynomial::constant(*c)),
            PolyInput::Text(s) => s.parse().map_err(|e: biotplate::Error| invalid(field, e.to_string())),
            PolyInput::Terms(terms) => {
                let text: Vec<String> = terms
                    .iter()
                    .map(|t| {
                        let pow = |v: f64| {
                            if v >= 0.0 && v.fract() == 0.0 {
                                Ok(v as u32)
                            } else {
                                Err(invalid(field, format!("exponent {v} is not a non-negative integer")))
                            }
                        };
                        Ok(format!("{}:{}:{}:{}", t[0], pow(t[1])?, pow(t[2])?, pow(t[3])?))
                    })
                    .collect::<Result<_, ConfigError>>()?;
                PolyInput::Text(text.join(",")).parse(field)
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadConfig {
    pub f1: PolyInput,
    pub f2: PolyInput,
    pub f3: PolyInput,
    pub h: PolyInput,
    /// Loads vanish for `t` past this time.
    pub switch_off: Option<f64>,
    /// Declared bound on the load norms; exceeding it only warns.
    pub bound: Option<f64>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            f1: PolyInput::Constant(0.5),
            f2: PolyInput::Constant(0.0),
            f3: PolyInput::Constant(1.0),
            h: PolyInput::Constant(1.0),
            switch_off: None,
            bound: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub nsteps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_final: 1.0, nsteps: 8 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub corrector_tol: f64,
    pub budget_dofs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { corrector_tol: 1e-12, budget_dofs: DEFAULT_DOF_BUDGET }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "biotplate-out".into(), vtk: true }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Perturbation added to the bending-membrane coupling block on the macro
    /// side of the oracle check.
    pub tamper_bhom: f64,
    /// Criterion ids to run; all when empty.
    pub only: Vec<usize>,
    pub seed: u64,
}

/// Validated inputs for the pipeline.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub geometry: CellGeometry,
    pub omega: Rect,
    pub tensor: HookeTensor,
    pub biot: BiotParams,
    pub loads: LoadSpec,
    pub eps: Vec<f64>,
    pub cell_n: usize,
    pub corrector_n: usize,
    pub plate_m: usize,
    pub oracle_m: usize,
    pub t_final: f64,
    pub nsteps: usize,
    pub corrector_tol: f64,
    pub budget: usize,
    pub tamper: f64,
    pub only: Vec<usize>,
    pub seed: u64,
    pub vtk: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let g = &self.geometry;
        let geometry = match g.gel_span {
            Some(s) => CellGeometry::with_span(g.gel_lo, g.gel_hi, (s[0], s[1])),
            None => CellGeometry::new(g.gel_lo, g.gel_hi),
        }
        .map_err(|e| invalid("geometry.gel_lo/gel_hi", e.to_string()))?;
        let omega = Rect::new(g.omega_lo, g.omega_hi).map_err(|e| invalid("geometry.omega_lo/omega_hi", e.to_string()))?;
        if g.eps.is_empty() {
            return Err(invalid("geometry.eps", "at least one ε is required"));
        }
        for &eps in &g.eps {
            let tiles = |len: f64| {
                let k = len / eps;
                eps > 0.0 && k >= 1.0 - 1e-9 && (k - k.round()).abs() < 1e-9
            };
            if !(tiles(omega.width()) && tiles(omega.height())) {
                return Err(invalid("geometry.eps", format!("{eps} does not tile ω")));
            }
        }
        for (field, v) in [("geometry.cell_n", g.cell_n), ("geometry.corrector_n", g.corrector_n), ("geometry.plate_m", g.plate_m), ("geometry.oracle_m", g.oracle_m)] {
            if v == 0 {
                return Err(invalid(field, "must be positive"));
            }
        }

        let m = &self.material;
        let tensor = HookeTensor::isotropic((m.fiber.young, m.fiber.poisson), (m.gel.young, m.gel.poisson))
            .map_err(|e| invalid("material.fiber/gel", e.to_string()))?;
        let k = match m.permeability {
            Permeability::Scalar(s) => Matrix3::identity() * s,
            Permeability::Matrix(a) => Matrix3::from_fn(|i, j| a[i][j]),
        };
        let biot = BiotParams { c: m.storage, alpha: m.biot_alpha, k };
        biotplate::material::check_admissible(&tensor, &biot).map_err(|e| invalid("material", e.to_string()))?;

        let l = &self.loads;
        let loads = LoadSpec {
            f: [l.f1.parse("loads.f1")?, l.f2.parse("loads.f2")?, l.f3.parse("loads.f3")?],
            h: l.h.parse("loads.h")?,
            switch_off: l.switch_off,
            k1: l.bound,
        };

        let t = &self.time;
        if !(t.t_final > 0.0 && t.t_final.is_finite()) {
            return Err(invalid("time.t_final", "must be positive"));
        }
        if t.nsteps == 0 {
            return Err(invalid("time.nsteps", "must be positive"));
        }
        loads.check_bound(&omega, t.t_final);
        if !(self.solver.corrector_tol > 0.0) {
            return Err(invalid("solver.corrector_tol", "must be positive"));
        }
        if self.solver.budget_dofs == 0 {
            return Err(invalid("solver.budget_dofs", "must be positive"));
        }
        if let Some(bad) = self.verify.only.iter().find(|&&id| !(1..=10).contains(&id)) {
            return Err(invalid("verify.only", format!("no criterion {bad}")));
        }
        if !self.verify.tamper_bhom.is_finite() {
            return Err(invalid("verify.tamper_bhom", "must be finite"));
        }

        Ok(Resolved {
            geometry,
            omega,
            tensor,
            biot,
            loads,
            eps: g.eps.clone(),
            cell_n: g.cell_n,
            corrector_n: g.corrector_n,
            plate_m: g.plate_m,
            oracle_m: g.oracle_m,
            t_final: t.t_final,
            nsteps: t.nsteps,
            corrector_tol: self.solver.corrector_tol,
            budget: self.solver.budget_dofs,
            tamper: self.verify.tamper_bhom,
            only: self.verify.only.clone(),
            seed: self.verify.seed,
            vtk: self.output.vtk,
        })
    }
}

impl Resolved {
    pub fn verify_settings(&self) -> VerifySettings {
        VerifySettings {
            geometry: self.geometry,
            tensor: self.tensor.clone(),
            biot: self.biot.clone(),
            omega: self.omega,
            loads: self.loads.clone(),
            t_final: self.t_final,
            seed: self.seed,
            budget: self.budget,
            coupling_tamper: self.tamper,
            study: StudySettings { eps: self.eps.clone(), cell_n: self.cell_n, plate_m: self.plate_m, nsteps: self.nsteps },
        }
    }
}
