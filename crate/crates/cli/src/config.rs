//! JSON run configuration and its resolution into a concrete problem.

use std::path::{Path, PathBuf};

use fracstep_core::model::SystemDocument;
use fracstep_core::plasma::{PlasmaModel, PlasmaParams, SchemeChoice};
use fracstep_core::splitting::SolverKind;
use fracstep_core::{
    BoundarySpec, Closure, DiffScheme, Difference, InitialSpec, PdaeSystem, SourceTerm, SpaceGrid,
};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin(String),
    Inline(InlineModel),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Builtin("plasma".into())
    }
}

/// A user system with constant initial values; the boundary values equal
/// them on both sides, and the source is constant.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    pub system: SystemDocument,
    pub initial: Vec<f64>,
    #[serde(default)]
    pub source: Option<Vec<f64>>,
}

/// Plasma parameters that may be overridden; missing ones keep their defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlasmaOverrides {
    pub b0: Option<f64>,
    pub d1: Option<f64>,
    pub u30: Option<f64>,
    #[serde(rename = "K2")]
    pub k2: Option<f64>,
}

fn default_m() -> usize {
    20
}

fn default_t_end() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub params: PlasmaOverrides,
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(rename = "K0")]
    pub k0: Option<f64>,
    pub tau: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_e: f64,
    pub scheme: Option<SchemeChoice>,
    pub solver: Option<SolverKind>,
    pub closure: Option<Closure>,
    /// Constant part of the convection matrix used by `stability`.
    #[serde(rename = "C0")]
    pub c0: Option<Vec<Vec<f64>>>,
    pub levels: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            params: PlasmaOverrides::default(),
            m: default_m(),
            k0: Some(PlasmaParams::default().k0),
            tau: None,
            t_e: default_t_end(),
            scheme: None,
            solver: None,
            closure: None,
            c0: None,
            levels: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }
}

/// Time step rule: a fixed `tau` or `tau = K0 h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    Ratio(f64),
    Fixed(f64),
}

impl Step {
    pub fn tau(self, grid: &SpaceGrid) -> f64 {
        match self {
            Step::Ratio(k0) => k0 * grid.h(),
            Step::Fixed(tau) => tau,
        }
    }
}

/// Fully resolved problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub system: PdaeSystem,
    pub iv: InitialSpec,
    pub bv: BoundarySpec,
    pub f: SourceTerm,
    pub scheme: DiffScheme,
    pub solver: SolverKind,
    pub m: usize,
    pub step: Step,
    pub t_end: f64,
    pub c0: DMatrix<f64>,
    pub plasma: Option<PlasmaModel>,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub solver: Option<SolverKind>,
    pub scheme: Option<String>,
}

fn scheme_from_name(name: &str) -> Result<DiffScheme, CliError> {
    match name {
        "central" | "forward" | "backward" | "upwind" => {
            DiffScheme::from_name(name).map_err(CliError::from)
        }
        other => Err(CliError::Config(format!(
            "unknown scheme '{other}' (expected central, forward, backward or upwind)"
        ))),
    }
}

impl Problem {
    pub fn resolve(cfg: &RunConfig, ov: &Overrides) -> Result<Self, CliError> {
        if cfg.m < 2 {
            return Err(CliError::Config(format!("M must be at least 2, got {}", cfg.m)));
        }
        let step = match (cfg.k0, cfg.tau) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give exactly one of K0 and tau, not both".into()))
            }
            (None, None) => return Err(CliError::Config("one of K0 and tau is required".into())),
            (Some(k0), None) if k0 > 0.0 && k0.is_finite() => Step::Ratio(k0),
            (None, Some(tau)) if tau > 0.0 && tau.is_finite() => Step::Fixed(tau),
            _ => return Err(CliError::Config("K0 or tau must be positive".into())),
        };
        if !(cfg.t_e > 0.0 && cfg.t_e.is_finite()) {
            return Err(CliError::Config(format!("t_e must be positive, got {}", cfg.t_e)));
        }
        let solver = ov.solver.or(cfg.solver).unwrap_or(SolverKind::Full);
        let named = ov.scheme.as_deref().map(scheme_from_name).transpose()?;

        match &cfg.model {
            ModelSpec::Builtin(name) if name == "plasma" => {
                let d = PlasmaParams::default();
                let p = &cfg.params;
                let params = PlasmaParams {
                    b0: p.b0.unwrap_or(d.b0),
                    d1: p.d1.unwrap_or(d.d1),
                    u30: p.u30.unwrap_or(d.u30),
                    k2: p.k2.unwrap_or(d.k2),
                    k0: match step {
                        Step::Ratio(k0) => k0,
                        Step::Fixed(tau) => tau * cfg.m as f64,
                    },
                    t_e: cfg.t_e,
                };
                let model = PlasmaModel::with_closure(params, cfg.closure.unwrap_or(Closure::OneSided))?;
                let scheme = match named {
                    Some(s) => s,
                    None => cfg.scheme.clone().unwrap_or_default().resolve()?,
                };
                let c0 = c0_matrix(cfg.c0.as_ref(), model.system.c0())?;
                Ok(Self {
                    name: "plasma".into(),
                    system: model.system.clone(),
                    iv: model.iv.clone(),
                    bv: model.bv.clone(),
                    f: SourceTerm::zero(4),
                    scheme,
                    solver,
                    m: cfg.m,
                    step,
                    t_end: cfg.t_e,
                    c0,
                    plasma: Some(model),
                })
            }
            ModelSpec::Builtin(other) => Err(CliError::Config(format!(
                "unknown builtin model '{other}' (expected \"plasma\" or an inline system)"
            ))),
            ModelSpec::Inline(inline) => {
                let system = PdaeSystem::try_from(inline.system.clone())?;
                let n = system.n();
                if inline.initial.len() != n {
                    return Err(CliError::Config(format!(
                        "initial has {} values for {n} components",
                        inline.initial.len()
                    )));
                }
                let f = match &inline.source {
                    None => SourceTerm::zero(n),
                    Some(s) if s.len() == n => {
                        let s = s.clone();
                        SourceTerm::new(n, move |_, _, out| out.copy_from_slice(&s))
                    }
                    Some(s) => {
                        return Err(CliError::Config(format!(
                            "source has {} values for {n} components",
                            s.len()
                        )))
                    }
                };
                let scheme = match (named, &cfg.scheme) {
                    (Some(s), _) => s,
                    (None, Some(SchemeChoice::Named(n))) if n == "default" => {
                        DiffScheme::uniform(Difference::Central)
                    }
                    (None, Some(choice)) => choice.resolve()?,
                    (None, None) => DiffScheme::uniform(Difference::Central),
                };
                let c0 = c0_matrix(cfg.c0.as_ref(), system.c0())?;
                Ok(Self {
                    name: "inline".into(),
                    iv: InitialSpec::constant(&inline.initial),
                    bv: BoundarySpec::constant(&inline.initial),
                    f,
                    scheme,
                    solver,
                    m: cfg.m,
                    step,
                    t_end: cfg.t_e,
                    c0,
                    system,
                    plasma: None,
                })
            }
        }
    }

    pub fn grid(&self) -> Result<SpaceGrid, CliError> {
        Ok(SpaceGrid::new(self.m)?)
    }
}

fn c0_matrix(rows: Option<&Vec<Vec<f64>>>, fallback: &DMatrix<f64>) -> Result<DMatrix<f64>, CliError> {
    let Some(rows) = rows else {
        return Ok(fallback.clone());
    };
    let n = fallback.nrows();
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("C0 must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
