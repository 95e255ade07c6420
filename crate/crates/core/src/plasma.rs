//! Four-component plasma model.
//!
//! Variables: `u1 ~ n_i` (ion density), `u2 ~ v_i` (ion velocity),
//! `u3 ~ n_e` (electron density), `u4 ~ phi` (potential). The first two
//! equations are evolutionary, the last two are constraints:
//!
//! ```text
//! u1_t - b0 u1_xx + (u2 u1)_x            = 0
//! u2_t + u2 u2_x + d1 u4_x               = 0
//!      - u3_x + u3 u4_x                  = 0
//! u4_xx + u1 - u3                        = 0
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiffScheme, Difference, Stencil};
use crate::error::{Error, Result};
use crate::model::{
    BoundaryEntry, BoundarySpec, Closure, ConvectionTensor, DataClass, InitialSpec, PdaeSystem,
    ScalarFn,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasmaParams {
    pub b0: f64,
    pub d1: f64,
    /// Left boundary value of `u3`, also `u3(0, 0)`.
    pub u30: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    /// Step ratio `tau = K0 h`.
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(default = "default_t_end")]
    pub t_e: f64,
}

fn default_t_end() -> f64 {
    1.0
}

impl Default for PlasmaParams {
    fn default() -> Self {
        Self {
            b0: 0.02,
            d1: 1.0,
            u30: 0.2,
            k2: 0.4,
            k0: 0.5,
            t_e: 1.0,
        }
    }
}

impl PlasmaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(m.to_string()));
        if !(self.b0 >= 0.0) {
            return bad("b0 must be nonnegative");
        }
        if !(self.d1 > 0.0) {
            return bad("d1 must be positive");
        }
        if self.u30 == 0.0 || !self.u30.is_finite() {
            return bad("u30 must be nonzero");
        }
        if !self.k2.is_finite() {
            return bad("K2 must be finite");
        }
        if !(self.k0 > 0.0) {
            return bad("K0 must be positive");
        }
        if !(self.t_e > 0.0) {
            return bad("t_e must be positive");
        }
        Ok(())
    }

    /// `K4 = -u30 / (4 pi^2)`, the boundary value of `u4`.
    pub fn k4(&self) -> f64 {
        -self.u30 / (4.0 * PI * PI)
    }
}

/// System matrices; the constant convection entries `d1` and `-1` sit in
/// `C0` so that `eval_c` gives the full convection matrix.
pub fn build_plasma_system(p: &PlasmaParams) -> Result<PdaeSystem> {
    p.validate()?;
    let a = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_diagonal(&nalgebra::dvector![-p.b0, 0.0, 0.0, 1.0]);
    let mut d = DMatrix::zeros(4, 4);
    d[(3, 0)] = 1.0;
    d[(3, 2)] = -1.0;
    let mut c0 = DMatrix::zeros(4, 4);
    c0[(1, 3)] = p.d1;
    c0[(2, 2)] = -1.0;
    let mut c1 = ConvectionTensor::zeros(4);
    c1.set(0, 0, 1, 1.0);
    c1.set(0, 1, 0, 1.0);
    c1.set(1, 1, 1, 1.0);
    c1.set(2, 3, 2, 1.0);
    PdaeSystem::new(a, b, d, c0, c1)
}

/// Consistent initial profiles: `g4 = K4 cos(2 pi x)`,
/// `g3 = u30 exp(g4 - K4)`, `g1 = g3 + 4 pi^2 g4`, `g2 = K2 x (x - 1/2)`.
pub fn consistent_initial_values(p: &PlasmaParams) -> Result<InitialSpec> {
    p.validate()?;
    let k4 = p.k4();
    let (u30, k2) = (p.u30, p.k2);
    let g4 = move |x: f64| k4 * (2.0 * PI * x).cos();
    let g3 = move |x: f64| u30 * (g4(x) - k4).exp();
    let g1 = move |x: f64| g3(x) + 4.0 * PI * PI * g4(x);
    let g2 = move |x: f64| k2 * x * (x - 0.5);
    let f = |g: ScalarFn, c| (g, c);
    Ok(InitialSpec::new(vec![
        f(std::sync::Arc::new(g1), DataClass::Consistent),
        f(std::sync::Arc::new(g2), DataClass::Arbitrary),
        f(std::sync::Arc::new(g3), DataClass::Consistent),
        f(std::sync::Arc::new(g4), DataClass::Arbitrary),
    ]))
}

/// `u1 = 0` at both ends, `u2 = 0` and `u3 = u30` at `x = 0`, `u4 = K4` at
/// both ends; `u2` and `u3` are free at `x = 1` and closed by `closure`.
pub fn plasma_boundary_spec(p: &PlasmaParams, closure: Closure) -> Result<BoundarySpec> {
    p.validate()?;
    let k4 = p.k4();
    let left = vec![
        BoundaryEntry::constant(0.0, DataClass::Arbitrary),
        BoundaryEntry::constant(0.0, DataClass::Arbitrary),
        BoundaryEntry::constant(p.u30, DataClass::Arbitrary),
        BoundaryEntry::constant(k4, DataClass::Consistent),
    ];
    let right = vec![
        BoundaryEntry::constant(0.0, DataClass::Arbitrary),
        BoundaryEntry::free(closure),
        BoundaryEntry::free(closure),
        BoundaryEntry::constant(k4, DataClass::Consistent),
    ];
    BoundarySpec::new(left, right)
}

/// Sign-upwinded transport in the two evolution equations, backward
/// differences in the constraint equations.
pub fn default_plasma_scheme() -> DiffScheme {
    DiffScheme::upwind(Difference::Backward)
        .with_override(2, Stencil::fixed(Difference::Backward))
        .with_override(3, Stencil::fixed(Difference::Backward))
}

/// System, data and derived constants for one parameter set.
#[derive(Clone, Debug)]
pub struct PlasmaModel {
    pub params: PlasmaParams,
    pub system: PdaeSystem,
    pub iv: InitialSpec,
    pub bv: BoundarySpec,
    pub k4: f64,
}

impl PlasmaModel {
    pub fn new(params: PlasmaParams) -> Result<Self> {
        Self::with_closure(params, Closure::OneSided)
    }

    pub fn with_closure(params: PlasmaParams, closure: Closure) -> Result<Self> {
        Ok(Self {
            system: build_plasma_system(&params)?,
            iv: consistent_initial_values(&params)?,
            bv: plasma_boundary_spec(&params, closure)?,
            k4: params.k4(),
            params,
        })
    }

    /// Time step for grid size `m`.
    pub fn tau(&self, m: usize) -> f64 {
        self.params.k0 / m as f64
    }
}

/// Scheme selection in configuration files: a command-line name
/// (`"default"` for the plasma default) or an explicit scheme object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeChoice {
    Named(String),
    Explicit(DiffScheme),
}

impl Default for SchemeChoice {
    fn default() -> Self {
        SchemeChoice::Named("default".into())
    }
}

impl SchemeChoice {
    pub fn resolve(&self) -> Result<DiffScheme> {
        match self {
            SchemeChoice::Named(n) if n == "default" => Ok(default_plasma_scheme()),
            SchemeChoice::Named(n) => DiffScheme::from_name(n),
            SchemeChoice::Explicit(s) => Ok(s.clone()),
        }
    }
}

/// `{"b0":..,"d1":..,"u30":..,"K2":..,"K0":..,"t_e":..,"M":..,"scheme":..}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasmaConfig {
    #[serde(flatten)]
    pub params: PlasmaParams,
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub scheme: SchemeChoice,
    #[serde(default = "default_closure")]
    pub closure: Closure,
}

fn default_m() -> usize {
    20
}

fn default_closure() -> Closure {
    Closure::OneSided
}

impl Default for PlasmaConfig {
    fn default() -> Self {
        Self {
            params: PlasmaParams::default(),
            m: default_m(),
            scheme: SchemeChoice::default(),
            closure: default_closure(),
        }
    }
}

impl PlasmaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.params.validate()?;
        Ok(cfg)
    }
}
