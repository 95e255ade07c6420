//! System definition, grids, grid fields, and initial/boundary data.
//!
//! A system has the form `A u_t + B u_xx + C[u] u_x + D u = f(t, x)` on the
//! unit interval, where `A`, `B`, `D` are constant and the convection matrix
//! is affine in the state: `C[u] = C0 + sum_k C1[.,.,k] u_k`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Dense `n x n x n` tensor holding `dC_ij / du_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvectionTensor {
    n: usize,
    data: Vec<f64>,
}

impl ConvectionTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = nested.len();
        let mut t = Self::zeros(n);
        for (i, plane) in nested.iter().enumerate() {
            check_len(n, plane.len())?;
            for (j, row) in plane.iter().enumerate() {
                check_len(n, row.len())?;
                for (k, v) in row.iter().enumerate() {
                    t.set(i, j, k, *v);
                }
            }
        }
        Ok(t)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| (0..self.n).map(|k| self.get(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

/// Quasi-linear PDAE `A u_t + B u_xx + C[u] u_x + D u = f`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdaeSystem {
    n: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    d: DMatrix<f64>,
    c0: DMatrix<f64>,
    c1: ConvectionTensor,
}

impl PdaeSystem {
    /// Builds a system, rejecting dimension mismatches and `A = 0` or `B = 0`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
        c0: DMatrix<f64>,
        c1: ConvectionTensor,
    ) -> Result<Self> {
        let sys = Self::new_unvalidated(a, b, d, c0, c1)?;
        if sys.a.iter().all(|v| *v == 0.0) {
            return Err(Error::Input("A must have at least one nonzero entry".into()));
        }
        if sys.b.iter().all(|v| *v == 0.0) {
            return Err(Error::Input("B must have at least one nonzero entry".into()));
        }
        Ok(sys)
    }

    /// Like [`PdaeSystem::new`] but accepts `A = 0` or `B = 0`.
    ///
    /// Purely algebraic or purely ODE systems are outside the solver's class
    /// but still meaningful for index analysis.
    pub fn new_unvalidated(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
        c0: DMatrix<f64>,
        c1: ConvectionTensor,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Input("system size must be positive".into()));
        }
        for (name, m) in [("A", &a), ("B", &b), ("D", &d), ("C0", &c0)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Input(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        check_len(n, c1.dim())?;
        Ok(Self { n, a, b, d, c0, c1 })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn c0(&self) -> &DMatrix<f64> {
        &self.c0
    }
    pub fn c1(&self) -> &ConvectionTensor {
        &self.c1
    }

    /// `C[u] = C0 + sum_k C1[:, :, k] u_k`.
    pub fn eval_c(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        check_len(self.n, u.len())?;
        let mut out = self.c0.clone();
        self.eval_c_into(u, &mut out);
        Ok(out)
    }

    /// `C1dir[w]_(i,k) = sum_j C1[i][j][k] w_j`, the directional part that
    /// appears when `C[u] u_x` is differentiated in time.
    pub fn eval_c1_dir(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        check_len(self.n, w.len())?;
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    s += self.c1.get(i, j, k) * wj;
                }
                out[(i, k)] = s;
            }
        }
        Ok(out)
    }

    /// Linear part only: `sum_k C1[:, :, k] u_k`.
    pub fn eval_c_linear(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        check_len(self.n, u.len())?;
        let mut out = DMatrix::zeros(self.n, self.n);
        self.eval_c_into(u, &mut out);
        Ok(out)
    }

    /// Adds `sum_k C1[:, :, k] u_k` into `out`. Caller guarantees dimensions.
    pub(crate) fn eval_c_into(&self, u: &[f64], out: &mut DMatrix<f64>) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for (k, uk) in u.iter().enumerate() {
                    s += self.c1.get(i, j, k) * uk;
                }
                out[(i, j)] += s;
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SystemDocument::from(self)).expect("system serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDocument =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("system JSON: {e}")))?;
        Self::try_from(doc)
    }
}

/// Wire form of [`PdaeSystem`]: row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemDocument {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "C0")]
    pub c0: Vec<Vec<f64>>,
    #[serde(rename = "C1")]
    pub c1: Vec<Vec<Vec<f64>>>,
}

fn matrix_from_rows(name: &str, n: usize, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Input(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl From<&PdaeSystem> for SystemDocument {
    fn from(s: &PdaeSystem) -> Self {
        Self {
            n: s.n,
            a: matrix_to_rows(&s.a),
            b: matrix_to_rows(&s.b),
            d: matrix_to_rows(&s.d),
            c0: matrix_to_rows(&s.c0),
            c1: s.c1.to_nested(),
        }
    }
}

impl TryFrom<SystemDocument> for PdaeSystem {
    type Error = Error;

    fn try_from(doc: SystemDocument) -> Result<Self> {
        let n = doc.n;
        if doc.c1.len() != n {
            return Err(Error::Input(format!("C1 must be {n}x{n}x{n}")));
        }
        PdaeSystem::new(
            matrix_from_rows("A", n, &doc.a)?,
            matrix_from_rows("B", n, &doc.b)?,
            matrix_from_rows("D", n, &doc.d)?,
            matrix_from_rows("C0", n, &doc.c0)?,
            ConvectionTensor::from_nested(&doc.c1)?,
        )
    }
}

/// Equidistant grid `x_k = k h`, `k = 0..=M`, with `h = 1/M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceGrid {
    m: usize,
    h: f64,
}

impl SpaceGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Input(format!("grid needs M >= 2 subintervals, got {m}")));
        }
        Ok(Self {
            m,
            h: 1.0 / m as f64,
        })
    }

    /// Number of subintervals `M`.
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Number of interior points, `M - 1`.
    pub fn interior(&self) -> usize {
        self.m - 1
    }
    /// Coordinate of grid point `k` (0 and `M` are the boundary).
    pub fn x(&self, k: usize) -> f64 {
        k as f64 * self.h
    }
}

/// Equidistant time levels `t_m = m tau`, `m = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    tau: f64,
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, t_end: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Input(format!("time step must be positive, got {tau}")));
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Input(format!("final time must be positive, got {t_end}")));
        }
        let steps = (t_end / tau).round() as usize;
        if steps == 0 {
            return Err(Error::Input(format!(
                "final time {t_end} is shorter than half a step {tau}"
            )));
        }
        Ok(Self { tau, t_end, steps })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn t(&self, m: usize) -> f64 {
        m as f64 * self.tau
    }
}

/// Interior unknowns `U = (u_1^T, ..., u_{M-1}^T)^T`, one `n`-block per point.
///
/// Block `j` (0-based) holds the state at grid point `x_{j+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    n: usize,
    values: Vec<f64>,
    time_index: usize,
}

impl StateField {
    pub fn zeros(n: usize, grid: &SpaceGrid) -> Self {
        Self {
            n,
            values: vec![0.0; n * grid.interior()],
            time_index: 0,
        }
    }

    pub fn from_values(n: usize, grid: &SpaceGrid, values: Vec<f64>) -> Result<Self> {
        check_len(n * grid.interior(), values.len())?;
        Ok(Self {
            n,
            values,
            time_index: 0,
        })
    }

    /// Samples `profile(x)` at the interior points.
    pub fn sample(n: usize, grid: &SpaceGrid, mut profile: impl FnMut(f64, &mut [f64])) -> Self {
        let mut field = Self::zeros(n, grid);
        for j in 0..grid.interior() {
            profile(grid.x(j + 1), field.block_mut(j));
        }
        field
    }

    pub fn with_time_index(mut self, m: usize) -> Self {
        self.time_index = m;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn time_index(&self) -> usize {
        self.time_index
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn blocks(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn block(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn set_block(&mut self, j: usize, u: &[f64]) -> Result<()> {
        check_len(self.n, u.len())?;
        self.block_mut(j).copy_from_slice(u);
        Ok(())
    }

    /// Values of component `i` over the interior points.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.n).copied().collect()
    }
}

/// Whether a piece of initial or boundary data is free or forced by the
/// algebraic constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataClass {
    Arbitrary,
    Consistent,
}

/// How a component without a boundary value is closed at that side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// First-derivative stencils at the adjacent interior point switch to the
    /// one-sided difference pointing into the domain.
    OneSided,
    /// Ghost value equals the adjacent interior value.
    ZeroGradient,
    /// Ghost value linearly extrapolated from the two adjacent interior values.
    Linear,
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryKind {
    /// Prescribed value as a function of time.
    Dirichlet(ScalarFn),
    /// No value given; `None` means no closure rule has been declared.
    Free(Option<Closure>),
}

impl fmt::Debug for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryKind::Dirichlet(_) => f.write_str("Dirichlet(..)"),
            BoundaryKind::Free(c) => write!(f, "Free({c:?})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryEntry {
    pub kind: BoundaryKind,
    pub class: DataClass,
}

impl BoundaryEntry {
    pub fn dirichlet(value: impl Fn(f64) -> f64 + Send + Sync + 'static, class: DataClass) -> Self {
        Self {
            kind: BoundaryKind::Dirichlet(Arc::new(value)),
            class,
        }
    }

    pub fn constant(value: f64, class: DataClass) -> Self {
        Self::dirichlet(move |_| value, class)
    }

    pub fn free(closure: Closure) -> Self {
        Self {
            kind: BoundaryKind::Free(Some(closure)),
            class: DataClass::Consistent,
        }
    }

    /// Value at time `t`, or `None` for free entries.
    pub fn value(&self, t: f64) -> Option<f64> {
        match &self.kind {
            BoundaryKind::Dirichlet(g) => Some(g(t)),
            BoundaryKind::Free(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Per-component boundary data at `x = 0` and `x = 1`.
#[derive(Clone, Debug)]
pub struct BoundarySpec {
    left: Vec<BoundaryEntry>,
    right: Vec<BoundaryEntry>,
}

impl BoundarySpec {
    pub fn new(left: Vec<BoundaryEntry>, right: Vec<BoundaryEntry>) -> Result<Self> {
        check_len(left.len(), right.len())?;
        Ok(Self { left, right })
    }

    /// Homogeneous Dirichlet data on both sides for every component.
    pub fn homogeneous(n: usize) -> Self {
        let entries = || {
            (0..n)
                .map(|_| BoundaryEntry::constant(0.0, DataClass::Arbitrary))
                .collect()
        };
        Self {
            left: entries(),
            right: entries(),
        }
    }

    /// Constant Dirichlet data, the same on both sides.
    pub fn constant(values: &[f64]) -> Self {
        let entries = || {
            values
                .iter()
                .map(|v| BoundaryEntry::constant(*v, DataClass::Arbitrary))
                .collect()
        };
        Self {
            left: entries(),
            right: entries(),
        }
    }

    pub fn n(&self) -> usize {
        self.left.len()
    }

    pub fn entry(&self, i: usize, side: Side) -> &BoundaryEntry {
        match side {
            Side::Left => &self.left[i],
            Side::Right => &self.right[i],
        }
    }

    pub fn set(&mut self, i: usize, side: Side, entry: BoundaryEntry) {
        match side {
            Side::Left => self.left[i] = entry,
            Side::Right => self.right[i] = entry,
        }
    }
}

/// Per-component initial profiles on `[0, 1]`.
#[derive(Clone)]
pub struct InitialSpec {
    profiles: Vec<(ScalarFn, DataClass)>,
}

impl fmt::Debug for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.profiles.iter().map(|(_, c)| c))
            .finish()
    }
}

impl InitialSpec {
    pub fn new(profiles: Vec<(ScalarFn, DataClass)>) -> Self {
        Self { profiles }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self {
            profiles: values
                .iter()
                .map(|v| {
                    let v = *v;
                    (Arc::new(move |_: f64| v) as ScalarFn, DataClass::Arbitrary)
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.profiles.len()
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        (self.profiles[i].0)(x)
    }

    pub fn class(&self, i: usize) -> DataClass {
        self.profiles[i].1
    }

    pub fn sample(&self, grid: &SpaceGrid) -> StateField {
        StateField::sample(self.n(), grid, |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.eval(i, x);
            }
        })
    }
}

/// Right-hand side `f(t, x)`, written into an `n`-slice.
#[derive(Clone)]
pub struct SourceTerm {
    n: usize,
    f: Option<Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>>,
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SourceTerm(n={}, zero={})", self.n, self.f.is_none())
    }
}

impl SourceTerm {
    pub fn zero(n: usize) -> Self {
        Self { n, f: None }
    }

    pub fn new(n: usize, f: impl Fn(f64, f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            n,
            f: Some(Arc::new(f)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, t: f64, x: f64, out: &mut [f64]) {
        match &self.f {
            Some(f) => f(t, x, out),
            None => out.fill(0.0),
        }
    }

    /// `F = (f(t, x_1)^T, ..., f(t, x_{M-1})^T)^T`.
    pub fn sample(&self, t: f64, grid: &SpaceGrid) -> Vec<f64> {
        let mut out = vec![0.0; self.n * grid.interior()];
        for (j, chunk) in out.chunks_mut(self.n).enumerate() {
            self.eval(t, grid.x(j + 1), chunk);
        }
        out
    }
}

/// One initial/boundary mismatch at `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityResidual {
    pub component: usize,
    pub side: Side,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub passed: bool,
    pub tolerance: f64,
    pub residuals: Vec<CompatibilityResidual>,
}

impl CompatibilityReport {
    pub fn failures(&self) -> impl Iterator<Item = &CompatibilityResidual> {
        self.residuals
            .iter()
            .filter(move |r| r.residual.abs() > self.tolerance)
    }
}

pub const DEFAULT_COMPATIBILITY_TOL: f64 = 1e-12;

/// Checks `u(0, x) = boundary value at t = 0` at `x in {0, 1}` for every
/// component that has a Dirichlet value there.
pub fn check_compatibility(
    iv: &InitialSpec,
    bv: &BoundarySpec,
    tol: f64,
) -> Result<CompatibilityReport> {
    check_len(iv.n(), bv.n())?;
    let mut residuals = Vec::new();
    for i in 0..iv.n() {
        for (side, x) in [(Side::Left, 0.0), (Side::Right, 1.0)] {
            if let Some(g) = bv.entry(i, side).value(0.0) {
                residuals.push(CompatibilityResidual {
                    component: i,
                    side,
                    residual: iv.eval(i, x) - g,
                });
            }
        }
    }
    let passed = residuals.iter().all(|r| r.residual.abs() <= tol);
    Ok(CompatibilityReport {
        passed,
        tolerance: tol,
        residuals,
    })
}
