//! Difference operators and the assembled discrete system.
//!
//! On the interior points `x_1, ..., x_{M-1}` the operator
//! `L[u] = B u_xx + C[u] u_x + D u` becomes the block-tridiagonal
//! `Q_h[U] = (1/h^2) P (x) B + (1/qh) P~ (x) C[U] + I (x) D` acting on the
//! interior unknowns plus a vector collecting the boundary values.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::format::fmt_float;
use crate::linalg::BlockTridiag;
use crate::model::{BoundaryKind, BoundarySpec, Closure, PdaeSystem, Side, SpaceGrid, StateField};

/// First-derivative difference quotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difference {
    Central,
    Forward,
    Backward,
}

impl Difference {
    /// Denominator factor: the quotient is `(...) / (q h)`.
    pub fn q(self) -> usize {
        match self {
            Difference::Central => 2,
            Difference::Forward | Difference::Backward => 1,
        }
    }

    /// `(offset, weight)` pairs of the quotient scaled to mesh width `h`.
    fn taps(self, h: f64) -> [(isize, f64); 2] {
        match self {
            Difference::Central => [(-1, -0.5 / h), (1, 0.5 / h)],
            Difference::Forward => [(0, -1.0 / h), (1, 1.0 / h)],
            Difference::Backward => [(-1, -1.0 / h), (0, 1.0 / h)],
        }
    }
}

/// How the first derivative in one equation is differenced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Stencil {
    Fixed { difference: Difference },
    /// Diagonal term: backward where the local coefficient `C_ii(u_k)` is
    /// nonnegative, forward otherwise. Off-diagonal terms use `coupling`.
    UpwindBySign { coupling: Difference },
}

impl Stencil {
    pub fn fixed(difference: Difference) -> Self {
        Stencil::Fixed { difference }
    }

    fn resolve(self, diagonal: bool, c_ii: f64) -> Difference {
        match self {
            Stencil::Fixed { difference } => difference,
            Stencil::UpwindBySign { .. } if diagonal => {
                if c_ii >= 0.0 {
                    Difference::Backward
                } else {
                    Difference::Forward
                }
            }
            Stencil::UpwindBySign { coupling } => coupling,
        }
    }
}

/// First-derivative discretization, with optional per-equation overrides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffScheme {
    pub default: Stencil,
    #[serde(default)]
    pub overrides: BTreeMap<usize, Stencil>,
}

impl DiffScheme {
    pub fn uniform(difference: Difference) -> Self {
        Self {
            default: Stencil::fixed(difference),
            overrides: BTreeMap::new(),
        }
    }

    pub fn upwind(coupling: Difference) -> Self {
        Self {
            default: Stencil::UpwindBySign { coupling },
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, equation: usize, stencil: Stencil) -> Self {
        self.overrides.insert(equation, stencil);
        self
    }

    pub fn stencil(&self, equation: usize) -> Stencil {
        self.overrides.get(&equation).copied().unwrap_or(self.default)
    }

    /// True when some equation picks its direction from the state.
    pub fn is_state_dependent(&self) -> bool {
        std::iter::once(&self.default)
            .chain(self.overrides.values())
            .any(|s| matches!(s, Stencil::UpwindBySign { .. }))
    }

    /// The common `q` if every equation uses the same fixed quotient.
    pub fn uniform_difference(&self) -> Option<Difference> {
        let d = match self.default {
            Stencil::Fixed { difference } => difference,
            _ => return None,
        };
        self.overrides
            .values()
            .all(|s| *s == Stencil::fixed(d))
            .then_some(d)
    }

    /// Parses the command-line names `central|forward|backward|upwind`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "central" => Ok(Self::uniform(Difference::Central)),
            "forward" => Ok(Self::uniform(Difference::Forward)),
            "backward" => Ok(Self::uniform(Difference::Backward)),
            "upwind" => Ok(Self::upwind(Difference::Backward)),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Tridiagonal `(1, -2, 1)` matrix of size `M - 1`.
pub fn build_p(m: usize) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(Error::Input(format!("M must be at least 2, got {m}")));
    }
    let n = m - 1;
    Ok(DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            -2.0
        } else if r.abs_diff(c) == 1 {
            1.0
        } else {
            0.0
        }
    }))
}

/// First-difference matrix `P~` and its `q`, so that `(1/qh) P~ U`
/// approximates `u_x` under homogeneous boundary values.
pub fn build_ptilde(m: usize, difference: Difference) -> Result<(DMatrix<f64>, usize)> {
    if m < 2 {
        return Err(Error::Input(format!("M must be at least 2, got {m}")));
    }
    let n = m - 1;
    let p = DMatrix::from_fn(n, n, |r, c| match difference {
        Difference::Central if c == r + 1 => 1.0,
        Difference::Central if r == c + 1 => -1.0,
        Difference::Forward if c == r => -1.0,
        Difference::Forward if c == r + 1 => 1.0,
        Difference::Backward if c == r => 1.0,
        Difference::Backward if r == c + 1 => -1.0,
        _ => 0.0,
    });
    Ok((p, difference.q()))
}

/// Superdiagonal shift `H_{M-1}`.
pub fn shift_matrix(m: usize) -> DMatrix<f64> {
    let n = m.saturating_sub(1);
    DMatrix::from_fn(n, n, |r, c| if c == r + 1 { 1.0 } else { 0.0 })
}

/// Eigen-decomposition of `P / h^2`.
#[derive(Clone, Debug)]
pub struct LaplacianSpectrum {
    pub m: usize,
    /// `lambda_k`, `k = 1..M-1`, stored at index `k - 1`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal sine basis; symmetric and its own inverse.
    pub phi: DMatrix<f64>,
}

impl LaplacianSpectrum {
    pub fn lambda(&self, k: usize) -> f64 {
        self.eigenvalues[k - 1]
    }
}

pub fn laplacian_spectrum(m: usize) -> Result<LaplacianSpectrum> {
    if m < 2 {
        return Err(Error::Input(format!("M must be at least 2, got {m}")));
    }
    let h = 1.0 / m as f64;
    let mf = m as f64;
    let eigenvalues = (1..m)
        .map(|k| {
            let s = (k as f64 * PI / (2.0 * mf)).sin();
            -4.0 / (h * h) * s * s
        })
        .collect();
    let scale = (2.0 * h).sqrt();
    let phi = DMatrix::from_fn(m - 1, m - 1, |j, k| {
        scale * (((j + 1) * (k + 1)) as f64 * PI / mf).sin()
    });
    Ok(LaplacianSpectrum {
        m,
        eigenvalues,
        phi,
    })
}

/// A linear operator on the interior unknowns together with the constant
/// vector contributed by boundary values: the full discrete operator applied
/// to a field is `matrix * U + boundary`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub matrix: BlockTridiag,
    pub boundary: Vec<f64>,
}

impl DiscreteOperator {
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.matrix.mul_vec(u)?;
        for (yi, bi) in y.iter_mut().zip(&self.boundary) {
            *yi += bi;
        }
        Ok(y)
    }
}

/// Interior taps of a resolved stencil plus the constant from Dirichlet data.
#[derive(Debug, Default)]
struct Taps {
    interior: Vec<(usize, f64)>,
    constant: f64,
}

impl Taps {
    fn push(&mut self, block: usize, w: f64) {
        match self.interior.iter_mut().find(|(b, _)| *b == block) {
            Some(t) => t.1 += w,
            None => self.interior.push((block, w)),
        }
    }

    fn eval(&self, v: &StateField, l: usize) -> f64 {
        self.constant
            + self
                .interior
                .iter()
                .map(|(b, w)| w * v.block(*b)[l])
                .sum::<f64>()
    }
}

/// Boundary data and grid needed to resolve stencils near the ends.
struct Resolver<'a> {
    grid: &'a SpaceGrid,
    bv: &'a BoundarySpec,
    t: f64,
}

impl Resolver<'_> {
    fn free_closure(&self, l: usize, side: Side) -> Result<Option<Option<Closure>>> {
        Ok(match &self.bv.entry(l, side).kind {
            BoundaryKind::Dirichlet(_) => None,
            BoundaryKind::Free(c) => Some(*c),
        })
    }

    fn missing(l: usize, side: Side) -> Error {
        Error::Config(format!(
            "component {} has a free {side:?} boundary without a closure rule",
            l + 1
        ))
    }

    /// Adds `w * u_l(x_p)` to `taps` for any grid point `p` in `0..=M`.
    fn add_point(&self, taps: &mut Taps, l: usize, p: usize, w: f64) -> Result<()> {
        let m = self.grid.m();
        if p >= 1 && p < m {
            taps.push(p - 1, w);
            return Ok(());
        }
        let side = if p == 0 { Side::Left } else { Side::Right };
        let entry = self.bv.entry(l, side);
        match &entry.kind {
            BoundaryKind::Dirichlet(g) => taps.constant += w * g(self.t),
            BoundaryKind::Free(None) => return Err(Self::missing(l, side)),
            BoundaryKind::Free(Some(Closure::ZeroGradient)) => {
                let near = if p == 0 { 0 } else { m - 2 };
                taps.push(near, w);
            }
            BoundaryKind::Free(Some(Closure::Linear)) => {
                if m < 3 {
                    return Err(Error::Config(
                        "linear boundary closure needs M >= 3".into(),
                    ));
                }
                let (near, next) = if p == 0 { (0, 1) } else { (m - 2, m - 3) };
                taps.push(near, 2.0 * w);
                taps.push(next, -w);
            }
            BoundaryKind::Free(Some(Closure::OneSided)) => {
                return Err(Error::Config(format!(
                    "component {} uses a one-sided closure at the {side:?} boundary \
                     but a second-derivative term reaches it",
                    l + 1
                )))
            }
        }
        Ok(())
    }

    /// First derivative of component `l` at interior point `k`.
    fn first(&self, l: usize, k: usize, mut d: Difference) -> Result<Taps> {
        let m = self.grid.m();
        let h = self.grid.h();
        let touches = |d: Difference, p: isize| d.taps(h).iter().any(|(o, _)| k as isize + o == p);
        // One-sided closures turn the quotient away from the free end.
        if touches(d, m as isize) {
            if let Some(c) = self.free_closure(l, Side::Right)? {
                match c {
                    None => return Err(Self::missing(l, Side::Right)),
                    Some(Closure::OneSided) => d = Difference::Backward,
                    Some(_) => {}
                }
            }
        }
        if touches(d, 0) {
            if let Some(c) = self.free_closure(l, Side::Left)? {
                match c {
                    None => return Err(Self::missing(l, Side::Left)),
                    Some(Closure::OneSided) => {
                        if touches(Difference::Forward, m as isize)
                            && matches!(
                                self.free_closure(l, Side::Right)?,
                                Some(Some(Closure::OneSided))
                            )
                        {
                            return Err(Error::Config(format!(
                                "component {} is free on both sides and M = {m} leaves no \
                                 one-sided stencil",
                                l + 1
                            )));
                        }
                        d = Difference::Forward;
                    }
                    Some(_) => {}
                }
            }
        }
        let mut taps = Taps::default();
        for (o, w) in d.taps(h) {
            self.add_point(&mut taps, l, (k as isize + o) as usize, w)?;
        }
        Ok(taps)
    }

    /// Second derivative of component `l` at interior point `k`.
    fn second(&self, l: usize, k: usize) -> Result<Taps> {
        let h2 = self.grid.h() * self.grid.h();
        let mut taps = Taps::default();
        for (p, w) in [(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)] {
            self.add_point(&mut taps, l, p, w / h2)?;
        }
        Ok(taps)
    }
}

fn structural_c(system: &PdaeSystem) -> DMatrix<bool> {
    let n = system.n();
    DMatrix::from_fn(n, n, |i, j| {
        system.c0()[(i, j)] != 0.0 || (0..n).any(|k| system.c1().get(i, j, k) != 0.0)
    })
}

fn check_inputs(system: &PdaeSystem, u: &StateField, grid: &SpaceGrid, bv: &BoundarySpec) -> Result<()> {
    check_len(system.n(), u.n())?;
    check_len(grid.interior(), u.blocks())?;
    check_len(system.n(), bv.n())
}

/// Direction chosen for the `(i, l)` convection term at point block `j`.
fn resolve_difference(scheme: &DiffScheme, i: usize, l: usize, c: &DMatrix<f64>) -> Difference {
    scheme.stencil(i).resolve(i == l, c[(i, i)])
}

/// Assembles `Q_h[U]` with boundary values at time `t`.
pub fn assemble_qh(
    system: &PdaeSystem,
    u: &StateField,
    grid: &SpaceGrid,
    scheme: &DiffScheme,
    bv: &BoundarySpec,
    t: f64,
) -> Result<DiscreteOperator> {
    check_inputs(system, u, grid, bv)?;
    let n = system.n();
    let nb = grid.interior();
    let res = Resolver { grid, bv, t };
    let has_c = structural_c(system);
    let mut op = BlockTridiag::zeros(n, nb);
    let mut boundary = vec![0.0; n * nb];
    let mut c = DMatrix::zeros(n, n);

    for j in 0..nb {
        let k = j + 1;
        c.copy_from(system.c0());
        system.eval_c_into(u.block(j), &mut c);
        for i in 0..n {
            for l in 0..n {
                let b = system.b()[(i, l)];
                if b != 0.0 {
                    let taps = res.second(l, k)?;
                    scatter(&mut op, &mut boundary, n, j, i, l, b, &taps);
                }
                if has_c[(i, l)] {
                    let d = resolve_difference(scheme, i, l, &c);
                    let taps = res.first(l, k, d)?;
                    scatter(&mut op, &mut boundary, n, j, i, l, c[(i, l)], &taps);
                }
            }
        }
        *op.diag_mut(j) += system.d();
    }
    Ok(DiscreteOperator {
        matrix: op,
        boundary,
    })
}

#[allow(clippy::too_many_arguments)]
fn scatter(
    op: &mut BlockTridiag,
    boundary: &mut [f64],
    n: usize,
    j: usize,
    i: usize,
    l: usize,
    coef: f64,
    taps: &Taps,
) {
    if coef == 0.0 {
        return;
    }
    for &(blk, w) in &taps.interior {
        let target = if blk == j {
            op.diag_mut(j)
        } else if blk + 1 == j {
            op.lower_mut(j)
        } else {
            op.upper_mut(j)
        };
        target[(i, l)] += coef * w;
    }
    boundary[j * n + i] += coef * taps.constant;
}

/// `G = I (x) A/tau + Q_h[U]`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_g(
    system: &PdaeSystem,
    u: &StateField,
    tau: f64,
    grid: &SpaceGrid,
    scheme: &DiffScheme,
    bv: &BoundarySpec,
    t: f64,
) -> Result<DiscreteOperator> {
    if !(tau > 0.0) {
        return Err(Error::Input(format!("time step must be positive, got {tau}")));
    }
    let mut q = assemble_qh(system, u, grid, scheme, bv, t)?;
    q.matrix.add_to_diagonal(&(system.a() / tau));
    Ok(q)
}

/// Matrix `C~[V]` with `C~[V] eta = C1[eta] delta V` blockwise, where
/// `delta V` is the same first-difference quotient (boundary values of `V`
/// at time `t` included) that the assembly uses. The result is
/// block-diagonal and already carries the `1/(qh)` factor.
///
/// Stencils that depend on the state take their directions from
/// `sign_state`, which must then be given.
#[allow(clippy::too_many_arguments)]
pub fn build_ctilde(
    system: &PdaeSystem,
    v: &StateField,
    grid: &SpaceGrid,
    scheme: &DiffScheme,
    bv: &BoundarySpec,
    t: f64,
    sign_state: Option<&StateField>,
) -> Result<BlockTridiag> {
    check_inputs(system, v, grid, bv)?;
    if scheme.is_state_dependent() && sign_state.is_none() {
        return Err(Error::Config(
            "upwind stencils need the state that fixes their directions".into(),
        ));
    }
    let dir_state = sign_state.unwrap_or(v);
    check_len(v.values().len(), dir_state.values().len())?;
    let n = system.n();
    let nb = grid.interior();
    let res = Resolver { grid, bv, t };
    let has_c = structural_c(system);
    let mut out = BlockTridiag::zeros(n, nb);
    let mut c = DMatrix::zeros(n, n);
    for j in 0..nb {
        c.copy_from(system.c0());
        system.eval_c_into(dir_state.block(j), &mut c);
        let blk = out.diag_mut(j);
        for i in 0..n {
            for l in 0..n {
                if !has_c[(i, l)] {
                    continue;
                }
                let d = resolve_difference(scheme, i, l, &c);
                let dv = res.first(l, j + 1, d)?.eval(v, l);
                for p in 0..n {
                    blk[(i, p)] += system.c1().get(i, l, p) * dv;
                }
            }
        }
    }
    Ok(out)
}

/// Values at `x = 0` and `x = 1` completing an interior field, from the
/// Dirichlet data or the closure of free entries.
pub fn boundary_values(
    u: &StateField,
    grid: &SpaceGrid,
    bv: &BoundarySpec,
    t: f64,
    side: Side,
) -> Result<Vec<f64>> {
    check_len(bv.n(), u.n())?;
    check_len(grid.interior(), u.blocks())?;
    let nb = u.blocks();
    let (near, next) = match side {
        Side::Left => (0, 1.min(nb - 1)),
        Side::Right => (nb - 1, nb.saturating_sub(2)),
    };
    (0..u.n())
        .map(|i| match &bv.entry(i, side).kind {
            BoundaryKind::Dirichlet(g) => Ok(g(t)),
            BoundaryKind::Free(Some(Closure::ZeroGradient)) => Ok(u.block(near)[i]),
            BoundaryKind::Free(Some(_)) => {
                if nb < 2 {
                    Ok(u.block(near)[i])
                } else {
                    Ok(2.0 * u.block(near)[i] - u.block(next)[i])
                }
            }
            BoundaryKind::Free(None) => Err(Resolver::missing(i, side)),
        })
        .collect()
}

/// Dense row-major CSV with header `i,j,value`.
pub fn dense_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::from("i,j,value\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let _ = writeln!(s, "{r},{c},{}", fmt_float(m[(r, c)]));
        }
    }
    s
}
