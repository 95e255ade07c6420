//! Time stepping: the full linearly implicit Euler scheme and the
//! fractional-step split through the approximate factorization
//! `A + tau L ~ (A + tau L1)(I + tau L2)`.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble_g, assemble_qh, boundary_values, DiffScheme, DiscreteOperator};
use crate::error::{check_len, Error, Result};
use crate::format::fmt_float;
use crate::linalg::{factor_checked, spectral_norm, BlockTridiag};
use crate::model::{
    check_compatibility, BoundarySpec, InitialSpec, PdaeSystem, Side, SourceTerm, SpaceGrid,
    StateField, TimeGrid, DEFAULT_COMPATIBILITY_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Full,
    Split,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SolverKind::Full),
            "split" => Ok(SolverKind::Split),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

const NORMAL_FORM_TOL: f64 = 1e-14;

/// Size `n1` of the identity block when `A = diag(I_{n1}, 0)`.
pub fn normalized_rank(a: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    let ones: Vec<bool> = (0..n).map(|i| (a[(i, i)] - 1.0).abs() <= NORMAL_FORM_TOL).collect();
    let n1 = ones.iter().take_while(|o| **o).count();
    let ok = (0..n).all(|i| {
        (0..n).all(|j| {
            let want = if i == j && i < n1 { 1.0 } else { 0.0 };
            (a[(i, j)] - want).abs() <= NORMAL_FORM_TOL
        })
    });
    if ok {
        return Ok(n1);
    }
    let diagonal01 = (0..n).all(|i| {
        (0..n).all(|j| i == j || a[(i, j)].abs() <= NORMAL_FORM_TOL)
            && (ones[i] || a[(i, i)].abs() <= NORMAL_FORM_TOL)
    });
    let hint = if diagonal01 {
        let perm: Vec<usize> = (0..n)
            .filter(|i| ones[*i])
            .chain((0..n).filter(|i| !ones[*i]))
            .map(|i| i + 1)
            .collect();
        format!("reorder the components as {perm:?}")
    } else {
        "no permutation suffices; transform with regular S0, S1 so that S0 A S1 = diag(I, 0)"
            .to_string()
    };
    Err(Error::Precondition(format!(
        "A is not of the form diag(I, 0); {hint}"
    )))
}

/// `L_h = L_h1 + L_h2`, split by rows: `L_h1` keeps the rows of the
/// algebraic equations, `L_h2` those of the differential ones.
#[derive(Clone, Debug)]
pub struct SplitPartition {
    pub n1: usize,
    pub l1: DiscreteOperator,
    pub l2: DiscreteOperator,
}

impl SplitPartition {
    pub fn n(&self) -> usize {
        self.l1.matrix.block_size()
    }
}

fn split_rows(op: &DiscreteOperator, n: usize, keep: impl Fn(usize) -> bool + Copy) -> DiscreteOperator {
    DiscreteOperator {
        matrix: op.matrix.select_rows(keep),
        boundary: op
            .boundary
            .iter()
            .enumerate()
            .map(|(r, v)| if keep(r % n) { *v } else { 0.0 })
            .collect(),
    }
}

pub fn partition_l(
    system: &PdaeSystem,
    u: &StateField,
    grid: &SpaceGrid,
    scheme: &DiffScheme,
    bv: &BoundarySpec,
    t: f64,
) -> Result<SplitPartition> {
    let n1 = normalized_rank(system.a())?;
    let l = assemble_qh(system, u, grid, scheme, bv, t)?;
    Ok(partition_from(&l, system.n(), n1))
}

fn partition_from(l: &DiscreteOperator, n: usize, n1: usize) -> SplitPartition {
    SplitPartition {
        n1,
        l1: split_rows(l, n, |i| i >= n1),
        l2: split_rows(l, n, |i| i < n1),
    }
}

/// Norms describing how far the split factorization is from `A + tau L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FactorizationDefect {
    /// `||(A + tau L1)(I + tau L2) - (A + tau L)||`.
    pub defect: f64,
    /// `||tau^2 L1 L2||`.
    pub second_order: f64,
    /// `||(A + tau L1)(I + tau L2) - (A + tau L) - tau^2 L1 L2||`.
    pub identity_residual: f64,
    /// `max(||A + tau L||, ||(A + tau L1)(I + tau L2)||)`.
    pub scale: f64,
}

/// Spectral norms of the factorization defect, evaluated densely.
pub fn factorization_residual(partition: &SplitPartition, a: &DMatrix<f64>, tau: f64) -> Result<FactorizationDefect> {
    let n = partition.n();
    check_len(n, a.nrows())?;
    let nb = partition.l1.matrix.blocks();
    let ia = DMatrix::<f64>::identity(nb, nb).kronecker(a);
    let l1 = partition.l1.matrix.to_dense();
    let l2 = partition.l2.matrix.to_dense();
    let id = DMatrix::<f64>::identity(n * nb, n * nb);
    let f1 = &ia + &l1 * tau;
    let f2 = &id + &l2 * tau;
    let product = &f1 * &f2;
    let whole = &ia + (&l1 + &l2) * tau;
    let second = &l1 * &l2 * (tau * tau);
    let diff = &product - &whole;
    Ok(FactorizationDefect {
        defect: spectral_norm(&diff),
        second_order: spectral_norm(&second),
        identity_residual: spectral_norm(&(&diff - &second)),
        scale: spectral_norm(&whole).max(spectral_norm(&product)),
    })
}

/// Everything fixed during a run: system, grid, scheme, boundary data and
/// the time step.
#[derive(Clone, Copy, Debug)]
pub struct Stepper<'a> {
    pub system: &'a PdaeSystem,
    pub grid: &'a SpaceGrid,
    pub scheme: &'a DiffScheme,
    pub bv: &'a BoundarySpec,
    pub tau: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(
        system: &'a PdaeSystem,
        grid: &'a SpaceGrid,
        scheme: &'a DiffScheme,
        bv: &'a BoundarySpec,
        tau: f64,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Input(format!("time step must be positive, got {tau}")));
        }
        check_len(system.n(), bv.n())?;
        Ok(Self {
            system,
            grid,
            scheme,
            bv,
            tau,
        })
    }

    fn check_state(&self, u: &StateField, f_next: &[f64]) -> Result<()> {
        check_len(self.system.n(), u.n())?;
        check_len(self.grid.interior(), u.blocks())?;
        check_len(u.values().len(), f_next.len())
    }

    /// One step of `(I (x) A/tau + Q_h[U^m]) U^{m+1} = (I (x) A/tau) U^m + F^{m+1} - b`,
    /// with boundary data taken at `t_next`.
    pub fn step_full(&self, u: &StateField, f_next: &[f64], t_next: f64) -> Result<StateField> {
        self.check_state(u, f_next)?;
        let g = assemble_g(self.system, u, self.tau, self.grid, self.scheme, self.bv, t_next)?;
        let lu = factor_checked(&g.matrix, "G")?;
        let n = self.system.n();
        let a_tau = self.system.a() / self.tau;
        let mut rhs = vec![0.0; u.values().len()];
        for j in 0..u.blocks() {
            let ub = u.block(j);
            for i in 0..n {
                let mut s = f_next[j * n + i] - g.boundary[j * n + i];
                for (l, ul) in ub.iter().enumerate() {
                    s += a_tau[(i, l)] * ul;
                }
                rhs[j * n + i] = s;
            }
        }
        lu.solve_in_place(&mut rhs);
        Ok(StateField::from_values(n, self.grid, rhs)?.with_time_index(u.time_index() + 1))
    }

    /// One fractional step:
    /// `(A + tau L1) Y = F^{m+1} - L_h[U^m] U^m`, `(I + tau L2) W = Y`,
    /// `U^{m+1} = U^m + tau W`.
    ///
    /// Each factor is solved on its own components only: the first on the
    /// algebraic ones, the second on the differential ones.
    pub fn step_split(&self, u: &StateField, f_next: &[f64], t_next: f64) -> Result<StateField> {
        self.check_state(u, f_next)?;
        let n = self.system.n();
        let n1 = normalized_rank(self.system.a())?;
        let l = assemble_qh(self.system, u, self.grid, self.scheme, self.bv, t_next)?;
        let lu_m = l.apply(u.values())?;
        let nb = u.blocks();
        let tau = self.tau;
        let diff: Vec<usize> = (0..n1).collect();
        let alg: Vec<usize> = (n1..n).collect();
        let gather = |v: &[f64], idx: &[usize]| -> Vec<f64> {
            (0..nb).flat_map(|j| idx.iter().map(move |&i| v[j * n + i])).collect()
        };
        let y_full: Vec<f64> = f_next.iter().zip(&lu_m).map(|(f, l)| f - l).collect();

        // First factor: identity on the differential rows.
        let y_d = gather(&y_full, &diff);
        let mut y_a = gather(&y_full, &alg);
        if !alg.is_empty() {
            let mut coupling = vec![0.0; y_a.len()];
            if !diff.is_empty() {
                l.matrix.coupling_mul_add(&alg, &diff, &y_d, &mut coupling);
            }
            for (y, c) in y_a.iter_mut().zip(&coupling) {
                *y = *y / tau - c;
            }
            let k1 = l.matrix.restrict(&alg);
            factor_checked(&k1, "first split factor (A + tau L1)")?.solve_in_place(&mut y_a);
        }

        // Second factor: identity on the algebraic rows.
        let w_a = y_a;
        let mut w_d = y_d;
        if !diff.is_empty() {
            if !alg.is_empty() {
                let mut coupling = vec![0.0; w_d.len()];
                l.matrix.coupling_mul_add(&diff, &alg, &w_a, &mut coupling);
                for (w, c) in w_d.iter_mut().zip(&coupling) {
                    *w -= tau * c;
                }
            }
            let mut k2: BlockTridiag = l.matrix.restrict(&diff).scaled(tau);
            k2.add_to_diagonal(&DMatrix::identity(diff.len(), diff.len()));
            factor_checked(&k2, "second split factor (I + tau L2)")?.solve_in_place(&mut w_d);
        }

        let mut next = u.values().to_vec();
        for j in 0..nb {
            for (c, &i) in diff.iter().enumerate() {
                next[j * n + i] += tau * w_d[j * diff.len() + c];
            }
            for (c, &i) in alg.iter().enumerate() {
                next[j * n + i] += tau * w_a[j * alg.len() + c];
            }
        }
        Ok(StateField::from_values(n, self.grid, next)?.with_time_index(u.time_index() + 1))
    }

    pub fn step(&self, kind: SolverKind, u: &StateField, f_next: &[f64], t_next: f64) -> Result<StateField> {
        match kind {
            SolverKind::Full => self.step_full(u, f_next, t_next),
            SolverKind::Split => self.step_split(u, f_next, t_next),
        }
    }
}

/// Sequence of states at `t_m = m tau`, with the boundary values that
/// complete each state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: SpaceGrid,
    pub tgrid: TimeGrid,
    pub scheme: DiffScheme,
    pub solver: SolverKind,
    pub states: Vec<StateField>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub elapsed: Duration,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states[0].n()
    }

    pub fn last(&self) -> &StateField {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn time(&self, m: usize) -> f64 {
        self.tgrid.t(m)
    }

    /// Values of component `i` at all grid points `x_0..x_M` at step `m`.
    pub fn profile(&self, m: usize, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.m() + 1);
        out.push(self.left[m][i]);
        out.extend(self.states[m].component(i));
        out.push(self.right[m][i]);
        out
    }

    /// CSV with header `t,x,u1,...,un`, including boundary points.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut s = String::from("t,x");
        for i in 1..=n {
            let _ = write!(s, ",u{i}");
        }
        s.push('\n');
        for (m, state) in self.states.iter().enumerate() {
            let t = fmt_float(self.time(m));
            for k in 0..=self.grid.m() {
                let vals: &[f64] = if k == 0 {
                    &self.left[m]
                } else if k == self.grid.m() {
                    &self.right[m]
                } else {
                    state.block(k - 1)
                };
                let _ = write!(s, "{t},{}", fmt_float(self.grid.x(k)));
                for v in vals {
                    let _ = write!(s, ",{}", fmt_float(*v));
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Runs `m_max` steps from the sampled initial data.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    system: &PdaeSystem,
    iv: &InitialSpec,
    bv: &BoundarySpec,
    f: &SourceTerm,
    grid: &SpaceGrid,
    tgrid: &TimeGrid,
    scheme: &DiffScheme,
    solver: SolverKind,
) -> Result<Trajectory> {
    let n = system.n();
    check_len(n, iv.n())?;
    check_len(n, f.n())?;
    let report = check_compatibility(iv, bv, DEFAULT_COMPATIBILITY_TOL)?;
    if !report.passed {
        let list: Vec<String> = report
            .failures()
            .map(|r| format!("u{} {:?} residual {:.3e}", r.component + 1, r.side, r.residual))
            .collect();
        return Err(Error::Precondition(format!(
            "initial and boundary values are incompatible: {}",
            list.join(", ")
        )));
    }
    if solver == SolverKind::Split {
        normalized_rank(system.a())?;
    }
    let stepper = Stepper::new(system, grid, scheme, bv, tgrid.tau())?;
    let start = Instant::now();
    let u0 = iv.sample(grid);
    let edge = |side: Side, x: f64| -> Vec<f64> {
        (0..n)
            .map(|i| bv.entry(i, side).value(0.0).unwrap_or_else(|| iv.eval(i, x)))
            .collect()
    };
    let mut left = vec![edge(Side::Left, 0.0)];
    let mut right = vec![edge(Side::Right, 1.0)];
    let mut states = Vec::with_capacity(tgrid.steps() + 1);
    states.push(u0);
    for m in 0..tgrid.steps() {
        let t_next = tgrid.t(m + 1);
        let f_next = f.sample(t_next, grid);
        let next = stepper
            .step(solver, &states[m], &f_next, t_next)
            .map_err(|e| e.at_step(m + 1))?;
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite values in the solution".into()).at_step(m + 1));
        }
        left.push(boundary_values(&next, grid, bv, t_next, Side::Left)?);
        right.push(boundary_values(&next, grid, bv, t_next, Side::Right)?);
        states.push(next);
    }
    Ok(Trajectory {
        grid: *grid,
        tgrid: *tgrid,
        scheme: scheme.clone(),
        solver,
        states,
        left,
        right,
        elapsed: start.elapsed(),
    })
}
