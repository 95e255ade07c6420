//! Numerical time-index check.
//!
//! With `u` frozen, differentiating selected equations in time gives a
//! linear system for `u_t`. It is discretized on two grids; the index is
//! certified when the smallest singular value of the part that determines
//! `u_t` stays bounded away from zero under refinement.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::discretization::{assemble_qh, DiffScheme, Difference};
use crate::error::{check_len, Error, Result};
use crate::linalg::{sigma_min, spectral_norm, BlockTridiag};
use crate::model::{
    BoundaryEntry, BoundaryKind, BoundarySpec, PdaeSystem, Side, SpaceGrid, StateField,
};
use crate::plasma::PlasmaModel;

/// Band for `sigma_min(M) / sigma_min(2M)` that counts as stable.
pub const RATIO_BAND: (f64, f64) = (0.8, 1.25);
/// `A` is regular when `sigma_min(A) > REGULAR_TOL * ||A||`.
pub const REGULAR_TOL: f64 = 1e-10;

/// How many times each equation is differentiated in time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivativeArraySpec {
    order: usize,
    row_plan: Vec<usize>,
}

impl DerivativeArraySpec {
    pub fn new(order: usize, row_plan: Vec<usize>) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::Input(format!("derivative array order must be 1 or 2, got {order}")));
        }
        if let Some(p) = row_plan.iter().find(|p| **p > order) {
            return Err(Error::Input(format!("row plan entry {p} exceeds order {order}")));
        }
        Ok(Self { order, row_plan })
    }

    /// Differentiate every equation whose row of `A` vanishes once.
    pub fn algebraic_rows(system: &PdaeSystem) -> Self {
        let a = system.a();
        let plan = (0..system.n())
            .map(|i| usize::from(a.row(i).iter().all(|v| *v == 0.0)))
            .collect();
        Self { order: 1, row_plan: plan }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row_plan(&self) -> &[usize] {
        &self.row_plan
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Index(u8),
    Undetermined,
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Verdict::Index(k) => s.serialize_u8(*k),
            Verdict::Undetermined => s.serialize_str("undetermined"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexCertificate {
    pub verdict: Verdict,
    /// Smallest singular values: of `A` for index 0, else of the discrete
    /// operator at `M` and `2M`.
    pub sigma_min: Vec<f64>,
    pub ratio: Option<f64>,
    pub lemma2_det: Option<f64>,
}

impl IndexCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }
}

/// Interior samples of a frozen state plus its boundary values.
#[derive(Clone, Debug)]
pub struct Probe {
    pub interior: StateField,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Probe {
    pub fn sample(n: usize, grid: &SpaceGrid, profile: &dyn Fn(f64, &mut [f64])) -> Self {
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        profile(0.0, &mut left);
        profile(1.0, &mut right);
        Self {
            interior: StateField::sample(n, grid, profile),
            left,
            right,
        }
    }

    pub fn n(&self) -> usize {
        self.interior.n()
    }

    fn at(&self, p: usize) -> &[f64] {
        let nb = self.interior.blocks();
        if p == 0 {
            &self.left
        } else if p == nb + 1 {
            &self.right
        } else {
            self.interior.block(p - 1)
        }
    }

    /// Central difference `u_x` at the interior points.
    pub fn derivative(&self, h: f64) -> Vec<Vec<f64>> {
        (1..=self.interior.blocks())
            .map(|p| {
                self.at(p + 1)
                    .iter()
                    .zip(self.at(p - 1))
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect()
            })
            .collect()
    }
}

/// Boundary data with every Dirichlet value replaced by zero.
pub fn homogenized(bv: &BoundarySpec) -> BoundarySpec {
    let side = |s: Side| {
        (0..bv.n())
            .map(|i| {
                let e = bv.entry(i, s);
                match &e.kind {
                    BoundaryKind::Dirichlet(_) => BoundaryEntry::constant(0.0, e.class),
                    BoundaryKind::Free(_) => e.clone(),
                }
            })
            .collect()
    };
    BoundarySpec::new(side(Side::Left), side(Side::Right)).expect("sides have equal length")
}

/// `M[u] z = B z_xx + C[u] z_x + C1dir[u_x] z + D z` with central
/// differences and homogeneous boundary values.
pub fn frozen_operator(system: &PdaeSystem, probe: &Probe, grid: &SpaceGrid, bv: &BoundarySpec) -> Result<BlockTridiag> {
    check_len(system.n(), probe.n())?;
    let hom = homogenized(bv);
    let mut op = assemble_qh(system, &probe.interior, grid, &DiffScheme::uniform(Difference::Central), &hom, 0.0)?.matrix;
    for (j, ux) in probe.derivative(grid.h()).iter().enumerate() {
        *op.diag_mut(j) += system.eval_c1_dir(ux)?;
    }
    Ok(op)
}

fn is_regular(a: &DMatrix<f64>) -> (bool, f64) {
    let norm = spectral_norm(a);
    let smin = sigma_min(a);
    (norm > 0.0 && smin > REGULAR_TOL * norm, smin)
}

/// Columns of `u_t` after removing what the higher derivatives can absorb.
fn determining_part(system: &PdaeSystem, probe: &Probe, grid: &SpaceGrid, spec: &DerivativeArraySpec, bv: &BoundarySpec) -> Result<DMatrix<f64>> {
    let n = system.n();
    let nb = grid.interior();
    let dim = n * nb;
    let levels = spec.order + 1;
    let m_op = frozen_operator(system, probe, grid, bv)?.to_dense();
    let a = system.a();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for j in 0..nb {
        for (i, &plan) in spec.row_plan.iter().enumerate() {
            let r = j * n + i;
            for level in 0..=plan {
                // Level `level` of equation i: A_i z_{level+1} + M_i z_level.
                let mut row = vec![0.0; levels * dim];
                for l in 0..n {
                    row[level * dim + j * n + l] += a[(i, l)];
                }
                if level >= 1 {
                    for c in 0..dim {
                        row[(level - 1) * dim + c] += m_op[(r, c)];
                    }
                }
                if row.iter().any(|v| *v != 0.0) {
                    rows.push(row);
                }
            }
        }
    }
    if rows.len() < dim {
        return Err(Error::Structural(format!(
            "row plan {:?} leaves {} equations for {} unknowns of u_t",
            spec.row_plan,
            rows.len(),
            dim
        )));
    }
    let full = DMatrix::from_fn(rows.len(), levels * dim, |r, c| rows[r][c]);
    let first = full.columns(0, dim).into_owned();
    let rest = full.columns(dim, (levels - 1) * dim).into_owned();
    if rest.iter().all(|v| *v == 0.0) {
        return Ok(first);
    }
    let svd = rest.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, v| a.max(*v));
    let mut proj = first.clone();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-12 * smax {
            let uk = u.column(k);
            let coeff = uk.transpose() * &proj;
            proj -= uk * coeff;
        }
    }
    Ok(proj)
}

/// Time-index certificate for a frozen state `probe_profile`, using grids
/// `M` and `2M`.
pub fn time_index(
    system: &PdaeSystem,
    probe_profile: &dyn Fn(f64, &mut [f64]),
    grid: &SpaceGrid,
    spec: &DerivativeArraySpec,
    bv: &BoundarySpec,
) -> Result<IndexCertificate> {
    let n = system.n();
    check_len(n, bv.n())?;
    let (regular, smin_a) = is_regular(system.a());
    if regular {
        return Ok(IndexCertificate {
            verdict: Verdict::Index(0),
            sigma_min: vec![smin_a],
            ratio: None,
            lemma2_det: None,
        });
    }
    if spec.row_plan.len() != n {
        return Err(Error::Structural(format!(
            "row plan has {} entries for {n} equations",
            spec.row_plan.len()
        )));
    }
    let mut sigmas = Vec::with_capacity(2);
    let mut scales = Vec::with_capacity(2);
    for m in [grid.m(), 2 * grid.m()] {
        let g = SpaceGrid::new(m)?;
        let probe = Probe::sample(n, &g, probe_profile);
        let p = determining_part(system, &probe, &g, spec, bv)?;
        if p.nrows() < p.ncols() {
            return Err(Error::Structural("derivative array is not closed".into()));
        }
        let sv = p.svd(false, false).singular_values;
        sigmas.push(sv.iter().fold(f64::INFINITY, |a, v| a.min(*v)));
        scales.push(sv.iter().fold(0.0_f64, |a, v| a.max(*v)));
    }
    let ratio = sigmas[0] / sigmas[1];
    let bounded = sigmas.iter().zip(&scales).all(|(s, m)| *s > REGULAR_TOL * m);
    let stable = ratio.is_finite() && ratio >= RATIO_BAND.0 && ratio <= RATIO_BAND.1;
    let verdict = if bounded && stable {
        Verdict::Index(spec.order as u8)
    } else {
        Verdict::Undetermined
    };
    Ok(IndexCertificate {
        verdict,
        sigma_min: sigmas,
        ratio: Some(ratio),
        lemma2_det: None,
    })
}

/// Matrix-free plasma operator
///
/// ```text
/// row 1: z1
/// row 2: z2
/// row 3: -z3_x + u4_x z3 + u3 z4_x
/// row 4: z1 - z3 + z4_xx
/// ```
///
/// with central differences and `z = 0` at both ends.
pub fn plasma_p_apply(probe: &Probe, grid: &SpaceGrid, z: &StateField) -> Result<StateField> {
    check_len(4, probe.n())?;
    check_len(4, z.n())?;
    check_len(grid.interior(), z.blocks())?;
    check_len(grid.interior(), probe.interior.blocks())?;
    let h = grid.h();
    let nb = z.blocks();
    let zc = |p: isize, i: usize| -> f64 {
        if p < 1 || p as usize > nb {
            0.0
        } else {
            z.block(p as usize - 1)[i]
        }
    };
    let ux = probe.derivative(h);
    let mut out = StateField::zeros(4, grid);
    for j in 0..nb {
        let p = j as isize + 1;
        let u = probe.interior.block(j);
        let dz = |i: usize| (zc(p + 1, i) - zc(p - 1, i)) / (2.0 * h);
        let ddz = |i: usize| (zc(p + 1, i) - 2.0 * zc(p, i) + zc(p - 1, i)) / (h * h);
        let o = out.block_mut(j);
        o[0] = zc(p, 0);
        o[1] = zc(p, 1);
        o[2] = -dz(2) + ux[j][3] * zc(p, 2) + u[2] * dz(3);
        o[3] = zc(p, 0) - zc(p, 2) + ddz(3);
    }
    Ok(out)
}

/// Matrix form of [`plasma_p_apply`] through the general assembly.
pub fn plasma_p_matrix(system: &PdaeSystem, probe: &Probe, grid: &SpaceGrid) -> Result<BlockTridiag> {
    let spec = DerivativeArraySpec::algebraic_rows(system);
    let mut op = frozen_operator(system, probe, grid, &BoundarySpec::homogeneous(system.n()))?;
    let a = system.a();
    for j in 0..op.blocks() {
        for (i, &plan) in spec.row_plan().iter().enumerate() {
            if plan == 0 {
                op.lower_mut(j).row_mut(i).fill(0.0);
                op.upper_mut(j).row_mut(i).fill(0.0);
                op.diag_mut(j).row_mut(i).copy_from(&a.row(i));
            }
        }
    }
    Ok(op)
}

/// Fixed RK4 step for the kernel ODE.
pub const KERNEL_ODE_STEP: f64 = 1e-4;

/// `det [[phi1'(0), phi2'(0)], [int phi1, int phi2]]` for the fundamental
/// solutions of `-y'' + u4x y' + u3 y = 0` with `(y, y')(0) = (1, 0)` and
/// `(0, 1)`. Computed with step [`KERNEL_ODE_STEP`] and checked against half
/// that step.
pub fn kernel_determinant(u3: &dyn Fn(f64) -> f64, u4x: &dyn Fn(f64) -> f64) -> Result<f64> {
    let coarse = kernel_determinant_with_step(u3, u4x, KERNEL_ODE_STEP)?;
    let fine = kernel_determinant_with_step(u3, u4x, KERNEL_ODE_STEP / 2.0)?;
    if (coarse - fine).abs() > 1e-8 * fine.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "kernel ODE integration not converged: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

pub fn kernel_determinant_with_step(u3: &dyn Fn(f64) -> f64, u4x: &dyn Fn(f64) -> f64, step: f64) -> Result<f64> {
    if !(step > 0.0) || step < 1e-12 {
        return Err(Error::Numerical(format!("step {step} underflows")));
    }
    let steps = (1.0 / step).round() as usize;
    let h = 1.0 / steps as f64;
    // State (y, y', int y).
    let rhs = |x: f64, s: [f64; 3]| [s[1], u4x(x) * s[1] + u3(x) * s[0], s[0]];
    let solve = |y0: [f64; 3]| {
        let mut s = y0;
        for k in 0..steps {
            let x = k as f64 * h;
            let k1 = rhs(x, s);
            let add = |s: [f64; 3], k: [f64; 3], c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]];
            let k2 = rhs(x + h / 2.0, add(s, k1, h / 2.0));
            let k3 = rhs(x + h / 2.0, add(s, k2, h / 2.0));
            let k4 = rhs(x + h, add(s, k3, h));
            for i in 0..3 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s
    };
    let (d1, d2) = (0.0, 1.0);
    let int1 = solve([1.0, 0.0, 0.0])[2];
    let int2 = solve([0.0, 1.0, 0.0])[2];
    let det = d1 * int2 - d2 * int1;
    if !det.is_finite() {
        return Err(Error::Numerical("kernel ODE solution overflowed".into()));
    }
    Ok(det)
}

/// Certificate for the plasma model at its initial state, with the kernel
/// determinant of the continuous operator attached.
pub fn plasma_index_certificate(model: &PlasmaModel, grid: &SpaceGrid) -> Result<IndexCertificate> {
    let iv = &model.iv;
    let profile = |x: f64, out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = iv.eval(i, x);
        }
    };
    let spec = DerivativeArraySpec::algebraic_rows(&model.system);
    let mut cert = time_index(&model.system, &profile, grid, &spec, &model.bv)?;
    let k4 = model.k4;
    let u3 = |x: f64| iv.eval(2, x);
    let u4x = move |x: f64| -2.0 * PI * k4 * (2.0 * PI * x).sin();
    cert.lemma2_det = Some(kernel_determinant(&u3, &u4x)?);
    Ok(cert)
}

/// Rank normalization `S0 B S1^{-1} = diag(I_m, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BNormalization {
    pub s0: DMatrix<f64>,
    pub s1: DMatrix<f64>,
    pub rank: usize,
}

impl BNormalization {
    /// The spatial index is zero when `B` is regular.
    pub fn spatial_index_zero(&self) -> bool {
        self.rank == self.s0.nrows()
    }
}

pub fn normalize_b(b: &DMatrix<f64>) -> BNormalization {
    let n = b.nrows();
    let svd = b.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > 1e-10 * smax && smax > 0.0)
        .count();
    let mut s0 = DMatrix::zeros(n, n);
    let mut s1 = DMatrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        let scale = if r < rank { 1.0 / svd.singular_values[i] } else { 1.0 };
        s0.row_mut(r).copy_from(&(u.column(i).transpose() * scale));
        s1.row_mut(r).copy_from(&vt.row(i));
    }
    BNormalization { s0, s1, rank }
}
