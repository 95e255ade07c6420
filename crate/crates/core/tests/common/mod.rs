#![allow(dead_code)]

use fracstep_core::{ConvectionTensor, Difference, PdaeSystem, SpaceGrid, StateField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_system(rng: &mut ChaCha8Rng, n: usize) -> PdaeSystem {
    let mut c1 = ConvectionTensor::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                c1.set(i, j, k, rng.random_range(-1.0..1.0));
            }
        }
    }
    PdaeSystem::new(
        random_matrix(rng, n),
        random_matrix(rng, n),
        random_matrix(rng, n),
        random_matrix(rng, n),
        c1,
    )
    .unwrap()
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize, grid: &SpaceGrid) -> StateField {
    let vals = (0..n * grid.interior()).map(|_| rng.random_range(-1.0..1.0)).collect();
    StateField::from_values(n, grid, vals).unwrap()
}

/// Rows `1..M-1`, columns `0..=M` of the second-difference stencil.
pub fn second_full(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m - 1, m + 1, |r, c| {
        let k = r + 1;
        if c == k {
            -2.0
        } else if c + 1 == k || c == k + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// Rows `1..M-1`, columns `0..=M` of `q h` times the first difference.
pub fn first_full(m: usize, d: Difference) -> (DMatrix<f64>, f64) {
    let p = DMatrix::from_fn(m - 1, m + 1, |r, c| {
        let k = r + 1;
        match d {
            Difference::Central if c == k + 1 => 1.0,
            Difference::Central if c + 1 == k => -1.0,
            Difference::Forward if c == k + 1 => 1.0,
            Difference::Forward if c == k => -1.0,
            Difference::Backward if c == k => 1.0,
            Difference::Backward if c + 1 == k => -1.0,
            _ => 0.0,
        }
    });
    let q = if d == Difference::Central { 2.0 } else { 1.0 };
    (p, q)
}

/// Dense operator from the definition over all `M + 1` points, block rows
/// at the interior points: `(1/h^2) P (x) B + (1/qh) P~ (x) C[U_j] + D`.
pub fn dense_full(system: &PdaeSystem, u: &StateField, grid: &SpaceGrid, d: Difference) -> DMatrix<f64> {
    let n = system.n();
    let m = grid.m();
    let h = grid.h();
    let p = second_full(m);
    let (pt, q) = first_full(m, d);
    let mut out = DMatrix::zeros(n * (m - 1), n * (m + 1));
    for j in 0..m - 1 {
        let c = system.eval_c(u.block(j)).unwrap();
        for k in 0..=m {
            let mut blk = system.b() * (p[(j, k)] / (h * h)) + &c * (pt[(j, k)] / (q * h));
            if k == j + 1 {
                blk += system.d();
            }
            out.view_mut((j * n, k * n), (n, n)).copy_from(&blk);
        }
    }
    out
}

/// Splits the full operator into the interior matrix and the vector it
/// produces from boundary values `left`, `right`.
pub fn dense_qh(
    system: &PdaeSystem,
    u: &StateField,
    grid: &SpaceGrid,
    d: Difference,
    left: &[f64],
    right: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let n = system.n();
    let m = grid.m();
    let full = dense_full(system, u, grid, d);
    let inner = full.columns(n, n * (m - 1)).into_owned();
    let b = full.columns(0, n) * DVector::from_column_slice(left)
        + full.columns(n * m, n) * DVector::from_column_slice(right);
    (inner, b)
}

/// First difference of `v` (boundary values included) at the interior points.
pub fn dense_delta(v: &StateField, grid: &SpaceGrid, d: Difference, left: &[f64], right: &[f64]) -> Vec<Vec<f64>> {
    let n = v.n();
    let m = grid.m();
    let (pt, q) = first_full(m, d);
    let at = |k: usize| -> Vec<f64> {
        if k == 0 {
            left.to_vec()
        } else if k == m {
            right.to_vec()
        } else {
            v.block(k - 1).to_vec()
        }
    };
    (0..m - 1)
        .map(|j| {
            let mut out = vec![0.0; n];
            for k in 0..=m {
                let w = pt[(j, k)] / (q * grid.h());
                if w != 0.0 {
                    for (o, x) in out.iter_mut().zip(at(k)) {
                        *o += w * x;
                    }
                }
            }
            out
        })
        .collect()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
}

/// `u1_t - 0.1 u1_xx + u1 u1_x + u2 = f1`, `-u2_xx + u2 - u1 = f2` with
/// exact solution `v1 = exp(-t) sin(pi x)`, `v2 = cos(t) x (1 - x)`.
pub fn manufactured() -> (PdaeSystem, fracstep_core::stability::ExactFn, fracstep_core::SourceTerm) {
    use std::f64::consts::PI;
    let mut c1 = ConvectionTensor::zeros(2);
    c1.set(0, 0, 0, 1.0);
    let sys = PdaeSystem::new(
        DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]),
        DMatrix::from_diagonal(&nalgebra::dvector![-0.1, -1.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.0]),
        DMatrix::zeros(2, 2),
        c1,
    )
    .unwrap();
    let exact: fracstep_core::stability::ExactFn = std::sync::Arc::new(|t: f64, x: f64, out: &mut [f64]| {
        out[0] = (-t).exp() * (PI * x).sin();
        out[1] = t.cos() * x * (1.0 - x);
    });
    let f = fracstep_core::SourceTerm::new(2, |t, x, out| {
        let e = (-t).exp();
        let (s, c) = ((PI * x).sin(), (PI * x).cos());
        let v1 = e * s;
        let v2 = t.cos() * x * (1.0 - x);
        out[0] = -v1 + 0.1 * PI * PI * v1 + v1 * PI * e * c + v2;
        out[1] = 2.0 * t.cos() + v2 - v1;
    });
    (sys, exact, f)
}

/// Plasma system with a smooth exact solution and the source that makes it
/// exact:
/// `v1 = 1 + 0.5 e^{-t} sin(pi x)`, `v2 = 0.3 sin(t + x)`,
/// `v3 = 1 + 0.2 cos(t) x^2`, `v4 = 0.1 e^{-t} cos(pi x)`.
pub fn manufactured_plasma() -> (PdaeSystem, fracstep_core::stability::ExactFn, fracstep_core::SourceTerm) {
    use fracstep_core::plasma::{build_plasma_system, PlasmaParams};
    use std::f64::consts::PI;
    let p = PlasmaParams::default();
    let sys = build_plasma_system(&p).unwrap();
    let exact: fracstep_core::stability::ExactFn = std::sync::Arc::new(|t: f64, x: f64, o: &mut [f64]| {
        let e = (-t).exp();
        o[0] = 1.0 + 0.5 * e * (PI * x).sin();
        o[1] = 0.3 * (t + x).sin();
        o[2] = 1.0 + 0.2 * t.cos() * x * x;
        o[3] = 0.1 * e * (PI * x).cos();
    });
    let (b0, d1) = (p.b0, p.d1);
    let f = fracstep_core::SourceTerm::new(4, move |t, x, o| {
        let e = (-t).exp();
        let (s, c) = ((PI * x).sin(), (PI * x).cos());
        let v1 = 1.0 + 0.5 * e * s;
        let v1t = -0.5 * e * s;
        let v1x = 0.5 * PI * e * c;
        let v1xx = -0.5 * PI * PI * e * s;
        let v2 = 0.3 * (t + x).sin();
        let v2t = 0.3 * (t + x).cos();
        let v2x = v2t;
        let v3 = 1.0 + 0.2 * t.cos() * x * x;
        let v3x = 0.4 * t.cos() * x;
        let v4x = -0.1 * PI * e * s;
        let v4xx = -0.1 * PI * PI * e * c;
        o[0] = v1t - b0 * v1xx + v2 * v1x + v1 * v2x;
        o[1] = v2t + v2 * v2x + d1 * v4x;
        o[2] = -v3x + v3 * v4x;
        o[3] = v4xx + v1 - v3;
    });
    (sys, exact, f)
}

/// Discrete L2 distance between a field and an exact solution at time `t`.
pub fn exact_error(u: &StateField, exact: &fracstep_core::stability::ExactFn, t: f64, grid: &SpaceGrid) -> f64 {
    let want = StateField::sample(u.n(), grid, |x, o| exact(t, x, o));
    let d: Vec<f64> = u.values().iter().zip(want.values()).map(|(a, b)| a - b).collect();
    fracstep_core::stability::discrete_l2_norm(&d, grid.h())
}
