//! Discrete norms, truncation errors, the `G = G0 + G1` splitting behind the
//! CFL-type stability condition, error-recursion monitoring, and grid
//! refinement studies.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretization::{
    assemble_g, assemble_qh, build_ctilde, laplacian_spectrum, DiffScheme, Difference,
};
use crate::error::{check_len, Error, Result};
use crate::format::fmt_float;
use crate::linalg::{factor_checked, sigma_min, spectral_norm, BandedLu, BlockTridiag};
use crate::model::{
    BoundaryEntry, BoundarySpec, DataClass, InitialSpec, PdaeSystem, SourceTerm, SpaceGrid,
    StateField, TimeGrid,
};
use crate::splitting::{integrate, SolverKind, Trajectory};

/// `||v|| = (h sum v_k^2)^(1/2)`.
pub fn discrete_l2_norm(v: &[f64], h: f64) -> f64 {
    (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// A smooth reference solution `v(t, x)` written into an `n`-slice.
pub type ExactFn = Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;

fn exact_component(v: &ExactFn, n: usize, i: usize, t: f64, x: f64) -> f64 {
    let mut buf = vec![0.0; n];
    v(t, x, &mut buf);
    buf[i]
}

/// Dirichlet data taken from an exact solution on both sides.
pub fn exact_boundary_spec(n: usize, v: &ExactFn) -> BoundarySpec {
    let side = |x: f64| {
        (0..n)
            .map(|i| {
                let v = v.clone();
                BoundaryEntry::dirichlet(move |t| exact_component(&v, n, i, t, x), DataClass::Arbitrary)
            })
            .collect()
    };
    BoundarySpec::new(side(0.0), side(1.0)).expect("both sides have n entries")
}

/// Initial data sampled from an exact solution at `t = 0`.
pub fn exact_initial_spec(n: usize, v: &ExactFn) -> InitialSpec {
    InitialSpec::new(
        (0..n)
            .map(|i| {
                let v = v.clone();
                let g: crate::model::ScalarFn = Arc::new(move |x| exact_component(&v, n, i, 0.0, x));
                (g, DataClass::Arbitrary)
            })
            .collect(),
    )
}

fn sample_exact(n: usize, v: &ExactFn, t: f64, grid: &SpaceGrid) -> StateField {
    StateField::sample(n, grid, |x, out| v(t, x, out))
}

/// `alpha^{m+1} = A (V^{m+1} - V^m)/tau + L_h[V^m] V^{m+1} - F^{m+1}` for the
/// exact solution with its own boundary values.
pub fn truncation_error(
    system: &PdaeSystem,
    v_exact: &ExactFn,
    f: &SourceTerm,
    grid: &SpaceGrid,
    tgrid: &TimeGrid,
    scheme: &DiffScheme,
    m: usize,
) -> Result<Vec<f64>> {
    let n = system.n();
    check_len(n, f.n())?;
    let tau = tgrid.tau();
    let (t0, t1) = (tgrid.t(m), tgrid.t(m + 1));
    let v0 = sample_exact(n, v_exact, t0, grid);
    let v1 = sample_exact(n, v_exact, t1, grid);
    let bv = exact_boundary_spec(n, v_exact);
    let l = assemble_qh(system, &v0, grid, scheme, &bv, t1)?;
    let mut alpha = l.apply(v1.values())?;
    let fs = f.sample(t1, grid);
    for j in 0..v0.blocks() {
        for i in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += system.a()[(i, l)] * (v1.block(j)[l] - v0.block(j)[l]) / tau;
            }
            alpha[j * n + i] += s - fs[j * n + i];
        }
    }
    Ok(alpha)
}

/// `sigma_min` of one frequency block `G_0k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct G0Block {
    pub k: usize,
    pub lambda: f64,
    pub sigma_min: f64,
}

/// Quantities of the CFL-type condition `delta0 = ||G0^{-1}|| ||G1|| < 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    #[serde(rename = "C0")]
    pub c0_choice: Vec<Vec<f64>>,
    pub tau: f64,
    pub h: f64,
    pub blocks: Vec<G0Block>,
    /// Frequencies whose `G_0k` is numerically singular.
    pub singular_k: Vec<usize>,
    /// `max_k 1 / sigma_min(G_0k)`.
    pub g0_inv_norm: f64,
    /// `max_k ||G_0k^{-1} A||`.
    pub g0_inv_a_norm: f64,
    /// `max_k ||G_0k^{-1} B||`.
    pub g0_inv_b_norm: f64,
    /// `(1/h) (max_k ||C[u_k] - C0|| + max_{k <= M-2} ||C[u_k]||)`.
    pub g1_bound: f64,
    pub delta0: f64,
    pub pass: bool,
    /// `||G0^{-1}|| / (1 - delta0)` when `delta0 < 1`.
    pub g_inv_bound: Option<f64>,
}

impl StabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `G_0k = A/tau - C0/h + D + lambda_k B`.
pub fn g0k(system: &PdaeSystem, c0: &DMatrix<f64>, tau: f64, h: f64, lambda: f64) -> DMatrix<f64> {
    system.a() / tau - c0 / h + system.d() + system.b() * lambda
}

/// Builds the report for the forward-differenced operator at state `u`.
///
/// With `P~ = -I + H`, `G = G0 + G1` where
/// `G0 = I (x) (A/tau - C0/h + D) + (1/h^2) P (x) B` is block-diagonalized
/// by the sine basis and `G1` collects the remaining convection terms.
pub fn stability_report(
    system: &PdaeSystem,
    c0: &DMatrix<f64>,
    u: &StateField,
    tau: f64,
    grid: &SpaceGrid,
) -> Result<StabilityReport> {
    let n = system.n();
    check_len(n, c0.nrows())?;
    check_len(n, c0.ncols())?;
    check_len(n, u.n())?;
    check_len(grid.interior(), u.blocks())?;
    if !(tau > 0.0) {
        return Err(Error::Input(format!("time step must be positive, got {tau}")));
    }
    let h = grid.h();
    let spec = laplacian_spectrum(grid.m())?;
    let mut blocks = Vec::with_capacity(grid.interior());
    let mut singular_k = Vec::new();
    let (mut inv, mut inv_a, mut inv_b) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (idx, &lambda) in spec.eigenvalues.iter().enumerate() {
        let g = g0k(system, c0, tau, h, lambda);
        let smin = sigma_min(&g);
        let k = idx + 1;
        let smax = spectral_norm(&g);
        if smin <= 1e-14 * smax.max(f64::MIN_POSITIVE) {
            singular_k.push(k);
        } else {
            inv = inv.max(1.0 / smin);
            if let Some(gi) = g.clone().try_inverse() {
                inv_a = inv_a.max(spectral_norm(&(&gi * system.a())));
                inv_b = inv_b.max(spectral_norm(&(&gi * system.b())));
            }
        }
        blocks.push(G0Block {
            k,
            lambda,
            sigma_min: smin,
        });
    }
    let nb = u.blocks();
    let (mut dev, mut full) = (0.0_f64, 0.0_f64);
    for j in 0..nb {
        let c = system.eval_c(u.block(j))?;
        dev = dev.max(spectral_norm(&(&c - c0)));
        if j + 1 < nb {
            full = full.max(spectral_norm(&c));
        }
    }
    let g1_bound = (dev + full) / h;
    let (delta0, pass, g_inv_bound) = if singular_k.is_empty() {
        let d = inv * g1_bound;
        (d, d < 1.0, (d < 1.0).then(|| inv / (1.0 - d)))
    } else {
        (f64::INFINITY, false, None)
    };
    Ok(StabilityReport {
        c0_choice: (0..n).map(|i| c0.row(i).iter().copied().collect()).collect(),
        tau,
        h,
        blocks,
        singular_k,
        g0_inv_norm: if inv == 0.0 { f64::INFINITY } else { inv },
        g0_inv_a_norm: inv_a,
        g0_inv_b_norm: inv_b,
        g1_bound,
        delta0,
        pass,
        g_inv_bound,
    })
}

/// Settings for [`monitor_error_recursion`].
#[derive(Clone, Copy, Debug)]
pub struct MonitorConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Number of end points `m` at which `||H^m ... H^0||` is estimated.
    pub checkpoints: usize,
    /// Length of the trailing windows `H^m ... H^{m-w+1}`.
    pub window: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            seed: 0x5eed,
            checkpoints: 8,
            window: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductNorm {
    pub from: usize,
    pub to: usize,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRecursionReport {
    /// `||H^m ... H^0||` at the checkpoints.
    pub cumulative: Vec<ProductNorm>,
    /// `||H^m ... H^{m-w+1}||` for consecutive windows.
    pub windows: Vec<ProductNorm>,
    /// `||R^{m+1}||` in the discrete L2 norm, `m = 0..steps-1`.
    pub residual_norms: Vec<f64>,
    pub sup_product: f64,
    pub sup_residual: f64,
}

/// One factor `H^m = G^{-m} (I (x) A/tau - C~[V^{m+1}])`.
struct Amplifier {
    lu: BandedLu,
    right: BlockTridiag,
}

impl Amplifier {
    fn apply(&self, x: &mut Vec<f64>) {
        let mut y = self.right.mul_vec(x).expect("dimensions fixed at construction");
        self.lu.solve_in_place(&mut y);
        *x = y;
    }

    fn apply_transpose(&self, x: &mut Vec<f64>) {
        self.lu.solve_transpose_in_place(x);
        let n = self.right.block_size();
        let mut y = vec![0.0; x.len()];
        for j in 0..self.right.blocks() {
            let b = self.right.diag(j);
            for c in 0..n {
                let mut s = 0.0;
                for r in 0..n {
                    s += b[(r, c)] * x[j * n + r];
                }
                y[j * n + c] = s;
            }
        }
        *x = y;
    }
}

fn product_norm(factors: &[Amplifier], dim: usize, iterations: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let normalize = |v: &mut Vec<f64>| {
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if s > 0.0 {
            v.iter_mut().for_each(|a| *a /= s);
        }
        s
    };
    normalize(&mut x);
    let forward = |x: &Vec<f64>| {
        let mut y = x.clone();
        for f in factors {
            f.apply(&mut y);
        }
        y
    };
    for _ in 0..iterations {
        let mut y = forward(&x);
        for f in factors.iter().rev() {
            f.apply_transpose(&mut y);
        }
        if normalize(&mut y) == 0.0 {
            return 0.0;
        }
        x = y;
    }
    forward(&x).iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Tracks `eta^{m+1} = H^m eta^m + R^{m+1}` between a reference trajectory
/// `exact` and a computed one. `H^m` uses `G^m` at the computed state and
/// `C~` at the reference state; `R^{m+1}` is what remains. All amplifiers
/// are kept in memory, so this is meant for moderate grids.
pub fn monitor_error_recursion(
    exact: &Trajectory,
    traj: &Trajectory,
    system: &PdaeSystem,
    bv: &BoundarySpec,
    config: &MonitorConfig,
) -> Result<ErrorRecursionReport> {
    if exact.grid != traj.grid || exact.tgrid != traj.tgrid || exact.states.len() != traj.states.len() {
        return Err(Error::Input("trajectories are on different grids".into()));
    }
    let grid = &traj.grid;
    let scheme = &traj.scheme;
    let tau = traj.tgrid.tau();
    let steps = traj.states.len() - 1;
    let h = grid.h();
    let a_tau = system.a() / tau;
    let mut factors = Vec::with_capacity(steps);
    let mut residual_norms = Vec::with_capacity(steps);
    for m in 0..steps {
        let t1 = traj.tgrid.t(m + 1);
        let u = &traj.states[m];
        let g = assemble_g(system, u, tau, grid, scheme, bv, t1).map_err(|e| e.at_step(m + 1))?;
        let lu = factor_checked(&g.matrix, "G").map_err(|e| e.at_step(m + 1))?;
        let mut right = build_ctilde(system, &exact.states[m + 1], grid, scheme, bv, t1, Some(u))?.scaled(-1.0);
        right.add_to_diagonal(&a_tau);
        let amp = Amplifier { lu, right };
        let eta = |k: usize| -> Vec<f64> {
            exact.states[k]
                .values()
                .iter()
                .zip(traj.states[k].values())
                .map(|(v, u)| v - u)
                .collect()
        };
        let mut pred = eta(m);
        amp.apply(&mut pred);
        let r: Vec<f64> = eta(m + 1).iter().zip(&pred).map(|(a, b)| a - b).collect();
        residual_norms.push(discrete_l2_norm(&r, h));
        factors.push(amp);
    }
    let dim = traj.states[0].values().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cumulative = Vec::new();
    if steps > 0 {
        let count = config.checkpoints.clamp(1, steps);
        let mut ends: Vec<usize> = (1..=count).map(|c| c * steps / count - 1).collect();
        ends.dedup();
        for m in ends {
            cumulative.push(ProductNorm {
                from: 0,
                to: m,
                norm: product_norm(&factors[..=m], dim, config.iterations, &mut rng),
            });
        }
    }
    let mut windows = Vec::new();
    let w = config.window.max(1);
    let mut end = steps;
    while end >= w {
        windows.push(ProductNorm {
            from: end - w,
            to: end - 1,
            norm: product_norm(&factors[end - w..end], dim, config.iterations, &mut rng),
        });
        end -= w;
    }
    let sup_product = cumulative
        .iter()
        .chain(&windows)
        .fold(0.0_f64, |a, p| a.max(p.norm));
    let sup_residual = residual_norms.iter().fold(0.0_f64, |a, r| a.max(*r));
    Ok(ErrorRecursionReport {
        cumulative,
        windows,
        residual_norms,
        sup_product,
        sup_residual,
    })
}

/// Samples an exact solution on the time and space grids of `like`.
pub fn exact_trajectory(like: &Trajectory, n: usize, v: &ExactFn) -> Trajectory {
    let grid = like.grid;
    let states: Vec<StateField> = (0..like.states.len())
        .map(|m| sample_exact(n, v, like.tgrid.t(m), &grid).with_time_index(m))
        .collect();
    let edge = |x: f64| -> Vec<Vec<f64>> {
        (0..states.len())
            .map(|m| {
                let mut b = vec![0.0; n];
                v(like.tgrid.t(m), x, &mut b);
                b
            })
            .collect()
    };
    Trajectory {
        grid,
        tgrid: like.tgrid,
        scheme: like.scheme.clone(),
        solver: like.solver,
        left: edge(0.0),
        right: edge(1.0),
        states,
        elapsed: std::time::Duration::ZERO,
    }
}

/// Problem run at every level of a refinement study with `tau = K0 h`.
#[derive(Clone, Debug)]
pub struct RefinementProblem {
    pub system: PdaeSystem,
    pub iv: InitialSpec,
    pub bv: BoundarySpec,
    pub f: SourceTerm,
    pub k0: f64,
    pub t_end: f64,
    pub scheme: DiffScheme,
    pub solver: SolverKind,
    /// Components whose level differences `e_i` are reported.
    pub tracked: Vec<usize>,
    /// Component entering the indicator `(tau/h) max_k |u_k|` at `t_end`.
    pub cfl_component: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "CFL2")]
    pub cfl2: Option<f64>,
    /// `||U_h - U_{h/2}||` per tracked component, at `t_end`.
    pub e: Vec<f64>,
    /// `log2(e(h) / e(h/2))`, absent on the last row.
    pub order: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub tracked: Vec<usize>,
    pub rows: Vec<RefinementRow>,
    /// Set when some level failed; the rows before it are still valid.
    pub failure: Option<String>,
}

impl RefinementStudy {
    /// Header `N,CFL2,e1,e2,order1,order2` (one `e`/`order` column per
    /// tracked component).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,CFL2");
        for i in &self.tracked {
            let _ = write!(s, ",e{}", i + 1);
        }
        for i in &self.tracked {
            let _ = write!(s, ",order{}", i + 1);
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for r in &self.rows {
            let _ = write!(s, "{},{}", r.n, opt(r.cfl2));
            for e in &r.e {
                let _ = write!(s, ",{}", fmt_float(*e));
            }
            for o in &r.order {
                let _ = write!(s, ",{}", opt(*o));
            }
            s.push('\n');
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "# {f}");
        }
        s
    }
}

/// Checks that `levels` has at least two entries and doubles each time.
pub fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::Config("a refinement study needs at least two levels".into()));
    }
    if levels[0] < 2 {
        return Err(Error::Config("grid levels must be at least 2".into()));
    }
    if levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::Config(format!("levels must double: {levels:?}")));
    }
    Ok(())
}

/// Final state of one level.
fn run_level(p: &RefinementProblem, m: usize) -> Result<(SpaceGrid, StateField)> {
    let grid = SpaceGrid::new(m)?;
    let tgrid = TimeGrid::new(p.k0 * grid.h(), p.t_end)?;
    let traj = integrate(&p.system, &p.iv, &p.bv, &p.f, &grid, &tgrid, &p.scheme, p.solver)?;
    let last = traj.states.into_iter().last().expect("trajectory holds the initial state");
    Ok((grid, last))
}

/// Integrates every level plus one extra doubling so each listed level has
/// a row; levels run on separate threads.
pub fn refinement_study(p: &RefinementProblem, levels: &[usize]) -> Result<RefinementStudy> {
    check_levels(levels)?;
    let n = p.system.n();
    if let Some(&bad) = p.tracked.iter().chain(p.cfl_component.iter()).find(|&&i| i >= n) {
        return Err(Error::Config(format!("component {} out of range", bad + 1)));
    }
    let mut all: Vec<usize> = levels.to_vec();
    all.push(2 * levels[levels.len() - 1]);
    let results: Vec<Result<(SpaceGrid, StateField)>> = std::thread::scope(|s| {
        let handles: Vec<_> = all.iter().map(|&m| s.spawn(move || run_level(p, m))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("level thread panicked".into()))))
            .collect()
    });

    let mut rows: Vec<RefinementRow> = Vec::new();
    let mut failure = None;
    for (idx, &m) in levels.iter().enumerate() {
        let (coarse, fine) = match (&results[idx], &results[idx + 1]) {
            (Ok(c), Ok(f)) => (c, f),
            (Err(e), _) => {
                failure = Some(format!("N={m}: {e}"));
                break;
            }
            (_, Err(e)) => {
                failure = Some(format!("N={}: {e}", all[idx + 1]));
                break;
            }
        };
        let (grid, uc) = coarse;
        let uf = &fine.1;
        let h = grid.h();
        let e: Vec<f64> = p
            .tracked
            .iter()
            .map(|&i| {
                let d: Vec<f64> = (0..uc.blocks())
                    .map(|j| uc.block(j)[i] - uf.block(2 * j + 1)[i])
                    .collect();
                discrete_l2_norm(&d, h)
            })
            .collect();
        let cfl2 = p.cfl_component.map(|c| {
            let umax = uc.component(c).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            p.k0 * umax
        });
        rows.push(RefinementRow {
            n: m,
            cfl2,
            e,
            order: vec![None; p.tracked.len()],
        });
    }
    for r in 1..rows.len() {
        let (prev, cur) = rows.split_at_mut(r);
        let prev = &mut prev[r - 1];
        for (o, (a, b)) in prev.order.iter_mut().zip(prev.e.iter().zip(&cur[0].e)) {
            *o = (*a > 0.0 && *b > 0.0).then(|| (a / b).log2());
        }
    }
    Ok(RefinementStudy {
        tracked: p.tracked.clone(),
        rows,
        failure,
    })
}

/// Dense `||G^{-1}||` of the forward-differenced operator with homogeneous
/// boundary values; intended for small grids.
pub fn dense_g_inverse_norm(system: &PdaeSystem, u: &StateField, tau: f64, grid: &SpaceGrid) -> Result<f64> {
    let g = assemble_g(
        system,
        u,
        tau,
        grid,
        &DiffScheme::uniform(Difference::Forward),
        &BoundarySpec::homogeneous(system.n()),
        0.0,
    )?
    .matrix
    .to_dense();
    let smin = sigma_min(&g);
    if smin == 0.0 {
        return Err(Error::Singular {
            context: "G".into(),
            condition: f64::INFINITY,
        });
    }
    Ok(1.0 / smin)
}

/// Observed order `log2(e(h)/e(h/2))` of consecutive errors.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Final-time boundary-inclusive component range, used in run summaries.
pub fn component_range(traj: &Trajectory, i: usize) -> (f64, f64) {
    let p = traj.profile(traj.states.len() - 1, i);
    p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Interior minimum of component `i` at the final time.
pub fn interior_min(traj: &Trajectory, i: usize) -> f64 {
    traj.last().component(i).iter().fold(f64::INFINITY, |a, v| a.min(*v))
}
