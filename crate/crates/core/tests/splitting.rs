mod common;

use std::f64::consts::PI;

use fracstep_core::linalg::kron;
use fracstep_core::plasma::{default_plasma_scheme, PlasmaModel, PlasmaParams};
use fracstep_core::splitting::{factorization_residual, integrate, partition_l, SolverKind, Stepper};
use fracstep_core::stability::{discrete_l2_norm, exact_boundary_spec, exact_initial_spec, log_slope};
use fracstep_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn heat() -> PdaeSystem {
    PdaeSystem::new(scalar(1.0), scalar(-1.0), scalar(0.0), scalar(0.0), ConvectionTensor::zeros(1)).unwrap()
}

fn central() -> DiffScheme {
    DiffScheme::uniform(Difference::Central)
}

/// Random system with `A = diag(I_{n1}, 0)`.
fn normal_form_system(rng: &mut rand_chacha::ChaCha8Rng, n: usize, n1: usize) -> PdaeSystem {
    let s = common::random_system(rng, n);
    let a = DMatrix::from_fn(n, n, |i, j| if i == j && i < n1 { 1.0 } else { 0.0 });
    PdaeSystem::new(a, s.b().clone(), s.d().clone(), s.c0().clone(), s.c1().clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partition_rows_sum_to_operator(n in 1usize..=4, n1s in 0usize..=4, m in 2usize..=7, seed in any::<u64>(), tau in 1e-3..1.0f64) {
        let n1 = n1s.min(n);
        prop_assume!(n1 >= 1);
        let mut rng = common::rng(seed);
        let sys = normal_form_system(&mut rng, n, n1);
        let grid = SpaceGrid::new(m).unwrap();
        let u = common::random_field(&mut rng, n, &grid);
        let bv = BoundarySpec::constant(&vec![0.25; n]);
        let part = partition_l(&sys, &u, &grid, &central(), &bv, 0.0).unwrap();
        let l = assemble_qh(&sys, &u, &grid, &central(), &bv, 0.0).unwrap();
        let (l1, l2) = (part.l1.matrix.to_dense(), part.l2.matrix.to_dense());
        prop_assert_eq!(&l1 + &l2, l.matrix.to_dense());
        let ia = kron(&DMatrix::identity(m - 1, m - 1), sys.a());
        prop_assert_eq!(&ia * &l2, l2.clone());
        prop_assert!((&ia * &l1).amax() == 0.0);
        for (r, (b1, b2)) in part.l1.boundary.iter().zip(&part.l2.boundary).enumerate() {
            prop_assert_eq!(b1 + b2, l.boundary[r]);
        }

        // Defect oracle: tau^2 L1 L2 computed directly.
        let defect = factorization_residual(&part, sys.a(), tau).unwrap();
        let direct = (&ia + &l1 * tau) * (DMatrix::identity(ia.nrows(), ia.nrows()) + &l2 * tau) - (&ia + (&l1 + &l2) * tau);
        let want = fracstep_core::linalg::spectral_norm(&(&l1 * &l2 * (tau * tau)));
        prop_assert!((defect.defect - want).abs() <= 1e-10 * defect.scale.max(1.0));
        prop_assert!((defect.second_order - want).abs() <= 1e-10 * want.max(1.0));
        prop_assert!(defect.identity_residual <= 1e-10 * defect.scale.max(1.0));
        prop_assert!(((direct - &l1 * &l2 * (tau * tau)).amax()) <= 1e-9 * defect.scale.max(1.0));
    }
}

#[test]
fn split_matches_full_when_differential_rows_carry_no_operator() {
    // u1_t = f1, -u2_xx + u2 - u1 = 0: L2 = 0, so the factorization is exact.
    let sys = PdaeSystem::new(
        DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]),
        DMatrix::from_diagonal(&nalgebra::dvector![0.0, -1.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 1.0]),
        DMatrix::zeros(2, 2),
        ConvectionTensor::zeros(2),
    )
    .unwrap();
    let grid = SpaceGrid::new(16).unwrap();
    let bv = BoundarySpec::constant(&[0.0, 0.0]);
    let part = partition_l(&sys, &StateField::zeros(2, &grid), &grid, &central(), &bv, 0.0).unwrap();
    assert_eq!(part.l2.matrix.max_abs(), 0.0);
    let iv = InitialSpec::new(vec![
        (std::sync::Arc::new(|x: f64| (PI * x).sin()), DataClass::Arbitrary),
        (std::sync::Arc::new(|_| 0.0), DataClass::Arbitrary),
    ]);
    let f = SourceTerm::new(2, |t, x, out| {
        out[0] = t * x * (1.0 - x);
        out[1] = 0.0;
    });
    let tg = TimeGrid::new(0.05, 0.5).unwrap();
    let full = integrate(&sys, &iv, &bv, &f, &grid, &tg, &central(), SolverKind::Full).unwrap();
    let split = integrate(&sys, &iv, &bv, &f, &grid, &tg, &central(), SolverKind::Split).unwrap();
    for (a, b) in full.states.iter().zip(&split.states) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn split_equals_full_for_identity_mass_matrix() {
    let grid = SpaceGrid::new(20).unwrap();
    let bv = BoundarySpec::homogeneous(1);
    let (sys, scheme) = (heat(), central());
    let st = Stepper::new(&sys, &grid, &scheme, &bv, 0.01).unwrap();
    let u = StateField::sample(1, &grid, |x, o| o[0] = (PI * x).sin());
    let f = vec![0.0; grid.interior()];
    let a = st.step_full(&u, &f, 0.01).unwrap();
    let b = st.step_split(&u, &f, 0.01).unwrap();
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-13));
}

#[test]
fn heat_equation_against_exact_solution() {
    let sys = heat();
    let exact: fracstep_core::stability::ExactFn =
        std::sync::Arc::new(|t, x, o: &mut [f64]| o[0] = (PI * x).sin() * (-PI * PI * t).exp());
    let iv = exact_initial_spec(1, &exact);
    let bv = BoundarySpec::homogeneous(1);
    let mut errs = Vec::new();
    let taus = [0.01, 0.005, 0.0025];
    for tau in taus {
        let grid = SpaceGrid::new(200).unwrap();
        let tg = TimeGrid::new(tau, 0.1).unwrap();
        let tr = integrate(&sys, &iv, &bv, &SourceTerm::zero(1), &grid, &tg, &central(), SolverKind::Split).unwrap();
        let want = StateField::sample(1, &grid, |x, o| exact(0.1, x, o));
        let d: Vec<f64> = tr.last().values().iter().zip(want.values()).map(|(a, b)| a - b).collect();
        errs.push(discrete_l2_norm(&d, grid.h()));
    }
    assert!(errs[0] < 3e-2, "{errs:?}");
    let slope = log_slope(&taus, &errs);
    assert!((0.8..1.2).contains(&slope), "slope {slope}, {errs:?}");
}

fn one_step_difference(model: &PlasmaModel, m: usize, tau: f64) -> f64 {
    let grid = SpaceGrid::new(m).unwrap();
    let scheme = default_plasma_scheme();
    let st = Stepper::new(&model.system, &grid, &scheme, &model.bv, tau).unwrap();
    let u = model.iv.sample(&grid);
    let f = vec![0.0; u.values().len()];
    let a = st.step_full(&u, &f, tau).unwrap();
    let b = st.step_split(&u, &f, tau).unwrap();
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    discrete_l2_norm(&d, grid.h())
}

#[test]
fn split_and_full_steps_differ_at_second_order() {
    let model = PlasmaModel::new(PlasmaParams::default()).unwrap();
    let taus: Vec<f64> = (0..6).map(|k| 0.1 / 2f64.powi(k)).collect();
    let diffs: Vec<f64> = taus.iter().map(|&t| one_step_difference(&model, 40, t)).collect();
    let slope = log_slope(&taus, &diffs);
    assert!((1.8..2.2).contains(&slope), "slope {slope}: {diffs:?}");
}

#[test]
fn full_scheme_enforces_discrete_constraints() {
    let model = PlasmaModel::new(PlasmaParams::default()).unwrap();
    let grid = SpaceGrid::new(40).unwrap();
    let scheme = default_plasma_scheme();
    let tau = model.tau(40);
    let st = Stepper::new(&model.system, &grid, &scheme, &model.bv, tau).unwrap();
    let u = model.iv.sample(&grid);
    let f = vec![0.0; u.values().len()];
    let residual = |next: &StateField| {
        let q = assemble_qh(&model.system, &u, &grid, &scheme, &model.bv, tau).unwrap();
        let r = q.apply(next.values()).unwrap();
        (0..grid.interior()).flat_map(|j| [r[j * 4 + 2], r[j * 4 + 3]]).fold(0.0_f64, |a, v| a.max(v.abs()))
    };
    let full = st.step_full(&u, &f, tau).unwrap();
    assert!(residual(&full) < 1e-10, "{}", residual(&full));
    // The split step meets them up to O(tau^2).
    let r1 = residual(&st.step_split(&u, &f, tau).unwrap());
    let st2 = Stepper::new(&model.system, &grid, &scheme, &model.bv, tau / 2.0).unwrap();
    let q = assemble_qh(&model.system, &u, &grid, &scheme, &model.bv, tau / 2.0).unwrap();
    let half = st2.step_split(&u, &f, tau / 2.0).unwrap();
    let r = q.apply(half.values()).unwrap();
    let r2 = (0..grid.interior()).flat_map(|j| [r[j * 4 + 2], r[j * 4 + 3]]).fold(0.0_f64, |a, v| a.max(v.abs()));
    assert!(r1 > 1e-12 && r1 / r2 > 3.0, "{r1} {r2}");
}

#[test]
fn dirichlet_data_preserved_along_trajectory() {
    let (sys, exact, f) = common::manufactured();
    let grid = SpaceGrid::new(20).unwrap();
    let tg = TimeGrid::new(0.05, 0.5).unwrap();
    for solver in [SolverKind::Full, SolverKind::Split] {
        let tr = integrate(&sys, &exact_initial_spec(2, &exact), &exact_boundary_spec(2, &exact), &f, &grid, &tg, &central(), solver).unwrap();
        assert_eq!(tr.states.len(), 11);
        for m in 0..tr.states.len() {
            let (mut l, mut r) = (vec![0.0; 2], vec![0.0; 2]);
            exact(tr.time(m), 0.0, &mut l);
            exact(tr.time(m), 1.0, &mut r);
            assert_eq!(tr.left[m], l);
            assert_eq!(tr.right[m], r);
            assert_eq!(tr.profile(m, 1)[0], l[1]);
        }
    }
}

#[test]
fn manufactured_solution_first_order_in_time() {
    let (sys, exact, f) = common::manufactured();
    let grid = SpaceGrid::new(200).unwrap();
    let taus = [0.1, 0.05, 0.025, 0.0125];
    for solver in [SolverKind::Full, SolverKind::Split] {
        let errs: Vec<f64> = taus
            .iter()
            .map(|&tau| {
                let tg = TimeGrid::new(tau, 1.0).unwrap();
                let tr = integrate(&sys, &exact_initial_spec(2, &exact), &exact_boundary_spec(2, &exact), &f, &grid, &tg, &central(), solver).unwrap();
                let want = StateField::sample(2, &grid, |x, o| exact(1.0, x, o));
                let d: Vec<f64> = tr.last().values().iter().zip(want.values()).map(|(a, b)| a - b).collect();
                discrete_l2_norm(&d, grid.h())
            })
            .collect();
        for o in fracstep_core::stability::observed_orders(&errs) {
            assert!((0.8..=1.2).contains(&o), "{solver:?}: {errs:?}");
        }
    }
}

#[test]
fn zero_data_give_zero_solution() {
    let (sys, _, _) = common::manufactured();
    let grid = SpaceGrid::new(12).unwrap();
    let tg = TimeGrid::new(0.1, 1.0).unwrap();
    for solver in [SolverKind::Full, SolverKind::Split] {
        let tr = integrate(&sys, &InitialSpec::constant(&[0.0, 0.0]), &BoundarySpec::homogeneous(2), &SourceTerm::zero(2), &grid, &tg, &central(), solver).unwrap();
        assert!(tr.states.iter().all(|s| s.values().iter().all(|v| *v == 0.0)));
    }
}

#[test]
fn spatially_constant_ode_solution_is_exact() {
    // u_t - u_xx = 1 with u(t, 0) = u(t, 1) = t: U^m = m tau.
    let grid = SpaceGrid::new(10).unwrap();
    let tg = TimeGrid::new(0.125, 1.0).unwrap();
    let bv = BoundarySpec::new(
        vec![BoundaryEntry::dirichlet(|t| t, DataClass::Arbitrary)],
        vec![BoundaryEntry::dirichlet(|t| t, DataClass::Arbitrary)],
    )
    .unwrap();
    let f = SourceTerm::new(1, |_, _, o| o[0] = 1.0);
    for solver in [SolverKind::Full, SolverKind::Split] {
        let tr = integrate(&heat(), &InitialSpec::constant(&[0.0]), &bv, &f, &grid, &tg, &central(), solver).unwrap();
        for (m, s) in tr.states.iter().enumerate() {
            assert_eq!(s.time_index(), m);
            assert!(s.values().iter().all(|v| (v - m as f64 * 0.125).abs() < 1e-13));
        }
    }
}

#[test]
fn integrate_rejects_bad_preconditions() {
    let grid = SpaceGrid::new(8).unwrap();
    let tg = TimeGrid::new(0.1, 0.3).unwrap();
    let err = integrate(&heat(), &InitialSpec::constant(&[1.0]), &BoundarySpec::homogeneous(1), &SourceTerm::zero(1), &grid, &tg, &central(), SolverKind::Full).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));

    let swapped = PdaeSystem::new(
        DMatrix::from_diagonal(&nalgebra::dvector![0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 2),
        DMatrix::zeros(2, 2),
        ConvectionTensor::zeros(2),
    )
    .unwrap();
    let zero2 = (InitialSpec::constant(&[0.0, 0.0]), BoundarySpec::homogeneous(2), SourceTerm::zero(2));
    let err = integrate(&swapped, &zero2.0, &zero2.1, &zero2.2, &grid, &tg, &central(), SolverKind::Split).unwrap_err();
    assert!(matches!(err, Error::Precondition(ref m) if m.contains("[2, 1]")), "{err}");
    assert!(integrate(&swapped, &zero2.0, &zero2.1, &zero2.2, &grid, &tg, &central(), SolverKind::Full).is_ok());
    assert!(Stepper::new(&heat(), &grid, &central(), &BoundarySpec::homogeneous(1), 0.0).is_err());
}

#[test]
fn step_failures_carry_the_time_index() {
    // A = 0 and C = u: G = Q_h[U^m] vanishes with U.
    let mut c1 = ConvectionTensor::zeros(1);
    c1.set(0, 0, 0, 1.0);
    let sys = PdaeSystem::new_unvalidated(scalar(0.0), scalar(0.0), scalar(0.0), scalar(0.0), c1).unwrap();
    let grid = SpaceGrid::new(6).unwrap();
    let tg = TimeGrid::new(0.1, 0.5).unwrap();
    let err = integrate(&sys, &InitialSpec::constant(&[0.0]), &BoundarySpec::homogeneous(1), &SourceTerm::zero(1), &grid, &tg, &central(), SolverKind::Full).unwrap_err();
    assert_eq!(err.step(), Some(1));
    assert!(matches!(err, Error::Step { .. }));
}

#[test]
fn trajectory_csv_layout() {
    let grid = SpaceGrid::new(4).unwrap();
    let tg = TimeGrid::new(0.5, 1.0).unwrap();
    let tr = integrate(&heat(), &InitialSpec::constant(&[0.0]), &BoundarySpec::homogeneous(1), &SourceTerm::zero(1), &grid, &tg, &central(), SolverKind::Full).unwrap();
    let csv = tr.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x,u1");
    assert_eq!(lines.len(), 1 + 3 * 5);
    assert_eq!(lines[1], "0,0,0");
    assert_eq!(lines[15], "1,1,0");
}
