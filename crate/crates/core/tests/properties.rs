use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parainv::invariance::{check_criterion_along, distance_monitor, DEFAULT_SLACK};
use parainv::necessity::{invariance_sampling_test, restart_probe};
use parainv::semilinear::solve_semilinear;
use parainv::{
    estimate_solution_norm, solve_linear, BoundaryCondition, ContractionPlan, ConvexSet, DiscreteSpace, DualVector,
    EvolutionProblem, MassKind, NonAutonomousForm, PicardStart, SemilinearRhs, SourceTerm, TimeGrid,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn fem(n: usize, bc: BoundaryCondition, mass: MassKind) -> Arc<DiscreteSpace> {
    Arc::new(DiscreteSpace::interval(n, bc, mass).unwrap())
}

/// Random SPD matrix `BᵀB + shift·I`.
fn spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    b.transpose() * b + DMatrix::identity(n, n) * shift
}

fn random_space(seed: u64, n: usize) -> Arc<DiscreteSpace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = spd(&mut rng, n, 0.5);
    let v = &h + spd(&mut rng, n, 0.1);
    Arc::new(DiscreteSpace::from_matrices(&h, &v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dual_pairing_is_bounded_and_attained(seed in 0u64..1000, g in vector(5, 3.0), v in vector(5, 3.0)) {
        let s = random_space(seed, 5);
        let g = DualVector(g);
        let bound = s.dual_norm(&g).unwrap() * s.v_norm(&v).unwrap();
        prop_assert!(g.pair(&v).abs() <= bound * (1.0 + 1e-10) + 1e-14);
        let riesz = s.v_riesz(&g);
        let attained = s.dual_norm(&g).unwrap() * s.v_norm(&riesz).unwrap();
        prop_assert!((g.pair(&riesz) - attained).abs() <= 1e-10 * attained.max(1e-300));
    }

    #[test]
    fn lumped_and_consistent_norms_are_equivalent(cells in 2usize..40, v in vector(41, 2.0)) {
        let lumped = fem(cells, BoundaryCondition::Neumann, MassKind::Lumped);
        let consistent = fem(cells, BoundaryCondition::Neumann, MassKind::Consistent);
        let v = v.rows(0, cells + 1).into_owned();
        let l = lumped.h_norm(&v).unwrap();
        let c = consistent.h_norm(&v).unwrap();
        prop_assume!(l > 1e-12);
        let r = c / l;
        prop_assert!(r >= 1.0 / 3f64.sqrt() - 1e-12 && r <= 3f64.sqrt() + 1e-12, "ratio {}", r);
    }

    #[test]
    fn h_norm_is_dominated_by_v_norm(seed in 0u64..1000, v in vector(4, 5.0)) {
        let s = random_space(seed, 4);
        prop_assert!(s.h_norm(&v).unwrap() <= s.embedding_constant() * s.v_norm(&v).unwrap() * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn form_is_bilinear(
        t in 0.0f64..1.0,
        v1 in vector(9, 2.0), v2 in vector(9, 2.0), w in vector(9, 2.0),
        a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let s = fem(10, BoundaryCondition::Dirichlet, MassKind::Consistent);
        let form = NonAutonomousForm::diffusion(s, (0.0, 1.0), |t, x| 2.0 + (t * 5.0).sin() * x, None).unwrap();
        let combo = &v1 * a + &v2 * b;
        let lhs = form.apply(t, &combo, &w).unwrap();
        let rhs = a * form.apply(t, &v1, &w).unwrap() + b * form.apply(t, &v2, &w).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let lhs = form.apply(t, &w, &combo).unwrap();
        let rhs = a * form.apply(t, &w, &v1).unwrap() + b * form.apply(t, &w, &v2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn superposition(seed in 0u64..500, a in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = fem(12, BoundaryCondition::Neumann, MassKind::Consistent);
        let form = NonAutonomousForm::diffusion(s.clone(), (0.0, 1.0), |t, x| 1.0 + t * x, None).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let n = s.dim();
        let mut draw = || DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (u1, u2, g1, g2) = (draw(), draw(), draw(), draw());
        let src = |g: DVector<f64>| SourceTerm::new(move |t| DualVector(&g * (3.0 * t).cos()));
        let combined = {
            let (g1, g2) = (g1.clone(), g2.clone());
            SourceTerm::new(move |t| DualVector((&g1 * a + &g2) * (3.0 * t).cos()))
        };
        let x1 = solve_linear(&form, &src(g1), &u1, &grid, 1.0).unwrap();
        let x2 = solve_linear(&form, &src(g2), &u2, &grid, 1.0).unwrap();
        let x = solve_linear(&form, &combined, &(&u1 * a + &u2), &grid, 1.0).unwrap();
        for k in 0..=20 {
            let expect = x1.state(k) * a + x2.state(k);
            prop_assert!((x.state(k) - &expect).amax() <= 1e-10 * (1.0 + expect.amax()));
        }
    }

    #[test]
    fn discrete_stability_on_coercive_forms(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_space(seed + 1, 4);
        let sym = spd(&mut rng, 4, 0.2);
        let skew = {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            &b - b.transpose()
        };
        let a = sym + skew;
        let form = NonAutonomousForm::constant(s.clone(), (0.0, 1.0), a).unwrap();
        let w = form.constants().omega_stab;
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let u0 = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let traj = solve_linear(&form, &SourceTerm::zero(4), &u0, &grid, 1.0).unwrap();
        let tau = grid.tau();
        prop_assume!(tau * w < 1.0);
        let factor = 1.0 / (1.0 - tau * w);
        let h0 = s.h_norm(&u0).unwrap();
        for (k, u) in traj.states().iter().enumerate() {
            prop_assert!(s.h_norm(u).unwrap() <= h0 * factor.powi(k as i32) * (1.0 + 1e-10) + 1e-14);
        }
    }

    #[test]
    fn projection_axioms_for_all_kinds(x in vector(9, 4.0), y in vector(9, 4.0), seed in 0u64..100) {
        let lumped = fem(8, BoundaryCondition::Neumann, MassKind::Lumped);
        let consistent = fem(8, BoundaryCondition::Neumann, MassKind::Consistent);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || DVector::from_fn(9, |_, _| rng.random_range(-1.0..1.0));
        let sets = [
            ConvexSet::uniform_box(lumped.clone(), -0.5, 1.0).unwrap(),
            ConvexSet::nonneg_cone(lumped).unwrap(),
            ConvexSet::half_space(consistent.clone(), draw(), 0.2).unwrap(),
            ConvexSet::ball(consistent, draw(), 0.8).unwrap(),
        ];
        for set in &sets {
            let s = set.space();
            let (px, py) = (set.project(&x).unwrap(), set.project(&y).unwrap());
            prop_assert!(s.h_norm(&(set.project(&px).unwrap() - &px)).unwrap() <= 1e-12);
            prop_assert!(s.h_norm(&(&px - &py)).unwrap() <= s.h_norm(&(&x - &y)).unwrap() + 1e-12);
            prop_assert!(s.h_inner(&(&x - &px), &(&py - &px)).unwrap() <= 1e-12);
            prop_assert!(s.h_inner(&(&x - &px), &(&px - &py)).unwrap() >= -1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimated_constants_certify_themselves(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_space(seed, 3);
        let base = spd(&mut rng, 3, 0.05) - DMatrix::identity(3, 3) * 0.5;
        let drift = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.3..0.3));
        let form =
            NonAutonomousForm::from_matrices(s.clone(), (0.0, 1.0), move |t| &base + &drift * t).unwrap();
        let c = form.constants();
        for _ in 0..1000 {
            let t = rng.random_range(0.0..=1.0);
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let w = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let (hv, vv) = (s.h_norm(&v).unwrap().powi(2), s.v_norm(&v).unwrap().powi(2));
            let avv = form.apply(t, &v, &v).unwrap();
            prop_assert!(avv + c.omega_ell * hv - c.alpha * vv >= -1e-9 * vv);
            prop_assert!(avv + c.omega_stab * hv >= -1e-9 * hv);
            let bound = c.m_bound * s.v_norm(&v).unwrap() * s.v_norm(&w).unwrap();
            prop_assert!(form.apply(t, &v, &w).unwrap().abs() <= (1.0 + 1e-9) * bound);
        }
    }

    #[test]
    fn picard_fixed_point_is_independent_of_start(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = fem(16, BoundaryCondition::Neumann, MassKind::Lumped);
        let form = NonAutonomousForm::diffusion(s.clone(), (0.0, 0.5), |_, _| 1.0, None).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 100).unwrap();
        let rhs = SemilinearRhs::nodal(s.clone(), |x: f64| 0.8 * x.sin(), 0.8 * s.embedding_constant() * s.nodal_equivalence()).unwrap();
        let c_a = estimate_solution_norm(&form, &grid, 1.0, 8, seed).unwrap();
        let tol = 1e-9;
        let plan = ContractionPlan::new(c_a, rhs.lipschitz(), &grid, 200, tol).unwrap();
        let u0 = DVector::from_fn(s.dim(), |_, _| rng.random_range(-2.0..2.0));
        let zero = solve_semilinear(&form, &rhs, &u0, &grid, 1.0, &plan.with_start(PicardStart::Zero)).unwrap();
        let warm =
            solve_semilinear(&form, &rhs, &u0, &grid, 1.0, &plan.with_start(PicardStart::LinearWarmStart)).unwrap();
        let diff: Vec<DVector<f64>> =
            zero.trajectory.states().iter().zip(warm.trajectory.states()).map(|(a, b)| a - b).collect();
        let gap = parainv::Trajectory::new(s.clone(), grid, diff).unwrap().mr_norm();
        prop_assert!(gap < 10.0 * tol, "gap {}", gap);
        for sol in [&zero, &warm] {
            prop_assert!(sol.max_ratio() <= plan.contraction_factor() + 0.1);
        }

        let halved = plan.with_slab_steps(plan.slab_steps.div_ceil(2), &grid).unwrap();
        let split = solve_semilinear(&form, &rhs, &u0, &grid, 1.0, &halved).unwrap();
        let baseline = solve_semilinear(&form, &rhs, &u0, &grid, 1.0, &plan).unwrap();
        let change = s.h_norm(&(split.trajectory.last() - baseline.trajectory.last())).unwrap();
        prop_assert!(change < 10.0 * tol, "change {}", change);
    }

    #[test]
    fn solution_norm_estimate_is_stable_across_seeds(seed in 0u64..1000) {
        let s = fem(32, BoundaryCondition::Dirichlet, MassKind::Consistent);
        let form = NonAutonomousForm::diffusion(s, (0.0, 1.0), |_, _| 1.0, None).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let reference = estimate_solution_norm(&form, &grid, 1.0, 16, 0).unwrap();
        let c = estimate_solution_norm(&form, &grid, 1.0, 16, seed + 1).unwrap();
        prop_assert!(c.is_finite() && c > 0.0);
        prop_assert!((c / reference - 1.0).abs() <= 0.2, "{} vs {}", c, reference);
    }

    #[test]
    fn telescoping_of_distances(seed in 0u64..1000, parts in prop::sample::select(vec![2usize, 4, 8])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = fem(16, BoundaryCondition::Dirichlet, MassKind::Lumped);
        let form = NonAutonomousForm::diffusion(s.clone(), (0.0, 0.2), |_, _| 1.0, None).unwrap();
        let unit = ConvexSet::uniform_box(s.clone(), 0.0, 1.0).unwrap();
        let u0 = DVector::from_fn(s.dim(), |_, _| rng.random_range(-1.0..2.0));
        let grid = TimeGrid::new(0.0, 0.2, 64).unwrap();
        let traj = solve_linear(&form, &SourceTerm::zero(s.dim()), &u0, &grid, 1.0).unwrap();
        let d2 = |k: usize| unit.distance(traj.state(k)).unwrap().powi(2);
        let stride = 64 / parts;
        let sum: f64 = (1..=parts).map(|k| d2(k * stride) - d2((k - 1) * stride)).sum();
        prop_assert!((sum - (d2(64) - d2(0))).abs() <= 1e-12);
    }
}

#[test]
fn criterion_holding_implies_distance_bound_on_scenarios() {
    // heat with box, ball contraction, whole space
    let s = fem(32, BoundaryCondition::Dirichlet, MassKind::Lumped);
    let form = NonAutonomousForm::diffusion(s.clone(), (0.0, 0.3), |t, x| 1.0 + 0.5 * t * x, None).unwrap();
    let grid = TimeGrid::new(0.0, 0.3, 300).unwrap();
    let source = SourceTerm::zero(s.dim());
    let u0 = s.interpolate(|x| 3.0 * (std::f64::consts::PI * x).sin() - 0.5).unwrap();
    let traj = solve_linear(&form, &source, &u0, &grid, 1.0).unwrap();
    let ball_space = {
        let i = DMatrix::identity(2, 2);
        Arc::new(DiscreteSpace::from_matrices(&i, &i).unwrap())
    };
    let ball_form = NonAutonomousForm::constant(ball_space.clone(), (0.0, 2.0), DMatrix::identity(2, 2)).unwrap();
    let ball_grid = TimeGrid::new(0.0, 2.0, 500).unwrap();
    let ball_traj =
        solve_linear(&ball_form, &SourceTerm::zero(2), &DVector::from_vec(vec![2.0, 0.0]), &ball_grid, 1.0).unwrap();
    let cases = [
        (&form, &source, &traj, ConvexSet::uniform_box(s.clone(), 0.0, 1.0).unwrap()),
        (&form, &source, &traj, ConvexSet::whole_space(s.clone())),
        (
            &ball_form,
            &SourceTerm::zero(2),
            &ball_traj,
            ConvexSet::ball(ball_space, DVector::zeros(2), 1.0).unwrap(),
        ),
    ];
    for (form, source, traj, set) in &cases {
        let crit = check_criterion_along(form, *source, traj, set, 0.0).unwrap();
        assert!(crit.holds());
        let d0 = set.distance(traj.state(0)).unwrap();
        let monitor = distance_monitor(traj, set, form.constants().omega_stab, d0, DEFAULT_SLACK).unwrap();
        assert!(monitor.holds(), "max excess {}", monitor.max_excess);
    }
}

#[test]
fn zero_distance_is_absorbing() {
    let s = fem(24, BoundaryCondition::Neumann, MassKind::Lumped);
    let form = NonAutonomousForm::diffusion(s.clone(), (0.0, 1.0), |t, x| 1.0 + 0.25 * (6.0 * t).sin() * x, None)
        .unwrap();
    let unit = ConvexSet::uniform_box(s.clone(), 0.0, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
    // enters the box from outside, then must stay
    let u0 = s.interpolate(|x| 0.5 + 0.8 * (std::f64::consts::PI * x).cos()).unwrap();
    let traj = solve_linear(&form, &SourceTerm::zero(s.dim()), &u0, &grid, 1.0).unwrap();
    let crit = check_criterion_along(&form, &SourceTerm::zero(s.dim()), &traj, &unit, 0.0).unwrap();
    assert!(crit.holds());
    let entry = crit.steps.iter().position(|c| c.distance == 0.0).expect("trajectory enters the box");
    assert!(crit.steps[entry..].iter().all(|c| c.distance <= 10.0 * grid.tau()));
}

#[test]
fn restarts_do_not_drift_apart_under_refinement() {
    let s = fem(32, BoundaryCondition::Dirichlet, MassKind::Lumped);
    let form = NonAutonomousForm::diffusion(s.clone(), (0.0, 0.2), |t, _| 1.0 + t, None).unwrap();
    let source = SourceTerm::zero(s.dim());
    let problem = EvolutionProblem::Linear { form: &form, source: &source, theta: 1.0 };
    let unit = ConvexSet::uniform_box(s.clone(), 0.0, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 0.2, 256).unwrap();
    let u0 = s.interpolate(|x| 2.5 * (std::f64::consts::PI * x).sin() - 0.3).unwrap();
    let traj = solve_linear(&form, &source, &u0, &grid, 1.0).unwrap();
    let sampling = invariance_sampling_test(&problem, &unit, 8, &grid, 4).unwrap();
    assert!(sampling.passes());
    let mut last_dev = f64::INFINITY;
    let mut last_gap = f64::INFINITY;
    for parts in [2, 4, 8, 16, 32] {
        let probe = restart_probe(&problem, &unit, &traj, parts).unwrap();
        assert!(probe.holds());
        assert!(probe.min_dominance() >= -(sampling.tolerance + 10.0 * grid.tau()));
        assert!(probe.max_deviation() <= 1.1 * last_dev);
        assert!(probe.convergence_gap <= 1.1 * last_gap);
        last_dev = probe.max_deviation();
        last_gap = probe.convergence_gap;
    }
}
