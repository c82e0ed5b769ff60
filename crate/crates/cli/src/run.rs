//! Solves a scenario and evaluates the requested checks.

use parainv::invariance::{
    check_criterion_along, check_pointwise_criterion, default_battery, distance_monitor, ftc_identity_check,
    sample_times,
};
use parainv::necessity::{invariance_sampling_test, restart_probe};
use parainv::semilinear::{solve_semilinear, SemilinearSolution};
use parainv::{estimate_solution_norm, solve_linear, ContractionPlan, EvolutionProblem, Forcing, Quadrature, Trajectory};
use serde::Serialize;

use crate::config::{ChecksSpec, Mode, Scenario, ToleranceSpec};
use crate::model::{Model, Rhs};
use crate::report::Row;

const NORM_PROBES: usize = 8;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub mode: &'static str,
    pub dimension: usize,
    pub grid: GridSummary,
    pub constants: Constants,
    pub trajectory: TrajectorySummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardSummary>,
    pub checks: Checks,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct GridSummary {
    pub a: f64,
    pub b: f64,
    pub steps: usize,
    pub theta: f64,
    pub tau: f64,
}

#[derive(Debug, Serialize)]
pub struct Constants {
    pub m_bound: f64,
    pub alpha: f64,
    pub omega_ell: f64,
    pub omega_stab: f64,
    pub c_a: f64,
    pub lipschitz: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrajectorySummary {
    pub initial_distance: f64,
    pub final_distance: f64,
    pub max_distance: f64,
    pub max_distance_time: f64,
    pub min_nodal: f64,
    pub max_nodal: f64,
    pub mr_norm: f64,
}

#[derive(Debug, Serialize)]
pub struct PicardSummary {
    pub slabs: usize,
    pub slab_steps: usize,
    pub max_iterations_used: usize,
    pub max_ratio: f64,
    pub contraction_factor: f64,
    pub converged: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct Checks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ftc: Option<FtcSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingSummary>,
}

impl Checks {
    fn verdicts(&self) -> impl Iterator<Item = bool> + '_ {
        [
            self.criterion.as_ref().map(|c| c.passed),
            self.pointwise.as_ref().map(|c| c.passed),
            self.distance.as_ref().map(|c| c.passed),
            self.ftc.as_ref().map(|c| c.passed),
            self.probe.as_ref().map(|c| c.passed),
            self.sampling.as_ref().map(|c| c.passed),
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Debug, Serialize)]
pub struct CriterionSummary {
    pub passed: bool,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub failures: usize,
    pub first_failure_time: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PointwiseSummary {
    pub passed: bool,
    pub worst_margin: f64,
    pub worst_time: f64,
    pub worst_state: Vec<f64>,
    pub evaluations: usize,
    pub violations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct DistanceSummary {
    pub passed: bool,
    /// Exponent of the envelope `d0·e^{rate·(t − a)}`.
    pub rate: f64,
    /// Largest `(distance − envelope)/(τ(1 + d0))`.
    pub max_excess: f64,
    pub slack: f64,
}

#[derive(Debug, Serialize)]
pub struct FtcSummary {
    pub passed: bool,
    pub defect: f64,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct ProbeSummary {
    pub passed: bool,
    pub parts: usize,
    pub max_integral: f64,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub min_dominance: f64,
    pub convergence_gap: f64,
}

#[derive(Debug, Serialize)]
pub struct SamplingSummary {
    pub passed: bool,
    pub starts: usize,
    pub worst_violation: f64,
    pub worst_start_time: f64,
    pub tolerance: f64,
}

pub struct Outcome {
    pub summary: Summary,
    pub rows: Vec<Row>,
}

/// Solves the scenario and evaluates every requested check; numerical failures are errors.
pub fn run(scenario: &Scenario, model: &Model, tolerances: ToleranceSpec) -> parainv::Result<Outcome> {
    let Model {
        space,
        form,
        rhs,
        set,
        initial,
        grid,
        theta,
    } = model;
    let (grid, theta) = (*grid, *theta);

    let (traj, plan, solution, forcing): (Trajectory, Option<ContractionPlan>, Option<SemilinearSolution>, &dyn Forcing) =
        match rhs {
            Rhs::Source(source) => (solve_linear(form, source, initial, &grid, theta)?, None, None, source),
            Rhs::Semilinear {
                rhs,
                probes,
                max_iterations,
                tolerance,
                ..
            } => {
                let c_a = estimate_solution_norm(form, &grid, theta, *probes, scenario.seed)?;
                let plan = ContractionPlan::new(c_a, rhs.lipschitz(), &grid, *max_iterations, *tolerance)?;
                let sol = solve_semilinear(form, rhs, initial, &grid, theta, &plan)?;
                (sol.trajectory.clone(), Some(plan), Some(sol), rhs)
            }
        };
    let c_a = match &plan {
        Some(p) => p.c_a,
        None => estimate_solution_norm(form, &grid, theta, NORM_PROBES, scenario.seed)?,
    };
    let problem = match (rhs, &plan) {
        (Rhs::Source(source), _) => EvolutionProblem::Linear { form, source, theta },
        (Rhs::Semilinear { rhs, .. }, Some(plan)) => EvolutionProblem::Semilinear { form, rhs, plan, theta },
        (Rhs::Semilinear { .. }, None) => unreachable!("semilinear scenarios always carry a plan"),
    };

    // per-node series, always written
    let along = check_criterion_along(form, forcing, &traj, set, tolerances.criterion)?;
    let rows: Vec<Row> = along
        .steps
        .iter()
        .zip(traj.states())
        .map(|(step, u)| {
            Ok(Row {
                t: step.t,
                distance: step.distance,
                margin: step.margin,
                min_nodal: u.min(),
                max_nodal: u.max(),
                h_norm: space.h_norm(u)?,
            })
        })
        .collect::<parainv::Result<_>>()?;

    let constants = form.constants();
    let checks = evaluate_checks(&scenario.checks, tolerances, model, &problem, forcing, &traj, along, scenario.seed)?;

    let (mut max_distance, mut max_distance_time) = (0.0_f64, grid.start());
    for r in &rows {
        if r.distance > max_distance {
            max_distance = r.distance;
            max_distance_time = r.t;
        }
    }
    let summary = Summary {
        name: scenario.name.clone(),
        seed: scenario.seed,
        mode: match scenario.mode {
            Mode::Fem => "fem",
            Mode::Matrix => "matrix",
        },
        dimension: space.dim(),
        grid: GridSummary {
            a: grid.start(),
            b: grid.end(),
            steps: grid.steps(),
            theta,
            tau: grid.tau(),
        },
        constants: Constants {
            m_bound: constants.m_bound,
            alpha: constants.alpha,
            omega_ell: constants.omega_ell,
            omega_stab: constants.omega_stab,
            c_a,
            lipschitz: plan.map(|p| p.lipschitz),
            q: plan.map(|p| p.q),
        },
        trajectory: TrajectorySummary {
            initial_distance: rows[0].distance,
            final_distance: rows[rows.len() - 1].distance,
            max_distance,
            max_distance_time,
            min_nodal: rows.iter().map(|r| r.min_nodal).fold(f64::INFINITY, f64::min),
            max_nodal: rows.iter().map(|r| r.max_nodal).fold(f64::NEG_INFINITY, f64::max),
            mr_norm: traj.mr_norm(),
        },
        picard: solution.as_ref().map(|s| PicardSummary {
            slabs: s.slabs.len(),
            slab_steps: s.plan.slab_steps,
            max_iterations_used: s.slabs.iter().map(|d| d.iterations).max().unwrap_or(0),
            max_ratio: s.max_ratio(),
            contraction_factor: s.plan.contraction_factor(),
            converged: s.converged(),
        }),
        passed: checks.verdicts().all(|v| v) && solution.as_ref().is_none_or(|s| s.converged()),
        checks,
    };
    Ok(Outcome { summary, rows })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_checks(
    spec: &ChecksSpec,
    tolerances: ToleranceSpec,
    model: &Model,
    problem: &EvolutionProblem<'_>,
    forcing: &dyn Forcing,
    traj: &Trajectory,
    along: parainv::invariance::CriterionReport,
    seed: u64,
) -> parainv::Result<Checks> {
    let Model {
        space, form, rhs, set, grid, ..
    } = model;
    let mut checks = Checks::default();
    if spec.criterion {
        checks.criterion = Some(CriterionSummary {
            passed: along.holds(),
            worst_margin: along.worst_margin(),
            tolerance: along.tolerance,
            failures: along.failures,
            first_failure_time: along.first_failure.map(|k| along.steps[k].t),
        });
    }
    if spec.pointwise {
        let battery = default_battery(space.dim(), spec.pointwise_random, seed);
        let times = sample_times(form, spec.pointwise_times);
        let report = check_pointwise_criterion(form, forcing, set, &battery, &times, tolerances.pointwise)?;
        checks.pointwise = Some(PointwiseSummary {
            passed: report.holds(),
            worst_margin: report.worst_margin,
            worst_time: report.worst_time,
            worst_state: report.worst_state.iter().copied().collect(),
            evaluations: report.evaluations,
            violations: report.violations,
            tolerance: report.tolerance,
        });
    }
    if spec.distance {
        let c = form.constants();
        let rate = match rhs {
            Rhs::Source(_) | Rhs::Semilinear { projected: true, .. } => c.omega_stab,
            Rhs::Semilinear { rhs, .. } => c.omega_ell + rhs.lipschitz().powi(2) / (4.0 * c.alpha),
        };
        let d0 = set.distance(traj.state(0))?;
        let report = distance_monitor(traj, set, rate, d0, tolerances.distance_slack)?;
        checks.distance = Some(DistanceSummary {
            passed: report.holds(),
            rate,
            max_excess: report.max_excess,
            slack: report.slack_constant,
        });
    }
    if spec.ftc {
        let defect = ftc_identity_check(traj, set, Quadrature::LeftEndpoint)?;
        let tolerance = tolerances.ftc * grid.tau() * (1.0 + traj.mr_norm().powi(2));
        checks.ftc = Some(FtcSummary {
            passed: defect <= tolerance,
            defect,
            tolerance,
        });
    }
    if let Some(parts) = spec.probe {
        let report = restart_probe(problem, set, traj, parts)?;
        checks.probe = Some(ProbeSummary {
            passed: report.holds(),
            parts,
            max_integral: report.max_integral(),
            tolerance: report.tolerance,
            max_deviation: report.max_deviation(),
            min_dominance: report.min_dominance(),
            convergence_gap: report.convergence_gap,
        });
    }
    if let Some(starts) = spec.sampling {
        let report = invariance_sampling_test(problem, set, starts, grid, seed)?;
        checks.sampling = Some(SamplingSummary {
            passed: report.passes(),
            starts,
            worst_violation: report.worst_violation,
            worst_start_time: grid.node(report.worst_start),
            tolerance: report.tolerance,
        });
    }
    Ok(checks)
}
