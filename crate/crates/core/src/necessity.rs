//! Numerical probes of the converse direction: if `(a, f)` leaves `C` invariant, the criterion
//! must hold along every solution.
//!
//! [`restart_probe`] restarts the equation from `Pu(t_{k−1})` on a uniform partition and
//! records how the restarted solutions compare with `u`, together with the integrals
//! `∫_J ⟨f − A·Pu, u − Pu⟩` over dyadic subintervals, which must be non-positive under
//! invariance. [`invariance_sampling_test`] tests invariance itself from random starts in `C`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cauchy::{solve_linear, SourceTerm, TimeGrid, Trajectory};
use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::form::NonAutonomousForm;
use crate::invariance::{check_pointwise_criterion, Forcing, PointwiseReport};
use crate::semilinear::{solve_semilinear, ContractionPlan, SemilinearRhs};

/// Equation whose solutions are probed.
#[derive(Debug, Clone, Copy)]
pub enum EvolutionProblem<'a> {
    Linear {
        form: &'a NonAutonomousForm,
        source: &'a SourceTerm,
        theta: f64,
    },
    Semilinear {
        form: &'a NonAutonomousForm,
        rhs: &'a SemilinearRhs,
        plan: &'a ContractionPlan,
        theta: f64,
    },
}

impl EvolutionProblem<'_> {
    pub fn form(&self) -> &NonAutonomousForm {
        match self {
            Self::Linear { form, .. } | Self::Semilinear { form, .. } => form,
        }
    }

    pub fn forcing(&self) -> &dyn Forcing {
        match self {
            Self::Linear { source, .. } => *source,
            Self::Semilinear { rhs, .. } => *rhs,
        }
    }

    pub fn solve(&self, u_c: &DVector<f64>, grid: &TimeGrid) -> Result<Trajectory> {
        match *self {
            Self::Linear { form, source, theta } => solve_linear(form, source, u_c, grid, theta),
            Self::Semilinear { form, rhs, plan, theta } => {
                Ok(solve_semilinear(form, rhs, u_c, grid, theta, plan)?.trajectory)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingReport {
    pub starts: usize,
    pub worst_violation: f64,
    /// Grid node at which the worst run was restarted.
    pub worst_start: usize,
    /// `10τ`.
    pub tolerance: f64,
}

impl SamplingReport {
    pub fn passes(&self) -> bool {
        self.worst_violation <= self.tolerance
    }
}

/// Solves from `n_starts` random restart nodes `c` and random values `P(x) ∈ C`, `x ∈ [−2, 2]ⁿ`,
/// and records the largest distance to `C` reached on `[c, b]`.
pub fn invariance_sampling_test(
    problem: &EvolutionProblem<'_>,
    set: &ConvexSet,
    n_starts: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<SamplingReport> {
    if n_starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    let dim = problem.form().space().dim();
    set.space().check_dim(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SamplingReport {
        starts: n_starts,
        worst_violation: 0.0,
        worst_start: 0,
        tolerance: 10.0 * grid.tau(),
    };
    for _ in 0..n_starts {
        let c = rng.random_range(0..grid.steps());
        let x = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
        let start = set.project(&x)?;
        let traj = problem.solve(&start, &grid.slice(c, grid.steps())?)?;
        for u in traj.states() {
            let d = set.distance(u)?;
            if d > report.worst_violation {
                report.worst_violation = d;
                report.worst_start = c;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartInterval {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// `max_t ‖u(t) − v(t)‖_H` for the solution `v` restarted from `Pu(t_start)`.
    pub deviation: f64,
    /// `min_t (‖u(t) − v(t)‖_H − ‖u(t) − Pu(t)‖_H)`.
    pub dominance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalIntegral {
    pub t_start: f64,
    pub t_end: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub parts: usize,
    pub intervals: Vec<RestartInterval>,
    /// `∫_J ⟨f − A·Pu, u − Pu⟩` over every dyadic subinterval `J`, left-endpoint rule.
    pub integrals: Vec<IntervalIntegral>,
    /// `10τ(1 + ‖u‖²_MR)`.
    pub tolerance: f64,
    /// `(Σ τ‖v_n − Pu‖²_H)^{1/2}`, the L²(H) distance of the glued restarts to `Pu`.
    pub convergence_gap: f64,
}

impl ProbeReport {
    pub fn holds(&self) -> bool {
        self.integrals.iter().all(|i| i.value <= self.tolerance)
    }

    pub fn max_deviation(&self) -> f64 {
        self.intervals.iter().map(|i| i.deviation).fold(0.0, f64::max)
    }

    pub fn min_dominance(&self) -> f64 {
        self.intervals.iter().map(|i| i.dominance).fold(f64::INFINITY, f64::min)
    }

    pub fn max_integral(&self) -> f64 {
        self.integrals.iter().map(|i| i.value).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Restart construction on the uniform `parts`-partition of the trajectory's interval.
pub fn restart_probe(
    problem: &EvolutionProblem<'_>,
    set: &ConvexSet,
    traj: &Trajectory,
    parts: usize,
) -> Result<ProbeReport> {
    let grid = *traj.grid();
    let steps = grid.steps();
    if parts == 0 || !steps.is_multiple_of(parts) {
        return Err(Error::GridMismatch { steps, parts });
    }
    let form = problem.form();
    let space = form.space();
    space.check_dim(traj.space().dim())?;
    let tau = grid.tau();
    let states = traj.states();
    let projected: Vec<DVector<f64>> = states.iter().map(|u| set.project(u)).collect::<Result<_>>()?;

    let stride = steps / parts;
    let mut intervals = Vec::with_capacity(parts);
    let mut gap_sq = 0.0;
    for k in 0..parts {
        let (from, to) = (k * stride, (k + 1) * stride);
        let restarted = problem.solve(&projected[from], &grid.slice(from, to)?)?;
        let mut deviation = 0.0_f64;
        let mut dominance = f64::INFINITY;
        for (j, v) in restarted.states().iter().enumerate() {
            let i = from + j;
            let dev = space.h_norm_sq(&(&states[i] - v)).sqrt();
            let dist = space.h_norm_sq(&(&states[i] - &projected[i])).sqrt();
            deviation = deviation.max(dev);
            dominance = dominance.min(dev - dist);
            if i < to {
                gap_sq += tau * space.h_norm_sq(&(v - &projected[i]));
            }
        }
        intervals.push(RestartInterval {
            index: k + 1,
            t_start: grid.node(from),
            t_end: grid.node(to),
            deviation,
            dominance,
        });
    }

    let mut prefix = vec![0.0; steps + 1];
    for j in 0..steps {
        let t = grid.node(j);
        let p = &projected[j];
        let r = &states[j] - p;
        let value = problem.forcing().evaluate(t, p).pair(&r) - form.apply(t, p, &r)?;
        prefix[j + 1] = prefix[j] + tau * value;
    }
    let mut integrals = Vec::new();
    let mut level = 1;
    loop {
        let width = steps / level;
        for i in 0..level {
            integrals.push(IntervalIntegral {
                t_start: grid.node(i * width),
                t_end: grid.node((i + 1) * width),
                value: prefix[(i + 1) * width] - prefix[i * width],
            });
        }
        if level * 2 > 64 || !steps.is_multiple_of(level * 2) {
            break;
        }
        level *= 2;
    }
    Ok(ProbeReport {
        parts,
        intervals,
        integrals,
        tolerance: 10.0 * tau * (1.0 + traj.mr_norm().powi(2)),
        convergence_gap: gap_sq.sqrt(),
    })
}

pub const POINTWISE_ASSUMPTION: &str = "form right-continuous in t; every discrete state is an admissible initial value with a solution continuous in V";

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityScan {
    pub report: PointwiseReport,
    /// Regularity hypotheses taken for granted, not verified.
    pub assumption: &'static str,
}

impl NecessityScan {
    pub fn holds(&self) -> bool {
        self.report.holds()
    }
}

/// Pointwise criterion `a(t, Pv, v − Pv) ≥ ⟨rhs(t, Pv), v − Pv⟩`, which is necessary for
/// invariance under the regularity hypotheses recorded in the result.
pub fn pointwise_necessity_scan(
    form: &NonAutonomousForm,
    rhs: &dyn Forcing,
    set: &ConvexSet,
    samples: &[DVector<f64>],
    times: &[f64],
    tol: f64,
) -> Result<NecessityScan> {
    Ok(NecessityScan {
        report: check_pointwise_criterion(form, rhs, set, samples, times, tol)?,
        assumption: POINTWISE_ASSUMPTION,
    })
}
