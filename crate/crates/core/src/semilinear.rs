//! Semilinear problems `u′ + A(t)u = F(t, u)` with `F` Lipschitz from H to V′.
//!
//! The solution is built slab by slab. On each slab the Picard map `v ↦ solve(F(·, v))` is a
//! contraction in the maximal-regularity norm once the slab is shorter than
//! `q = 2√2/(c_a·L²)`; slabs of length at most `q/2` are used and glued at their endpoints.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cauchy::{check_theta, mr_norm_sq, Stepper, TimeGrid, Trajectory};
use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::form::NonAutonomousForm;
use crate::invariance::{check_pointwise_criterion, default_battery, sample_times, Forcing, PointwiseReport};
use crate::space::{DiscreteSpace, DualVector};

type RhsFn = dyn Fn(f64, &DVector<f64>) -> DualVector + Send + Sync;

/// Nonlinearity `F: I × H → V′` with its Lipschitz constant `L`.
#[derive(Clone)]
pub struct SemilinearRhs {
    eval: Arc<RhsFn>,
    lipschitz: f64,
    projection: Option<ConvexSet>,
}

impl fmt::Debug for SemilinearRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemilinearRhs")
            .field("lipschitz", &self.lipschitz)
            .field("projection", &self.projection.as_ref().map(|s| s.kind_name()))
            .finish()
    }
}

impl SemilinearRhs {
    pub fn new(f: impl Fn(f64, &DVector<f64>) -> DualVector + Send + Sync + 'static, lipschitz: f64) -> Result<Self> {
        if !lipschitz.is_finite() || lipschitz < 0.0 {
            return Err(Error::InvalidArgument(format!("Lipschitz constant {lipschitz} must be finite and >= 0")));
        }
        Ok(Self {
            eval: Arc::new(f),
            lipschitz,
            projection: None,
        })
    }

    /// `F(u)(x) = f(u(x))` applied to the coefficients, embedded into V′ through the H-Gram.
    pub fn nodal(
        space: Arc<DiscreteSpace>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self> {
        Self::new(move |_, v| space.embed(&v.map(&f)), lipschitz)
    }

    /// Feeds `Pv` instead of `v` into the nonlinearity. `P` is H-nonexpansive, so `L` is kept.
    pub fn projected(mut self, set: ConvexSet) -> Self {
        self.projection = Some(set);
        self
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn projection(&self) -> Option<&ConvexSet> {
        self.projection.as_ref()
    }

    /// Largest observed `‖F(t,v) − F(t,w)‖_{V′} / (L‖v − w‖_H)` over random pairs at the given
    /// times; errors if it exceeds `1 + 1e-6`.
    pub fn check_lipschitz(&self, space: &DiscreteSpace, times: &[f64], pairs: usize, seed: u64) -> Result<f64> {
        let n = space.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for &t in times {
            for p in 0..pairs {
                let scale = [1.0, 3.0, 0.1][p % 3];
                let v = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0));
                let w = &v + DVector::from_fn(n, |_, _| scale * rng.random_range(-0.5..0.5));
                let dv = self.evaluate(t, &v);
                let dw = self.evaluate(t, &w);
                space.check_dim(dv.len())?;
                let num = space.dual_norm_sq(&DualVector(dv.0 - dw.0)).sqrt();
                let den = space.h_norm_sq(&(v - w)).sqrt();
                if den == 0.0 || num == 0.0 {
                    continue;
                }
                let ratio = if self.lipschitz == 0.0 { f64::INFINITY } else { num / (self.lipschitz * den) };
                worst = worst.max(ratio);
            }
        }
        if worst > 1.0 + 1e-6 {
            return Err(Error::Precondition(format!(
                "Lipschitz certificate L = {} violated by factor {worst}",
                self.lipschitz
            )));
        }
        Ok(worst)
    }
}

impl Forcing for SemilinearRhs {
    fn evaluate(&self, t: f64, state: &DVector<f64>) -> DualVector {
        match &self.projection {
            Some(set) => (self.eval)(t, &set.project_unchecked(state)),
            None => (self.eval)(t, state),
        }
    }
}

const SLOPE_CELLS: usize = 1 << 14;

fn max_secant(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> f64 {
    let h = (hi - lo) / cells as f64;
    let mut prev = f(lo);
    let mut worst = 0.0_f64;
    for i in 1..=cells {
        let x = if i == cells { hi } else { lo + h * i as f64 };
        let y = f(x);
        let s = ((y - prev) / h).abs();
        worst = if s.is_nan() { f64::INFINITY } else { worst.max(s) };
        prev = y;
    }
    worst
}

/// Bound on `|f′|` over `[lo, hi]` from secant slopes on two nested grids, extrapolated.
///
/// A bound that keeps growing under refinement is reported as unbounded.
pub fn slope_bound(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("slope interval [{lo}, {hi}] must be finite and non-empty")));
    }
    let fine = max_secant(&f, lo, hi, SLOPE_CELLS);
    let coarse = max_secant(&f, lo, hi, SLOPE_CELLS / 2);
    if !fine.is_finite() || fine - coarse > 1e-2 * fine.max(1.0) {
        return Err(Error::UnboundedSlope { lo, hi });
    }
    Ok(fine.max(2.0 * fine - coarse))
}

/// Lipschitz constant, H to V′, of `v ↦ G_H·f(Pv)` for the nodal nonlinearity `f` composed
/// with the clamp onto `[lo, hi]`.
pub fn lipschitz_of_clamped(f: impl Fn(f64) -> f64, lo: f64, hi: f64, space: &DiscreteSpace) -> Result<f64> {
    let slope = slope_bound(f, lo, hi)?;
    Ok(slope * space.embedding_constant() * space.nodal_equivalence())
}

/// Initial iterate of the Picard iteration on each slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PicardStart {
    /// `v ≡` slab start value.
    #[default]
    Constant,
    Zero,
    /// Linear solve with `F` frozen at the slab start value.
    LinearWarmStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionPlan {
    pub c_a: f64,
    pub lipschitz: f64,
    /// `2√2/(c_a·L²)`, infinite for `L = 0`.
    pub q: f64,
    pub slab_steps: usize,
    pub slab_length: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub start: PicardStart,
}

impl ContractionPlan {
    /// Longest slab that is a whole number of steps and at most `q/2` long.
    pub fn new(c_a: f64, lipschitz: f64, grid: &TimeGrid, max_iterations: usize, tolerance: f64) -> Result<Self> {
        if !(c_a > 0.0 && c_a.is_finite()) {
            return Err(Error::InvalidArgument(format!("c_a = {c_a} must be positive")));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!("L = {lipschitz} must be finite and >= 0")));
        }
        if max_iterations == 0 || tolerance.is_nan() || tolerance < 0.0 {
            return Err(Error::InvalidArgument("need at least one iteration and a tolerance >= 0".into()));
        }
        let q = if lipschitz == 0.0 {
            f64::INFINITY
        } else {
            2.0 * std::f64::consts::SQRT_2 / (c_a * lipschitz * lipschitz)
        };
        let tau = grid.tau();
        let fit = ((q / 2.0) / tau).floor();
        if fit < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "time step {tau} exceeds half the contraction length q = {q}"
            )));
        }
        let slab_steps = if fit >= grid.steps() as f64 { grid.steps() } else { fit as usize };
        Ok(Self {
            c_a,
            lipschitz,
            q,
            slab_steps,
            slab_length: slab_steps as f64 * tau,
            max_iterations,
            tolerance,
            start: PicardStart::default(),
        })
    }

    /// Shorter slabs; `steps` must not exceed the planned slab.
    pub fn with_slab_steps(mut self, steps: usize, grid: &TimeGrid) -> Result<Self> {
        if steps == 0 || steps > self.slab_steps {
            return Err(Error::InvalidArgument(format!(
                "slab of {steps} steps outside 1..={}",
                self.slab_steps
            )));
        }
        self.slab_steps = steps;
        self.slab_length = steps as f64 * grid.tau();
        Ok(self)
    }

    pub fn with_start(mut self, start: PicardStart) -> Self {
        self.start = start;
        self
    }

    /// `slab·c_a·L²/(2√2)`, the bound on the squared Picard ratio; at most ½.
    pub fn squared_factor(&self) -> f64 {
        if self.lipschitz == 0.0 {
            0.0
        } else {
            self.slab_length / self.q
        }
    }

    /// Bound on `‖Su − Sv‖_MR / ‖u − v‖_MR`.
    pub fn contraction_factor(&self) -> f64 {
        self.squared_factor().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabDiagnostics {
    pub first_step: usize,
    pub last_step: usize,
    pub iterations: usize,
    /// `‖v^{m+1} − v^m‖_MR` per iteration.
    pub differences: Vec<f64>,
    /// Consecutive quotients of `differences`.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SemilinearSolution {
    pub trajectory: Trajectory,
    pub slabs: Vec<SlabDiagnostics>,
    pub plan: ContractionPlan,
}

impl SemilinearSolution {
    pub fn max_ratio(&self) -> f64 {
        self.slabs
            .iter()
            .flat_map(|s| s.ratios.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn converged(&self) -> bool {
        self.slabs.iter().all(|s| s.converged)
    }
}

const STALL_LIMIT: usize = 3;

/// Picard iteration on consecutive slabs of `plan.slab_steps` grid steps.
///
/// Step `k` of an iterate is driven by `F(t_*, (1 − θ)v_k + θv_{k+1})` at the stage time
/// `t_*`, so a converged iterate solves the θ-scheme with the nonlinearity treated like the
/// linear part. Iteration stops once the MR-norm difference of consecutive iterates is at most
/// `plan.tolerance` or has reached rounding level.
pub fn solve_semilinear(
    form: &NonAutonomousForm,
    rhs: &SemilinearRhs,
    u_a: &DVector<f64>,
    grid: &TimeGrid,
    theta: f64,
    plan: &ContractionPlan,
) -> Result<SemilinearSolution> {
    check_theta(theta)?;
    let space = form.space().clone();
    space.check_dim(u_a.len())?;
    if let Some(set) = rhs.projection() {
        space.check_dim(set.space().dim())?;
    }
    if rhs.lipschitz() > plan.lipschitz {
        return Err(Error::Precondition(format!(
            "plan assumes L = {} but the nonlinearity has L = {}",
            plan.lipschitz,
            rhs.lipschitz()
        )));
    }
    let times = [grid.start(), 0.5 * (grid.start() + grid.end()), grid.end()];
    rhs.check_lipschitz(&space, &times, 8, 0x5eed)?;

    let stepper = Stepper::new(form, *grid, theta)?;
    let mut states = Vec::with_capacity(grid.steps() + 1);
    states.push(u_a.clone());
    let mut slabs = Vec::new();
    let mut first = 0;
    while first < grid.steps() {
        let last = (first + plan.slab_steps).min(grid.steps());
        let start = states[first].clone();
        let (slab_states, diag) = picard_slab(&stepper, &space, rhs, grid, plan, slabs.len(), first, last, &start)?;
        states.extend(slab_states.into_iter().skip(1));
        slabs.push(diag);
        first = last;
    }
    Ok(SemilinearSolution {
        trajectory: Trajectory::new(space, *grid, states)?,
        slabs,
        plan: *plan,
    })
}

#[allow(clippy::too_many_arguments)]
fn picard_slab(
    stepper: &Stepper<'_>,
    space: &DiscreteSpace,
    rhs: &SemilinearRhs,
    grid: &TimeGrid,
    plan: &ContractionPlan,
    slab: usize,
    first: usize,
    last: usize,
    start: &DVector<f64>,
) -> Result<(Vec<DVector<f64>>, SlabDiagnostics)> {
    let m = last - first;
    let slab_grid = grid.slice(first, last)?;
    let prepared = (first..last).map(|k| stepper.prepare(k)).collect::<Result<Vec<_>>>()?;
    let theta = stepper.theta();
    let sweep = |forcing: &dyn Fn(usize, f64) -> DualVector| -> Result<Vec<DVector<f64>>> {
        let mut out = Vec::with_capacity(m + 1);
        out.push(start.clone());
        for (j, step) in prepared.iter().enumerate() {
            let k = first + j;
            let f = forcing(j, stepper.stage_time(k));
            space.check_dim(f.len())?;
            let next = stepper.advance(k, step, &out[j], &f)?;
            out.push(next);
        }
        Ok(out)
    };

    let mut current = match plan.start {
        PicardStart::Constant => vec![start.clone(); m + 1],
        PicardStart::Zero => vec![DVector::zeros(start.len()); m + 1],
        PicardStart::LinearWarmStart => sweep(&|_, t| rhs.evaluate(t, start))?,
    };
    let mut diag = SlabDiagnostics {
        first_step: first,
        last_step: last,
        iterations: 0,
        differences: Vec::new(),
        ratios: Vec::new(),
        converged: false,
    };
    let mut stalled = 0;
    while diag.iterations < plan.max_iterations {
        let next = sweep(&|j, t| {
            let state = if theta == 1.0 {
                current[j + 1].clone()
            } else {
                &current[j] * (1.0 - theta) + &current[j + 1] * theta
            };
            rhs.evaluate(t, &state)
        })?;
        diag.iterations += 1;
        let delta: Vec<DVector<f64>> = next.iter().zip(&current).map(|(a, b)| a - b).collect();
        let diff = mr_norm_sq(space, &slab_grid, &delta).sqrt();
        let size = mr_norm_sq(space, &slab_grid, &next).sqrt();
        if let Some(&prev) = diag.differences.last() {
            let ratio = if prev > 0.0 { diff / prev } else { 0.0 };
            diag.ratios.push(ratio);
            stalled = if ratio >= 1.0 { stalled + 1 } else { 0 };
        }
        diag.differences.push(diff);
        current = next;
        if diff <= plan.tolerance || diff <= 64.0 * f64::EPSILON * size {
            diag.converged = true;
            break;
        }
        if stalled >= STALL_LIMIT {
            return Err(Error::ContractionFailure {
                slab,
                iteration: diag.iterations,
                ratio: *diag.ratios.last().expect("stall implies a ratio"),
            });
        }
    }
    Ok((current, diag))
}

#[derive(Debug, Clone)]
pub struct ProjectedSolution {
    pub solution: SemilinearSolution,
    /// Pointwise criterion for `(a, F∘P, C)`, evaluated before solving.
    pub criterion: PointwiseReport,
    /// `max_k ‖u_k − Pu_k‖_H`.
    pub max_violation: f64,
}

/// Solves `u′ + A(t)u = F(t, Pu)` from `u_a ∈ C` and verifies that the trajectory stays in `C`,
/// so that it also solves `u′ + A(t)u = F(t, u)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_projected_semilinear(
    form: &NonAutonomousForm,
    rhs: &SemilinearRhs,
    set: &ConvexSet,
    u_a: &DVector<f64>,
    grid: &TimeGrid,
    theta: f64,
    plan: &ContractionPlan,
    tol: f64,
) -> Result<ProjectedSolution> {
    let start = set.contains(u_a, tol)?;
    if !start.inside {
        return Err(Error::Precondition(format!(
            "initial value lies at distance {:e} from the set",
            start.violation
        )));
    }
    let rhs = rhs.clone().projected(set.clone());
    let battery = default_battery(form.space().dim(), 64, 0);
    let criterion = check_pointwise_criterion(form, &rhs, set, &battery, &sample_times(form, 9), 1e-12)?;
    let solution = solve_semilinear(form, &rhs, u_a, grid, theta, plan)?;
    let mut max_violation = 0.0_f64;
    for (k, u) in solution.trajectory.states().iter().enumerate() {
        let d = set.distance(u)?;
        if d > tol {
            return Err(Error::InvarianceViolation { step: k, violation: d });
        }
        max_violation = max_violation.max(d);
    }
    Ok(ProjectedSolution {
        solution,
        criterion,
        max_violation,
    })
}
