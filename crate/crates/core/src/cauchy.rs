//! Linear Cauchy problem `u′ + A(t)u = f`, `u(a) = u_a`, discretised by the θ-scheme.
//!
//! Also provides the discrete maximal-regularity norm, the energy identity residual and a
//! randomised estimate of the constant in `‖u‖²_MR ≤ c·(‖f‖²_{L²(V′)} + ‖u_a‖²_H)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::form::NonAutonomousForm;
use crate::linalg::{BandMatrix, Factorization};
use crate::space::{DiscreteSpace, DualVector};

/// Uniform grid `t_k = a + k·τ`, `τ = (b − a)/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, steps: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!("time grid needs a < b, got [{a}, {b}]")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        Ok(Self { a, b, steps })
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.b
        } else {
            self.a + (self.b - self.a) * (k as f64 / self.steps as f64)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }

    /// Grid over nodes `from..=to` of this grid.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.steps {
            return Err(Error::InvalidArgument(format!(
                "invalid sub-grid {from}..={to} of {} steps",
                self.steps
            )));
        }
        Self::new(self.node(from), self.node(to), to - from)
    }
}

/// Right-hand side `f ∈ L²(I; V′)`, sampled pointwise.
#[derive(Clone)]
pub struct SourceTerm {
    eval: Arc<dyn Fn(f64) -> DualVector + Send + Sync>,
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SourceTerm")
    }
}

impl SourceTerm {
    /// The solver samples `f` once per step at the stage time. Rough sources should be
    /// averaged over each step by the caller.
    pub fn new(f: impl Fn(f64) -> DualVector + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(f) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(move |_| DualVector::zeros(dim))
    }

    pub fn constant(g: DualVector) -> Self {
        Self::new(move |_| g.clone())
    }

    pub fn at(&self, t: f64) -> DualVector {
        (self.eval)(t)
    }
}

/// States `u_0, …, u_N` on a time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<DVector<f64>>,
    space: Arc<DiscreteSpace>,
}

impl Trajectory {
    pub fn new(space: Arc<DiscreteSpace>, grid: TimeGrid, states: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != grid.steps() + 1 {
            return Err(Error::DimensionMismatch {
                expected: grid.steps() + 1,
                found: states.len(),
            });
        }
        for s in &states {
            space.check_dim(s.len())?;
        }
        Ok(Self { grid, states, space })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least two states")
    }

    pub fn into_states(self) -> Vec<DVector<f64>> {
        self.states
    }

    /// Discrete `‖u‖_MR = (Σ τ‖(u_{k+1} − u_k)/τ‖²_{V′} + Σ τ‖u_{k+1}‖²_V)^{1/2}`.
    ///
    /// The V-part uses right endpoints, so the initial value only enters through H.
    /// The difference quotient is an element of H and is measured in V′ through `G_H`.
    pub fn mr_norm(&self) -> f64 {
        mr_norm_sq(&self.space, &self.grid, &self.states).sqrt()
    }

    /// `Σ τ‖u_k‖²_H` over left endpoints.
    pub fn l2_h_norm_sq(&self) -> f64 {
        let tau = self.grid.tau();
        self.states[..self.grid.steps()]
            .iter()
            .map(|u| tau * self.space.h_norm_sq(u))
            .sum()
    }

    /// Largest per-step defect in `‖u_{k+1}‖²_H − ‖u_k‖²_H = 2τ⟨du_k, (u_{k+1} + u_k)/2⟩`.
    pub fn energy_identity_residual(&self) -> f64 {
        let tau = self.grid.tau();
        self.states
            .windows(2)
            .map(|w| {
                let du = self.space.embed(&((&w[1] - &w[0]) / tau));
                let mid = (&w[1] + &w[0]) * 0.5;
                let lhs = self.space.h_norm_sq(&w[1]) - self.space.h_norm_sq(&w[0]);
                (lhs - 2.0 * tau * du.pair(&mid)).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn mr_norm_sq(space: &DiscreteSpace, grid: &TimeGrid, states: &[DVector<f64>]) -> f64 {
    let tau = grid.tau();
    states
        .windows(2)
        .map(|w| {
            let du = space.embed(&((&w[1] - &w[0]) / tau));
            tau * (space.dual_norm_sq(&du) + space.v_norm_sq(&w[1]))
        })
        .sum()
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("theta = {theta} outside [1/2, 1]")))
    }
}

pub(crate) struct PreparedStep {
    op: BandMatrix,
    factor: Factorization,
}

/// One θ-step: `(G_H/τ + θA)u_{k+1} = (G_H/τ − (1−θ)A)u_k + f`, with `A` taken at
/// the stage time `t_k + θτ`.
pub(crate) struct Stepper<'a> {
    form: &'a NonAutonomousForm,
    grid: TimeGrid,
    theta: f64,
    mass_over_tau: BandMatrix,
}

impl<'a> Stepper<'a> {
    pub fn new(form: &'a NonAutonomousForm, grid: TimeGrid, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        let mass_over_tau = form.space().h_gram().scale(1.0 / grid.tau());
        Ok(Self {
            form,
            grid,
            theta,
            mass_over_tau,
        })
    }

    pub fn stage_time(&self, k: usize) -> f64 {
        if self.theta == 1.0 {
            self.grid.node(k + 1)
        } else {
            self.grid.node(k) + self.theta * self.grid.tau()
        }
    }

    /// Operator and factored step matrix of step `k`; reusable across repeated solves.
    pub fn prepare(&self, k: usize) -> Result<PreparedStep> {
        let op = self.form.operator_at(self.stage_time(k))?;
        let lhs = BandMatrix::lincomb(1.0, &self.mass_over_tau, self.theta, &op);
        let factor = Factorization::new(&lhs).ok_or(Error::StepFailure { step: k })?;
        Ok(PreparedStep { op, factor })
    }

    pub fn advance(
        &self,
        k: usize,
        prepared: &PreparedStep,
        u: &DVector<f64>,
        forcing: &DualVector,
    ) -> Result<DVector<f64>> {
        let mut rhs = self.mass_over_tau.mul_vec(u) + &forcing.0;
        if self.theta < 1.0 {
            rhs -= prepared.op.mul_vec(u) * (1.0 - self.theta);
        }
        let next = prepared.factor.solve(&rhs);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::StepFailure { step: k });
        }
        Ok(next)
    }

    pub fn step(&self, k: usize, u: &DVector<f64>, forcing: &DualVector) -> Result<DVector<f64>> {
        self.advance(k, &self.prepare(k)?, u, forcing)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Runs all steps; `forcing(k, t_stage)` supplies the right-hand side of step `k`.
    pub fn run(
        &self,
        u_a: &DVector<f64>,
        mut forcing: impl FnMut(usize, f64) -> Result<DualVector>,
    ) -> Result<Vec<DVector<f64>>> {
        let mut states = Vec::with_capacity(self.grid.steps() + 1);
        states.push(u_a.clone());
        for k in 0..self.grid.steps() {
            let f = forcing(k, self.stage_time(k))?;
            let next = self.step(k, &states[k], &f)?;
            states.push(next);
        }
        Ok(states)
    }
}

/// Solves `u′ + A(t)u = f`, `u(a) = u_a` on `grid` with the θ-scheme (`θ ∈ [1/2, 1]`).
pub fn solve_linear(
    form: &NonAutonomousForm,
    source: &SourceTerm,
    u_a: &DVector<f64>,
    grid: &TimeGrid,
    theta: f64,
) -> Result<Trajectory> {
    let space = form.space().clone();
    space.check_dim(u_a.len())?;
    let stepper = Stepper::new(form, *grid, theta)?;
    let states = stepper.run(u_a, |_, t| {
        let f = source.at(t);
        space.check_dim(f.len())?;
        Ok(f)
    })?;
    Trajectory::new(space, *grid, states)
}

/// Randomised estimate of the maximal-regularity constant `c_a`.
///
/// Probes the discrete solution map with random initial values and random sources (constant
/// and step-wise varying) and returns twice the largest observed ratio
/// `‖u‖²_MR / (‖f‖²_{L²(V′)} + ‖u_a‖²_H)`.
pub fn estimate_solution_norm(
    form: &NonAutonomousForm,
    grid: &TimeGrid,
    theta: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes < 4 {
        return Err(Error::InvalidArgument("need at least 4 probes".into()));
    }
    let space = form.space().clone();
    let n = space.dim();
    let tau = grid.tau();
    let stepper = Stepper::new(form, *grid, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_vec = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

    let mut worst = 0.0_f64;
    for p in 0..probes {
        let with_initial = p % 4 == 0 || p % 4 == 3;
        let u_a = if with_initial { random_vec(&mut rng) } else { DVector::zeros(n) };
        let sources: Vec<DualVector> = match p % 4 {
            0 => vec![DualVector::zeros(n); grid.steps()],
            1 => vec![space.embed(&random_vec(&mut rng)); grid.steps()],
            _ => (0..grid.steps()).map(|_| DualVector(random_vec(&mut rng))).collect(),
        };
        let data = space.h_norm_sq(&u_a)
            + sources.iter().map(|f| tau * space.dual_norm_sq(f)).sum::<f64>();
        if data == 0.0 {
            continue;
        }
        let states = stepper.run(&u_a, |k, _| Ok(sources[k].clone()))?;
        worst = worst.max(mr_norm_sq(&space, grid, &states) / data);
    }
    Ok(2.0 * worst)
}
