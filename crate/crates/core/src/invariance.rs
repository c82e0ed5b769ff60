//! Checks of the projection criterion `a(t, Pu, u − Pu) ≥ ⟨f(t), u − Pu⟩` and its consequences.
//!
//! Everything here evaluates inequalities on data that was already computed; nothing solves.
//! The criterion is checked either along one trajectory or pointwise over a battery of states,
//! the distance to the set is compared with the exponential bound, and the identity
//! `‖ũ(t)‖² − ‖ũ(s)‖² = 2∫⟨u′, ũ⟩` for `ũ = u − Pu` is checked in its discrete form.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cauchy::{SourceTerm, Trajectory};
use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::form::NonAutonomousForm;
use crate::space::{DiscreteSpace, DualVector};

/// Right-hand side of an evolution equation, possibly depending on the state.
pub trait Forcing {
    fn evaluate(&self, t: f64, state: &DVector<f64>) -> DualVector;
}

impl Forcing for SourceTerm {
    fn evaluate(&self, t: f64, _state: &DVector<f64>) -> DualVector {
        self.at(t)
    }
}

fn checked_rhs(space: &DiscreteSpace, rhs: &dyn Forcing, t: f64, state: &DVector<f64>) -> Result<DualVector> {
    let g = rhs.evaluate(t, state);
    space.check_dim(g.len())?;
    Ok(g)
}

/// `a(t, Pv, v − Pv) − ⟨rhs(t, v), v − Pv⟩` together with `‖v − Pv‖_H`.
fn margin_at(
    form: &NonAutonomousForm,
    rhs: &dyn Forcing,
    set: &ConvexSet,
    t: f64,
    v: &DVector<f64>,
    rhs_state: &DVector<f64>,
) -> Result<(f64, f64)> {
    let (p, r) = set.decompose(v)?;
    let space = form.space();
    let g = checked_rhs(space, rhs, t, rhs_state)?;
    let margin = form.apply(t, &p, &r)? - g.pair(&r);
    Ok((margin, space.h_norm_sq(&r).sqrt()))
}

fn check_shared_space(form: &NonAutonomousForm, set: &ConvexSet) -> Result<()> {
    form.space().check_dim(set.space().dim())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionStep {
    pub t: f64,
    pub margin: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub steps: Vec<CriterionStep>,
    pub tolerance: f64,
    /// First node whose margin is below `−tol·(1 + ‖u_k‖²_V)`.
    pub first_failure: Option<usize>,
    pub failures: usize,
}

impl CriterionReport {
    pub fn holds(&self) -> bool {
        self.first_failure.is_none()
    }

    pub fn worst_margin(&self) -> f64 {
        self.steps.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates the criterion at every node of a trajectory.
pub fn check_criterion_along(
    form: &NonAutonomousForm,
    rhs: &dyn Forcing,
    traj: &Trajectory,
    set: &ConvexSet,
    tol: f64,
) -> Result<CriterionReport> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be >= 0")));
    }
    check_shared_space(form, set)?;
    let space = form.space();
    let mut steps = Vec::with_capacity(traj.states().len());
    let mut first_failure = None;
    let mut failures = 0;
    for (k, (t, u)) in traj.grid().nodes().zip(traj.states()).enumerate() {
        let (margin, distance) = margin_at(form, rhs, set, t, u, u)?;
        if margin < -tol * (1.0 + space.v_norm_sq(u)) {
            failures += 1;
            first_failure.get_or_insert(k);
        }
        steps.push(CriterionStep { t, margin, distance });
    }
    Ok(CriterionReport {
        steps,
        tolerance: tol,
        first_failure,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseReport {
    pub worst_margin: f64,
    pub worst_state: DVector<f64>,
    pub worst_time: f64,
    pub tolerance: f64,
    pub evaluations: usize,
    pub violations: usize,
}

impl PointwiseReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Test states for the pointwise criterion.
///
/// In dimension at most six every sign pattern in `{−1, 0, 1}ⁿ` plus the vectors `2eᵢ`;
/// otherwise `±eᵢ`, `2eᵢ` and `random` vectors drawn from `[−1, 2]ⁿ` and `[−3, 3]ⁿ`.
pub fn default_battery(dim: usize, random: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    if dim <= 6 {
        let total = 3usize.pow(dim as u32);
        for code in 0..total {
            let mut c = code;
            out.push(DVector::from_fn(dim, |_, _| {
                let digit = c % 3;
                c /= 3;
                digit as f64 - 1.0
            }));
        }
        for i in 0..dim {
            out.push(DVector::from_fn(dim, |j, _| if i == j { 2.0 } else { 0.0 }));
        }
        return out;
    }
    for i in 0..dim {
        for s in [1.0, -1.0, 2.0] {
            out.push(DVector::from_fn(dim, |j, _| if i == j { s } else { 0.0 }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random {
        let (lo, hi) = if k % 2 == 0 { (-1.0, 2.0) } else { (-3.0, 3.0) };
        out.push(DVector::from_fn(dim, |_, _| rng.random_range(lo..hi)));
    }
    out
}

/// `n ≥ 2` equally spaced times covering the form's interval.
pub fn sample_times(form: &NonAutonomousForm, n: usize) -> Vec<f64> {
    let (a, b) = form.interval();
    let n = n.max(2);
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Worst margin `a(t, Pv, v − Pv) − ⟨rhs(t, Pv), v − Pv⟩` over `samples × times`.
///
/// A state counts as a violation when its margin is below `−tol·(1 + ‖v‖²_V)`.
pub fn check_pointwise_criterion(
    form: &NonAutonomousForm,
    rhs: &dyn Forcing,
    set: &ConvexSet,
    samples: &[DVector<f64>],
    times: &[f64],
    tol: f64,
) -> Result<PointwiseReport> {
    if samples.is_empty() || times.is_empty() {
        return Err(Error::InvalidArgument("pointwise criterion needs samples and times".into()));
    }
    check_shared_space(form, set)?;
    let space = form.space();
    let mut report = PointwiseReport {
        worst_margin: f64::INFINITY,
        worst_state: samples[0].clone(),
        worst_time: times[0],
        tolerance: tol,
        evaluations: 0,
        violations: 0,
    };
    for &t in times {
        for v in samples {
            let p = set.project(v)?;
            let (margin, _) = margin_at(form, rhs, set, t, v, &p)?;
            report.evaluations += 1;
            if margin < -tol * (1.0 + space.v_norm_sq(v)) {
                report.violations += 1;
            }
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_state = v.clone();
                report.worst_time = t;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    pub t: f64,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub series: Vec<DistanceSample>,
    /// Largest `(distance_k − d0·e^{ω(t_k − a)}) / (τ(1 + d0))`.
    pub max_excess: f64,
    pub slack_constant: f64,
}

impl DistanceReport {
    pub fn holds(&self) -> bool {
        self.series.iter().all(|s| s.distance <= s.bound)
    }
}

pub const DEFAULT_SLACK: f64 = 10.0;

/// Compares `‖u_k − Pu_k‖_H` with `d0·e^{ω(t_k − a)} + c_slack·τ·(1 + d0)`.
pub fn distance_monitor(
    traj: &Trajectory,
    set: &ConvexSet,
    omega_stab: f64,
    d0: f64,
    slack_constant: f64,
) -> Result<DistanceReport> {
    if !(d0 >= 0.0 && slack_constant >= 0.0) {
        return Err(Error::InvalidArgument("initial distance and slack must be >= 0".into()));
    }
    let grid = traj.grid();
    let tau = grid.tau();
    let a = grid.start();
    let unit = tau * (1.0 + d0);
    let mut series = Vec::with_capacity(traj.states().len());
    let mut max_excess = f64::NEG_INFINITY;
    for (t, u) in grid.nodes().zip(traj.states()) {
        let distance = set.distance(u)?;
        let envelope = d0 * (omega_stab * (t - a)).exp();
        max_excess = max_excess.max((distance - envelope) / unit);
        series.push(DistanceSample {
            t,
            distance,
            bound: envelope + slack_constant * unit,
        });
    }
    Ok(DistanceReport {
        series,
        max_excess,
        slack_constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// The hypothesis `a(t, Pv, v − Pv) ≥ ⟨h, v − Pv⟩` failed at some time; nothing is claimed.
    pub vacuous: bool,
    /// `‖v − Pv‖²_V`.
    pub lhs: f64,
    /// `(M²‖v‖²_V + ‖h‖²_{V′})/α² + (2ω/α)‖v − Pv‖²_H` with `ω = ω_ell`.
    pub rhs: f64,
    pub holds: bool,
}

/// V-norm bound on `v − Pv` implied by the criterion with a fixed functional `h`.
pub fn invbound_check(
    form: &NonAutonomousForm,
    times: &[f64],
    v: &DVector<f64>,
    h: &DualVector,
    set: &ConvexSet,
) -> Result<BoundCheck> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("need at least one time".into()));
    }
    check_shared_space(form, set)?;
    let space = form.space();
    space.check_dim(h.len())?;
    let (p, r) = set.decompose(v)?;
    let c = form.constants();
    let lhs = space.v_norm_sq(&r);
    let rhs = (c.m_bound.powi(2) * space.v_norm_sq(v) + space.dual_norm_sq(h)) / c.alpha.powi(2)
        + 2.0 * c.omega_ell / c.alpha * space.h_norm_sq(&r);
    let mut vacuous = false;
    for &t in times {
        if form.apply(t, &p, &r)? < h.pair(&r) {
            vacuous = true;
            break;
        }
    }
    let holds = vacuous || lhs <= rhs + 1e-9 * rhs.abs().max(lhs);
    Ok(BoundCheck { vacuous, lhs, rhs, holds })
}

/// Placement of `ũ` in the discrete integral `2Σ τ⟨du_k, ũ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// `ũ_k`.
    #[default]
    LeftEndpoint,
    /// `(ũ_k + ũ_{k+1})/2`.
    Midpoint,
}

/// Largest defect of `‖ũ(t)‖²_H − ‖ũ(s)‖²_H = 2Σ τ⟨du_k, ũ⟩`, `ũ = u − Pu`, over node pairs
/// `s < t` of the finest dyadic subgrid with at most 64 intervals.
pub fn ftc_identity_check(traj: &Trajectory, set: &ConvexSet, quadrature: Quadrature) -> Result<f64> {
    let grid = traj.grid();
    let n = grid.steps();
    if n < 2 {
        return Err(Error::InvalidArgument("identity check needs at least two steps".into()));
    }
    let space = traj.space();
    let residuals: Vec<DVector<f64>> = traj
        .states()
        .iter()
        .map(|u| set.decompose(u).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    // prefix[k] = Σ_{j<k} of the per-step defects
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        let du = space.embed(&(&traj.states()[k + 1] - &traj.states()[k]));
        let weight = match quadrature {
            Quadrature::LeftEndpoint => residuals[k].clone(),
            Quadrature::Midpoint => (&residuals[k] + &residuals[k + 1]) * 0.5,
        };
        let defect =
            space.h_norm_sq(&residuals[k + 1]) - space.h_norm_sq(&residuals[k]) - 2.0 * du.pair(&weight);
        prefix[k + 1] = prefix[k] + defect;
    }
    let mut parts = 1;
    while parts * 2 <= 64 && n.is_multiple_of(parts * 2) {
        parts *= 2;
    }
    let stride = n / parts;
    let mut worst = 0.0_f64;
    for i in 0..parts {
        for j in (i + 1)..=parts {
            worst = worst.max((prefix[j * stride] - prefix[i * stride]).abs());
        }
    }
    Ok(worst)
}
