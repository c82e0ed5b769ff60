//! Closed convex subsets of the discrete H with their exact orthogonal projections.
//!
//! Pointwise sets (boxes, the nonnegative cone) are projected by nodal clamping, which is the
//! H-orthogonal projection only when the H-Gram is diagonal. Constructing one on a space with
//! consistent mass is therefore an error. The unbounded box (the whole space) is exempt since
//! its projection is the identity in every geometry.
//!
//! Discrete sets map V into V automatically. For a discretised continuum set, `P(V) ⊂ V` is the
//! caller's assertion and is not checked.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::space::DiscreteSpace;

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// `lo_i ≤ x_i ≤ hi_i` per coefficient; bounds may be infinite.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `(x | normal)_H ≤ offset`.
    HalfSpace { normal: DVector<f64>, offset: f64 },
    /// `‖x − center‖_H ≤ radius`.
    Ball { center: DVector<f64>, radius: f64 },
    /// `x_i ≥ 0` per coefficient.
    NonnegCone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// `‖x − Px‖_H`.
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct ConvexSet {
    kind: SetKind,
    space: Arc<DiscreteSpace>,
}

impl ConvexSet {
    pub fn new(space: Arc<DiscreteSpace>, kind: SetKind) -> Result<Self> {
        let n = space.dim();
        match &kind {
            SetKind::Box { lo, hi } => {
                space.check_dim(lo.len())?;
                space.check_dim(hi.len())?;
                if lo.iter().zip(hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    return Err(Error::InvalidArgument("box needs lo <= hi".into()));
                }
                let unbounded = lo.iter().all(|l| *l == f64::NEG_INFINITY)
                    && hi.iter().all(|h| *h == f64::INFINITY);
                if !unbounded && !space.is_lumped() {
                    return Err(Error::GeometryMismatch { kind: "box" });
                }
            }
            SetKind::NonnegCone => {
                if !space.is_lumped() {
                    return Err(Error::GeometryMismatch { kind: "nonneg_cone" });
                }
            }
            SetKind::HalfSpace { normal, offset } => {
                space.check_dim(normal.len())?;
                if space.h_norm_sq(normal) == 0.0 || !offset.is_finite() {
                    return Err(Error::InvalidArgument("half-space needs a non-zero normal and finite offset".into()));
                }
            }
            SetKind::Ball { center, radius } => {
                space.check_dim(center.len())?;
                if !radius.is_finite() || *radius < 0.0 {
                    return Err(Error::InvalidArgument(format!("ball radius {radius} must be finite and >= 0")));
                }
            }
        }
        debug_assert!(n > 0);
        Ok(Self { kind, space })
    }

    /// Same bounds `[lo, hi]` for every coefficient.
    pub fn uniform_box(space: Arc<DiscreteSpace>, lo: f64, hi: f64) -> Result<Self> {
        let n = space.dim();
        Self::new(space, SetKind::Box { lo: vec![lo; n], hi: vec![hi; n] })
    }

    /// `C = H`, expressed as the unbounded box.
    pub fn whole_space(space: Arc<DiscreteSpace>) -> Self {
        Self::uniform_box(space, f64::NEG_INFINITY, f64::INFINITY).expect("unbounded box is valid in any geometry")
    }

    pub fn nonneg_cone(space: Arc<DiscreteSpace>) -> Result<Self> {
        Self::new(space, SetKind::NonnegCone)
    }

    pub fn ball(space: Arc<DiscreteSpace>, center: DVector<f64>, radius: f64) -> Result<Self> {
        Self::new(space, SetKind::Ball { center, radius })
    }

    pub fn half_space(space: Arc<DiscreteSpace>, normal: DVector<f64>, offset: f64) -> Result<Self> {
        Self::new(space, SetKind::HalfSpace { normal, offset })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SetKind::Box { .. } => "box",
            SetKind::HalfSpace { .. } => "halfspace",
            SetKind::Ball { .. } => "ball",
            SetKind::NonnegCone => "nonneg_cone",
        }
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.space.check_dim(x.len())?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            SetKind::Box { lo, hi } => DVector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i])),
            SetKind::NonnegCone => x.map(|v| v.max(0.0)),
            SetKind::Ball { center, radius } => {
                let d = x - center;
                let dist = self.space.h_norm_sq(&d).sqrt();
                if dist <= *radius {
                    x.clone()
                } else {
                    center + d * (*radius / dist)
                }
            }
            SetKind::HalfSpace { normal, offset } => {
                let excess = self.space.h_gram().bilinear(x, normal) - offset;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x - normal * (excess / self.space.h_norm_sq(normal))
                }
            }
        }
    }

    /// `(Px, x − Px)`.
    pub fn decompose(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let p = self.project(x)?;
        let r = x - &p;
        Ok((p, r))
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<Membership> {
        let violation = self.distance(x)?;
        Ok(Membership {
            inside: violation <= tol,
            violation,
        })
    }

    /// `‖x − Px‖_H`.
    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        let (_, r) = self.decompose(x)?;
        Ok(self.space.h_norm_sq(&r).sqrt())
    }
}
