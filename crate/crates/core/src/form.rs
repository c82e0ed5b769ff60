//! Non-autonomous bounded H-elliptic forms and their associated operators.
//!
//! The operator matrix follows the convention `a(t, v, w) = wᵀ·A(t)·v`, so `A(t)·v` is the
//! coefficient vector of the functional `a(t, v, ·) ∈ V′`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_part, BandMatrix, Whitening};
use crate::space::{assemble_cells, DiscreteSpace};

/// Safety factor applied to the estimated coercivity constant.
pub const ALPHA_SAFETY: f64 = 0.95;

/// Largest shift tried when searching for an ellipticity constant.
pub const OMEGA_CAP: f64 = 1e6;

/// Constants of a bounded H-elliptic form.
///
/// `omega_ell` is the shift in `a(t,v,v) + ω‖v‖²_H ≥ α‖v‖²_V`; `omega_stab` is the sharp
/// `ω` in `a(t,v,v) ≥ −ω‖v‖²_H`, which may be negative for coercive forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormConstants {
    pub m_bound: f64,
    pub alpha: f64,
    pub omega_ell: f64,
    pub omega_stab: f64,
}

type OperatorFn = dyn Fn(f64) -> BandMatrix + Send + Sync;

#[derive(Clone)]
pub struct NonAutonomousForm {
    space: Arc<DiscreteSpace>,
    operator: Arc<OperatorFn>,
    interval: (f64, f64),
    constants: FormConstants,
}

impl fmt::Debug for NonAutonomousForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonAutonomousForm")
            .field("dim", &self.space.dim())
            .field("interval", &self.interval)
            .field("constants", &self.constants)
            .finish()
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time interval [{a}, {b}] is empty")))
    }
}

impl NonAutonomousForm {
    /// `a(t, v, w) = ∫ κ(t, x)·v′·w′ dx` on a FEM space, with midpoint quadrature per cell.
    ///
    /// Bounds `0 < κ_min ≤ κ ≤ κ_max` are sampled on the cell midpoints and a uniform time
    /// grid unless supplied. The constants are `M = κ_max` and `α = ω = κ_min`, which hold
    /// because the V-Gram is stiffness plus mass.
    pub fn diffusion<K>(
        space: Arc<DiscreteSpace>,
        interval: (f64, f64),
        kappa: K,
        bounds: Option<(f64, f64)>,
    ) -> Result<Self>
    where
        K: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let (a, b) = interval;
        check_interval(a, b)?;
        let mesh = space
            .mesh()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("diffusion form needs a mesh-based space".into()))?;
        let (k_min, k_max) = match bounds {
            Some((lo, hi)) => {
                if !(lo > 0.0 && lo <= hi) {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient bounds ({lo}, {hi}) must satisfy 0 < min <= max"
                    )));
                }
                (lo, hi)
            }
            None => {
                let samples = 129;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for s in 0..samples {
                    let t = a + (b - a) * s as f64 / (samples - 1) as f64;
                    for cell in 0..mesh.cells {
                        let x = mesh.midpoint(cell);
                        let k = kappa(t, x);
                        if !k.is_finite() || k <= 0.0 {
                            return Err(Error::Ellipticity { t, x, value: k });
                        }
                        lo = lo.min(k);
                        hi = hi.max(k);
                    }
                }
                (lo, hi)
            }
        };
        let h = mesh.cell_width();
        let unit = assemble_cells(&mesh, |_| [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]]);
        let w = Whitening::new(&space.h_gram().to_dense()).expect("validated H-Gram");
        let lambda_min = w.pencil_eigenvalues(&unit.to_dense())[0];

        let operator = move |t: f64| {
            assemble_cells(&mesh, |cell| {
                let k = kappa(t, mesh.midpoint(cell)) / h;
                [[k, -k], [-k, k]]
            })
        };
        Ok(Self {
            space,
            operator: Arc::new(operator),
            interval,
            constants: FormConstants {
                m_bound: k_max,
                alpha: k_min,
                omega_ell: k_min,
                omega_stab: -k_min * lambda_min,
            },
        })
    }

    /// Form given directly by its operator matrices; constants are estimated.
    pub fn from_matrices<F>(space: Arc<DiscreteSpace>, interval: (f64, f64), operator: F) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let (a, b) = interval;
        check_interval(a, b)?;
        let n = space.dim();
        for t in [a, 0.5 * (a + b), b] {
            let m = operator(t);
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
        }
        let mut form = Self {
            space,
            operator: Arc::new(move |t| BandMatrix::from_dense(&operator(t))),
            interval,
            constants: FormConstants {
                m_bound: 0.0,
                alpha: 0.0,
                omega_ell: 0.0,
                omega_stab: 0.0,
            },
        };
        form.constants = form.estimate_constants(17)?;
        Ok(form)
    }

    /// Autonomous form with a fixed operator matrix.
    pub fn constant(space: Arc<DiscreteSpace>, interval: (f64, f64), a: DMatrix<f64>) -> Result<Self> {
        Self::from_matrices(space, interval, move |_| a.clone())
    }

    /// Replaces the constants, e.g. with analytically known values.
    pub fn with_constants(mut self, constants: FormConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn constants(&self) -> FormConstants {
        self.constants
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let (a, b) = self.interval;
        let slack = 1e-12 * (1.0 + (b - a).abs());
        if t.is_nan() || t < a - slack || t > b + slack {
            return Err(Error::OutOfDomain { t, a, b });
        }
        Ok(t.clamp(a, b))
    }

    pub fn operator_at(&self, t: f64) -> Result<BandMatrix> {
        let t = self.check_time(t)?;
        Ok((self.operator)(t))
    }

    /// `a(t, v, w) = wᵀ·A(t)·v`.
    pub fn apply(&self, t: f64, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        self.space.check_dim(v.len())?;
        self.space.check_dim(w.len())?;
        Ok(self.operator_at(t)?.bilinear(v, w))
    }

    /// Samples `n_samples` uniform times and estimates `(M, α, ω_ell, ω_stab)`.
    ///
    /// `M` is the largest `V → V′` operator norm, `ω_stab` the largest `−λ_min` of the
    /// symmetric part against the H-Gram. For `α` the shift `ω_ell = 0` is tried first;
    /// otherwise `ω_ell` starts at `max(1, ω_stab + 1)` and doubles until the symmetric
    /// part plus `ω_ell·G_H` is positive definite relative to `G_V`. The resulting minimal
    /// eigenvalue is scaled by [`ALPHA_SAFETY`]. A form whose symmetric part has no positive
    /// direction at some sampled time is rejected, since its ellipticity would come from the
    /// shift alone.
    pub fn estimate_constants(&self, n_samples: usize) -> Result<FormConstants> {
        if n_samples < 2 {
            return Err(Error::InvalidArgument("need at least 2 time samples".into()));
        }
        let (a, b) = self.interval;
        let h = self.space.h_gram().to_dense();
        let wv = Whitening::new(&self.space.v_gram().to_dense()).expect("validated V-Gram");
        let wh = Whitening::new(&h).expect("validated H-Gram");

        let mut m_bound = 0.0_f64;
        let mut omega_stab = f64::NEG_INFINITY;
        let mut sym_parts = Vec::with_capacity(n_samples);
        for s in 0..n_samples {
            let t = a + (b - a) * s as f64 / (n_samples - 1) as f64;
            let op = self.operator_at(t)?.to_dense();
            let sym = symmetric_part(&op);
            m_bound = m_bound.max(wv.operator_norm(&op));
            omega_stab = omega_stab.max(-wh.pencil_eigenvalues(&sym)[0]);
            let top = *wv.pencil_eigenvalues(&sym).last().expect("non-empty space");
            if top <= 1e-12 * (1.0 + m_bound) {
                return Err(Error::NotElliptic(format!(
                    "symmetric part of A({t}) has no positive direction"
                )));
            }
            sym_parts.push(sym);
        }

        let threshold = 1e-12 * (1.0 + m_bound);
        let lowest = |omega: f64| -> f64 {
            sym_parts
                .iter()
                .map(|s| wv.pencil_eigenvalues(&(s + &h * omega))[0])
                .fold(f64::INFINITY, f64::min)
        };
        let mut omega = 0.0;
        let mut lam = lowest(omega);
        if lam <= threshold {
            omega = (omega_stab + 1.0).max(1.0);
            loop {
                if omega > OMEGA_CAP {
                    return Err(Error::NotElliptic(format!(
                        "no positive alpha for any omega up to {OMEGA_CAP:e}"
                    )));
                }
                lam = lowest(omega);
                if lam > threshold {
                    break;
                }
                omega *= 2.0;
            }
        }
        Ok(FormConstants {
            m_bound,
            alpha: ALPHA_SAFETY * lam,
            omega_ell: omega,
            omega_stab,
        })
    }
}
