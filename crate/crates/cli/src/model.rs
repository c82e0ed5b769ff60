//! Turns a validated scenario into library objects.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parainv::semilinear::lipschitz_of_clamped;
use parainv::{
    BoundaryCondition, ConvexSet, DiscreteSpace, MassKind, NonAutonomousForm, SemilinearRhs, SourceTerm, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{
    Boundary, InitialSpec, Mass, Mode, Nonlinearity, RhsSpec, Scenario, SchemaError, SetSpec, VectorSpec,
};

pub enum Rhs {
    Source(SourceTerm),
    Semilinear {
        rhs: SemilinearRhs,
        probes: usize,
        max_iterations: usize,
        tolerance: f64,
        /// The nonlinearity sees `Pu`, so it adds nothing to the distance growth rate.
        projected: bool,
    },
}

pub struct Model {
    pub space: Arc<DiscreteSpace>,
    pub form: NonAutonomousForm,
    pub rhs: Rhs,
    pub set: ConvexSet,
    pub initial: DVector<f64>,
    pub grid: TimeGrid,
    pub theta: f64,
}

fn dense(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

fn vector(path: &str, spec: &VectorSpec, dim: usize) -> Result<DVector<f64>, SchemaError> {
    match spec {
        VectorSpec::Uniform(x) => Ok(DVector::from_element(dim, *x)),
        VectorSpec::Values(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
        VectorSpec::Values(v) => Err(SchemaError::at(path, format!("expected {dim} values, found {}", v.len()))),
    }
}

impl Model {
    pub fn build(scenario: &Scenario) -> Result<Self, SchemaError> {
        let (space, form) = match scenario.mode {
            Mode::Fem => {
                let spec = scenario.space.as_ref().expect("validated");
                let bc = match spec.boundary {
                    Boundary::Dirichlet => BoundaryCondition::Dirichlet,
                    Boundary::Neumann => BoundaryCondition::Neumann,
                };
                let mass = match spec.mass {
                    Mass::Lumped => MassKind::Lumped,
                    Mass::Consistent => MassKind::Consistent,
                };
                let space =
                    Arc::new(DiscreteSpace::interval(spec.cells, bc, mass).map_err(|e| SchemaError::at("space", e))?);
                let kappa = scenario.form.as_ref().expect("validated").coefficient;
                let form = NonAutonomousForm::diffusion(
                    space.clone(),
                    (scenario.grid.a, scenario.grid.b),
                    move |t, x| kappa.eval(t, x),
                    None,
                )
                .map_err(|e| SchemaError::at("form.coefficient", e))?;
                (space, form)
            }
            Mode::Matrix => {
                let spec = scenario.matrix.as_ref().expect("validated");
                let n = spec.operator.len();
                let id = DMatrix::identity(n, n);
                let h = spec.h_gram.as_deref().map_or_else(|| id.clone(), dense);
                let v = spec.v_gram.as_deref().map_or(id, dense);
                let space = Arc::new(DiscreteSpace::from_matrices(&h, &v).map_err(|e| SchemaError::at("matrix", e))?);
                let base = dense(&spec.operator);
                let rate = spec.operator_rate.as_deref().map(dense);
                let form = NonAutonomousForm::from_matrices(space.clone(), (scenario.grid.a, scenario.grid.b), move |t| {
                    match &rate {
                        Some(r) => &base + r * t,
                        None => base.clone(),
                    }
                })
                .map_err(|e| SchemaError::at("matrix.operator", e))?;
                (space, form)
            }
        };
        let dim = space.dim();

        let set = match &scenario.set {
            SetSpec::Whole {} => Ok(ConvexSet::whole_space(space.clone())),
            SetSpec::Box { lo, hi } => ConvexSet::uniform_box(space.clone(), *lo, *hi),
            SetSpec::Cone {} => ConvexSet::nonneg_cone(space.clone()),
            SetSpec::Ball { center, radius } => {
                ConvexSet::ball(space.clone(), vector("set.center", center, dim)?, *radius)
            }
            SetSpec::HalfSpace { normal, offset } => {
                ConvexSet::half_space(space.clone(), vector("set.normal", normal, dim)?, *offset)
            }
        }
        .map_err(|e| SchemaError::at("set", e))?;

        let initial = match &scenario.initial {
            InitialSpec::Constant { value } => DVector::from_element(dim, *value),
            InitialSpec::Sine { offset, amplitude, mode } => {
                let k = f64::from(*mode) * std::f64::consts::PI;
                space.interpolate(|x| offset + amplitude * (k * x).sin()).map_err(|e| SchemaError::at("initial", e))?
            }
            InitialSpec::Cosine { offset, amplitude, mode } => {
                let k = f64::from(*mode) * std::f64::consts::PI;
                space.interpolate(|x| offset + amplitude * (k * x).cos()).map_err(|e| SchemaError::at("initial", e))?
            }
            InitialSpec::Values { values } => vector("initial.values", &VectorSpec::Values(values.clone()), dim)?,
            InitialSpec::Random { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
                DVector::from_fn(dim, |_, _| rng.random_range(*lo..*hi))
            }
        };

        let rhs = match &scenario.rhs {
            RhsSpec::Zero {} => Rhs::Source(SourceTerm::zero(dim)),
            RhsSpec::Source { value } => Rhs::Source(SourceTerm::constant(space.embed(&vector("rhs.value", value, dim)?))),
            RhsSpec::Semilinear {
                nonlinearity,
                rate,
                projected,
                probes,
                max_iterations,
                tolerance,
            } => {
                let (nonlinearity, rate) = (*nonlinearity, *rate);
                let f = move |u: f64| nonlinearity.eval(rate, u);
                let lipschitz = lipschitz_constant(&space, &set, nonlinearity, rate, *projected)?;
                let mut rhs = SemilinearRhs::nodal(space.clone(), f, lipschitz).map_err(|e| SchemaError::at("rhs", e))?;
                if *projected {
                    rhs = rhs.projected(set.clone());
                }
                Rhs::Semilinear {
                    rhs,
                    probes: *probes,
                    max_iterations: *max_iterations,
                    tolerance: *tolerance,
                    projected: *projected,
                }
            }
        };

        let grid = TimeGrid::new(scenario.grid.a, scenario.grid.b, scenario.grid.steps.0)
            .map_err(|e| SchemaError::at("grid", e))?;
        Ok(Self {
            space,
            form,
            rhs,
            set,
            initial,
            grid,
            theta: scenario.grid.theta.0,
        })
    }
}

fn lipschitz_constant(
    space: &DiscreteSpace,
    set: &ConvexSet,
    nonlinearity: Nonlinearity,
    rate: f64,
    projected: bool,
) -> Result<f64, SchemaError> {
    let scale = space.embedding_constant() * space.nodal_equivalence();
    if let Some(slope) = nonlinearity.global_slope(rate) {
        return Ok(slope * scale);
    }
    match set.kind() {
        parainv::SetKind::Box { lo, hi } if projected => {
            let lo = lo.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(SchemaError::at("set", "the nonlinearity needs a bounded box"));
            }
            lipschitz_of_clamped(move |u| nonlinearity.eval(rate, u), lo, hi, space)
                .map_err(|e| SchemaError::at("rhs.nonlinearity", e))
        }
        _ => Err(SchemaError::at(
            "rhs.projected",
            "this nonlinearity is only Lipschitz when projected onto a bounded box",
        )),
    }
}
