//! Scenario files: strict TOML, unknown keys rejected.

use std::fmt;

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    /// Dotted key path, empty for top-level syntax errors.
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "`{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for SchemaError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub mode: Mode,
    pub space: Option<SpaceSpec>,
    pub matrix: Option<MatrixSpec>,
    pub form: Option<FormSpec>,
    pub initial: InitialSpec,
    #[serde(default)]
    pub rhs: RhsSpec,
    pub set: SetSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub checks: ChecksSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fem,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mass {
    Lumped,
    Consistent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub cells: usize,
    pub boundary: Boundary,
    pub mass: Mass,
}

/// `A(t) = operator + t·operator_rate` with Gram matrices defaulting to the identity.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub operator: Vec<Vec<f64>>,
    pub operator_rate: Option<Vec<Vec<f64>>>,
    pub h_gram: Option<Vec<Vec<f64>>>,
    pub v_gram: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub coefficient: Coefficient,
}

/// Whitelisted diffusion coefficients `κ(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Constant { value: f64 },
    /// `base + slope·x`
    Affine { base: f64, slope: f64 },
    /// `base + amplitude·sin(2π·frequency·t)·(1 + slope·x)`
    Sinusoidal {
        base: f64,
        amplitude: f64,
        frequency: f64,
        slope: f64,
    },
}

impl Coefficient {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Affine { base, slope } => base + slope * x,
            Self::Sinusoidal {
                base,
                amplitude,
                frequency,
                slope,
            } => base + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin() * (1.0 + slope * x),
        }
    }

    /// Lower bound over `t ∈ ℝ`, `x ∈ [0, 1]`.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Affine { base, slope } => base + slope.min(0.0),
            Self::Sinusoidal {
                base, amplitude, slope, ..
            } => base - amplitude.abs() * 1f64.max((1.0 + slope).abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant { value: f64 },
    /// `offset + amplitude·sin(mode·π·x)`
    Sine { offset: f64, amplitude: f64, mode: u32 },
    /// `offset + amplitude·cos(mode·π·x)`
    Cosine { offset: f64, amplitude: f64, mode: u32 },
    Values { values: Vec<f64> },
    /// Independent uniform coefficients, drawn from the scenario seed.
    Random { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `rate·u·(1 − u)`
    Logistic,
    /// `rate·sin(u)`
    Sine,
    /// `rate·u`
    Linear,
}

impl Nonlinearity {
    pub fn eval(self, rate: f64, u: f64) -> f64 {
        match self {
            Self::Logistic => rate * u * (1.0 - u),
            Self::Sine => rate * u.sin(),
            Self::Linear => rate * u,
        }
    }

    /// Slope bound on all of ℝ, if there is one.
    pub fn global_slope(self, rate: f64) -> Option<f64> {
        match self {
            Self::Logistic => (rate == 0.0).then_some(0.0),
            Self::Sine | Self::Linear => Some(rate.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSpec {
    Zero {},
    /// Time-independent source `G_H·s` with nodal values `s`.
    Source { value: VectorSpec },
    Semilinear {
        nonlinearity: Nonlinearity,
        rate: f64,
        #[serde(default)]
        projected: bool,
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "default_iterations")]
        max_iterations: usize,
        #[serde(default = "default_picard_tol")]
        tolerance: f64,
    },
}

impl Default for RhsSpec {
    fn default() -> Self {
        Self::Zero {}
    }
}

fn default_probes() -> usize {
    8
}

fn default_iterations() -> usize {
    200
}

fn default_picard_tol() -> f64 {
    1e-10
}

/// Either one value for every coefficient or an explicit vector.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Uniform(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Whole {},
    Box { lo: f64, hi: f64 },
    Cone {},
    Ball { center: VectorSpec, radius: f64 },
    HalfSpace { normal: VectorSpec, offset: f64 },
}

impl SetSpec {
    /// Sets defined coefficient-wise, which need a diagonal H-Gram matrix.
    pub fn is_pointwise(&self) -> bool {
        matches!(self, Self::Box { .. } | Self::Cone {})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub steps: Steps,
    #[serde(default)]
    pub theta: Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "i64")]
pub struct Steps(pub usize);

impl TryFrom<i64> for Steps {
    type Error = String;

    fn try_from(n: i64) -> Result<Self, String> {
        if n >= 1 {
            Ok(Self(n as usize))
        } else {
            Err(format!("steps = {n} must be at least 1"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "f64")]
pub struct Theta(pub f64);

impl Default for Theta {
    fn default() -> Self {
        Self(1.0)
    }
}

impl TryFrom<f64> for Theta {
    type Error = String;

    fn try_from(theta: f64) -> Result<Self, String> {
        if (0.5..=1.0).contains(&theta) {
            Ok(Self(theta))
        } else {
            Err(format!("theta = {theta} outside [0.5, 1]"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    #[serde(default)]
    pub criterion: bool,
    #[serde(default)]
    pub pointwise: bool,
    #[serde(default)]
    pub distance: bool,
    #[serde(default)]
    pub ftc: bool,
    /// Number of restart intervals.
    pub probe: Option<usize>,
    /// Number of random restarts.
    pub sampling: Option<usize>,
    /// Random states added to the pointwise battery.
    #[serde(default = "default_battery_size")]
    pub pointwise_random: usize,
    #[serde(default = "default_sample_times")]
    pub pointwise_times: usize,
}

fn default_battery_size() -> usize {
    64
}

fn default_sample_times() -> usize {
    9
}

impl Default for ChecksSpec {
    fn default() -> Self {
        Self {
            criterion: false,
            pointwise: false,
            distance: false,
            ftc: false,
            probe: None,
            sampling: None,
            pointwise_random: default_battery_size(),
            pointwise_times: default_sample_times(),
        }
    }
}

impl ChecksSpec {
    pub fn any(&self) -> bool {
        self.criterion || self.pointwise || self.distance || self.ftc || self.probe.is_some() || self.sampling.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "default_margin_tol")]
    pub criterion: f64,
    #[serde(default = "default_margin_tol")]
    pub pointwise: f64,
    #[serde(default = "default_slack")]
    pub distance_slack: f64,
    /// Multiple of `τ(1 + ‖u‖²_MR)` allowed for the distance identity defect.
    #[serde(default = "default_slack")]
    pub ftc: f64,
}

fn default_margin_tol() -> f64 {
    1e-12
}

fn default_slack() -> f64 {
    10.0
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            criterion: default_margin_tol(),
            pointwise: default_margin_tol(),
            distance_slack: default_slack(),
            ftc: default_slack(),
        }
    }
}

impl ToleranceSpec {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            criterion: self.criterion * factor,
            pointwise: self.pointwise * factor,
            distance_slack: self.distance_slack * factor,
            ftc: self.ftc * factor,
        }
    }
}

/// Parses and validates a scenario; every error carries the offending key path.
pub fn parse(text: &str) -> Result<Scenario, SchemaError> {
    let de = toml::Deserializer::parse(text).map_err(|e| SchemaError::at("", e.message()))?;
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        SchemaError::at(path, e.into_inner().message())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn check_finite(path: &str, x: f64) -> Result<(), SchemaError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(SchemaError::at(path, format!("{x} is not finite")))
    }
}

impl Scenario {
    fn validate(&self) -> Result<(), SchemaError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(SchemaError::at("name", "must be non-empty and use only [A-Za-z0-9_-]"));
        }
        match self.mode {
            Mode::Fem => {
                let space = self.space.as_ref().ok_or_else(|| SchemaError::at("space", "required in fem mode"))?;
                if space.cells < 2 {
                    return Err(SchemaError::at("space.cells", "at least 2 cells required"));
                }
                if self.matrix.is_some() {
                    return Err(SchemaError::at("matrix", "not allowed in fem mode"));
                }
                let form = self.form.as_ref().ok_or_else(|| SchemaError::at("form", "required in fem mode"))?;
                if form.coefficient.lower_bound().is_nan() || form.coefficient.lower_bound() <= 0.0 {
                    return Err(SchemaError::at("form.coefficient", "coefficient must stay positive"));
                }
                if space.mass != Mass::Lumped && self.set.is_pointwise() {
                    return Err(SchemaError::at("space.mass", "box and cone sets require lumped mass"));
                }
            }
            Mode::Matrix => {
                if self.space.is_some() {
                    return Err(SchemaError::at("space", "not allowed in matrix mode"));
                }
                if self.form.is_some() {
                    return Err(SchemaError::at("form", "not allowed in matrix mode"));
                }
                let m = self.matrix.as_ref().ok_or_else(|| SchemaError::at("matrix", "required in matrix mode"))?;
                let n = m.operator.len();
                if n == 0 {
                    return Err(SchemaError::at("matrix.operator", "must not be empty"));
                }
                let fields = [
                    ("matrix.operator", Some(&m.operator)),
                    ("matrix.operator_rate", m.operator_rate.as_ref()),
                    ("matrix.h_gram", m.h_gram.as_ref()),
                    ("matrix.v_gram", m.v_gram.as_ref()),
                ];
                for (path, rows) in fields {
                    let Some(rows) = rows else { continue };
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(SchemaError::at(path, format!("must be a {n}x{n} matrix")));
                    }
                    for x in rows.iter().flatten() {
                        check_finite(path, *x)?;
                    }
                }
                if matches!(self.initial, InitialSpec::Sine { .. } | InitialSpec::Cosine { .. }) {
                    return Err(SchemaError::at("initial.kind", "sine and cosine need fem mode"));
                }
            }
        }
        let g = &self.grid;
        check_finite("grid.a", g.a)?;
        check_finite("grid.b", g.b)?;
        if g.b <= g.a {
            return Err(SchemaError::at("grid.b", "must exceed grid.a"));
        }
        if let InitialSpec::Random { lo, hi } = self.initial {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SchemaError::at("initial", "random range needs finite lo < hi"));
            }
        }
        match &self.set {
            SetSpec::Box { lo, hi } if lo.is_nan() || hi.is_nan() || lo > hi => {
                return Err(SchemaError::at("set.hi", "must be at least set.lo"));
            }
            SetSpec::Ball { radius, .. } if !radius.is_finite() || *radius <= 0.0 => {
                return Err(SchemaError::at("set.radius", "must be positive and finite"));
            }
            _ => {}
        }
        if let RhsSpec::Semilinear {
            rate,
            probes,
            tolerance,
            max_iterations,
            ..
        } = self.rhs
        {
            check_finite("rhs.rate", rate)?;
            if probes < 4 {
                return Err(SchemaError::at("rhs.probes", "at least 4 probes required"));
            }
            if tolerance.is_nan() || tolerance <= 0.0 {
                return Err(SchemaError::at("rhs.tolerance", "must be positive"));
            }
            if max_iterations == 0 {
                return Err(SchemaError::at("rhs.max_iterations", "must be positive"));
            }
        }
        if self.checks.probe == Some(0) {
            return Err(SchemaError::at("checks.probe", "must be positive"));
        }
        if let Some(parts) = self.checks.probe {
            if !self.grid.steps.0.is_multiple_of(parts) {
                return Err(SchemaError::at("checks.probe", "must divide grid.steps"));
            }
        }
        if self.checks.sampling == Some(0) {
            return Err(SchemaError::at("checks.sampling", "must be positive"));
        }
        let t = &self.tolerances;
        for (path, x) in [
            ("tolerances.criterion", t.criterion),
            ("tolerances.pointwise", t.pointwise),
            ("tolerances.distance_slack", t.distance_slack),
            ("tolerances.ftc", t.ftc),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(SchemaError::at(path, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}
