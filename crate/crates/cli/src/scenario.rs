//! Scenario files: TOML documents describing a system, its initial data and the
//! residual checks to run. The grammar is described by `schema/scenario.schema.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::Deserialize;
use sundman::fields::IntegratorOptions;
use sundman::mechanics::ForceField;
use sundman::riemann::MetricField;
use sundman::{ScalarField, VectorField};
use toml::Spanned;

use crate::expr::{self, Display, Expr, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    Flow,
    Sundman,
    Geodesic,
    Conformal,
    Mechanical,
    Newtonian,
    Jacobi,
    Kepler,
    Linstruct,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Flow,
        Kind::Sundman,
        Kind::Geodesic,
        Kind::Conformal,
        Kind::Mechanical,
        Kind::Newtonian,
        Kind::Jacobi,
        Kind::Kepler,
        Kind::Linstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Flow => "flow",
            Kind::Sundman => "sundman",
            Kind::Geodesic => "geodesic",
            Kind::Conformal => "conformal",
            Kind::Mechanical => "mechanical",
            Kind::Newtonian => "newtonian",
            Kind::Jacobi => "jacobi",
            Kind::Kepler => "kepler",
            Kind::Linstruct => "linstruct",
        }
    }

    /// Check names understood by this kind.
    pub fn checks(self) -> &'static [&'static str] {
        match self {
            Kind::Flow => &["first_integral_drift", "first_integral_residual"],
            Kind::Sundman => &["orbit_distance", "first_integral_drift", "reparametrization_deviation"],
            Kind::Geodesic => &[
                "speed_drift",
                "affine_lambda",
                "sundman_geodesic_residual",
                "christoffel_error",
                "killing_residual",
                "autoparallel_residual",
                "pregeodesic_residual",
                "pregeodesic_factor_error",
                "rescaled_autoparallel",
            ],
            Kind::Conformal => &["christoffel_consistency", "nabla_residual"],
            Kind::Mechanical => &[
                "energy_drift",
                "reparametrized_residual",
                "conformal_residual",
                "energy_constancy",
            ],
            Kind::Newtonian => &["nabla_force_residual", "sundman_newton_residual"],
            Kind::Jacobi => &[
                "orbit_distance",
                "energy_drift",
                "arc_length_residual",
                "gradient_identity",
                "pregeodesic_residual",
            ],
            Kind::Kepler => &[
                "sundman_linear_deviation",
                "analytic_deviation",
                "time_map_deviation",
                "tau_period_error",
                "t_period_error",
                "fixed_energy_residual",
                "energy_drift",
            ],
            Kind::Linstruct => &[
                "linearity_residual",
                "affinity_residual",
                "eigen_residual",
                "linearization_residual",
                "factor_residual",
            ],
        }
    }
}

impl std::str::FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// A scenario that failed to load; `line`/`column` are 1-based when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn plain(message: impl Into<String>) -> Self {
        Self {
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Max(f64),
    Min(f64),
}

impl Bound {
    pub fn admits(self, value: f64) -> bool {
        match self {
            Bound::Max(t) => value <= t,
            Bound::Min(t) => value >= t,
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Bound::Max(t) | Bound::Min(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Annulus { count: usize, r_min: f64, r_max: f64, seed_offset: u64 },
    Box { count: usize, bounds: Vec<(f64, f64)>, seed_offset: u64 },
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeplerSpec {
    pub k: f64,
    pub l: f64,
    pub energy: f64,
    pub r0: Option<f64>,
    pub rdot0: f64,
    pub periods: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelRef {
    pub point: Vec<f64>,
    /// `(i, j, k, Γ^i_jk)` with 0-based indices.
    pub entries: Vec<(usize, usize, usize, f64)>,
}

/// A validated scenario with every expression compiled.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    pub description: Option<String>,
    pub coordinates: Vec<String>,
    pub field: Option<VectorField>,
    pub field2: Option<VectorField>,
    pub factor: Option<ScalarField>,
    pub factors: Vec<ScalarField>,
    pub metric: Option<MetricField>,
    pub potential: Option<ScalarField>,
    pub conformal: Option<ScalarField>,
    pub force: Option<ForceField>,
    pub first_integral: Option<ScalarField>,
    pub pregeodesic_factor: Option<ScalarField>,
    pub q0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub energy: Option<f64>,
    pub rescale_velocity: bool,
    pub affine_scale: f64,
    pub eigen_tolerance: f64,
    pub integrator: IntegratorOptions,
    pub samples: Option<Samples>,
    pub kepler: Option<KeplerSpec>,
    pub christoffel: Vec<ChristoffelRef>,
    pub checks: Vec<Check>,
    pub output_dir: Option<PathBuf>,
    pub source: String,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }
}

// Raw TOML layer.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    name: String,
    kind: Spanned<String>,
    description: Option<String>,
    #[serde(default)]
    coordinates: Vec<String>,
    #[serde(default)]
    velocities: Vec<String>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    system: RawSystem,
    initial: Option<RawInitial>,
    horizon: Option<Spanned<Number>>,
    integrator: Option<RawIntegrator>,
    samples: Option<RawSamples>,
    kepler: Option<RawKepler>,
    jacobi: Option<RawJacobi>,
    geodesic: Option<RawGeodesic>,
    linstruct: Option<RawLinstruct>,
    #[serde(default)]
    checks: BTreeMap<String, Spanned<RawBound>>,
    output: Option<RawOutput>,
    #[serde(default)]
    reference: RawReference,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    field: Option<Spanned<VecSource>>,
    field2: Option<Spanned<VecSource>>,
    factor: Option<Spanned<String>>,
    #[serde(default)]
    factors: Vec<Spanned<String>>,
    metric: Option<Vec<Vec<Spanned<String>>>>,
    metric_diagonal: Option<Spanned<VecSource>>,
    partials: Option<Spanned<String>>,
    potential: Option<Spanned<String>>,
    conformal: Option<Spanned<String>>,
    force: Option<Spanned<VecSource>>,
    first_integral: Option<Spanned<String>>,
    pregeodesic_factor: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    q: Option<Vec<Spanned<Number>>>,
    v: Option<Vec<Spanned<Number>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    rtol: Option<f64>,
    atol: Option<f64>,
    max_step: Option<f64>,
    max_steps: Option<usize>,
    method: Option<String>,
    step: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSamples {
    region: String,
    count: Option<usize>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    bounds: Option<Vec<(f64, f64)>>,
    points: Option<Vec<Vec<Spanned<Number>>>>,
    #[serde(default)]
    seed_offset: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKepler {
    k: Spanned<Number>,
    l: Spanned<Number>,
    energy: Spanned<Number>,
    r0: Option<Spanned<Number>>,
    rdot0: Option<Spanned<Number>>,
    periods: Option<Spanned<Number>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJacobi {
    energy: Spanned<Number>,
    #[serde(default = "yes")]
    rescale_velocity: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeodesic {
    affine_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinstruct {
    eigen_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawBound {
    Max(f64),
    Table {
        max: Option<f64>,
        min: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    #[serde(default)]
    christoffel: Vec<RawChristoffel>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChristoffel {
    point: Vec<Spanned<Number>>,
    values: Vec<(usize, usize, usize, Spanned<Number>)>,
}

/// A literal number or a constant expression such as `"2*pi"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Number {
    Value(f64),
    Expr(String),
}

/// A vector of expressions, written either as an array of strings or as a tuple
/// string `"(a, b)"`.
#[derive(Debug)]
enum VecSource {
    Tuple(String),
    List(Vec<Spanned<String>>),
}

impl<'de> Deserialize<'de> for VecSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = VecSource;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a tuple string like \"(-y, x)\" or an array of expression strings")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<VecSource, E> {
                Ok(VecSource::Tuple(s.to_string()))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<VecSource, A::Error> {
                let mut items = Vec::new();
                while let Some(s) = seq.next_element::<Spanned<String>>()? {
                    items.push(s);
                }
                Ok(VecSource::List(items))
            }
        }
        d.deserialize_any(V)
    }
}

/// Source text with helpers to turn byte offsets into line/column positions.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.text.len());
        let before = &self.text[..offset];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    fn error_at(&self, offset: usize, message: impl Into<String>) -> ScenarioError {
        let (l, c) = self.position(offset);
        ScenarioError {
            line: Some(l),
            column: Some(c),
            message: message.into(),
        }
    }

    /// Offset of the first character inside a string literal starting at `start`.
    fn content_start(&self, start: usize) -> usize {
        let rest = &self.text[start.min(self.text.len())..];
        if rest.starts_with("\"\"\"") || rest.starts_with("'''") {
            start + 3
        } else {
            start + 1
        }
    }

    fn scalar(&self, s: &Spanned<String>, scope: &Scope, what: &str) -> Result<Expr, ScenarioError> {
        expr::parse(s.get_ref(), scope).map_err(|e| {
            self.error_at(
                self.content_start(s.span().start) + e.offset,
                format!("in {what}: {}", e.message),
            )
        })
    }

    fn vector(&self, s: &Spanned<VecSource>, scope: &Scope, what: &str) -> Result<Vec<Expr>, ScenarioError> {
        match s.get_ref() {
            VecSource::Tuple(t) => expr::parse_tuple(t, scope).map_err(|e| {
                self.error_at(
                    self.content_start(s.span().start) + e.offset,
                    format!("in {what}: {}", e.message),
                )
            }),
            VecSource::List(items) => items.iter().map(|i| self.scalar(i, scope, what)).collect(),
        }
    }

    fn number(&self, n: &Spanned<Number>, scope: &Scope, what: &str) -> Result<f64, ScenarioError> {
        let v = match n.get_ref() {
            Number::Value(v) => *v,
            Number::Expr(s) => {
                let e = expr::parse(s, scope).map_err(|e| {
                    self.error_at(
                        self.content_start(n.span().start) + e.offset,
                        format!("in {what}: {}", e.message),
                    )
                })?;
                if !e.is_constant() {
                    return Err(self.error_at(n.span().start, format!("{what} must be a constant expression")));
                }
                e.eval(&[])
            }
        };
        if !v.is_finite() {
            return Err(self.error_at(n.span().start, format!("{what} is not finite")));
        }
        Ok(v)
    }

    fn numbers(&self, ns: &[Spanned<Number>], scope: &Scope, what: &str) -> Result<Vec<f64>, ScenarioError> {
        ns.iter().map(|n| self.number(n, scope, what)).collect()
    }
}

fn scalar_field(e: Expr, dim: usize) -> ScalarField {
    let grad: Vec<Expr> = (0..dim).map(|i| e.diff(i)).collect();
    ScalarField::new(dim, move |q| e.eval(q))
        .with_gradient(move |q| grad.iter().map(|g| g.eval(q)).collect())
}

fn vector_field(es: Vec<Expr>) -> VectorField {
    let n = es.len();
    let jac: Vec<Vec<Expr>> = es.iter().map(|e| (0..n).map(|j| e.diff(j)).collect()).collect();
    VectorField::new(n, move |q| es.iter().map(|e| e.eval(q)).collect()).with_jacobian(move |q| {
        DMatrix::from_fn(n, n, |i, j| jac[i][j].eval(q))
    })
}

fn metric_field(entries: Vec<Vec<Expr>>, symbolic: bool) -> MetricField {
    let n = entries.len();
    let m = {
        let entries = entries.clone();
        MetricField::new(n, move |q| DMatrix::from_fn(n, n, |i, j| entries[i][j].eval(q)))
    };
    if !symbolic {
        return m;
    }
    let partials: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|k| {
            entries
                .iter()
                .map(|row| row.iter().map(|e| e.diff(k)).collect())
                .collect()
        })
        .collect();
    m.with_partials(move |q| {
        partials
            .iter()
            .map(|p| DMatrix::from_fn(n, n, |i, j| p[i][j].eval(q)))
            .collect()
    })
}

fn dim_error(src: &Source, at: usize, what: &str, expected: usize, found: usize) -> ScenarioError {
    src.error_at(
        at,
        format!("{what} has {found} components but the scenario has dimension {expected}"),
    )
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: Raw = toml::from_str(text).map_err(|e| {
        let mut err = ScenarioError::plain(e.message().to_string());
        if let Some(span) = e.span() {
            let (l, c) = Source { text }.position(span.start);
            err.line = Some(l);
            err.column = Some(c);
        }
        err
    })?;
    let src = Source { text };
    let kind: Kind = raw
        .kind
        .get_ref()
        .parse()
        .map_err(|m: String| src.error_at(raw.kind.span().start, m))?;
    if raw.name.is_empty()
        || !raw.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        return Err(ScenarioError::plain(format!(
            "scenario name `{}` must be non-empty and use only letters, digits, `-` and `_`",
            raw.name
        )));
    }

    let mut scope = Scope::new(&raw.coordinates);
    for (k, v) in &raw.params {
        if raw.coordinates.contains(k) || raw.velocities.contains(k) {
            return Err(ScenarioError::plain(format!("parameter `{k}` shadows a coordinate")));
        }
        scope = scope.with_constant(k, *v);
    }
    let consts = Scope::new(&[]);
    let consts = raw.params.iter().fold(consts, |s, (k, v)| s.with_constant(k, *v));

    let mut names = std::collections::BTreeSet::new();
    for c in raw.coordinates.iter().chain(&raw.velocities) {
        if !names.insert(c) {
            return Err(ScenarioError::plain(format!("variable `{c}` is declared twice")));
        }
        if c == "pi" || !c.chars().next().is_some_and(|h| h.is_ascii_alphabetic() || h == '_') {
            return Err(ScenarioError::plain(format!("`{c}` is not a usable variable name")));
        }
    }
    let dim = raw.coordinates.len();
    if dim == 0 && kind != Kind::Kepler {
        return Err(ScenarioError::plain("`coordinates` must list at least one coordinate"));
    }
    if !raw.velocities.is_empty() && raw.velocities.len() != dim {
        return Err(ScenarioError::plain(format!(
            "`velocities` lists {} names for {dim} coordinates",
            raw.velocities.len()
        )));
    }

    let sys = &raw.system;
    let vector = |s: &Option<Spanned<VecSource>>, what: &str| -> Result<Option<VectorField>, ScenarioError> {
        let Some(s) = s else { return Ok(None) };
        let es = src.vector(s, &scope, what)?;
        if es.len() != dim {
            return Err(dim_error(&src, s.span().start, what, dim, es.len()));
        }
        Ok(Some(vector_field(es)))
    };
    let scalar = |s: &Option<Spanned<String>>, what: &str| -> Result<Option<ScalarField>, ScenarioError> {
        s.as_ref()
            .map(|s| src.scalar(s, &scope, what).map(|e| scalar_field(e, dim)))
            .transpose()
    };

    let field = vector(&sys.field, "system.field")?;
    let field2 = vector(&sys.field2, "system.field2")?;
    let factor = scalar(&sys.factor, "system.factor")?;
    let factors = sys
        .factors
        .iter()
        .map(|s| src.scalar(s, &scope, "system.factors").map(|e| scalar_field(e, dim)))
        .collect::<Result<Vec<_>, _>>()?;
    let potential = scalar(&sys.potential, "system.potential")?;
    let conformal = scalar(&sys.conformal, "system.conformal")?;
    let first_integral = scalar(&sys.first_integral, "system.first_integral")?;
    let pregeodesic_factor = scalar(&sys.pregeodesic_factor, "system.pregeodesic_factor")?;

    let symbolic = match &sys.partials {
        None => true,
        Some(p) => match p.get_ref().as_str() {
            "symbolic" => true,
            "finite-difference" => false,
            other => {
                return Err(src.error_at(
                    p.span().start,
                    format!("unknown partials mode `{other}` (expected `symbolic` or `finite-difference`)"),
                ))
            }
        },
    };
    let metric = match (&sys.metric, &sys.metric_diagonal) {
        (Some(_), Some(d)) => {
            return Err(src.error_at(d.span().start, "give either `metric` or `metric_diagonal`, not both"))
        }
        (Some(rows), None) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(ScenarioError::plain(format!(
                    "`system.metric` must be a {dim}×{dim} matrix of expressions"
                )));
            }
            let es = rows
                .iter()
                .map(|r| r.iter().map(|s| src.scalar(s, &scope, "system.metric")).collect())
                .collect::<Result<Vec<Vec<Expr>>, _>>()?;
            for i in 0..dim {
                for j in i + 1..dim {
                    if es[i][j] != es[j][i] {
                        return Err(src.error_at(
                            rows[j][i].span().start,
                            format!(
                                "metric is not symmetric (invariant g_ij = g_ji): entry ({},{}) is `{}` but entry ({},{}) is `{}`",
                                i + 1,
                                j + 1,
                                Display { expr: &es[i][j], vars: scope.vars() },
                                j + 1,
                                i + 1,
                                Display { expr: &es[j][i], vars: scope.vars() },
                            ),
                        ));
                    }
                }
            }
            Some(metric_field(es, symbolic))
        }
        (None, Some(d)) => {
            let es = src.vector(d, &scope, "system.metric_diagonal")?;
            if es.len() != dim {
                return Err(dim_error(&src, d.span().start, "system.metric_diagonal", dim, es.len()));
            }
            let full = (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { es[i].clone() } else { Expr::Num(0.0) }).collect())
                .collect();
            Some(metric_field(full, symbolic))
        }
        (None, None) => None,
    };

    let force = match &sys.force {
        None => None,
        Some(s) => {
            let mut all = raw.coordinates.clone();
            all.extend(raw.velocities.iter().cloned());
            let fscope = raw
                .params
                .iter()
                .fold(Scope::new(&all), |sc, (k, v)| sc.with_constant(k, *v));
            let es = src.vector(s, &fscope, "system.force")?;
            if es.len() != dim {
                return Err(dim_error(&src, s.span().start, "system.force", dim, es.len()));
            }
            if es.iter().any(|e| e.uses_vars(dim..2 * dim)) {
                Some(ForceField::velocity_dependent(dim, move |q, v| {
                    let x: Vec<f64> = q.iter().chain(v).copied().collect();
                    es.iter().map(|e| e.eval(&x)).collect()
                }))
            } else {
                let pad = vec![0.0; dim];
                Some(ForceField::basic(dim, move |q| {
                    let x: Vec<f64> = q.iter().chain(&pad).copied().collect();
                    es.iter().map(|e| e.eval(&x)).collect()
                }))
            }
        }
    };

    let (q0, v0) = match &raw.initial {
        None => (None, None),
        Some(init) => {
            let q = init.q.as_ref().map(|q| src.numbers(q, &consts, "initial.q")).transpose()?;
            let v = init.v.as_ref().map(|v| src.numbers(v, &consts, "initial.v")).transpose()?;
            for (what, x) in [("initial.q", &q), ("initial.v", &v)] {
                if let Some(x) = x {
                    if x.len() != dim {
                        return Err(ScenarioError::plain(format!(
                            "{what} has {} components but the scenario has dimension {dim}",
                            x.len()
                        )));
                    }
                }
            }
            (q, v)
        }
    };
    let horizon = raw
        .horizon
        .as_ref()
        .map(|h| {
            let v = src.number(h, &consts, "horizon")?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(src.error_at(h.span().start, "horizon must be positive"))
            }
        })
        .transpose()?;

    let mut integrator = IntegratorOptions::default();
    if let Some(i) = &raw.integrator {
        if let Some(v) = i.rtol {
            integrator.rtol = v;
        }
        if let Some(v) = i.atol {
            integrator.atol = v;
        }
        if let Some(v) = i.max_step {
            integrator = integrator.with_max_step(v);
        }
        if let Some(v) = i.max_steps {
            integrator = integrator.with_max_steps(v);
        }
        match i.method.as_deref() {
            None | Some("dopri45") => {}
            Some("rk4") => {
                let step = i
                    .step
                    .ok_or_else(|| ScenarioError::plain("integrator method `rk4` needs `step`"))?;
                integrator = integrator.fixed_rk4(step);
            }
            Some(m) => {
                return Err(ScenarioError::plain(format!(
                    "unknown integrator method `{m}` (expected `dopri45` or `rk4`)"
                )))
            }
        }
        let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0 && x.is_finite());
        if !(positive(i.rtol) && positive(i.atol) && positive(i.max_step) && positive(i.step)) {
            return Err(ScenarioError::plain("integrator tolerances and steps must be positive"));
        }
    }

    let samples = raw
        .samples
        .as_ref()
        .map(|s| -> Result<Samples, ScenarioError> {
            let count = || {
                s.count
                    .filter(|c| *c > 0)
                    .ok_or_else(|| ScenarioError::plain("samples.count must be a positive integer"))
            };
            match s.region.as_str() {
                "annulus" => {
                    let (a, b) = (s.r_min.unwrap_or(0.5), s.r_max.unwrap_or(2.0));
                    if !(a > 0.0 && b >= a) {
                        return Err(ScenarioError::plain("annulus needs 0 < r_min <= r_max"));
                    }
                    Ok(Samples::Annulus { count: count()?, r_min: a, r_max: b, seed_offset: s.seed_offset })
                }
                "box" => {
                    let bounds = s
                        .bounds
                        .clone()
                        .ok_or_else(|| ScenarioError::plain("box samples need `bounds`"))?;
                    if bounds.len() != dim || bounds.iter().any(|(a, b)| !(a < b)) {
                        return Err(ScenarioError::plain(format!(
                            "box samples need {dim} increasing `[low, high]` bounds"
                        )));
                    }
                    Ok(Samples::Box { count: count()?, bounds, seed_offset: s.seed_offset })
                }
                "points" => {
                    let pts = s
                        .points
                        .as_ref()
                        .ok_or_else(|| ScenarioError::plain("point samples need `points`"))?
                        .iter()
                        .map(|p| src.numbers(p, &consts, "samples.points"))
                        .collect::<Result<Vec<_>, _>>()?;
                    if pts.is_empty() || pts.iter().any(|p| p.len() != dim) {
                        return Err(ScenarioError::plain(format!(
                            "samples.points must be a non-empty list of {dim}-component points"
                        )));
                    }
                    Ok(Samples::Points(pts))
                }
                r => Err(ScenarioError::plain(format!(
                    "unknown sample region `{r}` (expected `annulus`, `box` or `points`)"
                ))),
            }
        })
        .transpose()?;

    let kepler = raw
        .kepler
        .as_ref()
        .map(|k| -> Result<KeplerSpec, ScenarioError> {
            let opt = |n: &Option<Spanned<Number>>, what: &str| {
                n.as_ref().map(|n| src.number(n, &consts, what)).transpose()
            };
            let periods = opt(&k.periods, "kepler.periods")?.unwrap_or(1.0);
            if !(periods > 0.0) {
                return Err(ScenarioError::plain("kepler.periods must be positive"));
            }
            Ok(KeplerSpec {
                k: src.number(&k.k, &consts, "kepler.k")?,
                l: src.number(&k.l, &consts, "kepler.l")?,
                energy: src.number(&k.energy, &consts, "kepler.energy")?,
                r0: opt(&k.r0, "kepler.r0")?,
                rdot0: opt(&k.rdot0, "kepler.rdot0")?.unwrap_or(0.0),
                periods,
            })
        })
        .transpose()?;

    let (energy, rescale_velocity) = match &raw.jacobi {
        Some(j) => (Some(src.number(&j.energy, &consts, "jacobi.energy")?), j.rescale_velocity),
        None => (None, true),
    };
    let affine_scale = raw.geodesic.as_ref().and_then(|g| g.affine_scale).unwrap_or(2.5);
    if !(affine_scale > 0.0) {
        return Err(ScenarioError::plain("geodesic.affine_scale must be positive"));
    }
    let eigen_tolerance = raw.linstruct.as_ref().and_then(|l| l.eigen_tolerance).unwrap_or(1e-8);
    if !(eigen_tolerance > 0.0) {
        return Err(ScenarioError::plain("linstruct.eigen_tolerance must be positive"));
    }

    let christoffel = raw
        .reference
        .christoffel
        .iter()
        .map(|c| -> Result<ChristoffelRef, ScenarioError> {
            let point = src.numbers(&c.point, &consts, "reference.christoffel.point")?;
            if point.len() != dim {
                return Err(ScenarioError::plain("reference.christoffel.point has the wrong dimension"));
            }
            let entries = c
                .values
                .iter()
                .map(|(i, j, k, v)| {
                    let ok = (1..=dim).contains(i) && (1..=dim).contains(j) && (1..=dim).contains(k);
                    if !ok {
                        return Err(src.error_at(v.span().start, format!("Christoffel index out of range 1..={dim}")));
                    }
                    Ok((i - 1, j - 1, k - 1, src.number(v, &consts, "reference.christoffel.values")?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ChristoffelRef { point, entries })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut checks = Vec::new();
    for (name, b) in &raw.checks {
        if !kind.checks().contains(&name.as_str()) {
            return Err(src.error_at(
                b.span().start,
                format!(
                    "check `{name}` is not available for kind `{}` (available: {})",
                    kind.name(),
                    kind.checks().join(", ")
                ),
            ));
        }
        let bound = match b.get_ref() {
            RawBound::Max(t) => Bound::Max(*t),
            RawBound::Table { max: Some(t), min: None } => Bound::Max(*t),
            RawBound::Table { max: None, min: Some(t) } => Bound::Min(*t),
            _ => {
                return Err(src.error_at(b.span().start, format!("check `{name}` needs exactly one of `max` or `min`")))
            }
        };
        let t = bound.tolerance();
        if !(t.is_finite() && (t > 0.0 || matches!(bound, Bound::Min(_)) && t >= 0.0)) {
            return Err(src.error_at(b.span().start, format!("tolerance of check `{name}` must be positive")));
        }
        checks.push(Check {
            name: name.clone(),
            bound,
        });
    }
    if checks.is_empty() {
        return Err(ScenarioError::plain("a scenario needs at least one entry under [checks]"));
    }

    let scenario = Scenario {
        name: raw.name,
        kind,
        description: raw.description,
        coordinates: raw.coordinates,
        field,
        field2,
        factor,
        factors,
        metric,
        potential,
        conformal,
        force,
        first_integral,
        pregeodesic_factor,
        q0,
        v0,
        horizon,
        energy,
        rescale_velocity,
        affine_scale,
        eigen_tolerance,
        integrator,
        samples,
        kepler,
        christoffel,
        checks,
        output_dir: raw.output.and_then(|o| o.dir),
        source: text.to_string(),
    };
    require_inputs(&scenario)?;
    Ok(scenario)
}

/// Every requested check must have the inputs it reads.
fn require_inputs(s: &Scenario) -> Result<(), ScenarioError> {
    let has = |present: bool, what: &str, check: &str| {
        if present {
            Ok(())
        } else {
            Err(ScenarioError::plain(format!("check `{check}` needs {what}")))
        }
    };
    let trajectory = s.q0.is_some() && s.horizon.is_some();
    let second_order = trajectory && s.v0.is_some();
    match s.kind {
        Kind::Flow | Kind::Sundman => {
            has(s.field.is_some(), "system.field", "any")?;
            has(trajectory, "initial.q and horizon", "any")?;
            if s.kind == Kind::Sundman {
                has(s.factor.is_some(), "system.factor", "any")?;
            }
        }
        Kind::Geodesic | Kind::Conformal | Kind::Mechanical | Kind::Newtonian | Kind::Jacobi => {
            has(s.metric.is_some(), "a metric", "any")?;
        }
        Kind::Kepler => has(s.kepler.is_some(), "a [kepler] table", "any")?,
        Kind::Linstruct => {
            has(s.field.is_some(), "system.field", "any")?;
            has(s.samples.is_some(), "[samples]", "any")?;
        }
    }
    for c in &s.checks {
        let n = c.name.as_str();
        match (s.kind, n) {
            (_, "first_integral_drift") => has(s.first_integral.is_some(), "system.first_integral", n)?,
            (Kind::Flow, "first_integral_residual") => {
                has(s.first_integral.is_some() && s.samples.is_some(), "system.first_integral and [samples]", n)?
            }
            (Kind::Geodesic, "speed_drift" | "affine_lambda") => has(second_order, "initial.q, initial.v and horizon", n)?,
            (Kind::Geodesic, "sundman_geodesic_residual") => {
                has(second_order && s.factor.is_some(), "initial data, horizon and system.factor", n)?
            }
            (Kind::Geodesic, "christoffel_error") => has(!s.christoffel.is_empty(), "[[reference.christoffel]]", n)?,
            (Kind::Geodesic, "killing_residual" | "autoparallel_residual" | "pregeodesic_residual") => {
                has(s.field.is_some() && s.samples.is_some(), "system.field and [samples]", n)?
            }
            (Kind::Geodesic, "pregeodesic_factor_error") => has(
                s.field.is_some() && s.samples.is_some() && s.pregeodesic_factor.is_some(),
                "system.field, system.pregeodesic_factor and [samples]",
                n,
            )?,
            (Kind::Geodesic, "rescaled_autoparallel") => has(
                s.field.is_some() && s.q0.is_some() && s.horizon.is_some()
                    && (s.pregeodesic_factor.is_some() || s.samples.is_some()),
                "system.field, initial.q, horizon and system.pregeodesic_factor or [samples]",
                n,
            )?,
            (Kind::Conformal, "christoffel_consistency") => {
                has(s.conformal.is_some() && s.samples.is_some(), "system.conformal and [samples]", n)?
            }
            (Kind::Conformal, "nabla_residual") => has(
                s.conformal.is_some() && s.samples.is_some() && s.field.is_some() && s.field2.is_some(),
                "system.conformal, system.field, system.field2 and [samples]",
                n,
            )?,
            (Kind::Mechanical, "energy_drift" | "conformal_residual") => {
                has(s.potential.is_some() && second_order, "system.potential, initial data and horizon", n)?;
                if n == "conformal_residual" {
                    has(s.conformal.is_some(), "system.conformal", n)?;
                }
            }
            (Kind::Mechanical, "reparametrized_residual") => has(
                s.potential.is_some() && second_order && s.factor.is_some(),
                "system.potential, system.factor, initial data and horizon",
                n,
            )?,
            (Kind::Mechanical, "energy_constancy") => has(
                s.potential.is_some() && s.field.is_some() && s.samples.is_some(),
                "system.potential, system.field and [samples]",
                n,
            )?,
            (Kind::Newtonian, _) => {
                has(s.force.is_some() && s.field.is_some() && s.samples.is_some(), "system.force, system.field and [samples]", n)?;
                if n == "sundman_newton_residual" {
                    has(!s.factors.is_empty(), "system.factors", n)?;
                }
            }
            (Kind::Jacobi, "gradient_identity" | "pregeodesic_residual") => {
                has(s.potential.is_some() && s.energy.is_some() && s.samples.is_some(), "system.potential, [jacobi] and [samples]", n)?;
                if n == "pregeodesic_residual" {
                    has(s.field.is_some(), "system.field", n)?;
                }
            }
            (Kind::Jacobi, _) => has(
                s.potential.is_some() && s.energy.is_some() && second_order,
                "system.potential, [jacobi], initial data and horizon",
                n,
            )?,
            (Kind::Linstruct, "factor_residual") => has(s.factor.is_some(), "system.factor", n)?,
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLOW: &str = r#"
name = "rotation"
kind = "flow"
coordinates = ["x", "y"]
horizon = "2*pi"

[system]
field = "(-y, x)"
first_integral = "x^2 + y^2"

[initial]
q = [1.0, 0.0]

[checks]
first_integral_drift = 1e-9
"#;

    #[test]
    fn minimal_flow() {
        let s = parse_scenario(FLOW).unwrap();
        assert_eq!(s.kind, Kind::Flow);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.field.as_ref().unwrap().eval(&[1.0, 2.0]).unwrap(), vec![-2.0, 1.0]);
        assert!((s.horizon.unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(s.checks, vec![Check { name: "first_integral_drift".into(), bound: Bound::Max(1e-9) }]);
    }

    #[test]
    fn kepler_parameters() {
        let s = parse_scenario(
            r#"
name = "k"
kind = "kepler"
[kepler]
k = 1
l = 1
energy = -0.125
[checks]
analytic_deviation = 1e-6
"#,
        )
        .unwrap();
        let k = s.kepler.unwrap();
        assert_eq!((k.k, k.l, k.energy, k.r0, k.periods), (1.0, 1.0, -0.125, None, 1.0));
    }

    #[test]
    fn asymmetric_metric_is_rejected() {
        let text = r#"
name = "bad"
kind = "geodesic"
coordinates = ["x", "y"]
[system]
metric = [["1", "x"], ["y", "1"]]
[reference.christoffel]
[checks]
speed_drift = 1e-7
"#;
        let text = text.replace("[reference.christoffel]\n", "");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.message.contains("not symmetric"), "{e}");
        assert!(e.message.contains("g_ij = g_ji"));
        assert_eq!(e.line, Some(6));
    }

    #[test]
    fn expression_errors_have_positions() {
        let text = FLOW.replace("\"x^2 + y^2\"", "\"x^2 + tan(y)\"");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.message.contains("unknown function `tan`"), "{e}");
        let line = text.lines().position(|l| l.contains("tan(")).unwrap() + 1;
        let col = text.lines().nth(line - 1).unwrap().find("tan").unwrap() + 1;
        assert_eq!((e.line, e.column), (Some(line), Some(col)));
    }

    #[test]
    fn dimension_mismatch() {
        let text = FLOW.replace("\"(-y, x)\"", "\"(-y, x, 1)\"");
        assert!(parse_scenario(&text).unwrap_err().message.contains("3 components"));
    }

    #[test]
    fn unknown_check_and_missing_inputs() {
        let e = parse_scenario(&FLOW.replace("first_integral_drift = 1e-9", "orbit_distance = 1e-9")).unwrap_err();
        assert!(e.message.contains("not available"), "{e}");
        let e = parse_scenario(&FLOW.replace("first_integral = \"x^2 + y^2\"\n", "")).unwrap_err();
        assert!(e.message.contains("system.first_integral"), "{e}");
        let e = parse_scenario(&FLOW.replace("1e-9", "-1.0")).unwrap_err();
        assert!(e.message.contains("positive"), "{e}");
        assert!(parse_scenario("name = \"x\"\nkind = \"spline\"\n").unwrap_err().message.contains("unknown kind"));
        assert!(parse_scenario("name = \"x\"\nkind = \"flow\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn velocity_dependent_force() {
        let s = parse_scenario(
            r#"
name = "drag"
kind = "newtonian"
coordinates = ["x", "y"]
velocities = ["u", "w"]
[system]
metric_diagonal = ["1", "1"]
force = ["-u", "-w"]
field = ["1", "0"]
[samples]
region = "annulus"
count = 4
[checks]
nabla_force_residual = 1e-8
"#,
        )
        .unwrap();
        let f = s.force.unwrap();
        assert!(!f.is_basic());
        assert_eq!(f.eval(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), vec![-1.0, -2.0]);
    }
}
