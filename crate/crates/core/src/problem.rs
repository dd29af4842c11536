//! Model problems `-div(A ∇u) = f` with Dirichlet data.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::geometry::{self, Mat2, Point};
use crate::mesh::generators::criss_cross;
use crate::mesh::{MeshError, MeshFile, Triangulation};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type RegionScalarField = Arc<dyn Fn(Point, i32) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point) -> Mat2 + Send + Sync>;

/// Relative finite-difference step (times the domain diameter) for derived
/// sources, coefficient divergences and gradients.
pub const FD_RELATIVE_STEP: f64 = 1e-4;

/// Tolerance of the coefficient symmetry check.
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("problem config: {0}")]
    Parse(String),
    #[error("unknown builtin problem `{0}` (known: square-smooth, lshape-singular)")]
    UnknownBuiltin(String),
    #[error("coefficient is not symmetric at ({x:.6}, {y:.6}): A12 = {a12}, A21 = {a21}")]
    NonSymmetricCoefficient { x: f64, y: f64, a12: f64, a21: f64 },
    #[error("coefficient is not positive definite at ({x:.6}, {y:.6}) (smallest eigenvalue {lambda})")]
    NotPositiveDefinite { x: f64, y: f64, lambda: f64 },
    #[error("no coefficient given for region tag {0}")]
    MissingRegion(i32),
    #[error("point ({0}, {1}) lies outside the domain")]
    EvaluationOutsideDomain(f64, f64),
    #[error("a derived source requires an exact solution")]
    DerivedWithoutExact,
    #[error("expression `{source_text}`: {error}")]
    Expr { source_text: String, error: ExprError },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("problem config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientKind {
    Analytic,
    ElementwiseConstant,
}

/// The diffusion matrix `A`.
#[derive(Clone)]
pub enum Coefficient {
    Analytic {
        matrix: MatrixField,
        /// `d_j = Σ_i ∂_i A_ij`; differenced numerically when absent.
        divergence: Option<VectorField>,
    },
    /// Constant on every element, looked up by region tag.
    PerRegion(BTreeMap<i32, Mat2>),
}

impl Coefficient {
    pub fn analytic(matrix: impl Fn(Point) -> Mat2 + Send + Sync + 'static) -> Self {
        Coefficient::Analytic {
            matrix: Arc::new(matrix),
            divergence: None,
        }
    }

    pub fn identity() -> Self {
        Coefficient::PerRegion(BTreeMap::from([(0, [[1.0, 0.0], [0.0, 1.0]])]))
    }

    pub fn constant(a: Mat2) -> Self {
        Coefficient::PerRegion(BTreeMap::from([(0, a)]))
    }

    pub fn kind(&self) -> CoefficientKind {
        match self {
            Coefficient::Analytic { .. } => CoefficientKind::Analytic,
            Coefficient::PerRegion(_) => CoefficientKind::ElementwiseConstant,
        }
    }

    #[inline]
    pub fn eval(&self, x: Point, region: i32) -> Mat2 {
        match self {
            Coefficient::Analytic { matrix, .. } => matrix(x),
            Coefficient::PerRegion(map) => match map.get(&region) {
                Some(a) => *a,
                None => panic!("no coefficient for region {region}"),
            },
        }
    }

    /// `Σ_i ∂_i A_ij` at `x`, so that `div(A g) = d · g` for constant `g`.
    pub fn divergence(&self, x: Point, region: i32, step: f64) -> Point {
        match self {
            Coefficient::Analytic {
                divergence: Some(d), ..
            } => d(x),
            Coefficient::Analytic { matrix, .. } => {
                let dx = central_difference(|y| matrix(y), x, 0, step);
                let dy = central_difference(|y| matrix(y), x, 1, step);
                [dx[0][0] + dy[1][0], dx[0][1] + dy[1][1]]
            }
            Coefficient::PerRegion(_) => {
                let _ = (x, region);
                [0.0, 0.0]
            }
        }
    }
}

/// Exact solution with an optional analytic gradient.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: Option<VectorField>,
}

/// How the right-hand side is obtained.
#[derive(Clone)]
pub enum Source {
    Given(RegionScalarField),
    /// `f = -div(A ∇u)` of the exact solution, by finite differences.
    DerivedFromExact,
}

impl Source {
    pub fn function(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Source::Given(Arc::new(move |x, _| f(x)))
    }

    pub fn constant(c: f64) -> Self {
        Source::Given(Arc::new(move |_, _| c))
    }
}

/// A fully specified model problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub label: String,
    pub initial_mesh: Triangulation,
    pub coefficient: Coefficient,
    pub source: Source,
    pub dirichlet: ScalarField,
    pub exact: Option<ExactSolution>,
    /// Points where the exact solution is singular; finite-difference
    /// stencils shrink near them.
    pub singular_points: Vec<Point>,
    /// Declared `(λ_min, λ_max)` of the coefficient, if known.
    pub lambda_bounds: Option<(f64, f64)>,
    fd_step: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("label", &self.label)
            .field("n_elements", &self.initial_mesh.n_elements())
            .field("coefficient", &self.coefficient.kind())
            .field("exact", &self.exact.is_some())
            .field("singular_points", &self.singular_points)
            .field("lambda_bounds", &self.lambda_bounds)
            .finish()
    }
}

impl ProblemSpec {
    /// Assembles and validates a problem: per-region coefficients must cover
    /// every region tag, and the coefficient must be symmetric positive
    /// definite at the vertices and centroids of the initial mesh.
    pub fn new(
        label: impl Into<String>,
        initial_mesh: Triangulation,
        coefficient: Coefficient,
        source: Source,
        dirichlet: ScalarField,
        exact: Option<ExactSolution>,
    ) -> Result<Self, ProblemError> {
        if matches!(source, Source::DerivedFromExact) && exact.is_none() {
            return Err(ProblemError::DerivedWithoutExact);
        }
        if let Coefficient::PerRegion(map) = &coefficient {
            for &tag in initial_mesh.region_tags() {
                if !map.contains_key(&tag) {
                    return Err(ProblemError::MissingRegion(tag));
                }
            }
        }
        let fd_step = FD_RELATIVE_STEP * initial_mesh.diameter();
        let spec = Self {
            label: label.into(),
            initial_mesh,
            coefficient,
            source,
            dirichlet,
            exact,
            singular_points: Vec::new(),
            lambda_bounds: None,
            fd_step,
        };
        spec.check_coefficient()?;
        Ok(spec)
    }

    pub fn with_singular_points(mut self, points: Vec<Point>) -> Self {
        self.singular_points = points;
        self
    }

    pub fn with_lambda_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.lambda_bounds = Some((lo, hi));
        self
    }

    fn check_coefficient(&self) -> Result<(), ProblemError> {
        let mesh = &self.initial_mesh;
        for t in 0..mesh.n_elements() {
            let p = mesh.triangle(t);
            let c = geometry::centroid(&p);
            for x in [p[0], p[1], p[2], c] {
                let a = self.coefficient.eval(x, mesh.region_tag(t));
                let scale = a[0][0].abs().max(a[1][1].abs()).max(1.0);
                if (a[0][1] - a[1][0]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(ProblemError::NonSymmetricCoefficient {
                        x: x[0],
                        y: x[1],
                        a12: a[0][1],
                        a21: a[1][0],
                    });
                }
                let (lo, _) = geometry::sym_eigenvalues(&a);
                if lo.is_nan() || lo <= 0.0 {
                    return Err(ProblemError::NotPositiveDefinite {
                        x: x[0],
                        y: x[1],
                        lambda: lo,
                    });
                }
            }
        }
        Ok(())
    }

    /// Finite-difference step used at `x`: the base step, shrunk to a quarter
    /// of the distance to the nearest singular point.
    #[inline]
    pub fn fd_step_at(&self, x: Point) -> f64 {
        let mut h = self.fd_step;
        for &s in &self.singular_points {
            h = h.min(0.25 * geometry::distance(x, s));
        }
        h
    }

    #[inline]
    pub fn coefficient_at(&self, x: Point, region: i32) -> Mat2 {
        self.coefficient.eval(x, region)
    }

    #[inline]
    pub fn coefficient_divergence(&self, x: Point, region: i32) -> Point {
        self.coefficient.divergence(x, region, self.fd_step_at(x))
    }

    #[inline]
    pub fn source_at(&self, x: Point, region: i32) -> f64 {
        match &self.source {
            Source::Given(f) => f(x, region),
            Source::DerivedFromExact => {
                let coef = |y: Point| self.coefficient.eval(y, region);
                let grad = |y: Point| self.exact_gradient(y).expect("derived source has an exact solution");
                derive_source(&grad, &coef, x, self.fd_step_at(x))
            }
        }
    }

    /// The source at `x`, rejecting points outside the domain.
    pub fn source_checked(&self, x: Point) -> Result<f64, ProblemError> {
        let t = self.locate(x).ok_or(ProblemError::EvaluationOutsideDomain(x[0], x[1]))?;
        Ok(self.source_at(x, self.initial_mesh.region_tag(t)))
    }

    #[inline]
    pub fn dirichlet_at(&self, x: Point) -> f64 {
        (self.dirichlet)(x)
    }

    pub fn exact_value(&self, x: Point) -> Option<f64> {
        self.exact.as_ref().map(|e| (e.u)(x))
    }

    pub fn exact_gradient(&self, x: Point) -> Option<Point> {
        let exact = self.exact.as_ref()?;
        Some(match &exact.grad {
            Some(g) => g(x),
            None => {
                let h = self.fd_step_at(x);
                [
                    central_difference(|y| (exact.u)(y), x, 0, h),
                    central_difference(|y| (exact.u)(y), x, 1, h),
                ]
            }
        })
    }

    /// Initial element containing `x` (boundary included), if any.
    pub fn locate(&self, x: Point) -> Option<usize> {
        let mesh = &self.initial_mesh;
        (0..mesh.n_elements()).find(|&t| {
            let b = geometry::barycentric_coords(&mesh.triangle(t), x);
            b.iter().all(|&l| l >= -1e-12)
        })
    }

    pub fn contains(&self, x: Point) -> bool {
        self.locate(x).is_some()
    }

    /// Extrema of the eigenvalues of `A` over an `n x n` grid of the
    /// bounding box restricted to the domain: `(min λ_min, max λ_max)`.
    pub fn sampled_eigenvalue_range(&self, n: usize) -> EigenvalueSample {
        let (lo, hi) = self.initial_mesh.bounding_box();
        let mut out = EigenvalueSample {
            min_lower: f64::INFINITY,
            max_upper: f64::NEG_INFINITY,
            max_lower: f64::NEG_INFINITY,
            points: 0,
        };
        for j in 0..n {
            for i in 0..n {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
                ];
                let Some(t) = self.locate(x) else { continue };
                let (a, b) = geometry::sym_eigenvalues(&self.coefficient_at(x, self.initial_mesh.region_tag(t)));
                out.min_lower = out.min_lower.min(a);
                out.max_upper = out.max_upper.max(b);
                out.max_lower = out.max_lower.max(a);
                out.points += 1;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenvalueSample {
    /// Smallest eigenvalue seen.
    pub min_lower: f64,
    /// Largest eigenvalue seen.
    pub max_upper: f64,
    /// Largest value of the smaller eigenvalue.
    pub max_lower: f64,
    pub points: usize,
}

/// Fourth-order central difference `∂_axis g(x)`.
pub fn central_difference<T: FdValue>(g: impl Fn(Point) -> T, x: Point, axis: usize, h: f64) -> T {
    let shift = |s: f64| {
        let mut y = x;
        y[axis] += s * h;
        g(y)
    };
    let (m2, m1, p1, p2) = (shift(-2.0), shift(-1.0), shift(1.0), shift(2.0));
    T::combine(&[(m2, 1.0), (m1, -8.0), (p1, 8.0), (p2, -1.0)], 1.0 / (12.0 * h))
}

/// Values that can be linearly combined by a difference stencil.
pub trait FdValue: Copy {
    fn combine(terms: &[(Self, f64)], scale: f64) -> Self;
}

impl FdValue for f64 {
    fn combine(terms: &[(Self, f64)], scale: f64) -> Self {
        scale * terms.iter().map(|(v, w)| w * v).sum::<f64>()
    }
}

impl FdValue for Point {
    fn combine(terms: &[(Self, f64)], scale: f64) -> Self {
        let mut out = [0.0; 2];
        for (v, w) in terms {
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
        [scale * out[0], scale * out[1]]
    }
}

impl FdValue for Mat2 {
    fn combine(terms: &[(Self, f64)], scale: f64) -> Self {
        let mut out = [[0.0; 2]; 2];
        for (v, w) in terms {
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += w * v[i][j];
                }
            }
        }
        for row in &mut out {
            row[0] *= scale;
            row[1] *= scale;
        }
        out
    }
}

/// `f(x) = -div(A ∇u)(x)` by fourth-order central differences of the flux
/// `A ∇u` with step `step`.
pub fn derive_source(
    grad_u: &dyn Fn(Point) -> Point,
    coefficient: &dyn Fn(Point) -> Mat2,
    x: Point,
    step: f64,
) -> f64 {
    let flux = |y: Point| geometry::mat_vec(&coefficient(y), grad_u(y));
    let dx = central_difference(flux, x, 0, step);
    let dy = central_difference(flux, x, 1, step);
    -(dx[0] + dy[1])
}

/// Smooth problem on `(-1, 1)^2`: `u = (1 - 10|x|^2) exp(-5|x|^2)` with
/// `A = [[10 + cos x1, 9 x1 x2], [9 x1 x2, 10 + sin x2]]`.
pub fn square_smooth() -> ProblemSpec {
    let mesh = criss_cross(&[(0, 0), (1, 0), (0, 1), (1, 1)], [-1.0, -1.0], 1.0)
        .expect("builtin mesh is valid");
    let u = |x: Point| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (1.0 - 10.0 * r2) * (-5.0 * r2).exp()
    };
    let grad = |x: Point| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let s = (-5.0 * r2).exp() * (100.0 * r2 - 30.0);
        [x[0] * s, x[1] * s]
    };
    let coefficient = Coefficient::Analytic {
        matrix: Arc::new(|x: Point| {
            let off = 9.0 * x[0] * x[1];
            [[10.0 + x[0].cos(), off], [off, 10.0 + x[1].sin()]]
        }),
        divergence: Some(Arc::new(|x: Point| {
            [9.0 * x[0] - x[0].sin(), 9.0 * x[1] + x[1].cos()]
        })),
    };
    ProblemSpec::new(
        "square-smooth",
        mesh,
        coefficient,
        Source::DerivedFromExact,
        Arc::new(u),
        Some(ExactSolution {
            u: Arc::new(u),
            grad: Some(Arc::new(grad)),
        }),
    )
    .expect("builtin problem is valid")
    .with_lambda_bounds(0.82293, 19.69215)
}

/// L-shaped domain `(-1, 1)^2 \ [0, 1] x [-1, 0]` with `u = r^{2/3} sin(2φ/3)`
/// and `A = [[5 + ρ cos x1, ρ^2], [ρ^2, 5 + ρ sin x2]]`, `ρ = |x|^2`.
/// `u` vanishes on both edges meeting at the reentrant corner.
pub fn lshape_singular() -> ProblemSpec {
    let mesh = criss_cross(&[(0, 0), (0, 1), (1, 1)], [-1.0, -1.0], 1.0)
        .expect("builtin mesh is valid");
    let u = |x: Point| {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return 0.0;
        }
        r.powf(2.0 / 3.0) * (2.0 * crate::expr::polar_angle(x) / 3.0).sin()
    };
    let grad = |x: Point| {
        let r = x[0].hypot(x[1]);
        let phi = crate::expr::polar_angle(x);
        let s = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
        [-s * (phi / 3.0).sin(), s * (phi / 3.0).cos()]
    };
    let coefficient = Coefficient::Analytic {
        matrix: Arc::new(|x: Point| {
            let rho = x[0] * x[0] + x[1] * x[1];
            let off = rho * rho;
            [[5.0 + rho * x[0].cos(), off], [off, 5.0 + rho * x[1].sin()]]
        }),
        divergence: Some(Arc::new(|x: Point| {
            let rho = x[0] * x[0] + x[1] * x[1];
            [
                2.0 * x[0] * x[0].cos() - rho * x[0].sin() + 4.0 * rho * x[1],
                4.0 * rho * x[0] + 2.0 * x[1] * x[1].sin() + rho * x[1].cos(),
            ]
        })),
    };
    ProblemSpec::new(
        "lshape-singular",
        mesh,
        coefficient,
        Source::DerivedFromExact,
        Arc::new(u),
        Some(ExactSolution {
            u: Arc::new(u),
            grad: Some(Arc::new(grad)),
        }),
    )
    .expect("builtin problem is valid")
    .with_singular_points(vec![[0.0, 0.0]])
    .with_lambda_bounds(0.46689, 10.39310)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 2] = ["square-smooth", "lshape-singular"];

pub fn builtin(name: &str) -> Result<ProblemSpec, ProblemError> {
    match name {
        "square-smooth" => Ok(square_smooth()),
        "lshape-singular" => Ok(lshape_singular()),
        other => Err(ProblemError::UnknownBuiltin(other.to_string())),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProblemConfig {
    Builtin { builtin: String },
    Custom(Box<CustomConfig>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomConfig {
    mesh: MeshFile,
    coefficient: CoefficientConfig,
    source: ExprValue,
    #[serde(default)]
    exact: Option<ExprValue>,
    #[serde(default)]
    dirichlet: Option<ExprValue>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    singular_points: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CoefficientConfig {
    Matrix([[ExprValue; 2]; 2]),
    PerRegion { per_region: BTreeMap<String, [[f64; 2]; 2]> },
}

#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum ExprValue {
    Number(f64),
    Text(String),
}

impl ExprValue {
    fn parse(&self) -> Result<Expr, ProblemError> {
        match self {
            ExprValue::Number(c) => Ok(Expr::constant(*c)),
            ExprValue::Text(s) => Expr::parse(s).map_err(|error| ProblemError::Expr {
                source_text: s.clone(),
                error,
            }),
        }
    }
}

/// Parses a problem config: either `{"builtin": "<name>"}` or a custom
/// problem with mesh, coefficient and expression-valued data.
pub fn problem_from_json_str(text: &str) -> Result<ProblemSpec, ProblemError> {
    let config: ProblemConfig =
        serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
    match config {
        ProblemConfig::Builtin { builtin: name } => builtin(&name),
        ProblemConfig::Custom(c) => custom_problem(*c),
    }
}

pub fn problem_from_json(path: impl AsRef<Path>) -> Result<ProblemSpec, ProblemError> {
    let text = std::fs::read_to_string(path)?;
    problem_from_json_str(&text)
}

fn custom_problem(c: CustomConfig) -> Result<ProblemSpec, ProblemError> {
    let mesh = Triangulation::from_mesh_file(c.mesh)?;
    let coefficient = match c.coefficient {
        CoefficientConfig::Matrix(m) => {
            let e = [
                [m[0][0].parse()?, m[0][1].parse()?],
                [m[1][0].parse()?, m[1][1].parse()?],
            ];
            let constants: Option<Vec<f64>> = e.iter().flatten().map(Expr::as_constant).collect();
            match constants {
                Some(v) => Coefficient::constant([[v[0], v[1]], [v[2], v[3]]]),
                None => Coefficient::analytic(move |x| {
                    [[e[0][0].eval(x), e[0][1].eval(x)], [e[1][0].eval(x), e[1][1].eval(x)]]
                }),
            }
        }
        CoefficientConfig::PerRegion { per_region } => {
            let mut map = BTreeMap::new();
            for (k, v) in per_region {
                let tag: i32 = k
                    .parse()
                    .map_err(|_| ProblemError::Parse(format!("region tag `{k}` is not an integer")))?;
                map.insert(tag, v);
            }
            Coefficient::PerRegion(map)
        }
    };
    // a single constant matrix applies to every region
    let coefficient = match coefficient {
        Coefficient::PerRegion(map) if map.len() == 1 && map.contains_key(&0) => {
            let a = map[&0];
            let tags: std::collections::BTreeSet<i32> = mesh.region_tags().iter().copied().collect();
            Coefficient::PerRegion(tags.into_iter().map(|t| (t, a)).chain([(0, a)]).collect())
        }
        other => other,
    };

    let exact = match &c.exact {
        Some(v) => {
            let e = v.parse()?;
            Some(ExactSolution {
                u: Arc::new(move |x| e.eval(x)),
                grad: None,
            })
        }
        None => None,
    };
    let source = match &c.source {
        ExprValue::Text(s) if s == "derived" => Source::DerivedFromExact,
        v => {
            let e = v.parse()?;
            Source::function(move |x| e.eval(x))
        }
    };
    let dirichlet: ScalarField = match (&c.dirichlet, &exact) {
        (Some(v), _) => {
            let e = v.parse()?;
            Arc::new(move |x| e.eval(x))
        }
        (None, Some(ex)) => ex.u.clone(),
        (None, None) => Arc::new(|_| 0.0),
    };
    let label = c.label.unwrap_or_else(|| "custom".to_string());
    Ok(ProblemSpec::new(label, mesh, coefficient, source, dirichlet, exact)?
        .with_singular_points(c.singular_points))
}
