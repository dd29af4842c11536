//! Assembly of the vertex-centered finite volume system and of the P1 finite
//! element system, Dirichlet elimination, and error functionals.
//!
//! Both operators are first assembled on all vertices (`n x n`, rows of
//! boundary vertices left empty for the finite volume operator), then reduced
//! to the interior vertices with the Dirichlet values moved to the right-hand
//! side.

use thiserror::Error;

use crate::dual::DualMesh;
use crate::geometry::{self, Point};
use crate::mesh::Triangulation;
use crate::problem::ProblemSpec;
use crate::quadrature::{self, GAUSS2, SEVEN_POINT, THREE_POINT};
use crate::sparse::{self, CsrMatrix, LinearSolveReport, SolveOptions, SolverError};

/// Subdivision depth for quadrature on elements touching a singular point.
const SINGULAR_DEPTH: u32 = 4;

#[derive(Debug, Error)]
pub enum DiscretizationError {
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("the problem has no exact solution")]
    MissingExact,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Interior vertices and their unknown indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeMap {
    /// Vertex id of every unknown.
    pub free: Vec<usize>,
    /// Unknown index of every vertex, `None` on the boundary.
    pub index: Vec<Option<usize>>,
}

impl NodeMap {
    pub fn new(mesh: &Triangulation) -> Self {
        let mut free = Vec::new();
        let mut index = vec![None; mesh.n_vertices()];
        for v in 0..mesh.n_vertices() {
            if !mesh.is_boundary_vertex(v) {
                index[v] = Some(free.len());
                free.push(v);
            }
        }
        Self { free, index }
    }

    pub fn n_unknowns(&self) -> usize {
        self.free.len()
    }

    /// Restricts nodal values to the unknowns.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| nodal[v]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub node_map: NodeMap,
    /// Dirichlet values at boundary vertices, zero elsewhere.
    pub lifted_dirichlet: Vec<f64>,
}

impl AssembledSystem {
    /// Nodal vector from values of the unknowns and the Dirichlet data.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut nodal = self.lifted_dirichlet.clone();
        for (k, &v) in self.node_map.free.iter().enumerate() {
            nodal[v] = x[k];
        }
        nodal
    }
}

/// Whether element `t` has a singular point of the problem in its closure.
pub(crate) fn touches_singularity(problem: &ProblemSpec, mesh: &Triangulation, t: usize) -> bool {
    if problem.singular_points.is_empty() {
        return false;
    }
    let tri = mesh.triangle(t);
    problem.singular_points.iter().any(|&s| {
        geometry::barycentric_coords(&tri, s).iter().all(|&l| l >= -1e-12)
    })
}

/// `∫_T f` by the degree-5 rule, subdivided on elements touching a
/// singular point.
pub(crate) fn element_integral(
    problem: &ProblemSpec,
    mesh: &Triangulation,
    t: usize,
    mut f: impl FnMut(Point) -> f64,
) -> f64 {
    let tri = mesh.triangle(t);
    if touches_singularity(problem, mesh, t) {
        quadrature::integrate_subdivided(&SEVEN_POINT, &tri, SINGULAR_DEPTH, &mut f)
    } else {
        SEVEN_POINT.integrate(&tri, mesh.area(t), f)
    }
}

/// The finite volume operator on all vertices: entry `(i, j)` is
/// `-∫_{∂V_i} A ∇φ_j · n ds` for interior `i`; boundary rows are empty.
/// Fluxes use 2-point Gauss quadrature on every dual segment.
pub fn fvm_operator(dual: &DualMesh<'_>, problem: &ProblemSpec) -> CsrMatrix {
    let mesh = dual.mesh();
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_elements());
    for t in 0..mesh.n_elements() {
        let el = mesh.element(t);
        let grads = mesh.hat_gradients(t);
        let tag = mesh.region_tag(t);
        for k in 0..3 {
            if mesh.is_boundary_vertex(el[k]) {
                continue;
            }
            // ∫ A n ds over both segments of V_k ∩ T
            let mut an = [0.0; 2];
            for seg in dual.local_segments(t, k) {
                for (s, w) in GAUSS2.points.iter().zip(GAUSS2.weights) {
                    let x = geometry::lerp(seg.start, seg.end, *s);
                    let a = problem.coefficient_at(x, tag);
                    let v = geometry::mat_vec(&a, seg.unit_normal);
                    an[0] += w * seg.length * v[0];
                    an[1] += w * seg.length * v[1];
                }
            }
            for j in 0..3 {
                triplets.push((el[k], el[j], -geometry::dot(grads[j], an)));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).expect("indices are vertex ids")
}

/// The P1 stiffness matrix on all vertices, with `A` integrated by the
/// degree-2 rule.
pub fn fem_operator(mesh: &Triangulation, problem: &ProblemSpec) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_elements());
    for t in 0..mesh.n_elements() {
        let el = mesh.element(t);
        let grads = mesh.hat_gradients(t);
        let tag = mesh.region_tag(t);
        let tri = mesh.triangle(t);
        let area = mesh.area(t);
        let mut a_int = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                a_int[r][c] = THREE_POINT.integrate(&tri, area, |x| problem.coefficient_at(x, tag)[r][c]);
            }
        }
        for i in 0..3 {
            let ag = geometry::mat_vec(&a_int, grads[i]);
            for j in 0..3 {
                triplets.push((el[j], el[i], geometry::dot(grads[j], ag)));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).expect("indices are vertex ids")
}

fn dirichlet_values(mesh: &Triangulation, problem: &ProblemSpec) -> Vec<f64> {
    (0..mesh.n_vertices())
        .map(|v| {
            if mesh.is_boundary_vertex(v) {
                problem.dirichlet_at(mesh.vertex(v))
            } else {
                0.0
            }
        })
        .collect()
}

/// Restricts a full operator to interior rows and columns, moving the
/// Dirichlet columns to the right-hand side.
fn reduce(full: &CsrMatrix, load: &[f64], node_map: NodeMap, lifted: Vec<f64>) -> AssembledSystem {
    let n = node_map.n_unknowns();
    let mut rhs = vec![0.0; n];
    let mut triplets = Vec::with_capacity(full.nnz());
    for (k, &v) in node_map.free.iter().enumerate() {
        rhs[k] = load[v];
        let (cols, vals) = full.row(v);
        for (&j, &a) in cols.iter().zip(vals) {
            match node_map.index[j] {
                Some(c) => triplets.push((k, c, a)),
                None => rhs[k] -= a * lifted[j],
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(n, n, &triplets).expect("indices are unknowns");
    AssembledSystem {
        matrix,
        rhs,
        node_map,
        lifted_dirichlet: lifted,
    }
}

/// The finite volume system: flux balance over every interior box with
/// right-hand side `∫_{V_i} f`.
pub fn assemble_fvm(dual: &DualMesh<'_>, problem: &ProblemSpec) -> AssembledSystem {
    let mesh = dual.mesh();
    let full = fvm_operator(dual, problem);
    let mut load = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_elements() {
        let el = mesh.element(t);
        let tag = mesh.region_tag(t);
        let singular = touches_singularity(problem, mesh, t);
        for k in 0..3 {
            if mesh.is_boundary_vertex(el[k]) {
                continue;
            }
            for tri in dual.sub_triangles(t, k) {
                let mut f = |x: Point| problem.source_at(x, tag);
                load[el[k]] += if singular {
                    quadrature::integrate_subdivided(&SEVEN_POINT, &tri, SINGULAR_DEPTH, &mut f)
                } else {
                    SEVEN_POINT.integrate(&tri, quadrature::triangle_area(&tri), f)
                };
            }
        }
    }
    reduce(&full, &load, NodeMap::new(mesh), dirichlet_values(mesh, problem))
}

/// The P1 Galerkin system with right-hand side `∫ f φ_i`.
pub fn assemble_fem(mesh: &Triangulation, problem: &ProblemSpec) -> AssembledSystem {
    let full = fem_operator(mesh, problem);
    let mut load = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_elements() {
        let el = mesh.element(t);
        let tag = mesh.region_tag(t);
        let tri = mesh.triangle(t);
        for k in 0..3 {
            if mesh.is_boundary_vertex(el[k]) {
                continue;
            }
            load[el[k]] += element_integral(problem, mesh, t, |x| {
                let l = geometry::barycentric_coords(&tri, x);
                problem.source_at(x, tag) * l[k]
            });
        }
    }
    reduce(&full, &load, NodeMap::new(mesh), dirichlet_values(mesh, problem))
}

/// Solves an assembled system and returns the full nodal vector.
pub fn solve_system(
    system: &AssembledSystem,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport), DiscretizationError> {
    if system.node_map.n_unknowns() == 0 {
        let report = LinearSolveReport {
            method: "none",
            iterations: 0,
            relative_residual: 0.0,
            wall_seconds: 0.0,
        };
        return Ok((system.lifted_dirichlet.clone(), report));
    }
    let (x, report) = sparse::solve(&system.matrix, &system.rhs, opts)?;
    Ok((system.expand(&x), report))
}

fn check_len(mesh: &Triangulation, nodal: &[f64]) -> Result<(), DiscretizationError> {
    if nodal.len() != mesh.n_vertices() {
        return Err(DiscretizationError::LengthMismatch {
            expected: mesh.n_vertices(),
            got: nodal.len(),
        });
    }
    Ok(())
}

/// Gradient of the piecewise linear function `nodal` on element `t`.
#[inline]
pub fn element_gradient(mesh: &Triangulation, t: usize, nodal: &[f64]) -> Point {
    let el = mesh.element(t);
    let g = mesh.hat_gradients(t);
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += nodal[el[k]] * g[k][0];
        out[1] += nodal[el[k]] * g[k][1];
    }
    out
}

/// Squared energy error `∫_T A ∇(u - v) · ∇(u - v)` per element.
pub fn energy_error_sq_per_element(
    mesh: &Triangulation,
    problem: &ProblemSpec,
    nodal: &[f64],
) -> Result<Vec<f64>, DiscretizationError> {
    check_len(mesh, nodal)?;
    if problem.exact.is_none() {
        return Err(DiscretizationError::MissingExact);
    }
    Ok((0..mesh.n_elements())
        .map(|t| {
            let gv = element_gradient(mesh, t, nodal);
            let tag = mesh.region_tag(t);
            element_integral(problem, mesh, t, |x| {
                let gu = problem.exact_gradient(x).expect("exact solution present");
                let e = geometry::sub(gu, gv);
                geometry::dot(e, geometry::mat_vec(&problem.coefficient_at(x, tag), e))
            })
        })
        .collect())
}

/// `|||u - v|||`, the energy norm of the error against the exact solution.
pub fn energy_error(mesh: &Triangulation, problem: &ProblemSpec, nodal: &[f64]) -> Result<f64, DiscretizationError> {
    Ok(energy_error_sq_per_element(mesh, problem, nodal)?.iter().sum::<f64>().sqrt())
}

/// Observed constant of the quasi-Galerkin defect.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectReport {
    /// `|A(u_fem - u_fvm, v)|`.
    pub defect: f64,
    /// `|||v|||`.
    pub test_energy: f64,
    pub osc: f64,
    /// `defect / (test_energy * osc)`; `None` when the denominator vanishes.
    pub constant: Option<f64>,
}

/// Evaluates `|A(u_fem - u_fvm, v)| / (|||v||| osc)` with the bilinear form of
/// the assembled finite element system `fem`, for which the exact solution
/// satisfies `A(u - u_fem, v) = 0`. Boundary values of `test` are ignored.
pub fn galerkin_defect(
    fem: &AssembledSystem,
    u_fvm: &[f64],
    u_fem: &[f64],
    test: &[f64],
    osc: f64,
) -> Result<DefectReport, DiscretizationError> {
    let n = fem.lifted_dirichlet.len();
    for len in [u_fvm.len(), u_fem.len(), test.len()] {
        if len != n {
            return Err(DiscretizationError::LengthMismatch { expected: n, got: len });
        }
    }
    let nm = &fem.node_map;
    let w: Vec<f64> = nm.free.iter().map(|&v| u_fem[v] - u_fvm[v]).collect();
    let v = nm.restrict(test);
    let kw = fem.matrix.spmv(&w)?;
    let kv = fem.matrix.spmv(&v)?;
    let defect = v.iter().zip(&kw).map(|(a, b)| a * b).sum::<f64>().abs();
    let test_energy = v.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
    let denom = test_energy * osc;
    Ok(DefectReport {
        defect,
        test_energy,
        osc,
        constant: (denom > 0.0).then(|| defect / denom),
    })
}
