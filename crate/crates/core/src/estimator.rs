//! Weighted-residual error estimator and data oscillations.
//!
//! For a piecewise linear `v` the indicator of element `T` is
//!
//! ```text
//! eta(T)^2 = h_T^2 ‖f + div(A ∇v)‖²_T + h_T Σ_{F ⊂ ∂T interior} ‖[A ∇v · n]‖²_F
//! ```
//!
//! with `h_T = |T|^{1/2}`. An interior edge enters the indicators of both of
//! its elements. The oscillation `osc(T)^2` is the same expression with the
//! integral mean (per element, per whole edge) subtracted before squaring.

use thiserror::Error;

use crate::discretization::element_gradient;
use crate::dual::DualMesh;
use crate::geometry::{self, Point};
use crate::mesh::Triangulation;
use crate::problem::ProblemSpec;
use crate::quadrature::{self, GAUSS3, SEVEN_POINT};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("edge {0} lies on the boundary and carries no jump")]
    BoundaryEdge(usize),
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("element {0} out of range")]
    ElementOutOfRange(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorOutput {
    pub eta_sq: Vec<f64>,
    pub osc_sq: Vec<f64>,
    pub eta_sq_total: f64,
    pub osc_sq_total: f64,
}

impl EstimatorOutput {
    pub fn eta(&self) -> f64 {
        self.eta_sq_total.sqrt()
    }

    pub fn osc(&self) -> f64 {
        self.osc_sq_total.sqrt()
    }

    /// `(η(U)², osc(U)²)` for the element subset `U`.
    pub fn subset_total(&self, elements: &[usize]) -> Result<(f64, f64), EstimatorError> {
        let mut out = (0.0, 0.0);
        for &t in elements {
            if t >= self.eta_sq.len() {
                return Err(EstimatorError::ElementOutOfRange(t));
            }
            out.0 += self.eta_sq[t];
            out.1 += self.osc_sq[t];
        }
        Ok(out)
    }
}

/// `x ↦ f(x) + div(A ∇v)(x)` on one element.
#[derive(Clone, Copy)]
pub struct VolumeResidual<'a> {
    problem: &'a ProblemSpec,
    grad: Point,
    region: i32,
}

impl VolumeResidual<'_> {
    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        // ∇v is constant, so div(A ∇v) = (Σ_i ∂_i A_ij) ∂_j v
        let d = self.problem.coefficient_divergence(x, self.region);
        self.problem.source_at(x, self.region) + geometry::dot(d, self.grad)
    }
}

pub fn volume_residual<'a>(
    mesh: &Triangulation,
    problem: &'a ProblemSpec,
    nodal: &[f64],
    element: usize,
) -> Result<VolumeResidual<'a>, EstimatorError> {
    check(mesh, nodal)?;
    if element >= mesh.n_elements() {
        return Err(EstimatorError::ElementOutOfRange(element));
    }
    Ok(VolumeResidual {
        problem,
        grad: element_gradient(mesh, element, nodal),
        region: mesh.region_tag(element),
    })
}

/// `x ↦ (A ∇v)|_T · n_T + (A ∇v)|_{T'} · n_{T'}` on an interior edge.
#[derive(Clone, Copy)]
pub struct EdgeJump<'a> {
    problem: &'a ProblemSpec,
    grads: [Point; 2],
    regions: [i32; 2],
    /// Outward normal of the first element.
    normal: Point,
    pub endpoints: [Point; 2],
}

impl EdgeJump<'_> {
    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        let a = self.problem.coefficient_at(x, self.regions[0]);
        let b = if self.regions[1] == self.regions[0] {
            a
        } else {
            self.problem.coefficient_at(x, self.regions[1])
        };
        let fa = geometry::mat_vec(&a, self.grads[0]);
        let fb = geometry::mat_vec(&b, self.grads[1]);
        geometry::dot(geometry::sub(fa, fb), self.normal)
    }
}

/// Outward unit normal of element `t` on its local edge `k`.
fn outward_normal(mesh: &Triangulation, t: usize, k: usize) -> Point {
    let p = mesh.triangle(t);
    let d = geometry::sub(p[(k + 1) % 3], p[k]);
    geometry::scale(1.0 / geometry::norm(d), geometry::rot_cw(d))
}

pub fn edge_jump<'a>(
    mesh: &Triangulation,
    problem: &'a ProblemSpec,
    nodal: &[f64],
    edge: usize,
) -> Result<EdgeJump<'a>, EstimatorError> {
    check(mesh, nodal)?;
    let e = mesh.edge(edge);
    if e.is_boundary() {
        return Err(EstimatorError::BoundaryEdge(edge));
    }
    let [t, s] = e.elements;
    let k = mesh.element_edges(t).iter().position(|&x| x == edge).expect("edge belongs to its element");
    Ok(EdgeJump {
        problem,
        grads: [element_gradient(mesh, t, nodal), element_gradient(mesh, s, nodal)],
        regions: [mesh.region_tag(t), mesh.region_tag(s)],
        normal: outward_normal(mesh, t, k),
        endpoints: [mesh.vertex(e.vertices[0]), mesh.vertex(e.vertices[1])],
    })
}

fn check(mesh: &Triangulation, nodal: &[f64]) -> Result<(), EstimatorError> {
    if nodal.len() != mesh.n_vertices() {
        return Err(EstimatorError::LengthMismatch {
            expected: mesh.n_vertices(),
            got: nodal.len(),
        });
    }
    Ok(())
}

/// `(∫ g², ∫ (g - mean g)²)` from quadrature values `g_q` with weights `w_q`
/// summing to one and domain measure `measure`.
#[inline]
fn squares(values: &[f64], weights: &[f64], measure: f64) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let mut full = 0.0;
    let mut centered = 0.0;
    for (v, w) in values.iter().zip(weights) {
        full += w * v * v;
        centered += w * (v - mean) * (v - mean);
    }
    (measure * full, measure * centered)
}

/// Element indicators and oscillations of `nodal`: degree-5 quadrature on
/// elements, 3-point Gauss on edges, edge means over the whole edge.
pub fn compute_estimator(
    mesh: &Triangulation,
    problem: &ProblemSpec,
    nodal: &[f64],
) -> Result<EstimatorOutput, EstimatorError> {
    check(mesh, nodal)?;
    let n = mesh.n_elements();
    let mut eta_sq = vec![0.0; n];
    let mut osc_sq = vec![0.0; n];
    let mut values = [0.0; 7];
    for t in 0..n {
        let r = VolumeResidual {
            problem,
            grad: element_gradient(mesh, t, nodal),
            region: mesh.region_tag(t),
        };
        let tri = mesh.triangle(t);
        for (v, b) in values.iter_mut().zip(SEVEN_POINT.points) {
            *v = r.eval(geometry::barycentric_point(&tri, b));
        }
        let area = mesh.area(t);
        let (full, centered) = squares(&values, SEVEN_POINT.weights, area);
        // h_T^2 = |T|
        eta_sq[t] = area * full;
        osc_sq[t] = area * centered;
    }
    let mut edge_values = [0.0; 3];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() {
            continue;
        }
        let jump = edge_jump(mesh, problem, nodal, e)?;
        let [a, b] = jump.endpoints;
        for (v, s) in edge_values.iter_mut().zip(GAUSS3.points) {
            *v = jump.eval(geometry::lerp(a, b, *s));
        }
        let (full, centered) = squares(&edge_values, GAUSS3.weights, geometry::distance(a, b));
        for &t in &edge.elements {
            let h = mesh.h(t);
            eta_sq[t] += h * full;
            osc_sq[t] += h * centered;
        }
    }
    Ok(EstimatorOutput {
        eta_sq_total: eta_sq.iter().sum(),
        osc_sq_total: osc_sq.iter().sum(),
        eta_sq,
        osc_sq,
    })
}

/// Terms of the discrete balance of one box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxBalance {
    /// `∫_{V_i} (f + div(A ∇v))`.
    pub volume: f64,
    /// `Σ_F ∫_{F ∩ V_i} [A ∇v · n]`.
    pub jumps: f64,
    /// Sum of the absolute values of the contributions, for relative checks.
    pub scale: f64,
}

impl BoxBalance {
    pub fn residual(&self) -> f64 {
        self.volume - self.jumps
    }
}

/// Splits the box balance of interior vertex `node` into the volume residual
/// and the edge jumps inside the box. For the finite volume solution the two
/// agree, because the flux through `∂V_i` balances `∫_{V_i} f`.
pub fn box_balance(
    dual: &DualMesh<'_>,
    problem: &ProblemSpec,
    nodal: &[f64],
    node: usize,
) -> Result<BoxBalance, EstimatorError> {
    let mesh = dual.mesh();
    check(mesh, nodal)?;
    let mut volume = 0.0;
    let mut scale = 0.0;
    let mut edges = Vec::new();
    for &t in mesh.vertex_elements(node) {
        let k = mesh.local_index(t, node).expect("vertex star is consistent");
        let r = volume_residual(mesh, problem, nodal, t)?;
        for tri in dual.sub_triangles(t, k) {
            let v = SEVEN_POINT.integrate(&tri, quadrature::triangle_area(&tri), |x| r.eval(x));
            volume += v;
            scale += v.abs();
        }
        edges.extend(mesh.element_edges(t));
    }
    edges.sort_unstable();
    edges.dedup();
    let p = mesh.vertex(node);
    let mut jumps = 0.0;
    for e in edges {
        let edge = mesh.edge(e);
        if edge.is_boundary() || !edge.vertices.contains(&node) {
            continue;
        }
        let jump = edge_jump(mesh, problem, nodal, e)?;
        let m = geometry::midpoint(jump.endpoints[0], jump.endpoints[1]);
        let j = GAUSS3.integrate(p, m, |x| jump.eval(x));
        jumps += j;
        scale += j.abs();
    }
    Ok(BoxBalance { volume, jumps, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generators::diagonal_grid;
    use crate::problem::{Coefficient, ExactSolution, Source};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn unit_triangle() -> Triangulation {
        Triangulation::with_longest_edges(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn problem(mesh: Triangulation, coefficient: Coefficient, f: f64) -> ProblemSpec {
        ProblemSpec::new("t", mesh, coefficient, Source::constant(f), Arc::new(|_| 0.0), None).unwrap()
    }

    #[test]
    fn trivial_problem_has_zero_estimator() {
        let mesh = diagonal_grid(3, 3, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let p = problem(mesh.clone(), Coefficient::identity(), 0.0);
        let est = compute_estimator(&mesh, &p, &vec![0.0; mesh.n_vertices()]).unwrap();
        assert_eq!(est.eta_sq_total, 0.0);
        assert_eq!(est.osc_sq_total, 0.0);
    }

    #[test]
    fn single_triangle_with_unit_source() {
        let mesh = unit_triangle();
        let p = problem(mesh.clone(), Coefficient::identity(), 1.0);
        let est = compute_estimator(&mesh, &p, &[0.0; 3]).unwrap();
        // h^2 ∫_T 1 = |T|^2 = 0.25; no interior edges
        assert!((est.eta_sq[0] - 0.25).abs() < 1e-15);
        assert!(est.osc_sq[0].abs() < 1e-30);
    }

    #[test]
    fn residual_with_variable_coefficient() {
        // shifted to x1 >= 1 so that diag(x1, 1) stays positive definite
        let mesh = Triangulation::with_longest_edges(vec![[1.0, 0.0], [2.0, 0.0], [1.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let p = problem(mesh.clone(), Coefficient::analytic(|x| [[x[0], 0.0], [0.0, 1.0]]), 2.0);
        // v = x1 has gradient (1, 0); div(diag(x1, 1) (1, 0)) = 1
        let v: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        let r = volume_residual(&mesh, &p, &v, 0).unwrap();
        for x in [[1.2, 0.2], [1.5, 0.1], [1.1, 0.7]] {
            assert!((r.eval(x) - 3.0).abs() < 1e-9);
        }
        let p = problem(mesh.clone(), Coefficient::identity(), 2.0);
        let r = volume_residual(&mesh, &p, &v, 0).unwrap();
        assert_eq!(r.eval([1.3, 0.3]), 2.0);
    }

    #[test]
    fn linear_function_has_no_jumps() {
        let mesh = diagonal_grid(3, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let p = problem(mesh.clone(), Coefficient::identity(), 0.0);
        let v: Vec<f64> = mesh.vertices().iter().map(|p| 1.0 + p[0] - 2.0 * p[1]).collect();
        for e in 0..mesh.n_edges() {
            match edge_jump(&mesh, &p, &v, e) {
                Ok(j) => assert!(j.eval(j.endpoints[0]).abs() < 1e-14),
                Err(err) => assert_eq!(err, EstimatorError::BoundaryEdge(e)),
            }
        }
        let est = compute_estimator(&mesh, &p, &v).unwrap();
        assert!(est.eta_sq_total < 1e-26);
    }

    #[test]
    fn hat_jump_on_two_triangle_square() {
        // diagonal (0,0)-(1,1); v = hat at (0,0)
        let mesh = diagonal_grid(1, 1, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let p = problem(mesh.clone(), Coefficient::identity(), 0.0);
        let mut v = vec![0.0; 4];
        v[0] = 1.0;
        let diag = (0..mesh.n_edges()).find(|&e| !mesh.edge(e).is_boundary()).unwrap();
        let j = edge_jump(&mesh, &p, &v, diag).unwrap();
        // lower triangle: ∇v = (-1, 0), upper: (0, -1); n_lower = (-1, 1)/√2
        // jump = ((-1, 0) - (0, -1)) · (-1, 1)/√2 = 2/√2 up to orientation
        let value = j.eval([0.5, 0.5]);
        assert!((value.abs() - 2f64.sqrt()).abs() < 1e-14);
        // independent of which element is taken first: the squared norm is symmetric
        let swapped = EdgeJump {
            grads: [j.grads[1], j.grads[0]],
            regions: j.regions,
            normal: geometry::scale(-1.0, j.normal),
            ..j
        };
        assert!((swapped.eval([0.5, 0.5]) - value).abs() < 1e-15);
    }

    #[test]
    fn jump_across_coefficient_interface() {
        let mut mesh_tags = diagonal_grid(1, 1, [0.0, 0.0], [1.0, 1.0]).unwrap().to_mesh_file();
        mesh_tags.region_tags = Some(vec![1, 2]);
        let mesh = Triangulation::from_mesh_file(mesh_tags).unwrap();
        let at = [[2.0, 0.5], [0.5, 1.0]];
        let bt = [[1.0, 0.0], [0.0, 3.0]];
        let p = problem(mesh.clone(), Coefficient::PerRegion(BTreeMap::from([(1, at), (2, bt)])), 0.0);
        // matching gradient on both sides
        let v: Vec<f64> = mesh.vertices().iter().map(|p| 0.7 * p[0] + 0.2 * p[1]).collect();
        let diag = (0..mesh.n_edges()).find(|&e| !mesh.edge(e).is_boundary()).unwrap();
        let j = edge_jump(&mesh, &p, &v, diag).unwrap();
        let t = mesh.edge(diag).elements[0];
        let k = mesh.element_edges(t).iter().position(|&x| x == diag).unwrap();
        let n = outward_normal(&mesh, t, k);
        let (a_t, a_s) = if mesh.region_tag(t) == 1 { (at, bt) } else { (bt, at) };
        let g = [0.7, 0.2];
        let want = geometry::dot(geometry::sub(geometry::mat_vec(&a_t, g), geometry::mat_vec(&a_s, g)), n);
        assert!((j.eval([0.3, 0.3]) - want).abs() < 1e-14);
        assert!(want.abs() > 0.1);
    }

    #[test]
    fn oscillation_bounded_by_indicator() {
        let p = crate::problem::square_smooth();
        let mesh = crate::nvb::refine_uniform(&p.initial_mesh).unwrap().mesh;
        let v: Vec<f64> = mesh.vertices().iter().map(|&x| (3.0 * x[0]).sin() * x[1]).collect();
        let est = compute_estimator(&mesh, &p, &v).unwrap();
        for t in 0..mesh.n_elements() {
            assert!(est.osc_sq[t] >= 0.0 && est.osc_sq[t] <= est.eta_sq[t]);
        }
        assert!(est.osc_sq_total < est.eta_sq_total);
        let all: Vec<usize> = (0..mesh.n_elements()).collect();
        let (e, o) = est.subset_total(&all).unwrap();
        assert!((e - est.eta_sq_total).abs() < 1e-12 * e);
        assert!((o - est.osc_sq_total).abs() < 1e-12 * o.max(1e-300));
        assert_eq!(est.subset_total(&[]).unwrap(), (0.0, 0.0));
        let (a, b) = (&all[..10], &all[10..]);
        let (ea, _) = est.subset_total(a).unwrap();
        let (eb, _) = est.subset_total(b).unwrap();
        assert!((ea + eb - e).abs() < 1e-12 * e);
        assert!(est.subset_total(&[mesh.n_elements()]).is_err());
    }

    #[test]
    fn exact_linear_solution_gives_zero_estimator() {
        let mesh = diagonal_grid(4, 4, [-1.0, -1.0], [1.0, 1.0]).unwrap();
        let u = |x: Point| 2.0 - x[0] + 0.5 * x[1];
        let p = ProblemSpec::new(
            "lin",
            mesh.clone(),
            Coefficient::constant([[2.0, 0.3], [0.3, 1.0]]),
            Source::DerivedFromExact,
            Arc::new(u),
            Some(ExactSolution { u: Arc::new(u), grad: None }),
        )
        .unwrap();
        let v: Vec<f64> = mesh.vertices().iter().map(|&x| u(x)).collect();
        let est = compute_estimator(&mesh, &p, &v).unwrap();
        assert!(est.eta_sq_total < 1e-16, "{}", est.eta_sq_total);
    }
}
