//! Barycentric dual mesh (control volumes) and the box interpolation operator.
//!
//! The box `V_i` of vertex `a_i` collects, in every element `T` containing
//! `a_i`, the quadrilateral `a_i -> mid(a_i, a_j) -> centroid(T) -> mid(a_k, a_i)`.
//! Its part of `∂V_i` inside `T` consists of two flux segments. Segments are
//! generated per element on demand rather than stored.

use thiserror::Error;

use crate::geometry::{self, Point};
use crate::mesh::Triangulation;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DualError {
    #[error("expected one value per node ({expected}), got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// A straight piece of a box boundary inside one element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxSegment {
    pub start: Point,
    pub end: Point,
    pub element: usize,
    /// Vertex whose box this segment bounds.
    pub node: usize,
    /// Unit normal pointing out of the box of `node`.
    pub unit_normal: Point,
    pub length: f64,
}

impl FluxSegment {
    fn new(start: Point, end: Point, element: usize, node: usize) -> Self {
        let d = geometry::sub(end, start);
        let length = geometry::norm(d);
        Self {
            start,
            end,
            element,
            node,
            unit_normal: geometry::scale(1.0 / length, geometry::rot_cw(d)),
            length,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DualMesh<'m> {
    mesh: &'m Triangulation,
    box_area: Vec<f64>,
}

impl<'m> DualMesh<'m> {
    pub fn build(mesh: &'m Triangulation) -> Self {
        let mut box_area = vec![0.0; mesh.n_vertices()];
        for t in 0..mesh.n_elements() {
            let el = mesh.element(t);
            for k in 0..3 {
                box_area[el[k]] += sub_area(&box_quad(mesh, t, k));
            }
        }
        Self { mesh, box_area }
    }

    #[inline]
    pub fn mesh(&self) -> &'m Triangulation {
        self.mesh
    }

    #[inline]
    pub fn box_area(&self, node: usize) -> f64 {
        self.box_area[node]
    }

    pub fn box_areas(&self) -> &[f64] {
        &self.box_area
    }

    /// Boxes of boundary vertices exist geometrically but carry no test function.
    #[inline]
    pub fn is_interior(&self, node: usize) -> bool {
        !self.mesh.is_boundary_vertex(node)
    }

    pub fn total_area(&self) -> f64 {
        self.box_area.iter().sum()
    }

    /// The six flux segments of element `t`, two per local vertex, ordered
    /// `[v0 a, v0 b, v1 a, v1 b, v2 a, v2 b]`.
    pub fn element_segments(&self, t: usize) -> [FluxSegment; 6] {
        let el = self.mesh.element(t);
        let p = self.mesh.triangle(t);
        let s = geometry::centroid(&p);
        let m = [
            geometry::midpoint(p[0], p[1]),
            geometry::midpoint(p[1], p[2]),
            geometry::midpoint(p[2], p[0]),
        ];
        let seg = |k: usize| {
            // the box quad (p_k, m_k, s, m_{k-1}) is counterclockwise
            [
                FluxSegment::new(m[k], s, t, el[k]),
                FluxSegment::new(s, m[(k + 2) % 3], t, el[k]),
            ]
        };
        let [a0, b0] = seg(0);
        let [a1, b1] = seg(1);
        let [a2, b2] = seg(2);
        [a0, b0, a1, b1, a2, b2]
    }

    /// The two segments bounding `V_i ∩ T` for local vertex `k` of `t`.
    pub fn local_segments(&self, t: usize, k: usize) -> [FluxSegment; 2] {
        let all = self.element_segments(t);
        [all[2 * k], all[2 * k + 1]]
    }

    /// All flux segments of the box of `node`.
    pub fn node_segments(&self, node: usize) -> Vec<FluxSegment> {
        let mut out = Vec::new();
        for &t in self.mesh.vertex_elements(node) {
            let k = self.mesh.local_index(t, node).expect("vertex star is consistent");
            out.extend(self.local_segments(t, k));
        }
        out
    }

    /// `V_i ∩ T` for local vertex `k` of `t`, split into two triangles.
    pub fn sub_triangles(&self, t: usize, k: usize) -> [[Point; 3]; 2] {
        let q = box_quad(self.mesh, t, k);
        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    }
}

fn box_quad(mesh: &Triangulation, t: usize, k: usize) -> [Point; 4] {
    let p = mesh.triangle(t);
    let s = geometry::centroid(&p);
    [
        p[k],
        geometry::midpoint(p[k], p[(k + 1) % 3]),
        s,
        geometry::midpoint(p[(k + 2) % 3], p[k]),
    ]
}

fn sub_area(q: &[Point; 4]) -> f64 {
    0.5 * (geometry::orient2d(q[0], q[1], q[2]) + geometry::orient2d(q[0], q[2], q[3]))
}

/// A function constant on every box: `I* v = Σ v(a_i) χ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxFunction {
    pub values: Vec<f64>,
}

impl BoxFunction {
    /// Value at `x`, where `x` lies in element `t`. Inside `T` the box of
    /// vertex `k` is where the barycentric coordinate `λ_k` is largest.
    pub fn eval(&self, mesh: &Triangulation, t: usize, x: Point) -> f64 {
        let lambda = geometry::barycentric_coords(&mesh.triangle(t), x);
        let mut k = 0;
        for j in 1..3 {
            if lambda[j] > lambda[k] {
                k = j;
            }
        }
        self.values[mesh.element(t)[k]]
    }
}

/// The box interpolation operator applied to nodal values.
pub fn interpolate_dual(mesh: &Triangulation, nodal: &[f64]) -> Result<BoxFunction, DualError> {
    if nodal.len() != mesh.n_vertices() {
        return Err(DualError::LengthMismatch {
            expected: mesh.n_vertices(),
            got: nodal.len(),
        });
    }
    Ok(BoxFunction {
        values: nodal.to_vec(),
    })
}
