//! Conforming triangulations of polygonal domains.
//!
//! A [`Triangulation`] stores vertex coordinates, counterclockwise element
//! triples, the newest-vertex-bisection reference edge of every element and a
//! region tag used to align coefficient discontinuities. Edge topology and the
//! boundary flags are derived once at construction; the mesh is immutable
//! afterwards.
//!
//! Local edge `k` of an element `[v0, v1, v2]` joins `v[k]` and `v[(k + 1) % 3]`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Point};

/// Elements whose area is below this fraction of the bounding-box area are
/// rejected as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("a triangulation needs at least 3 vertices and 1 element, got {vertices} vertices and {elements} elements")]
    TooSmall { vertices: usize, elements: usize },
    #[error("element {element} references vertex {vertex}, but there are only {n_vertices} vertices")]
    IndexOutOfRange {
        element: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("element {element} repeats a vertex")]
    RepeatedVertex { element: usize },
    #[error("edge ({a}, {b}) is not conforming: {reason}")]
    NonConforming { a: usize, b: usize, reason: &'static str },
    #[error("element {element} is degenerate (area {area:e})")]
    DegenerateElement { element: usize, area: f64 },
    #[error("vertex {vertex} is not used by any element")]
    UnusedVertex { vertex: usize },
    #[error("reference edge of element {element} must be 0, 1 or 2, got {value}")]
    InvalidRefEdge { element: usize, value: u8 },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mesh file: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// An edge of the triangulation with its one or two incident elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Endpoint vertex ids, smaller id first.
    pub vertices: [usize; 2],
    pub elements: [usize; 2],
    boundary: bool,
}

impl Edge {
    #[inline]
    pub fn is_boundary(&self) -> bool {
        self.boundary
    }

    /// The incident elements; one element for boundary edges.
    pub fn incident(&self) -> &[usize] {
        if self.boundary {
            &self.elements[..1]
        } else {
            &self.elements[..]
        }
    }
}

/// Geometric quantities of one element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// Local mesh size `|T|^{1/2}`.
    pub h: f64,
    pub diam: f64,
    /// Length of local edge `k`.
    pub edge_lengths: [f64; 3],
    /// Outward unit normal of local edge `k`.
    pub edge_normals: [Point; 3],
    pub centroid: Point,
}

/// Mesh exchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_edges: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_tags: Option<Vec<i32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum DegeneracyCheck {
    /// Area relative to the bounding box of the whole mesh.
    BoundingBox,
    /// Area relative to the squared diameter of the element itself.
    ElementShape,
}

/// Element ids incident to each vertex, in compressed layout.
#[derive(Clone, Debug)]
struct VertexStar {
    offsets: Vec<usize>,
    elements: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    ref_edge: Vec<u8>,
    region_tag: Vec<i32>,
    generation: Vec<u32>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    star: OnceLock<VertexStar>,
}

impl Triangulation {
    /// Builds and validates a triangulation.
    ///
    /// `ref_edges` defaults to the longest edge of every element (ties go to
    /// the edge whose opposite vertex has the lowest id) and `region_tags`
    /// defaults to zero. Clockwise elements are reordered to counterclockwise;
    /// their reference edge is remapped to the same geometric edge.
    pub fn new(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        ref_edges: Option<Vec<u8>>,
        region_tags: Option<Vec<i32>>,
    ) -> Result<Self, MeshError> {
        let n = elements.len();
        if vertices.len() < 3 || n == 0 {
            return Err(MeshError::TooSmall {
                vertices: vertices.len(),
                elements: n,
            });
        }
        for (t, el) in elements.iter().enumerate() {
            for &v in el {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        element: t,
                        vertex: v,
                        n_vertices: vertices.len(),
                    });
                }
            }
        }
        let ref_edge = match ref_edges {
            Some(r) => {
                if r.len() != n {
                    return Err(MeshError::LengthMismatch {
                        what: "ref_edges",
                        expected: n,
                        got: r.len(),
                    });
                }
                if let Some((t, &value)) = r.iter().enumerate().find(|(_, &k)| k > 2) {
                    return Err(MeshError::InvalidRefEdge { element: t, value });
                }
                r
            }
            None => elements
                .iter()
                .map(|el| longest_edge(&vertices, el))
                .collect(),
        };
        let region_tag = match region_tags {
            Some(r) if r.len() != n => {
                return Err(MeshError::LengthMismatch {
                    what: "region_tags",
                    expected: n,
                    got: r.len(),
                })
            }
            Some(r) => r,
            None => vec![0; n],
        };
        Self::from_parts(
            vertices,
            elements,
            ref_edge,
            region_tag,
            vec![0; n],
            DegeneracyCheck::BoundingBox,
        )
    }

    /// Builds a triangulation with longest-edge reference edges and region tag 0.
    pub fn with_longest_edges(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        Self::new(vertices, elements, None, None)
    }

    pub(crate) fn from_parts(
        vertices: Vec<Point>,
        mut elements: Vec<[usize; 3]>,
        mut ref_edge: Vec<u8>,
        region_tag: Vec<i32>,
        generation: Vec<u32>,
        check: DegeneracyCheck,
    ) -> Result<Self, MeshError> {
        let bbox_area = {
            let (lo, hi) = bounding_box(&vertices);
            (hi[0] - lo[0]) * (hi[1] - lo[1])
        };
        for (t, el) in elements.iter_mut().enumerate() {
            if el[0] == el[1] || el[1] == el[2] || el[0] == el[2] {
                return Err(MeshError::RepeatedVertex { element: t });
            }
            let p = [vertices[el[0]], vertices[el[1]], vertices[el[2]]];
            let mut signed = 0.5 * geometry::orient2d(p[0], p[1], p[2]);
            if signed < 0.0 {
                el.swap(1, 2);
                // (a, c, b): old edge 0 (a,b) is new edge 2, old 2 (c,a) is new 0
                ref_edge[t] = 2 - ref_edge[t];
                signed = -signed;
            }
            let threshold = match check {
                DegeneracyCheck::BoundingBox => DEGENERACY_TOLERANCE * bbox_area,
                DegeneracyCheck::ElementShape => {
                    let d = (0..3)
                        .map(|k| geometry::distance(p[k], p[(k + 1) % 3]))
                        .fold(0.0, f64::max);
                    DEGENERACY_TOLERANCE * d * d
                }
            };
            if signed.is_nan() || signed <= threshold {
                return Err(MeshError::DegenerateElement {
                    element: t,
                    area: signed,
                });
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(elements.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(elements.len() * 3 / 2 + 4);
        // direction in which the first incident element traverses each edge
        let mut forward: Vec<bool> = Vec::with_capacity(edges.capacity());
        let mut element_edges = Vec::with_capacity(elements.len());
        for (t, el) in elements.iter().enumerate() {
            let mut ids = [0usize; 3];
            for k in 0..3 {
                let a = el[k];
                let b = el[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        lookup.insert(key, edges.len());
                        ids[k] = edges.len();
                        edges.push(Edge {
                            vertices: [key.0, key.1],
                            elements: [t, usize::MAX],
                            boundary: true,
                        });
                        forward.push(a < b);
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if !edge.boundary {
                            return Err(MeshError::NonConforming {
                                a: key.0,
                                b: key.1,
                                reason: "more than two incident elements",
                            });
                        }
                        if forward[e] == (a < b) {
                            return Err(MeshError::NonConforming {
                                a: key.0,
                                b: key.1,
                                reason: "overlapping elements traverse the edge in the same direction",
                            });
                        }
                        edge.elements[1] = t;
                        edge.boundary = false;
                        ids[k] = e;
                    }
                }
            }
            element_edges.push(ids);
        }

        let mut used = vec![false; vertices.len()];
        for el in &elements {
            for &v in el {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::UnusedVertex { vertex: v });
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| e.boundary) {
            boundary_vertex[e.vertices[0]] = true;
            boundary_vertex[e.vertices[1]] = true;
        }

        Ok(Self {
            vertices,
            elements,
            ref_edge,
            region_tag,
            generation,
            edges,
            element_edges,
            boundary_vertex,
            star: OnceLock::new(),
        })
    }

    pub fn from_mesh_file(file: MeshFile) -> Result<Self, MeshError> {
        Self::new(file.vertices, file.elements, file.ref_edges, file.region_tags)
    }

    pub fn from_json_str(s: &str) -> Result<Self, MeshError> {
        Self::from_mesh_file(serde_json::from_str(s)?)
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_mesh_file(&self) -> MeshFile {
        MeshFile {
            vertices: self.vertices.clone(),
            elements: self.elements.clone(),
            ref_edges: Some(self.ref_edge.clone()),
            region_tags: Some(self.region_tag.clone()),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_mesh_file()).expect("mesh serialization cannot fail")
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    #[inline]
    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    #[inline]
    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    #[inline]
    pub fn element(&self, t: usize) -> [usize; 3] {
        self.elements[t]
    }

    /// Local index of the reference edge of element `t`.
    #[inline]
    pub fn ref_edge(&self, t: usize) -> usize {
        self.ref_edge[t] as usize
    }

    pub fn ref_edges(&self) -> &[u8] {
        &self.ref_edge
    }

    #[inline]
    pub fn region_tag(&self, t: usize) -> i32 {
        self.region_tag[t]
    }

    pub fn region_tags(&self) -> &[i32] {
        &self.region_tag
    }

    /// Number of bisections separating element `t` from its initial ancestor.
    #[inline]
    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Global ids of the three local edges of element `t`.
    #[inline]
    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }

    #[inline]
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.boundary).count()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.edges.len() - self.n_boundary_edges()
    }

    #[inline]
    pub fn triangle(&self, t: usize) -> [Point; 3] {
        let el = self.elements[t];
        [
            self.vertices[el[0]],
            self.vertices[el[1]],
            self.vertices[el[2]],
        ]
    }

    #[inline]
    pub fn area(&self, t: usize) -> f64 {
        let p = self.triangle(t);
        0.5 * geometry::orient2d(p[0], p[1], p[2])
    }

    /// Local mesh size `h_T = |T|^{1/2}`.
    #[inline]
    pub fn h(&self, t: usize) -> f64 {
        self.area(t).sqrt()
    }

    pub fn element_geometry(&self, t: usize) -> ElementGeometry {
        let p = self.triangle(t);
        let area = 0.5 * geometry::orient2d(p[0], p[1], p[2]);
        let mut edge_lengths = [0.0; 3];
        let mut edge_normals = [[0.0; 2]; 3];
        for k in 0..3 {
            let d = geometry::sub(p[(k + 1) % 3], p[k]);
            let len = geometry::norm(d);
            edge_lengths[k] = len;
            edge_normals[k] = geometry::scale(1.0 / len, geometry::rot_cw(d));
        }
        ElementGeometry {
            area,
            h: area.sqrt(),
            diam: edge_lengths.iter().copied().fold(0.0, f64::max),
            edge_lengths,
            edge_normals,
            centroid: geometry::centroid(&p),
        }
    }

    /// Gradients of the three barycentric (hat) functions on element `t`.
    pub fn hat_gradients(&self, t: usize) -> [Point; 3] {
        let p = self.triangle(t);
        let two_area = geometry::orient2d(p[0], p[1], p[2]);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            g[i] = [(p[j][1] - p[k][1]) / two_area, (p[k][0] - p[j][0]) / two_area];
        }
        g
    }

    /// Total area of all elements.
    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|t| self.area(t)).sum()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        bounding_box(&self.vertices)
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        geometry::distance(lo, hi)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_elements()).map(|t| self.h(t)).fold(0.0, f64::max)
    }

    /// `max_T diam(T)^2 / |T|`.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_elements())
            .map(|t| {
                let g = self.element_geometry(t);
                g.diam * g.diam / g.area
            })
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.n_elements())
            .map(|t| {
                let p = self.triangle(t);
                (0..3)
                    .map(|k| {
                        let a = geometry::sub(p[(k + 1) % 3], p[k]);
                        let b = geometry::sub(p[(k + 2) % 3], p[k]);
                        (geometry::dot(a, b) / (geometry::norm(a) * geometry::norm(b)))
                            .clamp(-1.0, 1.0)
                            .acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn star(&self) -> &VertexStar {
        self.star.get_or_init(|| {
            let mut counts = vec![0usize; self.vertices.len() + 1];
            for el in &self.elements {
                for &v in el {
                    counts[v + 1] += 1;
                }
            }
            for i in 0..self.vertices.len() {
                counts[i + 1] += counts[i];
            }
            let mut fill = counts.clone();
            let mut elements = vec![0; counts[self.vertices.len()]];
            for (t, el) in self.elements.iter().enumerate() {
                for &v in el {
                    elements[fill[v]] = t;
                    fill[v] += 1;
                }
            }
            VertexStar {
                offsets: counts,
                elements,
            }
        })
    }

    /// Elements containing vertex `v`, in increasing id order.
    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        let star = self.star();
        &star.elements[star.offsets[v]..star.offsets[v + 1]]
    }

    /// All elements that intersect some element of `set` (the patch of `set`).
    pub fn patch(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &t in set {
            for &v in &self.elements[t] {
                out.extend(self.vertex_elements(v).iter().copied());
            }
        }
        out
    }

    /// Local index of `v` in element `t`, if present.
    #[inline]
    pub fn local_index(&self, t: usize, v: usize) -> Option<usize> {
        self.elements[t].iter().position(|&w| w == v)
    }
}

/// Longest edge of `el`; ties go to the edge whose opposite vertex has the
/// lowest id.
fn longest_edge(vertices: &[Point], el: &[usize; 3]) -> u8 {
    let mut best = 0usize;
    let mut best_len = -1.0;
    for k in 0..3 {
        let len = geometry::distance(vertices[el[k]], vertices[el[(k + 1) % 3]]);
        let opposite = el[(k + 2) % 3];
        let better = len > best_len
            || (len == best_len && opposite < el[(best + 2) % 3]);
        if better {
            best = k;
            best_len = len;
        }
    }
    best as u8
}

fn bounding_box(vertices: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in vertices {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

/// Structured mesh builders.
pub mod generators {
    use std::collections::HashMap;

    use super::{MeshError, Triangulation};
    use crate::geometry::Point;

    /// Union of axis-aligned square cells, each split into four triangles by
    /// its diagonals. Cells are given as integer grid coordinates `(i, j)`;
    /// cell `(i, j)` covers `origin + cell_size * [i, i+1] x [j, j+1]`.
    ///
    /// Every triangle's reference edge is its cell side (the longest edge).
    pub fn criss_cross(
        cells: &[(i64, i64)],
        origin: Point,
        cell_size: f64,
    ) -> Result<Triangulation, MeshError> {
        let mut vertices = Vec::new();
        let mut ids: HashMap<(i64, i64), usize> = HashMap::new();
        // corner nodes live on a doubled grid so that centers get odd coordinates
        let mut node = |i: i64, j: i64, vertices: &mut Vec<Point>| -> usize {
            *ids.entry((i, j)).or_insert_with(|| {
                vertices.push([
                    origin[0] + cell_size * i as f64 / 2.0,
                    origin[1] + cell_size * j as f64 / 2.0,
                ]);
                vertices.len() - 1
            })
        };
        let mut sorted: Vec<(i64, i64)> = cells.to_vec();
        sorted.sort_by_key(|&(i, j)| (j, i));
        sorted.dedup();
        for &(i, j) in &sorted {
            for (a, b) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                node(2 * (i + a), 2 * (j + b), &mut vertices);
            }
        }
        let mut elements = Vec::new();
        let mut refs = Vec::new();
        for &(i, j) in &sorted {
            let c00 = node(2 * i, 2 * j, &mut vertices);
            let c10 = node(2 * i + 2, 2 * j, &mut vertices);
            let c11 = node(2 * i + 2, 2 * j + 2, &mut vertices);
            let c01 = node(2 * i, 2 * j + 2, &mut vertices);
            let m = node(2 * i + 1, 2 * j + 1, &mut vertices);
            for (a, b) in [(c00, c10), (c10, c11), (c11, c01), (c01, c00)] {
                elements.push([a, b, m]);
                refs.push(0u8);
            }
        }
        Triangulation::new(vertices, elements, Some(refs), None)
    }

    /// `nx x ny` rectangle grid on `[x0, x1] x [y0, y1]`, each cell split by
    /// its lower-left to upper-right diagonal. Reference edges are the diagonals.
    pub fn diagonal_grid(
        nx: usize,
        ny: usize,
        lower: Point,
        upper: Point,
    ) -> Result<Triangulation, MeshError> {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    lower[0] + (upper[0] - lower[0]) * i as f64 / nx as f64,
                    lower[1] + (upper[1] - lower[1]) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(2 * nx * ny);
        let mut refs = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                // the diagonal id(i,j)-id(i+1,j+1) is local edge 2 of both
                elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                refs.push(2);
                elements.push([id(i + 1, j + 1), id(i, j + 1), id(i, j)]);
                refs.push(2);
            }
        }
        Triangulation::new(vertices, elements, Some(refs), None)
    }
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;

    fn unit_triangle() -> Triangulation {
        Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    fn two_triangle_square() -> Triangulation {
        Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_topology() {
        let m = unit_triangle();
        assert_eq!(m.n_boundary_edges(), 3);
        assert_eq!(m.n_interior_edges(), 0);
        assert!(m.boundary_flags().iter().all(|&b| b));
    }

    #[test]
    fn two_triangle_square_topology() {
        let m = two_triangle_square();
        assert_eq!(m.n_interior_edges(), 1);
        assert_eq!(m.n_boundary_edges(), 4);
        // both longest edges are the diagonal
        let diag = m.element_edges(0)[m.ref_edge(0)];
        assert_eq!(diag, m.element_edges(1)[m.ref_edge(1)]);
        assert_eq!(m.edge(diag).vertices, [0, 2]);
    }

    #[test]
    fn duplicate_element_is_non_conforming() {
        let err = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::NonConforming { .. }), "{err}");
    }

    #[test]
    fn three_elements_on_one_edge_is_non_conforming() {
        let err = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::NonConforming { .. }));
    }

    #[test]
    fn degenerate_and_out_of_range_inputs() {
        let err = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::DegenerateElement { element: 0, .. }));

        let err = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 5]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { vertex: 5, .. }));

        let err = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::UnusedVertex { vertex: 3 }));
    }

    #[test]
    fn clockwise_input_is_normalized() {
        let m = Triangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 2, 1]],
            Some(vec![1]), // edge (2, 1), the hypotenuse
            None,
        )
        .unwrap();
        assert!(m.area(0) > 0.0);
        let k = m.ref_edge(0);
        let el = m.element(0);
        let mut ends = [el[k], el[(k + 1) % 3]];
        ends.sort();
        assert_eq!(ends, [1, 2]);
    }

    #[test]
    fn element_geometry_of_unit_triangle() {
        let g = unit_triangle().element_geometry(0);
        assert!((g.area - 0.5).abs() < 1e-15);
        assert!((g.h - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((g.diam - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((g.diam * g.diam / g.area - 4.0).abs() < 1e-12);
        assert_eq!(g.edge_normals[0], [0.0, -1.0]);
        assert!((g.centroid[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn scaled_triangle_geometry() {
        let m = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let g = m.element_geometry(0);
        assert!((g.area - 2.0).abs() < 1e-14);
        assert!((g.h - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn equilateral_shape_regularity() {
        let m = Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((m.shape_regularity() - 4.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((m.min_angle() - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
    }

    #[test]
    fn uniform_right_isoceles_regularity() {
        let m = criss_cross(&[(0, 0), (1, 0), (0, 1), (1, 1)], [-1.0, -1.0], 1.0).unwrap();
        assert_eq!(m.n_elements(), 16);
        assert_eq!(m.n_vertices(), 13);
        assert!((m.shape_regularity() - 4.0).abs() < 1e-12);
        assert!((m.total_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hat_gradients_sum_to_zero() {
        let m = criss_cross(&[(0, 0)], [0.0, 0.0], 1.0).unwrap();
        for t in 0..m.n_elements() {
            let g = m.hat_gradients(t);
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-14);
            assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-14);
        }
        let g = unit_triangle().hat_gradients(0);
        assert_eq!(g[0], [-1.0, -1.0]);
        assert_eq!(g[1], [1.0, 0.0]);
        assert_eq!(g[2], [0.0, 1.0]);
    }

    #[test]
    fn patch_cases() {
        let m = two_triangle_square();
        assert!(m.patch(&BTreeSet::new()).is_empty());
        assert_eq!(m.patch(&BTreeSet::from([0])), BTreeSet::from([0, 1]));
        let all: BTreeSet<usize> = (0..m.n_elements()).collect();
        assert_eq!(m.patch(&all), all);

        let grid = diagonal_grid(4, 4, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let p = grid.patch(&BTreeSet::from([0]));
        assert!(p.contains(&0));
        for &t in &p {
            let shared = grid.element(t).iter().any(|v| grid.element(0).contains(v));
            assert!(shared);
        }
    }

    #[test]
    fn edge_table_is_symmetric() {
        let m = diagonal_grid(3, 2, [0.0, 0.0], [3.0, 2.0]).unwrap();
        for (e, edge) in m.edges().iter().enumerate() {
            for &t in edge.incident() {
                assert!(m.element_edges(t).contains(&e));
            }
        }
        for t in 0..m.n_elements() {
            for e in m.element_edges(t) {
                assert!(m.edge(e).incident().contains(&t));
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let m = criss_cross(&[(0, 0), (0, 1), (1, 1)], [-1.0, -1.0], 1.0).unwrap();
        let back = Triangulation::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back.elements(), m.elements());
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.ref_edges(), m.ref_edges());
    }

    #[test]
    fn json_without_optional_fields() {
        let m = Triangulation::from_json_str(
            r#"{"vertices": [[0,0],[1,0],[0,1]], "elements": [[0,1,2]]}"#,
        )
        .unwrap();
        assert_eq!(m.ref_edge(0), 1);
        assert_eq!(m.region_tag(0), 0);
    }
}
