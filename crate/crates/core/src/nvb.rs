//! Newest vertex bisection with conforming closure.
//!
//! An element is bisected by joining the midpoint of its reference edge to the
//! opposite vertex. Both children receive the edge opposite the new midpoint as
//! their reference edge. Closure marks the reference edge of every element that
//! has any marked edge, until no element has a marked edge without its
//! reference edge being marked too; each element is then split into 2, 3 or 4
//! children depending on which of its edges carry a midpoint.

use std::collections::VecDeque;

use thiserror::Error;

use crate::geometry;
use crate::mesh::{DegeneracyCheck, MeshError, Triangulation};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("marked element {element} is out of range (mesh has {n_elements} elements)")]
    InvalidMark { element: usize, n_elements: usize },
    #[error("marked edge {edge} is out of range (mesh has {n_edges} edges)")]
    InvalidEdgeMark { edge: usize, n_edges: usize },
    #[error("refined mesh failed validation: {0}")]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Debug)]
pub struct RefinementResult {
    pub mesh: Triangulation,
    /// Parent element id (in the old mesh) of every element of the new mesh.
    pub parent_of: Vec<usize>,
    /// Old elements that were bisected, in increasing order.
    pub refined: Vec<usize>,
}

/// `refine(T, M)`: the coarsest NVB refinement of `mesh` in which every
/// element of `marked` is bisected.
pub fn refine(mesh: &Triangulation, marked: &[usize]) -> Result<RefinementResult, RefineError> {
    let mut edge_marks = vec![false; mesh.n_edges()];
    for &t in marked {
        if t >= mesh.n_elements() {
            return Err(RefineError::InvalidMark {
                element: t,
                n_elements: mesh.n_elements(),
            });
        }
        edge_marks[mesh.element_edges(t)[mesh.ref_edge(t)]] = true;
    }
    close_marks(mesh, &mut edge_marks);
    bisect_marked(mesh, &edge_marks)
}

/// Refines with the given edges marked for bisection, after closure.
pub fn refine_edges(mesh: &Triangulation, edges: &[usize]) -> Result<RefinementResult, RefineError> {
    let mut edge_marks = vec![false; mesh.n_edges()];
    for &e in edges {
        if e >= mesh.n_edges() {
            return Err(RefineError::InvalidEdgeMark {
                edge: e,
                n_edges: mesh.n_edges(),
            });
        }
        edge_marks[e] = true;
    }
    close_marks(mesh, &mut edge_marks);
    bisect_marked(mesh, &edge_marks)
}

/// One uniform step: every edge is bisected, so every element is split into
/// four children by three bisections.
pub fn refine_uniform(mesh: &Triangulation) -> Result<RefinementResult, RefineError> {
    let edge_marks = vec![true; mesh.n_edges()];
    bisect_marked(mesh, &edge_marks)
}

fn close_marks(mesh: &Triangulation, edge_marks: &mut [bool]) {
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut queued = vec![false; mesh.n_elements()];
    for (e, _) in edge_marks.iter().enumerate().filter(|(_, &m)| m) {
        for &t in mesh.edge(e).incident() {
            if !queued[t] {
                queued[t] = true;
                queue.push_back(t);
            }
        }
    }
    while let Some(t) = queue.pop_front() {
        queued[t] = false;
        let edges = mesh.element_edges(t);
        let r = edges[mesh.ref_edge(t)];
        if !edge_marks[r] && edges.iter().any(|&e| edge_marks[e]) {
            edge_marks[r] = true;
            for &n in mesh.edge(r).incident() {
                if !queued[n] {
                    queued[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
}

struct Builder {
    elements: Vec<[usize; 3]>,
    ref_edge: Vec<u8>,
    region_tag: Vec<i32>,
    generation: Vec<u32>,
    parent_of: Vec<usize>,
}

fn bisect_marked(mesh: &Triangulation, edge_marks: &[bool]) -> Result<RefinementResult, RefineError> {
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint_of = vec![usize::MAX; mesh.n_edges()];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge_marks[e] {
            midpoint_of[e] = vertices.len();
            vertices.push(geometry::midpoint(
                mesh.vertex(edge.vertices[0]),
                mesh.vertex(edge.vertices[1]),
            ));
        }
    }

    let mut out = Builder {
        elements: Vec::with_capacity(mesh.n_elements() + 2 * edge_marks.len()),
        ref_edge: Vec::new(),
        region_tag: Vec::new(),
        generation: Vec::new(),
        parent_of: Vec::new(),
    };
    let mut refined = Vec::new();
    for t in 0..mesh.n_elements() {
        let el = mesh.element(t);
        let edges = mesh.element_edges(t);
        if !edges.iter().any(|&e| edge_marks[e]) {
            out.push(el, mesh.ref_edge(t) as u8, mesh.region_tag(t), mesh.generation(t), t);
            continue;
        }
        debug_assert!(edge_marks[edges[mesh.ref_edge(t)]], "closure left element {t} open");
        refined.push(t);
        // midpoint of the parent edge joining a and b, if that edge is marked
        let mid = |a: usize, b: usize| -> Option<usize> {
            (0..3).find_map(|k| {
                let (p, q) = (el[k], el[(k + 1) % 3]);
                ((p == a && q == b) || (p == b && q == a))
                    .then(|| midpoint_of[edges[k]])
                    .filter(|&m| m != usize::MAX)
            })
        };
        bisect(
            &mut out,
            el,
            mesh.ref_edge(t),
            &mid,
            mesh.region_tag(t),
            mesh.generation(t),
            t,
        );
    }

    let mesh = Triangulation::from_parts(
        vertices,
        out.elements,
        out.ref_edge,
        out.region_tag,
        out.generation,
        DegeneracyCheck::ElementShape,
    )?;
    Ok(RefinementResult {
        mesh,
        parent_of: out.parent_of,
        refined,
    })
}

impl Builder {
    fn push(&mut self, el: [usize; 3], r: u8, tag: i32, generation: u32, parent: usize) {
        self.elements.push(el);
        self.ref_edge.push(r);
        self.region_tag.push(tag);
        self.generation.push(generation);
        self.parent_of.push(parent);
    }
}

/// Bisects `el` along local edge `r` and recurses into children whose
/// reference edge carries a midpoint. Only edges of the original parent can
/// carry one, so the recursion is at most two levels deep.
fn bisect(
    out: &mut Builder,
    el: [usize; 3],
    r: usize,
    mid: &dyn Fn(usize, usize) -> Option<usize>,
    tag: i32,
    generation: u32,
    parent: usize,
) {
    let (p0, p1, p2) = (el[r], el[(r + 1) % 3], el[(r + 2) % 3]);
    let Some(m) = mid(p0, p1) else {
        out.push(el, r as u8, tag, generation, parent);
        return;
    };
    // reference edges opposite the newest vertex m: (p2, p0) and (p1, p2)
    bisect(out, [p0, m, p2], 2, mid, tag, generation + 1, parent);
    bisect(out, [m, p1, p2], 1, mid, tag, generation + 1, parent);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generators::{criss_cross, diagonal_grid};

    fn unit_triangle() -> Triangulation {
        Triangulation::with_longest_edges(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn empty_marks_leave_mesh_unchanged() {
        let m = criss_cross(&[(0, 0), (1, 0)], [0.0, 0.0], 1.0).unwrap();
        let r = refine(&m, &[]).unwrap();
        assert!(r.refined.is_empty());
        assert_eq!(r.mesh.elements(), m.elements());
        assert_eq!(r.mesh.vertices(), m.vertices());
        assert_eq!(r.parent_of, (0..m.n_elements()).collect::<Vec<_>>());
    }

    #[test]
    fn shared_diagonal_forces_neighbor() {
        let m = diagonal_grid(1, 1, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let r = refine(&m, &[0]).unwrap();
        assert_eq!(r.mesh.n_elements(), 4);
        assert_eq!(r.refined, vec![0, 1]);
        assert_eq!(r.mesh.n_vertices(), 5);
    }

    #[test]
    fn single_triangle_son_counts() {
        let m = unit_triangle();
        // reference edge only: 2 sons
        assert_eq!(refine(&m, &[0]).unwrap().mesh.n_elements(), 2);
        // reference edge plus one other: 3 sons
        let r = m.element_edges(0)[m.ref_edge(0)];
        let other = (0..3).find(|&e| e != r).unwrap();
        assert_eq!(refine_edges(&m, &[other]).unwrap().mesh.n_elements(), 3);
        // all three edges: 4 sons
        assert_eq!(refine_edges(&m, &[0, 1, 2]).unwrap().mesh.n_elements(), 4);
    }

    #[test]
    fn children_reference_edge_is_opposite_newest_vertex() {
        let m = unit_triangle();
        let r = refine(&m, &[0]).unwrap();
        let newest = 3; // first midpoint
        for t in 0..r.mesh.n_elements() {
            let el = r.mesh.element(t);
            let k = r.mesh.ref_edge(t);
            assert_eq!(el[(k + 2) % 3], newest);
            assert_eq!(r.mesh.generation(t), 1);
        }
    }

    #[test]
    fn uniform_step_counts_and_h() {
        let m = diagonal_grid(1, 1, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.mesh.n_elements(), 8);
        assert!(r.mesh.generation(0) == 2);
        let mut cur = m;
        let mut counts = vec![cur.n_elements()];
        for _ in 0..4 {
            let h = cur.h_max();
            cur = refine_uniform(&cur).unwrap().mesh;
            assert!((cur.h_max() - 0.5 * h).abs() < 1e-12);
            counts.push(cur.n_elements());
        }
        for w in counts.windows(2) {
            assert_eq!(w[1], 4 * w[0]);
        }
    }

    #[test]
    fn out_of_range_mark() {
        let m = unit_triangle();
        assert!(matches!(
            refine(&m, &[3]),
            Err(RefineError::InvalidMark { element: 3, .. })
        ));
    }
}
