//! Small fixed-size 2D vector and matrix helpers.

/// A point or vector in the plane.
pub type Point = [f64; 2];

/// A 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(s: f64, a: Point) -> Point {
    [s * a[0], s * a[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// `a + t (b - a)`.
#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Rotates a vector clockwise by 90 degrees. For a polygon traversed
/// counterclockwise, this maps an edge direction onto its outward normal.
#[inline]
pub fn rot_cw(a: Point) -> Point {
    [a[1], -a[0]]
}

/// Twice the signed area of the triangle `(a, b, c)`; positive when counterclockwise.
#[inline]
pub fn orient2d(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

#[inline]
pub fn mat_vec(m: &Mat2, v: Point) -> Point {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Eigenvalues `(min, max)` of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[0][0];
    let c = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    (mean - radius, mean + radius)
}

/// Point at barycentric coordinates `bary` of triangle `tri`.
#[inline]
pub fn barycentric_point(tri: &[Point; 3], bary: &[f64; 3]) -> Point {
    [
        bary[0] * tri[0][0] + bary[1] * tri[1][0] + bary[2] * tri[2][0],
        bary[0] * tri[0][1] + bary[1] * tri[1][1] + bary[2] * tri[2][1],
    ]
}

/// Barycentric coordinates of `x` with respect to `tri`.
pub fn barycentric_coords(tri: &[Point; 3], x: Point) -> [f64; 3] {
    let det = orient2d(tri[0], tri[1], tri[2]);
    let l0 = orient2d(x, tri[1], tri[2]) / det;
    let l1 = orient2d(tri[0], x, tri[2]) / det;
    [l0, l1, 1.0 - l0 - l1]
}

pub fn centroid(tri: &[Point; 3]) -> Point {
    [
        (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0,
        (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let (lo, hi) = sym_eigenvalues(&[[11.0, 0.0], [0.0, 10.0]]);
        assert_eq!((lo, hi), (10.0, 11.0));
    }

    #[test]
    fn barycentric_roundtrip() {
        let tri = [[0.2, -0.1], [1.3, 0.4], [0.1, 0.9]];
        let b = [0.2, 0.3, 0.5];
        let x = barycentric_point(&tri, &b);
        let back = barycentric_coords(&tri, x);
        for k in 0..3 {
            assert!((back[k] - b[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn rot_cw_gives_outward_normal_of_ccw_edge() {
        // bottom edge of the unit square traversed left to right: outward is -y
        assert_eq!(rot_cw([1.0, 0.0]), [0.0, -1.0]);
    }
}
