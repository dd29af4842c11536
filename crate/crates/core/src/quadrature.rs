//! Fixed-order quadrature on triangles and segments, and integral means.

use thiserror::Error;

use crate::geometry::{self, Point};

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("no triangle rule of degree {0} (supported: 1, 2, 5)")]
    UnsupportedDegree(u32),
    #[error("no Gauss rule with {0} points (supported: 1, 2, 3)")]
    UnsupportedPoints(usize),
    #[error("integration domain has zero measure")]
    ZeroMeasure,
}

/// Triangle rule in barycentric coordinates; weights sum to one and are
/// scaled by the triangle area on use.
#[derive(Debug)]
pub struct TriangleRule {
    pub degree: u32,
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Gauss-Legendre rule on `[0, 1]`; weights sum to one.
#[derive(Debug)]
pub struct SegmentRule {
    pub degree: u32,
    pub points: &'static [f64],
    pub weights: &'static [f64],
}

const THIRD: f64 = 1.0 / 3.0;

pub static CENTROID: TriangleRule = TriangleRule {
    degree: 1,
    points: &[[THIRD, THIRD, THIRD]],
    weights: &[1.0],
};

pub static THREE_POINT: TriangleRule = TriangleRule {
    degree: 2,
    points: &[
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ],
    weights: &[THIRD, THIRD, THIRD],
};

// Radon's 7-point rule: a = (6 - sqrt 15)/21, b = (6 + sqrt 15)/21
const R_A: f64 = 0.101_286_507_323_456_34;
const R_A2: f64 = 0.797_426_985_353_087_3;
const R_B: f64 = 0.470_142_064_105_115_1;
const R_B2: f64 = 0.059_715_871_789_769_82;
const R_WA: f64 = 0.125_939_180_544_827_15;
const R_WB: f64 = 0.132_394_152_788_506_2;

pub static SEVEN_POINT: TriangleRule = TriangleRule {
    degree: 5,
    points: &[
        [THIRD, THIRD, THIRD],
        [R_A, R_A, R_A2],
        [R_A, R_A2, R_A],
        [R_A2, R_A, R_A],
        [R_B, R_B, R_B2],
        [R_B, R_B2, R_B],
        [R_B2, R_B, R_B],
    ],
    weights: &[0.225, R_WA, R_WA, R_WA, R_WB, R_WB, R_WB],
};

// Gauss nodes mapped to [0, 1]: 1/2 -+ 1/(2 sqrt 3), 1/2 -+ sqrt(3/5)/2
const G2: f64 = 0.288_675_134_594_812_9;
const G3: f64 = 0.387_298_334_620_741_7;

pub static GAUSS1: SegmentRule = SegmentRule {
    degree: 1,
    points: &[0.5],
    weights: &[1.0],
};

pub static GAUSS2: SegmentRule = SegmentRule {
    degree: 3,
    points: &[0.5 - G2, 0.5 + G2],
    weights: &[0.5, 0.5],
};

pub static GAUSS3: SegmentRule = SegmentRule {
    degree: 5,
    points: &[0.5 - G3, 0.5, 0.5 + G3],
    weights: &[5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
};

pub fn triangle_rule(degree: u32) -> Result<&'static TriangleRule, QuadratureError> {
    match degree {
        1 => Ok(&CENTROID),
        2 => Ok(&THREE_POINT),
        5 => Ok(&SEVEN_POINT),
        d => Err(QuadratureError::UnsupportedDegree(d)),
    }
}

pub fn gauss_rule(npoints: usize) -> Result<&'static SegmentRule, QuadratureError> {
    match npoints {
        1 => Ok(&GAUSS1),
        2 => Ok(&GAUSS2),
        3 => Ok(&GAUSS3),
        n => Err(QuadratureError::UnsupportedPoints(n)),
    }
}

impl TriangleRule {
    /// `∫_T f` over the triangle with the given (unsigned) area.
    #[inline]
    pub fn integrate(&self, tri: &[Point; 3], area: f64, mut f: impl FnMut(Point) -> f64) -> f64 {
        let mut sum = 0.0;
        for (b, w) in self.points.iter().zip(self.weights) {
            sum += w * f(geometry::barycentric_point(tri, b));
        }
        area * sum
    }
}

impl SegmentRule {
    #[inline]
    pub fn integrate(&self, a: Point, b: Point, mut f: impl FnMut(Point) -> f64) -> f64 {
        let len = geometry::distance(a, b);
        let mut sum = 0.0;
        for (t, w) in self.points.iter().zip(self.weights) {
            sum += w * f(geometry::lerp(a, b, *t));
        }
        len * sum
    }
}

pub fn triangle_area(tri: &[Point; 3]) -> f64 {
    0.5 * geometry::orient2d(tri[0], tri[1], tri[2]).abs()
}

pub fn integrate_triangle(
    f: impl FnMut(Point) -> f64,
    tri: &[Point; 3],
    degree: u32,
) -> Result<f64, QuadratureError> {
    Ok(triangle_rule(degree)?.integrate(tri, triangle_area(tri), f))
}

pub fn integrate_segment(
    f: impl FnMut(Point) -> f64,
    a: Point,
    b: Point,
    npoints: usize,
) -> Result<f64, QuadratureError> {
    Ok(gauss_rule(npoints)?.integrate(a, b, f))
}

/// `∫_T f` with `rule` applied on the `4^depth` congruent subtriangles
/// obtained by repeated midpoint subdivision. Used for integrands with a
/// point singularity at a vertex.
pub fn integrate_subdivided(
    rule: &TriangleRule,
    tri: &[Point; 3],
    depth: u32,
    f: &mut dyn FnMut(Point) -> f64,
) -> f64 {
    if depth == 0 {
        return rule.integrate(tri, triangle_area(tri), &mut *f);
    }
    let m01 = geometry::midpoint(tri[0], tri[1]);
    let m12 = geometry::midpoint(tri[1], tri[2]);
    let m20 = geometry::midpoint(tri[2], tri[0]);
    [
        [tri[0], m01, m20],
        [m01, tri[1], m12],
        [m20, m12, tri[2]],
        [m01, m12, m20],
    ]
    .iter()
    .map(|t| integrate_subdivided(rule, t, depth - 1, f))
    .sum()
}

/// Integration domain for [`integral_mean`].
#[derive(Clone, Copy, Debug)]
pub enum Domain {
    Triangle([Point; 3]),
    Segment(Point, Point),
}

impl Domain {
    pub fn measure(&self) -> f64 {
        match self {
            Domain::Triangle(t) => triangle_area(t),
            Domain::Segment(a, b) => geometry::distance(*a, *b),
        }
    }
}

/// `(1/|τ|) ∫_τ f`. For segments, `degree` is mapped to the smallest Gauss
/// rule of at least that exactness.
pub fn integral_mean(
    f: impl FnMut(Point) -> f64,
    domain: Domain,
    degree: u32,
) -> Result<f64, QuadratureError> {
    let measure = domain.measure();
    if measure <= 0.0 {
        return Err(QuadratureError::ZeroMeasure);
    }
    let integral = match domain {
        Domain::Triangle(t) => integrate_triangle(f, &t, degree)?,
        Domain::Segment(a, b) => {
            let n = (degree as usize + 2) / 2;
            integrate_segment(f, a, b, n.max(1))?
        }
    };
    Ok(integral / measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNIT: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// `∫ x^a y^b` over the unit right triangle.
    fn monomial_integral(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn rules_integrate_constants_exactly() {
        for rule in [&CENTROID, &THREE_POINT, &SEVEN_POINT] {
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for p in rule.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
        for rule in [&GAUSS1, &GAUSS2, &GAUSS3] {
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(integrate_triangle(|_| 1.0, &UNIT, 1).unwrap(), 0.5);
    }

    #[test]
    fn declared_exactness_on_monomials() {
        for (degree, rule) in [(1, &CENTROID), (2, &THREE_POINT), (5, &SEVEN_POINT)] {
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let got = rule.integrate(&UNIT, 0.5, |x| x[0].powi(a as i32) * x[1].powi(b as i32));
                    let want = monomial_integral(a, b);
                    assert!((got - want).abs() < 1e-15, "degree {degree} x^{a} y^{b}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn spec_examples() {
        let v = integrate_triangle(|x| x[0], &UNIT, 2).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        let v = integrate_triangle(|x| x[0].powi(4) * x[1], &UNIT, 5).unwrap();
        assert!((v - 1.0 / 210.0).abs() < 1e-14);
        assert_eq!(integrate_triangle(|_| 1.0, &UNIT, 3), Err(QuadratureError::UnsupportedDegree(3)));

        let len = integrate_segment(|_| 1.0, [0.0, 0.0], [3.0, 4.0], 1).unwrap();
        assert!((len - 5.0).abs() < 1e-15);
        let v = integrate_segment(|x| x[0] * x[0], [0.0, 0.0], [1.0, 0.0], 2).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        let v = integrate_segment(|x| x[0].powi(5), [0.0, 0.0], [1.0, 0.0], 3).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn mean_examples() {
        let c = integral_mean(|_| 2.5, Domain::Triangle(UNIT), 5).unwrap();
        assert!((c - 2.5).abs() < 1e-15);
        // the mean is a constant, so taking it again changes nothing
        let again = integral_mean(|_| c, Domain::Triangle(UNIT), 5).unwrap();
        assert!((again - c).abs() < 1e-15);
        let m = integral_mean(|x| x[0], Domain::Triangle(UNIT), 2).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-15);
        let m = integral_mean(|x| x[1], Domain::Segment([0.0, 0.0], [0.0, 2.0]), 3).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
        assert_eq!(
            integral_mean(|_| 1.0, Domain::Segment([1.0, 1.0], [1.0, 1.0]), 1),
            Err(QuadratureError::ZeroMeasure)
        );
    }

    #[test]
    fn subdivision_matches_plain_rule_on_polynomials() {
        let f = |x: Point| x[0].powi(3) * x[1] + 2.0 * x[1] * x[1];
        let plain = SEVEN_POINT.integrate(&UNIT, 0.5, f);
        let fine = integrate_subdivided(&SEVEN_POINT, &UNIT, 3, &mut |x| f(x));
        assert!((plain - fine).abs() < 1e-15);
        // r^{-1/2} near a vertex: subdivision improves the integral
        let g = |x: Point| (x[0] * x[0] + x[1] * x[1]).powf(-0.25);
        let coarse = (integrate_subdivided(&SEVEN_POINT, &UNIT, 0, &mut |x| g(x))).abs();
        let fine = integrate_subdivided(&SEVEN_POINT, &UNIT, 6, &mut |x| g(x));
        let finer = integrate_subdivided(&SEVEN_POINT, &UNIT, 7, &mut |x| g(x));
        assert!((fine - finer).abs() < (coarse - finer).abs());
    }

    fn l2_sq(f: &dyn Fn(Point) -> f64, c: f64, tri: &[Point; 3]) -> f64 {
        integrate_triangle(|x| (f(x) - c).powi(2), tri, 5).unwrap()
    }

    proptest! {
        /// The integral mean is the best constant approximation in L2.
        #[test]
        fn mean_minimizes_over_constants(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 6),
            consts in proptest::collection::vec(-5.0f64..5.0, 20),
        ) {
            let f = |x: Point| coeffs[0] + coeffs[1] * x[0] + coeffs[2] * x[1]
                + coeffs[3] * x[0] * x[1] + coeffs[4] * x[0] * x[0] + coeffs[5] * x[1] * x[1];
            let tri = [[0.1, -0.3], [1.2, 0.2], [-0.4, 0.9]];
            let mean = integral_mean(f, Domain::Triangle(tri), 5).unwrap();
            let best = l2_sq(&f, mean, &tri);
            prop_assert!(best <= l2_sq(&f, 0.0, &tri) + 1e-14);
            for c in consts {
                prop_assert!(best <= l2_sq(&f, c, &tri) + 1e-14);
            }
            // dense sampling of candidate constants finds nothing better
            let lo = mean - 1.0;
            for k in 0..=200 {
                let c = lo + 2.0 * k as f64 / 200.0;
                prop_assert!(best <= l2_sq(&f, c, &tri) + 1e-14);
            }
        }
    }
}
