//! The circle group SO(2) and the torus SO(2) × SO(2).
//!
//! Angles are stored in the canonical half-open interval (−π, π]. Every
//! constructor and group operation re-wraps into that interval, so the rest of
//! the crate never has to reason about off-by-2π representatives.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TAU: f64 = 2.0 * PI;

/// Default radius below which the projection onto the circle is undefined.
pub const DEFAULT_EPSILON_ORIGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector of norm {norm:e} is too close to the origin to project onto the circle")]
    DegenerateOrigin { norm: f64 },
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

/// Wraps a real number into (−π, π].
///
/// Values already inside the interval are returned unchanged, bit for bit.
#[inline]
pub fn wrap_angle(v: f64) -> f64 {
    if v > -PI && v <= PI {
        return v;
    }
    let r = v.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// A point on the circle, i.e. an element of SO(2) in angular coordinates.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CircleAngle(f64);

impl CircleAngle {
    pub const IDENTITY: CircleAngle = CircleAngle(0.0);

    /// Wraps `theta` into the canonical interval.
    ///
    /// Non-finite input is passed through as NaN; use [`exp_so2`] when the
    /// caller needs an error instead.
    pub fn new(theta: f64) -> Self {
        if theta.is_finite() {
            CircleAngle(wrap_angle(theta))
        } else {
            CircleAngle(f64::NAN)
        }
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn inverse(self) -> Self {
        CircleAngle::new(-self.0)
    }

    pub fn compose(self, other: CircleAngle) -> Self {
        group_compose(self, other)
    }

    pub fn unit_vector(self) -> UnitVector2 {
        let (s, c) = self.0.sin_cos();
        UnitVector2 { y1: c, y2: s }
    }
}

impl fmt::Display for CircleAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A unit vector in ℝ², the normalized intermediate coordinate y/‖y‖.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector2 {
    pub y1: f64,
    pub y2: f64,
}

impl UnitVector2 {
    pub fn normalize(y: [f64; 2], epsilon_origin: f64) -> Result<Self, GeometryError> {
        if !y[0].is_finite() {
            return Err(GeometryError::NonFinite(y[0]));
        }
        if !y[1].is_finite() {
            return Err(GeometryError::NonFinite(y[1]));
        }
        let norm = y[0].hypot(y[1]);
        if norm <= epsilon_origin {
            return Err(GeometryError::DegenerateOrigin { norm });
        }
        Ok(UnitVector2 { y1: y[0] / norm, y2: y[1] / norm })
    }

    pub fn angle(self) -> CircleAngle {
        CircleAngle::new(self.y2.atan2(self.y1))
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.y1, self.y2]
    }
}

/// A point on the torus S¹ × S¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub a: CircleAngle,
    pub b: CircleAngle,
}

impl TorusPoint {
    pub fn new(a: f64, b: f64) -> Self {
        TorusPoint { a: CircleAngle::new(a), b: CircleAngle::new(b) }
    }

    pub fn compose(self, other: TorusPoint) -> Self {
        TorusPoint { a: self.a.compose(other.a), b: self.b.compose(other.b) }
    }

    /// Product-metric geodesic distance.
    pub fn geodesic_distance(self, other: TorusPoint) -> f64 {
        geodesic_distance(self.a, other.a).hypot(geodesic_distance(self.b, other.b))
    }
}

/// π: ℝ² \ B(0, ε) → S¹ with the default origin threshold.
pub fn project_to_circle(y: [f64; 2]) -> Result<CircleAngle, GeometryError> {
    project_to_circle_with(y, DEFAULT_EPSILON_ORIGIN)
}

pub fn project_to_circle_with(y: [f64; 2], epsilon_origin: f64) -> Result<CircleAngle, GeometryError> {
    UnitVector2::normalize(y, epsilon_origin).map(UnitVector2::angle)
}

/// Exponential map from the Lie algebra so(2) ≅ ℝ onto the group.
pub fn exp_so2(v: f64) -> Result<CircleAngle, GeometryError> {
    if !v.is_finite() {
        return Err(GeometryError::NonFinite(v));
    }
    Ok(CircleAngle(wrap_angle(v)))
}

/// Logarithm back into the principal branch (−π, π] of the Lie algebra.
pub fn log_so2(z: CircleAngle) -> f64 {
    z.0
}

pub fn group_compose(a: CircleAngle, b: CircleAngle) -> CircleAngle {
    CircleAngle(wrap_angle(a.0 + b.0))
}

/// Arc-length distance on the unit circle, in [0, π].
pub fn geodesic_distance(a: CircleAngle, b: CircleAngle) -> f64 {
    wrap_angle(a.0 - b.0).abs()
}

/// Squared chordal distance between the embeddings of two angles in ℝ².
pub fn chordal_distance_sq(a: CircleAngle, b: CircleAngle) -> f64 {
    let (sa, ca) = a.0.sin_cos();
    let (sb, cb) = b.0.sin_cos();
    (ca - cb).powi(2) + (sa - sb).powi(2)
}

/// A(y) = [[y₁, −y₂], [y₂, y₁]] for y = (cos a, sin a). Row-major.
pub fn rotation_matrix(a: CircleAngle) -> [[f64; 2]; 2] {
    let (s, c) = a.0.sin_cos();
    [[c, -s], [s, c]]
}

pub fn rotate_vector(a: CircleAngle, v: [f64; 2]) -> [f64; 2] {
    let m = rotation_matrix(a);
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_circle([2.0, 0.0]).unwrap().radians(), 0.0);
        assert_eq!(project_to_circle([0.0, -3.0]).unwrap().radians(), -FRAC_PI_2);
        assert!(matches!(
            project_to_circle([1e-12, 0.0]),
            Err(GeometryError::DegenerateOrigin { .. })
        ));
        // The threshold is configurable.
        assert!(project_to_circle_with([1e-12, 0.0], 1e-15).is_ok());
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_so2(0.0).unwrap().radians(), 0.0);
        assert!((exp_so2(3.0 * PI).unwrap().radians() - PI).abs() < 1e-12);
        assert!((exp_so2(-PI - 0.1).unwrap().radians() - (PI - 0.1)).abs() < 1e-12);
        assert_eq!(exp_so2(-PI).unwrap().radians(), PI);
        assert!(matches!(exp_so2(f64::NAN), Err(GeometryError::NonFinite(_))));
        assert!(matches!(exp_so2(f64::INFINITY), Err(GeometryError::NonFinite(_))));
    }

    #[test]
    fn compose_examples() {
        let q = CircleAngle::new(FRAC_PI_2);
        assert!((group_compose(q, q).radians() - PI).abs() < 1e-15);
        let p = CircleAngle::new(PI);
        assert_eq!(group_compose(p, p).radians(), 0.0);
        for x in [-3.0, -1.0, 0.5, PI] {
            let a = CircleAngle::new(x);
            assert_eq!(group_compose(a, CircleAngle::IDENTITY), a);
        }
    }

    #[test]
    fn geodesic_examples() {
        assert_eq!(geodesic_distance(CircleAngle::new(0.0), CircleAngle::new(PI)), PI);
        let d = geodesic_distance(CircleAngle::new(PI - 0.1), CircleAngle::new(-PI + 0.1));
        assert!((d - 0.2).abs() < 1e-12);
        assert_eq!(geodesic_distance(CircleAngle::new(1.3), CircleAngle::new(1.3)), 0.0);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_matrix(CircleAngle::new(0.0)), [[1.0, 0.0], [0.0, 1.0]]);
        let r = rotation_matrix(CircleAngle::new(FRAC_PI_2));
        let expect = [[0.0, -1.0], [1.0, 0.0]];
        let r2 = rotation_matrix(CircleAngle::new(PI));
        let expect2 = [[-1.0, 0.0], [0.0, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[i][j] - expect[i][j]).abs() < 1e-15);
                assert!((r2[i][j] - expect2[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scale_invariance_of_projection_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let y = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            if (y[0] as f64).hypot(y[1]) <= 1e-6 {
                continue;
            }
            let s: f64 = rng.random_range(1e-3..1e3);
            let a = project_to_circle(y).unwrap();
            let b = project_to_circle([s * y[0], s * y[1]]).unwrap();
            assert!(geodesic_distance(a, b) < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn canonical_interval(v in -1e6f64..1e6) {
            let a = CircleAngle::new(v);
            prop_assert!(a.radians() > -PI && a.radians() <= PI);
        }

        #[test]
        fn exp_log_inverse(theta in -PI..=PI) {
            let z = CircleAngle::new(theta);
            prop_assert_eq!(exp_so2(log_so2(z)).unwrap(), z);
        }

        #[test]
        fn rotation_homomorphism(a in -PI..=PI, b in -PI..=PI) {
            let (a, b) = (CircleAngle::new(a), CircleAngle::new(b));
            let lhs = matmul(rotation_matrix(a), rotation_matrix(b));
            let rhs = rotation_matrix(group_compose(a, b));
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((lhs[i][j] - rhs[i][j]).abs() < 1e-12);
                }
            }
            let m = rotation_matrix(a);
            prop_assert!((m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0).abs() < 1e-12);
        }

        #[test]
        fn geodesic_left_invariant(a in -PI..=PI, b in -PI..=PI, c in -PI..=PI) {
            let (a, b, c) = (CircleAngle::new(a), CircleAngle::new(b), CircleAngle::new(c));
            let d0 = geodesic_distance(a, b);
            let d1 = geodesic_distance(c.compose(a), c.compose(b));
            prop_assert!((d0 - d1).abs() < 1e-12);
            prop_assert!((geodesic_distance(b, a) - d0).abs() == 0.0);
        }

        #[test]
        fn geodesic_triangle(a in -PI..=PI, b in -PI..=PI, c in -PI..=PI) {
            let (a, b, c) = (CircleAngle::new(a), CircleAngle::new(b), CircleAngle::new(c));
            prop_assert!(geodesic_distance(a, c) <= geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-12);
        }

        #[test]
        fn unit_vector_has_unit_norm(y1 in -1e3f64..1e3, y2 in -1e3f64..1e3) {
            prop_assume!(y1.hypot(y2) > 1e-6);
            let u = UnitVector2::normalize([y1, y2], DEFAULT_EPSILON_ORIGIN).unwrap();
            prop_assert!((u.y1 * u.y1 + u.y2 * u.y2 - 1.0).abs() < 1e-12);
        }
    }
}
