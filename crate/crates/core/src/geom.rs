//! Box and point primitives.
//!
//! Conventions: yaw is in radians, counterclockwise positive, and zero when
//! the box's local axes coincide with the world axes. `w` is the extent along
//! the local x axis and `l` the extent along the local y axis.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::GeomError;
use crate::scalar::Scalar;
use crate::EPS_GEOM;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Maps any finite angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> Result<f64, GeomError> {
    if !theta.is_finite() {
        return Err(GeomError::NonFinite("angle"));
    }
    if theta > -PI && theta <= PI {
        return Ok(theta);
    }
    let r = theta.rem_euclid(2.0 * PI);
    Ok(if r > PI { r - 2.0 * PI } else { r })
}

fn finite(name: &'static str, v: f64) -> Result<f64, GeomError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GeomError::NonFinite(name))
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64, GeomError> {
    finite(name, v)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(GeomError::NonPositive { name, value: v })
    }
}

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AABox2 {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl AABox2 {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeomError> {
        for (n, v) in [
            ("x_min", x_min),
            ("y_min", y_min),
            ("x_max", x_max),
            ("y_max", y_max),
        ] {
            finite(n, v)?;
        }
        if x_min > x_max {
            return Err(GeomError::Inverted {
                axis: "x",
                min: x_min,
                max: x_max,
            });
        }
        if y_min > y_max {
            return Err(GeomError::Inverted {
                axis: "y",
                min: y_min,
                max: y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// The equivalent rotated box with yaw 0. Fails for zero-width boxes.
    pub fn to_rbox(&self) -> Result<RBox2, GeomError> {
        RBox2::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
            self.width(),
            self.height(),
            0.0,
        )
    }
}

/// Rotated rectangle: center, extents along the local axes, and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RBox2 {
    cx: f64,
    cy: f64,
    w: f64,
    l: f64,
    yaw: f64,
}

impl RBox2 {
    pub fn new(cx: f64, cy: f64, w: f64, l: f64, yaw: f64) -> Result<Self, GeomError> {
        Ok(Self {
            cx: finite("cx", cx)?,
            cy: finite("cy", cy)?,
            w: positive("w", w)?,
            l: positive("l", l)?,
            yaw: normalize_angle(yaw)?,
        })
    }

    /// Builds from `[cx, cy, w, l, yaw]`.
    pub fn from_params(p: [f64; 5]) -> Result<Self, GeomError> {
        Self::new(p[0], p[1], p[2], p[3], p[4])
    }

    pub fn params(&self) -> [f64; 5] {
        [self.cx, self.cy, self.w, self.l, self.yaw]
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.l
    }

    /// Corners in counterclockwise order, starting from the local
    /// `(+w/2, +l/2)` corner.
    pub fn corners(&self) -> [Vec2; 4] {
        box_corners(self.cx, self.cy, self.w, self.l, self.yaw).map(|p| Vec2::new(p.x, p.y))
    }

    /// Coordinates of `p` in the box frame (origin at the center, axes along
    /// `w` and `l`).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, GeomError> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.l, self.yaw)
    }

    /// Uniform scaling about the world origin.
    pub fn scaled(&self, s: f64) -> Result<Self, GeomError> {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.l * s, self.yaw)
    }

    /// Rotation by `theta` about the world origin.
    pub fn rotated(&self, theta: f64) -> Result<Self, GeomError> {
        let (s, c) = theta.sin_cos();
        Self::new(
            c * self.cx - s * self.cy,
            s * self.cx + c * self.cy,
            self.w,
            self.l,
            self.yaw + theta,
        )
    }
}

/// Yaw-only cuboid. `(cx, cy)` is the footprint center, `cz` the vertical
/// center, `h` the vertical extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Box3 {
    cx: f64,
    cy: f64,
    cz: f64,
    w: f64,
    l: f64,
    h: f64,
    yaw: f64,
}

impl Box3 {
    pub fn new(
        cx: f64,
        cy: f64,
        cz: f64,
        w: f64,
        l: f64,
        h: f64,
        yaw: f64,
    ) -> Result<Self, GeomError> {
        Ok(Self {
            cx: finite("cx", cx)?,
            cy: finite("cy", cy)?,
            cz: finite("cz", cz)?,
            w: positive("w", w)?,
            l: positive("l", l)?,
            h: positive("h", h)?,
            yaw: normalize_angle(yaw)?,
        })
    }

    /// Builds from `[cx, cy, cz, w, l, h, yaw]`.
    pub fn from_params(p: [f64; 7]) -> Result<Self, GeomError> {
        Self::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6])
    }

    pub fn params(&self) -> [f64; 7] {
        [self.cx, self.cy, self.cz, self.w, self.l, self.h, self.yaw]
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn cz(&self) -> f64 {
        self.cz
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn top(&self) -> f64 {
        self.cz + 0.5 * self.h
    }

    pub fn bottom(&self) -> f64 {
        self.cz - 0.5 * self.h
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    /// Bird-eye-view footprint.
    pub fn bev(&self) -> RBox2 {
        RBox2 {
            cx: self.cx,
            cy: self.cy,
            w: self.w,
            l: self.l,
            yaw: self.yaw,
        }
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPoly {
    vertices: Vec<Vec2>,
}

impl ConvexPoly {
    /// Validates vertex count (3..=8) and counterclockwise convexity up to
    /// [`EPS_GEOM`].
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeomError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeomError::TooFewVertices(n));
        }
        if n > 8 {
            return Err(GeomError::TooManyVertices(n));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite("vertex"));
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < -EPS_GEOM {
                return Err(GeomError::NotConvex((i + 1) % n));
            }
        }
        Ok(Self { vertices })
    }

    pub(crate) fn from_ccw_unchecked(vertices: Vec<Vec2>) -> Self {
        debug_assert!(vertices.len() >= 3);
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_fan_area(&self.vertices).abs()
    }
}

fn signed_fan_area(vs: &[Vec2]) -> f64 {
    let o = vs[0];
    let twice: f64 = vs[1..].windows(2).map(|w| (w[0] - o).cross(w[1] - o)).sum();
    0.5 * twice
}

/// Polygon area as the sum of triangle-fan areas about the first vertex.
pub fn shoelace_area(vertices: &[Vec2]) -> Result<f64, GeomError> {
    if vertices.len() < 3 {
        return Err(GeomError::TooFewVertices(vertices.len()));
    }
    Ok(signed_fan_area(vertices).abs())
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Pt<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Pt<S> {
    pub fn value(&self) -> Vec2 {
        Vec2::new(self.x.value(), self.y.value())
    }
}

/// Corner computation shared by the plain and differentiable paths.
pub(crate) fn box_corners<S: Scalar>(cx: S, cy: S, w: S, l: S, yaw: S) -> [Pt<S>; 4] {
    let (c, s) = (yaw.cos(), yaw.sin());
    let hw = w * 0.5;
    let hl = l * 0.5;
    let (cu, su) = (c * hw, s * hw);
    let (cv, sv) = (c * hl, s * hl);
    [
        Pt {
            x: cx + cu - sv,
            y: cy + su + cv,
        },
        Pt {
            x: cx - cu - sv,
            y: cy - su + cv,
        },
        Pt {
            x: cx - cu + sv,
            y: cy - su - cv,
        },
        Pt {
            x: cx + cu + sv,
            y: cy + su - cv,
        },
    ]
}

/// Signed triangle-fan area about vertex 0 over generic scalars.
pub(crate) fn fan_area<S: Scalar>(vs: &[Pt<S>]) -> S {
    let o = vs[0];
    let mut acc = None;
    for w in vs[1..].windows(2) {
        let (ax, ay) = (w[0].x - o.x, w[0].y - o.y);
        let (bx, by) = (w[1].x - o.x, w[1].y - o.y);
        let t = ax * by - ay * bx;
        acc = Some(match acc {
            None => t,
            Some(a) => a + t,
        });
    }
    acc.expect("fan needs three vertices") * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn axis_aligned_square_corners() {
        let b = RBox2::new(0.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        let expected = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        for (c, e) in b.corners().iter().zip(expected) {
            assert_eq!(*c, Vec2::new(e.0, e.1));
        }
    }

    #[test]
    fn quarter_turn_square_shifts_order() {
        let a = RBox2::new(0.0, 0.0, 2.0, 2.0, 0.0).unwrap().corners();
        let b = RBox2::new(0.0, 0.0, 2.0, 2.0, FRAC_PI_2).unwrap().corners();
        for i in 0..4 {
            assert!(close(b[i], a[(i + 1) % 4], 1e-12));
        }
    }

    #[test]
    fn rotated_corner_matches_rotation_matrix() {
        let b = RBox2::new(1.0, 1.0, 2.0, 4.0, FRAC_PI_6).unwrap();
        let (s, c) = (FRAC_PI_6.sin(), FRAC_PI_6.cos());
        // [c -s; s c] * (1, 2) + (1, 1)
        let expected = Vec2::new(1.0 + c * 1.0 - s * 2.0, 1.0 + s * 1.0 + c * 2.0);
        assert!(close(b.corners()[0], expected, 1e-12));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
        assert_eq!(normalize_angle(PI).unwrap(), PI);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn shoelace_examples() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(shoelace_area(&sq).unwrap(), 1.0);
        let tri = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(0.0, 2.0),
        ];
        assert_eq!(shoelace_area(&tri).unwrap(), 2.0);
        assert_eq!(
            shoelace_area(&sq[..2]).unwrap_err(),
            GeomError::TooFewVertices(2)
        );
    }

    #[test]
    fn octagon_area_closed_form() {
        // Crossed 2x2 squares: vertices at (+-1, +-(sqrt2-1)) and swaps.
        let k = 2f64.sqrt() - 1.0;
        let vs = vec![
            Vec2::new(1.0, -k),
            Vec2::new(1.0, k),
            Vec2::new(k, 1.0),
            Vec2::new(-k, 1.0),
            Vec2::new(-1.0, k),
            Vec2::new(-1.0, -k),
            Vec2::new(-k, -1.0),
            Vec2::new(k, -1.0),
        ];
        let poly = ConvexPoly::new(vs).unwrap();
        assert!((poly.area() - 8.0 * k).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(RBox2::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(RBox2::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(RBox2::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(Box3::new(0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(AABox2::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn convex_poly_validation() {
        let bowtie = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(ConvexPoly::new(bowtie).is_err());
        let cw = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 0.0),
        ];
        assert!(ConvexPoly::new(cw).is_err());
    }

    #[test]
    fn bev_projection_preserves_footprint() {
        let b = Box3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0).unwrap();
        let f = b.bev();
        assert_eq!(
            [f.cx(), f.cy(), f.w(), f.l(), f.yaw()],
            [b.cx(), b.cy(), b.w(), b.l(), b.yaw()]
        );
    }

    proptest! {
        #[test]
        fn corner_area_matches_extents(
            cx in -50.0..50.0f64, cy in -50.0..50.0f64,
            w in 0.01..20.0f64, l in 0.01..20.0f64, yaw in -10.0..10.0f64,
        ) {
            let b = RBox2::new(cx, cy, w, l, yaw).unwrap();
            let cs = b.corners();
            let area = shoelace_area(&cs).unwrap();
            prop_assert!((area - w * l).abs() <= 1e-9 * w * l);
            prop_assert!(ConvexPoly::new(cs.to_vec()).is_ok());
        }

        #[test]
        fn corners_translate_with_center(
            cx in -50.0..50.0f64, cy in -50.0..50.0f64,
            w in 0.01..20.0f64, l in 0.01..20.0f64, yaw in -4.0..4.0f64,
            dx in -10.0..10.0f64, dy in -10.0..10.0f64,
        ) {
            let b = RBox2::new(cx, cy, w, l, yaw).unwrap();
            let t = b.translated(dx, dy).unwrap();
            for (p, q) in b.corners().iter().zip(t.corners()) {
                prop_assert!(close(*p + Vec2::new(dx, dy), q, 1e-12 * (1.0 + cx.abs().max(cy.abs()) + 20.0)));
            }
        }

        #[test]
        fn normalize_is_idempotent_and_in_range(theta in -1e3..1e3f64) {
            let a = normalize_angle(theta).unwrap();
            prop_assert!(a > -PI && a <= PI);
            prop_assert_eq!(normalize_angle(a).unwrap(), a);
            let k = ((theta - a) / (2.0 * PI)).round();
            prop_assert!((theta - a - 2.0 * PI * k).abs() < 1e-9);
        }
    }
}
