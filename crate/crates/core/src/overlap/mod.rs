//! Intersection, union, IoU and GIoU for axis-aligned, rotated and 3D boxes.

pub(crate) mod kernel;

use serde::Serialize;

use crate::geom::{AABox2, Box3, ConvexPoly, RBox2, Vec2};
pub use kernel::{BoxId, Enclosure, EnclosureChoice, HeightBranch, VertexSource};
use kernel::{BoxVars, CuboidVars};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapResult {
    /// Area (2D) or volume (3D) of the overlap.
    pub intersection_area: f64,
    pub union_area: f64,
    pub iou: f64,
    /// Sources of the footprint intersection vertices, in polygon order.
    /// Empty for axis-aligned inputs and for zero-area overlaps.
    pub vertex_provenance: Vec<VertexSource>,
}

pub(crate) fn box_vars(b: &RBox2) -> BoxVars<f64> {
    BoxVars {
        cx: b.cx(),
        cy: b.cy(),
        w: b.w(),
        l: b.l(),
        yaw: b.yaw(),
    }
}

pub(crate) fn cuboid_vars(b: &Box3) -> CuboidVars<f64> {
    CuboidVars {
        bev: box_vars(&b.bev()),
        cz: b.cz(),
        h: b.h(),
    }
}

pub fn aa_iou(g: &AABox2, d: &AABox2) -> OverlapResult {
    let w = (g.x_max().min(d.x_max()) - g.x_min().max(d.x_min())).max(0.0);
    let h = (g.y_max().min(d.y_max()) - g.y_min().max(d.y_min())).max(0.0);
    let intersection = w * h;
    let union = g.area() + d.area() - intersection;
    let iou = if union > 0.0 {
        intersection / union
    } else {
        0.0
    };
    OverlapResult {
        intersection_area: intersection,
        union_area: union,
        iou,
        vertex_provenance: Vec::new(),
    }
}

/// Crossing point of segments `p1-p2` and `q1-q2` (endpoints included).
/// Parallel segments, including collinear overlapping ones, give `None`.
pub fn segment_intersection(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> Option<Vec2> {
    kernel::crossing_params(p1, p2, q1, q2).map(|(t, _)| p1 + (p2 - p1) * t)
}

/// Boundary-inclusive containment test.
pub fn point_in_rbox(p: Vec2, b: &RBox2) -> bool {
    kernel::inside_box(p, b.params())
}

/// The overlap region of two rotated boxes, or `None` when it has fewer than
/// three distinct vertices.
pub fn intersection_polygon(g: &RBox2, d: &RBox2) -> Option<ConvexPoly> {
    let (gv, dv) = (box_vars(g), box_vars(d));
    let (poly, _) = kernel::polygon_vertices(&gv, &dv, &gv.corners(), &dv.corners());
    (poly.len() >= 3)
        .then(|| ConvexPoly::from_ccw_unchecked(poly.iter().map(|p| p.value()).collect()))
}

pub fn rotated_iou(g: &RBox2, d: &RBox2) -> OverlapResult {
    let p = kernel::planar(&box_vars(g), &box_vars(d));
    OverlapResult {
        intersection_area: p.intersection,
        union_area: p.union,
        iou: p.iou,
        vertex_provenance: p.provenance,
    }
}

/// Volume IoU of yaw-only cuboids: footprint overlap times height overlap.
pub fn iou_3d(g: &Box3, d: &Box3) -> OverlapResult {
    let v = kernel::volumetric(&cuboid_vars(g), &cuboid_vars(d));
    OverlapResult {
        intersection_area: v.intersection,
        union_area: v.union,
        iou: v.iou,
        vertex_provenance: v.planar.provenance,
    }
}

/// Smallest axis-aligned rectangle containing the corners of both boxes
/// ([`Enclosure::Aabb`]).
pub fn enclosing_aabb(g: &RBox2, d: &RBox2) -> AABox2 {
    let cs: Vec<Vec2> = g.corners().into_iter().chain(d.corners()).collect();
    let fold =
        |f: fn(f64, f64) -> f64, init: f64, sel: fn(&Vec2) -> f64| cs.iter().map(sel).fold(init, f);
    AABox2::new(
        fold(f64::min, f64::INFINITY, |p| p.x),
        fold(f64::min, f64::INFINITY, |p| p.y),
        fold(f64::max, f64::NEG_INFINITY, |p| p.x),
        fold(f64::max, f64::NEG_INFINITY, |p| p.y),
    )
    .expect("corner extrema of valid boxes are finite and ordered")
}

/// GIoU with the convex hull of both boxes as the enclosing shape.
pub fn giou(g: &RBox2, d: &RBox2) -> f64 {
    giou_with(g, d, Enclosure::default())
}

pub fn giou_with(g: &RBox2, d: &RBox2, enclosure: Enclosure) -> f64 {
    kernel::giou_planar(&box_vars(g), &box_vars(d), enclosure).giou
}

/// GIoU of cuboids. The enclosing solid is the footprint hull extruded over
/// the joint vertical span.
pub fn giou_3d(g: &Box3, d: &Box3) -> f64 {
    giou_3d_with(g, d, Enclosure::default())
}

pub fn giou_3d_with(g: &Box3, d: &Box3, enclosure: Enclosure) -> f64 {
    kernel::giou_volumetric(&cuboid_vars(g), &cuboid_vars(d), enclosure).giou
}
