//! Forward pass written once over [`Scalar`].
//!
//! Intersection vertices come from two sources: edge-edge crossings and
//! corners of one box lying inside the other. Candidates are merged when
//! closer than [`EPS_DEDUP`], ordered by angle about their centroid and
//! integrated with a triangle fan. The crossing point is a custom node whose
//! partials come from implicit differentiation of the two line equations.

use serde::Serialize;

use crate::geom::{box_corners, fan_area, Pt, Vec2};
use crate::scalar::{argmax, argmin, Scalar};
use crate::{EPS_DEDUP, EPS_GEOM};

/// Which box a corner belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BoxId {
    G,
    D,
}

/// Origin of one vertex of the intersection polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VertexSource {
    /// Corner `index` of box `owner`, lying inside the other box.
    Corner { owner: BoxId, index: u8 },
    /// Crossing of edge `g_edge` of `g` (corner i to i+1) with edge `d_edge`
    /// of `d`.
    Crossing { g_edge: u8, d_edge: u8 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxVars<S> {
    pub cx: S,
    pub cy: S,
    pub w: S,
    pub l: S,
    pub yaw: S,
}

impl<S: Scalar> BoxVars<S> {
    pub fn corners(&self) -> [Pt<S>; 4] {
        box_corners(self.cx, self.cy, self.w, self.l, self.yaw)
    }

    pub fn area(&self) -> S {
        self.w * self.l
    }

    fn values(&self) -> [f64; 5] {
        [
            self.cx.value(),
            self.cy.value(),
            self.w.value(),
            self.l.value(),
            self.yaw.value(),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CuboidVars<S> {
    pub bev: BoxVars<S>,
    pub cz: S,
    pub h: S,
}

impl<S: Scalar> CuboidVars<S> {
    fn top(&self) -> S {
        self.cz + self.h * 0.5
    }

    fn bottom(&self) -> S {
        self.cz - self.h * 0.5
    }
}

/// Boundary-inclusive containment of `p` in the box given as
/// `[cx, cy, w, l, yaw]`.
pub(crate) fn inside_box(p: Vec2, b: [f64; 5]) -> bool {
    let (s, c) = b[4].sin_cos();
    let dx = p.x - b[0];
    let dy = p.y - b[1];
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= 0.5 * b[2] + EPS_GEOM && v.abs() <= 0.5 * b[3] + EPS_GEOM
}

/// Crossing parameters `(t, u)` along `p1->p2` and `q1->q2`, or `None` when
/// the segments are parallel or the crossing lies outside either segment.
pub(crate) fn crossing_params(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> Option<(f64, f64)> {
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = r.cross(s);
    if denom.abs() <= EPS_GEOM {
        return None;
    }
    let qp = q1 - p1;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Crossing point of the lines through `p1,p2` and `q1,q2` as a custom node.
///
/// With `r = p2 - p1`, `s = q2 - q1`, the point `X` satisfies
/// `F1 = (X - p1) x r = 0` and `F2 = (X - q1) x s = 0`. Implicit
/// differentiation gives `dX = (s * dF1 - r * dF2) / (r x s)`, where `dF1`,
/// `dF2` are the partials of `F` with respect to the endpoint coordinates at
/// fixed `X`.
fn crossing_point<S: Scalar>(p1: Pt<S>, p2: Pt<S>, q1: Pt<S>, q2: Pt<S>, t: f64) -> Pt<S> {
    let (a1, a2, b1, b2) = (p1.value(), p2.value(), q1.value(), q2.value());
    let r = a2 - a1;
    let x = a1 + r * t;
    if !S::TRACKED {
        return Pt {
            x: S::custom(x.x, &[]),
            y: S::custom(x.y, &[]),
        };
    }
    let s = b2 - b1;
    let denom = r.cross(s);
    let a = x - a1;
    let b = x - b1;
    // (d/dcoord) of F1 and F2, ordered p1.x p1.y p2.x p2.y | q1.x q1.y q2.x q2.y
    let df1 = [-r.y + a.y, r.x - a.x, -a.y, a.x];
    let df2 = [-s.y + b.y, s.x - b.x, -b.y, b.x];
    let parents_f1 = [p1.x, p1.y, p2.x, p2.y];
    let parents_f2 = [q1.x, q1.y, q2.x, q2.y];
    let mut px = Vec::with_capacity(8);
    let mut py = Vec::with_capacity(8);
    for k in 0..4 {
        px.push((parents_f1[k], s.x * df1[k] / denom));
        py.push((parents_f1[k], s.y * df1[k] / denom));
    }
    for k in 0..4 {
        px.push((parents_f2[k], -r.x * df2[k] / denom));
        py.push((parents_f2[k], -r.y * df2[k] / denom));
    }
    Pt {
        x: S::custom(x.x, &px),
        y: S::custom(x.y, &py),
    }
}

pub(crate) struct Planar<S> {
    pub corners_g: [Pt<S>; 4],
    pub corners_d: [Pt<S>; 4],
    pub polygon: Vec<Pt<S>>,
    pub provenance: Vec<VertexSource>,
    pub intersection: S,
    pub area_g: S,
    pub area_d: S,
    pub union: S,
    pub iou: S,
}

/// Intersection polygon vertices, counterclockwise, with their sources. Fewer
/// than three vertices means the overlap has zero area.
pub(crate) fn polygon_vertices<S: Scalar>(
    g: &BoxVars<S>,
    d: &BoxVars<S>,
    cg: &[Pt<S>; 4],
    cd: &[Pt<S>; 4],
) -> (Vec<Pt<S>>, Vec<VertexSource>) {
    let gv = g.values();
    let dv = d.values();
    let mut pts: Vec<Pt<S>> = Vec::with_capacity(8);
    let mut tags: Vec<VertexSource> = Vec::with_capacity(8);
    let mut push = |p: Pt<S>, tag: VertexSource, pts: &mut Vec<Pt<S>>| {
        let v = p.value();
        if pts.iter().all(|q| (q.value() - v).norm() >= EPS_DEDUP) {
            pts.push(p);
            tags.push(tag);
        }
    };

    for (i, c) in cg.iter().enumerate() {
        if inside_box(c.value(), dv) {
            push(
                *c,
                VertexSource::Corner {
                    owner: BoxId::G,
                    index: i as u8,
                },
                &mut pts,
            );
        }
    }
    for (i, c) in cd.iter().enumerate() {
        if inside_box(c.value(), gv) {
            push(
                *c,
                VertexSource::Corner {
                    owner: BoxId::D,
                    index: i as u8,
                },
                &mut pts,
            );
        }
    }
    for i in 0..4 {
        let (p1, p2) = (cg[i], cg[(i + 1) % 4]);
        for j in 0..4 {
            let (q1, q2) = (cd[j], cd[(j + 1) % 4]);
            if let Some((t, _)) = crossing_params(p1.value(), p2.value(), q1.value(), q2.value()) {
                let x = crossing_point(p1, p2, q1, q2, t);
                push(
                    x,
                    VertexSource::Crossing {
                        g_edge: i as u8,
                        d_edge: j as u8,
                    },
                    &mut pts,
                );
            }
        }
    }

    if pts.len() < 3 {
        return (pts, tags);
    }
    let order = angular_order(&pts.iter().map(|p| p.value()).collect::<Vec<_>>());
    (
        order.iter().map(|&i| pts[i]).collect(),
        order.iter().map(|&i| tags[i]).collect(),
    )
}

/// Permutation sorting `vs` counterclockwise about their centroid. Angles
/// within 1e-12 of each other are ordered by distance from the centroid.
fn angular_order(vs: &[Vec2]) -> Vec<usize> {
    let n = vs.len() as f64;
    let c = vs.iter().fold(Vec2::default(), |a, &v| a + v) * (1.0 / n);
    let keys: Vec<(f64, f64)> = vs
        .iter()
        .map(|&v| {
            let d = v - c;
            (d.y.atan2(d.x), d.norm())
        })
        .collect();
    let mut idx: Vec<usize> = (0..vs.len()).collect();
    idx.sort_by(|&a, &b| keys[a].0.total_cmp(&keys[b].0).then(a.cmp(&b)));
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && keys[idx[end]].0 - keys[idx[end - 1]].0 <= 1e-12 {
            end += 1;
        }
        if end - start > 1 {
            idx[start..end].sort_by(|&a, &b| keys[a].1.total_cmp(&keys[b].1).then(a.cmp(&b)));
        }
        start = end;
    }
    idx
}

pub(crate) fn planar<S: Scalar>(g: &BoxVars<S>, d: &BoxVars<S>) -> Planar<S> {
    let corners_g = g.corners();
    let corners_d = d.corners();
    let (polygon, provenance) = polygon_vertices(g, d, &corners_g, &corners_d);
    let area_g = g.area();
    let area_d = d.area();
    if polygon.len() < 3 {
        let zero = g.cx.constant_like(0.0);
        let union = area_g + area_d;
        return Planar {
            corners_g,
            corners_d,
            polygon: Vec::new(),
            provenance: Vec::new(),
            intersection: zero,
            area_g,
            area_d,
            union,
            iou: zero,
        };
    }
    let intersection = fan_area(&polygon);
    let union = area_g + area_d - intersection;
    let iou = intersection / union;
    Planar {
        corners_g,
        corners_d,
        polygon,
        provenance,
        intersection,
        area_g,
        area_d,
        union,
        iou,
    }
}

/// Shape enclosing both boxes in the GIoU penalty term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum Enclosure {
    /// Convex hull of the eight corners.
    #[default]
    ConvexHull,
    /// Axis-aligned rectangle over the eight corners.
    Aabb,
}

/// Which corners (indices into the eight stacked corners, `g` first) define
/// the enclosure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum EnclosureChoice {
    /// Hull vertices in counterclockwise order.
    Hull(Vec<usize>),
    /// Winners of min x, max x, min y, max y.
    Aabb([usize; 4]),
}

impl EnclosureChoice {
    /// Order-independent form for comparing branches.
    pub fn canonical(&self) -> Self {
        match self {
            EnclosureChoice::Hull(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                EnclosureChoice::Hull(v)
            }
            a => a.clone(),
        }
    }
}

/// Counterclockwise convex hull (monotone chain) of `pts`, returned as
/// indices. Collinear and duplicate points are dropped.
pub(crate) fn hull_indices(pts: &[Vec2]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a]
            .x
            .total_cmp(&pts[b].x)
            .then(pts[a].y.total_cmp(&pts[b].y))
            .then(a.cmp(&b))
    });
    let turn = |o: usize, a: usize, b: usize| (pts[a] - pts[o]).cross(pts[b] - pts[o]);
    let chain = |order: &mut dyn Iterator<Item = usize>| {
        let mut out: Vec<usize> = Vec::new();
        for i in order {
            while out.len() >= 2 && turn(out[out.len() - 2], out[out.len() - 1], i) <= 0.0 {
                out.pop();
            }
            out.push(i);
        }
        out.pop();
        out
    };
    let mut hull = chain(&mut idx.iter().copied());
    hull.extend(chain(&mut idx.iter().rev().copied()));
    hull
}

pub(crate) fn enclosure<S: Scalar>(
    cg: &[Pt<S>; 4],
    cd: &[Pt<S>; 4],
    kind: Enclosure,
) -> (S, EnclosureChoice) {
    let all: Vec<Pt<S>> = cg.iter().chain(cd).copied().collect();
    match kind {
        Enclosure::ConvexHull => {
            let hull = hull_indices(&all.iter().map(|p| p.value()).collect::<Vec<_>>());
            let vs: Vec<Pt<S>> = hull.iter().map(|&i| all[i]).collect();
            (fan_area(&vs), EnclosureChoice::Hull(hull))
        }
        Enclosure::Aabb => {
            let xs: Vec<S> = all.iter().map(|p| p.x).collect();
            let ys: Vec<S> = all.iter().map(|p| p.y).collect();
            let (x_lo, i0) = argmin(&xs);
            let (x_hi, i1) = argmax(&xs);
            let (y_lo, i2) = argmin(&ys);
            let (y_hi, i3) = argmax(&ys);
            (
                (x_hi - x_lo) * (y_hi - y_lo),
                EnclosureChoice::Aabb([i0, i1, i2, i3]),
            )
        }
    }
}

pub(crate) struct Giou2<S> {
    pub planar: Planar<S>,
    pub enclosure_choice: EnclosureChoice,
    pub giou: S,
}

pub(crate) fn giou_planar<S: Scalar>(g: &BoxVars<S>, d: &BoxVars<S>, kind: Enclosure) -> Giou2<S> {
    let planar = planar(g, d);
    let (c, enclosure_choice) = enclosure(&planar.corners_g, &planar.corners_d, kind);
    let giou = planar.iou - (c - planar.union) / c;
    Giou2 {
        planar,
        enclosure_choice,
        giou,
    }
}

/// Which arguments won the height min/max, and whether the overlap clamp at
/// zero was active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct HeightBranch {
    pub top: usize,
    pub bottom: usize,
    pub clamped: bool,
}

pub(crate) struct Volumetric<S> {
    pub planar: Planar<S>,
    pub height: HeightBranch,
    pub intersection: S,
    pub union: S,
    pub iou: S,
}

pub(crate) fn volumetric<S: Scalar>(g: &CuboidVars<S>, d: &CuboidVars<S>) -> Volumetric<S> {
    let planar = planar(&g.bev, &d.bev);
    let (top, ti) = argmin(&[g.top(), d.top()]);
    let (bottom, bi) = argmax(&[g.bottom(), d.bottom()]);
    let raw = top - bottom;
    let clamped = raw.value() <= 0.0;
    let h_overlap = if clamped { raw.constant_like(0.0) } else { raw };
    let height = HeightBranch {
        top: ti,
        bottom: bi,
        clamped,
    };
    let zero = g.cz.constant_like(0.0);
    let intersection = if planar.polygon.is_empty() || clamped {
        zero
    } else {
        planar.intersection * h_overlap
    };
    let union = planar.area_g * g.h + planar.area_d * d.h - intersection;
    let iou = if planar.polygon.is_empty() || clamped {
        zero
    } else {
        intersection / union
    };
    Volumetric {
        planar,
        height,
        intersection,
        union,
        iou,
    }
}

pub(crate) struct Giou3<S> {
    pub volumetric: Volumetric<S>,
    pub enclosure_choice: EnclosureChoice,
    pub height_choice: (usize, usize),
    pub giou: S,
}

/// GIoU of cuboids; the enclosure is the footprint enclosure extruded over
/// the joint vertical span.
pub(crate) fn giou_volumetric<S: Scalar>(
    g: &CuboidVars<S>,
    d: &CuboidVars<S>,
    kind: Enclosure,
) -> Giou3<S> {
    let volumetric = volumetric(g, d);
    let p = &volumetric.planar;
    let (area, enclosure_choice) = enclosure(&p.corners_g, &p.corners_d, kind);
    let (top, ti) = argmax(&[g.top(), d.top()]);
    let (bottom, bi) = argmin(&[g.bottom(), d.bottom()]);
    let c = area * (top - bottom);
    let giou = volumetric.iou - (c - volumetric.union) / c;
    Giou3 {
        volumetric,
        enclosure_choice,
        height_choice: (ti, bi),
        giou,
    }
}
