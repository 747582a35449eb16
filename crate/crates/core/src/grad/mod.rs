//! Gradients of IoU and GIoU with respect to box parameters.
//!
//! Each entry point builds a fresh [`Tape`], replays the overlap kernel on
//! [`DiffScalar`] leaves and sweeps backward once. Discrete choices made in
//! the forward pass (which corners are inside, which edges cross, the vertex
//! order, the winners of every min/max) are held fixed, so the result is the
//! exact derivative on the smooth piece containing the input. Sorting has no
//! backward of its own: the permutation is applied to the vertex handles and
//! adjoints flow back through it unchanged.

mod check;
mod tape;

use serde::Serialize;

pub use check::{
    finite_diff_check, gradient_suite, relative_error, suite_candidate, FdError, FdReport,
    Objective, PairDim, PairObjective, SuiteReport, LIFT_H, LIFT_Z, REL_ERROR_FLOOR,
};
pub use tape::{Adjoints, DiffScalar, Tape};

use crate::geom::{Box3, RBox2};
use crate::overlap::kernel::{
    self, BoxVars, CuboidVars, Enclosure, EnclosureChoice, HeightBranch, VertexSource,
};
use crate::overlap::{box_vars, cuboid_vars};
use crate::scalar::Scalar as _;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoxGrad2 {
    pub d_cx: f64,
    pub d_cy: f64,
    pub d_w: f64,
    pub d_l: f64,
    pub d_yaw: f64,
}

impl BoxGrad2 {
    pub fn to_array(&self) -> [f64; 5] {
        [self.d_cx, self.d_cy, self.d_w, self.d_l, self.d_yaw]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            d_cx: a[0],
            d_cy: a[1],
            d_w: a[2],
            d_l: a[3],
            d_yaw: a[4],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoxGrad3 {
    pub d_cx: f64,
    pub d_cy: f64,
    pub d_cz: f64,
    pub d_w: f64,
    pub d_l: f64,
    pub d_h: f64,
    pub d_yaw: f64,
}

impl BoxGrad3 {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.d_cx, self.d_cy, self.d_cz, self.d_w, self.d_l, self.d_h, self.d_yaw,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            d_cx: a[0],
            d_cy: a[1],
            d_cz: a[2],
            d_w: a[3],
            d_l: a[4],
            d_h: a[5],
            d_yaw: a[6],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * s))
    }
}

/// A metric value with its gradients for both boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairGrad<G> {
    pub value: f64,
    pub grad_g: G,
    pub grad_d: G,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    Iou,
    Giou,
}

fn leaves<'t>(tape: &'t Tape, b: &RBox2) -> BoxVars<DiffScalar<'t>> {
    BoxVars {
        cx: tape.var(b.cx()),
        cy: tape.var(b.cy()),
        w: tape.var(b.w()),
        l: tape.var(b.l()),
        yaw: tape.var(b.yaw()),
    }
}

fn leaves3<'t>(tape: &'t Tape, b: &Box3) -> CuboidVars<DiffScalar<'t>> {
    CuboidVars {
        bev: BoxVars {
            cx: tape.var(b.cx()),
            cy: tape.var(b.cy()),
            w: tape.var(b.w()),
            l: tape.var(b.l()),
            yaw: tape.var(b.yaw()),
        },
        cz: tape.var(b.cz()),
        h: tape.var(b.h()),
    }
}

fn read2(a: &Adjoints, v: &BoxVars<DiffScalar<'_>>) -> BoxGrad2 {
    BoxGrad2 {
        d_cx: a.wrt(v.cx),
        d_cy: a.wrt(v.cy),
        d_w: a.wrt(v.w),
        d_l: a.wrt(v.l),
        d_yaw: a.wrt(v.yaw),
    }
}

fn read3(a: &Adjoints, v: &CuboidVars<DiffScalar<'_>>) -> BoxGrad3 {
    BoxGrad3 {
        d_cx: a.wrt(v.bev.cx),
        d_cy: a.wrt(v.bev.cy),
        d_cz: a.wrt(v.cz),
        d_w: a.wrt(v.bev.w),
        d_l: a.wrt(v.bev.l),
        d_h: a.wrt(v.h),
        d_yaw: a.wrt(v.bev.yaw),
    }
}

fn diff2(metric: Metric, g: &RBox2, d: &RBox2, enclosure: Enclosure) -> PairGrad<BoxGrad2> {
    let tape = Tape::new();
    let gv = leaves(&tape, g);
    let dv = leaves(&tape, d);
    let out = match metric {
        Metric::Iou => kernel::planar(&gv, &dv).iou,
        Metric::Giou => kernel::giou_planar(&gv, &dv, enclosure).giou,
    };
    let adj = tape.backward(out);
    PairGrad {
        value: out.value(),
        grad_g: read2(&adj, &gv),
        grad_d: read2(&adj, &dv),
    }
}

fn diff3(metric: Metric, g: &Box3, d: &Box3, enclosure: Enclosure) -> PairGrad<BoxGrad3> {
    let tape = Tape::new();
    let gv = leaves3(&tape, g);
    let dv = leaves3(&tape, d);
    let out = match metric {
        Metric::Iou => kernel::volumetric(&gv, &dv).iou,
        Metric::Giou => kernel::giou_volumetric(&gv, &dv, enclosure).giou,
    };
    let adj = tape.backward(out);
    PairGrad {
        value: out.value(),
        grad_g: read3(&adj, &gv),
        grad_d: read3(&adj, &dv),
    }
}

pub fn diff_rotated_iou(g: &RBox2, d: &RBox2) -> PairGrad<BoxGrad2> {
    diff2(Metric::Iou, g, d, Enclosure::default())
}

pub fn diff_giou(g: &RBox2, d: &RBox2) -> PairGrad<BoxGrad2> {
    diff2(Metric::Giou, g, d, Enclosure::default())
}

pub fn diff_iou_3d(g: &Box3, d: &Box3) -> PairGrad<BoxGrad3> {
    diff3(Metric::Iou, g, d, Enclosure::default())
}

pub fn diff_giou_3d(g: &Box3, d: &Box3) -> PairGrad<BoxGrad3> {
    diff3(Metric::Giou, g, d, Enclosure::default())
}

/// [`diff_giou`] with an explicit enclosing shape. With
/// [`Enclosure::Aabb`] the min/max adjoint goes to the single achieving
/// corner, lowest index on ties.
pub fn diff_giou_with(g: &RBox2, d: &RBox2, enclosure: Enclosure) -> PairGrad<BoxGrad2> {
    diff2(Metric::Giou, g, d, enclosure)
}

pub fn diff_metric_2d(metric: Metric, g: &RBox2, d: &RBox2) -> PairGrad<BoxGrad2> {
    diff2(metric, g, d, Enclosure::default())
}

pub fn diff_metric_3d(metric: Metric, g: &Box3, d: &Box3) -> PairGrad<BoxGrad3> {
    diff3(metric, g, d, Enclosure::default())
}

/// The discrete choices of one forward evaluation. Two inputs with equal
/// signatures lie on the same smooth piece (up to vertex reordering).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BranchSignature {
    /// Vertex sources, sorted.
    pub vertices: Vec<VertexSource>,
    pub enclosure: Option<EnclosureChoice>,
    pub height: Option<HeightBranch>,
    pub height_enclosure: Option<(usize, usize)>,
}

fn sorted(mut v: Vec<VertexSource>) -> Vec<VertexSource> {
    v.sort();
    v
}

pub fn branch_signature_2d(metric: Metric, g: &RBox2, d: &RBox2) -> BranchSignature {
    let (gv, dv) = (box_vars(g), box_vars(d));
    match metric {
        Metric::Iou => BranchSignature {
            vertices: sorted(kernel::planar(&gv, &dv).provenance),
            enclosure: None,
            height: None,
            height_enclosure: None,
        },
        Metric::Giou => {
            let r = kernel::giou_planar(&gv, &dv, Enclosure::default());
            BranchSignature {
                vertices: sorted(r.planar.provenance),
                enclosure: Some(r.enclosure_choice.canonical()),
                height: None,
                height_enclosure: None,
            }
        }
    }
}

pub fn branch_signature_3d(metric: Metric, g: &Box3, d: &Box3) -> BranchSignature {
    let (gv, dv) = (cuboid_vars(g), cuboid_vars(d));
    match metric {
        Metric::Iou => {
            let v = kernel::volumetric(&gv, &dv);
            BranchSignature {
                vertices: sorted(v.planar.provenance),
                enclosure: None,
                height: Some(v.height),
                height_enclosure: None,
            }
        }
        Metric::Giou => {
            let r = kernel::giou_volumetric(&gv, &dv, Enclosure::default());
            BranchSignature {
                vertices: sorted(r.volumetric.planar.provenance),
                enclosure: Some(r.enclosure_choice.canonical()),
                height: Some(r.volumetric.height),
                height_enclosure: Some(r.height_choice),
            }
        }
    }
}
