//! Exact, differentiable overlap measures for bounding boxes.
//!
//! The crate covers three box families:
//!
//! * axis-aligned 2D boxes ([`AABox2`]),
//! * rotated 2D boxes parameterized by center, extents and yaw ([`RBox2`]),
//! * yaw-only 3D cuboids ([`Box3`]) whose bird-eye-view footprint is an `RBox2`.
//!
//! On top of the plain IoU/GIoU routines in [`overlap`], the [`grad`] module
//! replays the same forward pass on a small reverse-mode tape and returns
//! gradients with respect to the box parameters, which [`loss`] turns into a
//! batched `1 - IoU` / `1 - GIoU` regression loss. [`eval`] implements a
//! KITTI-style average-precision evaluator and [`oracle`] holds two
//! independent reference implementations used by the test suites.

pub mod error;
pub mod eval;
pub mod fit;
pub mod geom;
pub mod grad;
pub mod loss;
pub mod oracle;
pub mod overlap;
pub mod scalar;

pub use error::GeomError;
pub use geom::{normalize_angle, shoelace_area, AABox2, Box3, ConvexPoly, RBox2, Vec2};
pub use grad::{BoxGrad2, BoxGrad3};
pub use loss::{
    iou_loss, iou_loss_rows, BatchLossResult, BoxBatch, Dimensionality, LossKind, LossSpec,
    Reduction,
};
pub use overlap::{
    aa_iou, enclosing_aabb, giou, giou_3d, intersection_polygon, iou_3d, point_in_rbox,
    rotated_iou, segment_intersection, OverlapResult, VertexSource,
};

/// Absolute tolerance on cross products and areas.
pub const EPS_GEOM: f64 = 1e-9;

/// Candidate intersection vertices closer than this are merged.
pub const EPS_DEDUP: f64 = 1e-7;
