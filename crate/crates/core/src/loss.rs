//! Batched `1 - IoU` and `1 - GIoU` regression losses.
//!
//! Only the box-regression term is provided; weighting against classification
//! or other detector losses is left to the caller via [`LossSpec::weight`].

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{Box3, RBox2};
use crate::grad::{diff_metric_2d, diff_metric_3d, BoxGrad2, BoxGrad3, Metric};
use crate::GeomError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum LossKind {
    #[default]
    Iou,
    Giou,
}

impl LossKind {
    fn metric(self) -> Metric {
        match self {
            LossKind::Iou => Metric::Iou,
            LossKind::Giou => Metric::Giou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum Dimensionality {
    #[default]
    Rot2D,
    Box3D,
}

impl Dimensionality {
    /// Parameters per box row.
    pub fn columns(self) -> usize {
        match self {
            Dimensionality::Rot2D => 5,
            Dimensionality::Box3D => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
    /// No reduction: `total` is the plain sum and gradients are per pair.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub dimensionality: Dimensionality,
    pub reduction: Reduction,
    /// Multiplier applied to losses and gradients.
    pub weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::Iou,
            dimensionality: Dimensionality::Rot2D,
            reduction: Reduction::Mean,
            weight: 1.0,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, dimensionality: Dimensionality) -> Self {
        Self {
            kind,
            dimensionality,
            ..Self::default()
        }
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BoxBatch<'a> {
    Rot2D(&'a [RBox2]),
    Box3D(&'a [Box3]),
}

impl BoxBatch<'_> {
    pub fn len(&self) -> usize {
        match self {
            BoxBatch::Rot2D(b) => b.len(),
            BoxBatch::Box3D(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dimensionality(&self) -> Dimensionality {
        match self {
            BoxBatch::Rot2D(_) => Dimensionality::Rot2D,
            BoxBatch::Box3D(_) => Dimensionality::Box3D,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BatchGrads {
    Rot2D(Vec<BoxGrad2>),
    Box3D(Vec<BoxGrad3>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchLossResult {
    pub per_pair_loss: Vec<f64>,
    pub total: f64,
    /// Gradient of `total` with respect to each predicted box (per pair loss
    /// for [`Reduction::None`]).
    pub per_pair_grad_d: BatchGrads,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("batch is empty")]
    Empty,
    #[error("predicted has {predicted} boxes but target has {target}")]
    LengthMismatch { predicted: usize, target: usize },
    #[error("spec expects {expected:?} boxes")]
    Dimensionality { expected: Dimensionality },
    #[error("array length {len} is not a multiple of {columns} columns")]
    Shape { len: usize, columns: usize },
    #[error("invalid box in row {row}: {source}")]
    InvalidRow { row: usize, source: GeomError },
}

/// `loss_i = weight * (1 - metric(target_i, predicted_i))`, reduced per
/// `spec.reduction`, with gradients taken with respect to the predicted
/// boxes.
pub fn iou_loss(
    spec: &LossSpec,
    predicted: BoxBatch<'_>,
    target: BoxBatch<'_>,
) -> Result<BatchLossResult, LossError> {
    if predicted.len() != target.len() {
        return Err(LossError::LengthMismatch {
            predicted: predicted.len(),
            target: target.len(),
        });
    }
    if predicted.is_empty() {
        return Err(LossError::Empty);
    }
    for b in [&predicted, &target] {
        if b.dimensionality() != spec.dimensionality {
            return Err(LossError::Dimensionality {
                expected: spec.dimensionality,
            });
        }
    }
    let n = predicted.len();
    let scale = spec.weight
        * match spec.reduction {
            Reduction::Mean => 1.0 / n as f64,
            Reduction::Sum | Reduction::None => 1.0,
        };
    let metric = spec.kind.metric();
    let (per_pair_loss, grads) = match (predicted, target) {
        (BoxBatch::Rot2D(p), BoxBatch::Rot2D(t)) => {
            let rows: Vec<(f64, BoxGrad2)> = p
                .par_iter()
                .zip(t.par_iter())
                .map(|(d, g)| {
                    let r = diff_metric_2d(metric, g, d);
                    (spec.weight * (1.0 - r.value), r.grad_d.scale(-scale))
                })
                .collect();
            let (l, g): (Vec<f64>, Vec<BoxGrad2>) = rows.into_iter().unzip();
            (l, BatchGrads::Rot2D(g))
        }
        (BoxBatch::Box3D(p), BoxBatch::Box3D(t)) => {
            let rows: Vec<(f64, BoxGrad3)> = p
                .par_iter()
                .zip(t.par_iter())
                .map(|(d, g)| {
                    let r = diff_metric_3d(metric, g, d);
                    (spec.weight * (1.0 - r.value), r.grad_d.scale(-scale))
                })
                .collect();
            let (l, g): (Vec<f64>, Vec<BoxGrad3>) = rows.into_iter().unzip();
            (l, BatchGrads::Box3D(g))
        }
        _ => unreachable!("dimensionality checked above"),
    };
    let sum: f64 = per_pair_loss.iter().sum();
    let total = match spec.reduction {
        Reduction::Mean => sum / n as f64,
        Reduction::Sum | Reduction::None => sum,
    };
    Ok(BatchLossResult {
        per_pair_loss,
        total,
        per_pair_grad_d: grads,
    })
}

/// Row-major array form: `predicted` and `target` hold `N x 5`
/// (`cx, cy, w, l, yaw`) or `N x 7` (`cx, cy, cz, w, l, h, yaw`) values.
/// Returns per-row losses and the `N x columns` gradient array.
pub fn iou_loss_rows(
    spec: &LossSpec,
    predicted: &[f64],
    target: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LossError> {
    let cols = spec.dimensionality.columns();
    for a in [predicted, target] {
        if a.len() % cols != 0 {
            return Err(LossError::Shape {
                len: a.len(),
                columns: cols,
            });
        }
    }
    let result = match spec.dimensionality {
        Dimensionality::Rot2D => {
            let p = rows_2d(predicted)?;
            let t = rows_2d(target)?;
            iou_loss(spec, BoxBatch::Rot2D(&p), BoxBatch::Rot2D(&t))?
        }
        Dimensionality::Box3D => {
            let p = rows_3d(predicted)?;
            let t = rows_3d(target)?;
            iou_loss(spec, BoxBatch::Box3D(&p), BoxBatch::Box3D(&t))?
        }
    };
    let grads = match result.per_pair_grad_d {
        BatchGrads::Rot2D(g) => g.iter().flat_map(|g| g.to_array()).collect(),
        BatchGrads::Box3D(g) => g.iter().flat_map(|g| g.to_array()).collect(),
    };
    Ok((result.per_pair_loss, grads))
}

fn rows_2d(a: &[f64]) -> Result<Vec<RBox2>, LossError> {
    a.chunks_exact(5)
        .enumerate()
        .map(|(row, c)| {
            RBox2::from_params(c.try_into().expect("chunk of 5"))
                .map_err(|source| LossError::InvalidRow { row, source })
        })
        .collect()
}

fn rows_3d(a: &[f64]) -> Result<Vec<Box3>, LossError> {
    a.chunks_exact(7)
        .enumerate()
        .map(|(row, c)| {
            Box3::from_params(c.try_into().expect("chunk of 7"))
                .map_err(|source| LossError::InvalidRow { row, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{random_pairs, PairSpec};
    use crate::overlap::rotated_iou;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn rb(cx: f64, cy: f64, w: f64, l: f64, yaw: f64) -> RBox2 {
        RBox2::new(cx, cy, w, l, yaw).unwrap()
    }

    #[test]
    fn identical_batch_has_zero_loss() {
        let boxes = vec![rb(0.0, 0.0, 1.0, 2.0, 0.3), rb(4.0, -1.0, 3.0, 0.5, -2.0)];
        for kind in [LossKind::Iou, LossKind::Giou] {
            let r = iou_loss(
                &LossSpec::new(kind, Dimensionality::Rot2D),
                BoxBatch::Rot2D(&boxes),
                BoxBatch::Rot2D(&boxes),
            )
            .unwrap();
            assert!(
                r.per_pair_loss.iter().all(|l| l.abs() < 1e-12),
                "{kind:?}: {:?}",
                r.per_pair_loss
            );
        }
        let cubes = vec![Box3::new(0.0, 0.0, 1.0, 1.0, 2.0, 1.5, 0.3).unwrap()];
        let r = iou_loss(
            &LossSpec::new(LossKind::Giou, Dimensionality::Box3D),
            BoxBatch::Box3D(&cubes),
            BoxBatch::Box3D(&cubes),
        )
        .unwrap();
        assert!(r.total.abs() < 1e-12);
    }

    #[test]
    fn disjoint_pair_plateau() {
        let p = [rb(10.0, 0.0, 1.0, 1.0, 0.0)];
        let t = [rb(0.0, 0.0, 1.0, 1.0, 0.0)];
        let r = iou_loss(
            &LossSpec::default(),
            BoxBatch::Rot2D(&p),
            BoxBatch::Rot2D(&t),
        )
        .unwrap();
        assert_eq!(r.per_pair_loss, vec![1.0]);
        let BatchGrads::Rot2D(g) = r.per_pair_grad_d else {
            panic!()
        };
        assert!(g[0].to_array().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crossed_squares_loss() {
        let p = [rb(0.0, 0.0, 2.0, 2.0, FRAC_PI_4)];
        let t = [rb(0.0, 0.0, 2.0, 2.0, 0.0)];
        let r = iou_loss(
            &LossSpec::default(),
            BoxBatch::Rot2D(&p),
            BoxBatch::Rot2D(&t),
        )
        .unwrap();
        assert!((r.total - (1.0 - 1.0 / SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn reductions_are_consistent() {
        let pairs = random_pairs(&PairSpec::default(), 8, 32).unwrap();
        let p: Vec<RBox2> = pairs.iter().map(|x| x.1).collect();
        let t: Vec<RBox2> = pairs.iter().map(|x| x.0).collect();
        let run = |red| {
            iou_loss(
                &LossSpec::default().with_reduction(red),
                BoxBatch::Rot2D(&p),
                BoxBatch::Rot2D(&t),
            )
            .unwrap()
        };
        let (none, sum, mean) = (
            run(Reduction::None),
            run(Reduction::Sum),
            run(Reduction::Mean),
        );
        let s: f64 = none.per_pair_loss.iter().sum();
        assert!((sum.total - s).abs() < 1e-12);
        assert!((mean.total - s / 32.0).abs() < 1e-12);
        for (i, l) in none.per_pair_loss.iter().enumerate() {
            assert!((l - (1.0 - rotated_iou(&t[i], &p[i]).iou)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(l));
        }
        let (BatchGrads::Rot2D(gn), BatchGrads::Rot2D(gm)) =
            (&none.per_pair_grad_d, &mean.per_pair_grad_d)
        else {
            panic!()
        };
        for (a, b) in gn.iter().zip(gm) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                assert!((x / 32.0 - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn giou_loss_range() {
        let spec =
            LossSpec::new(LossKind::Giou, Dimensionality::Rot2D).with_reduction(Reduction::None);
        let pairs = random_pairs(&PairSpec::default(), 4, 200).unwrap();
        let p: Vec<RBox2> = pairs.iter().map(|x| x.1).collect();
        let t: Vec<RBox2> = pairs.iter().map(|x| x.0).collect();
        let r = iou_loss(&spec, BoxBatch::Rot2D(&p), BoxBatch::Rot2D(&t)).unwrap();
        assert!(r
            .per_pair_loss
            .iter()
            .all(|l| (0.0..2.0).contains(l) || l.abs() < 1e-12));
    }

    #[test]
    fn errors() {
        let a = [rb(0.0, 0.0, 1.0, 1.0, 0.0)];
        let spec = LossSpec::default();
        assert_eq!(
            iou_loss(&spec, BoxBatch::Rot2D(&a), BoxBatch::Rot2D(&[])).unwrap_err(),
            LossError::LengthMismatch {
                predicted: 1,
                target: 0
            }
        );
        assert_eq!(
            iou_loss(&spec, BoxBatch::Rot2D(&[]), BoxBatch::Rot2D(&[])).unwrap_err(),
            LossError::Empty
        );
        let c = [Box3::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap()];
        assert!(matches!(
            iou_loss(&spec, BoxBatch::Box3D(&c), BoxBatch::Box3D(&c)),
            Err(LossError::Dimensionality { .. })
        ));
    }

    #[test]
    fn row_interface_reports_bad_row() {
        let spec = LossSpec::default();
        let pred = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0];
        let tgt = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        match iou_loss_rows(&spec, &pred, &tgt).unwrap_err() {
            LossError::InvalidRow { row, .. } => assert_eq!(row, 1),
            e => panic!("{e}"),
        }
        assert!(matches!(
            iou_loss_rows(&spec, &pred[..7], &tgt[..7]),
            Err(LossError::Shape { .. })
        ));
    }

    #[test]
    fn row_interface_matches_direct_call() {
        let spec = LossSpec::new(LossKind::Giou, Dimensionality::Rot2D);
        let pairs = random_pairs(&PairSpec::default(), 12, 16).unwrap();
        let p: Vec<RBox2> = pairs.iter().map(|x| x.1).collect();
        let t: Vec<RBox2> = pairs.iter().map(|x| x.0).collect();
        let flat = |v: &[RBox2]| v.iter().flat_map(|b| b.params()).collect::<Vec<f64>>();
        let (l, g) = iou_loss_rows(&spec, &flat(&p), &flat(&t)).unwrap();
        let direct = iou_loss(&spec, BoxBatch::Rot2D(&p), BoxBatch::Rot2D(&t)).unwrap();
        assert_eq!(l, direct.per_pair_loss);
        let BatchGrads::Rot2D(dg) = direct.per_pair_grad_d else {
            panic!()
        };
        assert_eq!(g, dg.iter().flat_map(|x| x.to_array()).collect::<Vec<_>>());
    }

    #[test]
    fn descent_step_decreases_loss() {
        use crate::grad::branch_signature_2d;
        let eta = 1e-3;
        let pairs = random_pairs(&PairSpec::default(), 21, 400).unwrap();
        let mut checked = 0;
        for kind in [LossKind::Iou, LossKind::Giou] {
            let spec = LossSpec::new(kind, Dimensionality::Rot2D);
            for (g, d, _) in &pairs {
                let r = iou_loss(&spec, BoxBatch::Rot2D(&[*d]), BoxBatch::Rot2D(&[*g])).unwrap();
                let BatchGrads::Rot2D(grad) = &r.per_pair_grad_d else {
                    panic!()
                };
                let step = grad[0].to_array();
                if step.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let mut p = d.params();
                for (x, s) in p.iter_mut().zip(step) {
                    *x -= eta * s;
                }
                let Ok(moved) = RBox2::from_params(p) else {
                    continue;
                };
                let metric = kind.metric();
                if branch_signature_2d(metric, g, d) != branch_signature_2d(metric, g, &moved) {
                    continue;
                }
                let after =
                    iou_loss(&spec, BoxBatch::Rot2D(&[moved]), BoxBatch::Rot2D(&[*g])).unwrap();
                assert!(
                    after.total < r.total,
                    "{kind:?} {g:?} {d:?}: {} -> {}",
                    r.total,
                    after.total
                );
                checked += 1;
            }
        }
        assert!(checked > 300, "{checked}");
    }
}
