//! Gradient-descent fit of a single predicted box to a fixed target.
//!
//! Compares the per-parameter L1 loss with the IoU and GIoU losses by
//! recording, at every step, the loss and the IoU the prediction would be
//! evaluated with.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{normalize_angle, RBox2};
use crate::loss::{iou_loss, BatchGrads, BoxBatch, Dimensionality, LossKind, LossSpec, Reduction};
use crate::overlap::rotated_iou;

/// Extents are kept at or above this during descent.
pub const MIN_EXTENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FitLoss {
    L1,
    Iou,
    Giou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FitInit {
    Overlap,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitConfig {
    pub loss: FitLoss,
    pub init: FitInit,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(loss: FitLoss, init: FitInit) -> Self {
        Self {
            loss,
            init,
            steps: 500,
            lr: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("descent left the valid box domain at step {0}")]
    Diverged(usize),
}

/// One CSV row: the state after `step` updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitStep {
    pub step: usize,
    pub loss_value: f64,
    pub eval_iou: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub l: f64,
    pub yaw: f64,
}

pub fn target_box() -> RBox2 {
    RBox2::new(0.0, 0.0, 2.0, 1.0, 0.3).expect("valid target")
}

/// Seeded starting box: a moderate perturbation of the target, or a box of
/// similar size placed just clear of it.
pub fn initial_box(init: FitInit, seed: u64) -> RBox2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = target_box();
    match init {
        FitInit::Overlap => RBox2::new(
            t.cx() + rng.gen_range(-0.4..0.4),
            t.cy() + rng.gen_range(-0.3..0.3),
            t.w() * rng.gen_range(0.7..1.3),
            t.l() * rng.gen_range(0.7..1.3),
            t.yaw() + rng.gen_range(-0.4..0.4),
        ),
        FitInit::Disjoint => {
            let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let dist = rng.gen_range(2.8..3.5);
            RBox2::new(
                t.cx() + dist * angle.cos(),
                t.cy() + dist * angle.sin(),
                t.w() * rng.gen_range(0.7..1.3),
                t.l() * rng.gen_range(0.7..1.3),
                rng.gen_range(-1.0..1.0),
            )
        }
    }
    .expect("valid initial box")
}

fn l1(pred: &RBox2, target: &RBox2) -> (f64, [f64; 5]) {
    let (p, t) = (pred.params(), target.params());
    let mut diff: [f64; 5] = std::array::from_fn(|k| p[k] - t[k]);
    diff[4] = normalize_angle(diff[4]).expect("finite yaw");
    (diff.iter().map(|d| d.abs()).sum(), diff.map(f64::signum))
}

fn loss_and_grad(loss: FitLoss, pred: &RBox2, target: &RBox2) -> (f64, [f64; 5]) {
    let kind = match loss {
        FitLoss::L1 => return l1(pred, target),
        FitLoss::Iou => LossKind::Iou,
        FitLoss::Giou => LossKind::Giou,
    };
    let spec = LossSpec::new(kind, Dimensionality::Rot2D).with_reduction(Reduction::Sum);
    let r = iou_loss(
        &spec,
        BoxBatch::Rot2D(&[*pred]),
        BoxBatch::Rot2D(&[*target]),
    )
    .expect("one valid pair");
    let BatchGrads::Rot2D(g) = r.per_pair_grad_d else {
        unreachable!("2D batch")
    };
    (r.total, g[0].to_array())
}

/// Runs `config.steps` plain gradient-descent updates and returns
/// `steps + 1` rows, starting with the initial state.
pub fn fit_demo(config: &FitConfig) -> Result<Vec<FitStep>, FitError> {
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(FitError::LearningRate(config.lr));
    }
    let target = target_box();
    let mut pred = initial_box(config.init, config.seed);
    let mut trace = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let (loss_value, grad) = loss_and_grad(config.loss, &pred, &target);
        let [cx, cy, w, l, yaw] = pred.params();
        trace.push(FitStep {
            step,
            loss_value,
            eval_iou: rotated_iou(&target, &pred).iou,
            cx,
            cy,
            w,
            l,
            yaw,
        });
        if step == config.steps {
            break;
        }
        let mut p = pred.params();
        for (x, g) in p.iter_mut().zip(grad) {
            *x -= config.lr * g;
        }
        p[2] = p[2].max(MIN_EXTENT);
        p[3] = p[3].max(MIN_EXTENT);
        pred = RBox2::from_params(p).map_err(|_| FitError::Diverged(step + 1))?;
    }
    Ok(trace)
}

pub const CSV_HEADER: &str = "step,loss_value,eval_iou,cx,cy,w,l,yaw";

/// Writes the trace as CSV. Floats use the shortest representation that
/// round-trips, so identical runs give byte-identical files.
pub fn write_csv<W: Write>(trace: &[FitStep], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.step, s.loss_value, s.eval_iou, s.cx, s.cy, s.w, s.l, s.yaw
        )?;
    }
    Ok(())
}

pub fn to_csv(trace: &[FitStep]) -> String {
    let mut buf = Vec::new();
    write_csv(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}
