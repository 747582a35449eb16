//! Central-difference verification of analytic gradients.

use thiserror::Error;

use super::{
    branch_signature_2d, branch_signature_3d, diff_metric_2d, diff_metric_3d, BranchSignature,
    Metric,
};
use serde::Serialize;

use crate::geom::{Box3, RBox2};
use crate::oracle::{lift_pair, pair_seed, random_pair, PairSpec};
use crate::overlap::{giou, giou_3d, iou_3d, rotated_iou};

/// Denominator floor for relative errors, so that components whose true
/// derivative is zero are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// A scalar function of a parameter vector with an analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Discrete forward-pass choices at `x`, when the function is piecewise.
    fn branch(&self, _x: &[f64]) -> Option<BranchSignature> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdError {
    #[error("non-smooth point: branch changes when perturbing parameter {param}")]
    NonSmooth { param: usize },
    #[error("expected {expected} parameters, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("step must be positive and finite")]
    BadStep,
    #[error("objective is not finite near the point")]
    NonFinite,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `f.gradient(x)` against `(f(x+h) - f(x-h)) / 2h` per parameter.
///
/// Before differencing, every parameter is perturbed by `±10·step`; if the
/// branch signature moves the point is reported as non-smooth rather than as
/// a gradient mismatch.
pub fn finite_diff_check<F: Objective + ?Sized>(
    f: &F,
    x: &[f64],
    step: f64,
) -> Result<FdReport, FdError> {
    if x.len() != f.dim() {
        return Err(FdError::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(FdError::BadStep);
    }
    let mut probe = x.to_vec();
    if let Some(base) = f.branch(x) {
        for k in 0..x.len() {
            for sign in [-1.0, 1.0] {
                probe[k] = x[k] + sign * 10.0 * step;
                if f.branch(&probe).as_ref() != Some(&base) {
                    return Err(FdError::NonSmooth { param: k });
                }
            }
            probe[k] = x[k];
        }
    }
    let analytic = f.gradient(x);
    let mut numeric = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let hi = f.value(&probe);
        probe[k] = x[k] - step;
        let lo = f.value(&probe);
        probe[k] = x[k];
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(FdError::NonFinite);
        }
        numeric.push((hi - lo) / (2.0 * step));
    }
    let rel_errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .collect();
    let max_rel_error = rel_errors.iter().copied().fold(0.0, f64::max);
    Ok(FdReport {
        analytic,
        numeric,
        rel_errors,
        max_rel_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairDim {
    Rot2D,
    Box3D,
}

/// IoU or GIoU of a box pair as a function of the stacked parameters
/// `[g..., d...]` (5 + 5 for rotated boxes, 7 + 7 for cuboids).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairObjective {
    pub metric: Metric,
    pub dim: PairDim,
}

impl PairObjective {
    pub fn new(metric: Metric, dim: PairDim) -> Self {
        Self { metric, dim }
    }

    fn boxes2(x: &[f64]) -> Option<(RBox2, RBox2)> {
        let g = RBox2::from_params(x[..5].try_into().ok()?).ok()?;
        let d = RBox2::from_params(x[5..10].try_into().ok()?).ok()?;
        Some((g, d))
    }

    fn boxes3(x: &[f64]) -> Option<(Box3, Box3)> {
        let g = Box3::from_params(x[..7].try_into().ok()?).ok()?;
        let d = Box3::from_params(x[7..14].try_into().ok()?).ok()?;
        Some((g, d))
    }
}

impl Objective for PairObjective {
    fn dim(&self) -> usize {
        match self.dim {
            PairDim::Rot2D => 10,
            PairDim::Box3D => 14,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self.dim {
            PairDim::Rot2D => match Self::boxes2(x) {
                Some((g, d)) => match self.metric {
                    Metric::Iou => rotated_iou(&g, &d).iou,
                    Metric::Giou => giou(&g, &d),
                },
                None => f64::NAN,
            },
            PairDim::Box3D => match Self::boxes3(x) {
                Some((g, d)) => match self.metric {
                    Metric::Iou => iou_3d(&g, &d).iou,
                    Metric::Giou => giou_3d(&g, &d),
                },
                None => f64::NAN,
            },
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.dim {
            PairDim::Rot2D => {
                let (g, d) = Self::boxes2(x).expect("valid boxes");
                let r = diff_metric_2d(self.metric, &g, &d);
                r.grad_g
                    .to_array()
                    .into_iter()
                    .chain(r.grad_d.to_array())
                    .collect()
            }
            PairDim::Box3D => {
                let (g, d) = Self::boxes3(x).expect("valid boxes");
                let r = diff_metric_3d(self.metric, &g, &d);
                r.grad_g
                    .to_array()
                    .into_iter()
                    .chain(r.grad_d.to_array())
                    .collect()
            }
        }
    }

    fn branch(&self, x: &[f64]) -> Option<BranchSignature> {
        match self.dim {
            PairDim::Rot2D => {
                Self::boxes2(x).map(|(g, d)| branch_signature_2d(self.metric, &g, &d))
            }
            PairDim::Box3D => {
                Self::boxes3(x).map(|(g, d)| branch_signature_3d(self.metric, &g, &d))
            }
        }
    }
}

/// Summary of [`gradient_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub metric: Metric,
    pub dim: PairDim,
    pub seed: u64,
    /// Smooth pairs checked.
    pub pairs: usize,
    /// Candidates rejected as non-smooth and replaced by the next seed.
    pub resampled: usize,
    pub max_rel_error: f64,
    /// Mean over all checked parameters.
    pub mean_rel_error: f64,
    /// Pairs whose worst parameter exceeded the tolerance.
    pub failures: usize,
    /// Stacked parameters of the worst pair.
    pub worst: Option<Vec<f64>>,
}

/// Vertical ranges used when lifting random footprints to cuboids.
pub const LIFT_Z: (f64, f64) = (-2.0, 2.0);
pub const LIFT_H: (f64, f64) = (0.5, 3.0);

/// Stacked parameters of the `index`-th candidate pair for a suite seed.
pub fn suite_candidate(dim: PairDim, seed: u64, index: u64) -> Vec<f64> {
    let s = pair_seed(seed, index);
    let (g, d) = random_pair(&PairSpec::default(), s).expect("default spec is valid");
    match dim {
        PairDim::Rot2D => g.params().into_iter().chain(d.params()).collect(),
        PairDim::Box3D => {
            let (g, d) = lift_pair(&g, &d, LIFT_Z, LIFT_H, s ^ 0x5eed);
            g.params().into_iter().chain(d.params()).collect()
        }
    }
}

/// Finite-difference check over `pairs` seeded random pairs. Non-smooth
/// candidates are skipped and counted, so exactly `pairs` points are checked.
pub fn gradient_suite(
    objective: PairObjective,
    pairs: usize,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<SuiteReport, FdError> {
    let mut report = SuiteReport {
        metric: objective.metric,
        dim: objective.dim,
        seed,
        pairs: 0,
        resampled: 0,
        max_rel_error: 0.0,
        mean_rel_error: 0.0,
        failures: 0,
        worst: None,
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut index = 0u64;
    while report.pairs < pairs {
        let x = suite_candidate(objective.dim, seed, index);
        index += 1;
        let r = match finite_diff_check(&objective, &x, step) {
            Ok(r) => r,
            Err(FdError::NonSmooth { .. }) => {
                report.resampled += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.pairs += 1;
        sum += r.rel_errors.iter().sum::<f64>();
        count += r.rel_errors.len();
        if r.max_rel_error > tol {
            report.failures += 1;
        }
        if report.worst.is_none() || r.max_rel_error > report.max_rel_error {
            report.max_rel_error = r.max_rel_error;
            report.worst = Some(x);
        }
    }
    report.mean_rel_error = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(report)
}
