//! KITTI-style detection evaluation.
//!
//! Detections are matched greedily in descending score order against ground
//! truth of the same frame and class, then accumulated into a precision/recall
//! curve whose interpolated area is the average precision, in percent.
//!
//! Difficulty levels are cumulative, as in the KITTI benchmark: evaluating at
//! `Moderate` counts `Easy` and `Moderate` objects, while harder objects (and
//! those too small for any level) are ignored. A detection whose best match
//! is an ignored object is dropped from scoring instead of counting as a
//! false positive.

pub mod kitti;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{AABox2, Box3};
use crate::overlap::{aa_iou, iou_3d, rotated_iou};

pub use kitti::{load_det_dir, load_gt_dir, KNOWN_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GtObject {
    pub frame_id: String,
    pub class_label: String,
    pub bbox: Box3,
    pub image_bbox: AABox2,
    pub truncation: f64,
    pub occlusion: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub frame_id: String,
    pub class_label: String,
    pub bbox: Box3,
    pub image_bbox: AABox2,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub const LEVELS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Ignored => "ignored",
        };
        f.write_str(s)
    }
}

/// Easiest KITTI level whose height, occlusion and truncation limits the
/// object satisfies.
pub fn assign_difficulty(gt: &GtObject) -> Difficulty {
    let h = gt.image_bbox.height();
    let (occ, trunc) = (gt.occlusion, gt.truncation);
    if h >= 40.0 && occ == 0 && trunc <= 0.15 {
        Difficulty::Easy
    } else if h >= 25.0 && occ <= 1 && trunc <= 0.30 {
        Difficulty::Moderate
    } else if h >= 25.0 && occ <= 2 && trunc <= 0.50 {
        Difficulty::Hard
    } else {
        Difficulty::Ignored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum EvalMode {
    /// Rotated footprint IoU.
    #[default]
    Bev,
    Full3D,
    /// Axis-aligned image-plane boxes.
    Image2D,
}

impl EvalMode {
    fn overlap(self, g: &GtObject, d: &Detection) -> f64 {
        match self {
            EvalMode::Bev => rotated_iou(&g.bbox.bev(), &d.bbox.bev()).iou,
            EvalMode::Full3D => iou_3d(&g.bbox, &d.bbox).iou,
            EvalMode::Image2D => aa_iou(&g.image_bbox, &d.image_bbox).iou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum Interpolation {
    #[default]
    Eleven,
    Forty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    /// Best overlap was with an ignored object; not scored.
    Discarded,
}

/// Per-detection outcomes (in input order) for a single frame and class.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    pub outcomes: Vec<Outcome>,
    /// Ground-truth index matched by each detection, if any.
    pub matched_gt: Vec<Option<usize>>,
    /// Number of non-ignored ground-truth objects.
    pub num_gt: usize,
}

/// Greedy matching: detections in descending score (ties by input index)
/// take the unmatched, non-ignored object of highest IoU at or above
/// `threshold`. Unmatched detections overlapping an ignored object at or
/// above `threshold` are discarded, all others are false positives.
pub fn match_frame(
    dets: &[&Detection],
    gts: &[&GtObject],
    ignored: &[bool],
    threshold: f64,
    mode: EvalMode,
) -> FrameMatch {
    assert_eq!(gts.len(), ignored.len(), "one ignore flag per ground truth");
    let overlaps: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| gts.iter().map(|g| mode.overlap(g, d)).collect())
        .collect();
    match_with_overlaps(dets, &overlaps, ignored, threshold)
}

fn match_with_overlaps(
    dets: &[&Detection],
    overlaps: &[Vec<f64>],
    ignored: &[bool],
    threshold: f64,
) -> FrameMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; ignored.len()];
    let mut outcomes = vec![Outcome::FalsePositive; dets.len()];
    let mut matched_gt = vec![None; dets.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        let mut hits_ignored = false;
        for (j, &iou) in overlaps[i].iter().enumerate() {
            if iou < threshold {
                continue;
            }
            if ignored[j] {
                hits_ignored = true;
            } else if !taken[j] && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            outcomes[i] = Outcome::TruePositive;
            matched_gt[i] = Some(j);
        } else if hits_ignored {
            outcomes[i] = Outcome::Discarded;
        }
    }
    FrameMatch {
        outcomes,
        matched_gt,
        num_gt: ignored.iter().filter(|&&x| !x).count(),
    }
}

/// One point of the precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative precision/recall after each scored detection, given the
/// detection outcomes already sorted by descending score.
pub fn pr_curve(sorted_tp: &[bool], num_gt: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    sorted_tp
        .iter()
        .enumerate()
        .map(|(k, &is_tp)| {
            tp += usize::from(is_tp);
            PrPoint {
                recall: tp as f64 / num_gt as f64,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect()
}

/// Interpolated AP in percent: the mean, over the sampled recall levels, of
/// the best precision achieved at or beyond each level. `None` without
/// ground truth.
pub fn average_precision(
    points: &[PrPoint],
    num_gt: usize,
    interpolation: Interpolation,
) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let levels: Vec<f64> = match interpolation {
        Interpolation::Eleven => (0..=10).map(|k| k as f64 / 10.0).collect(),
        Interpolation::Forty => (1..=40).map(|k| k as f64 / 40.0).collect(),
    };
    let stairs: Vec<f64> = levels
        .iter()
        .map(|&r| {
            points
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .collect();
    // The staircase is non-increasing, so summing run length times step
    // height keeps round-off to one product per step.
    let sum: f64 = stairs
        .chunk_by(|a, b| a == b)
        .map(|run| run.len() as f64 * run[0])
        .sum();
    Some(100.0 * sum / levels.len() as f64)
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("detections reference frame {0:?} which has no ground-truth file")]
    UnknownFrame(String),
    #[error("invalid IoU threshold {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub class_label: String,
    pub mode: EvalMode,
    pub interpolation: Interpolation,
    pub thresholds: Vec<f64>,
}

impl EvalConfig {
    pub fn new(class_label: impl Into<String>, mode: EvalMode) -> Self {
        Self {
            class_label: class_label.into(),
            mode,
            interpolation: Interpolation::default(),
            thresholds: vec![0.70, 0.75, 0.80],
        }
    }
}

/// IoU thresholds averaged into mAP: 0.50, 0.55, ..., 0.95.
pub fn map_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApEntry {
    pub class: String,
    pub difficulty: Difficulty,
    pub threshold: f64,
    pub ap: Option<f64>,
    pub pr: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapEntry {
    pub class: String,
    pub difficulty: Difficulty,
    pub map: Option<f64>,
    /// AP at each sweep threshold, in the order of [`map_thresholds`].
    pub sweep: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub class: String,
    pub mode: EvalMode,
    pub interpolation: Interpolation,
    pub ap: Vec<ApEntry>,
    pub map: Vec<MapEntry>,
    /// Class labels found in the input that are not KITTI classes.
    pub skipped: Vec<String>,
}

impl EvalReport {
    pub fn ap_at(&self, difficulty: Difficulty, threshold: f64) -> Option<f64> {
        self.ap
            .iter()
            .find(|e| e.difficulty == difficulty && e.threshold == threshold)
            .and_then(|e| e.ap)
    }

    pub fn map_for(&self, difficulty: Difficulty) -> Option<f64> {
        self.map
            .iter()
            .find(|e| e.difficulty == difficulty)
            .and_then(|e| e.map)
    }

    /// Fixed-width text table, one row per difficulty.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut out = format!(
            "{} {:?} {:?}\n{:<10}",
            self.class, self.mode, self.interpolation, "difficulty"
        );
        let thresholds: Vec<f64> = self
            .ap
            .iter()
            .filter(|e| e.difficulty == Difficulty::Easy)
            .map(|e| e.threshold)
            .collect();
        for t in &thresholds {
            let _ = write!(out, " {:>8}", format!("AP{:.0}", t * 100.0));
        }
        let _ = writeln!(out, " {:>8}", "mAP");
        for d in Difficulty::LEVELS {
            let _ = write!(out, "{:<10}", d.to_string());
            for &t in &thresholds {
                let _ = write!(out, " {:>8}", fmt(self.ap_at(d, t)));
            }
            let _ = writeln!(out, " {:>8}", fmt(self.map_for(d)));
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped labels: {}", self.skipped.join(", "));
        }
        out
    }
}

struct FrameData<'a> {
    difficulty: Vec<Difficulty>,
    dets: Vec<&'a Detection>,
    /// Detection x ground truth IoU, computed once for all thresholds.
    overlaps: Vec<Vec<f64>>,
}

/// Runs the full protocol for `config.class_label`: AP per difficulty at each
/// configured threshold plus mAP over [`map_thresholds`].
pub fn evaluate(
    gt_set: &[GtObject],
    det_set: &[Detection],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    for &t in config.thresholds.iter() {
        if !(t > 0.0 && t < 1.0) {
            return Err(EvalError::Threshold(t));
        }
    }
    let gt_frames: BTreeSet<&str> = gt_set.iter().map(|g| g.frame_id.as_str()).collect();
    if let Some(d) = det_set
        .iter()
        .find(|d| !gt_frames.contains(d.frame_id.as_str()))
    {
        return Err(EvalError::UnknownFrame(d.frame_id.clone()));
    }
    let skipped: Vec<String> = gt_set
        .iter()
        .map(|g| &g.class_label)
        .chain(det_set.iter().map(|d| &d.class_label))
        .filter(|c| !KNOWN_CLASSES.contains(&c.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let class = config.class_label.as_str();
    let mut frames: BTreeMap<&str, (Vec<&GtObject>, Vec<&Detection>)> = gt_frames
        .iter()
        .map(|&f| (f, (Vec::new(), Vec::new())))
        .collect();
    for g in gt_set.iter().filter(|g| g.class_label == class) {
        frames
            .get_mut(g.frame_id.as_str())
            .expect("frame registered")
            .0
            .push(g);
    }
    for d in det_set.iter().filter(|d| d.class_label == class) {
        frames
            .get_mut(d.frame_id.as_str())
            .expect("frame checked")
            .1
            .push(d);
    }
    let frames: Vec<FrameData> = frames
        .into_values()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(gts, dets)| {
            let overlaps = dets
                .iter()
                .map(|d| gts.iter().map(|g| config.mode.overlap(g, d)).collect())
                .collect();
            FrameData {
                difficulty: gts.iter().map(|g| assign_difficulty(g)).collect(),
                dets,
                overlaps,
            }
        })
        .collect();

    let sweep = map_thresholds();
    let mut ap = Vec::new();
    let mut map = Vec::new();
    for level in Difficulty::LEVELS {
        for &t in &config.thresholds {
            let (pr, num_gt) = accumulate(&frames, level, t);
            ap.push(ApEntry {
                class: class.to_string(),
                difficulty: level,
                threshold: t,
                ap: average_precision(&pr, num_gt, config.interpolation),
                pr,
            });
        }
        let aps: Vec<Option<f64>> = sweep
            .iter()
            .map(|&t| {
                let (pr, num_gt) = accumulate(&frames, level, t);
                average_precision(&pr, num_gt, config.interpolation)
            })
            .collect();
        let mean = aps
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        map.push(MapEntry {
            class: class.to_string(),
            difficulty: level,
            map: mean,
            sweep: aps,
        });
    }
    Ok(EvalReport {
        class: class.to_string(),
        mode: config.mode,
        interpolation: config.interpolation,
        ap,
        map,
        skipped,
    })
}

/// Matches every frame at `threshold` and returns the PR curve over all
/// scored detections, sorted by score, then frame id, then input index.
fn accumulate(frames: &[FrameData], level: Difficulty, threshold: f64) -> (Vec<PrPoint>, usize) {
    let per_frame: Vec<(usize, FrameMatch)> = frames
        .par_iter()
        .enumerate()
        .map(|(fi, f)| {
            let ignored: Vec<bool> = f.difficulty.iter().map(|&d| d > level).collect();
            (
                fi,
                match_with_overlaps(&f.dets, &f.overlaps, &ignored, threshold),
            )
        })
        .collect();
    let mut scored: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut num_gt = 0;
    for (fi, m) in &per_frame {
        num_gt += m.num_gt;
        for (di, o) in m.outcomes.iter().enumerate() {
            if *o != Outcome::Discarded {
                scored.push((
                    frames[*fi].dets[di].score,
                    *fi,
                    di,
                    *o == Outcome::TruePositive,
                ));
            }
        }
    }
    // frames are already in frame-id order, so the frame index is the tie-break
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let tps: Vec<bool> = scored.iter().map(|s| s.3).collect();
    (pr_curve(&tps, num_gt), num_gt)
}
