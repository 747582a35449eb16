//! KITTI label files.
//!
//! Each line is `type truncated occluded alpha left top right bottom h w l x y z
//! rotation_y`, followed by `score` in detection files. Locations are the
//! bottom-face center in camera coordinates (x right, y down, z forward).
//!
//! Boxes are converted to a z-up frame whose ground plane is the camera
//! `(x, z)` plane:
//!
//! * footprint center `(x, z)`, vertical center `-y + h/2`,
//! * `RBox2::w` is the KITTI length (along the heading), `RBox2::l` the KITTI width,
//! * yaw is `-rotation_y`, since KITTI rotates about the downward y axis and a
//!   heading of `rotation_y` points along `(cos, -sin)` in `(x, z)`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::geom::{AABox2, Box3};

use super::{Detection, EvalError, GtObject};

const GT_FIELDS: usize = 15;

/// Class labels of the KITTI object benchmark.
pub const KNOWN_CLASSES: [&str; 8] = [
    "Car",
    "Van",
    "Truck",
    "Pedestrian",
    "Person_sitting",
    "Cyclist",
    "Tram",
    "Misc",
];

#[derive(Debug, Clone, PartialEq)]
struct Line {
    class_label: String,
    truncation: f64,
    occlusion: f64,
    image_bbox: AABox2,
    bbox: Box3,
    score: Option<f64>,
}

/// Box in the z-up frame from KITTI camera-frame dimensions and location.
pub fn camera_to_box3(
    h: f64,
    w: f64,
    l: f64,
    x: f64,
    y: f64,
    z: f64,
    rotation_y: f64,
) -> Result<Box3, crate::GeomError> {
    Box3::new(x, z, -y + 0.5 * h, l, w, h, -rotation_y)
}

fn parse_line(text: &str, with_score: bool) -> Result<Option<Line>, String> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    let expected = GT_FIELDS + usize::from(with_score);
    if fields.len() != expected {
        return Err(format!(
            "expected {expected} fields, found {}",
            fields.len()
        ));
    }
    if fields[0] == "DontCare" {
        return Ok(None);
    }
    let mut v = [0.0; 15];
    for (i, f) in fields[1..].iter().enumerate() {
        let x: f64 = f
            .parse()
            .map_err(|_| format!("field {} is not a number: {f:?}", i + 2))?;
        if !x.is_finite() {
            return Err(format!("field {} is not finite", i + 2));
        }
        v[i] = x;
    }
    let [trunc, occ, _alpha, left, top, right, bottom, h, w, l, x, y, z, ry, score] = v;
    let image_bbox =
        AABox2::new(left, top, right, bottom).map_err(|e| format!("image box: {e}"))?;
    let bbox = camera_to_box3(h, w, l, x, y, z, ry).map_err(|e| format!("3D box: {e}"))?;
    Ok(Some(Line {
        class_label: fields[0].to_string(),
        truncation: trunc,
        occlusion: occ,
        image_bbox,
        bbox,
        score: with_score.then_some(score),
    }))
}

/// Parses one ground-truth file's contents; `DontCare` lines are skipped.
pub fn parse_gt(frame_id: &str, text: &str, file: &Path) -> Result<Vec<GtObject>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| EvalError::Parse {
            file: file.to_path_buf(),
            line: i + 1,
            msg,
        };
        let Some(line) = parse_line(raw, false).map_err(err)? else {
            continue;
        };
        if !(0.0..=1.0).contains(&line.truncation) {
            return Err(err(format!(
                "truncation {} outside [0, 1]",
                line.truncation
            )));
        }
        if !matches!(line.occlusion, 0.0 | 1.0 | 2.0 | 3.0) {
            return Err(err(format!(
                "occlusion {} not in {{0, 1, 2, 3}}",
                line.occlusion
            )));
        }
        out.push(GtObject {
            frame_id: frame_id.to_string(),
            class_label: line.class_label,
            bbox: line.bbox,
            image_bbox: line.image_bbox,
            truncation: line.truncation,
            occlusion: line.occlusion as u8,
        });
    }
    Ok(out)
}

/// Parses one detection file's contents. Truncation and occlusion are read
/// but not validated, as detectors usually write placeholders there.
pub fn parse_detections(
    frame_id: &str,
    text: &str,
    file: &Path,
) -> Result<Vec<Detection>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| EvalError::Parse {
            file: file.to_path_buf(),
            line: i + 1,
            msg,
        };
        let Some(line) = parse_line(raw, true).map_err(err)? else {
            continue;
        };
        out.push(Detection {
            frame_id: frame_id.to_string(),
            class_label: line.class_label,
            bbox: line.bbox,
            image_bbox: line.image_bbox,
            score: line.score.expect("parsed with score"),
        });
    }
    Ok(out)
}

fn label_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, EvalError> {
    let io = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_string(), path.clone()));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every `*.txt` label file in `dir`, ordered by frame id.
pub fn load_gt_dir(dir: &Path) -> Result<Vec<GtObject>, EvalError> {
    let mut out = Vec::new();
    for (frame, path) in label_files(dir)? {
        out.extend(parse_gt(&frame, &read(&path)?, &path)?);
    }
    Ok(out)
}

/// Loads every `*.txt` detection file in `dir`, ordered by frame id.
pub fn load_det_dir(dir: &Path) -> Result<Vec<Detection>, EvalError> {
    let mut out = Vec::new();
    for (frame, path) in label_files(dir)? {
        out.extend(parse_detections(&frame, &read(&path)?, &path)?);
    }
    Ok(out)
}
