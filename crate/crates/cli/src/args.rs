use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Rotated-box IoU tools: pairwise queries, gradient checks, KITTI-style
/// evaluation and the loss-comparison fit demo.
///
/// Log verbosity is read from ROTBOX_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "rotbox", version)]
pub struct Cli {
    /// Key-value file (`key = value` per line) supplying flags for the
    /// subcommand; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Overlap of two boxes.
    #[command(args_override_self = true)]
    Iou(IouArgs),
    /// Compare analytic gradients with finite differences on random pairs.
    #[command(args_override_self = true)]
    GradCheck(GradCheckArgs),
    /// Average precision of detections against KITTI labels.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Fit a box to a fixed target by gradient descent and print the trace as CSV.
    #[command(args_override_self = true)]
    FitDemo(FitDemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IouMode {
    /// Axis-aligned: x_min,y_min,x_max,y_max
    Aa,
    /// Rotated: cx,cy,w,l,yaw
    Rot,
    /// Cuboid: cx,cy,cz,w,l,h,yaw
    #[value(name = "3d")]
    ThreeD,
}

impl IouMode {
    pub fn fields(self) -> usize {
        match self {
            IouMode::Aa => 4,
            IouMode::Rot => 5,
            IouMode::ThreeD => 7,
        }
    }
}

#[derive(Debug, Args)]
pub struct IouArgs {
    #[arg(long, value_enum, default_value = "rot")]
    pub mode: IouMode,
    /// Ground-truth box, comma separated.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pub g: BoxArg,
    /// Detected box, comma separated.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    pub d: BoxArg,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairMode {
    Rot,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Iou,
    Giou,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "rot")]
    pub mode: PairMode,
    #[arg(long, value_enum, default_value = "iou")]
    pub loss: MetricArg,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    pub step: f64,
    /// Largest accepted relative error per parameter.
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    pub tol: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalModeArg {
    Bev,
    #[value(name = "3d")]
    ThreeD,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    #[value(name = "11")]
    Eleven,
    #[value(name = "40")]
    Forty,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of ground-truth label files.
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory of detection files (labels plus a trailing score).
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long, default_value = "Car")]
    pub class: String,
    #[arg(long, value_enum, default_value = "bev")]
    pub mode: EvalModeArg,
    #[arg(long, value_enum, default_value = "11")]
    pub interp: InterpArg,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitLossArg {
    L1,
    Iou,
    Giou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitInitArg {
    Overlap,
    Disjoint,
}

#[derive(Debug, Args)]
pub struct FitDemoArgs {
    #[arg(long, value_enum, default_value = "iou")]
    pub loss: FitLossArg,
    #[arg(long, value_enum, default_value = "overlap")]
    pub init: FitInitArg,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Comma-separated box parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxArg(pub Vec<f64>);

fn parse_box(s: &str) -> Result<BoxArg, String> {
    s.split(',')
        .map(|tok| {
            let t = tok.trim();
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("invalid number {t:?} in box {s:?}")),
            }
        })
        .collect::<Result<_, _>>()
        .map(BoxArg)
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

/// Splices flags from a `--config` file in right after the subcommand name,
/// so that command-line flags, which come later, override them.
pub fn expand_config(raw: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut args = Vec::with_capacity(raw.len());
    let mut path = None;
    let mut it = raw.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => match it.next() {
                Some(p) => path = Some(PathBuf::from(p)),
                None => bail!("--config requires a file"),
            },
            Some(s) if s.starts_with("--config=") => {
                path = Some(PathBuf::from(&s["--config=".len()..]))
            }
            _ => args.push(a),
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), n + 1);
        };
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        match value {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => extra.push(OsString::from(format!("--{key}={value}"))),
        }
    }
    // the subcommand is the first argument after the program name that is not a flag
    let at = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(args.len(), |i| i + 2);
    args.splice(at..at, extra);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn box_parsing() {
        assert_eq!(
            parse_box("0,-1.5, 2,3e0").unwrap().0,
            vec![0.0, -1.5, 2.0, 3.0]
        );
        let err = parse_box("0,x,2").unwrap_err();
        assert!(err.contains("\"x\""), "{err}");
        assert!(parse_box("1,inf").is_err());
    }

    #[test]
    fn config_is_spliced_before_cli_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# demo\nloss = giou\nsteps=10\njson = false\n").unwrap();
        let c = cfg.to_str().unwrap();
        let out =
            expand_config(os(&["rotbox", "--config", c, "fit-demo", "--steps", "3"])).unwrap();
        assert_eq!(
            out,
            os(&[
                "rotbox",
                "fit-demo",
                "--loss=giou",
                "--steps=10",
                "--steps",
                "3"
            ])
        );
        let cli = Cli::try_parse_from(out).unwrap();
        let Command::FitDemo(a) = cli.command else {
            panic!()
        };
        assert_eq!((a.loss, a.steps), (FitLossArg::Giou, 3));
        fs::write(&cfg, "bogus line\n").unwrap();
        assert!(expand_config(os(&["rotbox", "iou", "--config", c])).is_err());
    }
}
