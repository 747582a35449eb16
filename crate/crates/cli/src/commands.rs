use std::fs;
use std::io::{self, Write};

use anyhow::{bail, Context, Result};
use log::info;
use serde_json::json;

use rotbox_iou::eval::{evaluate, load_det_dir, load_gt_dir, EvalConfig, EvalMode, Interpolation};
use rotbox_iou::fit::{fit_demo, write_csv, FitConfig, FitInit, FitLoss};
use rotbox_iou::grad::{gradient_suite, Metric, PairDim, PairObjective};
use rotbox_iou::overlap::{giou_with, Enclosure};
use rotbox_iou::{aa_iou, giou, giou_3d, iou_3d, rotated_iou, AABox2, Box3, RBox2};

use crate::args::{
    EvalArgs, EvalModeArg, FitDemoArgs, FitInitArg, FitLossArg, GradCheckArgs, InterpArg, IouArgs,
    IouMode, MetricArg, PairMode,
};

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    /// Work finished but a check failed (exit status 1).
    Failed,
}

pub fn iou(args: &IouArgs) -> Result<Status> {
    let (r, g) = match args.mode {
        IouMode::Aa => {
            let mk = |v: &[f64]| AABox2::new(v[0], v[1], v[2], v[3]);
            let (a, b) = (mk(&args.g.0).context("--g")?, mk(&args.d.0).context("--d")?);
            let gi = giou_with(&a.to_rbox()?, &b.to_rbox()?, Enclosure::Aabb);
            (aa_iou(&a, &b), gi)
        }
        IouMode::Rot => {
            let mk = |v: &[f64]| RBox2::from_params(v.try_into().expect("field count checked"));
            let (a, b) = (mk(&args.g.0).context("--g")?, mk(&args.d.0).context("--d")?);
            (rotated_iou(&a, &b), giou(&a, &b))
        }
        IouMode::ThreeD => {
            let mk = |v: &[f64]| Box3::from_params(v.try_into().expect("field count checked"));
            let (a, b) = (mk(&args.g.0).context("--g")?, mk(&args.d.0).context("--d")?);
            (iou_3d(&a, &b), giou_3d(&a, &b))
        }
    };
    let mut out = io::stdout().lock();
    if args.json {
        let mode = match args.mode {
            IouMode::Aa => "aa",
            IouMode::Rot => "rot",
            IouMode::ThreeD => "3d",
        };
        let v = json!({
            "mode": mode,
            "iou": r.iou,
            "giou": g,
            "intersection": r.intersection_area,
            "union": r.union_area,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    } else {
        writeln!(out, "iou           {}", r.iou)?;
        writeln!(out, "giou          {g}")?;
        writeln!(out, "intersection  {}", r.intersection_area)?;
        writeln!(out, "union         {}", r.union_area)?;
    }
    Ok(Status::Ok)
}

pub fn grad_check(args: &GradCheckArgs) -> Result<Status> {
    let metric = match args.loss {
        MetricArg::Iou => Metric::Iou,
        MetricArg::Giou => Metric::Giou,
    };
    let dim = match args.mode {
        PairMode::Rot => PairDim::Rot2D,
        PairMode::ThreeD => PairDim::Box3D,
    };
    let pairs = usize::try_from(args.pairs).context("--pairs too large")?;
    let r = gradient_suite(
        PairObjective::new(metric, dim),
        pairs,
        args.seed,
        args.step,
        args.tol,
    )?;
    let pass = r.failures == 0;
    let mut out = io::stdout().lock();
    if args.json {
        let v = json!({
            "metric": r.metric,
            "dim": r.dim,
            "seed": r.seed,
            "pairs": r.pairs,
            "resampled": r.resampled,
            "max_rel_error": r.max_rel_error,
            "mean_rel_error": r.mean_rel_error,
            "failures": r.failures,
            "tolerance": args.tol,
            "pass": pass,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    } else {
        writeln!(out, "metric {:?}, {:?}, seed {}", r.metric, r.dim, r.seed)?;
        writeln!(out, "pairs checked        {}", r.pairs)?;
        writeln!(out, "non-smooth resampled {}", r.resampled)?;
        writeln!(out, "max relative error   {:.3e}", r.max_rel_error)?;
        writeln!(out, "mean relative error  {:.3e}", r.mean_rel_error)?;
        writeln!(
            out,
            "pairs over tolerance {} (tol {:e})",
            r.failures, args.tol
        )?;
        writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
    }
    Ok(if pass { Status::Ok } else { Status::Failed })
}

pub fn eval(args: &EvalArgs) -> Result<Status> {
    for dir in [&args.gt, &args.det] {
        if !dir.is_dir() {
            bail!("{} is not a directory", dir.display());
        }
    }
    let gts = load_gt_dir(&args.gt)?;
    let dets = load_det_dir(&args.det)?;
    info!(
        "loaded {} ground-truth objects and {} detections",
        gts.len(),
        dets.len()
    );
    let mode = match args.mode {
        EvalModeArg::Bev => EvalMode::Bev,
        EvalModeArg::ThreeD => EvalMode::Full3D,
        EvalModeArg::TwoD => EvalMode::Image2D,
    };
    let mut config = EvalConfig::new(args.class.clone(), mode);
    config.interpolation = match args.interp {
        InterpArg::Eleven => Interpolation::Eleven,
        InterpArg::Forty => Interpolation::Forty,
    };
    let report = evaluate(&gts, &dets, &config)?;
    print!("{}", report.table());
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        info!("report written to {}", path.display());
    }
    Ok(Status::Ok)
}

pub fn fit(args: &FitDemoArgs) -> Result<Status> {
    let loss = match args.loss {
        FitLossArg::L1 => FitLoss::L1,
        FitLossArg::Iou => FitLoss::Iou,
        FitLossArg::Giou => FitLoss::Giou,
    };
    let init = match args.init {
        FitInitArg::Overlap => FitInit::Overlap,
        FitInitArg::Disjoint => FitInit::Disjoint,
    };
    let trace = fit_demo(&FitConfig {
        loss,
        init,
        steps: args.steps,
        lr: args.lr,
        seed: args.seed,
    })?;
    let last = trace.last().expect("trace includes the initial state");
    let summary = match trace.iter().find(|s| s.eval_iou >= 0.99) {
        Some(s) => format!(
            "final iou {:.6}; first reached 0.99 at step {}",
            last.eval_iou, s.step
        ),
        None => format!("final iou {:.6}; never reached 0.99", last.eval_iou),
    };
    match &args.out {
        Some(path) => {
            let file =
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&trace, io::BufWriter::new(file))?;
            println!("{summary}");
        }
        None => {
            write_csv(&trace, io::stdout().lock())?;
            eprintln!("{summary}");
        }
    }
    Ok(Status::Ok)
}
