mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use commands::Status;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROTBOX_LOG", "warn")).init();

    let raw = match args::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(raw) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Command::Iou(a) = &cli.command {
        for (flag, v) in [("--g", &a.g.0), ("--d", &a.d.0)] {
            if v.len() != a.mode.fields() {
                let msg = format!(
                    "{flag} needs {} comma-separated values in this mode, got {}",
                    a.mode.fields(),
                    v.len()
                );
                let _ = Cli::command()
                    .error(ErrorKind::ValueValidation, msg)
                    .print();
                return ExitCode::from(2);
            }
        }
    }
    let result = match &cli.command {
        Command::Iou(a) => commands::iou(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::Eval(a) => commands::eval(a),
        Command::FitDemo(a) => commands::fit(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
