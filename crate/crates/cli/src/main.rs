mod args;
mod commands;

use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = cli.global.resolve().map_err(Failure::Usage)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| Failure::Data(e.into()))?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Data(e.into()))?;
    let start = Instant::now();
    let result = match &cli.command {
        Command::Volume(sel) => commands::volume(&cfg, sel),
        Command::Depth(sel) => commands::depth(&cfg, sel),
        Command::Map { sequence } => commands::map(&cfg, sequence),
        Command::Eval { pred, gt, png_scale } => commands::eval(&cfg, pred, gt, *png_scale),
        Command::TrainToy(a) => commands::train(&cfg, a),
        Command::Synth(a) => commands::synth(&cfg, a),
        Command::Gradcheck(a) => commands::gradcheck(&cfg, a).and_then(|passed| {
            if passed {
                Ok(())
            } else {
                Err(anyhow::anyhow!("gradient check exceeded tolerance"))
            }
        }),
    };
    if cli.global.timings {
        eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
    }
    result.map_err(Failure::Data)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
