use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use geolqr_cli::{parse_config, run, run_check, CliError, CliResult, CommandKind, RunOutput};

/// Geometric LQR regulation, tracking and obstacle-avoidance runs on SO(3).
#[derive(Parser)]
#[command(name = "geo-lqr", version)]
struct Args {
    #[arg(value_enum)]
    command: CommandKind,
    /// Scenario file (JSON). Optional for `check`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> CliResult<RunOutput> {
    let cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Some(parse_config(&text)?)
        }
        None if args.command == CommandKind::Check => None,
        None => return Err(CliError::validation("--config", "required for this command")),
    };
    match (args.command, cfg) {
        (CommandKind::Check, cfg) => {
            let dir = args.out.as_deref().or(cfg.as_ref().and_then(|c| c.output.dir.as_deref()));
            run_check(dir)
        }
        (cmd, Some(cfg)) => run(&cfg, cmd, args.out.as_deref()),
        (_, None) => unreachable!("config presence checked above"),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = execute(&args).and_then(|out| {
        for line in &out.lines {
            println!("{line}");
        }
        println!("{}", out.summary.to_json());
        out.status()
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.reason_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
