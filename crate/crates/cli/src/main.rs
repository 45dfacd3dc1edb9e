use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use evidence_cli::{parse_override, run, CliResult, ExperimentId, RunConfig};

/// Run a seeded evidence experiment and write CSV/JSON artifacts.
#[derive(Debug, Parser)]
#[command(name = "evidence", version)]
struct Args {
    #[arg(long, value_enum)]
    experiment: ExperimentId,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    out: PathBuf,

    /// Override a parameter, e.g. `--set n=50` or `--set models=["M3","M9c"]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn config(args: Args) -> CliResult<RunConfig> {
    Ok(RunConfig {
        experiment: args.experiment,
        seed: args.seed,
        out: args.out,
        overrides: args
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<CliResult<_>>()?,
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match config(args).and_then(|c| run(&c)) {
        Ok(files) => {
            for f in files {
                println!("{f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
