use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mmc_ch_cli::{config::Mode, parse_config_with, run, thread_cap, CliError};

#[derive(Parser)]
#[command(name = "mmc-ch", version, about = "Phase separation in a compressible ternary polymer mixture")]
struct Args {
    /// simulate, refine or compare
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value`, applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Simulate => "simulate",
        Mode::Refine => "refine",
        Mode::Compare => "compare",
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("mmc-ch: reading {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut overrides = args.overrides;
    overrides.push(format!("mode = {}", mode_name(args.mode)));
    if let Some(out) = &args.out {
        overrides.push(format!("out_dir = {}", out.display()));
    }
    let threads = thread_cap(std::env::var("MMC_CH_THREADS").ok().as_deref());
    let result =
        parse_config_with(&text, &overrides).map_err(CliError::from).and_then(|cfg| run(&cfg, threads));
    match result {
        Ok(outcome) => {
            if let Err(e) = mmc_ch_cli::run::report(&outcome, &mut std::io::stdout().lock()) {
                eprintln!("mmc-ch: {e}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mmc-ch: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
