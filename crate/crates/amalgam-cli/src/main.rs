//! Configuration-driven experiment runner.
//!
//! Subcommands:
//!   amalgam run <config>       execute the configured mode, write artifacts
//!   amalgam compare <dirs...>  summary CSV (stdout) from run eval reports
//!   amalgam validate <config>  resolve and print the config, no compute
//!
//! Exit codes: 0 success, 2 invalid config/input, 3 training divergence,
//! 4 I/O failure. `AMALGAM_THREADS` overrides the `threads` key.

mod compare;
mod config;
mod runner;

use std::path::Path;
use std::process::ExitCode;

fn usage() -> ExitCode {
    eprintln!("usage: amalgam run <config> | compare <dirs...> | validate <config>");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(cmd) = args.first() else {
        return usage();
    };
    match cmd.as_str() {
        "run" => {
            let Some(path) = args.get(1) else {
                return usage();
            };
            match runner::run(Path::new(path)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(runner::exit_code(&err) as u8)
                }
            }
        }
        "compare" => {
            let dirs = &args[1..];
            match compare::compare(dirs) {
                Ok(csv) => {
                    print!("{csv}");
                    ExitCode::SUCCESS
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(2)
                }
            }
        }
        "validate" => {
            let Some(path) = args.get(1) else {
                return usage();
            };
            match config::load(Path::new(path)) {
                Ok(cfg) => {
                    print!("{}", cfg.to_text());
                    ExitCode::SUCCESS
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(2)
                }
            }
        }
        _ => usage(),
    }
}
