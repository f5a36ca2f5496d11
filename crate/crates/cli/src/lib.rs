//! Command-line front end for the S-arithmetic counting library: config
//! parsing, subcommand dispatch, and deterministic CSV emission.

pub mod config;
pub mod run;

use std::fs;
use std::path::PathBuf;

use run::Command;

pub const USAGE: &str = "\
usage: sqcount <count|volume|ratio|lemmas|alpha> [options]

options:
  --config PATH    line-oriented `key = value` config (default: all defaults)
  --out DIR        output directory (default: current directory)
  --workers N      size of the worker pool (never changes output bytes)
  --dump-vectors   also write the counted vectors of the last schedule row

exit codes: 0 success, 1 validation error, 2 safety-cap refusal.
Diagnostics go to stderr; data only to files in --out.";

/// Parsed command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliArgs {
    pub cmd: Command,
    pub config: Option<String>,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub dump_vectors: bool,
}

/// Parse argv (without the program name). `Err` is a message for stderr.
pub fn parse_args(args: &[String]) -> Result<CliArgs, String> {
    let mut it = args.iter();
    let first = it.next().ok_or("missing subcommand")?;
    let cmd = Command::parse(first)
        .ok_or_else(|| format!("unknown subcommand `{first}`"))?;
    let mut config = None;
    let mut out = PathBuf::from(".");
    let mut workers = None;
    let mut dump_vectors = false;
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => {
                let v = it.next().ok_or("--config needs a path")?;
                config = Some(v.clone());
            }
            "--out" => {
                let v = it.next().ok_or("--out needs a directory")?;
                out = PathBuf::from(v);
            }
            "--workers" => {
                let v = it.next().ok_or("--workers needs a count")?;
                let n: usize =
                    v.parse().map_err(|_| format!("--workers needs an integer, got {v:?}"))?;
                if n == 0 {
                    return Err("--workers must be at least 1".into());
                }
                workers = Some(n);
            }
            "--dump-vectors" => dump_vectors = true,
            _ => return Err(format!("unknown flag `{flag}`")),
        }
    }
    Ok(CliArgs { cmd, config, out, workers, dump_vectors })
}

/// The whole program behind `main`: returns the process exit code.
pub fn cli_main(args: &[String]) -> i32 {
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        return 0;
    }
    let parsed = match parse_args(args) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            return 1;
        }
    };

    if let Some(n) = parsed.workers {
        // Pool size is a performance knob only: every parallel reduction in
        // the library is deterministic, so output bytes cannot depend on it.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: worker pool already initialized ({e}); continuing");
        }
    }

    let text = match &parsed.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(t) => t,
            Err(err) => {
                eprintln!("error: cannot read config {path}: {err}");
                return 1;
            }
        },
        None => String::new(),
    };
    let cfg = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    match run::run(parsed.cmd, &cfg, &parsed.out, parsed.dump_vectors) {
        Ok(output) => {
            for path in &output.files {
                eprintln!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            if run::is_cap_refusal(&e) {
                eprintln!("refusing: {e}");
            } else {
                eprintln!("error: {e}");
            }
            run::exit_code(&e)
        }
    }
}
