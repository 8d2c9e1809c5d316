use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anticipating_levy::cli;
use anticipating_levy::error::Error;
use anticipating_levy::mc;
use anticipating_levy::scenario::{template, Scenario, Suite, TEMPLATES};

/// Seeded Monte Carlo experiments for anticipating linear SDEs with jumps.
#[derive(Parser)]
#[command(name = "alevy", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the suites of a scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory for CSV and JSON artifacts.
        #[arg(long, default_value = "alevy-out")]
        out: PathBuf,
        /// Comma-separated suites (sample, transform, girsanov, solution, verify).
        /// Overrides the scenario's selection; pass an empty string to run nothing.
        #[arg(long)]
        suites: Option<String>,
        /// Override the number of Monte Carlo paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Override the number of grid steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a complete scenario file for a template.
    Emit {
        template: String,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => 3,
        _ => 2,
    }
}

fn parse_suites(text: &str) -> Result<Vec<Suite>, Error> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.cmd {
        Cmd::Emit { template: name, out } => {
            let text = match template(&name).and_then(|s| s.to_toml()) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e} (templates: {})", TEMPLATES.join(", "));
                    return ExitCode::from(2);
                }
            };
            match out {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, text) {
                        eprintln!("error: {}: {e}", p.display());
                        return ExitCode::from(3);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Cmd::Run { scenario, out, suites, paths, steps, seed } => {
            let text = match std::fs::read_to_string(&scenario) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", scenario.display());
                    return ExitCode::from(3);
                }
            };
            let parsed = Scenario::from_toml(&text).and_then(|mut s| {
                if let Some(n) = paths {
                    s.mc.paths = n;
                }
                if let Some(m) = steps {
                    s.grid.steps = m;
                    s.verify.refinement_levels.retain(|&l| l > 0 && m % l == 0);
                }
                if let Some(x) = seed {
                    s.mc.seed = x;
                }
                if let Some(list) = &suites {
                    s.suites = parse_suites(list)?;
                }
                s.validate()?;
                Ok(s)
            });
            let s = match parsed {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {}: {e}", scenario.display());
                    return ExitCode::from(exit_for(&e));
                }
            };
            let workers = mc::init_workers();
            eprintln!("scenario {} (m = {}, N = {}, seed = {}, workers = {workers})", s.name, s.grid.steps, s.mc.paths, s.mc.seed);
            let summary = match cli::run(&s, &s.suites, Some(&out)) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_for(&e));
                }
            };
            for suite in &summary.suites {
                for c in &suite.checks {
                    println!("{:<10} {} {}: {:.4e} (limit {:.4e})", suite.suite.name(), if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
                }
                println!("{:<10} {} in {:.1}s", suite.suite.name(), if suite.passed() { "passed" } else { "FAILED" }, suite.seconds);
            }
            ExitCode::from(summary.exit_code() as u8)
        }
    }
}
