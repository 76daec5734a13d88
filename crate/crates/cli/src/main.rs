use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use randhyp::{parse_config, report, run_task, with_threads, RunReport, Task};

/// Random skew products: Lyapunov exponents, expansion and hyperbolicity certificates.
#[derive(Debug, Parser)]
#[command(name = "randhyp", version)]
struct Cli {
    /// certify-expansion, lyapunov, minimize, splitting, corollary, full-pipeline or trajectory.
    task: Task,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "RANDHYP_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading {}", cli.config.display()))?;
    let config = parse_config(&text, Some(cli.task))?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("randhyp-out"));
    if cli.threads == Some(0) {
        anyhow::bail!("--threads must be at least 1");
    }

    let started = Instant::now();
    let result = with_threads(cli.threads, || run_task(&config))?;
    let wall = started.elapsed().as_secs_f64();
    let run_report = RunReport::new(&config, &result, wall);
    let tables = result.as_ref().map(|o| o.tables.as_slice()).unwrap_or(&[]);
    let path = report::write_report(&out, &run_report, tables)?;

    match &run_report.error {
        Some(e) => eprintln!("{} failed: {}", config.task, e.message),
        None => println!(
            "{}: {} (report: {})",
            config.task,
            serde_json::to_value(run_report.verdict)?.as_str().unwrap_or("?"),
            path.display()
        ),
    }
    Ok(run_report.exit_code as u8)
}
