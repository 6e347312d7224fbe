//! Command-line entry point: suite execution with artifact emission, trial
//! replay, randomized validator spot-checks, and report re-rendering from
//! the per-trial CSV.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use guardsim_core::config::RunConfig;
use guardsim_core::eval::{
    render_summary_table, report_from_csv, run_suite, summary_tsv, trajectory_jsonl, trials_to_csv,
    MetricsReport,
};
use guardsim_core::replay::{replay_file, ReplayError};
use guardsim_core::state::export_log;
use guardsim_core::validator::{run_validator_check, validate};
use guardsim_core::world::ScenarioKind;

#[derive(Parser)]
#[command(
    name = "guardsim",
    version,
    about = "Deterministic navigation safety testbed: guarded robot control under prompt injection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario x secured x attacked suite and write artifacts.
    Run(RunArgs),
    /// Re-simulate a trial log and verify every recorded result.
    Replay {
        /// Path to a trial log (.jsonl) produced by `run`.
        log: PathBuf,
    },
    /// Compare the safety validator against the brute-force oracle on
    /// randomized cases.
    CheckValidator {
        /// Number of randomized cases.
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
        samples: u32,
        /// Case-generator seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Re-render the metrics report from a run directory's trials.csv and
    /// compare it against the stored report.json.
    Report {
        /// Run directory produced by `run`.
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict the scenario axis (comma-separated: OF,SO,DO,MO).
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<ScenarioKind>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<u32>,
    /// Base seed; trial seeds are base_seed + trial index.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trial execution.
    #[arg(long)]
    jobs: Option<u32>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-step injection probability for attacked cells.
    #[arg(long)]
    attack_rate: Option<f64>,
    /// Step budget per trial.
    #[arg(long)]
    budget: Option<u32>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay { log } => cmd_replay(&log),
        Command::CheckValidator { samples, seed } => cmd_check_validator(samples, seed),
        Command::Report { run_dir } => cmd_report(&run_dir),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if !args.scenario.is_empty() {
        config.run.scenarios = args.scenario.clone();
    }
    if let Some(trials) = args.trials {
        config.metrics.trials_per_cell = trials;
    }
    if let Some(seed) = args.seed {
        config.run.base_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.run.jobs = jobs;
    }
    if let Some(out) = &args.out {
        config.run.output_dir = out.display().to_string();
    }
    if let Some(rate) = args.attack_rate {
        config.attack.rate = rate;
    }
    if let Some(budget) = args.budget {
        config.metrics.step_budget = budget;
    }
    config.validate().context("resolved config is invalid")?;
    Ok(config)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let config = resolve_config(&args)?;
    let out_dir = PathBuf::from(&config.run.output_dir);
    let logs_dir = out_dir.join("logs");
    let traj_dir = out_dir.join("traj");
    std::fs::create_dir_all(&logs_dir)
        .with_context(|| format!("creating {}", logs_dir.display()))?;
    std::fs::create_dir_all(&traj_dir)
        .with_context(|| format!("creating {}", traj_dir.display()))?;

    // Resolved-config snapshot first: every run is reproducible from it.
    std::fs::write(out_dir.join("config.toml"), config.to_toml())?;

    let result = run_suite(&config.suite_spec(), &config.suite_config());

    let mut report_json = serde_json::to_string_pretty(&result.report)?;
    report_json.push('\n');
    std::fs::write(out_dir.join("report.json"), report_json)?;
    std::fs::write(out_dir.join("trials.csv"), trials_to_csv(&result.trials))?;
    std::fs::write(out_dir.join("summary.tsv"), summary_tsv(&result.report))?;
    for trial in &result.trials {
        export_log(
            &trial.log,
            &logs_dir.join(format!("{}.jsonl", trial.trial_id)),
        )?;
        std::fs::write(
            traj_dir.join(format!("{}.jsonl", trial.trial_id)),
            trajectory_jsonl(trial),
        )?;
    }

    print!("{}", render_summary_table(&result.report));
    println!("artifacts written to {}", out_dir.display());
    if result.report.harness_errors.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "{} trial(s) failed with harness errors; see report.json",
            result.report.harness_errors.len()
        );
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_replay(log: &Path) -> Result<ExitCode> {
    match replay_file(log) {
        Ok(()) => {
            println!("replay ok: {}", log.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(ReplayError::Divergence { step, detail }) => {
            eprintln!("replay diverged at step {step}: {detail}");
            Ok(ExitCode::FAILURE)
        }
        Err(ReplayError::ConfigMismatch(detail)) => {
            eprintln!("config mismatch: {detail}");
            Ok(ExitCode::FAILURE)
        }
        Err(other) => Err(other.into()),
    }
}

fn cmd_check_validator(samples: u32, seed: u64) -> Result<ExitCode> {
    match run_validator_check(samples, seed, validate) {
        None => {
            println!("validator matches the brute-force oracle on {samples} randomized cases");
            Ok(ExitCode::SUCCESS)
        }
        Some(counterexample) => {
            eprintln!("validator disagrees with the oracle:\n{counterexample}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn reports_match(a: &MetricsReport, b: &MetricsReport, tolerance: f64) -> Result<(), String> {
    let close = |x: f64, y: f64| (x - y).abs() <= tolerance;
    if !close(a.s_max, b.s_max) {
        return Err(format!("s_max differs: {} vs {}", a.s_max, b.s_max));
    }
    if a.cells.len() != b.cells.len() {
        return Err(format!(
            "cell counts differ: {} vs {}",
            a.cells.len(),
            b.cells.len()
        ));
    }
    for (x, y) in a.cells.iter().zip(b.cells.iter()) {
        let cell = format!(
            "{} secured={} attacked={}",
            x.scenario, x.secured, x.attacked
        );
        if (x.scenario, x.secured, x.attacked) != (y.scenario, y.secured, y.attacked) {
            return Err(format!("cell order differs at {cell}"));
        }
        if !close(x.moer, y.moer) {
            return Err(format!("{cell}: MOER {} vs {}", x.moer, y.moer));
        }
        if !close(x.adr, y.adr) {
            return Err(format!("{cell}: ADR {} vs {}", x.adr, y.adr));
        }
        if !close(x.tlr, y.tlr) {
            return Err(format!("{cell}: TLR {} vs {}", x.tlr, y.tlr));
        }
        if x.outcomes != y.outcomes {
            return Err(format!("{cell}: outcome counts differ"));
        }
        for (label, ma, mb) in [
            ("mean_steps", x.mean_steps, y.mean_steps),
            ("mean_tokens", x.mean_tokens, y.mean_tokens),
            ("mean_distance_mm", x.mean_distance_mm, y.mean_distance_mm),
        ] {
            match (ma, mb) {
                (Some(u), Some(v)) if close(u, v) => {}
                (None, None) => {}
                _ => return Err(format!("{cell}: {label} differs: {ma:?} vs {mb:?}")),
            }
        }
    }
    Ok(())
}

fn cmd_report(run_dir: &Path) -> Result<ExitCode> {
    let csv_path = run_dir.join("trials.csv");
    let config_path = run_dir.join("config.toml");
    let csv_text = std::fs::read_to_string(&csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let config = RunConfig::load(&config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let recomputed = report_from_csv(&csv_text, &config.metrics)?;
    print!("{}", render_summary_table(&recomputed));

    let report_path = run_dir.join("report.json");
    if report_path.exists() {
        let stored: MetricsReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)
            .context("parsing stored report.json")?;
        match reports_match(&stored, &recomputed, 1e-12) {
            Ok(()) => {
                println!("recomputed metrics match report.json to 1e-12");
                Ok(ExitCode::SUCCESS)
            }
            Err(detail) => {
                eprintln!("recomputed metrics disagree with report.json: {detail}");
                Ok(ExitCode::FAILURE)
            }
        }
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn scenario_values_parse() {
        let cli = Cli::parse_from(["guardsim", "run", "--scenario", "OF,MO", "--trials", "2"]);
        match cli.command {
            Command::Run(args) => {
                assert_eq!(
                    args.scenario,
                    vec![ScenarioKind::ObstacleFree, ScenarioKind::MixedObstacles]
                );
                assert_eq!(args.trials, Some(2));
            }
            _ => panic!("expected run"),
        }
    }
}
