use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use splitnet::campaign::{run_campaign, summarize, CampaignConfig, SeedSpec, Summary};
use splitnet::orchestrator::Policy;
use splitnet::Error;

#[derive(Parser)]
#[command(name = "splitnet", version, about = "TN/NTN bandwidth-split and association campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write per-run and pooled artifacts.
    Run(RunArgs),
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the pooled comparison table of a finished campaign.
    Summarize {
        /// Campaign output directory.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Campaign config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy to run; repeat to run several. Replaces the config's list.
    #[arg(long = "policy", value_name = "NAME")]
    policies: Vec<String>,
    /// Seed count `N` (seeds 0..N) or a comma-separated list.
    #[arg(long, value_name = "N|LIST")]
    seeds: Option<String>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, env = "SPLITNET_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Load and validate the config with overrides applied, then stop.
    #[arg(long)]
    validate_only: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig { .. } | Error::ConfigParse(_) => 2,
        Error::Io { .. } | Error::Csv(_) => 3,
        _ => 1,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidConfig { .. } => "invalid_config",
        Error::ConfigParse(_) => "config_parse",
        Error::Io { .. } => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
        Error::NoReports(_) => "no_reports",
        Error::MissingFiles(_) => "missing_files",
        Error::SnapshotMismatch => "snapshot_mismatch",
        _ => "solver",
    }
}

/// One JSON object on stderr, then the matching exit code.
fn fail(err: Error) -> ExitCode {
    let mut obj = serde_json::json!({
        "error": error_kind(&err),
        "exit_code": exit_code(&err),
        "message": err.to_string(),
    });
    match &err {
        Error::InvalidConfig { field, reason } => {
            obj["field"] = field.clone().into();
            obj["reason"] = reason.clone().into();
        }
        Error::Io { path, .. } => obj["path"] = path.display().to_string().into(),
        Error::MissingFiles(files) => {
            obj["files"] = files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().into();
        }
        _ => {}
    }
    eprintln!("{obj}");
    ExitCode::from(exit_code(&err))
}

fn load(path: Option<&Path>) -> splitnet::Result<CampaignConfig> {
    match path {
        Some(p) => CampaignConfig::load(p),
        None => Ok(CampaignConfig::default()),
    }
}

fn configure(args: &RunArgs) -> splitnet::Result<CampaignConfig> {
    let mut cfg = load(args.config.as_deref())?;
    if !args.policies.is_empty() {
        cfg.campaign.policies = args.policies.iter().map(|p| p.parse::<Policy>()).collect::<Result<_, _>>()?;
    }
    if let Some(s) = &args.seeds {
        cfg.campaign.seeds = s.parse::<SeedSpec>()?;
    }
    if let Some(out) = &args.out {
        cfg.campaign.output_dir = out.clone();
    }
    if args.threads == Some(0) {
        return Err(Error::InvalidConfig {
            field: "threads".into(),
            reason: "must be >= 1".into(),
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> splitnet::Result<()> {
    let cfg = configure(&args)?;
    if args.validate_only {
        println!("config ok");
        return Ok(());
    }
    if let Some(n) = args.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cfg.campaign.output_dir.clone();
    let seeds = cfg.campaign.seeds.seeds();
    info!(
        "running {} policies on {} seeds into {}",
        cfg.campaign.policies.len(),
        seeds.len(),
        out.display()
    );
    let res = run_campaign(&cfg, &out)?;
    for w in &res.warnings {
        warn!(
            "seed {} {}: {} infeasible UEs, {} infeasible BSs, converged {}",
            w.seed,
            w.policy,
            w.infeasible_ues.len(),
            w.infeasible_bs.len(),
            w.converged
        );
    }
    if !res.warnings.is_empty() {
        eprintln!("{} flagged runs recorded in {}", res.warnings.len(), out.join("warnings.json").display());
    }
    let summary = Summary {
        rows: res.table,
        seeds: seeds.len(),
    };
    println!("{summary}");
    println!("artifacts in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => CampaignConfig::load(&config).map(|_| println!("config ok")),
        Command::Summarize { dir } => summarize(&dir).map(|s| println!("{s}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
