//! Command-line front end. Exit codes: 0 success, 1 validation problems
//! (flags, config, stream/config mismatches), 2 I/O failures, 3 internal
//! invariant breaches (broken accounting, replay divergence).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use planprobe::config::{load_config, CampaignConfig};
use planprobe::records::read_records;
use planprobe::report::{build_report, compute_vd_pools, render_csv, render_text};
use planprobe::runner::{
    replay_source, run_campaign, verify_stored_suite, write_outputs, write_suite, CampaignError,
};
use planprobe::suite::generate_suite;
use planprobe_core::planners::PlannerId;

#[derive(Parser)]
#[command(name = "planprobe", version, about = "Metamorphic probing campaigns for grid navigation planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Campaign config file (strict JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict the run to this planner (repeatable)
    #[arg(long = "planner", value_name = "NAME")]
    planners: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the source suite and write suite.jsonl
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Execute the campaign matrix and write records plus reports
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads; output bytes do not depend on this
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Recompute diversity clusters from stored records (no re-execution)
    Cluster {
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild report files from stored records
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Re-execute one source case and compare byte-for-byte with the stored
    /// records
    Replay {
        #[command(flatten)]
        common: Common,
        /// Case id, e.g. case-00042
        source_id: String,
    },
}

fn load(common: &Common) -> Result<CampaignConfig, CampaignError> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if !common.planners.is_empty() {
        let mut selected = Vec::new();
        for name in &common.planners {
            let id = PlannerId::ALL
                .iter()
                .copied()
                .find(|p| p.name() == name)
                .ok_or_else(|| CampaignError::Validation(format!("unknown planner {name}")))?;
            if !cfg.planners.contains(&id) {
                return Err(CampaignError::Validation(format!(
                    "planner {name} is not enabled by this config"
                )));
            }
            if !selected.contains(&id) {
                selected.push(id);
            }
        }
        cfg.planners.retain(|p| selected.contains(p));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report_files(
    cfg: &CampaignConfig,
    report: &planprobe::report::CampaignReport,
) -> Result<(), CampaignError> {
    let io = |path: &std::path::Path, contents: &str| -> Result<(), CampaignError> {
        std::fs::write(path, contents)
            .map_err(|source| CampaignError::Io { path: path.display().to_string(), source })
    };
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|source| CampaignError::Io { path: cfg.out_dir.display().to_string(), source })?;
    let mut json = serde_json::to_string_pretty(report).expect("reports serialize");
    json.push('\n');
    io(&cfg.out_dir.join("report.json"), &json)?;
    io(&cfg.out_dir.join("report.csv"), &render_csv(report))?;
    io(&cfg.out_dir.join("report.txt"), &render_text(report))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CampaignError> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load(&common)?;
            let suite = generate_suite(&cfg)?;
            let path = write_suite(&cfg, &suite)?;
            println!("wrote {} cases to {}", suite.len(), path.display());
        }
        Command::Run { common, jobs } => {
            if jobs == 0 {
                return Err(CampaignError::Validation("--jobs must be at least 1".into()));
            }
            let cfg = load(&common)?;
            let started = Instant::now();
            let outcome = run_campaign(&cfg, jobs)?;
            write_outputs(&cfg, &outcome, jobs, started)?;
            print!("{}", render_text(&outcome.report));
            println!("\nartifacts written to {}", cfg.out_dir.display());
        }
        Command::Cluster { common } => {
            let cfg = load(&common)?;
            verify_stored_suite(&cfg)?;
            let records = read_records(&cfg.out_dir.join("records.jsonl"))?;
            let pools = compute_vd_pools(&cfg, &records).map_err(CampaignError::Validation)?;
            println!("{}", serde_json::to_string_pretty(&pools).expect("pools serialize"));
        }
        Command::Report { common } => {
            let cfg = load(&common)?;
            let suite = verify_stored_suite(&cfg)?;
            let records = read_records(&cfg.out_dir.join("records.jsonl"))?;
            let report =
                build_report(&cfg, &suite, &records).map_err(CampaignError::Validation)?;
            write_report_files(&cfg, &report)?;
            print!("{}", render_text(&report));
        }
        Command::Replay { common, source_id } => {
            let cfg = load(&common)?;
            let (stored, recomputed) = replay_source(&cfg, &source_id)?;
            if stored == recomputed {
                println!("{source_id}: {} records replayed, all byte-identical", stored.len());
            } else {
                let first_diff = stored
                    .iter()
                    .zip(&recomputed)
                    .position(|(a, b)| a != b)
                    .unwrap_or_else(|| stored.len().min(recomputed.len()));
                return Err(CampaignError::Invariant(format!(
                    "{source_id}: replay diverged from stored records ({} stored, {} \
                     recomputed, first difference at record {first_diff})",
                    stored.len(),
                    recomputed.len(),
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
