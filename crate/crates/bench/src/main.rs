use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lagpf_bench::config::ExperimentConfig;
use lagpf_bench::data::BuiltModel;
use lagpf_bench::error::BenchError;
use lagpf_bench::presets::presets;
use lagpf_bench::runner::{generate_all, recompute_metrics, save_data};
use lagpf_bench::{run_experiment, Completion, RunOptions};

#[derive(Parser)]
#[command(name = "lagpf", version, about = "Lagged particle filter twin experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Added to every configured seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: the config's output_dir, else ./runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate truth and observations for every seed.
    Generate(Common),
    /// Run every filter on every seed and write records plus summary.json.
    Run(Common),
    /// Recompute error matrices and summary.json from a run directory.
    Metrics {
        /// Directory written by `run`.
        #[arg(long)]
        out: PathBuf,
    },
    /// List built-in configs; with --out, write each as <name>.toml.
    ListConfigs {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), BenchError> {
    let cfg = ExperimentConfig::load(&common.config)?.with_seed_offset(common.seed_offset);
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
    Ok((cfg, out))
}

fn exit_for(e: &BenchError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Generate(common) => {
            let res = load(&common).and_then(|(cfg, out)| {
                let model = BuiltModel::build(&cfg.model)?;
                let data = generate_all(&cfg, &model, common.threads)?;
                save_data(&cfg, &model, &data, &out)?;
                println!("wrote {} data sets to {}", data.len(), out.display());
                Ok(())
            });
            match res {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => exit_for(&e),
            }
        }
        Command::Run(common) => {
            let res = load(&common).and_then(|(cfg, out)| {
                let opts = RunOptions {
                    threads: common.threads,
                    out: Some(out.clone()),
                };
                let outcome = run_experiment(&cfg, &opts)?;
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
                for f in &outcome.summary.filters {
                    println!(
                        "{:<16} runs {:>4}  failed {:>3}  median rel. L2 {}",
                        f.filter,
                        f.runs,
                        f.failed,
                        f.median_relative_l2.map_or("-".into(), |v| format!("{v:.4e}"))
                    );
                }
                for r in outcome.records.iter().filter(|r| !r.meta.status.is_ok()) {
                    eprintln!("failed: {} seed {}: {:?}", r.meta.filter, r.meta.seed, r.meta.status);
                }
                println!("records in {}", out.display());
                Ok(outcome.completion())
            });
            match res {
                Ok(Completion::Success) => ExitCode::SUCCESS,
                Ok(Completion::Partial) => ExitCode::from(2),
                Ok(Completion::Failed) => ExitCode::from(3),
                Err(e) => exit_for(&e),
            }
        }
        Command::Metrics { out } => match recompute_metrics(&out) {
            Ok(s) => {
                for f in &s.filters {
                    println!(
                        "{:<16} median rel. L2 {}",
                        f.filter,
                        f.median_relative_l2.map_or("-".into(), |v| format!("{v:.4e}"))
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
        Command::ListConfigs { out } => {
            for c in presets() {
                println!("{:<24} {}", c.name, c.description);
                if let Some(dir) = &out {
                    let path = dir.join(format!("{}.toml", c.name));
                    let res = std::fs::create_dir_all(dir)
                        .map_err(|e| BenchError::io(dir, e))
                        .and_then(|_| c.to_toml_string())
                        .and_then(|s| std::fs::write(&path, s).map_err(|e| BenchError::io(&path, e)));
                    if let Err(e) = res {
                        return exit_for(&e);
                    }
                }
            }
            ExitCode::SUCCESS
        }
    }
}
