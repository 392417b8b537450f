use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sfpo_harness::metrics::{read_metrics, read_objects};
use sfpo_harness::plot::{render, PlotKind, Series};
use sfpo_harness::verify::run_quad_suite;
use sfpo_harness::{efficiency_report, parse_seed_list, run_experiment, run_preset, Preset, RunConfig};

#[derive(Parser)]
#[command(name = "sfpo", version, about = "Slow-fast policy optimization experiments on toy tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a configuration file.
    Run {
        config: PathBuf,
        /// Seeds as `0,1,2` or `0..5`; overrides the file.
        #[arg(long)]
        seed_list: Option<String>,
        /// Output directory; overrides the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force plain one-shot updates (alpha0 = 0).
        #[arg(long)]
        baseline: bool,
    },
    /// Run a named ablation preset.
    Ablate {
        /// alpha_grid, k_sweep, stage3, entropy_control, alpha_decay or baseline_vs_sfpo
        preset: String,
        /// Base configuration; defaults to the preset's own.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed_list: Option<String>,
        #[arg(long, default_value = "ablations")]
        out: PathBuf,
    },
    /// Compare the rollouts two runs need to reach a smoothed reward.
    Report {
        baseline: PathBuf,
        sfpo: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write a tab-separated table from metrics files.
    Plot {
        kind: Kind,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        /// Reward target for the efficiency table.
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
    /// Check the fast-trajectory closed form and reposition on random quadratics.
    Verify {
        #[arg(long, default_value_t = 50)]
        problems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Reward,
    Entropy,
    Length,
    WallClock,
    Efficiency,
}

fn apply_overrides(config: &mut RunConfig, seed_list: Option<&str>, out: Option<&Path>) -> Result<()> {
    if let Some(list) = seed_list {
        config.seeds = parse_seed_list(list).map_err(anyhow::Error::msg).context("--seed-list")?;
    }
    if let Some(out) = out {
        config.output_dir = out.to_path_buf();
    }
    config.validate()?;
    Ok(())
}

fn series_names(files: &[PathBuf]) -> Vec<String> {
    let stem = |p: &PathBuf| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into());
    let stems: Vec<String> = files.iter().map(stem).collect();
    let unique = stems.iter().enumerate().all(|(i, s)| !stems[..i].contains(s));
    if unique {
        return stems;
    }
    files
        .iter()
        .zip(stems)
        .map(|(p, s)| match p.parent().and_then(Path::file_name) {
            Some(dir) => format!("{}_{s}", dir.to_string_lossy()),
            None => s,
        })
        .collect()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, seed_list, out, baseline } => {
            let mut c = RunConfig::load(&config)?;
            c.baseline_mode |= baseline;
            apply_overrides(&mut c, seed_list.as_deref(), out.as_deref())?;
            for path in run_experiment(&c)? {
                println!("{}", path.display());
            }
        }
        Command::Ablate { preset, config, seed_list, out } => {
            let Some(p) = Preset::from_name(&preset) else {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                bail!("unknown preset {preset:?}; expected one of {}", names.join(", "));
            };
            let mut base = match config {
                Some(path) => RunConfig::load(&path)?,
                None => p.default_base(),
            };
            apply_overrides(&mut base, seed_list.as_deref(), None)?;
            for v in run_preset(p, &base, &out)? {
                for path in v.files {
                    println!("{}\t{}", v.label, path.display());
                }
            }
        }
        Command::Report { baseline, sfpo, target, window, json } => {
            if window == 0 {
                bail!("--window must be positive");
            }
            let b = read_metrics(&baseline)?;
            let s = read_metrics(&sfpo)?;
            let report = efficiency_report(&b, &s, target, window);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
            }
        }
        Command::Plot { kind, files, out, target, window } => {
            let kind = match kind {
                Kind::Reward => PlotKind::Reward,
                Kind::Entropy => PlotKind::Entropy,
                Kind::Length => PlotKind::Length,
                Kind::WallClock => PlotKind::WallClock,
                Kind::Efficiency => PlotKind::Efficiency { target, window },
            };
            let series = files
                .iter()
                .zip(series_names(&files))
                .map(|(path, name)| Ok(Series { name, rows: read_objects(path)? }))
                .collect::<Result<Vec<_>>>()?;
            let table = render(&series, kind)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join(format!("{}.tsv", kind.name()));
            fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", path.display());
        }
        Command::Verify { problems, seed } => {
            let report = run_quad_suite(problems, seed)?;
            let failed_traj = report.trajectory.iter().filter(|c| !c.passed).count();
            let failed_prox = report.proximal.iter().filter(|c| !c.passed).count();
            println!(
                "fast trajectory closed form: {}/{} passed, max error {:.3e}",
                report.trajectory.len() - failed_traj,
                report.trajectory.len(),
                report.max_trajectory_error()
            );
            println!(
                "reposition proximal condition: {}/{} passed, max residual {:.3e}",
                report.proximal.len() - failed_prox,
                report.proximal.len(),
                report.max_proximal_residual()
            );
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
