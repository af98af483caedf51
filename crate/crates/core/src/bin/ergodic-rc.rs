use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ergodic_rc::dynamics::VectorField;
use ergodic_rc::evaluation::{vpt_distribution, VptConfig};
use ergodic_rc::harness::{
    generate_to_csv, load_config, load_model, read_series_csv, run_comparison, run_experiment,
    write_spectrum_csv, write_vpt_csv, ExperimentConfig, InvariantsProvided, Metadata,
};
use ergodic_rc::invariants::{largest_le_from_data, lyapunov_spectrum_ode, LeConfig, RosensteinConfig};
use ergodic_rc::{Error, Result};

#[derive(Parser)]
#[command(name = "ergodic-rc", version, about = "Invariant-constrained reservoir computing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and write `trajectory.csv`.
    Generate,
    /// Lyapunov spectrum and Kaplan-Yorke dimension of the configured system,
    /// or the data-driven largest exponent of a CSV series.
    Invariants {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Search, train and evaluate one model.
    Train,
    /// Compare invariant variants over several reservoir initializations.
    Compare {
        /// Comma-separated variants, e.g. `none,les:1`.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<InvariantsProvided>>,
        #[arg(long)]
        inits: Option<usize>,
    },
    /// VPT distribution of a saved model on a saved series.
    Evaluate {
        /// Directory written by `train` (its `model/` subdirectory).
        #[arg(long)]
        model: PathBuf,
        /// Series CSV in physical units.
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        n_ics: Option<usize>,
    },
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let cfg = config(g)?;
    let out = &cfg.output_dir;
    match &cli.command {
        Command::Generate => {
            let path = out.join("trajectory.csv");
            let s = generate_to_csv(&cfg, &path)?;
            say(g.quiet, format!("wrote {} steps to {}", s.len(), path.display()));
        }
        Command::Invariants { input: Some(input) } => {
            let series = read_series_csv(input)?;
            let rc = RosensteinConfig::default_for(&series, series.dim())?;
            let l1 = largest_le_from_data(&series, &rc)?;
            say(g.quiet, format!("largest exponent (data estimate): {l1:.6}"));
        }
        Command::Invariants { input: None } => {
            let sys = &cfg.system;
            let u0 = sys.random_initial_condition(cfg.master_seed);
            let le = LeConfig {
                n_transient: cfg.data.n_transient,
                ..LeConfig::new(cfg.data.dt, cfg.evaluation.truth_le_steps, sys.dim())
            };
            let spectrum = lyapunov_spectrum_ode(sys, &u0, &le)?;
            let path = out.join("spectrum.csv");
            write_spectrum_csv(&path, &spectrum, &Metadata::default())?;
            let ky = spectrum.kaplan_yorke()?;
            say(g.quiet, format!("exponents: {:.4?}", spectrum.exponents()));
            say(g.quiet, format!("sum {:.4}, Kaplan-Yorke dimension {ky:.4}", spectrum.sum()));
            say(g.quiet, format!("wrote {}", path.display()));
        }
        Command::Train => {
            let r = run_experiment(&cfg)?;
            say(
                g.quiet,
                format!(
                    "{}: best loss {:.4e}, mean VPT {:.3} (median {:.3}) Lyapunov times, RC lambda1 {:.4} vs {:.4}",
                    r.run.variant,
                    r.run.best_loss,
                    r.run.vpt.mean,
                    r.run.vpt.median,
                    r.run.comparison.lambda1_model,
                    r.run.comparison.lambda1_truth
                ),
            );
            say(g.quiet, format!("outputs in {}", out.display()));
        }
        Command::Compare { variants, inits } => {
            let variants = variants.clone().unwrap_or_else(|| cfg.comparison.variants.clone());
            let n = inits.unwrap_or(cfg.comparison.n_inits);
            let report = run_comparison(&cfg, &variants, n)?;
            for row in report.rows.iter().filter(|r| r.init.is_none()) {
                say(
                    g.quiet,
                    format!(
                        "{:<18} mean VPT {:.3}  median {:.3}  pooled mean {:.3}  RC lambda1 {:.4}",
                        row.variant.to_string(),
                        row.mean_vpt,
                        row.median_vpt,
                        row.pooled_mean_vpt,
                        row.rc_lambda1
                    ),
                );
            }
            say(g.quiet, format!("table in {}", out.join("comparison.csv").display()));
        }
        Command::Evaluate { model, series, n_ics } => evaluate(g, &cfg, model, series, *n_ics)?,
    }
    Ok(())
}

fn evaluate(g: &Global, cfg: &ExperimentConfig, model_dir: &Path, series: &Path, n_ics: Option<usize>) -> Result<()> {
    let dir = if model_dir.join("model.toml").exists() {
        model_dir.to_path_buf()
    } else {
        model_dir.join("model")
    };
    let (model, info) = load_model(&dir)?;
    let physical = read_series_csv(series)?;
    let test = info.normalizer.normalize(&physical);
    let mut vpt = cfg.evaluation.vpt();
    let fit = test.len() / vpt.window();
    vpt.n_ics = n_ics.unwrap_or(vpt.n_ics.min(fit));
    let vpt = VptConfig { ..vpt };
    let report = vpt_distribution(&model, &test, &info.climate, &vpt, info.lambda1)
        .map_err(|e| e.in_stage("evaluate"))?;
    let path = cfg.output_dir.join("vpt.csv");
    write_vpt_csv(&path, &report, &Metadata::new(info.config_hash.as_deref()))?;
    say(
        g.quiet,
        format!(
            "{} ICs: mean VPT {:.3}, median {:.3} ({} censored); wrote {}",
            report.vpt_values.len(),
            report.mean,
            report.median,
            report.n_censored(),
            path.display()
        ),
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
