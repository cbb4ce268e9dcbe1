use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use marglik_core::config::ExperimentConfig;
use marglik_core::experiment::{predict_csv, run_experiment, run_grid, write_record};
use marglik_core::record::{compare_runs, fmt_num};
use marglik_core::{CurvatureKind, RunRecord};

#[derive(Parser)]
#[command(
    name = "marglik",
    version,
    about = "Laplace marginal-likelihood training for small networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its trace, record and predictive curve.
    Train {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Rank recorded runs by log marginal likelihood.
    Compare {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Predict with a recorded model on the inputs of a CSV file.
    Predict {
        record: PathBuf,
        csv: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Train once per fixed prior precision of the config's [grid] section.
    Grid {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    curvature: Option<CurvatureKind>,
    /// Keep hyperparameters at their initial values.
    #[arg(long)]
    no_online: bool,
}

fn load_config(path: &Path, opts: &RunOpts) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = opts.seed {
        cfg.train.seed = seed;
        cfg.data.reseed(seed);
    }
    if let Some(kind) = opts.curvature {
        cfg.train.curvature = kind;
    }
    if opts.no_online {
        cfg.train.online = false;
    }
    Ok(cfg)
}

fn report(record: &RunRecord, written: &[PathBuf]) {
    println!(
        "{}: log marglik {} ({} per example), {} params, {}s",
        record.config.name,
        fmt_num(record.final_marglik.log_marglik),
        fmt_num(record.final_marglik.log_marglik_per_example),
        record.num_params,
        fmt_num(record.wall_clock_secs)
    );
    if let Some(test) = &record.metrics.test_bayes {
        let mut parts = Vec::new();
        for (name, v) in [
            ("rmse", test.rmse),
            ("loglik", test.test_loglik),
            ("accuracy", test.accuracy),
            ("ece", test.ece),
        ] {
            if let Some(v) = v {
                parts.push(format!("{name} {}", fmt_num(v)));
            }
        }
        println!("  test: {}", parts.join(", "));
    }
    for p in written {
        println!("  wrote {}", p.display());
    }
}

fn compare(records: &[RunRecord]) -> Result<()> {
    let ranking = compare_runs(records)?;
    for w in &ranking.warnings {
        eprintln!("warning: {w}");
    }
    println!("rank,name,log_marglik,log_marglik_per_n,num_params");
    for (rank, &i) in ranking.order.iter().enumerate() {
        let r = &records[i];
        println!(
            "{},{},{},{},{}",
            rank + 1,
            r.config.name,
            fmt_num(r.final_marglik.log_marglik),
            fmt_num(r.final_marglik.log_marglik_per_example),
            r.num_params
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, opts } => {
            let cfg = load_config(&config, &opts)?;
            let record = run_experiment(&cfg)?;
            let written = write_record(&record, &opts.out_dir)?;
            report(&record, &written);
        }
        Command::Grid { config, opts } => {
            let cfg = load_config(&config, &opts)?;
            if cfg.grid.is_none() {
                bail!("{} has no [grid] section", config.display());
            }
            let records = run_grid(&cfg)?;
            for r in &records {
                let written = write_record(r, &opts.out_dir)?;
                report(r, &written);
            }
            compare(&records)?;
        }
        Command::Compare { records } => {
            let loaded = records
                .iter()
                .map(|p| RunRecord::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            compare(&loaded)?;
        }
        Command::Predict {
            record,
            csv,
            output,
        } => {
            let rec = RunRecord::load(&record)?;
            let (header, m) = predict_csv(&rec, &csv)?;
            let mut text = header.join(",");
            text.push('\n');
            for n in 0..m.rows() {
                let cells: Vec<String> = m.row(n).iter().map(|v| fmt_num(*v)).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            match output {
                Some(path) => {
                    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
