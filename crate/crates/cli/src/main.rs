use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedshift::experiments::{
    ablation_csv, convergence_csv, load_dataset, manifest, q3_summary_csv, rounds_csv, rows_csv,
    run_ablation, run_attack, run_q1_style, run_q2_style, run_q3_style, train_cell, write_file,
    AttackKind, AttackReport, CellSpec, ExperimentConfig, Q3Variant,
};
use fedshift::federation::IntegrityReport;
use fedshift::graph::load_tu_dataset;

#[derive(Parser)]
#[command(name = "fedshift", version, about = "Federated graph-learning attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a TU-format dataset, print its statistics and write a JSON cache.
    Ingest {
        /// Directory holding the `<NAME>_*.txt` files.
        dir: PathBuf,
        /// Cache file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean federated training.
    Train(RunArgs),
    /// One attack configuration with baseline and clean references.
    Attack(RunArgs),
    /// Sweep the number of clients.
    Q1(RunArgs),
    /// Sweep the aggregation rule.
    Q2(RunArgs),
    /// Stage-2 convergence from tuned, Stage-1 and fresh generators.
    Q3(RunArgs),
    /// Pipeline ablation.
    Ablation(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_integrity(report: &IntegrityReport) -> Result<()> {
    log::info!("{} integrity checks", report.checks);
    if !report.violations.is_empty() {
        bail!("integrity violations: {}", report.violations.join("; "));
    }
    Ok(())
}

fn write_attack(out: &Path, report: &AttackReport) -> Result<()> {
    write_file(out, "results_fedshift.csv", &rows_csv(&report.fedshift_rows()))?;
    write_file(out, "results_baseline.csv", &rows_csv(&report.baseline_rows()))?;
    if !report.clean.is_empty() {
        write_file(out, "results_clean.csv", &rows_csv(&report.clean_rows()))?;
    }
    if let Some(first) = report.fedshift.first() {
        write_file(out, "rounds_fedshift.csv", &rounds_csv(&first.records))?;
    }
    let groups = [("fedshift", report.fedshift_rows()), ("baseline", report.baseline_rows()), ("clean", report.clean_rows())];
    for (label, rows) in groups {
        for r in rows {
            println!("{label} N={} {} seed={} asr={:.3} oa={:.3} aas={:.3}", r.clients, r.aggregator, r.seed, r.asr, r.oa, r.aas);
        }
    }
    check_integrity(&report.integrity())
}

fn run(cli: Cli) -> Result<()> {
    let (name, args) = match &cli.command {
        Command::Ingest { dir, out } => {
            let ds = load_tu_dataset(dir)?;
            println!("{}", ds.summary());
            if let Some(out) = out {
                std::fs::write(out, ds.to_json()).with_context(|| format!("writing {}", out.display()))?;
            }
            return Ok(());
        }
        Command::Train(a) => ("train", a),
        Command::Attack(a) => ("attack", a),
        Command::Q1(a) => ("q1", a),
        Command::Q2(a) => ("q2", a),
        Command::Q3(a) => ("q3", a),
        Command::Ablation(a) => ("ablation", a),
    };
    let cfg = args.config()?;
    let out = &args.out;
    let dataset = load_dataset(&cfg)?;
    log::info!("{}", dataset.summary());
    write_file(out, "manifest.toml", &manifest(name, &cfg))?;
    match cli.command {
        Command::Ingest { .. } => unreachable!(),
        Command::Train(_) => {
            let cell = train_cell(&cfg, &dataset, CellSpec::from_config(&cfg, AttackKind::None, 0))?;
            let oa = cell.oa(&dataset)?;
            write_file(out, "rounds.csv", &rounds_csv(&cell.outcome.records))?;
            write_file(out, "model.ckpt", &cell.outcome.global.to_record().encode())?;
            println!("oa={oa:.4}");
            check_integrity(&cell.outcome.integrity)?;
        }
        Command::Attack(_) => write_attack(out, &run_attack(&cfg, &dataset)?)?,
        Command::Q1(_) => write_attack(out, &run_q1_style(&cfg, &dataset)?)?,
        Command::Q2(_) => write_attack(out, &run_q2_style(&cfg, &dataset)?)?,
        Command::Q3(_) => {
            let report = run_q3_style(&cfg, &dataset)?;
            for v in Q3Variant::ALL {
                write_file(out, &format!("convergence_{}.csv", v.as_str()), &convergence_csv(&report, v))?;
            }
            let summary = q3_summary_csv(&report);
            write_file(out, "q3_summary.csv", &summary)?;
            print!("{summary}");
            check_integrity(&report.integrity)?;
        }
        Command::Ablation(_) => {
            let report = run_ablation(&cfg, &dataset)?;
            let csv = ablation_csv(&report);
            write_file(out, "ablation.csv", &csv)?;
            print!("{csv}");
            check_integrity(&report.integrity)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
