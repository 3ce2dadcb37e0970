use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use modlens::config::{Preset, RunConfig};
use modlens::pipeline::{self, FigureId};
use modlens::Error;

/// Micro-GPT arithmetic lab: datasets, training, and mechanistic probes.
#[derive(Debug, Parser)]
#[command(name = "modlens", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration layered over the preset defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; re-seeds data, initialization, training and probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, global = true, value_parser = ["add3", "mul3"])]
    preset: Option<String>,
    /// Override `[train].max_iterations`; 0 writes only the initial checkpoint.
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// Sweep every pair of the four-digit lattice.
    #[arg(long, global = true)]
    exhaustive: bool,
    /// Checkpoint for `eval` and `probe` (default: <out>/final.ckpt).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the D1/D2/D3 splits.
    GenData,
    /// Train on D1; writes checkpoints and metrics.csv.
    Train,
    /// Exact-match and oracle-match rates of a checkpoint.
    Eval,
    /// Mechanistic probes of a trained checkpoint.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Run everything needed for one figure or table and check its thresholds.
    Reproduce {
        /// One of fig1, fig2, fig3, fig4, fig5, table2.
        figure: String,
    },
    /// Print the fully resolved configuration.
    ShowConfig,
}

#[derive(Debug, Subcommand)]
enum ProbeCommand {
    /// Model vs truth vs oracle over the four-digit lattice.
    Lattice,
    /// Next-token distribution shifts under thousands-digit perturbation.
    Perturb,
    /// PCA of final-model representations.
    Pca {
        /// Number of principal components.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Units-digit purity across the initial and milestone checkpoints.
    Phases,
}

fn resolve(g: &GlobalArgs) -> modlens::Result<RunConfig> {
    let mut cfg = match (&g.config, &g.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::preset(p.parse::<Preset>()?, 0),
        (None, None) => RunConfig::preset(Preset::Add3, 0),
    };
    if let (Some(_), Some(p)) = (&g.config, &g.preset) {
        if p.parse::<Preset>()? != cfg.run.preset {
            return Err(Error::Config(format!(
                "--preset {p} conflicts with preset {} in the config file",
                cfg.run.preset
            )));
        }
    }
    if let Some(seed) = g.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &g.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(n) = g.max_iterations {
        cfg.train.max_iterations = n;
    }
    if let Some(ckpt) = &g.checkpoint {
        cfg.probe.checkpoint = ckpt.display().to_string();
    }
    cfg.probe.exhaustive |= g.exhaustive;
    cfg.validate()?;
    Ok(cfg)
}

enum Outcome {
    Done,
    ThresholdFailed,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = resolve(&cli.global)?;
    let out = cfg.run.out_dir.display().to_string();
    match cli.command {
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
        Command::GenData => {
            let s = pipeline::gen_data(&cfg)?;
            println!(
                "wrote {} / {} / {} samples to {out}/{}",
                s.d1.len(),
                s.d2.len(),
                s.d3.len(),
                pipeline::DATA_DIR
            );
        }
        Command::Train => {
            let o = pipeline::train_run(&cfg).context("training failed")?;
            if let Some(last) = o.metrics.last() {
                println!(
                    "{} iterations ({:?}): train {:.4}  ID {:.4}  OOD {:.4}  OOD oracle {:.4}",
                    o.iterations, o.stop, last.train_acc, last.id_acc, last.ood_acc, last.oracle_match_rate
                );
            }
            for m in &o.milestones {
                println!("milestone {:.2} reached at iteration {}", m.threshold, m.iteration);
            }
            println!("checkpoints and metrics in {out}");
        }
        Command::Eval => {
            let r = pipeline::eval(&cfg)?;
            println!(
                "train {:.4}  ID {:.4}  OOD {:.4}  OOD oracle {:.4}",
                r.train_acc, r.id_acc, r.ood_acc, r.ood_oracle_match
            );
        }
        Command::Probe(p) => probe(cfg, p)?,
        Command::Reproduce { figure } => {
            let figure: FigureId = figure.parse()?;
            let rep = pipeline::reproduce(&cfg, figure)?;
            if figure == FigureId::Table2 {
                print!("{}", std::fs::read_to_string(cfg.run.out_dir.join("table2.csv"))?);
            }
            for c in &rep.checks {
                println!("{c}");
            }
            for o in &rep.outputs {
                println!("wrote {out}/{o}");
            }
            if !rep.passed() {
                return Ok(Outcome::ThresholdFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

fn probe(mut cfg: RunConfig, cmd: ProbeCommand) -> anyhow::Result<()> {
    match cmd {
        ProbeCommand::Lattice => {
            let r = pipeline::probe_lattice(&cfg)?;
            println!(
                "{} points ({} ID, {} OOD): ID exact {:.4}  OOD exact {:.4}  OOD oracle {:.4}",
                r.summary.points,
                r.summary.id_points,
                r.summary.ood_points,
                r.id_exact_rate,
                r.ood_exact_rate,
                r.ood_oracle_rate
            );
        }
        ProbeCommand::Perturb => {
            let r = pipeline::probe_perturb(&cfg)?;
            println!(
                "{} cases: answer argmax unchanged in {:.4}; worked examples unchanged: {}",
                r.cases.len(),
                r.argmax_equal_fraction,
                pipeline::worked_examples_match(&r)
            );
        }
        ProbeCommand::Pca { k } => {
            if let Some(k) = k {
                cfg.probe.pca_k = k;
            }
            let r = pipeline::probe_pca(&cfg)?;
            let ratios: Vec<String> = r.explained_variance_ratios.iter().map(|v| format!("{v:.4}")).collect();
            println!("explained variance ratios [{}], sum {:.4}", ratios.join(", "), r.ratio_sum);
        }
        ProbeCommand::Phases => {
            let r = pipeline::probe_phases(&cfg)?;
            for p in &r.phases {
                println!("{:<12} purity {:.4}  top-{} variance {:.4}", p.label, p.purity, p.pca.k, p.pca.ratio_sum);
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::Capacity { .. }) => 2,
        Some(Error::NonFiniteLoss { .. } | Error::NonFiniteUpdate { .. } | Error::Diverged { .. }) => 4,
        Some(_) => 3,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ThresholdFailed) => ExitCode::from(5),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
