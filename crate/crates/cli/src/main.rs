//! Command-line front end: dataset generation, training, sweeps,
//! evaluation of checkpoints, latent traversals and the theory demos.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lieflow::datasets::{export_csv, save_dataset, Dataset};
use lieflow::experiments::{
    checkpoint_path, evaluate_model, export_traversal, load_model, run_dir, run_sweep, train_run, ExperimentConfig,
    SweepReport,
};
use lieflow::models::{ModelKind, ModelVariant};
use lieflow::theory_demos::{
    figure8_escape_experiment, run_closed_form_demos, run_winding_demos, EscapeSummary, Figure8Config,
};

#[derive(Parser)]
#[command(name = "lieflow", version, about = "Circle and torus latent encoders with topology diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply to omitted keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set variant.beta=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        Ok(base.with_overrides(&self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective config as TOML.
    Config(ConfigArgs),
    /// Generate the configured dataset.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write a CSV next to the binary file.
        #[arg(long)]
        csv: bool,
    },
    /// Train one seed, resuming from its checkpoint when present.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
    },
    /// Train every configured seed and write the aggregate report.
    Sweep(ConfigArgs),
    /// Recompute the topology report of a checkpoint.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Decode a latent traversal and write the encoder trace.
    Traverse {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a theory demo.
    Demo {
        #[arg(value_enum)]
        which: Demo,
        /// Directory for traces.
        #[arg(short, long, default_value = "demos")]
        out: PathBuf,
        /// Figure-8 only: training epochs after the fit.
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Figure-8 only: comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7")]
        seeds: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    ClosedForm,
    Winding,
    Figure8,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Config(cfg) => print!("{}", cfg.load()?.to_toml()),
        Command::Generate { cfg, out, csv } => {
            let cfg = cfg.load()?;
            let data = Dataset::generate(&cfg.dataset)?;
            save_dataset(&out, &data)?;
            if csv {
                export_csv(&out.with_extension("csv"), &data)?;
            }
            println!("wrote {} samples of dimension {} to {}", data.len(), data.dim, out.display());
        }
        Command::Train { cfg, seed } => train(&cfg.load()?, seed)?,
        Command::Sweep(cfg) => {
            let cfg = cfg.load()?;
            let report = run_sweep(&cfg)?;
            print!("{}", report.to_table());
            println!("report written to {}", run_dir(&cfg).display());
        }
        Command::Evaluate { cfg, checkpoint } => {
            let cfg = cfg.load()?;
            let model = load_model(&cfg, &checkpoint)?;
            let r = evaluate_model(&model, &cfg, false)?;
            println!(
                "winding {} crossings {} continuity {:.3} homeomorphic {} cyclic order {}",
                r.winding, r.crossings, r.continuity, r.homeomorphic, r.cyclic_order
            );
        }
        Command::Traverse { cfg, checkpoint, points, out } => {
            let art = export_traversal(&cfg.load()?, &checkpoint, points, &out)?;
            for f in art.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Demo { which, out, epochs, seeds } => {
            std::fs::create_dir_all(&out)?;
            match which {
                Demo::ClosedForm => print_results(run_closed_form_demos()?)?,
                Demo::Winding => print_results(run_winding_demos(Some(&out))?)?,
                Demo::Figure8 => figure8(&out, epochs, &seeds)?,
            }
        }
    }
    Ok(())
}

fn train(cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    let data = Dataset::generate(&cfg.dataset)?;
    let ckpt = checkpoint_path(cfg, seed);
    std::fs::create_dir_all(run_dir(cfg))?;
    let run = train_run(cfg, &data, seed, Some(&ckpt), |epoch, _| {
        if epoch % 10 == 0 {
            eprintln!("epoch {epoch}");
        }
        Ok(())
    })?;
    let report = SweepReport { config_echo: cfg.run_echo(seed), runs: vec![run.record] };
    print!("{}", report.to_table());
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn print_results(results: Vec<lieflow::theory_demos::DemoResult>) -> Result<()> {
    let mut failed = 0;
    for r in &results {
        println!("{}", r.summary());
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        bail!("{failed} demo(s) failed");
    }
    Ok(())
}

fn figure8(out: &Path, epochs: usize, seeds: &[u64]) -> Result<()> {
    for kind in [ModelKind::Vae, ModelKind::GfVae] {
        let mut cfg = Figure8Config::default();
        cfg.experiment.variant = ModelVariant::new(kind, 4.0);
        cfg.experiment.epochs = epochs;
        let mut traces = Vec::new();
        for &seed in seeds {
            let trace = figure8_escape_experiment(&cfg, seed)?;
            trace.write_csv(&out.join(format!("figure8_{}_seed{seed}.csv", kind.label())))?;
            let e0 = &trace.epochs[0].report;
            println!(
                "{} seed {seed}: epoch 0 crossings {} order {}, escaped at {}",
                kind.label(),
                e0.crossings,
                trace.epochs[0].tracked_order,
                trace.escaped_at.map_or("never".to_string(), |e| format!("epoch {e}"))
            );
            traces.push(trace);
        }
        println!("{}: {}", kind.label(), EscapeSummary::from_traces(&traces));
    }
    Ok(())
}
