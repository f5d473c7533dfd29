//! Multi-seed sweeps and their aggregate report (CSV plus a plain-text
//! table).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::run::{train_run, RunRecord};
use super::{ExperimentConfig, ExperimentError};
use crate::datasets::Dataset;
use crate::topology_metrics::{Crossings, Winding};

pub const REPORT_COLUMNS: [&str; 9] =
    ["seed", "variant", "beta", "winding", "crossings", "continuity", "homeomorphic", "diverged", "neg_loglik"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config_echo: String,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub homeomorphic: usize,
    /// Runs with winding ±1.
    pub unit_winding: usize,
    /// Runs with a crossing-free y trace; `None` when no run reports one.
    pub zero_crossings: Option<usize>,
    pub diverged: usize,
    /// Mean and standard deviation of continuity over non-diverged runs.
    pub continuity_mean: f64,
    pub continuity_std: f64,
}

impl SweepReport {
    pub fn aggregate(&self) -> Aggregate {
        let kept: Vec<f64> = self.runs.iter().filter(|r| !r.report.diverged).map(|r| r.report.continuity).collect();
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let var = kept.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / kept.len() as f64;
        let crossings: Vec<usize> = self
            .runs
            .iter()
            .filter_map(|r| match r.report.crossings {
                Crossings::Count(c) => Some(c),
                Crossings::NotAvailable => None,
            })
            .collect();
        Aggregate {
            runs: self.runs.len(),
            homeomorphic: self.runs.iter().filter(|r| r.report.homeomorphic).count(),
            unit_winding: self.runs.iter().filter(|r| matches!(r.report.winding, Winding::Value(1 | -1))).count(),
            zero_crossings: (!crossings.is_empty()).then(|| crossings.iter().filter(|&&c| c == 0).count()),
            diverged: self.runs.iter().filter(|r| r.report.diverged).count(),
            continuity_mean: mean,
            continuity_std: var.sqrt(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push('\n');
        for r in &self.runs {
            s.push_str(&csv_row(r));
            s.push('\n');
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6}  {:<22} {:>6} {:>9} {:>9} {:>11} {:>5} {:>8} {:>12}",
            "seed", "variant", "beta", "winding", "crossings", "continuity", "homeo", "diverged", "neg_loglik"
        );
        for r in &self.runs {
            let rep = &r.report;
            let _ = writeln!(
                s,
                "{:>6}  {:<22} {:>6} {:>9} {:>9} {:>11.3} {:>5} {:>8} {:>12.3}",
                r.seed,
                r.variant,
                r.beta,
                rep.winding.to_string(),
                rep.crossings.to_string(),
                rep.continuity,
                yes_no(rep.homeomorphic),
                yes_no(rep.diverged),
                r.neg_loglik
            );
        }
        let a = self.aggregate();
        let crossing_count = a.zero_crossings.map_or("--".to_string(), |c| format!("{c}/{}", a.runs));
        let _ = writeln!(
            s,
            "homeomorphic {}/{}  winding ±1 {}/{}  no crossings {}  diverged {}  continuity {:.3} ± {:.3}",
            a.homeomorphic, a.runs, a.unit_winding, a.runs, crossing_count, a.diverged, a.continuity_mean, a.continuity_std
        );
        s
    }

    /// Writes `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        let text = format!("{}\n# config\n{}", self.to_table(), self.config_echo);
        write_atomic(&dir.join("report.txt"), text.as_bytes())?;
        Ok(())
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn csv_row(r: &RunRecord) -> String {
    let rep = &r.report;
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.seed,
        r.variant,
        r.beta,
        rep.winding,
        rep.crossings,
        rep.continuity,
        rep.homeomorphic,
        rep.diverged,
        r.neg_loglik
    )
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Directory holding the checkpoints and run records of one config.
pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join(config.variant.name().replace(['(', ')', '=', '+', '@'], "_"))
}

pub fn checkpoint_path(config: &ExperimentConfig, seed: u64) -> PathBuf {
    run_dir(config).join(format!("seed_{seed}.ckpt"))
}

/// Trains every seed (resuming from existing checkpoints), evaluates each
/// run and writes the report into the run directory.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    config.validate()?;
    let dir = run_dir(config);
    fs::create_dir_all(&dir)?;
    let data = Dataset::generate(&config.dataset)?;
    let run_seed = |&seed: &u64| -> Result<RunRecord, ExperimentError> {
        let ckpt = checkpoint_path(config, seed);
        let run = train_run(config, &data, seed, Some(&ckpt), |_, _| Ok(()))?;
        let line = format!("{}\n{}\n", REPORT_COLUMNS.join(","), csv_row(&run.record));
        write_atomic(&dir.join(format!("seed_{seed}.csv")), line.as_bytes())?;
        Ok(run.record)
    };
    let runs: Vec<RunRecord> = if config.workers == 1 {
        config.seeds.iter().map(run_seed).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| ExperimentError::ConfigInvalid(format!("worker pool: {e}")))?;
        pool.install(|| config.seeds.par_iter().map(run_seed).collect::<Result<_, _>>())?
    };
    let report = SweepReport { config_echo: config.to_toml(), runs };
    report.write(&dir)?;
    Ok(report)
}
