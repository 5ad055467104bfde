//! Paired Monte Carlo batches.
//!
//! Run `r` samples one scenario from seed `base_seed + r` and simulates it
//! under both controllers. Aggregates use only runs that completed without
//! failure under both controllers, so every statistic stays paired.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MonteCarloConfig;
use crate::engine::{run, ControllerKind, EngineParams, RunOutcome};
use crate::error::{Error, Result};
use crate::metrics::{system_metrics, SystemMetrics};
use crate::scenario::{sample_scenario, Scenario};

pub const METRICS: [&str; 5] = ["pake", "be", "tel", "travel_time", "avg_velocity"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: usize,
    pub controller: ControllerKind,
    pub seed: u64,
    pub pake: f64,
    pub be: f64,
    pub tel: f64,
    pub travel_time: Option<f64>,
    pub avg_velocity: f64,
    pub h0_min: f64,
    pub completed: bool,
    pub collision: bool,
    pub fallbacks: usize,
    /// Set when the run aborted with an error or panic.
    pub failure: Option<String>,
}

impl RunRow {
    pub const CSV_HEADER: &'static str =
        "run_id,controller,pake,be,tel,travel_time,avg_velocity,h0_min,completed,seed,collision,fallbacks,failure";

    fn failed(run_id: usize, controller: ControllerKind, seed: u64, why: String) -> Self {
        Self {
            run_id,
            controller,
            seed,
            pake: f64::NAN,
            be: f64::NAN,
            tel: f64::NAN,
            travel_time: None,
            avg_velocity: f64::NAN,
            h0_min: f64::NAN,
            completed: false,
            collision: false,
            fallbacks: 0,
            failure: Some(why),
        }
    }

    pub fn usable(&self) -> bool {
        self.completed && self.failure.is_none() && self.travel_time.is_some()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "pake" => Some(self.pake),
            "be" => Some(self.be),
            "tel" => Some(self.tel),
            "travel_time" => self.travel_time,
            "avg_velocity" => Some(self.avg_velocity),
            _ => None,
        }
    }

    pub fn csv_line(&self) -> String {
        let tt = self.travel_time.map(|x| x.to_string()).unwrap_or_default();
        let failure = self.failure.as_deref().unwrap_or("").replace([',', '\n'], " ");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.controller,
            self.pake,
            self.be,
            self.tel,
            tt,
            self.avg_velocity,
            self.h0_min,
            self.completed,
            self.seed,
            self.collision,
            self.fallbacks,
            failure
        )
    }
}

pub fn runs_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(RunRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Scenario and both outcomes of one paired run.
#[derive(Clone, Debug)]
pub struct PairedRun {
    pub run_id: usize,
    pub scenario: Scenario,
    pub ccbf: RunOutcome,
    pub fifo: RunOutcome,
}

impl PairedRun {
    pub fn outcome(&self, kind: ControllerKind) -> &RunOutcome {
        match kind {
            ControllerKind::Ccbf => &self.ccbf,
            ControllerKind::Fifo => &self.fifo,
        }
    }
}

pub fn run_seed(config: &MonteCarloConfig, run_id: usize) -> u64 {
    config.base_seed.wrapping_add(run_id as u64)
}

pub fn metrics_row(run_id: usize, seed: u64, scenario: &Scenario, outcome: &RunOutcome) -> RunRow {
    let kind = outcome.trace.controller;
    let m: Option<SystemMetrics> = if outcome.completed {
        match system_metrics(&outcome.trace, scenario) {
            Ok(m) => Some(m),
            Err(e) => return RunRow::failed(run_id, kind, seed, format!("metrics: {e}")),
        }
    } else {
        None
    };
    RunRow {
        run_id,
        controller: kind,
        seed,
        pake: m.map_or(f64::NAN, |m| m.pake),
        be: m.map_or(f64::NAN, |m| m.be),
        tel: m.map_or(f64::NAN, |m| m.tel),
        travel_time: m.and_then(|m| m.travel_time),
        avg_velocity: m.map_or(f64::NAN, |m| m.avg_velocity),
        h0_min: outcome.h0_min,
        completed: outcome.completed,
        collision: outcome.collision,
        fallbacks: outcome.fallbacks,
        failure: None,
    }
}

pub fn run_paired(config: &MonteCarloConfig, run_id: usize) -> Result<PairedRun> {
    let scenario = sample_scenario(config, run_seed(config, run_id))?;
    let params = EngineParams::from_config(config);
    let ccbf = run(&scenario, ControllerKind::Ccbf, &params)?;
    let fifo = run(&scenario, ControllerKind::Fifo, &params)?;
    Ok(PairedRun {
        run_id,
        scenario,
        ccbf,
        fifo,
    })
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Rows for every run (ccbf then fifo per run, in run order), calling
/// `inspect` on each paired run that simulated without error.
pub fn run_rows_inspect<F>(config: &MonteCarloConfig, inspect: F) -> Result<Vec<RunRow>>
where
    F: Fn(&PairedRun) + Sync,
{
    config.validate()?;
    let rows: Vec<[RunRow; 2]> = pool(config.parallelism)?.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| {
                let seed = run_seed(config, r);
                let res = catch_unwind(AssertUnwindSafe(|| {
                    let p = run_paired(config, r)?;
                    inspect(&p);
                    Ok::<_, Error>([
                        metrics_row(r, seed, &p.scenario, &p.ccbf),
                        metrics_row(r, seed, &p.scenario, &p.fifo),
                    ])
                }));
                let why = match res {
                    Ok(Ok(rows)) => return rows,
                    Ok(Err(e)) => e.to_string(),
                    Err(p) => format!("panic: {}", panic_message(p)),
                };
                log::error!("run {r} (seed {seed}) failed: {why}");
                [
                    RunRow::failed(r, ControllerKind::Ccbf, seed, why.clone()),
                    RunRow::failed(r, ControllerKind::Fifo, seed, why),
                ]
            })
            .collect()
    });
    Ok(rows.into_iter().flatten().collect())
}

pub fn run_rows(config: &MonteCarloConfig) -> Result<Vec<RunRow>> {
    run_rows_inspect(config, |_| {})
}

pub fn run_batch(config: &MonteCarloConfig) -> Result<AggregateReport> {
    let rows = run_rows(config)?;
    aggregate(&rows, config.histogram_bins)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ccbf: Stat,
    pub fifo: Stat,
    /// `100 (ccbf - fifo) / fifo` on the means.
    pub pct_change_mean: f64,
    pub pct_change_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` shared edges.
    pub edges: Vec<f64>,
    pub ccbf: Vec<usize>,
    pub fifo: Vec<usize>,
}

impl Histogram {
    pub fn csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,ccbf,fifo\n");
        for i in 0..self.ccbf.len() {
            let _ = writeln!(out, "{},{},{},{}", self.edges[i], self.edges[i + 1], self.ccbf[i], self.fifo[i]);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerController {
    pub ccbf: usize,
    pub fifo: usize,
}

impl PerController {
    fn bump(&mut self, kind: ControllerKind) {
        match kind {
            ControllerKind::Ccbf => self.ccbf += 1,
            ControllerKind::Fifo => self.fifo += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    /// Runs usable under both controllers.
    pub paired_runs: usize,
    pub incomplete: PerController,
    pub collisions: PerController,
    pub failures: PerController,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub histograms: BTreeMap<String, Histogram>,
    #[serde(skip)]
    pub rows: Vec<RunRow>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pct_change(ccbf: f64, fifo: f64) -> f64 {
    100.0 * (ccbf - fifo) / fifo
}

/// Equal-width bins over the pooled range of both samples.
pub fn histogram(ccbf: &[f64], fifo: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let all = ccbf.iter().chain(fifo);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let w = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + w * i as f64 }).collect();
    let count = |x: &[f64]| {
        let mut c = vec![0usize; bins];
        for &v in x {
            let i = (((v - lo) / w) as usize).min(bins - 1);
            c[i] += 1;
        }
        c
    };
    Histogram {
        ccbf: count(ccbf),
        fifo: count(fifo),
        edges,
    }
}

/// Summary statistics over runs usable under both controllers.
pub fn aggregate(rows: &[RunRow], bins: usize) -> Result<AggregateReport> {
    let mut incomplete = PerController::default();
    let mut collisions = PerController::default();
    let mut failures = PerController::default();
    let mut by_run: BTreeMap<usize, [Option<&RunRow>; 2]> = BTreeMap::new();
    for r in rows {
        if r.failure.is_some() {
            failures.bump(r.controller);
        } else if !r.completed {
            incomplete.bump(r.controller);
        }
        if r.collision {
            collisions.bump(r.controller);
        }
        let slot = by_run.entry(r.run_id).or_default();
        slot[(r.controller == ControllerKind::Fifo) as usize] = Some(r);
    }
    let pairs: Vec<(&RunRow, &RunRow)> = by_run
        .values()
        .filter_map(|p| match p {
            [Some(c), Some(f)] if c.usable() && f.usable() => Some((*c, *f)),
            _ => None,
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoCompletedRuns);
    }
    let mut metrics = BTreeMap::new();
    let mut histograms = BTreeMap::new();
    for name in METRICS {
        let c: Vec<f64> = pairs.iter().filter_map(|p| p.0.metric(name)).collect();
        let f: Vec<f64> = pairs.iter().filter_map(|p| p.1.metric(name)).collect();
        let (cs, fs) = (
            Stat {
                mean: mean(&c),
                median: median(&c),
            },
            Stat {
                mean: mean(&f),
                median: median(&f),
            },
        );
        metrics.insert(
            name.to_string(),
            MetricSummary {
                ccbf: cs,
                fifo: fs,
                pct_change_mean: pct_change(cs.mean, fs.mean),
                pct_change_median: pct_change(cs.median, fs.median),
            },
        );
        histograms.insert(name.to_string(), histogram(&c, &f, bins));
    }
    Ok(AggregateReport {
        runs: by_run.len(),
        paired_runs: pairs.len(),
        incomplete,
        collisions,
        failures,
        metrics,
        histograms,
        rows: rows.to_vec(),
    })
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    /// Unix seconds; the only field that varies between identical batches.
    pub generated_at: u64,
    pub config: MonteCarloConfig,
    pub report: AggregateReport,
}

impl Summary {
    pub fn new(config: &MonteCarloConfig, report: AggregateReport) -> Self {
        let generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at,
            config: config.clone(),
            report,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes `runs.csv`, `summary.json` and one `hist_<metric>.csv` per metric.
pub fn write_batch(dir: &Path, config: &MonteCarloConfig, report: &AggregateReport) -> Result<()> {
    write_atomic(&dir.join("runs.csv"), runs_csv(&report.rows).as_bytes())?;
    for (name, h) in &report.histograms {
        write_atomic(&dir.join(format!("hist_{name}.csv")), h.csv().as_bytes())?;
    }
    let summary = Summary::new(config, report.clone());
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_atomic(&dir.join("summary.json"), json.as_bytes())
}

/// Writes the trace, event log, scenario and metrics of a single run.
pub fn write_single(dir: &Path, scenario: &Scenario, outcome: &RunOutcome, row: &RunRow) -> Result<()> {
    let c = outcome.trace.controller;
    write_atomic(&dir.join(format!("trace_{c}.csv")), outcome.trace.samples_csv().as_bytes())?;
    write_atomic(&dir.join(format!("events_{c}.csv")), outcome.trace.events_csv().as_bytes())?;
    write_atomic(&dir.join("scenario.json"), scenario.to_json()?.as_bytes())?;
    let mut json = serde_json::to_string_pretty(row)?;
    json.push('\n');
    write_atomic(&dir.join(format!("metrics_{c}.json")), json.as_bytes())
}

/// Plain-text comparison table of a batch report.
pub fn comparison_table(report: &AggregateReport) -> String {
    let label = |m: &'static str| match m {
        "pake" => "PaKE [Wh/km]",
        "be" => "BE [Wh/km]",
        "tel" => "TEL [Wh/km]",
        "travel_time" => "Travel time [s]",
        "avg_velocity" => "Avg velocity [m/s]",
        other => other,
    };
    let mut out = String::new();
    let _ = writeln!(out, "paired runs: {} of {}", report.paired_runs, report.runs);
    let _ = writeln!(
        out,
        "{:<20} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}",
        "metric", "fifo mean", "ccbf mean", "fifo med", "ccbf med", "chg mean", "chg med"
    );
    for name in METRICS {
        if let Some(s) = report.metrics.get(name) {
            let _ = writeln!(
                out,
                "{:<20} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>8.1}% {:>8.1}%",
                label(name),
                s.fifo.mean,
                s.ccbf.mean,
                s.fifo.median,
                s.ccbf.median,
                s.pct_change_mean,
                s.pct_change_median
            );
        }
    }
    let _ = writeln!(
        out,
        "collisions: ccbf {} fifo {}; incomplete: ccbf {} fifo {}; failures: ccbf {} fifo {}",
        report.collisions.ccbf,
        report.collisions.fifo,
        report.incomplete.ccbf,
        report.incomplete.fifo,
        report.failures.ccbf,
        report.failures.fifo
    );
    out
}
