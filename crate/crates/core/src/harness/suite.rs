use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::ModelSnapshot;

use super::config::RunConfig;
use super::downstream::{downstream_task, task_names};
use super::episode::{run_seed, EpisodeRow, SeedRun};
use super::metrics::mean_stderr;
use super::oracle::{oracle_return, oracle_seed, OracleCache, OracleKey};

pub const CSV_HEADER: &str =
    "seed,episode,return,gap,cum_regret,sigma_integral,model_complexity,lambda,plan_seconds,fit_seconds";

/// Environment variable holding the number of seeds run concurrently.
pub const WORKERS_ENV: &str = "CTMBRL_WORKERS";

const METRICS: [&str; 8] = [
    "return",
    "gap",
    "cum_regret",
    "sigma_integral",
    "model_complexity",
    "lambda",
    "plan_seconds",
    "fit_seconds",
];

fn metric_values(r: &EpisodeRow) -> [f64; 8] {
    [
        r.episode_return,
        r.gap,
        r.cum_regret,
        r.sigma_integral,
        r.model_complexity,
        r.lambda,
        r.plan_seconds,
        r.fit_seconds,
    ]
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub episodes_completed: usize,
    pub error: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct WallClock {
    pub total_seconds: f64,
    pub oracle_seconds: f64,
    pub plan_seconds: f64,
    pub fit_seconds: f64,
    pub per_seed_seconds: BTreeMap<u64, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub package: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub environment: String,
    pub task: String,
    pub algo: String,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub completed_seeds: Vec<u64>,
    pub failed_seeds: Vec<FailedSeed>,
    pub oracle_return: f64,
    pub oracle_cache_hits: usize,
    pub reward_formulas: BTreeMap<String, String>,
    pub wall_clock: WallClock,
    pub files: Vec<String>,
    pub config: RunConfig,
}

pub struct SuiteOutcome {
    pub dir: PathBuf,
    pub oracle: f64,
    pub runs: Vec<SeedRun>,
    pub manifest: Manifest,
}

impl SuiteOutcome {
    pub fn any_failed(&self) -> bool {
        !self.manifest.failed_seeds.is_empty()
    }
}

pub fn seed_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

pub fn snapshot_name(seed: u64) -> String {
    format!("model_seed_{seed}.json")
}

pub fn trajectory_name(seed: u64) -> String {
    format!("final_trajectory_seed_{seed}.jsonl")
}

pub fn run_suite(cfg: &RunConfig) -> Result<SuiteOutcome> {
    run_suite_with_cache(cfg, &OracleCache::new())
}

/// Runs every seed of `cfg` and writes the per-seed logs, the aggregate,
/// the snapshots and the manifest into the output directory.
pub fn run_suite_with_cache(cfg: &RunConfig, cache: &OracleCache) -> Result<SuiteOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let ode = cfg.ode()?;
    let freq = cfg.environment.control_freq;
    let oracle_start = Instant::now();
    let key = OracleKey::new(&ode.name, &cfg.environment.task, freq, ode.horizon);
    let oracle = cache.get_or_compute(key, || {
        oracle_return(&ode, &cfg.planner, freq, oracle_seed(cfg.planner.icem.seed))
    })?;
    let oracle_seconds = oracle_start.elapsed().as_secs_f64();
    log::info!("oracle return estimate {oracle:.4}");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<(SeedRun, f64)> = pool.install(|| {
        cfg.output
            .seeds
            .par_iter()
            .map(|&seed| {
                let t = Instant::now();
                let run = run_one_seed(cfg, seed, oracle, &dir);
                (run, t.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut wall = WallClock {
        oracle_seconds,
        ..WallClock::default()
    };
    let mut failed = Vec::new();
    let mut completed = Vec::new();
    let mut files = vec!["config.toml".to_string(), "aggregate.csv".to_string()];
    let mut seed_runs = Vec::with_capacity(runs.len());
    for (run, secs) in runs {
        wall.per_seed_seconds.insert(run.seed, secs);
        wall.plan_seconds += run.timings.iter().map(|t| t.plan_seconds).sum::<f64>();
        wall.fit_seconds += run.timings.iter().map(|t| t.fit_seconds).sum::<f64>();
        files.push(seed_csv_name(run.seed));
        match &run.error {
            Some(e) => failed.push(FailedSeed {
                seed: run.seed,
                episodes_completed: run.rows.len(),
                error: e.to_string(),
                numerical: e.is_numerical(),
            }),
            None => {
                completed.push(run.seed);
                if cfg.output.snapshots {
                    files.push(snapshot_name(run.seed));
                }
                files.push(trajectory_name(run.seed));
            }
        }
        seed_runs.push(run);
    }
    if !failed.is_empty() {
        log::warn!(
            "{} of {} seeds failed; aggregating over the {} completed",
            failed.len(),
            seed_runs.len(),
            completed.len()
        );
    }
    let complete: Vec<&SeedRun> = seed_runs.iter().filter(|r| r.error.is_none()).collect();
    write_aggregate(&dir.join("aggregate.csv"), &complete, cfg.schedule.episodes)?;

    let mut formulas = BTreeMap::new();
    for name in task_names(&ode.name) {
        formulas.insert(name.to_string(), downstream_task(&ode, name)?.formula.to_string());
    }
    wall.total_seconds = started.elapsed().as_secs_f64();
    files.push("manifest.json".into());
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        environment: ode.name.clone(),
        task: cfg.environment.task.clone(),
        algo: cfg.agent.algo.clone(),
        episodes: cfg.schedule.episodes,
        seeds: cfg.output.seeds.clone(),
        completed_seeds: completed,
        failed_seeds: failed,
        oracle_return: oracle,
        oracle_cache_hits: cache.hits(),
        reward_formulas: formulas,
        wall_clock: wall,
        files,
        config: cfg.clone(),
    };
    let f = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(SuiteOutcome {
        dir,
        oracle,
        runs: seed_runs,
        manifest,
    })
}

fn run_one_seed(cfg: &RunConfig, seed: u64, oracle: f64, dir: &Path) -> SeedRun {
    let path = dir.join(seed_csv_name(seed));
    let mut writer = match csv::Writer::from_path(&path) {
        Ok(w) => w,
        Err(e) => {
            return SeedRun {
                seed,
                rows: Vec::new(),
                timings: Vec::new(),
                final_model: None,
                last_trajectory: None,
                error: Some(e.into()),
            }
        }
    };
    let mut wrote_header = false;
    let mut on_row = |row: &EpisodeRow| -> Result<()> {
        wrote_header = true;
        writer.serialize(row)?;
        writer.flush()?;
        Ok(())
    };
    let mut run = run_seed(cfg, seed, oracle, &mut on_row);
    if !wrote_header {
        let header_only = writer
            .write_record(CSV_HEADER.split(','))
            .and_then(|_| writer.flush().map_err(csv::Error::from));
        if let (Err(e), None) = (header_only, &run.error) {
            run.error = Some(e.into());
        }
    }
    if run.error.is_none() {
        if let Err(e) = persist_seed(cfg, &run, dir) {
            run.error = Some(e);
        }
    }
    run
}

fn persist_seed(cfg: &RunConfig, run: &SeedRun, dir: &Path) -> Result<()> {
    if cfg.output.snapshots {
        if let Some(model) = &run.final_model {
            ModelSnapshot::capture(model, &cfg.environment.name).save(&dir.join(snapshot_name(run.seed)))?;
        }
    }
    if let Some(traj) = &run.last_trajectory {
        traj.write_jsonl(BufWriter::new(File::create(dir.join(trajectory_name(run.seed)))?))?;
    }
    Ok(())
}

fn write_aggregate(path: &Path, runs: &[&SeedRun], episodes: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["episode".to_string(), "seeds".to_string()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_stderr"));
    }
    w.write_record(&header)?;
    for ep in 1..=episodes {
        let rows: Vec<&EpisodeRow> = runs
            .iter()
            .filter_map(|r| r.rows.iter().find(|row| row.episode == ep))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let mut record = vec![ep.to_string(), rows.len().to_string()];
        for i in 0..METRICS.len() {
            let vals: Vec<f64> = rows.iter().map(|r| metric_values(r)[i]).collect();
            let (m, se) = mean_stderr(&vals);
            record.push(m.to_string());
            record.push(se.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
