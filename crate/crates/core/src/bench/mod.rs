//! Benchmark programs, the bundled corpus and the experiment runner.

mod corpus;
mod generate;

use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

pub use corpus::{corpus, CorpusEntry};
pub use generate::{generate, generate_program, Core, ParamSpec};

use crate::checker::CheckError;
use crate::hitset::MhsMode;
use crate::ir::{unroll, Program};
use crate::memmodel::{format_pairs, Arch};
use crate::repair::{repair, Algorithm, RepairConfig, RepairError, RepairResult, UpperBound};

/// One experiment: a generated program and how to repair it.
#[derive(Clone, Debug)]
pub struct GridCell {
    pub spec: ParamSpec,
    pub config: RepairConfig,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunRecord {
    pub benchmark: String,
    pub algo: Algorithm,
    pub arch: Arch,
    /// Only reported for the bounded algorithms.
    pub k1: Option<usize>,
    /// Padding parameter; absent for programs not from the generator.
    pub n: Option<usize>,
    pub queries: usize,
    pub counterexamples: usize,
    pub solution_size: usize,
    pub solution_pairs: String,
    pub time_ms: u128,
    pub early_terminated: bool,
    pub status: String,
}

pub const CSV_HEADER: [&str; 12] = [
    "benchmark",
    "algo",
    "arch",
    "k1",
    "n",
    "queries",
    "cex",
    "solution_size",
    "solution_pairs",
    "time_ms",
    "early_term",
    "status",
];

impl RunRecord {
    fn row(&self) -> [String; 12] {
        [
            self.benchmark.clone(),
            self.algo.to_string(),
            self.arch.to_string(),
            self.k1.map(|k| k.to_string()).unwrap_or_default(),
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            self.queries.to_string(),
            self.counterexamples.to_string(),
            self.solution_size.to_string(),
            self.solution_pairs.clone(),
            self.time_ms.to_string(),
            self.early_terminated.to_string(),
            self.status.clone(),
        ]
    }
}

pub fn write_csv<W: io::Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn error_status(e: &RepairError) -> &'static str {
    match e {
        RepairError::Check(CheckError::Timeout) => "timeout",
        e if e.is_resource() => "resource_limit",
        _ => "error",
    }
}

impl RunRecord {
    /// Summarises a repair outcome. `time_ms` is left for the caller.
    pub fn from_outcome(
        benchmark: String,
        n: Option<usize>,
        cfg: &RepairConfig,
        program: &Program,
        outcome: &Result<RepairResult, RepairError>,
    ) -> Self {
        let mut rec = RunRecord {
            benchmark,
            algo: cfg.algo,
            arch: cfg.arch,
            k1: cfg.algo.is_bounded().then_some(cfg.k1),
            n,
            queries: 0,
            counterexamples: 0,
            solution_size: 0,
            solution_pairs: String::new(),
            time_ms: 0,
            early_terminated: false,
            status: String::new(),
        };
        match outcome {
            Ok(r) => {
                rec.queries = r.stats.queries;
                rec.counterexamples = r.stats.counterexamples;
                rec.solution_size = r.solution.len();
                rec.solution_pairs = format_pairs(program, &r.solution);
                rec.early_terminated = r.stats.early_terminated;
                rec.status = r.status.to_string();
                rec.time_ms = r.stats.wall_time.as_millis();
            }
            Err(e) => rec.status = error_status(e).to_string(),
        }
        rec
    }
}

/// Runs one cell. Failures become a record with the failure as its status.
pub fn run_cell(cell: &GridCell, timeout: Option<Duration>) -> RunRecord {
    let started = Instant::now();
    let mut cfg = cell.config.clone();
    cfg.limits.deadline = timeout.map(|t| started + t);
    let u = unroll(&generate_program(cell.spec.core, cell.spec.n), cfg.unwind);
    let outcome = repair(&u, &cfg);
    let mut rec = RunRecord::from_outcome(
        cell.spec.id(),
        Some(cell.spec.n),
        &cfg,
        &u.program,
        &outcome,
    );
    rec.time_ms = started.elapsed().as_millis();
    rec
}

/// Runs every cell on up to `jobs` threads; records come back in grid order.
pub fn run_experiment(grid: &[GridCell], jobs: usize, timeout: Option<Duration>) -> Vec<RunRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| grid.par_iter().map(|c| run_cell(c, timeout)).collect())
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read grid file: {0}")]
    Io(#[from] io::Error),
    #[error("malformed grid file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("grid group {group}: {msg}")]
    Invalid { group: usize, msg: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    group: Vec<Group>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Group {
    cores: Vec<String>,
    n: Vec<usize>,
    arch: Vec<String>,
    algo: Vec<String>,
    #[serde(default = "default_k1")]
    k1: Vec<usize>,
    #[serde(default)]
    k2: Option<toml::Value>,
    #[serde(default)]
    mhs: Option<String>,
    #[serde(default)]
    unwind: Option<usize>,
}

fn default_k1() -> Vec<usize> {
    vec![1]
}

/// Expands a grid file into cells, ordered by core, n, arch, algorithm,
/// then K1 (which only multiplies the bounded algorithms).
///
/// ```toml
/// [[group]]
/// cores = ["sb", "double"]
/// n = [0, 2, 4]
/// arch = ["tso"]
/// algo = ["fi", "robmc-et"]
/// k1 = [1]        # optional, default [1]
/// k2 = "auto"     # optional, or a positive integer
/// mhs = "minimum" # optional, default per algorithm
/// unwind = 2      # optional, default per core
/// ```
pub fn parse_grid(text: &str) -> Result<Vec<GridCell>, GridError> {
    let file: GridFile = toml::from_str(text)?;
    let mut cells = Vec::new();
    for (gi, g) in file.group.iter().enumerate() {
        let bad = |msg: String| GridError::Invalid { group: gi + 1, msg };
        let cores = g
            .cores
            .iter()
            .map(|c| c.parse::<Core>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        let archs = g
            .arch
            .iter()
            .map(|a| a.parse::<Arch>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        let algos = g
            .algo
            .iter()
            .map(|a| a.parse::<Algorithm>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        let mhs = g
            .mhs
            .as_deref()
            .map(str::parse::<MhsMode>)
            .transpose()
            .map_err(bad)?;
        let k2 = match &g.k2 {
            None => UpperBound::Auto,
            Some(toml::Value::String(s)) => s.parse().map_err(bad)?,
            Some(toml::Value::Integer(k)) if *k > 0 => UpperBound::Fixed(*k as usize),
            Some(other) => return Err(bad(format!("invalid k2 `{other}`"))),
        };
        if g.k1.contains(&0) {
            return Err(bad("k1 values must be positive".into()));
        }
        if g.unwind == Some(0) {
            return Err(bad("unwind must be positive".into()));
        }
        for &core in &cores {
            for &n in &g.n {
                for &arch in &archs {
                    for &algo in &algos {
                        let k1s: &[usize] = if algo.is_bounded() { &g.k1 } else { &[1] };
                        for &k1 in k1s {
                            let mut config = RepairConfig::new(algo, arch).with_k1(k1);
                            config.k2 = k2;
                            config.unwind = g.unwind.unwrap_or(core.unwind());
                            if let Some(m) = mhs {
                                config.mhs = m;
                            }
                            cells.push(GridCell {
                                spec: ParamSpec { core, n, arch },
                                config,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}

pub fn load_grid(path: &Path) -> Result<Vec<GridCell>, GridError> {
    parse_grid(&std::fs::read_to_string(path)?)
}
