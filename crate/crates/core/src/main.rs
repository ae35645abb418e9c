use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use fence_forge::bench::{generate, load_grid, run_experiment, write_csv, Core, RunRecord};
use fence_forge::checker::{CheckError, CheckResult, Checker, OrderingConstraint};
use fence_forge::hitset::MhsMode;
use fence_forge::ir::{parse, unroll, Program, UnrolledProgram};
use fence_forge::memmodel::{format_pairs, Arch, PairSet, StatementPair};
use fence_forge::repair::{
    fence_placements, repair, Algorithm, RepairConfig, RepairStatus, UpperBound,
};

const SAFE: u8 = 0;
const UNSAFE: u8 = 1;
const UNREPAIRABLE: u8 = 2;
const USAGE: u8 = 3;
const RESOURCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fence-forge",
    version,
    about = "Fence insertion for TSO and PSO by reorder-bounded model checking"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Model-check a program.
    Check {
        file: PathBuf,
        #[arg(long)]
        arch: Arch,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        unwind: u64,
        /// Reorder bound; unbounded when omitted.
        #[arg(long)]
        k: Option<usize>,
        /// JSON array of clauses, each an array of ["t1.1", "t1.2"] pairs.
        #[arg(long)]
        constraint: Option<PathBuf>,
        /// Print the counterexample's memory events.
        #[arg(long)]
        dump_trace: bool,
    },
    /// Compute pairs to keep ordered (and where to put fences).
    Repair {
        file: PathBuf,
        #[arg(long)]
        arch: Arch,
        #[arg(long)]
        algo: Algorithm,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        k1: u64,
        #[arg(long, default_value = "auto")]
        k2: UpperBound,
        /// Defaults to minimal for te, minimum otherwise.
        #[arg(long)]
        mhs: Option<MhsMode>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        unwind: u64,
        /// Write this run as a one-record CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Print a padded benchmark program.
    Gen {
        #[arg(long)]
        core: Core,
        #[arg(long)]
        n: usize,
    },
    /// Run a grid of repair experiments.
    Bench {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Per-cell timeout in seconds.
        #[arg(long)]
        timeout: Option<f64>,
    },
}

struct Fail(u8, String);

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Fail(USAGE, msg.into())
    }
}

fn check_error(e: CheckError) -> Fail {
    match e {
        CheckError::IneligiblePair(_) => Fail(USAGE, e.to_string()),
        _ => Fail(RESOURCE, e.to_string()),
    }
}

fn load_program(path: &Path) -> Result<Program, Fail> {
    let text =
        fs::read_to_string(path).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))
}

fn load_constraint(path: &Path, p: &Program) -> Result<OrderingConstraint, Fail> {
    let text =
        fs::read_to_string(path).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
    let clauses: Vec<Vec<[String; 2]>> =
        serde_json::from_str(&text).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
    let sid = |s: &str| {
        p.resolve_sid(s)
            .ok_or_else(|| Fail::usage(format!("unknown statement `{s}`")))
    };
    let mut phi = OrderingConstraint::new();
    for clause in clauses {
        if clause.is_empty() {
            return Err(Fail::usage("constraint clauses must be non-empty"));
        }
        let mut set = PairSet::new();
        for [a, b] in &clause {
            let (a, b) = (sid(a)?, sid(b)?);
            if a.tid != b.tid {
                return Err(Fail::usage(format!(
                    "pair {}~{} crosses threads",
                    p.sid_name(a),
                    p.sid_name(b)
                )));
            }
            set.insert(StatementPair::new(a, b));
        }
        phi.add_clause(set);
    }
    Ok(phi)
}

fn print_trace(u: &UnrolledProgram, r: &CheckResult, dump: bool) {
    if let (true, Some(t)) = (dump, r.trace()) {
        print!("{}", t.dump(u));
    }
}

fn run(cmd: Cmd) -> Result<u8, Fail> {
    match cmd {
        Cmd::Check {
            file,
            arch,
            unwind,
            k,
            constraint,
            dump_trace,
        } => {
            let p = load_program(&file)?;
            let phi = match &constraint {
                Some(path) => load_constraint(path, &p)?,
                None => OrderingConstraint::new(),
            };
            let u = unroll(&p, unwind as usize);
            let r = Checker::new(&u, arch).check(&phi, k).map_err(check_error)?;
            Ok(match &r {
                CheckResult::Safe(ev) => {
                    println!("SAFE bound_limited={}", ev.bound_limited);
                    SAFE
                }
                CheckResult::Unsafe(t) => {
                    println!("UNSAFE reordered={}", format_pairs(&p, &t.reordered));
                    print_trace(&u, &r, dump_trace);
                    UNSAFE
                }
                CheckResult::Unrepairable(_) => {
                    println!("UNREPAIRABLE violation without any reordering");
                    print_trace(&u, &r, dump_trace);
                    UNREPAIRABLE
                }
            })
        }
        Cmd::Repair {
            file,
            arch,
            algo,
            k1,
            k2,
            mhs,
            unwind,
            stats,
        } => {
            let p = load_program(&file)?;
            let mut cfg = RepairConfig::new(algo, arch).with_k1(k1 as usize);
            cfg.k2 = k2;
            cfg.unwind = unwind as usize;
            if let Some(m) = mhs {
                cfg.mhs = m;
            }
            let u = unroll(&p, cfg.unwind);
            let outcome = repair(&u, &cfg);
            if let Some(path) = stats {
                let name = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let rec = RunRecord::from_outcome(name, None, &cfg, &p, &outcome);
                let f = fs::File::create(&path)
                    .map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
                write_csv(f, &[rec]).map_err(|e| Fail::usage(e.to_string()))?;
            }
            let r = outcome.map_err(|e| {
                if e.is_resource() {
                    Fail(RESOURCE, e.to_string())
                } else {
                    Fail::usage(e.to_string())
                }
            })?;
            println!("status: {}", r.status);
            println!("solution: {}", format_pairs(&p, &r.solution));
            let fences: Vec<String> = fence_placements(&r.solution)
                .into_iter()
                .map(|s| p.sid_name(s))
                .collect();
            println!("fences after: {}", fences.join(" "));
            println!(
                "queries: {} counterexamples: {} max_cex_reorderings: {} early_terminated: {}",
                r.stats.queries,
                r.stats.counterexamples,
                r.stats.max_cex_reorderings,
                r.stats.early_terminated
            );
            Ok(if r.status == RepairStatus::Unrepairable {
                UNREPAIRABLE
            } else {
                SAFE
            })
        }
        Cmd::Gen { core, n } => {
            io::stdout()
                .write_all(generate(core, n).as_bytes())
                .map_err(|e| Fail(RESOURCE, e.to_string()))?;
            Ok(SAFE)
        }
        Cmd::Bench {
            grid,
            stats,
            jobs,
            timeout,
        } => {
            let cells = load_grid(&grid).map_err(|e| Fail::usage(e.to_string()))?;
            let timeout = match timeout {
                Some(t) if !(t > 0.0 && t.is_finite()) => {
                    return Err(Fail::usage("--timeout must be positive"))
                }
                t => t.map(Duration::from_secs_f64),
            };
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let records = run_experiment(&cells, jobs, timeout);
            let f = fs::File::create(&stats)
                .map_err(|e| Fail::usage(format!("{}: {e}", stats.display())))?;
            write_csv(f, &records).map_err(|e| Fail(RESOURCE, e.to_string()))?;
            eprintln!("{} records written to {}", records.len(), stats.display());
            Ok(SAFE)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { SAFE };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
