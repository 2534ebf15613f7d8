//! Sequential benchmark runner: every round executes each query once, in a
//! fresh random order drawn from a seeded generator.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::engine::Database;
use crate::exec::Execution;
use crate::mapping::MappingSet;
use crate::sparqlcq::{parse_sparql, to_ontology_cq};
use crate::vrdf::{answer_cq_with, OntologyCQ, Timing};

pub const SEED_ENV: &str = "BENCH_SEED";
pub const DEFAULT_ROUNDS: usize = 5;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("invalid {SEED_ENV} value '{0}'")]
    Seed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub query_set: PathBuf,
    pub rounds: usize,
    pub timeout: Option<Duration>,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(query_set: impl Into<PathBuf>) -> Self {
        BenchConfig {
            query_set: query_set.into(),
            rounds: DEFAULT_ROUNDS,
            timeout: None,
            seed: DEFAULT_SEED,
            output: None,
        }
    }

    /// Replaces the seed with `BENCH_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self, BenchError> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s.trim().parse().map_err(|_| BenchError::Seed(s))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.rounds == 0 {
            return Err(BenchError::ZeroRounds);
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    queries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Reads a query-set manifest; entry paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let m: ManifestFile = serde_json::from_str(&text).map_err(|e| BenchError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in m.queries {
        if !seen.insert(e.id.clone()) {
            return Err(BenchError::Manifest {
                path: path.to_path_buf(),
                message: format!("duplicate query id '{}'", e.id),
            });
        }
        out.push(ManifestEntry {
            path: dir.join(&e.path),
            id: e.id,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchQuery {
    pub id: String,
    pub cq: OntologyCQ,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

/// Parses and restricts every manifest query. Queries that fail either step
/// are excluded with a warning.
pub fn prepare_queries(entries: &[ManifestEntry]) -> Result<(Vec<BenchQuery>, Vec<Excluded>), BenchError> {
    let mut queries = Vec::new();
    let mut excluded = Vec::new();
    for e in entries {
        let text = fs::read_to_string(&e.path).map_err(|source| BenchError::Io {
            path: e.path.clone(),
            source,
        })?;
        let reason = match parse_sparql(&text) {
            Err(err) => format!("parse error: {err}"),
            Ok(q) => match to_ontology_cq(&q) {
                Ok(cq) => {
                    queries.push(BenchQuery { id: e.id.clone(), cq });
                    continue;
                }
                Err(r) => r.to_string(),
            },
        };
        log::warn!("excluding query {}: {reason}", e.id);
        excluded.push(Excluded { id: e.id.clone(), reason });
    }
    Ok((queries, excluded))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    Done { timing: Timing, results: usize },
    TimedOut { elapsed_ms: f64 },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryReport {
    pub id: String,
    /// Outcomes indexed by round.
    pub rounds: Vec<RoundOutcome>,
}

impl QueryReport {
    fn totals(&self) -> impl Iterator<Item = f64> + '_ {
        self.rounds.iter().filter_map(|r| match r {
            RoundOutcome::Done { timing, .. } => Some(timing.total_ms()),
            _ => None,
        })
    }

    /// Mean total time over the rounds that completed.
    pub fn mean_total_ms(&self) -> Option<f64> {
        let (sum, n) = self.totals().fold((0.0, 0usize), |(s, n), t| (s + t, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn timed_out(&self) -> bool {
        self.rounds.iter().any(|r| matches!(r, RoundOutcome::TimedOut { .. }))
    }

    pub fn failed(&self) -> bool {
        self.rounds.iter().any(|r| matches!(r, RoundOutcome::Failed(_)))
    }

    pub fn result_count(&self) -> Option<usize> {
        self.rounds.iter().find_map(|r| match r {
            RoundOutcome::Done { results, .. } => Some(*results),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub round: usize,
    pub position: usize,
    pub query: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub seed: u64,
    pub rounds: usize,
    /// In manifest order.
    pub queries: Vec<QueryReport>,
    pub excluded: Vec<Excluded>,
    /// Executions in the order they ran; `query` indexes `queries`.
    pub log: Vec<LogEntry>,
}

/// One query evaluation: its timing breakdown and result count.
pub type Measurement = Result<(Timing, usize), String>;

/// Runs `rounds` passes over `queries`, calling `run` for each execution.
/// A run exceeding the timeout is recorded as timed out; it is not
/// interrupted.
pub fn run_rounds<F>(cfg: &BenchConfig, queries: &[BenchQuery], excluded: Vec<Excluded>, mut run: F) -> Result<BenchReport, BenchError>
where
    F: FnMut(&BenchQuery) -> Measurement,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports: Vec<QueryReport> = queries
        .iter()
        .map(|q| QueryReport {
            id: q.id.clone(),
            rounds: Vec::with_capacity(cfg.rounds),
        })
        .collect();
    let mut log = Vec::with_capacity(cfg.rounds * queries.len());
    for round in 0..cfg.rounds {
        let mut order: Vec<usize> = (0..queries.len()).collect();
        order.shuffle(&mut rng);
        for (position, &qi) in order.iter().enumerate() {
            let start = Instant::now();
            let measured = run(&queries[qi]);
            let elapsed = start.elapsed();
            let outcome = match measured {
                _ if cfg.timeout.is_some_and(|t| elapsed > t) => RoundOutcome::TimedOut {
                    elapsed_ms: elapsed.as_secs_f64() * 1000.0,
                },
                Ok((timing, results)) => RoundOutcome::Done { timing, results },
                Err(e) => {
                    log::warn!("query {} failed in round {}: {e}", queries[qi].id, round + 1);
                    RoundOutcome::Failed(e)
                }
            };
            log::debug!("round {} position {} query {}", round + 1, position + 1, queries[qi].id);
            reports[qi].rounds.push(outcome);
            log.push(LogEntry {
                round,
                position,
                query: qi,
            });
        }
    }
    Ok(BenchReport {
        seed: cfg.seed,
        rounds: cfg.rounds,
        queries: reports,
        excluded,
        log,
    })
}

/// Runs the manifest's queries against the virtual graph of `ms` over `db`.
pub fn run_benchmark(cfg: &BenchConfig, ms: &MappingSet, db: &Database) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let entries = load_manifest(&cfg.query_set)?;
    let (queries, excluded) = prepare_queries(&entries)?;
    run_rounds(cfg, &queries, excluded, |q| {
        answer_cq_with(&q.cq, ms, db, Execution::Sequential)
            .map(|a| (a.timing, a.len()))
            .map_err(|e| e.to_string())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

fn seconds(ms: f64) -> String {
    format!("{:.3}", ms / 1000.0)
}

fn rows(r: &BenchReport) -> Vec<[String; 5]> {
    r.queries
        .iter()
        .map(|q| {
            let mean = match q.mean_total_ms() {
                Some(m) => seconds(m),
                None if q.timed_out() => "--".to_string(),
                None => "error".to_string(),
            };
            let completed = q.totals().count();
            let status = if q.timed_out() {
                "timeout"
            } else if q.failed() {
                "error"
            } else {
                "ok"
            };
            [
                q.id.clone(),
                mean,
                q.result_count().map_or("-".to_string(), |n| n.to_string()),
                completed.to_string(),
                status.to_string(),
            ]
        })
        .collect()
}

const HEADER: [&str; 5] = ["query", "mean_seconds", "results", "completed_rounds", "status"];

pub fn report_csv(r: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for row in rows(r) {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn report_text(r: &BenchReport) -> String {
    let rows = rows(r);
    let mut widths = HEADER.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 5]| {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for (cell, w) in cells.iter().zip(widths).skip(1) {
            write!(s, "  {cell:>w$}").unwrap();
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, HEADER);
    for row in &rows {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]].map(String::as_str));
    }
    writeln!(out, "\nseed {} rounds {}", r.seed, r.rounds).unwrap();
    for e in &r.excluded {
        writeln!(out, "excluded {}: {}", e.id, e.reason).unwrap();
    }
    out
}

/// The execution order, one `round,position,query` line per execution.
/// Depends only on the seed and the query set.
pub fn execution_log(r: &BenchReport) -> String {
    let mut out = String::from("round,position,query\n");
    for e in &r.log {
        writeln!(out, "{},{},{}", e.round + 1, e.position + 1, r.queries[e.query].id).unwrap();
    }
    out
}

pub fn emit_report(r: &BenchReport, format: ReportFormat, path: &Path) -> Result<(), BenchError> {
    let body = match format {
        ReportFormat::Csv => report_csv(r),
        ReportFormat::Text => report_text(r),
    };
    fs::write(path, body).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vrdf::QueryAtom;

    fn queries(n: usize) -> Vec<BenchQuery> {
        (0..n)
            .map(|i| BenchQuery {
                id: format!("q{i}"),
                cq: OntologyCQ {
                    answer_vars: vec!["x".into()],
                    atoms: vec![QueryAtom::class("http://e/C", crate::vrdf::QueryTerm::var("x"))],
                    filters: vec![],
                    distinct: false,
                },
            })
            .collect()
    }

    fn fixed(ms: f64) -> Measurement {
        Ok((
            Timing {
                unfold_ms: 0.0,
                sql_ms: ms,
                result_ms: 0.0,
            },
            1,
        ))
    }

    #[test]
    fn every_query_runs_once_per_round() {
        let cfg = BenchConfig::new("unused");
        let r = run_rounds(&cfg, &queries(3), vec![], |_| fixed(1.0)).unwrap();
        assert_eq!(r.log.len(), 15);
        for q in &r.queries {
            assert_eq!(q.rounds.len(), 5);
        }
        for round in 0..5 {
            let mut seen: Vec<usize> = r.log.iter().filter(|e| e.round == round).map(|e| e.query).collect();
            seen.sort();
            assert_eq!(seen, [0, 1, 2]);
        }
        let again = run_rounds(&cfg, &queries(3), vec![], |_| fixed(1.0)).unwrap();
        assert_eq!(execution_log(&r), execution_log(&again));
    }

    #[test]
    fn mean_is_arithmetic() {
        let mut t = [10.0, 20.0, 30.0, 40.0, 50.0].into_iter();
        let r = run_rounds(&BenchConfig::new("unused"), &queries(1), vec![], |_| fixed(t.next().unwrap())).unwrap();
        assert_eq!(r.queries[0].mean_total_ms(), Some(30.0));
    }

    #[test]
    fn slow_rounds_time_out() {
        let mut cfg = BenchConfig::new("unused");
        cfg.timeout = Some(Duration::from_millis(20));
        let mut round = 0;
        let r = run_rounds(&cfg, &queries(1), vec![], |_| {
            round += 1;
            if round == 2 {
                std::thread::sleep(Duration::from_millis(40));
            }
            fixed(5.0)
        })
        .unwrap();
        let q = &r.queries[0];
        assert!(matches!(q.rounds[1], RoundOutcome::TimedOut { .. }));
        assert!(q.timed_out());
        assert_eq!(q.mean_total_ms(), Some(5.0));
    }

    #[test]
    fn report_rendering() {
        let cfg = BenchConfig::new("unused");
        let empty = run_rounds(&cfg, &[], vec![], |_| fixed(1.0)).unwrap();
        assert_eq!(report_csv(&empty), "query,mean_seconds,results,completed_rounds,status\n");

        let one = run_rounds(&cfg, &queries(1), vec![], |_| fixed(1234.0)).unwrap();
        assert_eq!(report_csv(&one).lines().nth(1), Some("q0,1.234,1,5,ok"));

        let mut cfg = cfg;
        cfg.timeout = Some(Duration::from_millis(1));
        let slow = run_rounds(&cfg, &queries(1), vec![], |_| {
            std::thread::sleep(Duration::from_millis(3));
            fixed(1.0)
        })
        .unwrap();
        assert_eq!(report_csv(&slow).lines().nth(1), Some("q0,--,-,0,timeout"));
        assert!(report_text(&slow).contains("q0"));
    }

    #[test]
    fn zero_rounds_rejected() {
        let mut cfg = BenchConfig::new("unused");
        cfg.rounds = 0;
        assert!(matches!(run_rounds(&cfg, &[], vec![], |_| fixed(1.0)), Err(BenchError::ZeroRounds)));
    }
}
