use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vkgmap::bench::{emit_report, execution_log, report_text, run_benchmark, BenchConfig, ReportFormat, SEED_ENV};
use vkgmap::engine::{load_database, Database};
use vkgmap::mapping::{parse_mapping_set, save_mapping_set, MappingSet};
use vkgmap::r2rml::{extract_mapping, to_graph, R2rmlDocument};
use vkgmap::rdf::{parse_turtle, serialize_turtle};
use vkgmap::sparqlcq::{parse_sparql, render_sparql, restrict_to_cq, to_ontology_cq};
use vkgmap::translate::{export_r2rml, import_r2rml, TranslateError};
use vkgmap::vrdf::{answer_cq, materialize, materialize_document};

#[derive(Parser)]
#[command(name = "vkgmap", version, about = "R2RML and OBDA mapping tools over CSV-backed databases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an R2RML document to a mapping set.
    Import {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convert a mapping set to an R2RML document.
    Export {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check an R2RML document (.ttl) or a mapping set (.json).
    Validate { input: PathBuf },
    /// Generate the RDF graph of a mapping over a database.
    Materialize {
        #[arg(short, long)]
        mapping: PathBuf,
        /// Schema file of the CSV database.
        #[arg(short, long)]
        db: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Answer a SPARQL query through the mapping.
    Query {
        #[arg(short, long)]
        mapping: PathBuf,
        #[arg(short, long)]
        db: PathBuf,
        #[arg(short, long)]
        query: PathBuf,
    },
    /// Rewrite a SPARQL query into its conjunctive fragment.
    Restrict {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a query set for several rounds and report mean times.
    Bench {
        /// Query-set manifest.
        #[arg(short, long)]
        queries: PathBuf,
        #[arg(short, long)]
        mapping: PathBuf,
        #[arg(short, long)]
        db: PathBuf,
        #[arg(long, default_value_t = vkgmap::bench::DEFAULT_ROUNDS as u64, value_parser = clap::value_parser!(u64).range(1..))]
        rounds: u64,
        #[arg(long, env = SEED_ENV, default_value_t = vkgmap::bench::DEFAULT_SEED)]
        seed: u64,
        /// Per-execution timeout in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write the execution order.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

enum Outcome {
    Ok,
    Diagnostics(Vec<String>),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Diagnostics(ds)) => {
            for d in ds {
                eprintln!("{d}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(body.as_bytes()).context("writing to stdout"),
    }
}

fn is_turtle(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ttl"))
}

fn load_document(path: &Path) -> Result<R2rmlDocument> {
    let g = parse_turtle(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    extract_mapping(&g).with_context(|| format!("reading triples maps from {}", path.display()))
}

/// A mapping set from either a mapping-set file or an R2RML document.
fn load_mappings(path: &Path) -> Result<MappingSet> {
    if is_turtle(path) {
        Ok(import_r2rml(&load_document(path)?)?)
    } else {
        let ms = parse_mapping_set(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let ds = ms.validate();
        if !ds.is_empty() {
            anyhow::bail!(TranslateError::Invalid(ds));
        }
        Ok(ms)
    }
}

fn load_db(path: &Path) -> Result<Database> {
    load_database(path).with_context(|| format!("loading database {}", path.display()))
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Import { input, output } => {
            let ms = import_r2rml(&load_document(&input)?)?;
            write_out(output.as_deref(), &save_mapping_set(&ms))?;
        }
        Command::Export { input, output } => {
            let doc = export_r2rml(&load_mappings(&input)?)?;
            write_out(output.as_deref(), &serialize_turtle(&to_graph(&doc)))?;
        }
        Command::Validate { input } => return validate(&input),
        Command::Materialize { mapping, db, output } => {
            let db = load_db(&db)?;
            let g = if is_turtle(&mapping) {
                materialize_document(&load_document(&mapping)?, &db)?
            } else {
                materialize(&load_mappings(&mapping)?, &db)?
            };
            write_out(output.as_deref(), &serialize_turtle(&g))?;
        }
        Command::Query { mapping, db, query } => {
            let q = parse_sparql(&read(&query)?).with_context(|| format!("parsing {}", query.display()))?;
            let cq = match to_ontology_cq(&q) {
                Ok(cq) => cq,
                Err(r) => return Ok(Outcome::Diagnostics(vec![format!("{}: {r}", query.display())])),
            };
            let answers = answer_cq(&cq, &load_mappings(&mapping)?, &load_db(&db)?)?;
            let mut out = answers.vars.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join("\t");
            out.push('\n');
            for row in &answers.rows {
                out.push_str(&row.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("\t"));
                out.push('\n');
            }
            write_out(None, &out)?;
        }
        Command::Restrict { input, output } => {
            let q = parse_sparql(&read(&input)?).with_context(|| format!("parsing {}", input.display()))?;
            match restrict_to_cq(&q) {
                Ok(r) => write_out(output.as_deref(), &render_sparql(&r))?,
                Err(r) => return Ok(Outcome::Diagnostics(vec![format!("{}: {r}", input.display())])),
            }
        }
        Command::Bench {
            queries,
            mapping,
            db,
            rounds,
            seed,
            timeout,
            output,
            format,
            log,
        } => {
            let mut cfg = BenchConfig::new(queries);
            cfg.rounds = rounds as usize;
            cfg.seed = seed;
            cfg.timeout = match timeout {
                Some(t) if t.is_finite() && t > 0.0 => Some(Duration::from_secs_f64(t)),
                Some(t) => anyhow::bail!("invalid timeout {t}"),
                None => None,
            };
            cfg.output = output.clone();
            let report = run_benchmark(&cfg, &load_mappings(&mapping)?, &load_db(&db)?)?;
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Text => ReportFormat::Text,
            };
            match &output {
                Some(p) => emit_report(&report, format, p)?,
                None => write_out(None, &report_text(&report))?,
            }
            if let Some(p) = log {
                write_out(Some(&p), &execution_log(&report))?;
            }
        }
    }
    Ok(Outcome::Ok)
}

fn validate(input: &Path) -> Result<Outcome> {
    let text = read(input)?;
    if is_turtle(input) {
        let g = match parse_turtle(&text) {
            Ok(g) => g,
            Err(e) => return Ok(Outcome::Diagnostics(vec![format!("{}: {e}", input.display())])),
        };
        let doc = match extract_mapping(&g) {
            Ok(d) => d,
            Err(e) => return Ok(Outcome::Diagnostics(vec![format!("{}: {e}", input.display())])),
        };
        return Ok(match import_r2rml(&doc) {
            Ok(_) => Outcome::Ok,
            Err(TranslateError::Invalid(ds)) => Outcome::Diagnostics(ds.iter().map(|d| d.to_string()).collect()),
            Err(e) => Outcome::Diagnostics(vec![e.to_string()]),
        });
    }
    let ms = match parse_mapping_set(&text) {
        Ok(ms) => ms,
        Err(e) => return Ok(Outcome::Diagnostics(vec![format!("{}: {e}", input.display())])),
    };
    let ds = ms.validate();
    Ok(if ds.is_empty() {
        Outcome::Ok
    } else {
        Outcome::Diagnostics(ds.iter().map(|d| d.to_string()).collect())
    })
}
