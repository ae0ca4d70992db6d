//! Command-line front end: parsing, dispatch, and the fixture generators.
//!
//! Machine-readable results go to stdout; diagnostics and timings go to
//! stderr. Errors exit nonzero; usage problems exit with clap's code 2.

pub mod gen;

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use twinwidth::{
    build_query_engine, enumerate_query, full_universe, model_check, stone_space, validate,
    vc_density_report, ContractionSequence, EngineError, Enumerator, Formula, Graph, PartTable,
    TypeArena, Vertex, DEFAULT_BUDGET, RANK_CAP,
};

#[derive(Parser)]
#[command(
    name = "tww",
    version,
    about = "Contraction-sequence calculus: validation, model checking, query answering, \
             enumeration, and neighborhood-complexity experiments",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a contraction sequence against a graph; prints `width W`.
    Validate {
        /// Graph file (.gr: `n m` header, then `u v` edge lines).
        #[arg(long)]
        graph: PathBuf,
        /// Sequence file (.cs: `A A2 B k` step lines, each followed by k
        /// `C ra ra2` impurity lines).
        #[arg(long)]
        cs: PathBuf,
    },
    /// Model-check a sentence; prints `true` or `false`.
    Check {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cs: PathBuf,
        /// Sentence text, e.g. 'exists x exists y (E x y)'.
        #[arg(long)]
        formula: String,
    },
    /// Answer a formula with free variables on given tuples.
    Query {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cs: PathBuf,
        /// Formula with free variables, e.g. 'E x y'.
        #[arg(long)]
        formula: String,
        /// One assignment `x=3,y=7`; prints `true` or `false`.
        #[arg(long)]
        tuple: Option<String>,
        /// Batch file: one tuple per line, vertex ids in sorted variable
        /// order, whitespace-separated; prints one `1`/`0` line each.
        #[arg(long)]
        tuples_file: Option<PathBuf>,
    },
    /// Enumerate satisfying tuples, one `x=3 y=7` line per tuple.
    Enumerate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cs: PathBuf,
        #[arg(long)]
        formula: String,
        /// Stop after this many tuples (default: one full cycle).
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Print the trace space of a formula over a vertex set A.
    Stone {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cs: PathBuf,
        /// Formula; variables named x… are trace variables, the rest are
        /// parameters.
        #[arg(long)]
        formula: String,
        /// The set A, comma-separated vertex ids, e.g. `1,2,5`.
        #[arg(long, value_delimiter = ',', required = true)]
        a: Vec<Vertex>,
        /// Work budget in brute-force evaluation units.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Trace-space growth experiment over a graph family; prints CSV.
    Vcdensity {
        /// Family: path, grid (square vertex count), or random.
        #[arg(long)]
        family: String,
        /// Comma-separated graph sizes (vertex counts).
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<u32>,
        #[arg(long)]
        formula: String,
        /// Fraction of the vertices (a prefix) taken as A.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Seed for the random family.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Print realized type-universe sizes per (part, time) at rank k.
    Types {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cs: PathBuf,
        /// Type rank (0 ..= 4).
        #[arg(long, default_value_t = 1)]
        k: u32,
    },
    /// Generate a fixture family and write its .gr and .cs files.
    Gen {
        /// Family: path, grid (square vertex count), or random.
        #[arg(long)]
        family: String,
        /// Vertex count.
        #[arg(long)]
        n: u32,
        /// Seed for the random family.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_graph: PathBuf,
        #[arg(long)]
        out_cs: PathBuf,
    },
    /// Time index builds, query answering, and enumeration; prints CSV
    /// `n,build_ms,query_us,steps_per_output`.
    Bench {
        #[arg(long, default_value = "path")]
        family: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<u32>,
        #[arg(long, default_value = "E x y")]
        formula: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses and dispatches; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load(graph: &Path, cs: &Path) -> Result<(Graph, ContractionSequence)> {
    let gtext = fs::read_to_string(graph)
        .with_context(|| format!("reading graph file {}", graph.display()))?;
    let g = Graph::parse(&gtext)?;
    let ctext =
        fs::read_to_string(cs).with_context(|| format!("reading sequence file {}", cs.display()))?;
    let seq = ContractionSequence::parse(&ctext, g.n())?;
    Ok((g, seq))
}

fn parse_assignment(text: &str) -> Result<HashMap<String, Vertex>> {
    let mut out = HashMap::new();
    for piece in text.split(',') {
        let (name, value) = piece
            .split_once('=')
            .with_context(|| format!("expected `var=vertex`, got `{piece}`"))?;
        let v: Vertex = value
            .trim()
            .parse()
            .with_context(|| format!("bad vertex id `{value}` for variable `{name}`"))?;
        if out.insert(name.trim().to_string(), v).is_some() {
            bail!("variable `{}` assigned twice", name.trim());
        }
    }
    Ok(out)
}

fn format_tuple(vars: &[String], tuple: &[Vertex]) -> String {
    vars.iter()
        .zip(tuple)
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Validate { graph, cs } => {
            let (g, seq) = load(&graph, &cs)?;
            let width = validate(&g, &seq)?;
            println!("width {width}");
        }
        Cmd::Check { graph, cs, formula } => {
            let (g, seq) = load(&graph, &cs)?;
            validate(&g, &seq)?;
            let phi = Formula::parse(&formula)?;
            let start = Instant::now();
            let verdict = model_check(&g, &seq, &phi)?;
            eprintln!("checked in {:.3} ms", start.elapsed().as_secs_f64() * 1e3);
            println!("{verdict}");
        }
        Cmd::Query { graph, cs, formula, tuple, tuples_file } => {
            let (g, seq) = load(&graph, &cs)?;
            validate(&g, &seq)?;
            let phi = Formula::parse(&formula)?;
            let start = Instant::now();
            let engine = build_query_engine(&g, &seq, &phi)?;
            eprintln!("index built in {:.3} ms", start.elapsed().as_secs_f64() * 1e3);
            match (tuple, tuples_file) {
                (Some(text), None) => {
                    let w = parse_assignment(&text)?;
                    println!("{}", engine.answer(&w)?);
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading tuples file {}", path.display()))?;
                    let m = engine.vars().len();
                    for (i, line) in text.lines().enumerate() {
                        let line = line.trim();
                        if line.is_empty() || line.starts_with('#') {
                            continue;
                        }
                        let tuple: Vec<Vertex> = line
                            .split_whitespace()
                            .map(|tok| tok.parse::<Vertex>().map_err(Into::into))
                            .collect::<Result<_>>()
                            .with_context(|| format!("tuples file line {}", i + 1))?;
                        if tuple.len() != m {
                            bail!(
                                "tuples file line {}: expected {m} vertex ids, got {}",
                                i + 1,
                                tuple.len()
                            );
                        }
                        println!("{}", u8::from(engine.answer_tuple(&tuple)?));
                    }
                }
                (None, None) => bail!("provide --tuple or --tuples-file"),
                (Some(_), Some(_)) => bail!("provide only one of --tuple and --tuples-file"),
            }
        }
        Cmd::Enumerate { graph, cs, formula, limit } => {
            let (g, seq) = load(&graph, &cs)?;
            validate(&g, &seq)?;
            let phi = Formula::parse(&formula)?;
            let start = Instant::now();
            let ix = enumerate_query(&g, &seq, &phi)?;
            eprintln!("index built in {:.3} ms", start.elapsed().as_secs_f64() * 1e3);
            let vars = ix.engine().vars().to_vec();
            let mut handle = ix.enumerator();
            let mut emitted = 0u64;
            while limit.map_or(true, |cap| emitted < cap) {
                match handle.next() {
                    Some(t) => {
                        println!("{}", format_tuple(&vars, &t));
                        emitted += 1;
                    }
                    None => break,
                }
            }
            eprintln!("{emitted} tuples in {} steps", handle.steps());
        }
        Cmd::Stone { graph, cs, formula, a, budget } => {
            let (g, seq) = load(&graph, &cs)?;
            validate(&g, &seq)?;
            let phi = Formula::parse(&formula)?;
            let set: BTreeSet<Vertex> = a.into_iter().collect();
            let space = stone_space(&g, &set, &phi, budget)?;
            println!("x_vars {}", join_or_dash(&space.x_vars));
            println!("y_vars {}", join_or_dash(&space.y_vars));
            println!("size {}", space.size());
            for (trace, witness) in &space.traces {
                let members = trace
                    .iter()
                    .map(|t| {
                        space
                            .x_vars
                            .iter()
                            .zip(t)
                            .map(|(n, v)| format!("{n}={v}"))
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                let wit = if witness.is_empty() {
                    "-".to_string()
                } else {
                    space
                        .y_vars
                        .iter()
                        .zip(witness)
                        .map(|(n, v)| format!("{n}={v}"))
                        .collect::<Vec<_>>()
                        .join(",")
                };
                println!("trace {{{members}}} witness {wit}");
            }
        }
        Cmd::Vcdensity { family, sizes, formula, fraction, seed, budget } => {
            let phi = Formula::parse(&formula)?;
            let fam = family.clone();
            let report = vc_density_report(
                move |n| {
                    gen::by_name(&fam, n, seed)
                        .map(|(g, _)| g)
                        .map_err(|e| EngineError::Precondition(e.to_string()))
                },
                fraction,
                &phi,
                &sizes,
                budget,
            )?;
            println!("n,a_size,stone_size");
            for row in &report.rows {
                println!("{},{},{}", row.n, row.a_size, row.stone_size);
            }
            let verdict = if report.flagged { "exceeds" } else { "ok" };
            println!("exponent,{:.4},{verdict}", report.exponent);
        }
        Cmd::Types { graph, cs, k } => {
            let (g, seq) = load(&graph, &cs)?;
            validate(&g, &seq)?;
            if k > RANK_CAP {
                bail!("rank {k} exceeds the supported cap {RANK_CAP}");
            }
            let table = PartTable::new(&seq);
            let arena = TypeArena::new();
            for t in 1..=g.n() {
                let mut parts = table.parts_at(t);
                parts.sort_unstable();
                for p in parts {
                    let u = full_universe(&arena, &g, &table, &[p], t, k);
                    println!(
                        "time {t} part {p} realized {} bound {}",
                        u.realized.len(),
                        u.abstract_bound
                    );
                }
            }
        }
        Cmd::Gen { family, n, seed, out_graph, out_cs } => {
            let (g, seq) = gen::by_name(&family, n, seed)?;
            let width = validate(&g, &seq)?;
            fs::write(&out_graph, g.to_gr())
                .with_context(|| format!("writing {}", out_graph.display()))?;
            fs::write(&out_cs, seq.to_cs())
                .with_context(|| format!("writing {}", out_cs.display()))?;
            println!("n {} m {} width {width}", g.n(), g.m());
        }
        Cmd::Bench { family, sizes, formula, seed } => {
            let phi = Formula::parse(&formula)?;
            println!("n,build_ms,query_us,steps_per_output");
            for &n in &sizes {
                let (g, seq) = gen::by_name(&family, n, seed)?;
                let start = Instant::now();
                let ix = enumerate_query(&g, &seq, &phi)?;
                let build_ms = start.elapsed().as_secs_f64() * 1e3;

                let engine = ix.engine();
                let m = engine.vars().len();
                let samples: Vec<Vec<Vertex>> = (0..1000u64)
                    .map(|i| {
                        (0..m)
                            .map(|j| ((i * 7919 + j as u64 * 104729) % n as u64) as Vertex + 1)
                            .collect()
                    })
                    .collect();
                let start = Instant::now();
                for t in &samples {
                    engine.answer_tuple(t)?;
                }
                let query_us = start.elapsed().as_secs_f64() * 1e6 / samples.len() as f64;

                let mut handle = ix.enumerator();
                let mut outputs = 0u64;
                while handle.next().is_some() {
                    outputs += 1;
                }
                let steps = handle.steps() as f64 / (outputs + 1) as f64;
                println!("{n},{build_ms:.3},{query_us:.3},{steps:.3}");
            }
        }
    }
    Ok(())
}

fn join_or_dash(names: &[String]) -> String {
    if names.is_empty() {
        "-".to_string()
    } else {
        names.join(",")
    }
}
