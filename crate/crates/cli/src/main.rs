use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde_json::json;
use sparql_uo::executor::{run_query, ExecOptions, Mode};
use sparql_uo::sparql::{parse_query, Projection, Variable};
use sparql_uo::Store;

/// Run SPARQL queries with UNION and OPTIONAL over an N-Triples file.
#[derive(Debug, Parser)]
#[command(name = "sparql-uo", version)]
struct Args {
    /// N-Triples data file
    #[arg(long)]
    data: PathBuf,

    /// Query file; repeat to run several queries against one store
    #[arg(long = "query", required = true)]
    queries: Vec<PathBuf>,

    /// base, tt (transformations), cp (candidate pruning) or full
    #[arg(long, default_value = "base")]
    mode: Mode,

    /// Fraction of the store size under which candidate sets are passed down
    #[arg(long, default_value_t = 0.01, value_parser = ratio)]
    cp_threshold: f64,

    /// Print the plan before and after transformation
    #[arg(long)]
    explain: bool,

    /// Print one JSON line of statistics per query
    #[arg(long)]
    stats: bool,

    /// Seed for cardinality sampling
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Per-query time limit in microseconds
    #[arg(long, default_value_t = 2_000_000)]
    timeout_us: u64,

    /// Evaluate queries concurrently
    #[arg(long)]
    parallel: bool,
}

fn ratio(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(format!("{r} is not in (0, 1]"))
    }
}

fn load(path: &Path) -> Result<Store> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Store::load_ntriples(BufReader::new(file))
        .with_context(|| format!("loading {}", path.display()))
}

fn run_one(store: &Store, path: &Path, args: &Args, opts: &ExecOptions) -> Result<String> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let query = parse_query(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let run =
        run_query(store, &query, opts).with_context(|| format!("running {}", path.display()))?;

    let mut out = String::new();
    if args.explain {
        writeln!(out, "# plan {}", path.display())?;
        out.push_str(&run.before.explain());
        writeln!(out, "# transformations: {}", run.transformations.len())?;
        for record in &run.transformations {
            writeln!(out, "{record}")?;
        }
        writeln!(out, "# transformed plan")?;
        out.push_str(&run.after.explain());
    }

    let vars: Vec<Variable> = match &query.projection {
        Projection::Vars(v) => v.clone(),
        Projection::All => run.before.root.variables().into_iter().collect(),
    };
    let header: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
    writeln!(out, "{}", header.join("\t"))?;
    for row in &run.bag {
        let fields: Vec<String> = vars
            .iter()
            .map(|v| {
                row.get(v)
                    .map(|id| store.decode(id).to_string())
                    .unwrap_or_default()
            })
            .collect();
        writeln!(out, "{}", fields.join("\t"))?;
    }

    if args.stats {
        let line = json!({
            "query": path.display().to_string(),
            "mode": format!("{:?}", opts.mode).to_lowercase(),
            "metrics": run.metrics,
            "transformations": run.transformations,
            "stats": run.stats,
        });
        writeln!(out, "{line}")?;
    }
    Ok(out)
}

fn run(args: &Args) -> Result<bool> {
    if !args.data.exists() {
        bail!("data file {} does not exist", args.data.display());
    }
    let store = load(&args.data)?;
    let opts = ExecOptions {
        mode: args.mode,
        fixed_ratio: args.cp_threshold,
        parallel: args.parallel,
        timeout: Some(Duration::from_micros(args.timeout_us)),
        seed: args.seed,
    };

    let results = evaluate_all(&store, args, &opts);
    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    let mut ok = true;
    for result in results {
        match result {
            Ok(text) => stdout.write_all(text.as_bytes())?,
            Err(e) => {
                ok = false;
                eprintln!("error: {e:#}");
            }
        }
    }
    stdout.flush()?;
    Ok(ok)
}

#[cfg(feature = "parallel")]
fn evaluate_all(store: &Store, args: &Args, opts: &ExecOptions) -> Vec<Result<String>> {
    use rayon::prelude::*;
    if args.parallel {
        return args
            .queries
            .par_iter()
            .map(|q| run_one(store, q, args, opts))
            .collect();
    }
    args.queries
        .iter()
        .map(|q| run_one(store, q, args, opts))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_all(store: &Store, args: &Args, opts: &ExecOptions) -> Vec<Result<String>> {
    args.queries
        .iter()
        .map(|q| run_one(store, q, args, opts))
        .collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
