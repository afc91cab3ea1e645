//! Command-line front end: flag parsing, configuration merging, and the
//! process entry point used by the `whitney` binary.

pub mod checks;
pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

pub use checks::{CheckResult, Relation};
pub use config::{parse_config, Command, RunConfig};
pub use run::{run, write_outputs, RunOutcome, Status};

use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "whitney", version, about = "Certify Lagrangian immersions against the Whitney-sphere gap criterion")]
pub struct Cli {
    /// TOML configuration; its keys override any flags given alongside it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Full pointwise and grid analysis with per-check verdicts.
    Analyze(GeomArgs),
    /// Gap verdict only, from pointwise invariants.
    GapCheck(GeomArgs),
    /// Commutator inequality on seeded random families.
    Lili(LiliArgs),
    /// Hill-climb search for near-equality families.
    LiliSearch(SearchArgs),
}

#[derive(Args, Debug, Default)]
pub struct GeomArgs {
    /// whitney-cn, whitney-cpn, flat-torus, flat-plane or perturbed.
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long)]
    pub n: Option<i64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub radii: Option<Vec<f64>>,
    /// Center of a Whitney sphere in C^n, as 2n comma-separated reals.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    /// Base example of a perturbation.
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Perturbation seed.
    #[arg(long)]
    pub seed: Option<i64>,
    /// Perturb by a generic displacement instead of a symplectic flow.
    #[arg(long)]
    pub non_lagrangian: bool,
    #[arg(long)]
    pub resolution: Option<i64>,
    /// exact or fd.
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub stencil_order: Option<i64>,
    /// Output directory.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Skip the per-point table.
    #[arg(long)]
    pub no_points: bool,
}

#[derive(Args, Debug, Default)]
pub struct LiliArgs {
    #[arg(long)]
    pub p: Option<i64>,
    #[arg(long)]
    pub dim: Option<i64>,
    #[arg(long)]
    pub trials: Option<i64>,
    #[arg(long)]
    pub seed: Option<i64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SearchArgs {
    #[arg(long)]
    pub p: Option<i64>,
    #[arg(long)]
    pub dim: Option<i64>,
    #[arg(long)]
    pub iters: Option<i64>,
    #[arg(long)]
    pub seed: Option<i64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn put<T: Into<Value>>(t: &mut Table, key: &str, v: Option<T>) {
    if let Some(v) = v {
        t.insert(key.into(), v.into());
    }
}

fn floats(v: Vec<f64>) -> Value {
    Value::Array(v.into_iter().map(Value::Float).collect())
}

fn path_value(p: PathBuf) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn example_table(a: &mut GeomArgs) -> Option<Table> {
    let kind = a.example.take()?;
    let mut params = Table::new();
    put(&mut params, "n", a.n.take());
    put(&mut params, "r", a.r.take());
    put(&mut params, "theta", a.theta.take());
    put(&mut params, "radii", a.radii.take().map(floats));
    put(&mut params, "center", a.center.take().map(floats));
    put(&mut params, "c", a.c.take());
    let mut ex = Table::new();
    if kind == "perturbed" {
        let mut base = params;
        base.insert("kind".into(), Value::String(a.base.take().unwrap_or_else(|| "whitney-cn".into())));
        ex.insert("kind".into(), Value::String(kind));
        ex.insert("base".into(), Value::Table(base));
        put(&mut ex, "amplitude", a.amplitude.take());
        put(&mut ex, "seed", a.seed.take());
        if a.non_lagrangian {
            ex.insert("lagrangian".into(), Value::Boolean(false));
        }
    } else {
        ex = params;
        ex.insert("kind".into(), Value::String(kind));
        // perturbation-only flags on a plain example surface as unknown keys
        put(&mut ex, "base", a.base.take());
        put(&mut ex, "amplitude", a.amplitude.take());
        put(&mut ex, "seed", a.seed.take());
        if a.non_lagrangian {
            ex.insert("lagrangian".into(), Value::Boolean(false));
        }
    }
    Some(ex)
}

/// Translates parsed flags into the configuration-table form.
pub fn flags_table(cmd: Option<Cmd>) -> Table {
    let mut t = Table::new();
    let Some(cmd) = cmd else { return t };
    let name = match &cmd {
        Cmd::Analyze(_) => "analyze",
        Cmd::GapCheck(_) => "gap-check",
        Cmd::Lili(_) => "lili",
        Cmd::LiliSearch(_) => "lili-search",
    };
    t.insert("command".into(), Value::String(name.into()));
    match cmd {
        Cmd::Analyze(mut a) | Cmd::GapCheck(mut a) => {
            if let Some(ex) = example_table(&mut a) {
                t.insert("example".into(), Value::Table(ex));
            }
            put(&mut t, "resolution", a.resolution);
            put(&mut t, "engine", a.engine);
            put(&mut t, "stencil_order", a.stencil_order);
            put(&mut t, "out", a.out.map(path_value));
            if a.no_points {
                t.insert("points".into(), Value::Boolean(false));
            }
        }
        Cmd::Lili(a) => {
            put(&mut t, "p", a.p);
            put(&mut t, "dim", a.dim);
            put(&mut t, "trials", a.trials);
            put(&mut t, "seed", a.seed);
            put(&mut t, "out", a.out.map(path_value));
        }
        Cmd::LiliSearch(a) => {
            put(&mut t, "p", a.p);
            put(&mut t, "dim", a.dim);
            put(&mut t, "iters", a.iters);
            put(&mut t, "seed", a.seed);
            put(&mut t, "out", a.out.map(path_value));
        }
    }
    t
}

/// Merges flags with an optional configuration file and validates.
pub fn resolve_config(cli: Cli) -> Result<RunConfig> {
    let mut table = flags_table(cli.command);
    if let Some(path) = cli.config {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.to_string().trim())))?;
        table = config::overlay(table, file);
    }
    if !table.contains_key("command") {
        return Err(Error::Config(
            "command: give a subcommand (analyze, gap-check, lili, lili-search) or set it in --config".into(),
        ));
    }
    config::from_table(table)
}

fn format_value(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Number(x) => match x.as_f64() {
            Some(f) => format!("{f:.3e}"),
            None => x.to_string(),
        },
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => "n/a".into(),
        other => other.to_string(),
    }
}

/// Process entry point; returns the exit status.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { run::EXIT_CONFIG } else { run::EXIT_PASS };
        }
    };
    let cfg = match resolve_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return run::exit_code_for(&e);
        }
    };
    let outcome = run::run(&cfg);
    for c in &outcome.checks {
        let mark = if c.pass { "PASS" } else { "FAIL" };
        let rel = match c.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Equals => "==",
        };
        println!("{mark} {:<24} {} {rel} {}", c.name, format_value(&c.measured), format_value(&c.limit));
    }
    if let Some(ws) = outcome.report.pointer("/results/field/warnings").and_then(|w| w.as_array()) {
        for w in ws {
            eprintln!("warning: {}", w.as_str().unwrap_or_default());
        }
    }
    if let Some(e) = outcome.report.get("error") {
        eprintln!("error: {}", e["message"].as_str().unwrap_or("unknown"));
    }
    let dir = run::output_dir(&cfg);
    match write_outputs(&outcome, &dir) {
        Ok(_) => println!("status: {} ({})", format_value(&serde_json::json!(outcome.status)), dir.display()),
        Err(e) => {
            eprintln!("error: cannot write outputs to {}: {e}", dir.display());
            return run::EXIT_INTERNAL;
        }
    }
    outcome.exit_code
}
