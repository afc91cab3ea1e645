//! Run configuration: TOML files, command-line flags, strict key checking,
//! and default resolution.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::checks;
use crate::error::{Error, Result};
use crate::field::DEFAULT_STENCIL_ORDER;
use crate::gallery::ExampleSpec;
use crate::jets::Engine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Analyze,
    GapCheck,
    Lili,
    LiliSearch,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::GapCheck => "gap-check",
            Command::Lili => "lili",
            Command::LiliSearch => "lili-search",
        }
    }

    pub fn is_geometric(self) -> bool {
        matches!(self, Command::Analyze | Command::GapCheck)
    }
}

/// Parameters of the matrix commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MatrixParams {
    pub p: usize,
    pub dim: usize,
    /// Random families for `lili`, hill-climb steps per restart for
    /// `lili-search`.
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<ExampleSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    pub engine: Engine,
    pub stencil_order: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixParams>,
    /// Tolerance overrides; each is no looser than the default it replaces.
    pub tolerances: BTreeMap<String, f64>,
    pub points: bool,
    /// Output directory. Not echoed into reports so that runs differing only
    /// in destination produce identical reports.
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub const TOP_KEYS: &[&str] = &[
    "command",
    "example",
    "resolution",
    "engine",
    "stencil_order",
    "seed",
    "p",
    "dim",
    "trials",
    "iters",
    "out",
    "points",
    "tolerances",
];

pub const EXAMPLE_KINDS: &[&str] = &["whitney-cn", "whitney-cpn", "flat-torus", "flat-plane", "perturbed"];

fn example_keys(kind: &str) -> &'static [&'static str] {
    match kind {
        "whitney-cn" => &["kind", "n", "r", "center"],
        "whitney-cpn" => &["kind", "n", "theta", "c"],
        "flat-torus" => &["kind", "radii"],
        "flat-plane" => &["kind", "n"],
        "perturbed" => &["kind", "base", "amplitude", "seed", "lagrangian"],
        _ => &[],
    }
}

/// Closest candidate by edit distance, if it is plausibly a typo.
pub fn suggest<'a>(word: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(word, c), *c))
        .filter(|(d, c)| *d <= (c.len().max(word.len()) / 2).max(1))
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c)
}

fn unknown_key(key: &str, section: &str, candidates: &[&str]) -> Error {
    let place = if section.is_empty() { String::new() } else { format!(" in [{section}]") };
    let hint = suggest(key, candidates).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
    Error::Config(format!("unknown key `{key}`{place}{hint}"))
}

fn check_example_keys(t: &Table, section: &str) -> Result<()> {
    let kind = match t.get("kind") {
        Some(Value::String(k)) => k.as_str(),
        Some(_) => return Err(Error::Config(format!("{section}.kind: expected a string"))),
        None => return Err(Error::Config(format!("{section}.kind: missing example kind"))),
    };
    if !EXAMPLE_KINDS.contains(&kind) {
        let hint = suggest(kind, EXAMPLE_KINDS).map(|s| format!("; did you mean `{s}`?")).unwrap_or_default();
        return Err(Error::Config(format!(
            "{section}.kind: unknown example `{kind}` (expected one of {}){hint}",
            EXAMPLE_KINDS.join(", ")
        )));
    }
    let keys = example_keys(kind);
    for k in t.keys() {
        if !keys.contains(&k.as_str()) {
            return Err(unknown_key(k, section, keys));
        }
    }
    if kind == "perturbed" {
        match t.get("base") {
            Some(Value::Table(b)) => check_example_keys(b, &format!("{section}.base"))?,
            Some(_) => return Err(Error::Config(format!("{section}.base: expected a table"))),
            None => {}
        }
    }
    Ok(())
}

/// Rejects keys outside the schema, suggesting the nearest valid one.
pub fn check_keys(t: &Table) -> Result<()> {
    for k in t.keys() {
        if !TOP_KEYS.contains(&k.as_str()) {
            return Err(unknown_key(k, "", TOP_KEYS));
        }
    }
    if let Some(ex) = t.get("example") {
        match ex {
            Value::Table(e) => check_example_keys(e, "example")?,
            _ => return Err(Error::Config("example: expected a table".into())),
        }
    }
    if let Some(tol) = t.get("tolerances") {
        let Value::Table(tol) = tol else {
            return Err(Error::Config("tolerances: expected a table".into()));
        };
        for k in tol.keys() {
            if !checks::TOLERANCE_NAMES.contains(&k.as_str()) {
                return Err(unknown_key(k, "tolerances", checks::TOLERANCE_NAMES));
            }
        }
    }
    Ok(())
}

/// Fills omitted example parameters with the gallery defaults.
fn fill_example_defaults(t: &mut Table) {
    let kind = t.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut default = |k: &str, v: Value| {
        t.entry(k.to_string()).or_insert(v);
    };
    match kind.as_str() {
        "whitney-cn" => {
            default("n", Value::Integer(2));
            default("r", Value::Float(1.0));
        }
        "whitney-cpn" => {
            default("n", Value::Integer(2));
            default("theta", Value::Float(1.0));
        }
        "flat-torus" => default("radii", Value::Array(vec![Value::Float(1.0), Value::Float(1.0)])),
        "flat-plane" => default("n", Value::Integer(2)),
        "perturbed" => {
            default("amplitude", Value::Float(0.05));
            default("seed", Value::Integer(0));
            let mut base = Table::new();
            base.insert("kind".into(), Value::String("whitney-cn".into()));
            default("base", Value::Table(base));
        }
        _ => {}
    }
    if let Some(Value::Table(b)) = t.get_mut("base") {
        fill_example_defaults(b);
    }
}

/// Resolution used when none is configured: dense enough for the
/// grid-difference checks at n <= 3, and bounded memory above that.
pub fn default_resolution(n: usize) -> usize {
    match n {
        0..=3 => 64,
        4 => 16,
        _ => 10,
    }
}

struct RawConfig {
    command: Command,
    example: Option<ExampleSpec>,
    resolution: Option<usize>,
    engine: Option<Engine>,
    stencil_order: Option<usize>,
    seed: Option<u64>,
    p: Option<usize>,
    dim: Option<usize>,
    trials: Option<usize>,
    iters: Option<usize>,
    out: Option<PathBuf>,
    points: Option<bool>,
    tolerances: BTreeMap<String, f64>,
}

fn field<T: serde::de::DeserializeOwned>(t: &Table, key: &str) -> Result<Option<T>> {
    match t.get(key) {
        None => Ok(None),
        Some(v) => v
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {}", e.message().trim()))),
    }
}

/// Validates a configuration table and resolves defaults.
pub fn from_table(mut t: Table) -> Result<RunConfig> {
    check_keys(&t)?;
    if let Some(Value::Table(e)) = t.get_mut("example") {
        fill_example_defaults(e);
    }
    // field-by-field decoding names the offending key in errors
    let raw = RawConfig {
        command: field(&t, "command")?.ok_or_else(|| Error::Config("command: missing".into()))?,
        example: field(&t, "example")?,
        resolution: field(&t, "resolution")?,
        engine: field(&t, "engine")?,
        stencil_order: field(&t, "stencil_order")?,
        seed: field(&t, "seed")?,
        p: field(&t, "p")?,
        dim: field(&t, "dim")?,
        trials: field(&t, "trials")?,
        iters: field(&t, "iters")?,
        out: field(&t, "out")?,
        points: field(&t, "points")?,
        tolerances: field(&t, "tolerances")?.unwrap_or_default(),
    };
    resolve(raw)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let t: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
    from_table(t)
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let cmd = raw.command;
    let misplaced = |key: &str, present: bool| -> Result<()> {
        if present {
            Err(Error::Config(format!("{key}: not used by `{}`", cmd.name())))
        } else {
            Ok(())
        }
    };
    let mut cfg = RunConfig {
        command: cmd,
        example: None,
        resolution: None,
        engine: raw.engine.unwrap_or(Engine::Exact),
        stencil_order: raw.stencil_order.unwrap_or(DEFAULT_STENCIL_ORDER),
        seed: raw.seed.unwrap_or(0),
        matrix: None,
        tolerances: BTreeMap::new(),
        points: raw.points.unwrap_or(true),
        out: raw.out,
    };
    crate::field::stencil(cfg.stencil_order)?;
    if cmd.is_geometric() {
        for (k, v) in [("p", raw.p.is_some()), ("dim", raw.dim.is_some()), ("trials", raw.trials.is_some()), ("iters", raw.iters.is_some())] {
            misplaced(k, v)?;
        }
        let ex = raw.example.ok_or_else(|| Error::Config(format!("example: `{}` needs an example", cmd.name())))?;
        ex.validate()?;
        let res = raw.resolution.unwrap_or_else(|| default_resolution(ex.n()));
        if res < crate::field::grid::MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "resolution: need at least {} nodes per axis, got {res}",
                crate::field::grid::MIN_RESOLUTION
            )));
        }
        cfg.resolution = Some(res);
        cfg.example = Some(ex);
    } else {
        misplaced("example", raw.example.is_some())?;
        misplaced("resolution", raw.resolution.is_some())?;
        let (budget_key, budget, other) = match cmd {
            Command::Lili => ("trials", raw.trials.unwrap_or(10_000), ("iters", raw.iters.is_some())),
            _ => ("iters", raw.iters.unwrap_or(2_000), ("trials", raw.trials.is_some())),
        };
        misplaced(other.0, other.1)?;
        let m = MatrixParams { p: raw.p.unwrap_or(3), dim: raw.dim.unwrap_or(3), budget };
        if m.p < 2 {
            return Err(Error::Config(format!("p: need at least 2 matrices, got {}", m.p)));
        }
        if m.dim < 1 {
            return Err(Error::Config("dim: must be at least 1".into()));
        }
        if m.budget < 1 {
            return Err(Error::Config(format!("{budget_key}: must be at least 1")));
        }
        cfg.matrix = Some(m);
    }
    let plan = checks::plan(&cfg);
    for (name, &value) in &raw.tolerances {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("tolerances.{name}: must be finite and positive, got {value}")));
        }
        let default = checks::default_tolerance(&plan, name)
            .ok_or_else(|| Error::Config(format!("tolerances.{name}: no such check in this run")))?;
        if value > default {
            return Err(Error::Config(format!(
                "tolerances.{name}: may only be tightened (default {default:e}, got {value:e})"
            )));
        }
    }
    cfg.tolerances = raw.tolerances;
    Ok(cfg)
}

/// Overlays `top` onto `base`; keys present in `top` win outright.
pub fn overlay(mut base: Table, top: Table) -> Table {
    for (k, v) in top {
        base.insert(k, v);
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("command = \"analyze\"\n[example]\nkind = \"flat-torus\"\nradii = [1.0, 1.0]\n").unwrap();
        assert_eq!(cfg.example, Some(ExampleSpec::FlatTorus { radii: vec![1.0, 1.0] }));
        assert_eq!(cfg.resolution, Some(64));
        assert_eq!(cfg.engine, Engine::Exact);
        assert_eq!(cfg.stencil_order, DEFAULT_STENCIL_ORDER);
        assert!(cfg.points);
    }

    #[test]
    fn negative_radius_names_field() {
        let e = parse_config("command = \"analyze\"\n[example]\nkind = \"flat-torus\"\nradii = [1.0, -1.0]\n")
            .unwrap_err();
        assert!(e.to_string().contains("radii"), "{e}");
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let e = parse_config("command = \"analyze\"\n[example]\nkind = \"flat-torus\"\nradius = [1.0, 1.0]\n")
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("`radius`") && msg.contains("`radii`"), "{msg}");
        let e = parse_config("comand = \"lili\"\n").unwrap_err();
        assert!(e.to_string().contains("`command`"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse_config("command = \"analyze\"\nresolution = = 3\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn tolerances_only_tighten() {
        let base = "command = \"analyze\"\n[example]\nkind = \"whitney-cn\"\n[tolerances]\n";
        assert!(parse_config(&format!("{base}b_norm2 = 1e-12\n")).is_ok());
        let e = parse_config(&format!("{base}b_norm2 = 1e-3\n")).unwrap_err();
        assert!(e.to_string().contains("tightened"));
        assert!(parse_config(&format!("{base}b_norm = 1e-12\n")).unwrap_err().to_string().contains("b_norm2"));
        // torus-only check
        assert!(parse_config(&format!("{base}gap_ratio = 1e-9\n")).is_err());
    }

    #[test]
    fn command_specific_keys() {
        assert!(parse_config("command = \"lili\"\nresolution = 32\n").is_err());
        assert!(parse_config("command = \"lili\"\niters = 3\n").is_err());
        let cfg = parse_config("command = \"lili-search\"\np = 2\ndim = 2\niters = 50\n").unwrap();
        assert_eq!(cfg.matrix, Some(MatrixParams { p: 2, dim: 2, budget: 50 }));
        assert!(parse_config("command = \"gap-check\"\n").is_err());
    }

    #[test]
    fn engine_errors_name_the_key() {
        let e = parse_config("command = \"analyze\"\nengine = \"fast\"\n[example]\nkind = \"flat-plane\"\n")
            .unwrap_err();
        assert!(e.to_string().contains("engine"), "{e}");
    }

    #[test]
    fn hyperbolic_target_is_unsupported() {
        let e = parse_config("command = \"analyze\"\n[example]\nkind = \"whitney-cpn\"\nc = -1.0\n").unwrap_err();
        assert!(matches!(e, Error::UnsupportedAmbient(_)));
    }
}
