//! Run configuration: a flat `[section]` / `key = value` text format.
//!
//! Values are numbers, booleans, bare or double-quoted strings, and bracketed
//! lists which may nest. `#` starts a comment. Unknown sections or keys and
//! duplicate keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::cylinder::CylinderGrid;
use crate::front::SolverOptions;
use crate::medium::{fnv1a, make_cubic_medium, Mode, ReactionModel};

/// One located problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError(pub Vec<ConfigIssue>);

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Medium,
    Front,
    Sweep,
    Derivative,
    Spread,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Medium, Stage::Front, Stage::Sweep, Stage::Derivative, Stage::Spread, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Medium => "medium",
            Stage::Front => "front",
            Stage::Sweep => "sweep",
            Stage::Derivative => "derivative",
            Stage::Spread => "spread",
            Stage::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediumConfig {
    pub dim: usize,
    pub theta0: f64,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderConfig {
    pub half_length: f64,
    pub n_xi: usize,
    pub n_y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxConfig {
    pub half_width: f64,
    pub n: usize,
    /// `None` selects the default step rule.
    pub dt: Option<f64>,
}

/// Expanding bubble `v_R` (`level` = β) or shrinking bubble `ω_R` (`level` = α).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BubbleKind {
    Expanding,
    Shrinking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub kind: BubbleKind,
    pub radius: f64,
    pub level: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadConfig {
    pub experiments: Vec<Experiment>,
    pub record_every: f64,
    pub rays: usize,
    pub level: f64,
    pub window: Option<(f64, f64)>,
    pub verdict: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub eps: f64,
    pub subsolution: bool,
    pub supersolution: bool,
    pub tail: bool,
    pub controls: bool,
    pub dx: f64,
    pub beta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub medium: MediumConfig,
    pub cylinder: CylinderConfig,
    pub solver: SolverOptions,
    pub direction: Vec<f64>,
    pub n_angles: usize,
    pub box_grid: BoxConfig,
    pub spread: SpreadConfig,
    pub verify: VerifyConfig,
    pub output_dir: PathBuf,
    pub front_files: bool,
    pub stages: Vec<Stage>,
    /// FNV-1a hash of the configuration text.
    pub hash: u64,
}

impl RunConfig {
    pub fn model(&self) -> Result<ReactionModel, crate::medium::MediumError> {
        make_cubic_medium(self.medium.dim, self.medium.theta0, self.medium.modes.clone())
    }

    pub fn cylinder_grid(&self) -> Result<CylinderGrid, crate::cylinder::CylinderError> {
        CylinderGrid::new(self.cylinder.half_length, self.cylinder.n_xi, self.cylinder.n_y, self.medium.dim)
    }

    pub fn wants(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("medium", &["dim", "theta0", "modes"]),
    ("cylinder", &["L", "n_xi", "n_y"]),
    ("solver", &["tol", "max_iter", "min_step", "krylov_rtol", "krylov_restart", "refactor_after", "stale_limit", "force"]),
    ("front", &["direction"]),
    ("sweep", &["n_angles"]),
    ("box", &["half_width", "n", "dt"]),
    ("spread", &["bubbles", "shrinking", "record_every", "rays", "level", "window", "verdict", "tol"]),
    ("verify", &["eps", "subsolution", "supersolution", "tail", "controls", "dx", "beta", "alpha"]),
    ("output", &["dir", "front_files"]),
    ("run", &["stages"]),
];

struct Entry {
    value: Value,
    line: usize,
}

type Table = BTreeMap<(String, String), Entry>;

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self { chars: text.char_indices().peekable(), text }
    }

    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn value(&mut self) -> Result<Value, String> {
        self.skip_ws();
        match self.chars.peek().copied() {
            None => Err("missing value".into()),
            Some((_, '[')) => {
                self.chars.next();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if let Some((_, ']')) = self.chars.peek() {
                        self.chars.next();
                        return Ok(Value::List(items));
                    }
                    items.push(self.value()?);
                    self.skip_ws();
                    match self.chars.next() {
                        Some((_, ',')) => continue,
                        Some((_, ']')) => return Ok(Value::List(items)),
                        Some((_, c)) => return Err(format!("expected ',' or ']' in list, found '{c}'")),
                        None => return Err("unterminated list".into()),
                    }
                }
            }
            Some((_, '"')) => {
                self.chars.next();
                let mut s = String::new();
                for (_, c) in self.chars.by_ref() {
                    if c == '"' {
                        return Ok(Value::Str(s));
                    }
                    s.push(c);
                }
                Err("unterminated string".into())
            }
            Some((start, _)) => {
                let mut end = self.text.len();
                while let Some(&(i, c)) = self.chars.peek() {
                    if c == ',' || c == ']' || c.is_whitespace() {
                        end = i;
                        break;
                    }
                    self.chars.next();
                }
                let word = &self.text[start..end];
                Ok(match word {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => match word.parse::<f64>() {
                        Ok(v) => Value::Num(v),
                        Err(_) => Value::Str(word.to_string()),
                    },
                })
            }
        }
    }
}

fn parse_value(text: &str) -> Result<Value, String> {
    let mut lx = Lexer::new(text);
    let v = lx.value()?;
    lx.skip_ws();
    if let Some((_, c)) = lx.chars.next() {
        return Err(format!("unexpected '{c}' after value"));
    }
    Ok(v)
}

/// Strips a `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn tokenize(text: &str) -> Result<Table, ConfigError> {
    let mut issues = Vec::new();
    let mut table = Table::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                issues.push(ConfigIssue { line: Some(line_no), message: "section header missing ']'".into() });
                continue;
            };
            let name = name.trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                issues.push(ConfigIssue { line: Some(line_no), message: format!("unknown section [{name}]") });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ConfigIssue { line: Some(line_no), message: format!("expected 'key = value', found '{line}'") });
            continue;
        };
        let key = key.trim();
        let Some(sec) = section.clone() else {
            issues.push(ConfigIssue { line: Some(line_no), message: format!("key '{key}' appears before any section") });
            continue;
        };
        if let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| *s == sec) {
            if !keys.contains(&key) {
                issues.push(ConfigIssue { line: Some(line_no), message: format!("unknown key '{key}' in [{sec}]") });
                continue;
            }
        } else {
            continue;
        }
        match parse_value(value.trim()) {
            Ok(v) => {
                let slot = (sec.clone(), key.to_string());
                if let Some(prev) = table.get(&slot) {
                    issues.push(ConfigIssue {
                        line: Some(line_no),
                        message: format!("duplicate key '{key}' in [{sec}] (lines {} and {line_no})", prev.line),
                    });
                } else {
                    table.insert(slot, Entry { value: v, line: line_no });
                }
            }
            Err(msg) => issues.push(ConfigIssue { line: Some(line_no), message: format!("{key}: {msg}") }),
        }
    }
    if issues.is_empty() {
        Ok(table)
    } else {
        Err(ConfigError(issues))
    }
}

/// Typed access to the token table that collects every problem.
struct Reader {
    table: Table,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn entry(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.table.get(&(sec.to_string(), key.to_string()))
    }

    fn line(&self, sec: &str, key: &str) -> Option<usize> {
        self.entry(sec, key).map(|e| e.line)
    }

    fn fail(&mut self, sec: &str, key: &str, message: String) {
        let line = self.line(sec, key);
        self.issues.push(ConfigIssue { line, message });
    }

    fn num(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        match self.entry(sec, key).map(|e| e.value.clone()) {
            None => default,
            Some(Value::Num(v)) => v,
            Some(other) => {
                self.fail(sec, key, format!("{sec}.{key} must be a number, got {other:?}"));
                default
            }
        }
    }

    fn opt_num(&mut self, sec: &str, key: &str) -> Option<f64> {
        self.entry(sec, key)?;
        Some(self.num(sec, key, f64::NAN))
    }

    fn count(&mut self, sec: &str, key: &str, default: usize) -> usize {
        let v = self.num(sec, key, default as f64);
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            self.fail(sec, key, format!("{sec}.{key} must be a non-negative integer, got {v}"));
            return default;
        }
        v as usize
    }

    fn flag(&mut self, sec: &str, key: &str, default: bool) -> bool {
        match self.entry(sec, key).map(|e| e.value.clone()) {
            None => default,
            Some(Value::Bool(b)) => b,
            Some(other) => {
                self.fail(sec, key, format!("{sec}.{key} must be true or false, got {other:?}"));
                default
            }
        }
    }

    fn text(&mut self, sec: &str, key: &str, default: &str) -> String {
        match self.entry(sec, key).map(|e| e.value.clone()) {
            None => default.to_string(),
            Some(Value::Str(s)) => s,
            Some(other) => {
                self.fail(sec, key, format!("{sec}.{key} must be a string, got {other:?}"));
                default.to_string()
            }
        }
    }

    fn numbers(&mut self, sec: &str, key: &str) -> Option<Vec<f64>> {
        match self.entry(sec, key).map(|e| e.value.clone())? {
            Value::List(items) => {
                let nums: Option<Vec<f64>> = items
                    .iter()
                    .map(|v| match v {
                        Value::Num(x) => Some(*x),
                        _ => None,
                    })
                    .collect();
                if nums.is_none() {
                    self.fail(sec, key, format!("{sec}.{key} must be a list of numbers"));
                }
                nums
            }
            other => {
                self.fail(sec, key, format!("{sec}.{key} must be a list, got {other:?}"));
                None
            }
        }
    }

    fn rows(&mut self, sec: &str, key: &str, width: Option<usize>) -> Vec<Vec<f64>> {
        let Some(v) = self.entry(sec, key).map(|e| e.value.clone()) else { return vec![] };
        let Value::List(items) = v else {
            self.fail(sec, key, format!("{sec}.{key} must be a list of lists"));
            return vec![];
        };
        let mut out = Vec::new();
        for item in items {
            let row: Option<Vec<f64>> = match &item {
                Value::List(xs) => xs
                    .iter()
                    .map(|x| match x {
                        Value::Num(v) => Some(*v),
                        _ => None,
                    })
                    .collect(),
                _ => None,
            };
            match row {
                Some(r) if width.is_none_or(|w| r.len() == w) => out.push(r),
                _ => {
                    let want = width.map(|w| format!(" of {w} numbers")).unwrap_or_default();
                    self.fail(sec, key, format!("{sec}.{key}: every entry must be a list{want}"));
                    return vec![];
                }
            }
        }
        out
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Parses a configuration, replacing its stage list by `stages` plus the
/// stages they depend on under this configuration.
/// With `None` the `[run] stages` list is used as written.
pub fn parse_config_for(text: &str, only: Option<&[Stage]>) -> Result<RunConfig, ConfigError> {
    let table = tokenize(text)?;
    let mut rd = Reader { table, issues: Vec::new() };

    // medium
    let dim = rd.count("medium", "dim", 1);
    let theta0 = rd.num("medium", "theta0", f64::NAN);
    if rd.entry("medium", "theta0").is_none() {
        rd.issues.push(ConfigIssue { line: None, message: "[medium] theta0 is required".into() });
    }
    let mut modes = Vec::new();
    for row in rd.rows("medium", "modes", None) {
        if row.len() != dim + 2 {
            rd.fail("medium", "modes", format!("mode {row:?} needs {dim} wave numbers, an amplitude and a phase"));
            continue;
        }
        if row[..dim].iter().any(|k| k.fract() != 0.0) {
            rd.fail("medium", "modes", format!("mode {row:?} has non-integer wave numbers"));
            continue;
        }
        modes.push(Mode { k: row[..dim].iter().map(|&k| k as i32).collect(), amp: row[dim], phase: row[dim + 1] });
    }
    let medium = MediumConfig { dim, theta0, modes };

    // cylinder
    let heterogeneous = medium.modes.iter().any(|m| m.amp != 0.0);
    let cylinder = CylinderConfig {
        half_length: rd.num("cylinder", "L", 40.0),
        n_xi: rd.count("cylinder", "n_xi", 2048),
        n_y: rd.count("cylinder", "n_y", if heterogeneous { 16 } else { 1 }),
    };

    // solver
    let d = SolverOptions::default();
    let solver = SolverOptions {
        tol: rd.num("solver", "tol", d.tol),
        max_iter: rd.count("solver", "max_iter", d.max_iter),
        min_step: rd.num("solver", "min_step", d.min_step),
        krylov_rtol: rd.num("solver", "krylov_rtol", d.krylov_rtol),
        krylov_restart: rd.count("solver", "krylov_restart", d.krylov_restart),
        refactor_after: rd.count("solver", "refactor_after", d.refactor_after),
        stale_limit: rd.count("solver", "stale_limit", d.stale_limit),
        force: rd.flag("solver", "force", d.force),
    };

    let mut direction = rd.numbers("front", "direction").unwrap_or_else(|| {
        let mut e = vec![0.0; dim.max(1)];
        e[0] = 1.0;
        e
    });
    if direction.len() != dim {
        rd.fail("front", "direction", format!("direction needs {dim} components, got {}", direction.len()));
    } else {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            rd.fail("front", "direction", "direction must be nonzero".into());
        } else {
            direction.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let n_angles = rd.count("sweep", "n_angles", 64);

    let box_grid = BoxConfig {
        half_width: rd.num("box", "half_width", 36.0),
        n: rd.count("box", "n", 512),
        dt: rd.opt_num("box", "dt"),
    };

    // spread
    let mut experiments = Vec::new();
    for (key, kind) in [("bubbles", BubbleKind::Expanding), ("shrinking", BubbleKind::Shrinking)] {
        for row in rd.rows("spread", key, Some(3)) {
            experiments.push(Experiment { kind, radius: row[0], level: row[1], t_end: row[2] });
        }
    }
    let window = match rd.numbers("spread", "window") {
        Some(w) if w.len() == 2 => Some((w[0], w[1])),
        Some(w) => {
            rd.fail("spread", "window", format!("window needs two times, got {}", w.len()));
            None
        }
        None => None,
    };
    let spread = SpreadConfig {
        experiments,
        record_every: rd.num("spread", "record_every", 0.5),
        rays: rd.count("spread", "rays", 64),
        level: rd.num("spread", "level", 0.5),
        window,
        verdict: rd.flag("spread", "verdict", false),
        tol: rd.num("spread", "tol", 0.02),
    };

    let verify = VerifyConfig {
        eps: rd.num("verify", "eps", 0.1),
        subsolution: rd.flag("verify", "subsolution", true),
        supersolution: rd.flag("verify", "supersolution", true),
        tail: rd.flag("verify", "tail", true),
        controls: rd.flag("verify", "controls", true),
        dx: rd.num("verify", "dx", 0.05),
        beta: rd.num("verify", "beta", 0.8),
        alpha: rd.num("verify", "alpha", 0.1),
    };

    let output_dir = PathBuf::from(rd.text("output", "dir", "pfront-out"));
    let front_files = rd.flag("output", "front_files", true);

    let stages = match rd.entry("run", "stages").map(|e| e.value.clone()) {
        None => vec![Stage::Medium],
        Some(Value::List(items)) => {
            let mut out = Vec::new();
            for it in items {
                match &it {
                    Value::Str(s) => match Stage::parse(s) {
                        Some(st) if !out.contains(&st) => out.push(st),
                        Some(_) => rd.fail("run", "stages", format!("stage '{s}' listed twice")),
                        None => rd.fail("run", "stages", format!("unknown stage '{s}'")),
                    },
                    other => rd.fail("run", "stages", format!("stage names must be strings, got {other:?}")),
                }
            }
            out.sort();
            out
        }
        Some(other) => {
            rd.fail("run", "stages", format!("run.stages must be a list, got {other:?}"));
            vec![]
        }
    };

    let mut cfg = RunConfig {
        medium,
        cylinder,
        solver,
        direction,
        n_angles,
        box_grid,
        spread,
        verify,
        output_dir,
        front_files,
        stages,
        hash: fnv1a(text.as_bytes()),
    };
    if let Some(requested) = only {
        cfg.stages = with_dependencies(&cfg, requested);
    }
    validate(&mut rd, &mut cfg);
    if rd.issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError(rd.issues))
    }
}

/// `requested` closed under the declared stage dependencies, sorted.
fn with_dependencies(cfg: &RunConfig, requested: &[Stage]) -> Vec<Stage> {
    let mut out: Vec<Stage> = requested.to_vec();
    let has = |s: Stage| requested.contains(&s);
    let barriers = cfg.verify.subsolution || cfg.verify.supersolution;
    let needs_sweep = has(Stage::Derivative)
        || (has(Stage::Spread) && cfg.spread.verdict)
        || (has(Stage::Verify) && (barriers || cfg.verify.tail));
    if needs_sweep {
        out.push(Stage::Sweep);
    }
    out.sort();
    out.dedup();
    out
}

fn validate(rd: &mut Reader, cfg: &mut RunConfig) {
    let model = match cfg.model() {
        Ok(m) => Some(m),
        Err(e) => {
            let line = rd.line("medium", "theta0").or(rd.line("medium", "modes"));
            rd.issues.push(ConfigIssue { line, message: format!("medium: {e}") });
            None
        }
    };
    if let Err(e) = cfg.cylinder_grid() {
        let line = rd.line("cylinder", "n_xi").or(rd.line("cylinder", "L"));
        rd.issues.push(ConfigIssue { line, message: format!("cylinder: {e}") });
    }
    if let Err(e) = crate::cauchy::BoxGrid::new(cfg.box_grid.half_width, cfg.box_grid.n, cfg.medium.dim) {
        rd.fail("box", "n", format!("box: {e}"));
    }
    if cfg.box_grid.dt.is_some_and(|dt| !(dt > 0.0)) {
        rd.fail("box", "dt", "box.dt must be positive".into());
    }
    if let Some(model) = &model {
        let (tmin, tmax) = (model.theta_min, model.theta_max);
        for ex in &cfg.spread.experiments {
            match ex.kind {
                BubbleKind::Shrinking if !(ex.level > 0.0 && ex.level < tmin) => rd.fail(
                    "spread",
                    "shrinking",
                    format!("alpha = {} violates 0 < α < inf θ_x = {tmin:.6}", ex.level),
                ),
                BubbleKind::Expanding if !(ex.level > tmax && ex.level < 1.0) => rd.fail(
                    "spread",
                    "bubbles",
                    format!("beta = {} violates sup θ_x = {tmax:.6} < β < 1", ex.level),
                ),
                _ => {}
            }
            if !(ex.radius > 0.0 && ex.t_end > 0.0) {
                rd.fail("spread", "bubbles", format!("experiment {ex:?} needs positive radius and end time"));
            }
        }
        if cfg.wants(Stage::Verify) {
            if cfg.verify.supersolution && !(cfg.verify.alpha > 0.0 && cfg.verify.alpha < tmin) {
                rd.fail("verify", "alpha", format!("alpha = {} violates 0 < α < inf θ_x = {tmin:.6}", cfg.verify.alpha));
            }
            if cfg.verify.subsolution && !(cfg.verify.beta > tmax && cfg.verify.beta < 1.0) {
                rd.fail("verify", "beta", format!("beta = {} violates sup θ_x = {tmax:.6} < β < 1", cfg.verify.beta));
            }
        }
    }
    if !(cfg.verify.eps > 0.0) {
        rd.fail("verify", "eps", "verify.eps must be positive".into());
    }
    if !(cfg.spread.level > 0.0 && cfg.spread.level < 1.0) {
        rd.fail("spread", "level", "spread.level must lie in (0, 1)".into());
    }
    if !(cfg.spread.record_every > 0.0) {
        rd.fail("spread", "record_every", "spread.record_every must be positive".into());
    }
    if let Some((a, b)) = cfg.spread.window {
        if !(a >= 0.0 && b > a) {
            rd.fail("spread", "window", format!("window [{a}, {b}] must satisfy 0 <= t1 < t2"));
        }
    }
    // declared stage dependencies
    let sweep_needed = [
        (cfg.wants(Stage::Derivative), "derivative stage"),
        (cfg.wants(Stage::Spread) && cfg.spread.verdict, "spread verdict"),
        (cfg.wants(Stage::Verify) && (cfg.verify.subsolution || cfg.verify.supersolution), "barrier verification"),
    ];
    for (needed, what) in sweep_needed {
        if needed && !cfg.wants(Stage::Sweep) {
            let line = rd.line("run", "stages");
            rd.issues.push(ConfigIssue { line, message: format!("{what} requires the sweep stage") });
        }
    }
    if cfg.wants(Stage::Verify) && cfg.verify.tail && !(cfg.wants(Stage::Sweep) || cfg.wants(Stage::Front)) {
        let line = rd.line("run", "stages");
        rd.issues.push(ConfigIssue { line, message: "exp-tail check requires the front or sweep stage".into() });
    }
    if cfg.wants(Stage::Spread) && cfg.spread.experiments.is_empty() {
        rd.fail("spread", "bubbles", "spread stage requested without experiments".into());
    }
    if cfg.wants(Stage::Spread) && cfg.spread.verdict && cfg.spread.window.is_none() {
        rd.fail("spread", "verdict", "spread verdict needs a measurement window".into());
    }
    let planar_needed = cfg.wants(Stage::Sweep) || cfg.wants(Stage::Spread) || cfg.wants(Stage::Verify);
    if planar_needed && cfg.medium.dim != 2 {
        rd.fail("medium", "dim", "sweep, spread and verify stages need dim = 2".into());
    }
    if cfg.wants(Stage::Sweep) && cfg.n_angles < 4 {
        rd.fail("sweep", "n_angles", format!("n_angles = {} is below 4", cfg.n_angles));
    }
    if cfg.wants(Stage::Verify) && (cfg.verify.subsolution || cfg.verify.supersolution) && cfg.n_angles < 32 {
        rd.fail("sweep", "n_angles", "barrier verification needs at least 32 angles".into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("[medium]\ndim = 1\ntheta0 = 0.3\n").unwrap();
        assert_eq!(cfg.cylinder.half_length, 40.0);
        assert_eq!(cfg.cylinder.n_xi, 2048);
        assert_eq!(cfg.cylinder.n_y, 1);
        assert_eq!(cfg.stages, vec![Stage::Medium]);
        assert_eq!(cfg.direction, vec![1.0]);
    }

    #[test]
    fn alpha_ordering_is_semantic_error() {
        let text = "[medium]\ndim = 2\ntheta0 = 0.3\n[spread]\nshrinking = [[20, 0.3, 10]]\n[run]\nstages = [spread]\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("α < inf θ_x"), "{msg}");
        assert!(msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let err = parse_config("[medium]\ntheta0 = 0.3\ndim = 1\ntheta0 = 0.25\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate key 'theta0'") && msg.contains("lines 2 and 4"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_config("[medium]\ntheta0 = 0.3\nthis line is wrong\n[cylinder\n").unwrap_err();
        assert_eq!(err.0.len(), 2);
        assert_eq!(err.0[0].line, Some(3));
        assert_eq!(err.0[1].line, Some(4));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let err = parse_config("[medium]\ntheta0 = 0.3\nthetta = 1\n[mediun]\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key 'thetta'") && msg.contains("unknown section [mediun]"), "{msg}");
    }

    #[test]
    fn verdict_without_sweep_is_rejected() {
        let text = "[medium]\ndim = 2\ntheta0 = 0.3\n[spread]\nbubbles = [[12, 0.8, 60]]\nwindow = [30, 60]\nverdict = true\n[run]\nstages = [spread]\n";
        let msg = parse_config(text).unwrap_err().to_string();
        assert!(msg.contains("spread verdict requires the sweep stage"), "{msg}");
        let closed = parse_config_for(text, Some(&[Stage::Spread])).unwrap();
        assert_eq!(closed.stages, vec![Stage::Sweep, Stage::Spread]);
        let ok = text.replace("stages = [spread]", "stages = [sweep, spread]");
        assert!(parse_config(&ok).is_ok());
    }

    #[test]
    fn modes_and_lists_parse() {
        let text = "# item medium\n[medium]\ndim = 2\ntheta0 = 0.3\nmodes = [[1, 0, 0.08, 0], [0, 1, 0.05, 0.0]]  # two modes\n[front]\ndirection = [3, 4]\n[output]\ndir = \"out # here\"\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.medium.modes.len(), 2);
        assert_eq!(cfg.medium.modes[1].k, vec![0, 1]);
        assert_eq!(cfg.cylinder.n_y, 16);
        assert_eq!(cfg.direction, vec![0.6, 0.8]);
        assert_eq!(cfg.output_dir, PathBuf::from("out # here"));
        assert_eq!(cfg.hash, fnv1a(text.as_bytes()));
    }

    #[test]
    fn mode_width_is_checked() {
        let msg = parse_config("[medium]\ndim = 2\ntheta0 = 0.3\nmodes = [[1, 0.08, 0]]\n").unwrap_err().to_string();
        assert!(msg.contains("needs 2 wave numbers"), "{msg}");
    }
}
