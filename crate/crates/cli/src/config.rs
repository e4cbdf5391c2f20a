//! Run configuration: TOML text with nested sections.
//!
//! ```toml
//! command = "simulate"
//! seed = 42
//!
//! [domain]
//! dim = 2
//! sphere_radius = 0.5
//! particle_radius = 0.075
//! container = "periodic"
//! sides = [6.0, 6.0]
//!
//! [model]
//! sphere_activity = 1.0
//! particle_activity = 2.0
//! ```
//!
//! Parsing collects every violation before failing. Unknown keys are
//! warnings, or errors in strict mode.

use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sample,
    Analyze,
    VerifyBounds,
    Equivalence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sample => "sample",
            Command::Analyze => "analyze",
            Command::VerifyBounds => "verify-bounds",
            Command::Equivalence => "equivalence",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Command::Simulate,
            Command::Sample,
            Command::Analyze,
            Command::VerifyBounds,
            Command::Equivalence,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContainerSpec {
    Open,
    Periodic { sides: Vec<f64> },
    Ball { radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainBlock {
    pub dim: usize,
    pub sphere_radius: f64,
    pub particle_radius: f64,
    pub sigma: f64,
    pub container: ContainerSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    TwoType,
    OneType,
    Penalised,
    Depletion,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoType => "two-type",
            ModelKind::OneType => "one-type",
            ModelKind::Penalised => "penalised",
            ModelKind::Depletion => "depletion",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [ModelKind::TwoType, ModelKind::OneType, ModelKind::Penalised, ModelKind::Depletion]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBlock {
    pub sphere_activity: f64,
    pub particle_activity: f64,
    pub kind: ModelKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorBlock {
    pub step: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub horizon: f64,
    pub sample_every: usize,
    /// Snapshot file with the initial state; drawn from the sampler if absent.
    pub initial: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerBlock {
    pub burn_in: u64,
    pub thin: u64,
    pub count: usize,
    pub chains: usize,
    pub batches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleBlock {
    pub radius: f64,
    pub eps: f64,
    pub replicas: usize,
    pub kappas: Vec<usize>,
    pub burn_in: u64,
    pub fast_delta: f64,
    pub fast_eps: f64,
    pub fast_paths: usize,
    pub fast_substeps: usize,
    /// Radius of the region checked for separation along a trajectory.
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyzeMode {
    Trajectory,
    Percolation,
    Packing,
}

impl AnalyzeMode {
    pub fn name(self) -> &'static str {
        match self {
            AnalyzeMode::Trajectory => "trajectory",
            AnalyzeMode::Percolation => "percolation",
            AnalyzeMode::Packing => "packing",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [AnalyzeMode::Trajectory, AnalyzeMode::Percolation, AnalyzeMode::Packing]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeBlock {
    pub mode: AnalyzeMode,
    /// Trajectory file for the trajectory mode.
    pub input: Option<String>,
    pub ladder: Vec<f64>,
    pub particle_activities: Vec<f64>,
    pub base_side: f64,
    pub multiples: Vec<usize>,
    /// Relative enlargement of the packing box beyond the lattice fit.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub output: String,
    pub domain: DomainBlock,
    pub model: ModelBlock,
    pub integrator: IntegratorBlock,
    pub sampler: SamplerBlock,
    pub schedule: ScheduleBlock,
    pub analyze: AnalyzeBlock,
}

/// All problems found in a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parsed configuration with any non-fatal warnings.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// Overrides applied on top of the file, before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

struct Reader {
    errors: Vec<String>,
    unknown: Vec<String>,
}

impl Reader {
    fn section<'a>(&mut self, root: &'a Table, name: &str) -> Option<&'a Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.errors.push(format!("[{name}] must be a table"));
                None
            }
        }
    }

    fn check_keys(&mut self, table: &Table, section: &str, allowed: &[&str]) {
        for k in table.keys() {
            if !allowed.contains(&k.as_str()) {
                let path = if section.is_empty() { k.clone() } else { format!("{section}.{k}") };
                self.unknown.push(format!("unknown key {path}"));
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, section: &str, key: &str, default: Option<f64>) -> f64 {
        match t.and_then(|t| t.get(key)) {
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            Some(_) => {
                self.errors.push(format!("{section}.{key} must be a number"));
                f64::NAN
            }
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("missing required key {section}.{key}"));
                f64::NAN
            }),
        }
    }

    fn uint(&mut self, t: Option<&Table>, section: &str, key: &str, default: Option<u64>) -> u64 {
        match t.and_then(|t| t.get(key)) {
            Some(Value::Integer(v)) if *v >= 0 => *v as u64,
            Some(_) => {
                self.errors.push(format!("{section}.{key} must be a non-negative integer"));
                0
            }
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("missing required key {section}.{key}"));
                0
            }),
        }
    }

    fn string(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<String> {
        match t.and_then(|t| t.get(key)) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.errors.push(format!("{section}.{key} must be a string"));
                None
            }
            None => None,
        }
    }

    fn floats(&mut self, t: Option<&Table>, section: &str, key: &str, default: Option<Vec<f64>>) -> Vec<f64> {
        match t.and_then(|t| t.get(key)) {
            Some(Value::Array(a)) => {
                let v: Option<Vec<f64>> = a
                    .iter()
                    .map(|x| match x {
                        Value::Float(f) => Some(*f),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                v.unwrap_or_else(|| {
                    self.errors.push(format!("{section}.{key} must be an array of numbers"));
                    Vec::new()
                })
            }
            Some(_) => {
                self.errors.push(format!("{section}.{key} must be an array of numbers"));
                Vec::new()
            }
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("missing required key {section}.{key}"));
                Vec::new()
            }),
        }
    }

    fn uints(&mut self, t: Option<&Table>, section: &str, key: &str, default: Vec<usize>) -> Vec<usize> {
        match t.and_then(|t| t.get(key)) {
            Some(Value::Array(a)) => {
                let v: Option<Vec<usize>> = a
                    .iter()
                    .map(|x| match x {
                        Value::Integer(i) if *i >= 0 => Some(*i as usize),
                        _ => None,
                    })
                    .collect();
                v.unwrap_or_else(|| {
                    self.errors.push(format!("{section}.{key} must be an array of non-negative integers"));
                    Vec::new()
                })
            }
            Some(_) => {
                self.errors.push(format!("{section}.{key} must be an array of non-negative integers"));
                Vec::new()
            }
            None => default,
        }
    }
}

const TOP_KEYS: &[&str] = &["command", "seed", "output", "domain", "model", "integrator", "sampler", "schedule", "analyze"];
const DOMAIN_KEYS: &[&str] = &["dim", "sphere_radius", "particle_radius", "sigma", "container", "sides", "radius"];
const MODEL_KEYS: &[&str] = &["sphere_activity", "particle_activity", "kind"];
const INTEGRATOR_KEYS: &[&str] = &["step", "max_sweeps", "tolerance", "horizon", "sample_every", "initial"];
const SAMPLER_KEYS: &[&str] = &["burn_in", "thin", "count", "chains", "batches"];
const SCHEDULE_KEYS: &[&str] = &[
    "radius",
    "eps",
    "replicas",
    "kappas",
    "burn_in",
    "fast_delta",
    "fast_eps",
    "fast_paths",
    "fast_substeps",
    "rho",
];
const ANALYZE_KEYS: &[&str] = &["mode", "input", "ladder", "particle_activities", "base_side", "multiples", "slack"];

fn seed_value(v: Option<&Value>, errors: &mut Vec<String>) -> Option<u64> {
    match v {
        Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(Value::String(s)) => s.parse().ok().or_else(|| {
            errors.push(format!("seed {s:?} is not an unsigned 64-bit integer"));
            None
        }),
        Some(_) => {
            errors.push("seed must be a non-negative integer".into());
            None
        }
        None => None,
    }
}

/// Parses and validates `text`. In strict mode unknown keys are errors.
pub fn parse_config(text: &str, strict: bool, overrides: &Overrides) -> Result<Parsed, ConfigErrors> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax error: {}", e.message())]))?;
    let mut r = Reader {
        errors: Vec::new(),
        unknown: Vec::new(),
    };
    r.check_keys(&root, "", TOP_KEYS);

    let command = match root.get("command") {
        Some(Value::String(s)) => Command::parse(s).or_else(|| {
            r.errors.push(format!(
                "unknown command {s:?} (expected simulate, sample, analyze, verify-bounds or equivalence)"
            ));
            None
        }),
        Some(_) => {
            r.errors.push("command must be a string".into());
            None
        }
        None => {
            r.errors.push("missing required key command".into());
            None
        }
    };
    let seed = seed_value(root.get("seed"), &mut r.errors);
    let seed = overrides.seed.or(seed);
    if seed.is_none() {
        r.errors.push("missing required key seed (set it in the file or pass --seed)".into());
    }
    let output = match &overrides.output {
        Some(p) => p.to_string_lossy().into_owned(),
        None => r.string(Some(&root), "", "output").unwrap_or_else(|| "out".into()),
    };

    let dom_t = r.section(&root, "domain");
    if dom_t.is_none() && !root.contains_key("domain") {
        r.errors.push("missing required section [domain]".into());
    }
    if let Some(t) = dom_t {
        r.check_keys(t, "domain", DOMAIN_KEYS);
    }
    let dim = r.uint(dom_t, "domain", "dim", if dom_t.is_some() { None } else { Some(2) }) as usize;
    let sphere_radius = r.float(dom_t, "domain", "sphere_radius", dom_t.is_none().then_some(0.5));
    let particle_radius = r.float(dom_t, "domain", "particle_radius", dom_t.is_none().then_some(0.075));
    let sigma = r.float(dom_t, "domain", "sigma", Some(1.0));
    let container = match r.string(dom_t, "domain", "container").as_deref() {
        Some("open") => ContainerSpec::Open,
        Some("periodic") => ContainerSpec::Periodic {
            sides: r.floats(dom_t, "domain", "sides", None),
        },
        Some("ball") => ContainerSpec::Ball {
            radius: r.float(dom_t, "domain", "radius", None),
        },
        Some(other) => {
            r.errors.push(format!("unknown container {other:?} (expected open, periodic or ball)"));
            ContainerSpec::Open
        }
        None => {
            if dom_t.is_some() {
                r.errors.push("missing required key domain.container".into());
            }
            ContainerSpec::Open
        }
    };

    let model_t = r.section(&root, "model");
    if model_t.is_none() && !root.contains_key("model") {
        r.errors.push("missing required section [model]".into());
    }
    if let Some(t) = model_t {
        r.check_keys(t, "model", MODEL_KEYS);
    }
    let sphere_activity = r.float(model_t, "model", "sphere_activity", model_t.is_none().then_some(0.0));
    let particle_activity = r.float(model_t, "model", "particle_activity", model_t.is_none().then_some(0.0));
    let kind = match r.string(model_t, "model", "kind") {
        Some(s) => ModelKind::parse(&s).unwrap_or_else(|| {
            r.errors.push(format!(
                "unknown model kind {s:?} (expected two-type, one-type, penalised or depletion)"
            ));
            ModelKind::TwoType
        }),
        None => ModelKind::TwoType,
    };

    let int_t = r.section(&root, "integrator");
    if let Some(t) = int_t {
        r.check_keys(t, "integrator", INTEGRATOR_KEYS);
    }
    let rs = if sphere_radius.is_finite() { sphere_radius } else { 0.5 };
    let integrator = IntegratorBlock {
        step: r.float(int_t, "integrator", "step", Some(1e-4 * rs * rs)),
        max_sweeps: r.uint(int_t, "integrator", "max_sweeps", Some(1000)) as usize,
        tolerance: r.float(int_t, "integrator", "tolerance", Some(1e-10 * rs)),
        horizon: r.float(int_t, "integrator", "horizon", Some(0.01)),
        sample_every: r.uint(int_t, "integrator", "sample_every", Some(10)) as usize,
        initial: r.string(int_t, "integrator", "initial"),
    };

    let samp_t = r.section(&root, "sampler");
    if let Some(t) = samp_t {
        r.check_keys(t, "sampler", SAMPLER_KEYS);
    }
    let sampler = SamplerBlock {
        burn_in: r.uint(samp_t, "sampler", "burn_in", Some(10_000)),
        thin: r.uint(samp_t, "sampler", "thin", Some(100)),
        count: r.uint(samp_t, "sampler", "count", Some(100)) as usize,
        chains: r.uint(samp_t, "sampler", "chains", Some(4)) as usize,
        batches: r.uint(samp_t, "sampler", "batches", Some(10)) as usize,
    };

    let sched_t = r.section(&root, "schedule");
    if let Some(t) = sched_t {
        r.check_keys(t, "schedule", SCHEDULE_KEYS);
    }
    let needs_schedule = matches!(command, Some(Command::VerifyBounds))
        || (matches!(command, Some(Command::Analyze)) && analyze_mode_of(&root) == Some(AnalyzeMode::Trajectory));
    if needs_schedule && sched_t.is_none() {
        r.errors.push(format!(
            "missing required section [schedule] for {}",
            command.map(Command::name).unwrap_or("")
        ));
    }
    let sched_required = (needs_schedule && sched_t.is_some()).then_some(());
    let schedule = ScheduleBlock {
        radius: r.float(sched_t, "schedule", "radius", if sched_required.is_some() { None } else { Some(2.0) }),
        eps: r.float(sched_t, "schedule", "eps", if sched_required.is_some() { None } else { Some(0.1) }),
        replicas: r.uint(sched_t, "schedule", "replicas", Some(100_000)) as usize,
        kappas: r.uints(sched_t, "schedule", "kappas", vec![1, 2, 3]),
        burn_in: r.uint(sched_t, "schedule", "burn_in", Some(1_000)),
        fast_delta: r.float(sched_t, "schedule", "fast_delta", Some(0.1)),
        fast_eps: r.float(sched_t, "schedule", "fast_eps", Some(4.0)),
        fast_paths: r.uint(sched_t, "schedule", "fast_paths", Some(100_000)) as usize,
        fast_substeps: r.uint(sched_t, "schedule", "fast_substeps", Some(100)) as usize,
        rho: r.float(sched_t, "schedule", "rho", Some(0.0)),
    };

    let an_t = r.section(&root, "analyze");
    if let Some(t) = an_t {
        r.check_keys(t, "analyze", ANALYZE_KEYS);
    }
    let mode = match r.string(an_t, "analyze", "mode") {
        Some(s) => AnalyzeMode::parse(&s).unwrap_or_else(|| {
            r.errors.push(format!("unknown analyze mode {s:?} (expected trajectory, percolation or packing)"));
            AnalyzeMode::Trajectory
        }),
        None => AnalyzeMode::Trajectory,
    };
    let analyze = AnalyzeBlock {
        mode,
        input: r.string(an_t, "analyze", "input"),
        ladder: r.floats(an_t, "analyze", "ladder", Some(vec![1.0, 1e2, 1e4, 1e6, 1e8])),
        particle_activities: r.floats(an_t, "analyze", "particle_activities", Some(vec![0.0, 5.0])),
        base_side: r.float(an_t, "analyze", "base_side", Some(6.0)),
        multiples: r.uints(an_t, "analyze", "multiples", vec![1, 2, 3]),
        slack: r.float(an_t, "analyze", "slack", Some(0.02)),
    };

    let mut warnings = Vec::new();
    if strict {
        r.errors.append(&mut r.unknown);
    } else {
        warnings.append(&mut r.unknown);
    }
    let config = RunConfig {
        command: command.unwrap_or(Command::Simulate),
        seed: seed.unwrap_or(0),
        output,
        domain: DomainBlock {
            dim,
            sphere_radius,
            particle_radius,
            sigma,
            container,
        },
        model: ModelBlock {
            sphere_activity,
            particle_activity,
            kind,
        },
        integrator,
        sampler,
        schedule,
        analyze,
    };
    let mut errors = r.errors;
    if errors.is_empty() {
        errors.extend(validate(&config));
    }
    if errors.is_empty() {
        Ok(Parsed { config, warnings })
    } else {
        Err(ConfigErrors(errors))
    }
}

fn analyze_mode_of(root: &Table) -> Option<AnalyzeMode> {
    match root.get("analyze").and_then(|a| a.get("mode")) {
        Some(Value::String(s)) => AnalyzeMode::parse(s),
        _ => Some(AnalyzeMode::Trajectory),
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Range and consistency checks on a fully populated configuration.
pub fn validate(c: &RunConfig) -> Vec<String> {
    let mut e = Vec::new();
    let d = &c.domain;
    if d.dim == 0 {
        e.push("domain.dim must be at least 1".into());
    }
    if !positive(d.sphere_radius) {
        e.push(format!("domain.sphere_radius must be positive, got {}", d.sphere_radius));
    }
    if !(positive(d.particle_radius) && d.particle_radius < d.sphere_radius) {
        e.push(format!(
            "radii must satisfy 0 < particle_radius < sphere_radius (smaller particles), got particle_radius = {} and sphere_radius = {}",
            d.particle_radius, d.sphere_radius
        ));
    }
    if !positive(d.sigma) {
        e.push(format!("domain.sigma must be positive, got {}", d.sigma));
    }
    match &d.container {
        ContainerSpec::Open => {}
        ContainerSpec::Periodic { sides } => {
            if sides.len() != d.dim {
                e.push(format!("domain.sides needs {} entries, got {}", d.dim, sides.len()));
            }
            if sides.iter().any(|&l| !positive(l)) {
                e.push("domain.sides must be positive".into());
            }
        }
        ContainerSpec::Ball { radius } => {
            if !positive(*radius) {
                e.push(format!("domain.radius must be positive, got {radius}"));
            }
        }
    }
    for (name, z) in [("sphere_activity", c.model.sphere_activity), ("particle_activity", c.model.particle_activity)] {
        if !(z >= 0.0 && z.is_finite()) {
            e.push(format!("model.{name} must be a non-negative number, got {z}"));
        }
    }
    let i = &c.integrator;
    if !positive(i.step) {
        e.push(format!("integrator.step must be positive, got {}", i.step));
    }
    if i.max_sweeps == 0 {
        e.push("integrator.max_sweeps must be at least 1".into());
    }
    if !(i.tolerance > 0.0 && i.tolerance < 1e-6 * d.sphere_radius) {
        e.push(format!(
            "integrator.tolerance must lie in (0, 1e-6 sphere_radius), got {}",
            i.tolerance
        ));
    }
    if i.sample_every == 0 {
        e.push("integrator.sample_every must be at least 1".into());
    }
    if !(i.horizon >= 0.0 && i.horizon.is_finite()) {
        e.push(format!("integrator.horizon must be non-negative, got {}", i.horizon));
    } else if i.sample_every > 0 && positive(i.step) {
        if let Err(err) = aosim_core::dynamics::step_count(i.horizon, i.step, i.sample_every) {
            e.push(format!("integrator: {err}"));
        }
    }
    let s = &c.sampler;
    if s.thin == 0 || s.count == 0 || s.chains == 0 {
        e.push("sampler.thin, sampler.count and sampler.chains must be at least 1".into());
    }
    if s.batches < 2 {
        e.push("sampler.batches must be at least 2".into());
    }
    let k = &c.schedule;
    if !(k.radius >= 1.0 && k.radius.is_finite()) {
        e.push(format!("schedule.radius must be at least 1, got {}", k.radius));
    }
    if !positive(k.eps) {
        e.push(format!("schedule.eps must be positive, got {}", k.eps));
    }
    if k.replicas == 0 || k.kappas.is_empty() || k.kappas.contains(&0) {
        e.push("schedule.replicas must be at least 1 and schedule.kappas non-empty and positive".into());
    }
    if !(positive(k.fast_delta) && k.fast_delta <= 1.0 && positive(k.fast_eps)) {
        e.push("schedule.fast_delta must lie in (0, 1] and schedule.fast_eps be positive".into());
    }
    if k.fast_paths == 0 || k.fast_substeps == 0 {
        e.push("schedule.fast_paths and schedule.fast_substeps must be at least 1".into());
    }
    if !(k.rho >= 0.0 && k.rho.is_finite()) {
        e.push(format!("schedule.rho must be non-negative, got {}", k.rho));
    }
    let a = &c.analyze;
    if !(a.slack >= 0.0 && a.slack.is_finite()) {
        e.push(format!("analyze.slack must be non-negative, got {}", a.slack));
    }
    if a.ladder.is_empty() || a.ladder.windows(2).any(|w| w[1] <= w[0]) || a.ladder.iter().any(|z| !(*z >= 0.0)) {
        e.push("analyze.ladder must be a non-empty increasing list of activities".into());
    }
    if a.particle_activities.is_empty() || a.particle_activities.iter().any(|z| !(*z >= 0.0 && z.is_finite())) {
        e.push("analyze.particle_activities must be non-empty and non-negative".into());
    }
    if !positive(a.base_side) || a.multiples.is_empty() || a.multiples.contains(&0) {
        e.push("analyze.base_side must be positive and analyze.multiples non-empty and positive".into());
    }

    let periodic = matches!(d.container, ContainerSpec::Periodic { .. });
    let ball = matches!(d.container, ContainerSpec::Ball { .. });
    match c.command {
        Command::Simulate => {
            if !matches!(c.model.kind, ModelKind::TwoType | ModelKind::Depletion) {
                e.push("simulate needs model.kind two-type or depletion".into());
            }
            if c.model.kind == ModelKind::Depletion && ball {
                e.push("depletion dynamics needs an open or periodic container".into());
            }
            if i.initial.is_none() && !(periodic || ball) {
                e.push("simulate in an open container needs integrator.initial".into());
            }
        }
        Command::Sample => match c.model.kind {
            ModelKind::Penalised if !ball => e.push("the penalised sampler needs a ball container".into()),
            ModelKind::TwoType | ModelKind::OneType if !periodic => {
                e.push("the two-type and one-type samplers need a periodic container".into())
            }
            ModelKind::Depletion => e.push("sample needs model.kind two-type, one-type or penalised".into()),
            _ => {}
        },
        Command::Equivalence => {
            if !periodic {
                e.push("equivalence needs a periodic container".into());
            }
        }
        Command::Analyze => {
            if a.mode == AnalyzeMode::Trajectory && a.input.is_none() {
                e.push("analyze in trajectory mode needs analyze.input".into());
            }
        }
        Command::VerifyBounds => {}
    }
    e
}

fn float_array(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn int_array(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect())
}

/// Canonical TOML text; `parse_config(render(c))` reproduces `c`.
pub fn render(c: &RunConfig) -> String {
    let mut root = Table::new();
    root.insert("command".into(), Value::String(c.command.name().into()));
    root.insert(
        "seed".into(),
        if c.seed <= i64::MAX as u64 {
            Value::Integer(c.seed as i64)
        } else {
            Value::String(c.seed.to_string())
        },
    );
    root.insert("output".into(), Value::String(c.output.clone()));

    let mut d = Table::new();
    d.insert("dim".into(), Value::Integer(c.domain.dim as i64));
    d.insert("sphere_radius".into(), Value::Float(c.domain.sphere_radius));
    d.insert("particle_radius".into(), Value::Float(c.domain.particle_radius));
    d.insert("sigma".into(), Value::Float(c.domain.sigma));
    match &c.domain.container {
        ContainerSpec::Open => {
            d.insert("container".into(), Value::String("open".into()));
        }
        ContainerSpec::Periodic { sides } => {
            d.insert("container".into(), Value::String("periodic".into()));
            d.insert("sides".into(), float_array(sides));
        }
        ContainerSpec::Ball { radius } => {
            d.insert("container".into(), Value::String("ball".into()));
            d.insert("radius".into(), Value::Float(*radius));
        }
    }
    root.insert("domain".into(), Value::Table(d));

    let mut m = Table::new();
    m.insert("sphere_activity".into(), Value::Float(c.model.sphere_activity));
    m.insert("particle_activity".into(), Value::Float(c.model.particle_activity));
    m.insert("kind".into(), Value::String(c.model.kind.name().into()));
    root.insert("model".into(), Value::Table(m));

    let i = &c.integrator;
    let mut t = Table::new();
    t.insert("step".into(), Value::Float(i.step));
    t.insert("max_sweeps".into(), Value::Integer(i.max_sweeps as i64));
    t.insert("tolerance".into(), Value::Float(i.tolerance));
    t.insert("horizon".into(), Value::Float(i.horizon));
    t.insert("sample_every".into(), Value::Integer(i.sample_every as i64));
    if let Some(p) = &i.initial {
        t.insert("initial".into(), Value::String(p.clone()));
    }
    root.insert("integrator".into(), Value::Table(t));

    let s = &c.sampler;
    let mut t = Table::new();
    t.insert("burn_in".into(), Value::Integer(s.burn_in as i64));
    t.insert("thin".into(), Value::Integer(s.thin as i64));
    t.insert("count".into(), Value::Integer(s.count as i64));
    t.insert("chains".into(), Value::Integer(s.chains as i64));
    t.insert("batches".into(), Value::Integer(s.batches as i64));
    root.insert("sampler".into(), Value::Table(t));

    let k = &c.schedule;
    let mut t = Table::new();
    t.insert("radius".into(), Value::Float(k.radius));
    t.insert("eps".into(), Value::Float(k.eps));
    t.insert("replicas".into(), Value::Integer(k.replicas as i64));
    t.insert("kappas".into(), int_array(&k.kappas));
    t.insert("burn_in".into(), Value::Integer(k.burn_in as i64));
    t.insert("fast_delta".into(), Value::Float(k.fast_delta));
    t.insert("fast_eps".into(), Value::Float(k.fast_eps));
    t.insert("fast_paths".into(), Value::Integer(k.fast_paths as i64));
    t.insert("fast_substeps".into(), Value::Integer(k.fast_substeps as i64));
    t.insert("rho".into(), Value::Float(k.rho));
    root.insert("schedule".into(), Value::Table(t));

    let a = &c.analyze;
    let mut t = Table::new();
    t.insert("mode".into(), Value::String(a.mode.name().into()));
    if let Some(p) = &a.input {
        t.insert("input".into(), Value::String(p.clone()));
    }
    t.insert("ladder".into(), float_array(&a.ladder));
    t.insert("particle_activities".into(), float_array(&a.particle_activities));
    t.insert("base_side".into(), Value::Float(a.base_side));
    t.insert("multiples".into(), int_array(&a.multiples));
    t.insert("slack".into(), Value::Float(a.slack));
    root.insert("analyze".into(), Value::Table(t));

    root.to_string()
}

/// SHA-256 of the canonical rendering, with the output directory left out so
/// that moving the artifacts does not change the hash.
pub fn config_hash(c: &RunConfig) -> String {
    let mut canon = c.clone();
    canon.output = String::new();
    let digest = Sha256::digest(render(&canon).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
command = "simulate"
seed = 7

[domain]
dim = 2
sphere_radius = 0.5
particle_radius = 0.075
container = "periodic"
sides = [6, 6]

[model]
sphere_activity = 1
particle_activity = 2
"#;

    #[test]
    fn minimal_config_echoes_defaults() {
        let p = parse_config(MINIMAL, true, &Overrides::default()).unwrap();
        let c = p.config;
        assert_eq!(c.command, Command::Simulate);
        assert_eq!(c.seed, 7);
        assert_eq!(c.output, "out");
        assert_eq!(c.domain.sigma, 1.0);
        assert_eq!(c.integrator.step, 1e-4 * 0.25);
        assert_eq!(c.integrator.max_sweeps, 1000);
        assert_eq!(c.integrator.tolerance, 1e-10 * 0.5);
        assert_eq!(c.model.kind, ModelKind::TwoType);
        assert_eq!(c.sampler.burn_in, 10_000);
        assert_eq!(c.schedule.kappas, vec![1, 2, 3]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn radius_order_is_enforced() {
        let text = MINIMAL.replace("particle_radius = 0.075", "particle_radius = 0.5");
        let e = parse_config(&text, false, &Overrides::default()).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("0 < particle_radius < sphere_radius")), "{e}");
    }

    #[test]
    fn all_violations_are_listed() {
        let text = MINIMAL
            .replace("seed = 7\n", "")
            .replace("sphere_activity = 1", "sphere_activity = -1")
            .replace("sides = [6, 6]", "sides = [6]")
            .replace("[model]", "[model]\ncolour = \"red\"");
        let e = parse_config(&text, true, &Overrides::default()).unwrap_err();
        let joined = e.0.join("\n");
        assert!(joined.contains("missing required key seed"), "{joined}");
        assert!(joined.contains("unknown key model.colour"), "{joined}");
        // range checks run only once the structure is sound
        let text = MINIMAL
            .replace("sphere_activity = 1", "sphere_activity = -1")
            .replace("sides = [6, 6]", "sides = [6]");
        let e = parse_config(&text, true, &Overrides::default()).unwrap_err();
        assert_eq!(e.0.len(), 2, "{e}");
    }

    #[test]
    fn unknown_keys_warn_unless_strict() {
        let text = format!("{MINIMAL}\n[sampler]\nspeed = 3\n");
        let p = parse_config(&text, false, &Overrides::default()).unwrap();
        assert_eq!(p.warnings, vec!["unknown key sampler.speed".to_string()]);
        assert!(parse_config(&text, true, &Overrides::default()).is_err());
    }

    #[test]
    fn seed_override_and_hash() {
        let text = MINIMAL.replace("seed = 7\n", "");
        let o = Overrides {
            seed: Some(u64::MAX),
            output: Some("elsewhere".into()),
        };
        let c = parse_config(&text, true, &o).unwrap().config;
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.output, "elsewhere");
        let back = parse_config(&render(&c), true, &Overrides::default()).unwrap().config;
        assert_eq!(back, c);
        let mut moved = c.clone();
        moved.output = "other".into();
        assert_eq!(config_hash(&moved), config_hash(&c));
        moved.seed = 1;
        assert_ne!(config_hash(&moved), config_hash(&c));
        assert_eq!(config_hash(&c).len(), 64);
    }

    #[test]
    fn syntax_errors_are_reported() {
        let e = parse_config("command = ", false, &Overrides::default()).unwrap_err();
        assert!(e.0[0].starts_with("syntax error"));
    }

    #[test]
    fn command_specific_requirements() {
        let text = MINIMAL.replace("\"simulate\"", "\"verify-bounds\"");
        let e = parse_config(&text, true, &Overrides::default()).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("[schedule]")), "{e}");
        let text = MINIMAL.replace("container = \"periodic\"\nsides = [6, 6]", "container = \"open\"");
        let e = parse_config(&text, true, &Overrides::default()).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("integrator.initial")), "{e}");
    }
}
