//! Run configuration: a TOML file plus `--set` overrides, merged onto the
//! defaults of the chosen experiment.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use bosonic_dnm::dynamics::IntegrationConfig;
use bosonic_dnm::experiments::{
    Axis, DecayFitSpec, ExtremalSpec, MemristorSpec, ScalingSpec, SimulateSpec, SweepSpec, SwitchSpec,
};
use bosonic_dnm::model::ModelParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Blocks shared by every experiment; everything else lives in the
/// experiment's own section.
const SHARED_BLOCKS: [&str; 3] = ["params", "system", "integration"];

const TOP_LEVEL_KEYS: [&str; 4] = ["experiment", "workers", "full_scale", "output"];

const PARAM_FIELDS: [&str; 7] = ["omega_r", "omega_q", "g", "gamma_r", "gamma_q", "qubit_drive", "cavity_drive"];

#[derive(Debug)]
pub enum ConfigError {
    Syntax { source: String, message: String },
    Key { path: String, location: Option<String>, message: String },
    Override { text: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { source, message } => write!(f, "{source}: {message}"),
            ConfigError::Key {
                path,
                location: Some(loc),
                message,
            } => write!(f, "key `{path}` ({loc}): {message}"),
            ConfigError::Key { path, message, .. } => write!(f, "key `{path}`: {message}"),
            ConfigError::Override { text, message } => write!(f, "--set {text:?}: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    DnmMap,
    Scaling,
    Extremal,
    Switch,
    FitDecay,
    Memristor,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Simulate,
        Experiment::DnmMap,
        Experiment::Scaling,
        Experiment::Extremal,
        Experiment::Switch,
        Experiment::FitDecay,
        Experiment::Memristor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::DnmMap => "dnm-map",
            Experiment::Scaling => "scaling",
            Experiment::Extremal => "extremal",
            Experiment::Switch => "switch",
            Experiment::FitDecay => "fit-decay",
            Experiment::Memristor => "memristor",
        }
    }

    /// Config section holding the experiment-specific fields.
    pub fn section(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::DnmMap => "sweep",
            Experiment::Scaling => "scaling",
            Experiment::Extremal => "extremal",
            Experiment::Switch => "switch",
            Experiment::FitDecay => "fit_decay",
            Experiment::Memristor => "memristor",
        }
    }

    fn default_spec(self, full_scale: bool) -> Spec {
        match self {
            Experiment::Simulate => Spec::Simulate(SimulateSpec::default()),
            Experiment::DnmMap => {
                let mut s = SweepSpec::default();
                if full_scale {
                    s.axes.iter_mut().for_each(|a| a.steps = 100);
                }
                Spec::DnmMap(s)
            }
            Experiment::Scaling => {
                let mut s = ScalingSpec::default();
                if full_scale {
                    s.n_values = (1..=8).collect();
                }
                Spec::Scaling(s)
            }
            Experiment::Extremal => {
                let mut s = ExtremalSpec::default();
                if full_scale {
                    s.frequency = Axis::new("qubit_drive.frequency", 0.0, 1.0, 100);
                    s.amplitude = Axis::new("qubit_drive.amplitude", 0.0, 1.0, 100);
                    s.n_values = vec![1, 5];
                }
                Spec::Extremal(s)
            }
            Experiment::Switch => Spec::Switch(SwitchSpec::default()),
            Experiment::FitDecay => Spec::FitDecay(DecayFitSpec::default()),
            Experiment::Memristor => Spec::Memristor(MemristorSpec::default()),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

/// Fully resolved experiment spec.
#[derive(Debug, Clone, PartialEq)]
pub enum Spec {
    Simulate(SimulateSpec),
    DnmMap(SweepSpec),
    Scaling(ScalingSpec),
    Extremal(ExtremalSpec),
    Switch(SwitchSpec),
    FitDecay(DecayFitSpec),
    Memristor(MemristorSpec),
}

impl Spec {
    fn to_table(&self) -> Table {
        let v = match self {
            Spec::Simulate(s) => Value::try_from(s),
            Spec::DnmMap(s) => Value::try_from(s),
            Spec::Scaling(s) => Value::try_from(s),
            Spec::Extremal(s) => Value::try_from(s),
            Spec::Switch(s) => Value::try_from(s),
            Spec::FitDecay(s) => Value::try_from(s),
            Spec::Memristor(s) => Value::try_from(s),
        };
        match v.expect("specs serialize to TOML") {
            Value::Table(t) => t,
            _ => unreachable!("specs are structs"),
        }
    }

    fn from_table(experiment: Experiment, table: Table) -> Result<Spec, (String, String)> {
        fn de<T: DeserializeOwned>(t: Table) -> Result<T, (String, String)> {
            serde_path_to_error::deserialize(Value::Table(t)).map_err(|e| (e.path().to_string(), e.inner().to_string()))
        }
        Ok(match experiment {
            Experiment::Simulate => Spec::Simulate(de(table)?),
            Experiment::DnmMap => Spec::DnmMap(de(table)?),
            Experiment::Scaling => Spec::Scaling(de(table)?),
            Experiment::Extremal => Spec::Extremal(de(table)?),
            Experiment::Switch => Spec::Switch(de(table)?),
            Experiment::FitDecay => Spec::FitDecay(de(table)?),
            Experiment::Memristor => Spec::Memristor(de(table)?),
        })
    }

    pub fn params(&self) -> &ModelParams {
        match self {
            Spec::Simulate(s) => &s.params,
            Spec::DnmMap(s) => &s.params,
            Spec::Scaling(s) => &s.params,
            Spec::Extremal(s) => &s.params,
            Spec::Switch(s) => &s.params,
            Spec::FitDecay(s) => &s.params,
            Spec::Memristor(s) => &s.params,
        }
    }

    pub fn integration(&self) -> &IntegrationConfig {
        match self {
            Spec::Simulate(s) => &s.integration,
            Spec::DnmMap(s) => &s.integration,
            Spec::Scaling(s) => &s.integration,
            Spec::Extremal(s) => &s.integration,
            Spec::Switch(s) => &s.integration,
            Spec::FitDecay(s) => &s.integration,
            Spec::Memristor(s) => &s.integration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format {other:?}; expected csv, json or svg")),
        }
    }
}

/// Parses `csv,json,svg`.
pub fn parse_formats(s: &str) -> Result<Vec<Format>, String> {
    let mut f: Vec<Format> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    f.sort();
    f.dedup();
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub output: OutputConfig,
    /// Worker threads; all hardware threads when absent.
    pub workers: Option<usize>,
    pub full_scale: bool,
    pub spec: Spec,
}

/// Raw inputs to [`resolve`].
#[derive(Debug, Default, Clone)]
pub struct ConfigSource<'a> {
    /// File name used in messages and its contents.
    pub file: Option<(&'a str, &'a str)>,
    pub sets: &'a [String],
    pub full_scale: bool,
}

/// Line of `path` in a TOML document, found by tracking section headers.
fn locate(text: &str, path: &[String]) -> Option<usize> {
    let mut section: Vec<String> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let inner = line.trim_start_matches('[').split(']').next().unwrap_or("");
            section = split_key(inner);
            let depth = common_prefix(&section, path);
            if depth == section.len() && best.is_none_or(|b| depth > b.1) {
                best = Some((no + 1, depth));
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        if line.starts_with('#') {
            continue;
        }
        let mut full = section.clone();
        full.extend(split_key(key));
        let depth = common_prefix(&full, path);
        if depth == full.len() && best.is_none_or(|b| depth > b.1) {
            best = Some((no + 1, depth));
        }
    }
    best.map(|b| b.0)
}

fn split_key(key: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for c in key.trim().chars() {
        match c {
            '"' => quoted = !quoted,
            '.' if !quoted => parts.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    parts.push(cur.trim().to_string());
    parts
}

fn common_prefix(a: &[String], b: &[String]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Splits a serde path such as `params.qubit_drive.amplitude` or
/// `axes[1].steps` into keys, dropping array indices.
fn path_keys(path: &str) -> Vec<String> {
    path.split('.')
        .map(|p| p.split('[').next().unwrap_or(p).to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

/// Resolves an override key to its place in the file layout.
fn override_path(key: &str) -> Vec<String> {
    let parts = split_key(key);
    if parts.len() <= 2 && PARAM_FIELDS.contains(&parts[0].as_str()) {
        let mut p = vec!["params".to_string()];
        p.extend(parts);
        return p;
    }
    parts
}

fn parse_override_value(text: &str) -> Value {
    match format!("v = {text}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(text.to_string()),
    }
}

fn apply_override(table: &mut Table, text: &str) -> Result<(), ConfigError> {
    let err = |message: String| ConfigError::Override {
        text: text.to_string(),
        message,
    };
    let (key, value) = text.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
    let path = override_path(key);
    if path.iter().any(String::is_empty) {
        return Err(err("empty key".into()));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| err(format!("`{part}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].clone(), parse_override_value(value.trim()));
    Ok(())
}

/// Recursively overlays `over` onto `base`; tables merge, anything else
/// replaces.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Builds a [`RunConfig`] from the experiment defaults, the file and the
/// overrides, in that order.
pub fn resolve(experiment: Experiment, source: &ConfigSource) -> Result<RunConfig, ConfigError> {
    let (name, text) = source.file.unwrap_or(("<defaults>", ""));
    let mut user: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
        source: name.to_string(),
        message: e.to_string(),
    })?;
    for s in source.sets {
        apply_override(&mut user, s)?;
    }
    let key_error = |path: Vec<String>, message: String| ConfigError::Key {
        location: locate(text, &path).map(|l| format!("{name} line {l}")),
        path: path.join("."),
        message,
    };

    let section = experiment.section();
    for key in user.keys() {
        let known = TOP_LEVEL_KEYS.contains(&key.as_str()) || SHARED_BLOCKS.contains(&key.as_str()) || key == section;
        if !known {
            let hint = match Experiment::ALL.iter().find(|e| e.section() == key) {
                Some(e) => format!("section belongs to the {e} experiment, not {experiment}"),
                None => format!(
                    "unknown key; expected one of {:?}",
                    [&TOP_LEVEL_KEYS[..], &SHARED_BLOCKS[..], &[section]].concat()
                ),
            };
            return Err(key_error(vec![key.clone()], hint));
        }
    }
    if let Some(v) = user.remove("experiment") {
        let matches = v.as_str().and_then(|s| s.parse::<Experiment>().ok()) == Some(experiment);
        if !matches {
            return Err(key_error(
                vec!["experiment".into()],
                format!("config is for {v}, but the {experiment} subcommand was run"),
            ));
        }
    }
    let workers = match user.remove("workers") {
        None => None,
        Some(Value::Integer(n)) if n >= 1 => Some(n as usize),
        Some(v) => return Err(key_error(vec!["workers".into()], format!("expected a positive integer, got {v}"))),
    };
    let full_scale = match user.remove("full_scale") {
        None => false,
        Some(Value::Boolean(b)) => b,
        Some(v) => return Err(key_error(vec!["full_scale".into()], format!("expected a boolean, got {v}"))),
    } || source.full_scale;
    let output: OutputConfig = match user.remove("output") {
        None => OutputConfig::default(),
        Some(v) => serde_path_to_error::deserialize(v).map_err(|e| {
            let mut p = vec!["output".to_string()];
            p.extend(path_keys(&e.path().to_string()));
            key_error(p, e.inner().to_string())
        })?,
    };

    let mut merged = experiment.default_spec(full_scale).to_table();
    if let Some(v) = user.remove(section) {
        let Value::Table(t) = v else {
            return Err(key_error(vec![section.into()], "expected a section".into()));
        };
        if let Some(k) = t.keys().find(|k| SHARED_BLOCKS.contains(&k.as_str())) {
            return Err(key_error(
                vec![section.into(), k.clone()],
                format!("`{k}` is a top-level section"),
            ));
        }
        merge(&mut merged, t);
    }
    merge(&mut merged, user);

    let spec = Spec::from_table(experiment, merged).map_err(|(path, message)| {
        let mut keys = path_keys(&path);
        if keys.first().is_some_and(|k| !SHARED_BLOCKS.contains(&k.as_str())) {
            keys.insert(0, section.to_string());
        }
        key_error(keys, message)
    })?;
    if let Err(e) = spec.params().validate() {
        let name = match &e {
            bosonic_dnm::model::ModelError::InvalidRate { name, .. } | bosonic_dnm::model::ModelError::NonFinite { name, .. } => {
                name.to_string()
            }
            _ => String::new(),
        };
        let mut p = vec!["params".to_string()];
        p.extend(split_key(&name).into_iter().filter(|s| !s.is_empty()));
        return Err(key_error(p, e.to_string()));
    }
    if let Err(e) = spec.integration().validate() {
        return Err(key_error(vec!["integration".into()], e.to_string()));
    }
    Ok(RunConfig {
        experiment,
        output,
        workers,
        full_scale,
        spec,
    })
}

/// Resolved configuration in the file layout; feeding it back to
/// [`resolve`] gives an equal config.
pub fn echo(config: &RunConfig) -> String {
    let mut spec = config.spec.to_table();
    let mut doc = Table::new();
    doc.insert("experiment".into(), Value::String(config.experiment.name().into()));
    if let Some(w) = config.workers {
        doc.insert("workers".into(), Value::Integer(w as i64));
    }
    doc.insert("full_scale".into(), Value::Boolean(config.full_scale));
    doc.insert("output".into(), Value::try_from(&config.output).expect("output serializes"));
    for block in SHARED_BLOCKS {
        if let Some(v) = spec.remove(block) {
            doc.insert(block.into(), v);
        }
    }
    if !spec.is_empty() {
        doc.insert(config.experiment.section().into(), Value::Table(spec));
    }
    toml::to_string(&doc).expect("config serializes")
}

/// Reference of all keys with their defaults, one document per experiment.
pub fn defaults_document() -> String {
    let mut out = String::new();
    for e in Experiment::ALL {
        let cfg = resolve(e, &ConfigSource::default()).expect("defaults resolve");
        out.push_str(&format!("# ---- {e} ----\n"));
        out.push_str(&echo(&cfg));
        out.push('\n');
    }
    out
}
