//! Configuration loading: TOML files or bundled presets, `section.key=value`
//! overrides, and the extended-scale switch.

use std::path::Path;

use planckdiff::experiments::{Scenario, SweepAxis, SweepParameter};
use planckdiff::series_io::read_text;
use planckdiff::thouless::ThoulessConfig;
use planckdiff::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::Value;

pub const PRESETS: &[(&str, &str)] = &[
    ("static", include_str!("../configs/static.toml")),
    ("moving", include_str!("../configs/moving.toml")),
    ("activation", include_str!("../configs/activation.toml")),
    ("speed_sweep", include_str!("../configs/speed_sweep.toml")),
    ("fraction_sweep", include_str!("../configs/fraction_sweep.toml")),
    ("maxwell", include_str!("../configs/maxwell.toml")),
    ("resistivity", include_str!("../configs/resistivity.toml")),
    ("thouless", include_str!("../configs/thouless.toml")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::config("--preset", format!("unknown preset `{name}`; known: {}", known.join(", ")))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub cross_section_locked: bool,
}

impl SweepSection {
    pub fn axis(&self) -> Result<SweepAxis> {
        let axis = SweepAxis {
            parameter: self.parameter.parse::<SweepParameter>()?,
            values: self.values.clone(),
            cross_section_locked: self.cross_section_locked,
        };
        axis.validate()?;
        Ok(axis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThoulessSection {
    pub areas: Vec<f64>,
    pub mass: f64,
    pub n_walkers: usize,
    pub n_hops: usize,
    pub seed: u64,
}

impl Default for ThoulessSection {
    fn default() -> Self {
        let c = ThoulessConfig::default();
        Self {
            areas: vec![25.0, 100.0, 2500.0],
            mass: c.mass,
            n_walkers: c.n_walkers,
            n_hops: c.n_hops,
            seed: c.seed,
        }
    }
}

impl ThoulessSection {
    pub fn base(&self) -> ThoulessConfig {
        ThoulessConfig {
            area: self.areas.first().copied().unwrap_or(100.0),
            mass: self.mass,
            n_walkers: self.n_walkers,
            n_hops: self.n_hops,
            seed: self.seed,
        }
    }
}

/// A parsed configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub sweep: Option<SweepSection>,
    pub thouless: ThoulessSection,
}

/// Where the configuration text comes from and what to change in it.
#[derive(Debug, Clone, Default)]
pub struct Source<'a> {
    pub path: Option<&'a Path>,
    pub preset: Option<&'a str>,
    pub overrides: &'a [String],
    pub extended: bool,
    pub seed: Option<u64>,
}

fn parse_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::config(path, e.to_string())
}

fn load_document(src: &Source) -> Result<Value> {
    let (label, text) = match (src.path, src.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::config("--config", "give either --config or --preset, not both"))
        }
        (Some(p), None) => (p.display().to_string(), read_text(p)?),
        (None, Some(name)) => (format!("preset {name}"), preset(name)?.to_string()),
        (None, None) => ("defaults".to_string(), String::new()),
    };
    let is_json = src
        .path
        .and_then(|p| p.extension())
        .is_some_and(|e| e == "json");
    if is_json {
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| parse_err(&label, e))?;
        // a run manifest carries its scenario under `config`
        let json = match json.get("config") {
            Some(inner) if json.get("tool_version").is_some() => inner.clone(),
            _ => json,
        };
        return json_to_toml(&json).ok_or_else(|| parse_err(&label, "JSON is not a table"));
    }
    text.parse::<toml::Table>()
        .map(Value::Table)
        .map_err(|e| parse_err(&label, e))
}

fn json_to_toml(v: &serde_json::Value) -> Option<Value> {
    use serde_json::Value as J;
    Some(match v {
        J::Null => return None,
        J::Bool(b) => Value::Boolean(*b),
        J::Number(n) => match n.as_i64() {
            Some(i) => Value::Integer(i),
            None => Value::Float(n.as_f64()?),
        },
        J::String(s) => Value::String(s.clone()),
        J::Array(a) => Value::Array(a.iter().filter_map(json_to_toml).collect()),
        J::Object(o) => Value::Table(
            o.iter()
                .filter_map(|(k, v)| json_to_toml(v).map(|v| (k.clone(), v)))
                .collect(),
        ),
    })
}

/// Sets `section.key` (any depth) to a value parsed as TOML, falling back to a
/// bare string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like section.key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "override key must be section.key"));
    }
    let mut table = doc
        .as_table_mut()
        .ok_or_else(|| Error::config(key, "configuration root is not a table"))?;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn section<T: serde::de::DeserializeOwned + Default>(doc: &mut toml::Table, name: &str) -> Result<T> {
    match doc.remove(name) {
        Some(v) => v.try_into().map_err(|e: toml::de::Error| {
            Error::config(name, e.message().to_string())
        }),
        None => Ok(T::default()),
    }
}

pub fn load(src: &Source) -> Result<Config> {
    let mut doc = load_document(src)?;
    if src.extended {
        for o in ["grid.n=512", "grid.length=256.0", "dynamics.t_end=200000.0"] {
            apply_override(&mut doc, o)?;
        }
    }
    for o in src.overrides {
        apply_override(&mut doc, o)?;
    }
    let Value::Table(mut table) = doc else {
        return Err(Error::config("config", "root is not a table"));
    };
    let sweep = match table.remove("sweep") {
        Some(v) => Some(v.try_into().map_err(|e: toml::de::Error| {
            Error::config("sweep", e.message().to_string())
        })?),
        None => None,
    };
    let thouless: ThoulessSection = section(&mut table, "thouless")?;
    let mut scenario = Scenario::default();
    for name in ["grid", "packet", "disorder", "dynamics", "run"] {
        let sub = table.remove(name);
        if let Some(v) = sub {
            let mut one = toml::Table::new();
            one.insert(name.to_string(), v);
            let partial: Scenario = Value::Table(one)
                .try_into()
                .map_err(|e: toml::de::Error| Error::config(name, e.message().to_string()))?;
            match name {
                "grid" => scenario.grid = partial.grid,
                "packet" => scenario.packet = partial.packet,
                "disorder" => scenario.disorder = partial.disorder,
                "dynamics" => scenario.dynamics = partial.dynamics,
                _ => scenario.run = partial.run,
            }
        }
    }
    if let Some(unknown) = table.keys().next() {
        return Err(Error::config(unknown.clone(), "unknown section"));
    }
    let mut thouless = thouless;
    if let Some(seed) = src.seed {
        let k = scenario.run.seeds.len().max(1) as u64;
        scenario.run.seeds = (0..k).map(|i| seed.wrapping_add(i)).collect();
        thouless.seed = seed;
    }
    Ok(Config {
        scenario,
        sweep,
        thouless,
    })
}
