//! Run configuration: presets, the TOML file schema and validation.
//!
//! The file is flat key-value TOML with dotted section names. Both forms
//! below are equivalent:
//!
//! ```toml
//! [algorithm]
//! n_max = 400
//!
//! algorithm.n_train = 20
//! ```
//!
//! Keys not set in the file keep the preset's value. Unknown keys are
//! rejected by name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::runner::{Method, ScenarioKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size values: 100 classes, N_max = 4000.
    Paper,
    /// Scaled-down values for CI-speed comparisons.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::InvalidConfig(format!(
                "unknown preset `{s}` (expected paper or desk)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub classes: usize,
    pub dim: usize,
    pub sigma_view: f64,
    pub sigma_noise: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub scenario: ScenarioKind,
    /// Per-class arrival probabilities; `None` uses the scenario default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    /// Half-width ω (radians) of the identifier visibility window.
    pub omega: f64,
    pub overhead_visible_prob: f64,
    pub miss_rate: f64,
    pub initial_per_class: usize,
    /// Inclusive label range pre-loaded in Scenario 1; `None` is the upper
    /// half of the classes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_classes: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub n_sub: usize,
    pub n_max: usize,
    pub n_train: usize,
    pub n_iter: usize,
    pub delta_e: f64,
    pub delta_e_step: f64,
    pub delta_v: f64,
    pub t1: usize,
    pub t2: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub anneal_baselines: bool,
    pub initial_counts_toward_nmax: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub test_per_class: usize,
    /// Cost-to-target threshold as a fraction of Standard AL's final mean
    /// accuracy.
    pub target_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub stream: StreamSection,
    pub algorithm: AlgorithmConfig,
    pub eval: EvalConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = RunConfig {
            world: WorldConfig {
                classes: 100,
                dim: 32,
                sigma_view: 0.6,
                sigma_noise: 0.3,
                seed: 1,
            },
            stream: StreamSection {
                scenario: ScenarioKind::Base,
                probabilities: None,
                omega: 0.8,
                overhead_visible_prob: 0.5,
                miss_rate: 0.0,
                initial_per_class: 30,
                initial_classes: None,
            },
            algorithm: AlgorithmConfig {
                n_sub: 80,
                n_max: 4000,
                n_train: 100,
                n_iter: 100,
                delta_e: 0.2,
                delta_e_step: 0.01,
                delta_v: 0.97,
                t1: 1000,
                t2: 2000,
                learning_rate: 0.01,
                momentum: 0.9,
                batch_size: 64,
                anneal_baselines: true,
                initial_counts_toward_nmax: true,
            },
            eval: EvalConfig {
                test_per_class: 10,
                target_fraction: 0.95,
            },
            run: RunSection {
                methods: Method::ALL.to_vec(),
                seeds: vec![1, 2, 3, 4, 5],
                output_dir: PathBuf::from("runs"),
            },
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => {
                let mut c = paper;
                c.world.classes = 10;
                c.world.dim = 16;
                c.algorithm.n_sub = 8;
                c.algorithm.n_max = 400;
                c.algorithm.n_train = 20;
                c.algorithm.t1 = 100;
                c.algorithm.t2 = 200;
                c.eval.test_per_class = 20;
                // A linear model on this world stays near-uniform for the
                // whole run at the default step size.
                c.algorithm.learning_rate = 0.15;
                c
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let a = &self.algorithm;
        TrainConfig {
            learning_rate: a.learning_rate,
            momentum: a.momentum,
            batch_size: a.batch_size,
            iterations: a.n_iter,
            t1: a.t1,
            t2: a.t2,
        }
    }

    /// Checks every field constraint, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, value: impl fmt::Display, bound: &'static str) -> Error {
            Error::Constraint {
                field,
                value: value.to_string(),
                bound,
            }
        }
        let w = &self.world;
        if w.classes < 2 {
            return Err(bad("world.classes", w.classes, ">= 2"));
        }
        if w.dim < 2 {
            return Err(bad("world.dim", w.dim, ">= 2"));
        }
        if !(w.sigma_view.is_finite() && w.sigma_view >= 0.0) {
            return Err(bad("world.sigma_view", w.sigma_view, ">= 0"));
        }
        if !(w.sigma_noise.is_finite() && w.sigma_noise >= 0.0) {
            return Err(bad("world.sigma_noise", w.sigma_noise, ">= 0"));
        }

        let s = &self.stream;
        if let Some(p) = &s.probabilities {
            if p.len() != w.classes {
                return Err(bad("stream.probabilities", p.len(), "one entry per class"));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(bad("stream.probabilities", v, "entries in [0, 1]"));
            }
            let total: f64 = p.iter().sum();
            if total > 1.0 + 1e-9 {
                return Err(bad("stream.probabilities", total, "sum <= 1"));
            }
        }
        if !(s.omega > 0.0 && s.omega <= std::f64::consts::PI) {
            return Err(bad("stream.omega", s.omega, "in (0, pi]"));
        }
        if !(0.0..=1.0).contains(&s.overhead_visible_prob) {
            return Err(bad(
                "stream.overhead_visible_prob",
                s.overhead_visible_prob,
                "in [0, 1]",
            ));
        }
        if !(0.0..1.0).contains(&s.miss_rate) {
            return Err(bad("stream.miss_rate", s.miss_rate, "in [0, 1)"));
        }
        if let Some((lo, hi)) = s.initial_classes {
            if lo < 1 || lo > hi || hi > w.classes {
                return Err(bad(
                    "stream.initial_classes",
                    format!("[{lo}, {hi}]"),
                    "1 <= lo <= hi <= classes",
                ));
            }
        }

        let a = &self.algorithm;
        if a.n_sub < 1 {
            return Err(bad("algorithm.n_sub", a.n_sub, ">= 1"));
        }
        if a.n_train < 1 {
            return Err(bad("algorithm.n_train", a.n_train, ">= 1"));
        }
        if a.n_train > a.n_max {
            return Err(bad("algorithm.n_train", a.n_train, "<= algorithm.n_max"));
        }
        if !(a.delta_e.is_finite() && a.delta_e >= 0.0) {
            return Err(bad("algorithm.delta_e", a.delta_e, ">= 0"));
        }
        if !(a.delta_e_step.is_finite() && a.delta_e_step >= 0.0) {
            return Err(bad("algorithm.delta_e_step", a.delta_e_step, ">= 0"));
        }
        if !(a.delta_v > 0.0 && a.delta_v < 1.0) {
            return Err(bad("algorithm.delta_v", a.delta_v, "in (0, 1)"));
        }
        if a.t1 > a.t2 {
            return Err(bad("algorithm.t1", a.t1, "<= algorithm.t2"));
        }
        if !(a.learning_rate.is_finite() && a.learning_rate > 0.0) {
            return Err(bad("algorithm.learning_rate", a.learning_rate, "> 0"));
        }
        if !(0.0..1.0).contains(&a.momentum) {
            return Err(bad("algorithm.momentum", a.momentum, "in [0, 1)"));
        }
        if a.batch_size < 1 {
            return Err(bad("algorithm.batch_size", a.batch_size, ">= 1"));
        }

        let e = &self.eval;
        if e.test_per_class < 1 {
            return Err(bad("eval.test_per_class", e.test_per_class, ">= 1"));
        }
        if !(e.target_fraction > 0.0 && e.target_fraction <= 1.0) {
            return Err(bad("eval.target_fraction", e.target_fraction, "in (0, 1]"));
        }

        if self.run.methods.is_empty() {
            return Err(bad("run.methods", "[]", "non-empty"));
        }
        if self.run.seeds.is_empty() {
            return Err(bad("run.seeds", "[]", "non-empty"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}

/// A validated config together with the dotted keys the file overrode.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub preset: Preset,
    pub config: RunConfig,
    pub overrides: Vec<String>,
}

impl ResolvedConfig {
    /// Self-describing metadata: preset, overridden keys and the full
    /// resolved config.
    pub fn metadata(&self) -> String {
        let mut out = format!("# preset: {}\n", self.preset);
        if self.overrides.is_empty() {
            out.push_str("# overrides: none\n");
        } else {
            out.push_str(&format!("# overrides: {}\n", self.overrides.join(", ")));
        }
        out.push_str(&self.config.to_toml());
        out
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) if prefix.is_empty() => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) {
    let (section, field) = key.split_once('.').expect("flattened keys are dotted");
    root.entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .expect("sections are tables")
        .insert(field.to_string(), value);
}

/// Parses config text on top of a preset.
pub fn parse_config(text: &str, preset: Preset) -> Result<ResolvedConfig> {
    let file: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;

    let base = RunConfig::preset(preset);
    let mut known = BTreeMap::new();
    flatten(
        "",
        &toml::Table::try_from(&base).expect("config serializes to a table"),
        &mut known,
    );
    // optional keys are omitted from the serialized preset when unset
    for k in ["stream.probabilities", "stream.initial_classes"] {
        known.entry(k.to_string()).or_insert(toml::Value::Boolean(false));
    }

    let mut given = BTreeMap::new();
    for (k, v) in &file {
        match v {
            toml::Value::Table(t) => flatten(k, t, &mut given),
            _ => return Err(Error::UnknownKey(k.clone())),
        }
    }
    for k in given.keys() {
        if !known.contains_key(k) {
            return Err(Error::UnknownKey(k.clone()));
        }
    }

    let mut merged = toml::Table::try_from(&base).expect("config serializes to a table");
    for (k, v) in &given {
        set_dotted(&mut merged, k, v.clone());
    }
    let config: RunConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
    config.validate()?;

    Ok(ResolvedConfig {
        preset,
        config,
        overrides: given.into_keys().collect(),
    })
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path, preset: Preset) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, preset)
}
