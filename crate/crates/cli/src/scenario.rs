//! Scenario files: TOML documents mapping onto [`SimConfig`].
//!
//! Overrides are applied to the parsed document before it is checked, so a
//! mistyped `--set` key is rejected exactly like a mistyped file key.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use blf_core::simulator::{NnConfig, SimConfig};
use blf_core::{ConstraintSpec, PlantModel, Reference, StateConstraint};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Value;

/// Directory searched for scenario names that do not resolve as paths.
pub const SCENARIO_DIR_ENV: &str = "BLF_SCENARIO_DIR";
pub const SCENARIO_EXTENSION: &str = "scenario";
pub const DEFAULT_DECIMATION: usize = 100;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub sim: SimSection,
    pub plant: PlantSection,
    pub reference: ReferenceSection,
    pub constraints: ConstraintSection,
    pub controller: ControllerSection,
    pub nn: NnSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_ceiling")]
    pub signal_ceiling: f64,
}

fn default_ceiling() -> f64 {
    1e6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub name: String,
    pub order: Option<usize>,
}

/// Exactly one of the fields selects the reference.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub builtin: Option<String>,
    pub constant: Option<f64>,
    pub expr: Option<String>,
    pub sine: Option<SineSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineSection {
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// `A_0..A_n`; `A_0` bounds the reference.
    pub bounds: Vec<f64>,
    pub state: Vec<StateConstraintSection>,
}

/// Exactly one of `builtin`, `expr`, `constant`; `dpsi_dt` only with `expr`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConstraintSection {
    pub builtin: Option<String>,
    pub expr: Option<String>,
    pub dpsi_dt: Option<String>,
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub gains: Vec<f64>,
    pub k_eps: Vec<f64>,
    pub mu_bar: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnSection {
    pub nodes: usize,
    pub width: f64,
    pub center_box: [f64; 2],
    pub seed: u64,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub filter_tau: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<String>,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub plot_script: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            csv: None,
            decimation: DEFAULT_DECIMATION,
            plot_script: false,
        }
    }
}

fn default_decimation() -> usize {
    DEFAULT_DECIMATION
}

/// A scenario after overrides, with the document it came from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub document: Value,
    pub scenario: Scenario,
}

impl LoadedScenario {
    /// SHA-256 of the effective document in canonical TOML form.
    pub fn config_hash(&self) -> String {
        hash_document(&self.document)
    }

    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into())
    }
}

pub fn hash_document(doc: &Value) -> String {
    let text = toml::to_string(doc).expect("TOML values serialize");
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Finds a scenario by path, falling back to the scenario directory and
/// to the `.scenario` extension.
pub fn resolve_path(name: &Path) -> Result<PathBuf> {
    let with_ext = |p: &Path| {
        if p.extension().is_none() {
            Some(p.with_extension(SCENARIO_EXTENSION))
        } else {
            None
        }
    };
    let mut candidates = vec![name.to_path_buf()];
    candidates.extend(with_ext(name));
    if name.is_relative() {
        if let Some(dir) = std::env::var_os(SCENARIO_DIR_ENV) {
            let joined = Path::new(&dir).join(name);
            let joined_ext = with_ext(&joined);
            candidates.push(joined);
            candidates.extend(joined_ext);
        }
    }
    candidates
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| anyhow!("scenario `{}` not found", name.display()))
}

pub fn load(name: &Path, overrides: &[String]) -> Result<LoadedScenario> {
    let path = resolve_path(name)?;
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut document: Value = toml::from_str::<toml::Table>(&text)
        .map(Value::Table)
        .with_context(|| format!("parsing {}", path.display()))?;
    for o in overrides {
        apply_override(&mut document, o)?;
    }
    let scenario = parse_document(&document)?;
    Ok(LoadedScenario {
        path,
        document,
        scenario,
    })
}

pub fn parse_document(document: &Value) -> Result<Scenario> {
    document
        .clone()
        .try_into::<Scenario>()
        .map_err(|e| anyhow!("invalid scenario: {}", e.to_string().trim_end()))
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Key(String),
    Index(usize),
}

fn parse_path(path: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if !key.is_empty() {
            match key.parse::<usize>() {
                Ok(i) if !out.is_empty() => out.push(Segment::Index(i)),
                _ => out.push(Segment::Key(key.to_string())),
            }
        } else if out.is_empty() || rest.is_empty() {
            bail!("malformed override path `{path}`");
        }
        while !rest.is_empty() {
            let close = rest
                .find(']')
                .ok_or_else(|| anyhow!("unclosed `[` in override path `{path}`"))?;
            let idx = rest[1..close]
                .trim()
                .parse::<usize>()
                .with_context(|| format!("bad index in override path `{path}`"))?;
            out.push(Segment::Index(idx));
            rest = &rest[close + 1..];
            if !rest.is_empty() && !rest.starts_with('[') {
                bail!("malformed override path `{path}`");
            }
        }
    }
    Ok(out)
}

/// Parses the right-hand side as a TOML value, or as a bare string.
pub fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `path=value`. A single bare key that is not a top-level entry
/// is looked up among the tables, and must be unique there.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    set_path(doc, path.trim(), parse_value(raw))
}

pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut segments = parse_path(path)?;
    if let [Segment::Key(key)] = segments.as_slice() {
        let table = doc.as_table().expect("document root is a table");
        if !table.contains_key(key) {
            let owners: Vec<&String> = table
                .iter()
                .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
                .map(|(k, _)| k)
                .collect();
            match owners.as_slice() {
                [one] => segments.insert(0, Segment::Key((*one).clone())),
                [] => bail!("override key `{key}` matches no scenario field"),
                many => bail!(
                    "override key `{key}` is ambiguous between sections {}",
                    many.iter()
                        .map(|s| s.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            }
        }
    }

    let mut cur = doc;
    let last = segments.len() - 1;
    for (i, seg) in segments.iter().enumerate() {
        let is_last = i == last;
        cur = match seg {
            Segment::Key(k) => {
                let table = cur
                    .as_table_mut()
                    .ok_or_else(|| anyhow!("`{path}`: `{k}` is not inside a table"))?;
                if is_last {
                    table.insert(k.clone(), value);
                    return Ok(());
                }
                table
                    .entry(k.clone())
                    .or_insert_with(|| Value::Table(Default::default()))
            }
            Segment::Index(idx) => {
                let array = cur
                    .as_array_mut()
                    .ok_or_else(|| anyhow!("`{path}`: index {idx} applied to a non-array"))?;
                let len = array.len();
                let slot = array
                    .get_mut(*idx)
                    .ok_or_else(|| anyhow!("`{path}`: index {idx} out of range (length {len})"))?;
                if is_last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

fn exactly_one(what: &str, set: &[(&str, bool)]) -> Result<()> {
    let chosen: Vec<&str> = set.iter().filter(|(_, on)| *on).map(|(n, _)| *n).collect();
    match chosen.len() {
        1 => Ok(()),
        0 => bail!(
            "{what} needs one of {}",
            set.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ),
        _ => bail!("{what} sets more than one of {}", chosen.join(", ")),
    }
}

impl Scenario {
    pub fn to_config(&self) -> Result<SimConfig> {
        let plant = PlantModel::from_registry(&self.plant.name, self.plant.order)?;

        let r = &self.reference;
        exactly_one(
            "[reference]",
            &[
                ("builtin", r.builtin.is_some()),
                ("constant", r.constant.is_some()),
                ("expr", r.expr.is_some()),
                ("sine", r.sine.is_some()),
            ],
        )?;
        let reference = if let Some(name) = &r.builtin {
            match name.as_str() {
                "benchmark" => Reference::Benchmark,
                other => bail!("unknown builtin reference `{other}` (known: benchmark)"),
            }
        } else if let Some(c) = r.constant {
            Reference::Constant(c)
        } else if let Some(e) = &r.expr {
            Reference::from_expr(e)?
        } else {
            let s = r.sine.as_ref().expect("checked above");
            Reference::Sine {
                amplitude: s.amplitude,
                frequency: s.frequency,
            }
        };

        let states = self
            .constraints
            .state
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let what = format!("[[constraints.state]] entry {}", i + 1);
                exactly_one(
                    &what,
                    &[
                        ("builtin", s.builtin.is_some()),
                        ("expr", s.expr.is_some()),
                        ("constant", s.constant.is_some()),
                    ],
                )?;
                if s.dpsi_dt.is_some() && s.expr.is_none() {
                    bail!("{what}: dpsi_dt is only allowed with expr");
                }
                Ok(if let Some(b) = &s.builtin {
                    StateConstraint::builtin(b)?
                } else if let Some(e) = &s.expr {
                    StateConstraint::from_expr(e, s.dpsi_dt.as_deref(), i)?
                } else {
                    StateConstraint::constant(s.constant.expect("checked above"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let constraints = ConstraintSpec::new(states, self.constraints.bounds.clone())?;

        if self.output.decimation == 0 {
            bail!("output.decimation must be at least 1");
        }
        if self.sim.t_final.is_nan() || self.sim.t_final < 0.0 {
            bail!("sim.t_final must be non-negative");
        }

        Ok(SimConfig {
            dt: self.sim.dt,
            t_final: self.sim.t_final,
            signal_ceiling: self.sim.signal_ceiling,
            record_every: self.output.decimation,
            record_states: false,
            plant,
            constraints,
            reference,
            gains: self.controller.gains.clone(),
            k_eps: self.controller.k_eps.clone(),
            mu_bar: self.controller.mu_bar,
            rho: self.controller.rho,
            nn: NnConfig {
                nodes: self.nn.nodes,
                width: self.nn.width,
                center_box: (self.nn.center_box[0], self.nn.center_box[1]),
                seed: self.nn.seed,
                lambda: self.nn.lambda.clone(),
                eta: self.nn.eta.clone(),
                filter_tau: self.nn.filter_tau,
            },
            x0: self.initial.x.clone(),
            zeta0: self.initial.zeta.clone(),
        })
    }
}
