//! Sweep configuration: a TOML file merged with command-line overrides.
//!
//! ```toml
//! seed = 7
//! trials = 100000
//! N = 1
//! mode = "imperfect"      # or "ideal"
//! scatter = "retained"    # or "heralded"
//! workers = 4
//!
//! [inputs]
//! balanced = true         # or: random = 16, or: alpha/beta/a/b = [re, im]
//!
//! [cavity]
//! G = [10, 100, 1000]     # both nodes; or G_A / G_B, or g/gamma/gamma_s
//! Pz = 1.0
//!
//! [noise]
//! p_l = [0.0, 0.05, 0.1]
//! p_dc = 0.01
//! f = 0.0
//!
//! [output]
//! path = "sweep.csv"
//! format = "csv"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::cavity::{CavityParams, CpfMode};
use crate::protocol::{NodeInput, ScatterPolicy};
use crate::qstate::C64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Self::Int(i) => i as f64,
            Self::Float(x) => x,
        }
    }
}

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Values {
    One(#[serde(deserialize_with = "number")] f64),
    Many(#[serde(deserialize_with = "numbers")] Vec<f64>),
}

fn number<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Number::deserialize(d).map(Number::value)
}

fn numbers<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<Number>::deserialize(d).map(|v| v.into_iter().map(Number::value).collect())
}

impl Values {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Self::One(x) => vec![*x],
            Self::Many(v) => v.clone(),
        }
    }
}

impl From<Vec<f64>> for Values {
    fn from(v: Vec<f64>) -> Self {
        Self::Many(v)
    }
}

/// `re` or `[re, im]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(#[serde(deserialize_with = "number")] f64),
    Complex(#[serde(deserialize_with = "numbers")] Vec<f64>),
}

impl Amplitude {
    fn to_complex(&self, field: &str) -> Result<C64> {
        match self {
            Self::Real(x) => Ok(C64::new(*x, 0.0)),
            Self::Complex(v) if v.len() == 2 => Ok(C64::new(v[0], v[1])),
            Self::Complex(_) => Err(ConfigError::new(field, "expected `re` or `[re, im]`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsSection {
    pub balanced: Option<bool>,
    pub random: Option<i64>,
    pub alpha: Option<Amplitude>,
    pub beta: Option<Amplitude>,
    pub a: Option<Amplitude>,
    pub b: Option<Amplitude>,
}

impl InputsSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    #[serde(rename = "G")]
    pub big_g: Option<Values>,
    #[serde(rename = "G_A")]
    pub big_g_a: Option<Values>,
    #[serde(rename = "G_B")]
    pub big_g_b: Option<Values>,
    pub g: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_s: Option<f64>,
    #[serde(rename = "g_A")]
    pub g_a: Option<f64>,
    #[serde(rename = "gamma_A")]
    pub gamma_a: Option<f64>,
    #[serde(rename = "gamma_s_A")]
    pub gamma_s_a: Option<f64>,
    #[serde(rename = "g_B")]
    pub g_b: Option<f64>,
    #[serde(rename = "gamma_B")]
    pub gamma_b: Option<f64>,
    #[serde(rename = "gamma_s_B")]
    pub gamma_s_b: Option<f64>,
    #[serde(rename = "Pz")]
    pub pz: Option<Values>,
    #[serde(rename = "Pz_A")]
    pub pz_a: Option<Values>,
    #[serde(rename = "Pz_B")]
    pub pz_b: Option<Values>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub p_l: Option<Values>,
    pub p_dc: Option<Values>,
    pub f: Option<Values>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<String>,
}

/// Unvalidated configuration, as read from a file or assembled from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub trials: Option<i64>,
    #[serde(rename = "N")]
    pub n: Option<i64>,
    pub mode: Option<String>,
    pub scatter: Option<String>,
    pub workers: Option<i64>,
    #[serde(default)]
    pub inputs: InputsSection,
    #[serde(default)]
    pub cavity: CavitySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub output: OutputSection,
}

macro_rules! take {
    ($dst:expr, $src:expr, $($field:ident).+) => {
        if $src.$($field).+.is_some() {
            $dst.$($field).+ = $src.$($field).+.clone();
        }
    };
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().replace('\n', " ");
            ConfigError::new("config", message.trim().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `other` win. Any input selection in `other` replaces the
    /// whole `[inputs]` section, and cavity-parameter triples replace `G`.
    pub fn merge(mut self, other: &RawConfig) -> Self {
        take!(self, other, seed);
        take!(self, other, trials);
        take!(self, other, n);
        take!(self, other, mode);
        take!(self, other, scatter);
        take!(self, other, workers);
        if !other.inputs.is_empty() {
            self.inputs = other.inputs.clone();
        }
        let c = &other.cavity;
        if c.big_g.is_some() || c.g.is_some() || c.gamma.is_some() || c.gamma_s.is_some() {
            self.cavity.big_g = None;
            self.cavity.g = None;
            self.cavity.gamma = None;
            self.cavity.gamma_s = None;
        }
        if c.big_g_a.is_some() || c.g_a.is_some() {
            self.cavity.big_g_a = None;
            self.cavity.g_a = None;
        }
        if c.big_g_b.is_some() || c.g_b.is_some() {
            self.cavity.big_g_b = None;
            self.cavity.g_b = None;
        }
        take!(self, other, cavity.big_g);
        take!(self, other, cavity.big_g_a);
        take!(self, other, cavity.big_g_b);
        take!(self, other, cavity.g);
        take!(self, other, cavity.gamma);
        take!(self, other, cavity.gamma_s);
        take!(self, other, cavity.g_a);
        take!(self, other, cavity.gamma_a);
        take!(self, other, cavity.gamma_s_a);
        take!(self, other, cavity.g_b);
        take!(self, other, cavity.gamma_b);
        take!(self, other, cavity.gamma_s_b);
        take!(self, other, cavity.pz);
        take!(self, other, cavity.pz_a);
        take!(self, other, cavity.pz_b);
        take!(self, other, noise.p_l);
        take!(self, other, noise.p_dc);
        take!(self, other, noise.f);
        take!(self, other, output.path);
        take!(self, other, output.format);
        self
    }

    pub fn validate(&self) -> Result<SweepConfig> {
        let trials = match self.trials {
            None => 1000,
            Some(t) if t >= 1 => t as u64,
            Some(t) => return Err(ConfigError::new("trials", format!("must be >= 1, got {t}"))),
        };
        let n = match self.n {
            None => 1,
            Some(n) if (1..=i64::from(u16::MAX)).contains(&n) => n as u32,
            Some(n) => return Err(ConfigError::new("N", format!("must be >= 1, got {n}"))),
        };
        let workers = match self.workers {
            None => None,
            Some(w) if w >= 1 => Some(w as usize),
            Some(w) => {
                return Err(ConfigError::new(
                    "workers",
                    format!("must be >= 1, got {w}"),
                ))
            }
        };
        let mode = match &self.mode {
            None => CpfMode::Imperfect,
            Some(m) => m
                .parse()
                .map_err(|_| ConfigError::new("mode", format!("unknown mode `{m}`")))?,
        };
        let scatter = match &self.scatter {
            None => ScatterPolicy::default(),
            Some(s) => s
                .parse()
                .map_err(|_| ConfigError::new("scatter", format!("unknown policy `{s}`")))?,
        };
        let format = match self.output.format.as_deref() {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => {
                return Err(ConfigError::new(
                    "format",
                    format!("expected `csv` or `json`, got `{other}`"),
                ))
            }
        };
        Ok(SweepConfig {
            inputs: self.inputs_spec()?,
            big_g: self.cooperativity_axis()?,
            pz: side_axis(
                "Pz",
                self.cavity.pz.as_ref(),
                self.cavity.pz_a.as_ref(),
                self.cavity.pz_b.as_ref(),
                1.0,
                non_negative,
            )?,
            p_l: grid("p_l", self.noise.p_l.as_ref(), 0.0, probability)?,
            p_dc: grid("p_dc", self.noise.p_dc.as_ref(), 0.0, probability)?,
            f: grid("f", self.noise.f.as_ref(), 0.0, probability)?,
            n,
            trials,
            seed: self.seed.unwrap_or(0),
            mode,
            scatter,
            workers,
            output: self.output.path.clone(),
            format,
        })
    }

    fn inputs_spec(&self) -> Result<InputSpec> {
        let s = &self.inputs;
        let explicit = [&s.alpha, &s.beta, &s.a, &s.b];
        let n_explicit = explicit.iter().filter(|x| x.is_some()).count();
        let balanced = s.balanced.unwrap_or(false);
        let kinds =
            usize::from(balanced) + usize::from(s.random.is_some()) + usize::from(n_explicit > 0);
        if kinds > 1 {
            return Err(ConfigError::new(
                "inputs",
                "choose one of balanced, random or explicit amplitudes",
            ));
        }
        if let Some(count) = s.random {
            if count < 1 {
                return Err(ConfigError::new(
                    "random",
                    format!("must be >= 1, got {count}"),
                ));
            }
            return Ok(InputSpec::Random {
                count: count as usize,
            });
        }
        if n_explicit == 0 {
            return Ok(InputSpec::Balanced);
        }
        if n_explicit < 4 {
            return Err(ConfigError::new(
                "inputs",
                "alpha, beta, a and b must all be given",
            ));
        }
        let amp = |name: &str, v: &Option<Amplitude>| -> Result<C64> {
            v.as_ref().expect("checked above").to_complex(name)
        };
        let node = |name: &str, x: C64, y: C64| {
            NodeInput::new(x, y).map_err(|e| ConfigError::new(name, e.to_string()))
        };
        Ok(InputSpec::Explicit(
            node("alpha", amp("alpha", &s.alpha)?, amp("beta", &s.beta)?)?,
            node("a", amp("a", &s.a)?, amp("b", &s.b)?)?,
        ))
    }

    fn cooperativity_axis(&self) -> Result<SideAxis> {
        let c = &self.cavity;
        let triple = |suffix: &str, g: Option<f64>, gamma: Option<f64>, gamma_s: Option<f64>| {
            let field = format!("g{suffix}");
            match (g, gamma, gamma_s) {
                (None, None, None) => Ok(None),
                (Some(g), gamma, gamma_s) => {
                    let p = CavityParams::new(g, gamma.unwrap_or(1.0), gamma_s.unwrap_or(1.0))
                        .map_err(|e| ConfigError::new(field, e.to_string()))?;
                    Ok(Some(p.cooperativity()))
                }
                _ => Err(ConfigError::new(field, "gamma given without g")),
            }
        };
        let linked = triple("", c.g, c.gamma, c.gamma_s)?;
        let side_a = triple(
            "_A",
            c.g_a,
            c.gamma_a.or(c.gamma),
            c.gamma_s_a.or(c.gamma_s),
        )?;
        let side_b = triple(
            "_B",
            c.g_b,
            c.gamma_b.or(c.gamma),
            c.gamma_s_b.or(c.gamma_s),
        )?;
        if linked.is_some() && c.big_g.is_some() {
            return Err(ConfigError::new(
                "G",
                "give either G or (g, gamma, gamma_s)",
            ));
        }
        if side_a.is_some() && c.big_g_a.is_some() {
            return Err(ConfigError::new("G_A", "give either G_A or g_A"));
        }
        if side_b.is_some() && c.big_g_b.is_some() {
            return Err(ConfigError::new("G_B", "give either G_B or g_B"));
        }
        let from_triple = |x: Option<f64>| x.map(Values::One);
        side_axis(
            "G",
            c.big_g.clone().or(from_triple(linked)).as_ref(),
            c.big_g_a.clone().or(from_triple(side_a)).as_ref(),
            c.big_g_b.clone().or(from_triple(side_b)).as_ref(),
            100.0,
            non_negative,
        )
    }
}

fn non_negative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn probability(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn grid(
    field: &str,
    values: Option<&Values>,
    default: f64,
    ok: fn(f64) -> bool,
) -> Result<Vec<f64>> {
    let v = values.map(Values::to_vec).unwrap_or_else(|| vec![default]);
    if v.is_empty() {
        return Err(ConfigError::new(field, "grid is empty"));
    }
    if let Some(bad) = v.iter().find(|x| !ok(**x)) {
        return Err(ConfigError::new(field, format!("value {bad} out of range")));
    }
    Ok(v)
}

fn side_axis(
    field: &str,
    both: Option<&Values>,
    a: Option<&Values>,
    b: Option<&Values>,
    default: f64,
    ok: fn(f64) -> bool,
) -> Result<SideAxis> {
    if a.is_none() && b.is_none() {
        return Ok(SideAxis::Linked(grid(field, both, default, ok)?));
    }
    let fallback = both;
    Ok(SideAxis::Split(
        grid(&format!("{field}_A"), a.or(fallback), default, ok)?,
        grid(&format!("{field}_B"), b.or(fallback), default, ok)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSpec {
    Balanced,
    Explicit(NodeInput, NodeInput),
    /// `count` Haar-random pairs drawn from the master seed; trial `i` uses
    /// pair `i mod count`.
    Random {
        count: usize,
    },
}

/// A per-node quantity swept either jointly or as a product of two grids.
#[derive(Debug, Clone, PartialEq)]
pub enum SideAxis {
    Linked(Vec<f64>),
    Split(Vec<f64>, Vec<f64>),
}

impl SideAxis {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Linked(v) => v.iter().map(|&x| (x, x)).collect(),
            Self::Split(a, b) => a
                .iter()
                .flat_map(|&x| b.iter().map(move |&y| (x, y)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// Validated sweep definition.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub inputs: InputSpec,
    pub big_g: SideAxis,
    pub pz: SideAxis,
    pub p_l: Vec<f64>,
    pub p_dc: Vec<f64>,
    pub f: Vec<f64>,
    pub n: u32,
    pub trials: u64,
    pub seed: u64,
    pub mode: CpfMode,
    pub scatter: ScatterPolicy,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl SweepConfig {
    pub fn grid_size(&self) -> usize {
        self.big_g.pairs().len()
            * self.pz.pairs().len()
            * self.p_l.len()
            * self.p_dc.len()
            * self.f.len()
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        RawConfig::default().validate().expect("defaults are valid")
    }
}
