//! Scenario files: TOML or JSON, versioned, strict about unknown keys.

use std::path::Path;

use hyperreg_core::control::Mode;
use hyperreg_core::model::{interp, DisturbanceSet, SpatialGrid, SystemParams, TimeSignal};
use hyperreg_core::plant::Scheme;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: &[(&str, &str)] = &[
    ("static-d3", include_str!("../scenarios/static-d3.toml")),
    ("noise-bounded", include_str!("../scenarios/noise-bounded.toml")),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub grid: GridSpec,
    pub plant: PlantSpec,
    #[serde(default)]
    pub disturbances: DisturbanceSpec,
    pub controller: ControllerSpec,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub lambda: Coefficient,
    pub mu: Coefficient,
    pub gamma1: Coefficient,
    pub gamma2: Coefficient,
    pub q: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    #[serde(default)]
    pub d1: TimeSignal,
    #[serde(default)]
    pub d2: TimeSignal,
    #[serde(default)]
    pub d3: TimeSignal,
    #[serde(default)]
    pub d4: TimeSignal,
    #[serde(default)]
    pub m1: Coefficient,
    #[serde(default)]
    pub m2: Coefficient,
    #[serde(default)]
    pub noise: TimeSignal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default)]
    pub mode: Mode,
    pub rho_tilde: f64,
    #[serde(default)]
    pub k_i: Tunable,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub epsilon: Tunable,
}

fn default_margin() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    #[default]
    ClosedLoop,
    Observer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub kind: RunKind,
    pub cfl: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    /// Horizon in multiples of the round-trip delay.
    pub horizon_tau: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub u: Coefficient,
    #[serde(default)]
    pub v: Coefficient,
    #[serde(default)]
    pub eta: f64,
    pub uhat: Option<Coefficient>,
    pub vhat: Option<Coefficient>,
}

/// Pass/fail assertion evaluated on the trace. Times are in units of the
/// round-trip delay.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    AbsYBelow {
        from_tau: f64,
        to_tau: f64,
        bound: f64,
    },
    /// `sup|y|` over the late window at most `factor` times the early one.
    NoGrowth {
        early_tau: [f64; 2],
        late_tau: [f64; 2],
        factor: f64,
    },
    ObsErrBelow {
        from_tau: f64,
        bound: f64,
    },
    Finite,
}

/// `"auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Tunable {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Tunable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Tunable::Auto => s.serialize_str("auto"),
            Tunable::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Tunable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Tunable::Value(v)),
            Raw::Str(s) if s == "auto" => Ok(Tunable::Auto),
            Raw::Str(s) => Err(de::Error::custom(format!("expected \"auto\" or a number, got {s:?}"))),
        }
    }
}

/// Spatial coefficient on `[0, 1]`: a constant, a polynomial in `x`
/// such as `"1 + 0.5*x - 2x^2"`, or uniformly spaced samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Polynomial(String),
    Samples { samples: Vec<f64> },
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Constant(0.0)
    }
}

impl Coefficient {
    pub fn sample(&self, grid: &SpatialGrid) -> Result<Vec<f64>, String> {
        match self {
            Coefficient::Constant(c) => Ok(vec![*c; grid.len()]),
            Coefficient::Polynomial(s) => {
                let p = parse_polynomial(s)?;
                Ok(grid.sample(|x| p.iter().rev().fold(0.0, |acc, c| acc * x + c)))
            }
            Coefficient::Samples { samples } => {
                if samples.len() < 2 {
                    return Err("samples need at least two values".into());
                }
                let h = 1.0 / (samples.len() - 1) as f64;
                Ok(grid.sample(|x| interp(samples, h, x)))
            }
        }
    }
}

/// Coefficients `c[k]` of `Σ c[k] x^k`.
pub fn parse_polynomial(src: &str) -> Result<Vec<f64>, String> {
    let err = |msg: &str| format!("polynomial {src:?}: {msg}");
    let chars: Vec<char> = src.chars().filter(|c| !c.is_whitespace()).collect();
    if chars.is_empty() {
        return Err(err("empty"));
    }
    let mut coeffs = vec![0.0; 1];
    let mut i = 0;
    while i < chars.len() {
        let mut sign = 1.0;
        if chars[i] == '+' || chars[i] == '-' {
            if chars[i] == '-' {
                sign = -1.0;
            }
            i += 1;
        } else if i > 0 {
            return Err(err("expected '+' or '-'"));
        }
        let (mut value, mut degree, mut factors) = (sign, 0usize, 0);
        loop {
            if i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                value *= text.parse::<f64>().map_err(|_| err(&format!("bad number {text:?}")))?;
            } else if i < chars.len() && chars[i] == 'x' {
                i += 1;
                let mut power = 1;
                if i < chars.len() && chars[i] == '^' {
                    i += 1;
                    let start = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().collect();
                    power = text
                        .parse::<usize>()
                        .map_err(|_| err("exponent must be a non-negative integer"))?;
                }
                degree += power;
            } else {
                return Err(err(if i < chars.len() {
                    "unexpected character"
                } else {
                    "dangling operator"
                }));
            }
            factors += 1;
            if i < chars.len() && chars[i] == '*' {
                i += 1;
                continue;
            }
            // Implicit product such as `2x`.
            if i < chars.len() && chars[i] == 'x' {
                continue;
            }
            break;
        }
        debug_assert!(factors > 0);
        if degree >= coeffs.len() {
            coeffs.resize(degree + 1, 0.0);
        }
        coeffs[degree] += value;
    }
    Ok(coeffs)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
        s.check_version()
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
        s.check_version()
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, CliError> {
        let s: Scenario = serde_json::from_value(value).map_err(|e| CliError::Input(e.to_string()))?;
        s.check_version()
    }

    fn check_version(self) -> Result<Self, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(self)
    }

    pub fn params(&self) -> Result<SystemParams, CliError> {
        let grid = SpatialGrid::new(self.grid.n_cells)?;
        let p = &self.plant;
        let f = |c: &Coefficient, what: &str| c.sample(&grid).map_err(|e| CliError::Input(format!("{what}: {e}")));
        let params = SystemParams {
            lambda: f(&p.lambda, "plant.lambda")?,
            mu: f(&p.mu, "plant.mu")?,
            gamma1: f(&p.gamma1, "plant.gamma1")?,
            gamma2: f(&p.gamma2, "plant.gamma2")?,
            q: p.q,
            rho: p.rho,
            grid,
        };
        params.check()?;
        Ok(params)
    }

    pub fn disturbances(&self, grid: &SpatialGrid) -> Result<DisturbanceSet, CliError> {
        let d = &self.disturbances;
        let f = |c: &Coefficient, what: &str| c.sample(grid).map_err(|e| CliError::Input(format!("{what}: {e}")));
        let set = DisturbanceSet {
            d1: d.d1.clone(),
            d2: d.d2.clone(),
            d3: d.d3.clone(),
            d4: d.d4.clone(),
            m1: f(&d.m1, "disturbances.m1")?,
            m2: f(&d.m2, "disturbances.m2")?,
            noise: d.noise.clone(),
        };
        set.check(grid)?;
        for s in set.d().into_iter().chain([&set.noise]) {
            s.validate()?;
        }
        Ok(set)
    }
}

/// Raw text and format of a scenario given as a path or bundled name.
pub fn read_source(spec: &str) -> Result<(String, Format), CliError> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{spec}: {e}")))?;
        let fmt = if path.extension().is_some_and(|e| e == "json") {
            Format::Json
        } else {
            Format::Toml
        };
        return Ok((text, fmt));
    }
    BUNDLED
        .iter()
        .find(|(name, _)| *name == spec)
        .map(|(_, text)| (text.to_string(), Format::Toml))
        .ok_or_else(|| {
            let names: Vec<&str> = BUNDLED.iter().map(|b| b.0).collect();
            CliError::Input(format!(
                "{spec}: no such file or bundled scenario ({})",
                names.join(", ")
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

pub fn load(spec: &str) -> Result<Scenario, CliError> {
    let (text, fmt) = read_source(spec)?;
    match fmt {
        Format::Toml => Scenario::from_toml(&text),
        Format::Json => Scenario::from_json(&text),
    }
}

/// Scenario as a generic tree, for sweeps that patch individual keys.
pub fn load_value(spec: &str) -> Result<serde_json::Value, CliError> {
    let (text, fmt) = read_source(spec)?;
    match fmt {
        Format::Toml => toml::from_str(&text).map_err(|e| CliError::Input(e.to_string())),
        Format::Json => serde_json::from_str(&text).map_err(|e| CliError::Input(e.to_string())),
    }
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|b| b.0)
}
