//! Declarative experiment configuration: a single `key = value` file with
//! `[section]` headers. Files are the reproducible artifact; the CLI adds
//! nothing beyond `run <config>` and an output-directory override.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got: {text}")]
    Syntax { line: usize, text: String },
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: cannot parse `{value}` as {wanted}")]
    BadValue { key: String, value: String, wanted: &'static str },
    #[error("unknown experiment `{0}` (expected simulate, identities, greens, convergence, equicontinuity, commute or momentum)")]
    UnknownExperiment(String),
    #[error("unknown flow kind `{0}`")]
    UnknownKind(String),
    #[error("unknown scheme `{0}` (expected if_rk4 or etdrk4)")]
    UnknownScheme(String),
    #[error("unknown initial-condition family `{0}` (expected gaussian, soliton or zero)")]
    UnknownFamily(String),
    #[error("grid.n = {0} must be a power of two (≥ 16)")]
    NotPowerOfTwo(usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Identities,
    Greens,
    Convergence,
    Equicontinuity,
    Commute,
    Momentum,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Simulate => "simulate",
            Experiment::Identities => "identities",
            Experiment::Greens => "greens",
            Experiment::Convergence => "convergence",
            Experiment::Equicontinuity => "equicontinuity",
            Experiment::Commute => "commute",
            Experiment::Momentum => "momentum",
        };
        f.write_str(s)
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "simulate" => Experiment::Simulate,
            "identities" => Experiment::Identities,
            "greens" => Experiment::Greens,
            "convergence" => Experiment::Convergence,
            "equicontinuity" => Experiment::Equicontinuity,
            "commute" => Experiment::Commute,
            "momentum" => Experiment::Momentum,
            other => return Err(ConfigError::UnknownExperiment(other.into())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindName {
    Kdv,
    TidalKdv,
    KdvWithPotential,
    Hk,
    TidalHk,
}

impl FromStr for KindName {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "kdv" => KindName::Kdv,
            "tidal_kdv" => KindName::TidalKdv,
            "kdv_with_potential" => KindName::KdvWithPotential,
            "hk" => KindName::Hk,
            "tidal_hk" => KindName::TidalHk,
            other => return Err(ConfigError::UnknownKind(other.into())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeName {
    IfRk4,
    Etdrk4,
}

impl FromStr for SchemeName {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "if_rk4" => SchemeName::IfRk4,
            "etdrk4" => SchemeName::Etdrk4,
            other => return Err(ConfigError::UnknownScheme(other.into())),
        })
    }
}

/// Named initial-condition family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Gaussian { amplitude: f64, sigma: f64 },
    Soliton { kappa_s: f64, x0: f64 },
    Zero,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub x_r: f64,
    pub kind: KindName,
    pub kappa: Option<f64>,
    pub kappa_list: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub scheme: SchemeName,
    pub dealias: bool,
    pub initial: InitialCondition,
    pub out_dir: PathBuf,
    pub snapshot_every: usize,
    pub csv_every: usize,
    pub seed: u64,
    pub sub_box_half: Option<f64>,
    pub strong_s: i64,
    pub samples: usize,
    /// Raw file text, echoed into the manifest.
    pub raw: String,
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(i) => &raw_line[..i],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: idx + 1, text: raw_line.to_string() });
        };
        let full_key = if section.is_empty() {
            key.trim().to_string()
        } else {
            format!("{section}.{}", key.trim())
        };
        if map.insert(full_key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::DuplicateKey(full_key));
        }
    }
    Ok(map)
}

struct Lookup<'a>(&'a BTreeMap<String, String>);

impl Lookup<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey(key.into()))
    }

    fn parse<T: FromStr>(&self, key: &str, wanted: &'static str) -> Result<T, ConfigError> {
        let raw = self.required(key)?;
        raw.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: raw.into(),
            wanted,
        })
    }

    fn parse_or<T: FromStr>(
        &self,
        key: &str,
        wanted: &'static str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: raw.into(),
                wanted,
            }),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let map = parse_kv(text)?;
        let kv = Lookup(&map);

        let experiment: Experiment = kv.required("experiment")?.parse()?;
        let n: usize = kv.parse("grid.n", "an integer")?;
        if n < 16 || !n.is_power_of_two() {
            return Err(ConfigError::NotPowerOfTwo(n));
        }
        let l: f64 = kv.parse("grid.l", "a number")?;

        let c1: f64 = kv.parse_or("profile.c1", "a number", 0.0)?;
        let c2: f64 = kv.parse_or("profile.c2", "a number", 0.0)?;
        let x_r: f64 = kv.parse_or("profile.x_r", "a number", 20.0)?;

        let kind: KindName = kv.required("flow.kind").unwrap_or("kdv").parse()?;
        let kappa: Option<f64> = match kv.get("flow.kappa") {
            None => None,
            Some(raw) => Some(raw.parse().map_err(|_| ConfigError::BadValue {
                key: "flow.kappa".into(),
                value: raw.into(),
                wanted: "a number",
            })?),
        };
        let kappa_list: Vec<f64> = match kv.get("flow.kappa_list") {
            None => Vec::new(),
            Some(raw) => raw
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| ConfigError::BadValue {
                        key: "flow.kappa_list".into(),
                        value: raw.into(),
                        wanted: "comma-separated numbers",
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let t_final: f64 = kv.parse_or("flow.t", "a number", 0.0)?;
        let dt: f64 = kv.parse_or("flow.dt", "a number", 1e-3)?;
        if !(dt > 0.0) {
            return Err(ConfigError::Invalid(format!("flow.dt = {dt} must be positive")));
        }
        let scheme: SchemeName = match kv.get("flow.scheme") {
            None => SchemeName::IfRk4,
            Some(raw) => raw.parse()?,
        };
        let dealias: bool = kv.parse_or("flow.dealias", "true or false", true)?;

        let initial = match kv.get("initial.family").unwrap_or("zero") {
            "gaussian" => InitialCondition::Gaussian {
                amplitude: kv.parse_or("initial.amplitude", "a number", 1.0)?,
                sigma: kv.parse_or("initial.sigma", "a number", 1.0)?,
            },
            "soliton" => InitialCondition::Soliton {
                kappa_s: kv.parse_or("initial.kappa_s", "a number", 1.0)?,
                x0: kv.parse_or("initial.x0", "a number", 0.0)?,
            },
            "zero" => InitialCondition::Zero,
            other => return Err(ConfigError::UnknownFamily(other.into())),
        };

        let out_dir = PathBuf::from(kv.get("output.dir").unwrap_or("out"));
        let snapshot_every: usize = kv.parse_or("output.snapshot_every", "an integer", 0)?;
        let csv_every: usize = kv.parse_or("output.csv_every", "an integer", 1)?;
        let seed: u64 = kv.parse_or("output.seed", "an integer", 0)?;
        let sub_box_half: Option<f64> = match kv.get("output.sub_box_half") {
            None => None,
            Some(raw) => Some(raw.parse().map_err(|_| ConfigError::BadValue {
                key: "output.sub_box_half".into(),
                value: raw.into(),
                wanted: "a number",
            })?),
        };
        let strong_s: i64 = kv.parse_or("output.strong_s", "an integer", 3)?;
        let samples: usize = kv.parse_or("output.samples", "an integer", 21)?;

        let cfg = ExperimentConfig {
            experiment,
            n,
            l,
            c1,
            c2,
            x_r,
            kind,
            kappa,
            kappa_list,
            t_final,
            dt,
            scheme,
            dealias,
            initial,
            out_dir,
            snapshot_every,
            csv_every,
            seed,
            sub_box_half,
            strong_s,
            samples,
            raw: text.to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks: every parameter the chosen experiment needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let need = |cond: bool, what: &str| -> Result<(), ConfigError> {
            if cond {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!(
                    "experiment `{}` requires {what}",
                    self.experiment
                )))
            }
        };
        let hk_kind = matches!(self.kind, KindName::Hk | KindName::TidalHk);
        match self.experiment {
            Experiment::Simulate => {
                need(self.t_final > 0.0, "flow.t > 0")?;
                need(!hk_kind || self.kappa.is_some(), "flow.kappa for an H_κ kind")?;
            }
            Experiment::Identities | Experiment::Greens => {
                need(
                    self.kappa.is_some() || !self.kappa_list.is_empty(),
                    "flow.kappa or flow.kappa_list",
                )?;
            }
            Experiment::Convergence => {
                need(self.kappa_list.len() >= 2, "flow.kappa_list with ≥ 2 entries")?;
                need(self.t_final > 0.0, "flow.t > 0")?;
                need(
                    self.kappa_list.windows(2).all(|w| w[0] < w[1])
                        && self.kappa_list[0] > 0.0,
                    "a sorted positive flow.kappa_list",
                )?;
            }
            Experiment::Equicontinuity => {
                need(!self.kappa_list.is_empty(), "flow.kappa_list (the dyadic N lattice)")?;
                need(self.t_final > 0.0, "flow.t > 0")?;
                need(
                    self.kappa_list.iter().all(|k| k.log2().fract() == 0.0 && *k > 0.0),
                    "dyadic flow.kappa_list entries",
                )?;
            }
            Experiment::Commute => {
                need(self.kappa_list.len() == 2, "flow.kappa_list with exactly two entries (κ, ϰ)")?;
                need(self.t_final > 0.0, "flow.t > 0")?;
            }
            Experiment::Momentum => {
                need(self.t_final > 0.0, "flow.t > 0")?;
                need(self.l >= self.x_r + 20.0, "grid.l ≥ profile.x_r + 20")?;
            }
        }
        Ok(())
    }
}
