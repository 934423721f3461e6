//! Scenario files: flat sectioned key-value text.
//!
//! Grammar (documented in the README): blank lines and `#` comments are
//! ignored, `[section]` opens one of the five fixed sections, and every
//! other line is `key = value`. Values are floats, integers, booleans,
//! bare words, or comma-separated float lists. Unknown sections or keys
//! are rejected; every key has a documented default, so the effective
//! configuration is echoed back with per-key provenance.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nlobs_core::harness::{
    ConstraintSettings, IntegrationSettings, RowatScenario, ScenarioError,
};
use nlobs_core::observer::{make_omegas, ObserverConfig, SigmaSpec};
use nlobs_core::plant::{Disturbance, RowatParams};

#[derive(Debug)]
pub enum ScenarioFileError {
    Io { path: String, err: std::io::Error },
    Syntax { line: usize, msg: String },
    UnknownSection { line: usize, name: String },
    UnknownKey { line: usize, path: String },
    DuplicateKey { line: usize, path: String },
    BadValue { line: usize, path: String, msg: String },
    Invalid(ScenarioError),
}

impl fmt::Display for ScenarioFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioFileError::Io { path, err } => write!(f, "cannot read {path}: {err}"),
            ScenarioFileError::Syntax { line, msg } => write!(f, "line {line}: {msg}"),
            ScenarioFileError::UnknownSection { line, name } => {
                write!(f, "line {line}: unknown section [{name}]")
            }
            ScenarioFileError::UnknownKey { line, path } => {
                write!(f, "line {line}: unknown key {path}")
            }
            ScenarioFileError::DuplicateKey { line, path } => {
                write!(f, "line {line}: duplicate key {path}")
            }
            ScenarioFileError::BadValue { line, path, msg } => {
                write!(f, "line {line}: bad value for {path}: {msg}")
            }
            ScenarioFileError::Invalid(e) => write!(f, "invalid scenario: {e}"),
        }
    }
}

impl std::error::Error for ScenarioFileError {}

/// Output block (paths are owned by the CLI layer, not the core).
#[derive(Clone, Debug)]
pub struct OutputSettings {
    pub dir: String,
    pub stem: String,
}

/// A parsed scenario: the core experiment plus output settings and the
/// effective-configuration echo.
pub struct Scenario {
    pub core: RowatScenario,
    pub outputs: OutputSettings,
    /// `section.key = value` lines for every key, with provenance.
    pub effective: Vec<String>,
}

struct RawEntry {
    line: usize,
    value: String,
}

struct RawFile {
    entries: std::collections::BTreeMap<(String, String), RawEntry>,
}

const SECTIONS: [&str; 5] = ["plant", "observer", "constraints", "integration", "outputs"];

const KEYS: &[(&str, &str)] = &[
    ("plant", "tau_m"),
    ("plant", "tau_s"),
    ("plant", "sigma_s"),
    ("plant", "sigma_f"),
    ("plant", "a_f"),
    ("plant", "v0"),
    ("plant", "q0"),
    ("plant", "disturbance"),
    ("plant", "disturbance_bound"),
    ("plant", "disturbance_freq"),
    ("plant", "disturbance_seed"),
    ("plant", "disturbance_tones"),
    ("plant", "theta_min"),
    ("plant", "theta_max"),
    ("plant", "lambda_min"),
    ("plant", "lambda_max"),
    ("observer", "b"),
    ("observer", "l"),
    ("observer", "gamma_theta"),
    ("observer", "gamma"),
    ("observer", "epsilon"),
    ("observer", "sigma_bound"),
    ("observer", "sigma_slope"),
    ("observer", "zeta0"),
    ("observer", "theta0"),
    ("observer", "phase0"),
    ("observer", "renormalize"),
    ("constraints", "enabled"),
    ("constraints", "eps_pi"),
    ("constraints", "u1_literal"),
    ("constraints", "offchart_ceiling"),
    ("integration", "h"),
    ("integration", "t_final"),
    ("integration", "record_every"),
    ("outputs", "dir"),
    ("outputs", "stem"),
];

fn parse_raw(text: &str) -> Result<RawFile, ScenarioFileError> {
    let mut entries = std::collections::BTreeMap::new();
    let mut section: Option<String> = None;
    let known: BTreeSet<(&str, &str)> = KEYS.iter().copied().collect();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let body = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or(ScenarioFileError::Syntax {
                    line,
                    msg: "unterminated section header".into(),
                })?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ScenarioFileError::UnknownSection { line, name });
            }
            section = Some(name);
            continue;
        }
        let (key, value) = body.split_once('=').ok_or(ScenarioFileError::Syntax {
            line,
            msg: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let sec = section.clone().ok_or(ScenarioFileError::Syntax {
            line,
            msg: "key outside any [section]".into(),
        })?;
        if !known.contains(&(sec.as_str(), key.as_str())) {
            return Err(ScenarioFileError::UnknownKey {
                line,
                path: format!("{sec}.{key}"),
            });
        }
        if entries
            .insert((sec.clone(), key.clone()), RawEntry { line, value })
            .is_some()
        {
            return Err(ScenarioFileError::DuplicateKey {
                line,
                path: format!("{sec}.{key}"),
            });
        }
    }
    Ok(RawFile { entries })
}

struct Resolver {
    raw: RawFile,
    effective: Vec<String>,
    used: BTreeSet<(String, String)>,
}

impl Resolver {
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.used.insert((section.to_string(), key.to_string()));
        self.raw
            .entries
            .get(&(section.to_string(), key.to_string()))
            .map(|e| (e.line, e.value.clone()))
    }

    fn echo(&mut self, section: &str, key: &str, value: &str, from_file: bool) {
        let origin = if from_file { "scenario file" } else { "default" };
        self.effective
            .push(format!("{section}.{key} = {value}  # {origin}"));
    }

    fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ScenarioFileError> {
        match self.take(section, key) {
            Some((line, v)) => {
                let parsed = v.parse::<f64>().map_err(|e| ScenarioFileError::BadValue {
                    line,
                    path: format!("{section}.{key}"),
                    msg: e.to_string(),
                })?;
                self.echo(section, key, &v, true);
                Ok(parsed)
            }
            None => {
                self.echo(section, key, &format!("{default}"), false);
                Ok(default)
            }
        }
    }

    fn usize_(
        &mut self,
        section: &str,
        key: &str,
        default: usize,
    ) -> Result<usize, ScenarioFileError> {
        match self.take(section, key) {
            Some((line, v)) => {
                let parsed = v.parse::<usize>().map_err(|e| ScenarioFileError::BadValue {
                    line,
                    path: format!("{section}.{key}"),
                    msg: e.to_string(),
                })?;
                self.echo(section, key, &v, true);
                Ok(parsed)
            }
            None => {
                self.echo(section, key, &format!("{default}"), false);
                Ok(default)
            }
        }
    }

    fn u64_(&mut self, section: &str, key: &str, default: u64) -> Result<u64, ScenarioFileError> {
        match self.take(section, key) {
            Some((line, v)) => {
                let parsed = v.parse::<u64>().map_err(|e| ScenarioFileError::BadValue {
                    line,
                    path: format!("{section}.{key}"),
                    msg: e.to_string(),
                })?;
                self.echo(section, key, &v, true);
                Ok(parsed)
            }
            None => {
                self.echo(section, key, &format!("{default}"), false);
                Ok(default)
            }
        }
    }

    fn bool_(&mut self, section: &str, key: &str, default: bool) -> Result<bool, ScenarioFileError> {
        match self.take(section, key) {
            Some((line, v)) => {
                let parsed = match v.as_str() {
                    "true" | "yes" | "on" => true,
                    "false" | "no" | "off" => false,
                    other => {
                        return Err(ScenarioFileError::BadValue {
                            line,
                            path: format!("{section}.{key}"),
                            msg: format!("expected true/false, got `{other}`"),
                        })
                    }
                };
                self.echo(section, key, &v, true);
                Ok(parsed)
            }
            None => {
                self.echo(section, key, if default { "true" } else { "false" }, false);
                Ok(default)
            }
        }
    }

    fn list(
        &mut self,
        section: &str,
        key: &str,
        default: &[f64],
    ) -> Result<Vec<f64>, ScenarioFileError> {
        match self.take(section, key) {
            Some((line, v)) => {
                let parsed: Result<Vec<f64>, _> =
                    v.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
                let parsed = parsed.map_err(|e| ScenarioFileError::BadValue {
                    line,
                    path: format!("{section}.{key}"),
                    msg: e.to_string(),
                })?;
                self.echo(section, key, &v, true);
                Ok(parsed)
            }
            None => {
                let rendered = default
                    .iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                self.echo(section, key, &rendered, false);
                Ok(default.to_vec())
            }
        }
    }

    fn word(
        &mut self,
        section: &str,
        key: &str,
        default: &str,
    ) -> Result<(String, usize), ScenarioFileError> {
        match self.take(section, key) {
            Some((line, v)) => {
                self.echo(section, key, &v, true);
                Ok((v, line))
            }
            None => {
                self.echo(section, key, default, false);
                Ok((default.to_string(), 0))
            }
        }
    }
}

/// Parse and validate a scenario file. Defaults reproduce the reference
/// estimation experiment.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let text = std::fs::read_to_string(path).map_err(|err| ScenarioFileError::Io {
        path: path.display().to_string(),
        err,
    })?;
    load_scenario_str(&text)
}

pub fn load_scenario_str(text: &str) -> Result<Scenario, ScenarioFileError> {
    let raw = parse_raw(text)?;
    let mut r = Resolver {
        raw,
        effective: Vec::new(),
        used: BTreeSet::new(),
    };

    let plant = RowatParams {
        tau_m: r.f64("plant", "tau_m", 0.1666)?,
        tau_s: r.f64("plant", "tau_s", 5.0)?,
        sigma_s: r.f64("plant", "sigma_s", 0.8)?,
        sigma_f: r.f64("plant", "sigma_f", 2.0)?,
        a_f: r.f64("plant", "a_f", 1.0)?,
    };
    let x0 = [r.f64("plant", "v0", 1.0)?, r.f64("plant", "q0", 0.0)?];
    let (dist_kind, dist_line) = r.word("plant", "disturbance", "none")?;
    let disturbance_bound = r.f64("plant", "disturbance_bound", 0.0)?;
    let disturbance_freq = r.f64("plant", "disturbance_freq", 1.0)?;
    let disturbance_seed = r.u64_("plant", "disturbance_seed", 1)?;
    let disturbance_tones = r.usize_("plant", "disturbance_tones", 4)?;
    let disturbance = match dist_kind.as_str() {
        "none" => Disturbance::None,
        "sin" => Disturbance::Sinusoid {
            freq: disturbance_freq,
        },
        "noise" => Disturbance::seeded(disturbance_seed, 2, disturbance_tones.max(1)),
        other => {
            return Err(ScenarioFileError::BadValue {
                line: dist_line,
                path: "plant.disturbance".into(),
                msg: format!("expected none|sin|noise, got `{other}`"),
            })
        }
    };
    let theta_min = r.list("plant", "theta_min", &[-9.0, 3.0, -4.0, 0.3])?;
    let theta_max = r.list("plant", "theta_max", &[-3.0, 9.0, -0.5, 2.5])?;
    if theta_min.len() != 4 || theta_max.len() != 4 {
        return Err(ScenarioFileError::BadValue {
            line: 0,
            path: "plant.theta_min/theta_max".into(),
            msg: "expected 4 entries".into(),
        });
    }
    let theta_box: Vec<[f64; 2]> = theta_min
        .iter()
        .zip(&theta_max)
        .map(|(&lo, &hi)| [lo, hi])
        .collect();
    let lambda_min = r.f64("plant", "lambda_min", 1.0)?;
    let lambda_max = r.f64("plant", "lambda_max", 3.0)?;

    let observer = ObserverConfig {
        b: r.list("observer", "b", &[1.0])?,
        l: r.list("observer", "l", &[-2.0, -1.0])?,
        gamma_theta: r.f64("observer", "gamma_theta", 4.0)?,
        gamma: r.f64("observer", "gamma", 0.002)?,
        epsilon: r.f64("observer", "epsilon", 0.005)?,
        sigma: SigmaSpec {
            bound: r.f64("observer", "sigma_bound", 1.0)?,
            slope: r.f64("observer", "sigma_slope", 100.0)?,
        },
        omega: make_omegas(1),
        lambda_box: vec![[lambda_min, lambda_max]],
        renormalize: r.bool_("observer", "renormalize", true)?,
    };
    let zeta0 = r.list("observer", "zeta0", &[1.0, 0.0])?;
    let theta0 = r.list("observer", "theta0", &[0.0, 0.0, 0.0, 0.0])?;
    let phase0 = r.list("observer", "phase0", &[std::f64::consts::PI])?;

    let constraints = ConstraintSettings {
        enabled: r.bool_("constraints", "enabled", true)?,
        eps_pi: r.f64("constraints", "eps_pi", 0.0022)?,
        literal_u1: r.bool_("constraints", "u1_literal", false)?,
        offchart_ceiling: r.f64("constraints", "offchart_ceiling", 1.0)?,
    };

    let integration = IntegrationSettings {
        h: r.f64("integration", "h", 1e-3)?,
        t_final: r.f64("integration", "t_final", 3000.0)?,
        record_every: r.usize_("integration", "record_every", 100)?,
    };

    let outputs = OutputSettings {
        dir: r.word("outputs", "dir", "results")?.0,
        stem: r.word("outputs", "stem", "run")?.0,
    };

    let core = RowatScenario {
        plant,
        x0,
        disturbance,
        disturbance_bound,
        theta_box,
        observer,
        zeta0,
        theta0,
        phase0,
        constraints,
        integration,
    };
    core.validate().map_err(ScenarioFileError::Invalid)?;

    Ok(Scenario {
        core,
        outputs,
        effective: r.effective,
    })
}
