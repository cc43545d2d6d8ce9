//! Line-oriented simulation configuration.
//!
//! One `key = value` pair per line, `#` starts a comment, lists are
//! comma-separated. Receivers are written as `kind` or `kind:stages`, for
//! example `pic:3`. Keys left out take the defaults in [`SimConfig::default`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::channel::PhaseModel;
use crate::error::{Error, Result};
use crate::receivers::{ReceiverConfig, ReceiverKind};
use crate::sequences::{default_preferred_pair, gold_family};

/// Smallest frame length accepted for metric runs.
pub const MIN_SYMBOLS: usize = 1000;

/// One receiver entry: kind plus cancellation stages for PIC kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverSpec {
    pub kind: ReceiverKind,
    pub stages: usize,
}

impl ReceiverSpec {
    pub fn receiver_config(&self, step_size: f64) -> Result<ReceiverConfig> {
        ReceiverConfig::new(self.kind, self.stages, step_size)
    }

    pub fn output_stages(&self) -> usize {
        if self.kind.is_multistage() {
            self.stages + 1
        } else {
            1
        }
    }
}

impl std::fmt::Display for ReceiverSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.kind.is_multistage() {
            write!(f, "{}:{}", self.kind, self.stages)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

/// Parses `kind` or `kind:stages`; a bare PIC kind takes `default_stages`.
pub fn parse_receiver(text: &str, default_stages: usize) -> std::result::Result<ReceiverSpec, String> {
    let text = text.trim();
    let (kind, stages) = match text.split_once(':') {
        Some((k, s)) => {
            let kind: ReceiverKind = k.parse()?;
            if !kind.is_multistage() {
                return Err(format!("receiver '{kind}' takes no stage count"));
            }
            let stages = s
                .trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid stage count '{}'", s.trim()))?;
            (kind, stages)
        }
        None => (text.parse::<ReceiverKind>()?, default_stages),
    };
    if kind.is_multistage() && stages == 0 {
        return Err(format!("receiver '{kind}' needs at least one stage"));
    }
    Ok(ReceiverSpec {
        kind,
        stages: if kind.is_multistage() { stages } else { 0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub users: usize,
    /// LFSR degree; the spreading factor is `2^degree - 1`.
    pub degree: u32,
    pub fd_tb: f64,
    pub step_size: f64,
    pub receivers: Vec<ReceiverSpec>,
    pub ebno_db: Vec<f64>,
    /// Symbols per trial.
    pub symbols: usize,
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub phase_model: PhaseModel,
}

pub const DEFAULT_STAGES: usize = 3;

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            users: 20,
            degree: 5,
            fd_tb: 0.003,
            step_size: 1e-4,
            receivers: vec![
                ReceiverSpec {
                    kind: ReceiverKind::Mf,
                    stages: 0,
                },
                ReceiverSpec {
                    kind: ReceiverKind::Sic,
                    stages: 0,
                },
                ReceiverSpec {
                    kind: ReceiverKind::Pic,
                    stages: DEFAULT_STAGES,
                },
                ReceiverSpec {
                    kind: ReceiverKind::BaSic,
                    stages: 0,
                },
                ReceiverSpec {
                    kind: ReceiverKind::BaPic,
                    stages: DEFAULT_STAGES,
                },
            ],
            ebno_db: (0..=6).map(|i| f64::from(i) * 5.0).collect(),
            symbols: 100_000,
            trials: 4,
            seed: 20_100,
            output: PathBuf::from("results.csv"),
            phase_model: PhaseModel::Aligned,
        }
    }
}

impl SimConfig {
    pub fn spreading_factor(&self) -> usize {
        (1usize << self.degree) - 1
    }

    /// Checks ranges; on failure returns the offending key with a message.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let family_size = match default_preferred_pair(self.degree) {
            Ok(pair) => gold_family(self.degree, pair)
                .map_err(|e| ("degree", e.to_string()))?
                .len(),
            Err(e) => return Err(("degree", e.to_string())),
        };
        if self.users == 0 {
            return Err(("users", "at least one user is required".into()));
        }
        if self.users > family_size {
            return Err((
                "users",
                format!(
                    "{} users exceed the degree-{} Gold family of {family_size} codes",
                    self.users, self.degree
                ),
            ));
        }
        if !(self.fd_tb > 0.0 && self.fd_tb < 0.5) {
            return Err((
                "fd_tb",
                format!("normalized Doppler must lie in (0, 0.5), got {}", self.fd_tb),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err((
                "step_size",
                format!("step size must be positive, got {}", self.step_size),
            ));
        }
        if self.receivers.is_empty() {
            return Err(("receivers", "at least one receiver is required".into()));
        }
        for r in &self.receivers {
            r.receiver_config(self.step_size)
                .map_err(|e| ("receivers", e.to_string()))?;
        }
        for (i, r) in self.receivers.iter().enumerate() {
            if self.receivers[..i].iter().any(|q| q.kind == r.kind) {
                return Err(("receivers", format!("receiver '{}' listed twice", r.kind)));
            }
        }
        if self.ebno_db.is_empty() {
            return Err(("ebno_db", "at least one Eb/N0 point is required".into()));
        }
        if let Some(x) = self.ebno_db.iter().find(|x| !x.is_finite()) {
            return Err(("ebno_db", format!("Eb/N0 {x} is not finite")));
        }
        if self.symbols < MIN_SYMBOLS {
            return Err((
                "symbols",
                format!("need at least {MIN_SYMBOLS} symbols per trial, got {}", self.symbols),
            ));
        }
        if self.trials == 0 {
            return Err(("trials", "at least one trial is required".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(key, msg)| Error::InvalidParameter(format!("{key}: {msg}")))
    }

    /// Canonical configuration text; parsing it yields `self` again.
    pub fn to_config_text(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "users = {}", self.users);
        let _ = writeln!(s, "degree = {}", self.degree);
        let _ = writeln!(s, "fd_tb = {}", self.fd_tb);
        let _ = writeln!(s, "step_size = {}", self.step_size);
        let _ = writeln!(
            s,
            "receivers = {}",
            list(&self.receivers.iter().map(ToString::to_string).collect::<Vec<_>>())
        );
        let _ = writeln!(
            s,
            "ebno_db = {}",
            list(&self.ebno_db.iter().map(ToString::to_string).collect::<Vec<_>>())
        );
        let _ = writeln!(s, "symbols = {}", self.symbols);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "phase_model = {}", self.phase_model.as_str());
        s
    }
}

const KEYS: [&str; 12] = [
    "users",
    "degree",
    "fd_tb",
    "step_size",
    "receivers",
    "stages",
    "ebno_db",
    "symbols",
    "trials",
    "seed",
    "output",
    "phase_model",
];

fn parse_value<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("invalid value '{value}'"))
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_value)
        .collect()
}

/// Parses configuration text and fills defaults for missing keys.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut lines: HashMap<&str, usize> = HashMap::new();
    let mut values: Vec<(&str, &str, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Config { line: line_no, message };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        let Some(&key) = KEYS.iter().find(|k| **k == key) else {
            return Err(err(format!("unknown key '{key}'")));
        };
        if value.is_empty() {
            return Err(err(format!("missing value for '{key}'")));
        }
        if lines.insert(key, line_no).is_some() {
            return Err(err(format!("duplicate key '{key}'")));
        }
        values.push((key, value, line_no));
    }

    let mut cfg = SimConfig::default();
    let default_stages = match values.iter().find(|(k, _, _)| *k == "stages") {
        Some((_, v, line)) => parse_value::<usize>(v).map_err(|message| Error::Config { line: *line, message })?,
        None => DEFAULT_STAGES,
    };
    if values.iter().any(|(k, _, _)| *k == "stages") && !values.iter().any(|(k, _, _)| *k == "receivers") {
        for r in cfg.receivers.iter_mut().filter(|r| r.kind.is_multistage()) {
            r.stages = default_stages;
        }
    }
    for &(key, value, line) in &values {
        let res: std::result::Result<(), String> = (|| {
            match key {
                "users" => cfg.users = parse_value(value)?,
                "degree" => cfg.degree = parse_value(value)?,
                "fd_tb" => cfg.fd_tb = parse_value(value)?,
                "step_size" => cfg.step_size = parse_value(value)?,
                "receivers" => {
                    cfg.receivers = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_receiver(s, default_stages))
                        .collect::<std::result::Result<_, _>>()?
                }
                "stages" => {}
                "ebno_db" => cfg.ebno_db = parse_list(value)?,
                "symbols" => cfg.symbols = parse_value(value)?,
                "trials" => cfg.trials = parse_value(value)?,
                "seed" => cfg.seed = parse_value(value)?,
                "output" => cfg.output = PathBuf::from(value),
                "phase_model" => cfg.phase_model = value.parse()?,
                _ => unreachable!("key list and match arms disagree"),
            }
            Ok(())
        })();
        res.map_err(|message| Error::Config { line, message })?;
    }

    cfg.check().map_err(|(key, message)| match lines.get(key) {
        Some(&line) => Error::Config { line, message },
        // a default clashing with another key is reported on that key's line
        None => match key {
            "users" => match lines.get("degree") {
                Some(&line) => Error::Config { line, message },
                None => Error::InvalidParameter(message),
            },
            _ => Error::InvalidParameter(message),
        },
    })?;
    Ok(cfg)
}
