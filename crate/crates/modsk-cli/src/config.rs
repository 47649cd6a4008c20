//! Experiment configuration: defaults per command, a flat `key = value`
//! config-file format, and the metadata sidecar every run emits. A
//! sidecar is itself a valid config file, so any run can be reproduced
//! from its sidecar alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration error: {0}")]
    Invalid(String),
    #[error("configuration error: unknown key `{0}`")]
    UnknownKey(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    FbSweep,
    FfSweep,
    SkCurves,
    Bounds,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::FbSweep => "fb-sweep",
            CommandKind::FfSweep => "ff-sweep",
            CommandKind::SkCurves => "sk-curves",
            CommandKind::Bounds => "bounds",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "fb-sweep" => Ok(CommandKind::FbSweep),
            "ff-sweep" => Ok(CommandKind::FfSweep),
            "sk-curves" => Ok(CommandKind::SkCurves),
            "bounds" => Ok(CommandKind::Bounds),
            other => Err(ConfigError::Invalid(format!("unknown command `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Sk,
    ModuloSk,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Sk => "sk",
            SchemeKind::ModuloSk => "modulo_sk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackSnr {
    Db(f64),
    Noiseless,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSetting {
    Auto,
    Fixed(f64),
}

/// Inclusive arithmetic grid `start:stop:step`, or an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Range { start, stop, step } => {
                let mut v = Vec::new();
                let mut i = 0u32;
                loop {
                    let x = start + step * f64::from(i);
                    if x > stop + 1e-9 * step.abs() {
                        break;
                    }
                    v.push(x);
                    i += 1;
                }
                v
            }
            GridSpec::List(v) => v.clone(),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(ConfigError::Invalid(format!(
                    "grid `{s}` must be start:stop:step or a comma list"
                )));
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| parse_f64(p, "grid"))
                .collect::<Result<_>>()?;
            let (start, stop, step) = (nums[0], nums[1], nums[2]);
            let shape_ok = step > 0.0 && stop >= start;
            if !shape_ok {
                return Err(ConfigError::Invalid(format!(
                    "grid `{s}` needs stop >= start and step > 0"
                )));
            }
            Ok(GridSpec::Range { start, stop, step })
        } else {
            let v: Vec<f64> = s
                .split(',')
                .map(|p| parse_f64(p.trim(), "grid"))
                .collect::<Result<_>>()?;
            if v.is_empty() {
                return Err(ConfigError::Invalid("grid list is empty".into()));
            }
            Ok(GridSpec::List(v))
        }
    }

    fn render(&self) -> String {
        match self {
            GridSpec::Range { start, stop, step } => format!("{start}:{stop}:{step}"),
            GridSpec::List(v) => v
                .iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

/// Fully resolved settings of one CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub scheme: SchemeKind,
    pub rate: (u32, u32),
    pub k_bits: u32,
    pub n_rounds: u32,
    pub forward_snr_db: f64,
    pub feedback_snr: FeedbackSnr,
    pub dither: bool,
    pub kappa: KappaSetting,
    pub seed: u64,
    pub max_trials: u64,
    pub target_errors: u64,
    pub ber_floor: f64,
    pub workers: usize,
    pub grid: GridSpec,
    pub n_rounds_list: Vec<u32>,
    pub pairs: Vec<(u32, u32)>,
}

/// String-valued settings as they arrive from flags or a config file;
/// `None` means "use the default".
#[derive(Debug, Clone, Default)]
pub struct ConfigOverlay {
    pub scheme: Option<String>,
    pub rate: Option<String>,
    pub k_bits: Option<u32>,
    pub n_rounds: Option<u32>,
    pub forward_snr_db: Option<f64>,
    pub feedback_snr_db: Option<String>,
    pub dither: Option<bool>,
    pub kappa: Option<String>,
    pub seed: Option<u64>,
    pub max_trials: Option<u64>,
    pub target_errors: Option<u64>,
    pub ber_floor: Option<f64>,
    pub workers: Option<usize>,
    pub grid: Option<String>,
    pub n_rounds_list: Option<String>,
    pub pairs: Option<String>,
}

impl ConfigOverlay {
    /// Later overlays win field by field.
    pub fn merged_over(self, base: ConfigOverlay) -> ConfigOverlay {
        ConfigOverlay {
            scheme: self.scheme.or(base.scheme),
            rate: self.rate.or(base.rate),
            k_bits: self.k_bits.or(base.k_bits),
            n_rounds: self.n_rounds.or(base.n_rounds),
            forward_snr_db: self.forward_snr_db.or(base.forward_snr_db),
            feedback_snr_db: self.feedback_snr_db.or(base.feedback_snr_db),
            dither: self.dither.or(base.dither),
            kappa: self.kappa.or(base.kappa),
            seed: self.seed.or(base.seed),
            max_trials: self.max_trials.or(base.max_trials),
            target_errors: self.target_errors.or(base.target_errors),
            ber_floor: self.ber_floor.or(base.ber_floor),
            workers: self.workers.or(base.workers),
            grid: self.grid.or(base.grid),
            n_rounds_list: self.n_rounds_list.or(base.n_rounds_list),
            pairs: self.pairs.or(base.pairs),
        }
    }

    /// Parses the flat `key = value` format; `#` starts a comment.
    /// Unknown keys are rejected.
    pub fn from_file_text(text: &str, expected_command: CommandKind) -> Result<ConfigOverlay> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Invalid(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Invalid(format!("duplicate key `{key}`")));
            }
        }
        let mut overlay = ConfigOverlay::default();
        for (key, value) in map {
            match key.as_str() {
                "command" => {
                    let cmd = CommandKind::parse(&value)?;
                    if cmd != expected_command {
                        return Err(ConfigError::Invalid(format!(
                            "config file is for `{}`, not `{}`",
                            cmd.name(),
                            expected_command.name()
                        )));
                    }
                }
                "scheme" => overlay.scheme = Some(value),
                "rate" => overlay.rate = Some(value),
                "k_bits" => overlay.k_bits = Some(parse_u64(&value, "k_bits")? as u32),
                "n_rounds" => overlay.n_rounds = Some(parse_u64(&value, "n_rounds")? as u32),
                "forward_snr_db" => {
                    overlay.forward_snr_db = Some(parse_f64(&value, "forward_snr_db")?)
                }
                "feedback_snr_db" => overlay.feedback_snr_db = Some(value),
                "dither" => overlay.dither = Some(parse_bool(&value)?),
                "kappa" => overlay.kappa = Some(value),
                "seed" => overlay.seed = Some(parse_u64(&value, "seed")?),
                "max_trials" => overlay.max_trials = Some(parse_u64(&value, "max_trials")?),
                "target_errors" => {
                    overlay.target_errors = Some(parse_u64(&value, "target_errors")?)
                }
                "ber_floor" => overlay.ber_floor = Some(parse_f64(&value, "ber_floor")?),
                "workers" => overlay.workers = Some(parse_u64(&value, "workers")? as usize),
                "grid" => overlay.grid = Some(value),
                "n_rounds_list" => overlay.n_rounds_list = Some(value),
                "pairs" => overlay.pairs = Some(value),
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        Ok(overlay)
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| ConfigError::Invalid(format!("{what}: `{s}` is not a number")))
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|_| ConfigError::Invalid(format!("{what}: `{s}` is not a nonnegative integer")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(ConfigError::Invalid(format!("`{other}` is not a boolean"))),
    }
}

fn parse_rate(s: &str) -> Result<(u32, u32)> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let num: u32 = num
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("rate numerator `{num}` invalid")))?;
    let den: u32 = den
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("rate denominator `{den}` invalid")))?;
    if num == 0 || den == 0 {
        return Err(ConfigError::Invalid("rate must be positive".into()));
    }
    Ok((num, den))
}

fn parse_pairs(s: &str) -> Result<Vec<(u32, u32)>> {
    s.split(',')
        .map(|pair| {
            let (k, n) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| ConfigError::Invalid(format!("pair `{pair}` must be k:n")))?;
            Ok((
                parse_u64(k.trim(), "pair k")? as u32,
                parse_u64(n.trim(), "pair n")? as u32,
            ))
        })
        .collect()
}

fn parse_u32_list(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|x| Ok(parse_u64(x.trim(), "n_rounds_list")? as u32))
        .collect()
}

/// Bits carried by an (n, rate) combination, if integral.
pub fn bits_for(n_rounds: u32, rate: (u32, u32)) -> Result<u32> {
    let prod = u64::from(n_rounds) * u64::from(rate.0);
    if prod % u64::from(rate.1) != 0 || prod == 0 {
        return Err(ConfigError::Invalid(format!(
            "k_bits = rate * n_rounds must be a positive integer; {}/{} * {} is not",
            rate.0, rate.1, n_rounds
        )));
    }
    Ok((prod / u64::from(rate.1)) as u32)
}

impl ExperimentConfig {
    /// Command defaults reproduce the reference experiment setups.
    fn defaults(command: CommandKind) -> ExperimentConfig {
        let base = ExperimentConfig {
            command,
            scheme: SchemeKind::ModuloSk,
            rate: (1, 3),
            k_bits: 13,
            n_rounds: 39,
            forward_snr_db: 0.0,
            feedback_snr: FeedbackSnr::Db(27.0),
            dither: false,
            kappa: KappaSetting::Auto,
            seed: 1,
            max_trials: 1_000_000,
            target_errors: 100,
            ber_floor: 1e-8,
            workers: 0,
            grid: GridSpec::Range {
                start: 10.0,
                stop: 20.0,
                step: 1.0,
            },
            n_rounds_list: vec![15, 39, 150],
            pairs: vec![(5, 15), (13, 39), (50, 150)],
        };
        match command {
            CommandKind::FbSweep | CommandKind::Bounds => base,
            CommandKind::FfSweep => ExperimentConfig {
                grid: GridSpec::Range {
                    start: -1.0,
                    stop: 2.0,
                    step: 0.5,
                },
                ..base
            },
            CommandKind::SkCurves => ExperimentConfig {
                scheme: SchemeKind::Sk,
                feedback_snr: FeedbackSnr::Noiseless,
                grid: GridSpec::Range {
                    start: -3.0,
                    stop: 0.0,
                    step: 0.25,
                },
                ..base
            },
        }
    }

    /// Resolves an overlay against the command defaults and validates.
    pub fn resolve(command: CommandKind, overlay: &ConfigOverlay) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::defaults(command);
        if let Some(s) = &overlay.scheme {
            cfg.scheme = match s.as_str() {
                "sk" => SchemeKind::Sk,
                "modulo_sk" | "modulo-sk" => SchemeKind::ModuloSk,
                other => return Err(ConfigError::Invalid(format!("unknown scheme `{other}`"))),
            };
        }
        if let Some(r) = &overlay.rate {
            cfg.rate = parse_rate(r)?;
        }
        if let Some(n) = overlay.n_rounds {
            cfg.n_rounds = n;
        }
        if let Some(v) = overlay.forward_snr_db {
            cfg.forward_snr_db = v;
        }
        if let Some(s) = &overlay.feedback_snr_db {
            cfg.feedback_snr = match s.as_str() {
                "noiseless" => FeedbackSnr::Noiseless,
                num => FeedbackSnr::Db(parse_f64(num, "feedback_snr_db")?),
            };
        }
        if let Some(d) = overlay.dither {
            cfg.dither = d;
        }
        if let Some(kp) = &overlay.kappa {
            cfg.kappa = match kp.as_str() {
                "auto" => KappaSetting::Auto,
                num => {
                    let v = parse_f64(num, "kappa")?;
                    let positive = v > 0.0;
                    if !positive {
                        return Err(ConfigError::Invalid("kappa must be positive".into()));
                    }
                    KappaSetting::Fixed(v)
                }
            };
        }
        if let Some(v) = overlay.seed {
            cfg.seed = v;
        }
        if let Some(v) = overlay.max_trials {
            cfg.max_trials = v;
        }
        if let Some(v) = overlay.target_errors {
            cfg.target_errors = v;
        }
        if let Some(v) = overlay.ber_floor {
            cfg.ber_floor = v;
        }
        if let Some(v) = overlay.workers {
            cfg.workers = v;
        }
        if let Some(g) = &overlay.grid {
            cfg.grid = GridSpec::parse(g)?;
        }
        if let Some(list) = &overlay.n_rounds_list {
            cfg.n_rounds_list = parse_u32_list(list)?;
        }
        if let Some(p) = &overlay.pairs {
            cfg.pairs = parse_pairs(p)?;
        }

        // k_bits: derived from the rate unless given explicitly, in which
        // case the two must agree.
        let derived = bits_for(cfg.n_rounds, cfg.rate)?;
        cfg.k_bits = match overlay.k_bits {
            Some(k) if k == derived => k,
            Some(k) => {
                return Err(ConfigError::Invalid(format!(
                    "k_bits = {k} conflicts with rate {}/{} over {} rounds (expect {derived})",
                    cfg.rate.0, cfg.rate.1, cfg.n_rounds
                )))
            }
            None => derived,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=60).contains(&self.k_bits) {
            return Err(ConfigError::Invalid(format!(
                "k_bits must be in 1..=60, got {}",
                self.k_bits
            )));
        }
        if self.max_trials == 0 {
            return Err(ConfigError::Invalid("max_trials must be positive".into()));
        }
        if self.target_errors < 50 {
            return Err(ConfigError::Invalid(
                "target_errors below 50 gives meaningless error-rate estimates".into(),
            ));
        }
        let floor_ok = self.ber_floor > 0.0;
        if !floor_ok {
            return Err(ConfigError::Invalid("ber_floor must be positive".into()));
        }
        if self.grid.values().is_empty() {
            return Err(ConfigError::Invalid("grid resolves to no points".into()));
        }
        match self.command {
            CommandKind::FfSweep => {
                if self.n_rounds_list.is_empty() {
                    return Err(ConfigError::Invalid(
                        "ff-sweep needs a nonempty n_rounds_list".into(),
                    ));
                }
                for &n in &self.n_rounds_list {
                    bits_for(n, self.rate)?;
                }
            }
            CommandKind::SkCurves => {
                if self.pairs.is_empty() {
                    return Err(ConfigError::Invalid("sk-curves needs pairs".into()));
                }
                if self.feedback_snr != FeedbackSnr::Noiseless {
                    return Err(ConfigError::Invalid(
                        "sk-curves assumes noiseless feedback; use fb-sweep or ff-sweep \
                         for noisy-feedback experiments"
                            .into(),
                    ));
                }
                if self.scheme != SchemeKind::Sk {
                    return Err(ConfigError::Invalid(
                        "sk-curves simulates the sk scheme".into(),
                    ));
                }
                for &(k, n) in &self.pairs {
                    let expect = bits_for(n, self.rate)?;
                    if k != expect {
                        return Err(ConfigError::Invalid(format!(
                            "pair {k}:{n} breaks rate {}/{} (expect k = {expect})",
                            self.rate.0, self.rate.1
                        )));
                    }
                }
            }
            CommandKind::FbSweep | CommandKind::Bounds => {
                if self.scheme != SchemeKind::ModuloSk {
                    return Err(ConfigError::Invalid(format!(
                        "{} simulates the modulo_sk scheme",
                        self.command.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Renders the sidecar: a reproducing config file plus commentary.
    pub fn sidecar(&self, notes: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# modsk v{} run metadata", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(
            s,
            "# reproduce with: modsk {} --config <this file> --out <csv>",
            self.command.name()
        );
        let _ = writeln!(s, "command = {}", self.command.name());
        let _ = writeln!(s, "scheme = {}", self.scheme.name());
        let _ = writeln!(s, "rate = {}/{}", self.rate.0, self.rate.1);
        let _ = writeln!(s, "k_bits = {}", self.k_bits);
        let _ = writeln!(s, "n_rounds = {}", self.n_rounds);
        let _ = writeln!(s, "forward_snr_db = {}", self.forward_snr_db);
        match self.feedback_snr {
            FeedbackSnr::Db(db) => {
                let _ = writeln!(s, "feedback_snr_db = {db}");
            }
            FeedbackSnr::Noiseless => {
                let _ = writeln!(s, "feedback_snr_db = noiseless");
            }
        }
        let _ = writeln!(s, "dither = {}", self.dither);
        match self.kappa {
            KappaSetting::Auto => {
                let _ = writeln!(s, "kappa = auto");
            }
            KappaSetting::Fixed(v) => {
                let _ = writeln!(s, "kappa = {v}");
            }
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "max_trials = {}", self.max_trials);
        let _ = writeln!(s, "target_errors = {}", self.target_errors);
        let _ = writeln!(s, "ber_floor = {:e}", self.ber_floor);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "grid = {}", self.grid.render());
        let _ = writeln!(
            s,
            "n_rounds_list = {}",
            self.n_rounds_list
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(
            s,
            "pairs = {}",
            self.pairs
                .iter()
                .map(|(k, n)| format!("{k}:{n}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        for note in notes {
            let _ = writeln!(s, "# {note}");
        }
        s
    }

    pub fn stop_rule(&self) -> modsk::sim::StopRule {
        modsk::sim::StopRule {
            max_trials: self.max_trials,
            target_symbol_errors: self.target_errors,
            ber_floor: self.ber_floor,
        }
    }

    pub fn workers_opt(&self) -> Option<usize> {
        (self.workers > 0).then_some(self.workers)
    }
}
