//! Scenario descriptions and the flat `key=value` config format.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::ComparisonModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Consistency as `L` and `m` grow.
    I,
    /// Error against the privacy constant `1/sqrt(B)`.
    II,
    /// Budgets shrinking with `m` and `L`.
    III,
    /// Evenly spaced preferences and ranking recovery.
    IV,
    /// ADRR against classic RR, Laplace and the count method.
    V,
    RealData,
}

impl Scenario {
    pub fn token(self) -> &'static str {
        match self {
            Scenario::I => "1",
            Scenario::II => "2",
            Scenario::III => "3",
            Scenario::IV => "4",
            Scenario::V => "5",
            Scenario::RealData => "real-data",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "i" => Ok(Scenario::I),
            "2" | "ii" => Ok(Scenario::II),
            "3" | "iii" => Ok(Scenario::III),
            "4" | "iv" => Ok(Scenario::IV),
            "5" | "v" => Ok(Scenario::V),
            "real" | "real-data" | "real_data" => Ok(Scenario::RealData),
            other => Err(Error::Validation(format!("unknown scenario `{other}` (expected 1-5 or real-data)"))),
        }
    }
}

/// Budget schedules `eps(m, L)` for Scenario III, scaled so that
/// `eps(10, 100) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EpsScheme {
    /// `log^2(mL) / sqrt(mL)`
    LogSquared,
    /// `1 / sqrt(mL)`
    Root,
    /// `1 / (log^2(mL) sqrt(mL))`
    InverseLogSquared,
}

impl EpsScheme {
    pub const ANCHOR: (usize, usize) = (10, 100);

    fn shape(self, items: usize, users: usize) -> f64 {
        let n = (items * users) as f64;
        match self {
            EpsScheme::LogSquared => n.ln().powi(2) / n.sqrt(),
            EpsScheme::Root => 1.0 / n.sqrt(),
            EpsScheme::InverseLogSquared => 1.0 / (n.ln().powi(2) * n.sqrt()),
        }
    }

    pub fn epsilon(self, items: usize, users: usize) -> f64 {
        self.shape(items, users) / self.shape(Self::ANCHOR.0, Self::ANCHOR.1)
    }

    pub fn token(self) -> &'static str {
        match self {
            EpsScheme::LogSquared => "1",
            EpsScheme::Root => "2",
            EpsScheme::InverseLogSquared => "3",
        }
    }
}

impl FromStr for EpsScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(EpsScheme::LogSquared),
            "2" => Ok(EpsScheme::Root),
            "3" => Ok(EpsScheme::InverseLogSquared),
            other => Err(Error::Validation(format!("unknown budget scheme `{other}` (expected 1, 2 or 3)"))),
        }
    }
}

/// How per-user budgets are drawn in one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonLaw {
    /// Every user draws `eps ~ U(low, high)`.
    Uniform { low: f64, high: f64 },
    /// `A ~ U(a_low, a_high)` once, then `eps_l ~ U(A, A + width)`.
    Shifted { a_low: f64, a_high: f64, width: f64 },
    /// One budget for everybody, fixed by the schedule.
    Scheme(EpsScheme),
}

impl EpsilonLaw {
    pub fn sample<R: Rng + ?Sized>(&self, items: usize, users: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            EpsilonLaw::Uniform { low, high } => (0..users).map(|_| uniform(low, high, rng)).collect(),
            EpsilonLaw::Shifted { a_low, a_high, width } => {
                let a = uniform(a_low, a_high, rng);
                (0..users).map(|_| uniform(a, a + width, rng)).collect()
            }
            EpsilonLaw::Scheme(s) => vec![s.epsilon(items, users); users],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsilonLaw::Uniform { low, high } => low > 0.0 && high >= low && high.is_finite(),
            EpsilonLaw::Shifted { a_low, a_high, width } => {
                a_low > 0.0 && a_high >= a_low && width >= 0.0 && (a_high + width).is_finite()
            }
            EpsilonLaw::Scheme(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("illegal epsilon law {self}")))
        }
    }
}

fn uniform<R: Rng + ?Sized>(low: f64, high: f64, rng: &mut R) -> f64 {
    if high > low {
        rng.random_range(low..high)
    } else {
        low
    }
}

impl fmt::Display for EpsilonLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonLaw::Uniform { low, high } => write!(f, "uniform:{low}:{high}"),
            EpsilonLaw::Shifted { a_low, a_high, width } => write!(f, "shifted:{a_low}:{a_high}:{width}"),
            EpsilonLaw::Scheme(s) => write!(f, "scheme:{}", s.token()),
        }
    }
}

impl FromStr for EpsilonLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |k: usize| -> Result<f64> {
            parts
                .get(k)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Validation(format!("bad epsilon law `{s}`")))
        };
        let law = match (parts[0], parts.len()) {
            ("uniform", 3) => EpsilonLaw::Uniform { low: num(1)?, high: num(2)? },
            ("shifted", 4) => EpsilonLaw::Shifted { a_low: num(1)?, a_high: num(2)?, width: num(3)? },
            ("scheme", 2) => EpsilonLaw::Scheme(parts[1].parse()?),
            _ => {
                return Err(Error::Validation(format!(
                    "bad epsilon law `{s}` (uniform:LO:HI, shifted:ALO:AHI:WIDTH or scheme:N)"
                )))
            }
        };
        law.validate()?;
        Ok(law)
    }
}

/// A count that is either fixed or drawn uniformly from an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Size {
    Fixed(usize),
    Uniform(usize, usize),
}

impl Size {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            Size::Fixed(n) => n,
            Size::Uniform(lo, hi) => rng.random_range(lo..=hi),
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Size::Fixed(n) => write!(f, "{n}"),
            Size::Uniform(lo, hi) => write!(f, "{lo}-{hi}"),
        }
    }
}

/// One grid point of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub model: ComparisonModel,
    pub users: Size,
    pub items: Size,
    pub p: f64,
    pub epsilon: EpsilonLaw,
    /// Gap between consecutive preferences when they are evenly spaced.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub models: Vec<ComparisonModel>,
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub p: f64,
    pub epsilon: EpsilonLaw,
    /// Scenario III only; replaces `epsilon`.
    pub schemes: Vec<EpsScheme>,
    /// Scenario IV only.
    pub deltas: Vec<f64>,
    /// Scenario V draws `L` and `m` per replicate from these inclusive ranges.
    pub users_range: (usize, usize),
    pub items_range: (usize, usize),
    /// `lambda = lambda_c / (L * B(eps))`.
    pub lambda_c: f64,
    pub replicates: usize,
    pub base_seed: u64,
}

impl ScenarioSpec {
    /// Default settings for each scenario.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let both = vec![ComparisonModel::Btl, ComparisonModel::Tm];
        let base = ScenarioSpec {
            scenario,
            models: both,
            users: vec![100, 200, 300, 400],
            items: vec![10, 20, 30],
            p: 0.5,
            epsilon: EpsilonLaw::Uniform { low: 1.0, high: 5.0 },
            schemes: vec![],
            deltas: vec![],
            users_range: (150, 400),
            items_range: (10, 30),
            lambda_c: 1.0,
            replicates: 200,
            base_seed: 0,
        };
        match scenario {
            Scenario::I => base,
            Scenario::II => ScenarioSpec {
                users: vec![200],
                items: vec![20],
                p: 1.0,
                epsilon: EpsilonLaw::Shifted { a_low: 0.5, a_high: 2.5, width: 0.5 },
                ..base
            },
            Scenario::III => ScenarioSpec {
                users: vec![100, 200, 400, 800],
                schemes: vec![EpsScheme::LogSquared, EpsScheme::Root, EpsScheme::InverseLogSquared],
                ..base
            },
            Scenario::IV => ScenarioSpec { users: vec![100, 200, 300], deltas: vec![0.05, 0.1, 0.15], ..base },
            Scenario::V => ScenarioSpec { epsilon: EpsilonLaw::Uniform { low: 0.2, high: 2.0 }, ..base },
            Scenario::RealData => ScenarioSpec {
                models: vec![ComparisonModel::Btl, ComparisonModel::Tm],
                users: vec![],
                items: vec![],
                p: 1.0,
                epsilon: EpsilonLaw::Shifted { a_low: 0.2, a_high: 2.0, width: 1.0 },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(self.lambda_c > 0.0 && self.lambda_c.is_finite()) {
            return bad(format!("lambda_c must be positive, got {}", self.lambda_c));
        }
        self.epsilon.validate()?;
        match self.scenario {
            Scenario::V => {
                let (ul, uh) = self.users_range;
                let (il, ih) = self.items_range;
                if ul == 0 || uh < ul || il < 3 || ih < il {
                    return bad(format!("bad ranges users={ul}:{uh} items={il}:{ih} (need L >= 1, m >= 3)"));
                }
            }
            Scenario::RealData => {}
            _ => {
                if self.users.is_empty() || self.items.is_empty() {
                    return bad("users and items grids must be nonempty".into());
                }
                if self.users.contains(&0) || self.items.iter().any(|&m| m < 3) {
                    return bad("need L >= 1 and m >= 3 in every cell".into());
                }
            }
        }
        if self.scenario == Scenario::III && self.schemes.is_empty() {
            return bad("scenario 3 needs at least one budget scheme".into());
        }
        if self.scenario == Scenario::IV
            && (self.deltas.is_empty() || self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)))
        {
            return bad("scenario 4 needs positive deltas".into());
        }
        Ok(())
    }

    /// Grid cells in output order: model, then scheme or delta, then `m`, then `L`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let mut push = |model: ComparisonModel, users: Size, items: Size, epsilon: EpsilonLaw, delta: Option<f64>| {
            let index = cells.len();
            cells.push(Cell { index, model, users, items, p: self.p, epsilon, delta });
        };
        for &model in &self.models {
            match self.scenario {
                Scenario::V => push(
                    model,
                    Size::Uniform(self.users_range.0, self.users_range.1),
                    Size::Uniform(self.items_range.0, self.items_range.1),
                    self.epsilon,
                    None,
                ),
                Scenario::RealData => {}
                Scenario::III => {
                    for &s in &self.schemes {
                        for &m in &self.items {
                            for &l in &self.users {
                                push(model, Size::Fixed(l), Size::Fixed(m), EpsilonLaw::Scheme(s), None);
                            }
                        }
                    }
                }
                Scenario::IV => {
                    for &d in &self.deltas {
                        for &m in &self.items {
                            for &l in &self.users {
                                push(model, Size::Fixed(l), Size::Fixed(m), self.epsilon, Some(d));
                            }
                        }
                    }
                }
                Scenario::I | Scenario::II => {
                    for &m in &self.items {
                        for &l in &self.users {
                            push(model, Size::Fixed(l), Size::Fixed(m), self.epsilon, None);
                        }
                    }
                }
            }
        }
        cells
    }

    /// Overrides fields from `key=value` lines. `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value).map_err(|e| err(format!("{key}: {e}")))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario" => {
                let s: Scenario = value.parse()?;
                if s != self.scenario {
                    return Err(Error::Validation(format!("config is for scenario {s}, running {}", self.scenario)));
                }
            }
            "models" => self.models = list(value)?,
            "users" => self.users = list(value)?,
            "items" => self.items = list(value)?,
            "p" => self.p = scalar(value)?,
            "epsilon" => self.epsilon = value.parse()?,
            "schemes" => self.schemes = list(value)?,
            "deltas" => self.deltas = list(value)?,
            "users_range" => self.users_range = range(value)?,
            "items_range" => self.items_range = range(value)?,
            "lambda_c" => self.lambda_c = scalar(value)?,
            "replicates" => self.replicates = scalar(value)?,
            "seed" | "base_seed" => self.base_seed = scalar(value)?,
            other => return Err(Error::Validation(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Inverse of `apply_config`.
    pub fn to_config(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut out = String::new();
        out.push_str(&format!("scenario={}\n", self.scenario));
        out.push_str(&format!("models={}\n", join(self.models.iter().map(|m| m.to_string()).collect())));
        out.push_str(&format!("users={}\n", join(self.users.iter().map(|v| v.to_string()).collect())));
        out.push_str(&format!("items={}\n", join(self.items.iter().map(|v| v.to_string()).collect())));
        out.push_str(&format!("p={}\n", self.p));
        out.push_str(&format!("epsilon={}\n", self.epsilon));
        out.push_str(&format!("schemes={}\n", join(self.schemes.iter().map(|s| s.token().to_string()).collect())));
        out.push_str(&format!("deltas={}\n", join(self.deltas.iter().map(|v| v.to_string()).collect())));
        out.push_str(&format!("users_range={}:{}\n", self.users_range.0, self.users_range.1));
        out.push_str(&format!("items_range={}:{}\n", self.items_range.0, self.items_range.1));
        out.push_str(&format!("lambda_c={}\n", self.lambda_c));
        out.push_str(&format!("replicates={}\n", self.replicates));
        out.push_str(&format!("seed={}\n", self.base_seed));
        out
    }
}

fn scalar<T: FromStr>(value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Validation(format!("cannot parse `{value}`")))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(vec![]);
    }
    value.split(',').map(|v| scalar(v.trim())).collect()
}

fn range(value: &str) -> Result<(usize, usize)> {
    let (lo, hi) = value.split_once(':').ok_or_else(|| Error::Validation(format!("expected LO:HI, got `{value}`")))?;
    Ok((scalar(lo.trim())?, scalar(hi.trim())?))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` in cell `cell`:
/// `splitmix64(base_seed ^ splitmix64((cell << 32) | rep))`.
pub fn replicate_seed(base_seed: u64, cell: usize, rep: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(((cell as u64) << 32) | rep as u64))
}
