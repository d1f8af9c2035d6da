//! Pairwise comparison data: synthetic generation under an LST model with
//! Erdős–Rényi missingness, per-user privatization, and CSV I/O.
//!
//! Items and users are 0-based in memory and 1-based in CSV files.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::ComparisonModel;
use crate::privacy::{self, PrivacyProfile};

/// Item preference scores, identified up to a common shift; kept centered.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    /// Wraps `theta` as given. Use [`PreferenceVector::centered`] to enforce a zero sum.
    pub fn new(theta: Vec<f64>) -> Self {
        PreferenceVector(theta)
    }

    pub fn centered(mut theta: Vec<f64>) -> Self {
        if !theta.is_empty() {
            let mean = theta.iter().sum::<f64>() / theta.len() as f64;
            theta.iter_mut().for_each(|t| *t -= mean);
        }
        PreferenceVector(theta)
    }

    /// Draws `theta_i ~ U(-1, 1)` and centers the draw.
    pub fn sample_uniform<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        Self::centered((0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Evenly spaced scores with consecutive gap `delta`, item 0 the strongest.
    pub fn evenly_spaced(m: usize, delta: f64) -> Self {
        Self::centered((0..m).map(|i| -(i as f64) * delta).collect())
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Largest pairwise gap, `max |theta_i - theta_j|`.
    pub fn spread(&self) -> f64 {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.0.iter().copied().fold(f64::INFINITY, f64::min);
        if self.0.is_empty() { 0.0 } else { max - min }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, column: &str) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "item,{column}")?;
        for (i, t) in self.0.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, t)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an `item,<value>` CSV with 1-based items.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut rows = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = idx + 2;
            let item: usize = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .filter(|&i| i >= 1)
                .ok_or_else(|| Error::Parse { line, message: "bad item index".into() })?;
            let value: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { line, message: "bad value".into() })?;
            rows.push((item, value));
        }
        let mut theta = vec![f64::NAN; rows.len()];
        for (item, value) in rows {
            match theta.get_mut(item - 1) {
                Some(slot) if slot.is_nan() => *slot = value,
                _ => return Err(Error::Validation(format!("item {item} duplicated or out of range"))),
            }
        }
        Ok(PreferenceVector(theta))
    }
}

impl Deref for PreferenceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for PreferenceVector {
    fn from(v: Vec<f64>) -> Self {
        PreferenceVector(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    RawBinary,
    RrBinary,
    DebiasedWeighted,
    LaplaceReal,
}

impl ValueKind {
    pub fn is_binary(self) -> bool {
        matches!(self, ValueKind::RawBinary | ValueKind::RrBinary)
    }

    pub fn token(self) -> &'static str {
        match self {
            ValueKind::RawBinary => "raw_binary",
            ValueKind::RrBinary => "rr_binary",
            ValueKind::DebiasedWeighted => "debiased_weighted",
            ValueKind::LaplaceReal => "laplace_real",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ValueKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw_binary" => Ok(ValueKind::RawBinary),
            "rr_binary" => Ok(ValueKind::RrBinary),
            "debiased_weighted" => Ok(ValueKind::DebiasedWeighted),
            "laplace_real" => Ok(ValueKind::LaplaceReal),
            other => Err(Error::Validation(format!("unknown value kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    ClassicRr,
    Adrr,
    Laplace,
}

impl FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rr" | "classic-rr" | "classic_rr" => Ok(Mechanism::ClassicRr),
            "adrr" => Ok(Mechanism::Adrr),
            "laplace" => Ok(Mechanism::Laplace),
            other => Err(Error::Validation(format!("unknown mechanism `{other}` (rr, adrr, laplace)"))),
        }
    }
}

/// One observed comparison of items `i < j` by `user`. For binary kinds
/// `value = 1` means `i` was preferred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub user: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDataset {
    items: usize,
    users: usize,
    kind: ValueKind,
    records: Vec<Comparison>,
    profile: Option<PrivacyProfile>,
}

impl PairwiseDataset {
    pub fn new(items: usize, users: usize, kind: ValueKind, records: Vec<Comparison>) -> Result<Self> {
        let mut seen = SeenPairs::new(users, items, records.len());
        for r in &records {
            if r.i >= r.j || r.j >= items {
                return Err(Error::Validation(format!(
                    "comparison ({}, {}) must satisfy i < j <= {items}",
                    r.i + 1,
                    r.j + 1
                )));
            }
            if r.user >= users {
                return Err(Error::Validation(format!("user {} exceeds user count {users}", r.user + 1)));
            }
            if !r.value.is_finite() {
                return Err(Error::Validation("comparison values must be finite".into()));
            }
            if kind.is_binary() && r.value != 0.0 && r.value != 1.0 {
                return Err(Error::Validation(format!("{kind} value {} is not 0/1", r.value)));
            }
            if !seen.insert(r.user, r.i, r.j) {
                return Err(Error::Validation(format!(
                    "duplicate comparison (user {}, {}, {})",
                    r.user + 1,
                    r.i + 1,
                    r.j + 1
                )));
            }
        }
        Ok(PairwiseDataset { items, users, kind, records, profile: None })
    }

    /// Attaches the per-user budgets the data were privatized with. For the
    /// weighted kind this checks that every value is `w_l` times a debiased bit.
    pub fn with_profile(mut self, profile: PrivacyProfile) -> Result<Self> {
        if profile.len() < self.users {
            return Err(Error::Validation(format!(
                "profile has {} users, dataset has {}",
                profile.len(),
                self.users
            )));
        }
        if self.kind == ValueKind::DebiasedWeighted {
            let weights = profile
                .weights()
                .map_err(|e| Error::Validation(format!("weighted data needs positive budgets: {e}")))?;
            for r in &self.records {
                if decode_weighted(r.value, weights[r.user], profile.epsilons()[r.user]).is_none() {
                    return Err(Error::Validation(format!(
                        "value {} for user {} is not a weighted debiased bit",
                        r.value,
                        r.user + 1
                    )));
                }
            }
        }
        self.users = profile.len();
        self.profile = Some(profile);
        Ok(self)
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn records(&self) -> &[Comparison] {
        &self.records
    }

    pub fn profile(&self) -> Option<&PrivacyProfile> {
        self.profile.as_ref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Observed comparisons per user (`S_l`).
    pub fn per_user_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.users];
        for r in &self.records {
            counts[r.user] += 1;
        }
        counts
    }

    /// Items that appear in no comparison.
    pub fn isolated_items(&self) -> Vec<usize> {
        let mut seen = vec![false; self.items];
        for r in &self.records {
            seen[r.i] = true;
            seen[r.j] = true;
        }
        (0..self.items).filter(|&i| !seen[i]).collect()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingData(format!("{} does not exist", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        Self::from_reader(file)
    }

    /// Parses `user_id,item_i,item_j,value,kind`. Item and user counts are the
    /// largest indices seen.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["user_id", "item_i", "item_j", "value", "kind"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse { line: 1, message: format!("expected header `{}`", expected.join(",")) });
        }
        let mut kind: Option<ValueKind> = None;
        let mut records = Vec::new();
        let (mut items, mut users) = (0, 0);
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec?;
            let err = |message: String| Error::Parse { line, message };
            if rec.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", rec.len())));
            }
            let index = |k: usize, name: &str| -> Result<usize> {
                rec[k]
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| err(format!("bad {name} `{}`", &rec[k])))
            };
            let user = index(0, "user_id")?;
            let (mut i, mut j) = (index(1, "item_i")?, index(2, "item_j")?);
            let mut value: f64 = rec[3].parse().map_err(|_| err(format!("bad value `{}`", &rec[3])))?;
            let row_kind: ValueKind = rec[4].parse().map_err(|e: Error| err(e.to_string()))?;
            match kind {
                None => kind = Some(row_kind),
                Some(k) if k != row_kind => {
                    return Err(Error::Validation(format!("line {line}: mixed kinds {k} and {row_kind}")))
                }
                _ => {}
            }
            if i == j {
                return Err(err("item_i equals item_j".into()));
            }
            if i > j {
                // binary rows may be given in either orientation
                if !row_kind.is_binary() {
                    return Err(err("real-valued rows require item_i < item_j".into()));
                }
                std::mem::swap(&mut i, &mut j);
                value = 1.0 - value;
            }
            items = items.max(j);
            users = users.max(user);
            records.push(Comparison { user: user - 1, i: i - 1, j: j - 1, value });
        }
        Self::new(items, users, kind.unwrap_or(ValueKind::RawBinary), records)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "user_id,item_i,item_j,value,kind")?;
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.user + 1, r.i + 1, r.j + 1, r.value, self.kind)?;
        }
        Ok(())
    }
}

/// Inverts `value = w * debias(y~, eps)` back to the randomized bit, if possible.
pub fn decode_weighted(value: f64, weight: f64, epsilon: f64) -> Option<bool> {
    let tol = 1e-9 * weight.max(value.abs()).max(f64::MIN_POSITIVE);
    for bit in [false, true] {
        let expected = weight * privacy::debias(bit, epsilon).ok()?;
        if (value - expected).abs() <= tol {
            return Some(bit);
        }
    }
    None
}

/// Samples a raw dataset: every `(user, i < j)` is observed with probability `p`,
/// and an observed comparison is 1 with probability `F(theta_i - theta_j)`.
pub fn generate<R: Rng + ?Sized>(
    theta_star: &[f64],
    model: &ComparisonModel,
    users: usize,
    p: f64,
    rng: &mut R,
) -> Result<PairwiseDataset> {
    let m = theta_star.len();
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Validation(format!("observation probability must be in (0,1], got {p}")));
    }
    if users == 0 || m < 2 {
        return Err(Error::Validation(format!("need at least 1 user and 2 items (got {users}, {m})")));
    }
    let probs: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| model.cdf(theta_star[i] - theta_star[j])).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity((users as f64 * p * (m * (m - 1) / 2) as f64) as usize + 16);
    for user in 0..users {
        for i in 0..m {
            for j in i + 1..m {
                if p < 1.0 && rng.random::<f64>() >= p {
                    continue;
                }
                let win = rng.random::<f64>() < probs[i][j];
                records.push(Comparison { user, i, j, value: f64::from(u8::from(win)) });
            }
        }
    }
    PairwiseDataset::new(m, users, ValueKind::RawBinary, records)
}

/// Applies a local privacy mechanism to every record, each user with their own budget.
pub fn privatize<R: Rng + ?Sized>(
    raw: &PairwiseDataset,
    profile: &PrivacyProfile,
    mechanism: Mechanism,
    rng: &mut R,
) -> Result<PairwiseDataset> {
    if raw.kind != ValueKind::RawBinary {
        return Err(Error::Validation(format!("privatize expects raw_binary data, got {}", raw.kind)));
    }
    if profile.len() != raw.users {
        return Err(Error::Validation(format!(
            "profile has {} users, dataset has {}",
            profile.len(),
            raw.users
        )));
    }
    let eps = profile.epsilons();
    let flips = match mechanism {
        Mechanism::Laplace => Vec::new(),
        _ => eps.iter().map(|&e| privacy::flip_probability(e)).collect::<Result<Vec<_>>>()?,
    };
    let (kind, records) = match mechanism {
        Mechanism::ClassicRr => {
            let records = raw
                .records
                .iter()
                .map(|r| {
                    let y = flip(r.value == 1.0, flips[r.user], rng);
                    Comparison { value: f64::from(u8::from(y)), ..*r }
                })
                .collect();
            (ValueKind::RrBinary, records)
        }
        Mechanism::Adrr => {
            let weights = profile.weights()?;
            // released value for a kept or flipped bit, per user
            let levels = eps
                .iter()
                .zip(&weights)
                .map(|(&e, &w)| Ok((w * privacy::debias(true, e)?, w * privacy::debias(false, e)?)))
                .collect::<Result<Vec<_>>>()?;
            let records = raw
                .records
                .iter()
                .map(|r| {
                    let y = flip(r.value == 1.0, flips[r.user], rng);
                    let (hi, lo) = levels[r.user];
                    Comparison { value: if y { hi } else { lo }, ..*r }
                })
                .collect();
            (ValueKind::DebiasedWeighted, records)
        }
        Mechanism::Laplace => {
            let records = raw
                .records
                .iter()
                .map(|r| {
                    let e = eps[r.user];
                    let value = if e.is_infinite() {
                        r.value
                    } else {
                        privacy::laplace_perturb(r.value == 1.0, e, rng)?
                    };
                    Ok(Comparison { value, ..*r })
                })
                .collect::<Result<Vec<_>>>()?;
            (ValueKind::LaplaceReal, records)
        }
    };
    Ok(PairwiseDataset {
        items: raw.items,
        users: raw.users,
        kind,
        records,
        profile: Some(profile.clone()),
    })
}

fn flip<R: Rng + ?Sized>(y: bool, p: f64, rng: &mut R) -> bool {
    if p > 0.0 && rng.random::<f64>() < p { !y } else { y }
}

/// Tracks `(user, i, j)` triples; a bitset when that stays small.
enum SeenPairs {
    Bits { items: usize, per_user: usize, bits: Vec<u64> },
    Set(HashSet<(usize, usize, usize)>),
}

impl SeenPairs {
    const MAX_BITS: usize = 1 << 28;

    fn new(users: usize, items: usize, records: usize) -> Self {
        let per_user = items.saturating_mul(items);
        match users.checked_mul(per_user) {
            Some(n) if n <= Self::MAX_BITS => SeenPairs::Bits { items, per_user, bits: vec![0; n.div_ceil(64)] },
            _ => SeenPairs::Set(HashSet::with_capacity(records)),
        }
    }

    /// False if the triple was already present. Indices must be in range.
    fn insert(&mut self, user: usize, i: usize, j: usize) -> bool {
        match self {
            SeenPairs::Bits { items, per_user, bits } => {
                let k = user * *per_user + i * *items + j;
                let (word, bit) = (k / 64, 1u64 << (k % 64));
                let fresh = bits[word] & bit == 0;
                bits[word] |= bit;
                fresh
            }
            SeenPairs::Set(set) => set.insert((user, i, j)),
        }
    }
}

/// Share of users whose comparisons contradict their own win-count order, and
/// share of all comparisons that do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntransitivityReport {
    pub intransitive_users: f64,
    pub conflicting_comparisons: f64,
}

/// Orders each user's items by wins (ties by lower index) and counts the
/// comparisons in which the lower-ordered item won.
pub fn intransitivity_report(raw: &PairwiseDataset) -> Result<IntransitivityReport> {
    if !raw.kind.is_binary() {
        return Err(Error::Validation(format!("intransitivity needs binary data, got {}", raw.kind)));
    }
    let mut by_user: Vec<Vec<&Comparison>> = vec![Vec::new(); raw.users];
    for r in &raw.records {
        by_user[r.user].push(r);
    }
    let mut flagged = 0usize;
    let mut conflicts = 0usize;
    for comps in &by_user {
        let mut wins = vec![0usize; raw.items];
        for r in comps {
            if r.value == 1.0 {
                wins[r.i] += 1;
            } else {
                wins[r.j] += 1;
            }
        }
        let mut order: Vec<usize> = (0..raw.items).collect();
        order.sort_by(|&a, &b| wins[b].cmp(&wins[a]).then(a.cmp(&b)));
        let mut position = vec![0usize; raw.items];
        for (pos, &item) in order.iter().enumerate() {
            position[item] = pos;
        }
        let bad = comps
            .iter()
            .filter(|r| {
                let (winner, loser) = if r.value == 1.0 { (r.i, r.j) } else { (r.j, r.i) };
                position[winner] > position[loser]
            })
            .count();
        if bad > 0 {
            flagged += 1;
        }
        conflicts += bad;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(IntransitivityReport {
        intransitive_users: ratio(flagged, raw.users),
        conflicting_comparisons: ratio(conflicts, raw.records.len()),
    })
}
