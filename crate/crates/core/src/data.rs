//! Datasets and finite distributions.
//!
//! `.mlsvm` format (UTF-8, LF):
//!
//! ```text
//! # comment
//! #ml l=3 d=4
//! 0,2 1:0.5 3:-1
//! - 0:1
//! ```
//!
//! The header is the first non-comment line. Each instance line starts with
//! comma-separated 0-based positive label indices (or `-` for none), followed by
//! `idx:value` pairs with strictly increasing 0-based indices.
//!
//! `.dist` grammar: a sequence of `point <id> w=<weight>` blocks, each followed
//! by `marginals p_1 .. p_l` or `table q_0 .. q_{2^l-1}`, where table entries
//! are in lexicographic configuration order with `+1` before `-1` and the first
//! label most significant. `#` starts a comment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LabelVector, LinearModel, Sign, SparseVector};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: SparseVector,
    pub labels: LabelVector,
}

/// A multi-label sample with sparse features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    l: usize,
    d: usize,
    instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(l: usize, d: usize, instances: Vec<Instance>) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            if inst.labels.len() != l {
                return Err(Error::Shape(format!("instance {i} has {} labels, expected {l}", inst.labels.len())));
            }
            if inst.features.dim_hint() > d {
                return Err(Error::Shape(format!("instance {i} has a feature index >= d={d}")));
            }
        }
        Ok(Dataset { l, d, instances })
    }

    pub fn labels(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn truth(&self) -> Vec<LabelVector> {
        self.instances.iter().map(|i| i.labels.clone()).collect()
    }

    /// Splits into the first `n` instances and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head = Dataset { l: self.l, d: self.d, instances: self.instances[..n].to_vec() };
        let tail = Dataset { l: self.l, d: self.d, instances: self.instances[n..].to_vec() };
        (head, tail)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { l: self.l, d: self.d, instances: indices.iter().map(|&i| self.instances[i].clone()).collect() }
    }

    /// Fraction of positive entries over all instance-label pairs.
    pub fn positive_fraction(&self) -> f64 {
        let pos: usize = self.instances.iter().map(|i| i.labels.positives().count()).sum();
        pos as f64 / (self.len() * self.l).max(1) as f64
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#ml l={} d={}", self.l, self.d)?;
        for inst in &self.instances {
            let pos: Vec<String> = inst.labels.positives().map(|k| k.to_string()).collect();
            if pos.is_empty() {
                w.write_all(b"-")?;
            } else {
                w.write_all(pos.join(",").as_bytes())?;
            }
            for &(i, v) in inst.features.entries() {
                write!(w, " {i}:{v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut instances = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let trimmed = line.trim();
            match header {
                None => {
                    if let Some(rest) = trimmed.strip_prefix("#ml") {
                        header = Some(parse_header(rest, lineno)?);
                    } else if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    } else {
                        return Err(Error::Format { line: lineno, msg: "missing `#ml l=<int> d=<int>` header".into() });
                    }
                }
                Some((l, d)) => {
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    instances.push(parse_instance(trimmed, l, d, lineno)?);
                }
            }
        }
        let (l, d) = header.ok_or(Error::Format { line: 1, msg: "missing `#ml l=<int> d=<int>` header".into() })?;
        Dataset::new(l, d, instances)
    }
}

fn parse_header(rest: &str, line: usize) -> Result<(usize, usize)> {
    let bad = || Error::Format { line, msg: "header must be `#ml l=<int> d=<int>`".into() };
    let mut l = None;
    let mut d = None;
    for tok in rest.split_ascii_whitespace() {
        if let Some(v) = tok.strip_prefix("l=") {
            l = Some(v.parse::<usize>().map_err(|_| bad())?);
        } else if let Some(v) = tok.strip_prefix("d=") {
            d = Some(v.parse::<usize>().map_err(|_| bad())?);
        } else {
            return Err(bad());
        }
    }
    match (l, d) {
        (Some(l), Some(d)) if l > 0 => Ok((l, d)),
        _ => Err(bad()),
    }
}

fn parse_instance(line: &str, l: usize, d: usize, lineno: usize) -> Result<Instance> {
    let err = |msg: String| Error::Format { line: lineno, msg };
    let mut tokens = line.split_ascii_whitespace();
    let label_field = tokens.next().ok_or_else(|| err("empty instance line".into()))?;
    let mut labels = vec![Sign::Neg; l];
    if label_field != "-" {
        for tok in label_field.split(',') {
            let k: usize = tok.parse().map_err(|_| err(format!("bad label index `{tok}`")))?;
            if k >= l {
                return Err(err(format!("label index {k} >= l={l}")));
            }
            if labels[k].is_pos() {
                return Err(err(format!("duplicate label index {k}")));
            }
            labels[k] = Sign::Pos;
        }
    }
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for tok in tokens {
        let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("bad feature `{tok}`")))?;
        let idx: usize = idx.parse().map_err(|_| err(format!("bad feature index `{idx}`")))?;
        let val: f64 = val.parse().map_err(|_| err(format!("bad feature value `{val}`")))?;
        if !val.is_finite() {
            return Err(err(format!("non-finite feature value `{val}`")));
        }
        if idx >= d {
            return Err(err(format!("feature index {idx} >= d={d}")));
        }
        if let Some(&(prev, _)) = entries.last() {
            if idx == prev || entries.iter().any(|&(j, _)| j == idx) {
                return Err(err(format!("duplicate feature index {idx}")));
            }
            if idx < prev {
                return Err(err(format!("feature index {idx} after {prev}: indices must increase")));
            }
        }
        entries.push((idx, val));
    }
    Ok(Instance { features: SparseVector::new(entries)?, labels: LabelVector::new(labels) })
}

pub fn load_mlsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    Dataset::read_from(BufReader::new(file))
}

pub fn save_mlsvm(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    let mut w = BufWriter::new(file);
    data.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Norm of each planted weight vector in [`synth_linear`].
pub const PLANTED_NORM: f64 = 3.0;

/// Synthetic linear multi-label data.
///
/// Features are standard normal. Label `k` has a planted score `w_k . x + b_k`
/// with `|w_k| = PLANTED_NORM` and `b_k` calibrated by bisection so the mean
/// positive probability equals `positive_rate`. Labels are `sign(score)` when
/// `noise == 0`, otherwise Bernoulli with `P(+1) = sigmoid(score / noise)`.
pub fn synth_linear(
    l: usize,
    d: usize,
    m: usize,
    positive_rate: f64,
    noise: f64,
    seed: u64,
) -> Result<(Dataset, LinearModel)> {
    if l == 0 || d == 0 {
        return Err(Error::Config("synthetic data needs l >= 1 and d >= 1".into()));
    }
    if !(positive_rate > 0.0 && positive_rate < 1.0) {
        return Err(Error::Config(format!("positive_rate must lie in (0,1), got {positive_rate}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = rng::stream(seed, 0);
    let mut weights = Vec::with_capacity(l * d);
    for _ in 0..l {
        let u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        weights.extend(u.iter().map(|v| PLANTED_NORM * v / norm));
    }
    let features: Vec<Vec<f64>> =
        (0..m).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();

    let mut bias = vec![0.0; l];
    let mut raw = vec![0.0; m];
    let mut labels = vec![vec![Sign::Neg; l]; m];
    for k in 0..l {
        let w = &weights[k * d..(k + 1) * d];
        for (r, x) in raw.iter_mut().zip(&features) {
            *r = w.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        bias[k] = calibrate_bias(&raw, positive_rate, noise);
        for (i, &r) in raw.iter().enumerate() {
            let s = r + bias[k];
            labels[i][k] = if noise == 0.0 {
                Sign::of(s)
            } else if rng.random::<f64>() < sigmoid(s / noise) {
                Sign::Pos
            } else {
                Sign::Neg
            };
        }
    }
    let instances = features
        .iter()
        .zip(labels)
        .map(|(x, y)| Instance { features: SparseVector::from_dense(x), labels: LabelVector::new(y) })
        .collect();
    Ok((Dataset::new(l, d, instances)?, LinearModel::from_parts(l, d, weights, bias)?))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Bias `b` with `mean_i P(+1 | raw_i + b) ~= rate`; the mean is nondecreasing in `b`.
fn calibrate_bias(raw: &[f64], rate: f64, noise: f64) -> f64 {
    if raw.is_empty() {
        return 0.0;
    }
    let mean_pos = |b: f64| {
        let s: f64 = raw
            .iter()
            .map(|&r| if noise == 0.0 { f64::from(u8::from(r + b >= 0.0)) } else { sigmoid((r + b) / noise) })
            .sum();
        s / raw.len() as f64
    };
    let spread = raw.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let (mut lo, mut hi) = (-spread - 50.0 * noise.max(1.0), spread + 50.0 * noise.max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_pos(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Conditional label law at a support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditional {
    /// Independent labels with the given `P(y_k = +1)`.
    Marginals(Vec<f64>),
    /// Full table over `{+1,-1}^l` in configuration order.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistPoint {
    pub id: String,
    pub weight: f64,
    pub conditional: Conditional,
}

impl DistPoint {
    pub fn labels(&self) -> usize {
        match &self.conditional {
            Conditional::Marginals(p) => p.len(),
            Conditional::Table(t) => t.len().trailing_zeros() as usize,
        }
    }

    /// `P(y_k = +1 | x)`.
    pub fn marginal(&self, k: usize) -> f64 {
        match &self.conditional {
            Conditional::Marginals(p) => p[k],
            Conditional::Table(t) => {
                let l = self.labels();
                t.iter()
                    .enumerate()
                    .filter(|(idx, _)| (idx >> (l - 1 - k)) & 1 == 0)
                    .map(|(_, p)| p)
                    .sum()
            }
        }
    }

    /// Full conditional table in configuration order.
    pub fn table(&self) -> Vec<f64> {
        match &self.conditional {
            Conditional::Table(t) => t.clone(),
            Conditional::Marginals(p) => {
                let l = p.len();
                (0..1usize << l)
                    .map(|idx| {
                        (0..l)
                            .map(|k| if (idx >> (l - 1 - k)) & 1 == 0 { p[k] } else { 1.0 - p[k] })
                            .product()
                    })
                    .collect()
            }
        }
    }
}

/// Finite distribution over `(x, y)`: weighted support points, each with a
/// conditional label law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    l: usize,
    points: Vec<DistPoint>,
}

const NORMALIZATION_TOL: f64 = 1e-12;

impl DiscreteDistribution {
    pub fn new(points: Vec<DistPoint>) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::Domain("distribution has no support points".into()))?;
        let l = first.labels();
        if l == 0 {
            return Err(Error::Domain("distribution must have at least one label".into()));
        }
        let mut total = 0.0;
        for p in &points {
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(Error::Domain(format!("point `{}` has non-positive weight {}", p.id, p.weight)));
            }
            total += p.weight;
            match &p.conditional {
                Conditional::Marginals(m) => {
                    if m.len() != l {
                        return Err(Error::Domain(format!("point `{}` has {} marginals, expected {l}", p.id, m.len())));
                    }
                    if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                        return Err(Error::Domain(format!("point `{}` has marginal {v} outside [0,1]", p.id)));
                    }
                }
                Conditional::Table(t) => {
                    if t.len() != 1 << l || !t.len().is_power_of_two() {
                        return Err(Error::Domain(format!(
                            "point `{}` has a table of {} entries, expected {}",
                            p.id,
                            t.len(),
                            1usize << l
                        )));
                    }
                    if let Some(v) = t.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                        return Err(Error::Domain(format!("point `{}` has negative table entry {v}", p.id)));
                    }
                    let s: f64 = t.iter().sum();
                    if (s - 1.0).abs() > NORMALIZATION_TOL {
                        return Err(Error::Domain(format!("point `{}` table sums to {s}", p.id)));
                    }
                }
            }
        }
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!("point weights sum to {total}, expected 1")));
        }
        Ok(DiscreteDistribution { l, points })
    }

    /// One point, one label, `P(+1) = p`.
    pub fn single_marginal(p: f64) -> Self {
        DiscreteDistribution::new(vec![DistPoint {
            id: "x1".into(),
            weight: 1.0,
            conditional: Conditional::Marginals(vec![p]),
        }])
        .expect("valid single-point distribution")
    }

    pub fn labels(&self) -> usize {
        self.l
    }

    pub fn points(&self) -> &[DistPoint] {
        &self.points
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!("point {} w={}\n", p.id, p.weight));
            let (kw, vals) = match &p.conditional {
                Conditional::Marginals(v) => ("marginals", v),
                Conditional::Table(v) => ("table", v),
            };
            out.push_str(kw);
            for v in vals {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for DiscreteDistribution {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        synth_discrete(text)
    }
}

/// Parses and validates the `.dist` grammar.
pub fn synth_discrete(text: &str) -> Result<DiscreteDistribution> {
    let tokens: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .flat_map(|(n, line)| {
            let body = line.split('#').next().unwrap_or("");
            body.split_ascii_whitespace().map(move |t| (n + 1, t))
        })
        .collect();
    let mut points = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let (line, tok) = tokens[i];
        let err = |line: usize, msg: String| Error::Format { line, msg };
        if tok != "point" {
            return Err(err(line, format!("expected `point`, found `{tok}`")));
        }
        let id = tokens.get(i + 1).ok_or_else(|| err(line, "missing point id".into()))?.1.to_string();
        let (wline, wtok) = *tokens.get(i + 2).ok_or_else(|| err(line, "missing `w=<weight>`".into()))?;
        let weight: f64 = wtok
            .strip_prefix("w=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(wline, format!("expected `w=<weight>`, found `{wtok}`")))?;
        let (kline, kind) = *tokens.get(i + 3).ok_or_else(|| err(wline, "missing `marginals` or `table`".into()))?;
        i += 4;
        let mut values = Vec::new();
        while i < tokens.len() && tokens[i].1 != "point" {
            let (vline, v) = tokens[i];
            values.push(v.parse::<f64>().map_err(|_| err(vline, format!("bad probability `{v}`")))?);
            i += 1;
        }
        let conditional = match kind {
            "marginals" => Conditional::Marginals(values),
            "table" => Conditional::Table(values),
            other => return Err(err(kline, format!("expected `marginals` or `table`, found `{other}`"))),
        };
        if match &conditional {
            Conditional::Marginals(v) | Conditional::Table(v) => v.is_empty(),
        } {
            return Err(err(kline, "no probabilities given".into()));
        }
        points.push(DistPoint { id, weight, conditional });
    }
    DiscreteDistribution::new(points)
}

/// Random distribution on `support` points with `l` labels, for exhaustive
/// checks. Marginals are kept in `[0.05, 0.95]` so every non-trivial
/// classifier has a positive metric denominator; every other point uses a full
/// (generally dependent) table.
pub fn random_discrete<R: Rng>(rng: &mut R, support: usize, l: usize) -> DiscreteDistribution {
    let raw: Vec<f64> = (0..support).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let rest: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - rest;
    let points = (0..support)
        .map(|p| {
            let conditional = if p % 2 == 0 {
                Conditional::Marginals((0..l).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect())
            } else {
                let raw: Vec<f64> = (0..1usize << l).map(|_| 0.05 + rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                let mut t: Vec<f64> = raw.iter().map(|v| v / s).collect();
                let tail: f64 = t[1..].iter().sum();
                t[0] = 1.0 - tail;
                Conditional::Table(t)
            };
            DistPoint { id: format!("x{}", p + 1), weight: weights[p], conditional }
        })
        .collect();
    DiscreteDistribution::new(points).expect("generated distribution is normalized")
}
