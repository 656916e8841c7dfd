//! Hypotheses: per-label linear scorers for training and tabular classifiers
//! for exhaustive checks over finite supports.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A label or prediction entry. `sign(0)` maps to `Pos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    /// `+1` for `t >= 0`, `-1` otherwise.
    pub fn of(t: f64) -> Sign {
        if t >= 0.0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    pub fn is_pos(self) -> bool {
        self == Sign::Pos
    }

    pub fn from_i8(v: i8) -> Option<Sign> {
        match v {
            1 => Some(Sign::Pos),
            -1 => Some(Sign::Neg),
            _ => None,
        }
    }

    /// Both signs in the canonical configuration order (`+1` before `-1`).
    pub const BOTH: [Sign; 2] = [Sign::Pos, Sign::Neg];
}

/// A vector in `{+1, -1}^l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelVector(Vec<Sign>);

impl LabelVector {
    pub fn new(entries: Vec<Sign>) -> Self {
        LabelVector(entries)
    }

    pub fn from_i8(values: &[i8]) -> Result<Self> {
        values
            .iter()
            .map(|&v| Sign::from_i8(v).ok_or_else(|| Error::Domain(format!("label entry {v} is not +1 or -1"))))
            .collect::<Result<Vec<_>>>()
            .map(LabelVector)
    }

    pub fn all(l: usize, sign: Sign) -> Self {
        LabelVector(vec![sign; l])
    }

    /// Label vector whose positive entries are exactly `positives`.
    pub fn from_positives(l: usize, positives: &[usize]) -> Self {
        let mut v = vec![Sign::Neg; l];
        for &k in positives {
            v[k] = Sign::Pos;
        }
        LabelVector(v)
    }

    /// The `index`-th configuration of `{+1,-1}^l` in lexicographic order with
    /// `+1` before `-1` and the first label most significant.
    pub fn from_config_index(l: usize, index: usize) -> Self {
        LabelVector(
            (0..l)
                .map(|k| {
                    let bit = u32::try_from(l - 1 - k).ok().and_then(|s| index.checked_shr(s)).unwrap_or(0) & 1;
                    if bit == 0 { Sign::Pos } else { Sign::Neg }
                })
                .collect(),
        )
    }

    pub fn config_index(&self) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, s| (acc << 1) | usize::from(*s == Sign::Neg))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> Sign {
        self.0[k]
    }

    pub fn value(&self, k: usize) -> f64 {
        self.0[k].value()
    }

    pub fn signs(&self) -> &[Sign] {
        &self.0
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, s)| s.is_pos()).map(|(k, _)| k)
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            f.write_str(if s.is_pos() { "+1" } else { "-1" })?;
        }
        f.write_str(")")
    }
}

/// Sparse feature vector: strictly increasing indices with their values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Builds from entries; indices must be strictly increasing.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Shape("sparse indices must be strictly increasing".into()));
        }
        Ok(SparseVector { entries })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            entries: values.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// One past the largest index, or 0 when empty.
    pub fn dim_hint(&self) -> usize {
        self.entries.last().map_or(0, |(i, _)| i + 1)
    }
}

/// Per-label linear scorer `h(x, k) = w_k . x + b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    l: usize,
    d: usize,
    /// Row-major `l x d`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(l: usize, d: usize) -> Self {
        LinearModel { l, d, weights: vec![0.0; l * d], bias: vec![0.0; l] }
    }

    pub fn from_parts(l: usize, d: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != l * d || bias.len() != l {
            return Err(Error::Shape(format!(
                "expected {l}x{d} weights and {l} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Domain("model parameters must be finite".into()));
        }
        Ok(LinearModel { l, d, weights, bias })
    }

    pub fn labels(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.d..(k + 1) * self.d]
    }

    pub fn scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.l];
        self.scores_into(x, &mut out)?;
        Ok(out)
    }

    pub fn scores_into(&self, x: &SparseVector, out: &mut [f64]) -> Result<()> {
        if x.dim_hint() > self.d {
            return Err(Error::Shape(format!(
                "feature index {} out of range for dimension {}",
                x.dim_hint() - 1,
                self.d
            )));
        }
        for (k, slot) in out.iter_mut().enumerate().take(self.l) {
            let row = self.row(k);
            *slot = self.bias[k] + x.entries().iter().map(|&(i, v)| row[i] * v).sum::<f64>();
        }
        Ok(())
    }

    pub fn predict(&self, x: &SparseVector) -> Result<LabelVector> {
        Ok(LabelVector(self.scores(x)?.into_iter().map(Sign::of).collect()))
    }

    /// Writes the text model format: a header `mmo-model v1 l=<l> d=<d>` and
    /// one `b=<bias> <idx>:<w> ...` line per label (zero weights omitted).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mmo-model v1 l={} d={}", self.l, self.d)?;
        for k in 0..self.l {
            write!(w, "b={}", self.bias[k])?;
            for (i, &v) in self.row(k).iter().enumerate() {
                if v != 0.0 {
                    write!(w, " {i}:{v}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (l, d) = match lines.next() {
            Some((_, line)) => parse_model_header(&line?)?,
            None => return Err(Error::Format { line: 1, msg: "empty model file".into() }),
        };
        let mut model = LinearModel::zeros(l, d);
        let mut k = 0;
        for (n, line) in lines {
            let line = line?;
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            if k == l {
                return Err(Error::Format { line: lineno, msg: format!("more than {l} label lines") });
            }
            let mut tokens = line.split_ascii_whitespace();
            let bias = tokens
                .next()
                .and_then(|t| t.strip_prefix("b="))
                .ok_or_else(|| Error::Format { line: lineno, msg: "expected `b=<bias>`".into() })?;
            model.bias[k] = parse_finite(bias, lineno)?;
            for tok in tokens {
                let (idx, val) = tok
                    .split_once(':')
                    .ok_or_else(|| Error::Format { line: lineno, msg: format!("bad weight `{tok}`") })?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::Format { line: lineno, msg: format!("bad index `{idx}`") })?;
                if idx >= d {
                    return Err(Error::Format { line: lineno, msg: format!("weight index {idx} >= d={d}") });
                }
                model.weights[k * d + idx] = parse_finite(val, lineno)?;
            }
            k += 1;
        }
        if k != l {
            return Err(Error::Format { line: k + 2, msg: format!("expected {l} label lines, found {k}") });
        }
        Ok(model)
    }
}

fn parse_model_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::Format { line: 1, msg: "expected header `mmo-model v1 l=<l> d=<d>`".into() };
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "mmo-model" || tokens[1] != "v1" {
        return Err(bad());
    }
    let l = tokens[2].strip_prefix("l=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let d = tokens[3].strip_prefix("d=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    Ok((l, d))
}

fn parse_finite(tok: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Format { line, msg: format!("bad number `{tok}`") }),
    }
}

/// Assigns a label vector to each support point of a finite distribution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TabularClassifier {
    pub assignment: Vec<LabelVector>,
}

impl TabularClassifier {
    pub fn predict(&self, point: usize) -> &LabelVector {
        &self.assignment[point]
    }
}

/// Largest enumeration we allow: `2^(support * l) <= 2^20`.
pub const MAX_ENUMERATION_BITS: usize = 20;

/// Every tabular classifier on `support_size` points with `l` labels, each exactly once.
pub fn enumerate_tabular(support_size: usize, l: usize) -> Result<TabularIter> {
    let bits = support_size * l;
    if bits > MAX_ENUMERATION_BITS {
        return Err(Error::ScaleGuard {
            what: format!("enumeration of 2^{bits} tabular classifiers"),
            limit: 1 << MAX_ENUMERATION_BITS,
        });
    }
    Ok(TabularIter { support_size, l, next: 0, total: 1 << bits })
}

pub struct TabularIter {
    support_size: usize,
    l: usize,
    next: usize,
    total: usize,
}

impl TabularIter {
    pub fn total(&self) -> usize {
        self.total
    }
}

impl Iterator for TabularIter {
    type Item = TabularClassifier;

    fn next(&mut self) -> Option<TabularClassifier> {
        if self.next >= self.total {
            return None;
        }
        let code = self.next;
        self.next += 1;
        let mask = (1usize << self.l) - 1;
        let assignment = (0..self.support_size)
            .map(|p| LabelVector::from_config_index(self.l, (code >> (p * self.l)) & mask))
            .collect();
        Some(TabularClassifier { assignment })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.total - self.next;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for TabularIter {}
