//! Linear-fractional multi-label metrics.
//!
//! A metric is a pair of coefficient tables `(alpha, beta)`, one [`FourTuple`]
//! per label, over the basis `(h*y, y, h, 1)` with `h, y` in `{+1,-1}`. The
//! metric is the ratio of the `alpha` and `beta` sums, aggregated per
//! [`Averaging`] mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::models::{LabelVector, Sign, TabularClassifier};

/// Coefficients of `h*y`, `y`, `h` and `1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FourTuple {
    pub c_hy: f64,
    pub c_y: f64,
    pub c_h: f64,
    pub c_1: f64,
}

impl FourTuple {
    pub const ZERO: FourTuple = FourTuple { c_hy: 0.0, c_y: 0.0, c_h: 0.0, c_1: 0.0 };

    pub const fn new(c_hy: f64, c_y: f64, c_h: f64, c_1: f64) -> Self {
        FourTuple { c_hy, c_y, c_h, c_1 }
    }

    pub fn eval(&self, h: Sign, y: Sign) -> f64 {
        ell_mu_k(self, h, y)
    }

    /// Same tuple evaluated at real-valued `h`, `y` (used for expectations,
    /// since the form is affine in each argument).
    pub fn eval_real(&self, h: f64, y: f64) -> f64 {
        self.c_hy * h * y + self.c_y * y + self.c_h * h + self.c_1
    }

    pub fn scale(&self, s: f64) -> FourTuple {
        FourTuple::new(self.c_hy * s, self.c_y * s, self.c_h * s, self.c_1 * s)
    }

    pub fn add(&self, o: &FourTuple) -> FourTuple {
        FourTuple::new(self.c_hy + o.c_hy, self.c_y + o.c_y, self.c_h + o.c_h, self.c_1 + o.c_1)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.c_hy, self.c_y, self.c_h, self.c_1]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Sum of absolute coefficients; bounds `|eval|` over `{+1,-1}^2`.
    pub fn abs_sum(&self) -> f64 {
        self.as_array().iter().map(|v| v.abs()).sum()
    }
}

/// `mu1*h*y + mu2*y + mu3*h + mu4`.
pub fn ell_mu_k(mu: &FourTuple, h: Sign, y: Sign) -> f64 {
    let (h, y) = (h.value(), y.value());
    mu.c_hy * h * y + mu.c_y * y + mu.c_h * h + mu.c_1
}

/// One [`FourTuple`] per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCoefficients(pub Vec<FourTuple>);

impl MetricCoefficients {
    pub fn uniform(l: usize, t: FourTuple) -> Self {
        MetricCoefficients(vec![t; l])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> &FourTuple {
        &self.0[k]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FourTuple> {
        self.0.iter()
    }

    /// `sum_k mu_k(h_k, y_k)`.
    pub fn total(&self, h: &LabelVector, y: &LabelVector) -> f64 {
        self.0.iter().enumerate().map(|(k, t)| t.eval(h.get(k), y.get(k))).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
    Instance,
}

impl Averaging {
    pub const ALL: [Averaging; 3] = [Averaging::Micro, Averaging::Macro, Averaging::Instance];

    pub fn name(self) -> &'static str {
        match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
            Averaging::Instance => "instance",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            "instance" => Ok(Averaging::Instance),
            other => Err(Error::Config(format!("unknown averaging mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    F1,
    Jaccard,
    Precision,
    Accuracy,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::F1, Preset::Jaccard, Preset::Precision, Preset::Accuracy];

    pub fn name(self) -> &'static str {
        match self {
            Preset::F1 => "f1",
            Preset::Jaccard => "jaccard",
            Preset::Precision => "precision",
            Preset::Accuracy => "accuracy",
        }
    }

    /// Numerator and denominator as weights on `(TP, FP, FN, TN)`.
    fn confusion_weights(self) -> ([f64; 4], [f64; 4]) {
        match self {
            Preset::F1 => ([2.0, 0.0, 0.0, 0.0], [2.0, 1.0, 1.0, 0.0]),
            Preset::Jaccard => ([1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0]),
            Preset::Precision => ([1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]),
            Preset::Accuracy => ([1.0, 0.0, 0.0, 1.0], [1.0, 1.0, 1.0, 1.0]),
        }
    }

    /// Closed-form value from confusion counts `(tp, fp, fn, tn)`, `None` if the
    /// denominator vanishes.
    pub fn ratio_from_counts(self, tp: f64, fp: f64, fn_: f64, tn: f64) -> Option<f64> {
        let (num, den) = self.confusion_weights();
        let cells = [tp, fp, fn_, tn];
        let n: f64 = num.iter().zip(&cells).map(|(a, b)| a * b).sum();
        let d: f64 = den.iter().zip(&cells).map(|(a, b)| a * b).sum();
        (d > 0.0).then(|| n / d)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Confusion indicators in the `(h*y, y, h, 1)` basis, from
/// `h_bar = (h+1)/2` and `y_bar = (y+1)/2`.
pub mod basis {
    use super::FourTuple;

    pub const TP: FourTuple = FourTuple::new(0.25, 0.25, 0.25, 0.25);
    pub const FP: FourTuple = FourTuple::new(-0.25, -0.25, 0.25, 0.25);
    pub const FN: FourTuple = FourTuple::new(-0.25, 0.25, -0.25, 0.25);
    pub const TN: FourTuple = FourTuple::new(0.25, -0.25, -0.25, 0.25);
}

fn combine(weights: [f64; 4]) -> FourTuple {
    [basis::TP, basis::FP, basis::FN, basis::TN]
        .iter()
        .zip(weights)
        .fold(FourTuple::ZERO, |acc, (t, w)| acc.add(&t.scale(w)))
}

/// A generalized metric: coefficient tables plus an averaging mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub l: usize,
    pub alpha: MetricCoefficients,
    pub beta: MetricCoefficients,
    pub averaging: Averaging,
}

impl MetricSpec {
    pub fn new(
        name: impl Into<String>,
        alpha: MetricCoefficients,
        beta: MetricCoefficients,
        averaging: Averaging,
    ) -> Result<Self> {
        let l = alpha.len();
        if l == 0 {
            return Err(Error::Shape("a metric needs at least one label".into()));
        }
        if beta.len() != l {
            return Err(Error::Shape(format!("alpha has {l} labels, beta has {}", beta.len())));
        }
        if alpha.iter().chain(beta.iter()).any(|t| !t.is_finite()) {
            return Err(Error::Domain("metric coefficients must be finite".into()));
        }
        Ok(MetricSpec { name: name.into(), l, alpha, beta, averaging })
    }

    pub fn with_averaging(&self, averaging: Averaging) -> MetricSpec {
        MetricSpec { averaging, ..self.clone() }
    }
}

/// Builds a preset metric. Coefficients are derived from the confusion-count
/// definition of each metric, e.g. F1 = 2TP / (2TP + FP + FN).
pub fn preset(name: Preset, l: usize, averaging: Averaging) -> Result<MetricSpec> {
    if l == 0 {
        return Err(Error::Shape("label count must be positive".into()));
    }
    let (num, den) = name.confusion_weights();
    MetricSpec::new(
        name.name(),
        MetricCoefficients::uniform(l, combine(num)),
        MetricCoefficients::uniform(l, combine(den)),
        averaging,
    )
}

/// Looks a preset up by name.
pub fn preset_named(name: &str, l: usize, averaging: Averaging) -> Result<MetricSpec> {
    preset(name.parse()?, l, averaging)
}

/// Per-label confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: Vec<LabelCounts>,
}

impl ConfusionCounts {
    pub fn aggregate(&self) -> LabelCounts {
        self.per_label.iter().fold(LabelCounts::default(), |acc, c| LabelCounts {
            tp: acc.tp + c.tp,
            fp: acc.fp + c.fp,
            tn: acc.tn + c.tn,
            fn_: acc.fn_ + c.fn_,
        })
    }
}

fn check_pairs(truth: &[LabelVector], predictions: &[LabelVector]) -> Result<usize> {
    if truth.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            truth.len(),
            predictions.len()
        )));
    }
    let l = truth.first().map_or(0, LabelVector::len);
    if truth.iter().chain(predictions).any(|v| v.len() != l) {
        return Err(Error::Shape("label vectors differ in length".into()));
    }
    Ok(l)
}

pub fn confusion_counts(truth: &[LabelVector], predictions: &[LabelVector]) -> Result<ConfusionCounts> {
    let l = check_pairs(truth, predictions)?;
    let mut per_label = vec![LabelCounts::default(); l];
    for (y, h) in truth.iter().zip(predictions) {
        for (k, c) in per_label.iter_mut().enumerate() {
            match (h.get(k), y.get(k)) {
                (Sign::Pos, Sign::Pos) => c.tp += 1,
                (Sign::Pos, Sign::Neg) => c.fp += 1,
                (Sign::Neg, Sign::Pos) => c.fn_ += 1,
                (Sign::Neg, Sign::Neg) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts { per_label })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Drop labels (macro) or instances (instance) whose denominator is not
    /// positive instead of failing.
    pub skip_degenerate: bool,
}

/// Empirical metric of `predictions` against `truth`.
pub fn empirical_metric(
    truth: &[LabelVector],
    predictions: &[LabelVector],
    spec: &MetricSpec,
    opts: EvalOptions,
) -> Result<f64> {
    let l = check_pairs(truth, predictions)?;
    if truth.is_empty() {
        return Err(Error::Shape("empty sample".into()));
    }
    if l != spec.l {
        return Err(Error::Shape(format!("sample has {l} labels, metric has {}", spec.l)));
    }
    let term = |i: usize, k: usize| {
        let (h, y) = (predictions[i].get(k), truth[i].get(k));
        (spec.alpha.get(k).eval(h, y), spec.beta.get(k).eval(h, y))
    };
    let m = truth.len();
    match spec.averaging {
        Averaging::Micro => {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..m {
                for k in 0..l {
                    let (a, b) = term(i, k);
                    num += a;
                    den += b;
                }
            }
            if den <= 0.0 {
                return Err(Error::DegenerateDenominator("micro aggregate".into()));
            }
            Ok(num / den)
        }
        Averaging::Macro => average_ratios(l, "label", opts, |k| {
            (0..m).map(|i| term(i, k)).fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b))
        }),
        Averaging::Instance => average_ratios(m, "instance", opts, |i| {
            (0..l).map(|k| term(i, k)).fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b))
        }),
    }
}

fn average_ratios(
    count: usize,
    unit: &str,
    opts: EvalOptions,
    sums: impl Fn(usize) -> (f64, f64),
) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for j in 0..count {
        let (num, den) = sums(j);
        if den <= 0.0 {
            if opts.skip_degenerate {
                continue;
            }
            return Err(Error::DegenerateDenominator(format!("{unit} {j}")));
        }
        total += num / den;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateDenominator(format!("every {unit} was degenerate")));
    }
    Ok(total / used as f64)
}

/// Per-label expectations `E[l_alpha,k]` and `E[l_beta,k]` of a tabular
/// classifier, computed exactly from the conditional label marginals.
pub fn population_expectations(
    dist: &DiscreteDistribution,
    classifier: &TabularClassifier,
    spec: &MetricSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if dist.labels() != spec.l {
        return Err(Error::Shape(format!("distribution has {} labels, metric has {}", dist.labels(), spec.l)));
    }
    if classifier.assignment.len() != dist.points().len() {
        return Err(Error::Shape("classifier is not defined on the whole support".into()));
    }
    let mut ea = vec![0.0; spec.l];
    let mut eb = vec![0.0; spec.l];
    for (p, point) in dist.points().iter().enumerate() {
        let pred = classifier.predict(p);
        if pred.len() != spec.l {
            return Err(Error::Shape(format!("prediction at point {p} has wrong length")));
        }
        for k in 0..spec.l {
            // l_mu,k is affine in y, so E[l | x] = l evaluated at E[y | x].
            let ey = 2.0 * point.marginal(k) - 1.0;
            let h = pred.value(k);
            ea[k] += point.weight * spec.alpha.get(k).eval_real(h, ey);
            eb[k] += point.weight * spec.beta.get(k).eval_real(h, ey);
        }
    }
    Ok((ea, eb))
}

/// Population metric: the micro/instance ratio of summed expectations, or the
/// macro mean of per-label ratios.
pub fn population_metric(
    dist: &DiscreteDistribution,
    classifier: &TabularClassifier,
    spec: &MetricSpec,
) -> Result<f64> {
    let (ea, eb) = population_expectations(dist, classifier, spec)?;
    match spec.averaging {
        Averaging::Micro | Averaging::Instance => {
            let den: f64 = eb.iter().sum();
            if den <= 0.0 {
                return Err(Error::DegenerateDenominator("population denominator".into()));
            }
            Ok(ea.iter().sum::<f64>() / den)
        }
        Averaging::Macro => {
            let mut total = 0.0;
            for k in 0..spec.l {
                if eb[k] <= 0.0 {
                    return Err(Error::DegenerateDenominator(format!("population label {k}")));
                }
                total += ea[k] / eb[k];
            }
            Ok(total / spec.l as f64)
        }
    }
}
