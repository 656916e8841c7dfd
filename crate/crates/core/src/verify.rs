//! Brute-force and numerical checks.
//!
//! Every randomized check draws trial `t` from the stream `(seed, t)`, so a
//! failing trial can be replayed on its own from the seed in its report.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{random_discrete, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::losses::{softplus, sigmoid, CostCoefficients, Surrogate, SurrogateParams};
use crate::metrics::{population_expectations, population_metric, preset, Averaging, FourTuple, MetricSpec, Preset};
use crate::models::{enumerate_tabular, LabelVector, Sign, TabularClassifier};
use crate::solver::{bisection_bound, lambda_oracle_bisect, Branch, SearchConfig};
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDetail {
    pub trial: usize,
    pub seed: u64,
    pub violation: f64,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub check: String,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// The trial with the largest violation.
    pub worst: Option<TrialDetail>,
    /// Set when a reported quantity is a certified lower bound rather than exact.
    pub lower_bound: bool,
    pub notes: Vec<String>,
}

impl VerifyReport {
    fn from_trials(check: &str, tolerance: f64, trials: Vec<TrialDetail>) -> Self {
        let worst = trials
            .iter()
            .max_by(|a, b| a.violation.total_cmp(&b.violation))
            .cloned();
        // NaN sorts above everything under total_cmp, so it surfaces as the worst trial.
        let max_violation = worst.as_ref().map_or(0.0, |w| w.violation);
        VerifyReport {
            check: check.into(),
            trials: trials.len(),
            max_violation,
            tolerance,
            passed: max_violation <= tolerance,
            worst,
            lower_bound: false,
            notes: Vec::new(),
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_gamma<R: Rng>(r: &mut R, l: usize) -> CostCoefficients {
    let per_label = (0..l)
        .map(|_| {
            FourTuple::new(
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            )
        })
        .collect();
    CostCoefficients::from_tuples(per_label).expect("finite coefficients")
}

fn random_config<R: Rng>(r: &mut R, l: usize) -> LabelVector {
    LabelVector::new((0..l).map(|_| if r.random_bool(0.5) { Sign::Pos } else { Sign::Neg }).collect())
}

fn random_scores<R: Rng>(r: &mut R, l: usize, spread: f64) -> Vec<f64> {
    (0..l).map(|_| r.random_range(-spread..spread)).collect()
}

/// Best metric value over all tabular classifiers and the first classifier
/// (in enumeration order) attaining it. Classifiers with a zero denominator
/// are skipped.
pub fn lambda_star_exhaustive(dist: &DiscreteDistribution, spec: &MetricSpec) -> Result<(f64, TabularClassifier)> {
    let mut best: Option<(f64, TabularClassifier)> = None;
    for clf in enumerate_tabular(dist.points().len(), dist.labels())? {
        match population_metric(dist, &clf, spec) {
            Ok(v) => {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, clf));
                }
            }
            Err(Error::DegenerateDenominator(_)) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| Error::DegenerateDenominator("every classifier has a zero denominator".into()))
}

/// Checks, on one finite distribution:
/// the best expected linearized loss at `lambda*` is zero and attained by the
/// ratio maximizer; `L* - L(h) = eta / E[l_beta(h)]` for every classifier with
/// `eta` its linearized loss at `lambda*`; and on 21 values of `lambda` in
/// `[0, 1]` the sign of the best linearized loss equals `sign(lambda - lambda*)`.
pub fn check_equivalence(dist: &DiscreteDistribution, spec: &MetricSpec, tolerance: f64) -> Result<VerifyReport> {
    if spec.averaging == Averaging::Macro {
        return Err(Error::Config("equivalence is checked for micro and instance averaging".into()));
    }
    let (lambda_star, argmax) = lambda_star_exhaustive(dist, spec)?;
    let sums = |clf: &TabularClassifier| -> Result<(f64, f64)> {
        let (a, b) = population_expectations(dist, clf, spec)?;
        Ok((a.iter().sum(), b.iter().sum()))
    };
    let mut table = Vec::new();
    for clf in enumerate_tabular(dist.points().len(), dist.labels())? {
        let (a, b) = sums(&clf)?;
        if b > 0.0 {
            table.push((a, b));
        }
    }
    let mut trials = Vec::new();
    let min_at = |lambda: f64| table.iter().map(|(a, b)| lambda * b - a).fold(f64::INFINITY, f64::min);

    let min_star = min_at(lambda_star);
    let (aa, ab) = sums(&argmax)?;
    trials.push(TrialDetail {
        trial: 0,
        seed: 0,
        violation: min_star.abs().max((lambda_star * ab - aa).abs()),
        summary: format!("lambda*={lambda_star}: min linearized loss {min_star}"),
    });
    let identity = table
        .iter()
        .map(|(a, b)| {
            let eta = lambda_star * b - a;
            ((lambda_star - a / b) - eta / b).abs() + (-eta).max(0.0)
        })
        .fold(0.0, f64::max);
    trials.push(TrialDetail {
        trial: 1,
        seed: 0,
        violation: identity,
        summary: format!("gap identity over {} classifiers", table.len()),
    });
    for i in 0..=20 {
        let lambda = f64::from(i) / 20.0;
        let m = min_at(lambda);
        let expect = lambda - lambda_star;
        let violation = if expect.abs() <= 1e-12 {
            m.abs()
        } else if m.abs() > 1e-12 && m.signum() == expect.signum() {
            0.0
        } else {
            1.0
        };
        trials.push(TrialDetail {
            trial: 2 + i as usize,
            seed: 0,
            violation,
            summary: format!("lambda={lambda}: min linearized loss {m}, lambda*={lambda_star}"),
        });
    }
    let mut report = VerifyReport::from_trials("equiv", tolerance, trials);
    report.notes.push(format!("lambda* = {lambda_star}"));
    Ok(report)
}

fn battery_specs(trial: usize) -> MetricSpec {
    let presets = [Preset::F1, Preset::Jaccard, Preset::Precision, Preset::Accuracy];
    let averaging = if trial.is_multiple_of(2) { Averaging::Micro } else { Averaging::Instance };
    let l = 1 + (trial / 2) % 2;
    preset(presets[(trial / 4) % 4], l, averaging).expect("valid preset")
}

/// Random instances for the equivalence and bisection checks: trial 0 is the
/// single-point `P(+1) = 0.8` instance under F1, the rest have support at most
/// 3 and at most 2 labels.
pub fn battery_instance(trial: usize, seed: u64) -> (DiscreteDistribution, MetricSpec) {
    if trial == 0 {
        return (DiscreteDistribution::single_marginal(0.8), preset(Preset::F1, 1, Averaging::Micro).unwrap());
    }
    let spec = battery_specs(trial - 1);
    let mut r = rng::stream(seed, trial as u64);
    let support = r.random_range(1..=3);
    (random_discrete(&mut r, support, spec.l), spec)
}

/// [`check_equivalence`] over the canonical instance plus `trials` random ones.
pub fn check_equiv_battery(trials: usize, seed: u64, tolerance: f64) -> Result<VerifyReport> {
    let reports = par::map_indexed(trials + 1, |t| {
        let (dist, spec) = battery_instance(t, seed);
        check_equivalence(&dist, &spec, tolerance).map(|r| (t, spec.name.clone(), r))
    });
    let mut details = Vec::new();
    for r in reports {
        let (t, name, rep) = r?;
        let w = rep.worst.unwrap_or(TrialDetail { trial: 0, seed, violation: 0.0, summary: String::new() });
        details.push(TrialDetail {
            trial: t,
            seed,
            violation: rep.max_violation,
            summary: format!("{name}/{}: {}", rep.notes.join(", "), w.summary),
        });
    }
    Ok(VerifyReport::from_trials("equiv", tolerance, details))
}

/// Oracle bisection against exhaustive `lambda*` on the battery: the returned
/// `lambda` must be within `epsilon`, the iteration count within
/// `ceil(log2(range/epsilon))`, and every branch must agree with
/// `sign(midpoint - lambda*)`. A count or branch failure scores 1.
pub fn check_sign(trials: usize, seed: u64, epsilon: f64) -> Result<VerifyReport> {
    let cfg = SearchConfig { epsilon: Some(epsilon), ..SearchConfig::default() };
    let bound = bisection_bound(cfg.range(), epsilon);
    let results = par::map_indexed(trials + 1, |t| -> Result<TrialDetail> {
        let (dist, spec) = battery_instance(t, seed);
        let (star, _) = lambda_star_exhaustive(&dist, &spec)?;
        let (lambda, report) = lambda_oracle_bisect(&dist, &spec, &cfg)?;
        let branch_ok = report.candidates.iter().all(|c| {
            let expect = if c.lambda > star { Branch::Lower } else { Branch::Upper };
            c.branch == Some(expect)
        });
        let mut violation = (lambda - star).abs();
        if !branch_ok || report.iterations > bound {
            violation = 1.0;
        }
        Ok(TrialDetail {
            trial: t,
            seed,
            violation,
            summary: format!(
                "{}: lambda={lambda} lambda*={star} iterations={} bound={bound}",
                spec.name, report.iterations
            ),
        })
    });
    let details = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rep = VerifyReport::from_trials("sign", epsilon, details);
    rep.notes.push(format!("iteration bound {bound}"));
    Ok(rep)
}

fn check_table(cond: &[f64], l: usize) -> Result<()> {
    if l > 6 {
        return Err(Error::ScaleGuard { what: "conditional table label count".into(), limit: 6 });
    }
    if cond.len() != 1 << l {
        return Err(Error::Shape(format!("table has {} entries, expected {}", cond.len(), 1usize << l)));
    }
    if cond.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Domain("table entries must be nonnegative".into()));
    }
    let s: f64 = cond.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("table sums to {s}, expected 1")));
    }
    Ok(())
}

/// Conditional costs `c(y') = sum_y p(y) L(y', y)` in configuration order.
pub fn conditional_costs(cond: &[f64], gamma: &CostCoefficients) -> Result<Vec<f64>> {
    let l = gamma.labels();
    check_table(cond, l)?;
    let configs: Vec<LabelVector> = (0..1usize << l).map(|i| LabelVector::from_config_index(l, i)).collect();
    Ok(configs
        .iter()
        .map(|yp| {
            configs
                .iter()
                .zip(cond)
                .map(|(y, p)| p * crate::losses::target_loss(gamma, yp, y))
                .sum()
        })
        .collect())
}

/// The minimizing configuration of the conditional cost; ties go to the first
/// in configuration order (lexicographic, `+1` before `-1`).
pub fn best_response(cond: &[f64], gamma: &CostCoefficients) -> Result<(LabelVector, f64)> {
    let costs = conditional_costs(cond, gamma)?;
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    Ok((LabelVector::from_config_index(gamma.labels(), best), costs[best]))
}

/// `c(prediction) - min_y' c(y')`. The nonnegativity shift adds the same
/// constant to every `c(y')`, so it does not enter.
pub fn conditional_regret_target(cond: &[f64], gamma: &CostCoefficients, prediction: &LabelVector) -> Result<f64> {
    let costs = conditional_costs(cond, gamma)?;
    if prediction.len() != gamma.labels() {
        return Err(Error::Shape("prediction length differs from the label count".into()));
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((costs[prediction.config_index()] - min).max(0.0))
}

/// Per-configuration weights `W(y') = sum_y p(y) (S - Lbar(y', y))`, in the
/// surrogate's units.
fn surrogate_weights(cond: &[f64], s: &Surrogate) -> Vec<f64> {
    let l = s.labels();
    let configs: Vec<LabelVector> = (0..1usize << l).map(|i| LabelVector::from_config_index(l, i)).collect();
    configs
        .iter()
        .map(|yp| s.unit_scale() * configs.iter().zip(cond).map(|(y, p)| p * s.weight(yp, y)).sum::<f64>())
        .collect()
}

/// `sum_y' W(y') phi(1 / s(y'))` with `log(1/s(y')) = sum_i softplus(-2 y'_i h_i)`,
/// and its gradient.
fn conditional_objective(weights: &[f64], tau: f64, h: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let l = h.len();
    let mut total = 0.0;
    let mut g = vec![0.0; l];
    for (idx, w) in weights.iter().enumerate() {
        let yp = LabelVector::from_config_index(l, idx);
        let log_u: f64 = (0..l).map(|i| softplus(-2.0 * yp.value(i) * h[i])).sum();
        let (phi, dphi) = if tau == 0.0 {
            (log_u, 1.0)
        } else {
            let e = (-tau * log_u).exp();
            (-(-tau * log_u).exp_m1() / tau, e)
        };
        total += w * phi;
        for i in 0..l {
            let a = yp.value(i);
            g[i] += w * dphi * (-2.0 * a * sigmoid(-2.0 * a * h[i]));
        }
    }
    if let Some(out) = grad {
        out.copy_from_slice(&g);
    }
    total
}

/// Conditional surrogate error `C(h)` under the conditional table `cond`.
pub fn conditional_surrogate(
    cond: &[f64],
    gamma: &CostCoefficients,
    params: &SurrogateParams,
    scores: &[f64],
) -> Result<f64> {
    let s = Surrogate::new(gamma, params)?;
    check_table(cond, s.labels())?;
    if scores.len() != s.labels() {
        return Err(Error::Shape("score length differs from the label count".into()));
    }
    Ok(conditional_objective(&surrogate_weights(cond, &s), s.tau(), scores, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRegret {
    pub value: f64,
    /// `false` when the infimum was approximated numerically, in which case
    /// `value` is a lower bound on the true regret.
    pub exact: bool,
}

pub const INNER_STARTS: usize = 32;
pub const INNER_STEPS: usize = 500;
const INNER_LR: f64 = 0.1;

/// Smallest objective value found by multi-start gradient descent over free
/// score vectors. Starts are `start` plus `INNER_STARTS - 1` random points;
/// the objective is normalized by the total weight.
pub fn surrogate_infimum_numeric(weights: &[f64], tau: f64, start: &[f64], seed: u64) -> f64 {
    let l = start.len();
    let total: f64 = weights.iter().sum();
    let norm = if total > 0.0 { total } else { 1.0 };
    let w: Vec<f64> = weights.iter().map(|x| x / norm).collect();
    let mut r = rng::stream(seed, u64::MAX);
    let mut best = f64::INFINITY;
    let mut g = vec![0.0; l];
    for s in 0..INNER_STARTS {
        let mut h: Vec<f64> = if s == 0 { start.to_vec() } else { random_scores(&mut r, l, 3.0) };
        let mut value = conditional_objective(&w, tau, &h, Some(&mut g));
        best = best.min(value);
        for t in 0..INNER_STEPS {
            let lr = INNER_LR / (1.0 + 0.002 * t as f64);
            for (hi, gi) in h.iter_mut().zip(&g) {
                *hi -= lr * gi;
            }
            value = conditional_objective(&w, tau, &h, Some(&mut g));
            best = best.min(value);
        }
    }
    best * norm
}

/// Regret of one label in closed form, from weights `w+`, `w-` and score `h`.
fn single_label_regret(wp: f64, wn: f64, tau: f64, h: f64) -> f64 {
    let (log_s, log_1ms) = (-softplus(-2.0 * h), -softplus(2.0 * h));
    let total = wp + wn;
    if total <= 0.0 {
        return 0.0;
    }
    if tau == 0.0 {
        let term = |w: f64, log_q: f64, log_p: f64| if w > 0.0 { w * (log_q - log_p) } else { 0.0 };
        let (lq, l1q) = ((wp / total).ln(), (wn / total).ln());
        return (term(wp, lq, log_s) + term(wn, l1q, log_1ms)).max(0.0);
    }
    let (sp, sn) = ((tau * log_s).exp(), (tau * log_1ms).exp());
    let best = if tau < 1.0 {
        // Optimum s/(1-s) = (w+/w-)^(1/(1-tau)).
        let k = 1.0 / (1.0 - tau);
        let (qp, qn) = if wp == 0.0 {
            (0.0, 1.0)
        } else if wn == 0.0 {
            (1.0, 0.0)
        } else {
            let log_ratio = k * (wp.ln() - wn.ln());
            (sigmoid(log_ratio), sigmoid(-log_ratio))
        };
        wp * qp.powf(tau) + wn * qn.powf(tau)
    } else {
        wp.max(wn)
    };
    ((best - wp * sp - wn * sn) / tau).max(0.0)
}

/// Conditional surrogate regret `C(h) - inf C`. Exact in closed form for one
/// label; for two or three labels the infimum is found numerically and the
/// result is flagged as a lower bound.
pub fn conditional_regret_surrogate(
    cond: &[f64],
    gamma: &CostCoefficients,
    params: &SurrogateParams,
    scores: &[f64],
    seed: u64,
) -> Result<SurrogateRegret> {
    let s = Surrogate::new(gamma, params)?;
    let l = s.labels();
    check_table(cond, l)?;
    if scores.len() != l || scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::Shape("expected one finite score per label".into()));
    }
    let weights = surrogate_weights(cond, &s);
    if l == 1 {
        return Ok(SurrogateRegret { value: single_label_regret(weights[0], weights[1], s.tau(), scores[0]), exact: true });
    }
    if l > 3 {
        return Err(Error::ScaleGuard { what: "numeric surrogate regret label count".into(), limit: 3 });
    }
    let value = conditional_objective(&weights, s.tau(), scores, None);
    let inf = surrogate_infimum_numeric(&weights, s.tau(), scores, seed);
    Ok(SurrogateRegret { value: (value - inf).max(0.0), exact: false })
}

/// `2 sqrt(lbar_sum n^tau t)` for `tau < 1`, `tau n^tau t` otherwise.
pub fn gamma_bound(lbar_sum: f64, n: f64, tau: f64, t: f64) -> f64 {
    let t = t.max(0.0);
    if tau < 1.0 {
        2.0 * (lbar_sum * n.powf(tau) * t).sqrt()
    } else {
        tau * n.powf(tau) * t
    }
}

/// Random conditional table on `{+1,-1}^l`.
fn random_table<R: Rng>(r: &mut R, l: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..1usize << l).map(|_| r.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let mut t: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let tail: f64 = t[1..].iter().sum();
    t[0] = 1.0 - tail;
    t
}

pub const BOUND_TOLERANCE_EXACT: f64 = 1e-9;
pub const BOUND_SLACK_NUMERIC: f64 = 1e-3;

/// Target regret against the consistency bound of the surrogate regret, with
/// random tables, costs and scores. One label uses exact regrets and
/// tolerance `1e-9`; two or three labels use the numeric lower bound with
/// additive slack `1e-3`.
pub fn check_hconsistency_bound(l: usize, tau: f64, trials: usize, seed: u64) -> Result<VerifyReport> {
    if l == 0 || l > 3 {
        return Err(Error::ScaleGuard { what: "bound check label count".into(), limit: 3 });
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
    }
    let tolerance = if l == 1 { BOUND_TOLERANCE_EXACT } else { BOUND_SLACK_NUMERIC };
    let params = SurrogateParams::exact(tau);
    let n = (1usize << l) as f64;
    let results = par::map_indexed(trials, |t| -> Result<TrialDetail> {
        let mut r = rng::stream(seed, t as u64);
        let cond = random_table(&mut r, l);
        let gamma = random_gamma(&mut r, l);
        let scores = random_scores(&mut r, l, 3.0);
        let s = Surrogate::new(&gamma, &params)?;
        let prediction = LabelVector::new(scores.iter().map(|&h| Sign::of(h)).collect());
        let target = conditional_regret_target(&cond, &gamma, &prediction)?;
        let sur = conditional_regret_surrogate(&cond, &gamma, &params, &scores, seed ^ t as u64)?;
        let bound = gamma_bound(s.offset(), n, tau, sur.value);
        Ok(TrialDetail {
            trial: t,
            seed,
            violation: (target - bound).max(0.0),
            summary: format!("target regret {target}, surrogate regret {}, bound {bound}", sur.value),
        })
    });
    let details = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rep = VerifyReport::from_trials(&format!("bound(l={l},tau={tau})"), tolerance, details);
    rep.lower_bound = l > 1;
    Ok(rep)
}

pub const TAU_GRID: [f64; 5] = [0.0, 0.3, 0.5, 1.0, 2.0];

/// Factorized evaluation (exact offset, raw units) against the naive double
/// sum, for every `l` up to `l_max` and every `tau` in [`TAU_GRID`].
pub fn check_factorization(l_max: usize, trials: usize, seed: u64) -> Result<VerifyReport> {
    if l_max == 0 || l_max > 8 {
        return Err(Error::ScaleGuard { what: "factorization check label count".into(), limit: 8 });
    }
    let per_l = TAU_GRID.len() * trials;
    let results = par::map_indexed(l_max * per_l, |t| -> Result<TrialDetail> {
        let l = 1 + t / per_l;
        let tau = TAU_GRID[(t % per_l) / trials];
        let mut r = rng::stream(seed, t as u64);
        let gamma = random_gamma(&mut r, l);
        let y = random_config(&mut r, l);
        let scores = random_scores(&mut r, l, 2.0);
        let s = Surrogate::new(&gamma, &SurrogateParams::exact(tau))?;
        let (naive, fact) = (s.naive(&scores, &y)?, s.value(&scores, &y)?);
        Ok(TrialDetail {
            trial: t,
            seed,
            violation: rel_err(fact, naive),
            summary: format!("l={l} tau={tau}: factorized {fact}, naive {naive}"),
        })
    });
    let details = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport::from_trials("factorization", 1e-9, details))
}

pub const FD_STEP: f64 = 1e-4;

/// Analytic score gradient against central differences, spread evenly over
/// `l in 1..=l_max` and the given `taus`.
pub fn check_gradient(l_max: usize, taus: &[f64], trials: usize, seed: u64) -> Result<VerifyReport> {
    if l_max == 0 || taus.is_empty() {
        return Err(Error::Config("gradient check needs l_max >= 1 and at least one tau".into()));
    }
    let results = par::map_indexed(trials, |t| -> Result<TrialDetail> {
        let l = 1 + t % l_max;
        let tau = taus[(t / l_max) % taus.len()];
        let mut r = rng::stream(seed, t as u64);
        let gamma = random_gamma(&mut r, l);
        let y = random_config(&mut r, l);
        let scores = random_scores(&mut r, l, 2.0);
        let s = Surrogate::new(&gamma, &SurrogateParams::training(tau))?;
        let grad = s.gradient(&scores, &y)?;
        let mut worst: f64 = 0.0;
        for j in 0..l {
            let (mut hp, mut hm) = (scores.clone(), scores.clone());
            hp[j] += FD_STEP;
            hm[j] -= FD_STEP;
            let fd = (s.value(&hp, &y)? - s.value(&hm, &y)?) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grad[j], fd));
        }
        Ok(TrialDetail { trial: t, seed, violation: worst, summary: format!("l={l} tau={tau}") })
    });
    let details = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport::from_trials("gradient", 1e-5, details))
}

/// Per-evaluation work is held at `RUNTIME_WORK / l` calls per timing sample.
pub const RUNTIME_WORK: usize = 1 << 20;

/// Median time of one factorized evaluation for each `l`, and the gate
/// `time(next) / time(prev) <= 2 * next / prev` (8 for quadrupling).
pub fn check_runtime_scaling(l_list: &[usize], repeats: usize, seed: u64) -> Result<VerifyReport> {
    if l_list.len() < 2 || l_list.windows(2).any(|w| w[1] <= w[0]) || l_list[0] == 0 {
        return Err(Error::Config("runtime check needs at least two increasing label counts".into()));
    }
    let repeats = repeats.max(1);
    let mut medians = Vec::with_capacity(l_list.len());
    for (i, &l) in l_list.iter().enumerate() {
        let mut r = rng::stream(seed, i as u64);
        let gamma = random_gamma(&mut r, l);
        let y = random_config(&mut r, l);
        let scores = random_scores(&mut r, l, 2.0);
        let s = Surrogate::new(&gamma, &SurrogateParams::training(0.0))?;
        let inner = (RUNTIME_WORK / l).max(1);
        let mut samples = Vec::with_capacity(repeats);
        for rep in 0..=repeats {
            let start = Instant::now();
            for _ in 0..inner {
                std::hint::black_box(s.value(std::hint::black_box(&scores), &y)?);
            }
            let per_call = start.elapsed().as_secs_f64() / inner as f64;
            if rep > 0 {
                samples.push(per_call);
            }
        }
        samples.sort_by(f64::total_cmp);
        medians.push(samples[samples.len() / 2]);
    }
    let details: Vec<TrialDetail> = l_list
        .windows(2)
        .zip(medians.windows(2))
        .enumerate()
        .map(|(i, (ls, ts))| {
            let ratio = ts[1] / ts[0];
            let allowed = 2.0 * ls[1] as f64 / ls[0] as f64;
            TrialDetail {
                trial: i,
                seed,
                violation: ratio / allowed * 8.0,
                summary: format!("l {}->{}: {:.3e}s -> {:.3e}s, ratio {ratio:.2}", ls[0], ls[1], ts[0], ts[1]),
            }
        })
        .collect();
    let mut rep = VerifyReport::from_trials("runtime", 8.0, details);
    for (l, t) in l_list.iter().zip(&medians) {
        rep.notes.push(format!("l={l}: {:.3} us per evaluation", t * 1e6));
    }
    Ok(rep)
}
