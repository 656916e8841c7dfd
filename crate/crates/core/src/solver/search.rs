use serde::{Deserialize, Serialize};

use super::train::{mean_surrogate, train_surrogate, TrainOutcome};
use super::{
    bisection_bound, grid_size, SearchConfig, Strategy, TrainConfig, DEFAULT_GRID_EPSILON, DEFAULT_ORACLE_EPSILON,
};
use crate::data::{Dataset, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::losses::{gamma_from, Surrogate, SurrogateParams};
use crate::metrics::{empirical_metric, population_expectations, Averaging, EvalOptions, MetricSpec};
use crate::models::{enumerate_tabular, LabelVector, LinearModel, Sign};
use crate::par;

/// Which half of the interval a bisection step kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Linearized loss above the band: `lambda` is too large.
    Lower,
    /// Linearized loss below the band: `lambda` is too small.
    Upper,
    /// Inside the tolerance band; search stops.
    Accept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub lambda: f64,
    /// Interval `[a, b]` when the candidate was evaluated (bisection only).
    pub interval: Option<(f64, f64)>,
    /// Mean training surrogate of the candidate model.
    pub surrogate: Option<f64>,
    /// Empirical (oracle: population) linearized loss `lambda * l_beta - l_alpha`.
    pub linearized: Option<f64>,
    /// Validation metric; `None` for a degenerate candidate.
    pub validation_metric: Option<f64>,
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub strategy: Strategy,
    pub chosen_lambda: f64,
    pub epsilon: Option<f64>,
    pub epsilon_m: Option<f64>,
    pub iterations: usize,
    pub iteration_bound: Option<usize>,
    pub termination: String,
    pub candidates: Vec<CandidateRecord>,
    pub lambda_trace: Vec<f64>,
}

fn reject_macro(spec: &MetricSpec) -> Result<()> {
    if spec.averaging == Averaging::Macro {
        return Err(Error::Config(
            "the linearization is defined for micro and instance averaging; macro has no single multiplier".into(),
        ));
    }
    Ok(())
}

/// `(E[l_alpha], E[l_beta])` of every tabular classifier on `dist` whose
/// denominator is positive, summed over labels.
pub fn oracle_expectations(dist: &DiscreteDistribution, spec: &MetricSpec) -> Result<Vec<(f64, f64)>> {
    let classifiers: Vec<_> = enumerate_tabular(dist.points().len(), dist.labels())?.collect();
    let pairs = par::map_slice(&classifiers, |c| {
        population_expectations(dist, c, spec).map(|(a, b)| (a.iter().sum::<f64>(), b.iter().sum::<f64>()))
    });
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (a, b) = p?;
        if b > 0.0 {
            out.push((a, b));
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateDenominator("every classifier has a zero denominator".into()));
    }
    Ok(out)
}

/// Bisection on `sign(min_h E[lambda * l_beta - l_alpha])`, which is
/// `sign(lambda - lambda*)`. Returns the centre of the final interval.
pub fn lambda_oracle_bisect(
    dist: &DiscreteDistribution,
    spec: &MetricSpec,
    cfg: &SearchConfig,
) -> Result<(f64, SearchReport)> {
    cfg.validate()?;
    reject_macro(spec)?;
    let eps = cfg.epsilon.unwrap_or(DEFAULT_ORACLE_EPSILON);
    let table = oracle_expectations(dist, spec)?;
    let best = |lambda: f64| table.iter().map(|(a, b)| lambda * b - a).fold(f64::INFINITY, f64::min);
    let bound = bisection_bound(cfg.range(), eps);
    let (mut a, mut b) = (cfg.lambda_min, cfg.lambda_max);
    let mut candidates = Vec::new();
    while b - a > eps && candidates.len() < bound {
        let mid = 0.5 * (a + b);
        let value = best(mid);
        let branch = if value > 0.0 { Branch::Lower } else { Branch::Upper };
        candidates.push(CandidateRecord {
            lambda: mid,
            interval: Some((a, b)),
            surrogate: None,
            linearized: Some(value),
            validation_metric: None,
            branch: Some(branch),
        });
        match branch {
            Branch::Lower => b = mid,
            _ => a = mid,
        }
    }
    let chosen = 0.5 * (a + b);
    let report = SearchReport {
        strategy: Strategy::OracleBisect,
        chosen_lambda: chosen,
        epsilon: Some(eps),
        epsilon_m: None,
        iterations: candidates.len(),
        iteration_bound: Some(bound),
        termination: "interval_below_epsilon".into(),
        candidates,
        lambda_trace: Vec::new(),
    };
    Ok((chosen, report))
}

/// Mean over instances of `lambda * l_beta - l_alpha` for `model` on `data`.
pub fn linearized_loss(model: &LinearModel, data: &Dataset, spec: &MetricSpec, lambda: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Shape("empty dataset".into()));
    }
    let vals = par::map_slice(data.instances(), |inst| {
        let h = model.predict(&inst.features)?;
        Ok((0..spec.l)
            .map(|k| {
                let (hk, yk) = (h.get(k), inst.labels.get(k));
                lambda * spec.beta.get(k).eval(hk, yk) - spec.alpha.get(k).eval(hk, yk)
            })
            .sum::<f64>())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(par::pairwise_sum(&vals) / data.len() as f64)
}

/// Largest per-instance `l_beta` of the all-positive and all-negative predictors.
fn beta_scale(data: &Dataset, spec: &MetricSpec) -> f64 {
    [Sign::Pos, Sign::Neg]
        .iter()
        .flat_map(|&s| {
            let h = LabelVector::all(spec.l, s);
            data.instances().iter().map(move |inst| {
                (0..spec.l).map(|k| spec.beta.get(k).eval(h.get(k), inst.labels.get(k))).sum::<f64>()
            })
        })
        .fold(0.0, f64::max)
}

fn check_spec(data: &Dataset, spec: &MetricSpec) -> Result<()> {
    if data.labels() != spec.l {
        return Err(Error::Shape(format!("dataset has {} labels, metric has {}", data.labels(), spec.l)));
    }
    Ok(())
}

/// Bisection driven by trained models: at each midpoint the model trained on
/// the linearized costs is kept if its empirical linearized loss is within
/// `epsilon_m` of zero; otherwise the interval is halved toward the sign.
pub fn lambda_surrogate_bisect(
    train: &Dataset,
    spec: &MetricSpec,
    train_cfg: &TrainConfig,
    cfg: &SearchConfig,
) -> Result<(TrainOutcome, SearchReport)> {
    cfg.validate()?;
    check_spec(train, spec)?;
    if train.is_empty() {
        return Err(Error::Shape("training set is empty".into()));
    }
    let eps_m = cfg.epsilon_m;
    let eps = match cfg.epsilon {
        Some(e) => e,
        None => {
            let scale = beta_scale(train, spec);
            if !(scale > 0.0) {
                return Err(Error::Config("cannot derive epsilon: l_beta is never positive".into()));
            }
            let e = eps_m / (2.0 * scale);
            if !(e.is_finite() && e < cfg.range()) {
                cfg.range() / 2.0
            } else {
                e
            }
        }
    };
    let bound = bisection_bound(cfg.range(), eps).max(1);
    let params = SurrogateParams::training(train_cfg.tau);
    let (mut a, mut b) = (cfg.lambda_min, cfg.lambda_max);
    let mut candidates: Vec<CandidateRecord> = Vec::new();
    let mut last: Option<(f64, TrainOutcome)> = None;
    let mut termination = "interval_below_epsilon".to_string();
    while candidates.len() < bound && (candidates.is_empty() || b - a > eps) {
        let mid = 0.5 * (a + b);
        let gamma = gamma_from(&spec.alpha, &spec.beta, mid)?;
        let outcome = train_surrogate(train, &gamma, train_cfg)?;
        let lin = linearized_loss(&outcome.model, train, spec, mid)?;
        let sur = mean_surrogate(&outcome.model, train, &Surrogate::new(&gamma, &params)?)?;
        let branch = if lin > eps_m {
            Branch::Lower
        } else if lin < -eps_m {
            Branch::Upper
        } else {
            Branch::Accept
        };
        candidates.push(CandidateRecord {
            lambda: mid,
            interval: Some((a, b)),
            surrogate: Some(sur),
            linearized: Some(lin),
            validation_metric: None,
            branch: Some(branch),
        });
        last = Some((mid, outcome));
        match branch {
            Branch::Lower => b = mid,
            Branch::Upper => a = mid,
            Branch::Accept => {
                termination = "within_band".into();
                break;
            }
        }
    }
    let (chosen, outcome) = last.expect("at least one candidate is trained");
    let report = SearchReport {
        strategy: Strategy::SurrogateBisect,
        chosen_lambda: chosen,
        epsilon: Some(eps),
        epsilon_m: Some(eps_m),
        iterations: candidates.len(),
        iteration_bound: Some(bound),
        termination,
        candidates,
        lambda_trace: Vec::new(),
    };
    Ok((outcome, report))
}

/// Trains one model per grid point `lambda_max - i * epsilon` and keeps the
/// best validation metric; ties keep the earlier (larger) `lambda`.
pub fn lambda_cv_grid(
    train: &Dataset,
    validation: &Dataset,
    spec: &MetricSpec,
    train_cfg: &TrainConfig,
    cfg: &SearchConfig,
) -> Result<(TrainOutcome, SearchReport)> {
    cfg.validate()?;
    check_spec(train, spec)?;
    check_spec(validation, spec)?;
    if validation.is_empty() {
        return Err(Error::Shape("validation set is empty".into()));
    }
    let eps = cfg.epsilon.unwrap_or(DEFAULT_GRID_EPSILON);
    if !(eps < cfg.range()) {
        return Err(Error::Config(format!("epsilon {eps} is not below the range {}", cfg.range())));
    }
    let count = grid_size(cfg.range(), eps);
    let params = SurrogateParams::training(train_cfg.tau);
    let truth = validation.truth();
    // (lambda, model, training surrogate, validation metric)
    type Run = (f64, TrainOutcome, f64, Option<f64>);
    let runs: Vec<Result<Run>> = par::map_indexed(count, |i| {
        let lambda = cfg.lambda_max - i as f64 * eps;
        let gamma = gamma_from(&spec.alpha, &spec.beta, lambda)?;
        let tc = TrainConfig { seed: train_cfg.seed ^ i as u64, ..*train_cfg };
        let outcome = train_surrogate(train, &gamma, &tc)?;
        let sur = mean_surrogate(&outcome.model, train, &Surrogate::new(&gamma, &params)?)?;
        let preds = validation
            .instances()
            .iter()
            .map(|inst| outcome.model.predict(&inst.features))
            .collect::<Result<Vec<_>>>()?;
        let metric = match empirical_metric(&truth, &preds, spec, EvalOptions::default()) {
            Ok(v) => Some(v),
            Err(Error::DegenerateDenominator(_)) => None,
            Err(e) => return Err(e),
        };
        Ok((lambda, outcome, sur, metric))
    });
    let mut candidates = Vec::with_capacity(count);
    let mut best: Option<(usize, f64)> = None;
    let mut outcomes = Vec::with_capacity(count);
    for (i, r) in runs.into_iter().enumerate() {
        let (lambda, outcome, sur, metric) = r?;
        if let Some(v) = metric {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        candidates.push(CandidateRecord {
            lambda,
            interval: None,
            surrogate: Some(sur),
            linearized: None,
            validation_metric: metric,
            branch: None,
        });
        outcomes.push(outcome);
    }
    let (bi, _) = best.ok_or(Error::NoValidCandidate)?;
    let chosen = candidates[bi].lambda;
    let report = SearchReport {
        strategy: Strategy::CvGrid,
        chosen_lambda: chosen,
        epsilon: Some(eps),
        epsilon_m: None,
        iterations: count,
        iteration_bound: Some(count),
        termination: "grid_exhausted".into(),
        candidates,
        lambda_trace: Vec::new(),
    };
    Ok((outcomes.swap_remove(bi), report))
}
