use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Optimizer, SearchConfig, Strategy, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{gamma_from, sigmoid, softplus, CostCoefficients, Surrogate, SurrogateParams};
use crate::metrics::{empirical_metric, Averaging, EvalOptions, MetricSpec};
use crate::models::{LabelVector, LinearModel};
use crate::{par, rng};

use super::search::SearchReport;

/// A trained model with the mean pre-update training loss of every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub epoch_losses: Vec<f64>,
}

struct OptState {
    kind: Optimizer,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptState {
    fn new(cfg: &TrainConfig, n: usize) -> Self {
        let moments = if cfg.optimizer == Optimizer::Adam { n } else { 0 };
        OptState {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_epsilon,
            t: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        }
    }

    fn step(&mut self, model: &mut LinearModel, gw: &[f64], gb: &[f64]) {
        let (w, b) = model.params_mut();
        match self.kind {
            Optimizer::Gd => {
                for (p, g) in w.iter_mut().zip(gw).chain(b.iter_mut().zip(gb)) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let c1 = 1.0 - self.beta1.powi(self.t);
                let c2 = 1.0 - self.beta2.powi(self.t);
                let params = w.iter_mut().chain(b.iter_mut());
                let grads = gw.iter().chain(gb);
                for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                }
            }
        }
    }
}

/// Mean loss and mean parameter gradient over `batch`.
///
/// Per-instance score gradients are computed in parallel, then each label's
/// weight row is accumulated independently, so the result does not depend on
/// thread count.
fn batch_gradient<F>(
    model: &LinearModel,
    data: &Dataset,
    batch: &[usize],
    loss: &F,
    at: (usize, usize),
) -> Result<(f64, Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &LabelVector, &mut [f64]) -> Result<f64> + Sync,
{
    let (l, d) = (model.labels(), model.dim());
    let divergence = Error::Divergence { epoch: at.0, batch: at.1 };
    let per: Vec<Result<(f64, Vec<f64>)>> = par::map_slice(batch, |&i| {
        let inst = &data.instances()[i];
        let scores = model.scores(&inst.features)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(divergence.clone());
        }
        let mut g = vec![0.0; l];
        let v = loss(&scores, &inst.labels, &mut g)?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(divergence.clone());
        }
        Ok((v, g))
    });
    let mut losses = Vec::with_capacity(batch.len());
    let mut grads = Vec::with_capacity(batch.len());
    for r in per {
        let (v, g) = r?;
        losses.push(v);
        grads.push(g);
    }
    let n = batch.len() as f64;
    let rows: Vec<(Vec<f64>, f64)> = par::map_indexed(l, |k| {
        let mut row = vec![0.0; d];
        let mut gb = 0.0;
        for (j, &i) in batch.iter().enumerate() {
            let gk = grads[j][k];
            if gk != 0.0 {
                for &(f, v) in data.instances()[i].features.entries() {
                    row[f] += gk * v;
                }
                gb += gk;
            }
        }
        row.iter_mut().for_each(|x| *x /= n);
        (row, gb / n)
    });
    let mut gw = Vec::with_capacity(l * d);
    let mut gbias = Vec::with_capacity(l);
    for (row, b) in rows {
        gw.extend(row);
        gbias.push(b);
    }
    Ok((par::pairwise_sum(&losses) / n, gw, gbias))
}

fn check_inputs(train: &Dataset, l: usize, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Shape("training set is empty".into()));
    }
    if train.labels() != l {
        return Err(Error::Shape(format!("dataset has {} labels, costs have {l}", train.labels())));
    }
    Ok(())
}

/// Deterministic batches for one epoch.
fn epoch_batches(m: usize, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(cfg.seed, epoch as u64 + 1));
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

/// Runs the configured epochs. `before_step` sees the model and batch before
/// each update and returns the per-instance loss to use for that step.
fn run<L, B>(train: &Dataset, cfg: &TrainConfig, mut before_step: B) -> Result<TrainOutcome>
where
    L: Fn(&[f64], &LabelVector, &mut [f64]) -> Result<f64> + Sync,
    B: FnMut(&LinearModel, &[usize]) -> Result<L>,
{
    let mut model = LinearModel::zeros(train.labels(), train.dim());
    let mut opt = OptState::new(cfg, model.weights().len() + model.bias().len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for (b, batch) in epoch_batches(train.len(), cfg, epoch).iter().enumerate() {
            let loss = before_step(&model, batch)?;
            let (v, gw, gb) = batch_gradient(&model, train, batch, &loss, (epoch, b))?;
            total += v * batch.len() as f64;
            opt.step(&mut model, &gw, &gb);
            if model.weights().iter().chain(model.bias()).any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b });
            }
        }
        epoch_losses.push(total / train.len() as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Mini-batch minimization of the per-configuration factorized surrogate,
/// starting from the all-zero model.
pub fn train_surrogate(train: &Dataset, gamma: &CostCoefficients, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_inputs(train, gamma.labels(), cfg)?;
    let surrogate = Surrogate::new(gamma, &SurrogateParams::training(cfg.tau))?;
    run(train, cfg, |_, _| {
        let s = &surrogate;
        Ok(move |h: &[f64], y: &LabelVector, g: &mut [f64]| s.value_and_gradient(h, y, g))
    })
}

/// Baseline: independent per-label logistic losses `softplus(-y_k h_k)` with
/// the same optimizer and schedule.
pub fn train_logistic(train: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_inputs(train, train.labels(), cfg)?;
    run(train, cfg, |_, _| {
        Ok(|h: &[f64], y: &LabelVector, g: &mut [f64]| {
            let mut total = 0.0;
            for (k, (hk, gk)) in h.iter().zip(g.iter_mut()).enumerate() {
                let yk = y.value(k);
                total += softplus(-yk * hk);
                *gk = -yk * sigmoid(-yk * hk);
            }
            Ok(total)
        })
    })
}

pub fn ema_update(lambda: f64, metric: f64, gamma: f64) -> f64 {
    gamma * lambda + (1.0 - gamma) * metric
}

/// One training run with `lambda` tracked by an exponential moving average of
/// the micro metric of each batch (computed with the current model before the
/// update). Costs are rebuilt from the new `lambda` before every step; batches
/// whose metric is undefined leave `lambda` unchanged.
pub fn train_ema(
    train: &Dataset,
    spec: &MetricSpec,
    cfg: &TrainConfig,
    search: &SearchConfig,
) -> Result<(TrainOutcome, SearchReport)> {
    search.validate()?;
    check_inputs(train, spec.l, cfg)?;
    let micro = spec.with_averaging(Averaging::Micro);
    let params = SurrogateParams::training(cfg.tau);
    let mut lambda = search.lambda0;
    let mut trace = Vec::new();
    let mut skipped = 0usize;
    let outcome = run(train, cfg, |model, batch| {
        let truth: Vec<LabelVector> = batch.iter().map(|&i| train.instances()[i].labels.clone()).collect();
        let preds = par::map_slice(batch, |&i| model.predict(&train.instances()[i].features))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        match empirical_metric(&truth, &preds, &micro, EvalOptions::default()) {
            Ok(v) => lambda = ema_update(lambda, v, search.ema_gamma),
            Err(Error::DegenerateDenominator(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
        trace.push(lambda);
        let s = Surrogate::new(&gamma_from(&spec.alpha, &spec.beta, lambda)?, &params)?;
        Ok(move |h: &[f64], y: &LabelVector, g: &mut [f64]| s.value_and_gradient(h, y, g))
    })?;
    let report = SearchReport {
        strategy: Strategy::Ema,
        chosen_lambda: lambda,
        epsilon: None,
        epsilon_m: None,
        iterations: trace.len(),
        iteration_bound: None,
        termination: if skipped == 0 {
            "completed".into()
        } else {
            format!("completed ({skipped} degenerate batches kept lambda)")
        },
        candidates: Vec::new(),
        lambda_trace: trace,
    };
    Ok((outcome, report))
}

/// Mean surrogate value of `model` over a dataset.
pub fn mean_surrogate(model: &LinearModel, data: &Dataset, surrogate: &Surrogate) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Shape("empty dataset".into()));
    }
    let vals = par::map_slice(data.instances(), |inst| surrogate.value(&model.scores(&inst.features)?, &inst.labels))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(par::pairwise_sum(&vals) / data.len() as f64)
}
