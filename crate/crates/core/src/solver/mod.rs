//! Training and `lambda` selection.
//!
//! [`train_surrogate`] minimizes the factorized surrogate for fixed costs.
//! The search strategies pick the multiplier `lambda` that turns the metric
//! ratio into a linear cost:
//!
//! - [`lambda_oracle_bisect`]: bisection on the exact sign of the best expected
//!   linearized loss over a finite distribution
//! - [`lambda_surrogate_bisect`]: bisection driven by trained models with a
//!   tolerance band `epsilon_m`
//! - [`lambda_cv_grid`]: a downward grid scored on validation data
//! - [`train_ema`]: one training run with `lambda` tracking the batch metric

mod search;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use search::{
    lambda_cv_grid, lambda_oracle_bisect, lambda_surrogate_bisect, linearized_loss, oracle_expectations, Branch,
    CandidateRecord, SearchReport,
};
pub use train::{ema_update, train_ema, train_logistic, train_surrogate, mean_surrogate, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Gd,
    Adam,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Optimizer::Gd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}` (expected gd or adam)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub tau: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 10,
            seed: 0,
            tau: 0.0,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {v}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad(format!("adam_epsilon must be > 0, got {}", self.adam_epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OracleBisect,
    SurrogateBisect,
    CvGrid,
    Ema,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::OracleBisect => "oracle_bisect",
            Strategy::SurrogateBisect => "surrogate_bisect",
            Strategy::CvGrid => "cv_grid",
            Strategy::Ema => "ema",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `lambda` resolution. `None` picks a strategy default: `1e-3` for oracle
    /// bisection, `0.1` for the grid, `epsilon_m / (2 * lbar_beta)` for
    /// surrogate bisection.
    pub epsilon: Option<f64>,
    pub epsilon_m: f64,
    pub strategy: Strategy,
    pub ema_gamma: f64,
    pub lambda0: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            lambda_min: 0.0,
            lambda_max: 1.0,
            epsilon: None,
            epsilon_m: 1e-2,
            strategy: Strategy::Ema,
            ema_gamma: 0.7,
            lambda0: 0.5,
        }
    }
}

pub const DEFAULT_ORACLE_EPSILON: f64 = 1e-3;
pub const DEFAULT_GRID_EPSILON: f64 = 0.1;

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda_min.is_finite() && self.lambda_max.is_finite() && self.lambda_min < self.lambda_max) {
            return bad(format!("need lambda_min < lambda_max, got [{}, {}]", self.lambda_min, self.lambda_max));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps < self.range()) {
                return bad(format!("epsilon must lie in (0, {}), got {eps}", self.range()));
            }
        }
        if !(self.epsilon_m > 0.0) {
            return bad(format!("epsilon_m must be > 0, got {}", self.epsilon_m));
        }
        if !(self.ema_gamma > 0.0 && self.ema_gamma < 1.0) {
            return bad(format!("ema_gamma must lie in (0,1), got {}", self.ema_gamma));
        }
        if !self.lambda0.is_finite() {
            return bad(format!("lambda0 must be finite, got {}", self.lambda0));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }
}

/// `ceil(log2(range / epsilon))`, the number of halvings needed to reach `epsilon`.
pub fn bisection_bound(range: f64, epsilon: f64) -> usize {
    let r = range / epsilon;
    if r <= 1.0 {
        0
    } else {
        r.log2().ceil() as usize
    }
}

/// `floor(range / epsilon) + 1`.
pub fn grid_size(range: f64, epsilon: f64) -> usize {
    (range / epsilon + 1e-9).floor() as usize + 1
}
