//! Cost-sensitive target loss and the comp-sum surrogate family.
//!
//! For cost coefficients `gamma_k` the target loss of predicting `h` when the
//! truth is `y` is `L(h, y) = sum_k gamma_k . (h_k y_k, y_k, h_k, 1)`. A
//! per-label nonnegativity shift turns it into `Lbar`, and the surrogate is
//!
//! ```text
//! sum_{y'} [S - Lbar(y', y)] * phi_tau( sum_{y''} exp(sum_i (y''_i - y'_i) h_i) )
//! ```
//!
//! The inner sum is `1 / s(y')` where `s` is the softmax probability of
//! configuration `y'`, so `phi_tau` is applied to an inverse probability.
//! [`Surrogate::value`] evaluates this in `O(l)`; [`Surrogate::naive`] sums
//! the `4^l` terms directly and exists only as a reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{FourTuple, MetricCoefficients};
use crate::models::{LabelVector, Sign};

/// Largest label count accepted by the naive reference.
pub const NAIVE_MAX_LABELS: usize = 12;
/// Largest label count for which `4^(l-1)` and `2^(l-2)` factors are applied literally.
pub const RAW_MAX_LABELS: usize = 30;

/// Per-label tuples `gamma_k = lambda * beta_k - alpha_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub per_label: Vec<FourTuple>,
    pub lambda: f64,
}

impl CostCoefficients {
    /// Coefficients given directly rather than through a metric; `lambda` is NaN.
    pub fn from_tuples(per_label: Vec<FourTuple>) -> Result<Self> {
        if per_label.is_empty() {
            return Err(Error::Shape("cost coefficients need at least one label".into()));
        }
        if per_label.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("cost coefficients must be finite".into()));
        }
        Ok(CostCoefficients { per_label, lambda: f64::NAN })
    }

    pub fn labels(&self) -> usize {
        self.per_label.len()
    }
}

pub fn gamma_from(alpha: &MetricCoefficients, beta: &MetricCoefficients, lambda: f64) -> Result<CostCoefficients> {
    if alpha.len() != beta.len() {
        return Err(Error::Shape(format!("alpha has {} labels, beta has {}", alpha.len(), beta.len())));
    }
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite, got {lambda}")));
    }
    let per_label = alpha.iter().zip(beta.iter()).map(|(a, b)| b.scale(lambda).add(&a.scale(-1.0))).collect();
    Ok(CostCoefficients { per_label, lambda })
}

pub fn target_loss(gamma: &CostCoefficients, prediction: &LabelVector, y: &LabelVector) -> f64 {
    gamma.per_label.iter().enumerate().map(|(k, g)| g.eval(prediction.get(k), y.get(k))).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// `S = sum over all configuration pairs of Lbar`, i.e. `4^(l-1) * sigma`.
    Exact,
    /// `S = sigma`, the sum of the per-label 2x2 cost tables.
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    /// Divided by `2^(l-2)`.
    PerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub tau: f64,
    pub offset_mode: OffsetMode,
    pub normalization: Normalization,
    /// Total shift `C0`; `None` uses `sum_k |gamma_k|_1`.
    pub nonneg_shift: Option<f64>,
}

impl SurrogateParams {
    /// Defaults for training: `S = sigma`, per-configuration units.
    pub fn training(tau: f64) -> Self {
        SurrogateParams { tau, offset_mode: OffsetMode::Sigma, normalization: Normalization::PerConfig, nonneg_shift: None }
    }

    /// The literal definition, for comparison against the naive sum.
    pub fn exact(tau: f64) -> Self {
        SurrogateParams { tau, offset_mode: OffsetMode::Exact, normalization: Normalization::Raw, nonneg_shift: None }
    }
}

/// `log u` at `tau = 0`, `(1 - u^-tau) / tau` for `tau > 0`.
pub fn phi_tau(tau: f64, u: f64) -> Result<f64> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be finite and >= 0, got {tau}")));
    }
    if !(u > 0.0) {
        return Err(Error::Domain(format!("phi_tau needs u > 0, got {u}")));
    }
    Ok(phi_unchecked(tau, u.ln()))
}

fn phi_unchecked(tau: f64, log_u: f64) -> f64 {
    if tau == 0.0 {
        log_u
    } else {
        -(-tau * log_u).exp_m1() / tau
    }
}

/// Per-label shifts whose sum is `C0` and which make every shifted cell nonnegative.
fn label_shifts(gamma: &CostCoefficients, c0: Option<f64>) -> Result<Vec<f64>> {
    match c0 {
        None => Ok(gamma.per_label.iter().map(FourTuple::abs_sum).collect()),
        Some(c0) => {
            if !(c0 >= 0.0 && c0.is_finite()) {
                return Err(Error::Domain(format!("nonnegativity shift must be finite and >= 0, got {c0}")));
            }
            let mins: Vec<f64> = gamma
                .per_label
                .iter()
                .map(|g| {
                    Sign::BOTH
                        .iter()
                        .flat_map(|&a| Sign::BOTH.iter().map(move |&b| g.eval(a, b)))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let deficit: f64 = mins.iter().sum();
            let spare = c0 + deficit;
            if spare < -1e-12 * (1.0 + c0.abs()) {
                return Err(Error::Domain(format!(
                    "shift {c0} leaves the cost negative (minimum unshifted cost {deficit})"
                )));
            }
            let each = spare.max(0.0) / mins.len() as f64;
            Ok(mins.iter().map(|m| each - m).collect())
        }
    }
}

fn idx(s: Sign) -> usize {
    usize::from(!s.is_pos())
}

/// `sigma` (or the full pair sum in exact mode), the weight offset `S`.
pub fn cost_offset(gamma: &CostCoefficients, params: &SurrogateParams) -> Result<f64> {
    Ok(Surrogate::new(gamma, params)?.offset())
}

/// Numerically stable `log(1 + e^t)`.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A surrogate instantiated for fixed costs and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    l: usize,
    tau: f64,
    normalization: Normalization,
    offset: f64,
    /// `cells[k][a][b] = Lbar_k(a, b)` with index 0 for `+1`.
    cells: Vec<[[f64; 2]; 2]>,
}

impl Surrogate {
    pub fn new(gamma: &CostCoefficients, params: &SurrogateParams) -> Result<Self> {
        let l = gamma.labels();
        if l == 0 {
            return Err(Error::Shape("cost coefficients need at least one label".into()));
        }
        if !(params.tau >= 0.0 && params.tau.is_finite()) {
            return Err(Error::Domain(format!("tau must be finite and >= 0, got {}", params.tau)));
        }
        if params.normalization == Normalization::Raw && l > RAW_MAX_LABELS {
            return Err(Error::ScaleGuard { what: "raw normalization label count".into(), limit: RAW_MAX_LABELS as u64 });
        }
        let shifts = label_shifts(gamma, params.nonneg_shift)?;
        let cells: Vec<[[f64; 2]; 2]> = gamma
            .per_label
            .iter()
            .zip(&shifts)
            .map(|(g, s)| {
                let mut c = [[0.0; 2]; 2];
                for a in Sign::BOTH {
                    for b in Sign::BOTH {
                        c[idx(a)][idx(b)] = g.eval(a, b) + s;
                    }
                }
                c
            })
            .collect();
        let sigma: f64 = cells.iter().map(|c| c[0][0] + c[0][1] + c[1][0] + c[1][1]).sum();
        let offset = match params.offset_mode {
            OffsetMode::Sigma => sigma,
            OffsetMode::Exact => {
                if l > RAW_MAX_LABELS {
                    return Err(Error::ScaleGuard { what: "exact offset label count".into(), limit: RAW_MAX_LABELS as u64 });
                }
                4f64.powi(l as i32 - 1) * sigma
            }
        };
        Ok(Surrogate { l, tau: params.tau, normalization: params.normalization, offset, cells })
    }

    pub fn labels(&self) -> usize {
        self.l
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Factor applied to the literal configuration sum: 1 for raw, `2^-(l-2)` per configuration.
    pub fn unit_scale(&self) -> f64 {
        match self.normalization {
            Normalization::Raw => 1.0,
            Normalization::PerConfig => 2f64.powi(2 - self.l as i32),
        }
    }

    /// Shifted cost `Lbar(y', y)`.
    pub fn shifted_cost(&self, y_prime: &LabelVector, y: &LabelVector) -> f64 {
        self.cells.iter().enumerate().map(|(k, c)| c[idx(y_prime.get(k))][idx(y.get(k))]).sum()
    }

    /// Configuration weight `S - Lbar(y', y)`.
    pub fn weight(&self, y_prime: &LabelVector, y: &LabelVector) -> f64 {
        self.offset - self.shifted_cost(y_prime, y)
    }

    fn check(&self, scores: &[f64], y: &LabelVector) -> Result<()> {
        if scores.len() != self.l || y.len() != self.l {
            return Err(Error::Shape(format!(
                "expected {} scores and labels, got {} and {}",
                self.l,
                scores.len(),
                y.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("scores must be finite".into()));
        }
        Ok(())
    }

    /// Direct double sum over configurations.
    pub fn naive(&self, scores: &[f64], y: &LabelVector) -> Result<f64> {
        self.check(scores, y)?;
        if self.l > NAIVE_MAX_LABELS {
            return Err(Error::ScaleGuard { what: "naive surrogate label count".into(), limit: NAIVE_MAX_LABELS as u64 });
        }
        let n = 1usize << self.l;
        let configs: Vec<LabelVector> = (0..n).map(|i| LabelVector::from_config_index(self.l, i)).collect();
        let mut total = 0.0;
        for yp in &configs {
            let u: f64 = configs
                .iter()
                .map(|ypp| (0..self.l).map(|i| (ypp.value(i) - yp.value(i)) * scores[i]).sum::<f64>().exp())
                .sum();
            total += self.weight(yp, y) * phi_tau(self.tau, u)?;
        }
        Ok(total * self.unit_scale())
    }

    pub fn value(&self, scores: &[f64], y: &LabelVector) -> Result<f64> {
        self.check(scores, y)?;
        Ok(self.eval(scores, y, None))
    }

    /// Loss value, with the gradient with respect to the scores written to `grad`.
    pub fn value_and_gradient(&self, scores: &[f64], y: &LabelVector, grad: &mut [f64]) -> Result<f64> {
        self.check(scores, y)?;
        if grad.len() != self.l {
            return Err(Error::Shape(format!("gradient buffer has length {}, expected {}", grad.len(), self.l)));
        }
        Ok(self.eval(scores, y, Some(grad)))
    }

    pub fn gradient(&self, scores: &[f64], y: &LabelVector) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.l];
        self.value_and_gradient(scores, y, &mut g)?;
        Ok(g)
    }

    /// Factorized evaluation in per-configuration units, rescaled at the end.
    fn eval(&self, scores: &[f64], y: &LabelVector, grad: Option<&mut [f64]>) -> f64 {
        let l = self.l;
        let per = self.offset / l as f64;
        let c = |j: usize, a: usize| per - self.cells[j][a][idx(y.get(j))];
        let scale = match self.normalization {
            Normalization::PerConfig => 1.0,
            Normalization::Raw => 2f64.powi(l as i32 - 2),
        };
        let sum_a: f64 = (0..l).map(|j| c(j, 0) + c(j, 1)).sum();

        if self.tau == 0.0 {
            // log Z_j(a) = softplus(-2 a h_j)
            let (mut sum_b, mut sum_ab, mut sum_c) = (0.0, 0.0, 0.0);
            for j in 0..l {
                let h = scores[j];
                let lz = [softplus(-2.0 * h), softplus(2.0 * h)];
                let a_j = c(j, 0) + c(j, 1);
                let b_j = lz[0] + lz[1];
                sum_b += b_j;
                sum_ab += a_j * b_j;
                sum_c += c(j, 0) * lz[0] + c(j, 1) * lz[1];
            }
            if let Some(g) = grad {
                for j in 0..l {
                    let h = scores[j];
                    // d/dh softplus(-2 a h) = -2 a sigmoid(-2 a h)
                    let dlz = [-2.0 * sigmoid(-2.0 * h), 2.0 * sigmoid(2.0 * h)];
                    let a_j = c(j, 0) + c(j, 1);
                    let db = dlz[0] + dlz[1];
                    let dc = c(j, 0) * dlz[0] + c(j, 1) * dlz[1];
                    g[j] = scale * ((sum_a - a_j) * db + 2.0 * dc);
                }
            }
            scale * (sum_a * sum_b - sum_ab + 2.0 * sum_c)
        } else {
            let tau = self.tau;
            // W_j(a) = Z_j(a)^-tau; S_j = W_j(+) + W_j(-); D_j = sum_a c_j(a) W_j(a)
            let mut log_half_p = 0.0;
            let mut ratio = 0.0;
            let mut parts = Vec::with_capacity(if grad.is_some() { l } else { 0 });
            for j in 0..l {
                let h = scores[j];
                let w = [(-tau * softplus(-2.0 * h)).exp(), (-tau * softplus(2.0 * h)).exp()];
                let s_j = w[0] + w[1];
                let d_j = c(j, 0) * w[0] + c(j, 1) * w[1];
                log_half_p += (0.5 * s_j).ln();
                ratio += d_j / s_j;
                if grad.is_some() {
                    parts.push((w, s_j, d_j));
                }
            }
            let q = 4.0 * log_half_p.exp();
            if let Some(g) = grad {
                for j in 0..l {
                    let h = scores[j];
                    let (w, s_j, d_j) = parts[j];
                    // dW_j(a)/dh = 2 a tau W sigmoid(-2 a h)
                    let dw = [2.0 * tau * w[0] * sigmoid(-2.0 * h), -2.0 * tau * w[1] * sigmoid(2.0 * h)];
                    let ds = dw[0] + dw[1];
                    let dd = c(j, 0) * dw[0] + c(j, 1) * dw[1];
                    let dq = q * (ds / s_j * ratio + dd / s_j - d_j * ds / (s_j * s_j));
                    g[j] = -scale * dq / tau;
                }
            }
            scale * (2.0 * sum_a - q * ratio) / tau
        }
    }
}

pub fn surrogate_naive(gamma: &CostCoefficients, params: &SurrogateParams, scores: &[f64], y: &LabelVector) -> Result<f64> {
    Surrogate::new(gamma, params)?.naive(scores, y)
}

pub fn surrogate_factorized(
    gamma: &CostCoefficients,
    params: &SurrogateParams,
    scores: &[f64],
    y: &LabelVector,
) -> Result<f64> {
    Surrogate::new(gamma, params)?.value(scores, y)
}

pub fn surrogate_gradient(
    gamma: &CostCoefficients,
    params: &SurrogateParams,
    scores: &[f64],
    y: &LabelVector,
) -> Result<Vec<f64>> {
    Surrogate::new(gamma, params)?.gradient(scores, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{preset, Averaging, Preset};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn f1_gamma(l: usize, lambda: f64) -> CostCoefficients {
        let spec = preset(Preset::F1, l, Averaging::Micro).unwrap();
        gamma_from(&spec.alpha, &spec.beta, lambda).unwrap()
    }

    fn random_gamma<R: Rng>(r: &mut R, l: usize) -> CostCoefficients {
        let t = (0..l)
            .map(|_| {
                FourTuple::new(
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                )
            })
            .collect();
        CostCoefficients::from_tuples(t).unwrap()
    }

    fn random_labels<R: Rng>(r: &mut R, l: usize) -> LabelVector {
        LabelVector::from_config_index(l, r.random_range(0..1usize << l))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn f1_cost_gaps() {
        let g = f1_gamma(1, 0.7);
        let cost = |h: i8, y: i8| {
            target_loss(&g, &LabelVector::from_i8(&[h]).unwrap(), &LabelVector::from_i8(&[y]).unwrap())
        };
        assert!((cost(-1, 1) - cost(1, 1) - 1.3).abs() < 1e-15);
        assert!((cost(1, -1) - cost(-1, -1) - 0.7).abs() < 1e-15);
        assert!((cost(1, 1) + 0.6).abs() < 1e-15);
        assert!((cost(1, -1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn gamma_identities() {
        let spec = preset(Preset::Jaccard, 3, Averaging::Micro).unwrap();
        let g = gamma_from(&spec.alpha, &spec.beta, 0.0).unwrap();
        for (gk, ak) in g.per_label.iter().zip(spec.alpha.iter()) {
            assert_eq!(gk.as_array(), ak.scale(-1.0).as_array());
        }
        let g = gamma_from(&spec.alpha, &spec.alpha, 1.0).unwrap();
        assert!(g.per_label.iter().all(|t| t.as_array() == [0.0; 4]));
        let short = preset(Preset::F1, 2, Averaging::Micro).unwrap();
        assert!(matches!(gamma_from(&spec.alpha, &short.beta, 0.5), Err(Error::Shape(_))));
        let zero = CostCoefficients::from_tuples(vec![FourTuple::ZERO; 2]).unwrap();
        assert_eq!(target_loss(&zero, &LabelVector::all(2, Sign::Pos), &LabelVector::all(2, Sign::Neg)), 0.0);
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_tau(0.0, 1.0).unwrap(), 0.0);
        assert!((phi_tau(1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((phi_tau(0.5, 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(phi_tau(0.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(phi_tau(0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(phi_tau(-0.1, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_continuity_at_zero() {
        for i in 0..=200 {
            let u = 0.1 + 9.9 * f64::from(i) / 200.0;
            assert!((phi_tau(1e-8, u).unwrap() - u.ln()).abs() <= 1e-6);
        }
    }

    #[test]
    fn phi_strictly_increasing() {
        for tau in [0.0, 0.3, 0.5, 1.0, 2.0, 5.0] {
            let vals: Vec<f64> = (1..=100).map(|i| phi_tau(tau, 0.05 * f64::from(i)).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "tau={tau}");
        }
    }

    #[test]
    fn offset_modes() {
        let g = f1_gamma(1, 0.4);
        let a = cost_offset(&g, &SurrogateParams::exact(0.0)).unwrap();
        let b = cost_offset(&g, &SurrogateParams::training(0.0)).unwrap();
        assert_eq!(a, b);

        // Lbar constant c: gamma = (0,0,0,c) with a zero shift.
        let l = 3;
        let c = 1.5;
        let g = CostCoefficients::from_tuples(vec![FourTuple::new(0.0, 0.0, 0.0, c); l]).unwrap();
        let mut p = SurrogateParams::training(0.0);
        p.nonneg_shift = Some(0.0);
        assert!((cost_offset(&g, &p).unwrap() - 4.0 * l as f64 * c).abs() < 1e-12);
        p.offset_mode = OffsetMode::Exact;
        assert!((cost_offset(&g, &p).unwrap() - 4f64.powi(l as i32) * l as f64 * c).abs() < 1e-9);

        let g = f1_gamma(31, 0.5);
        assert!(matches!(cost_offset(&g, &SurrogateParams::exact(0.0)), Err(Error::ScaleGuard { .. })));
        assert!(cost_offset(&g, &SurrogateParams::training(0.0)).is_ok());
    }

    #[test]
    fn user_shift_validation() {
        let g = f1_gamma(2, 0.7);
        let mut p = SurrogateParams::training(0.0);
        // Minimum unshifted cost per label is 2*0.7 - 2 = -0.6.
        p.nonneg_shift = Some(1.2);
        assert!(Surrogate::new(&g, &p).is_ok());
        p.nonneg_shift = Some(1.0);
        assert!(matches!(Surrogate::new(&g, &p), Err(Error::Domain(_))));
        p.nonneg_shift = Some(-1.0);
        assert!(Surrogate::new(&g, &p).is_err());
    }

    #[test]
    fn weights_nonnegative() {
        let mut r = rng::stream(11, 0);
        for trial in 0..100 {
            let l = 1 + trial % 6;
            let g = random_gamma(&mut r, l);
            for mode in [OffsetMode::Sigma, OffsetMode::Exact] {
                let p = SurrogateParams { tau: 0.0, offset_mode: mode, normalization: Normalization::Raw, nonneg_shift: None };
                let s = Surrogate::new(&g, &p).unwrap();
                for i in 0..1usize << l {
                    for j in 0..1usize << l {
                        let (a, b) = (LabelVector::from_config_index(l, i), LabelVector::from_config_index(l, j));
                        assert!(s.shifted_cost(&a, &b) >= -1e-12);
                        assert!(s.weight(&a, &b) >= -1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_scores_single_label() {
        let g = f1_gamma(1, 0.3);
        let s = Surrogate::new(&g, &SurrogateParams::exact(0.0)).unwrap();
        let y = LabelVector::from_i8(&[1]).unwrap();
        let total_w = s.weight(&LabelVector::from_i8(&[1]).unwrap(), &y) + s.weight(&LabelVector::from_i8(&[-1]).unwrap(), &y);
        let expect = 2f64.ln() * total_w;
        assert!(rel(s.naive(&[0.0], &y).unwrap(), expect) < 1e-14);
        assert!(rel(s.value(&[0.0], &y).unwrap(), expect) < 1e-14);
    }

    #[test]
    fn single_label_is_weighted_logistic() {
        let g = f1_gamma(1, 0.6);
        let s = Surrogate::new(&g, &SurrogateParams::exact(0.0)).unwrap();
        let y = LabelVector::from_i8(&[-1]).unwrap();
        let wp = s.weight(&LabelVector::from_i8(&[1]).unwrap(), &y);
        let wn = s.weight(&LabelVector::from_i8(&[-1]).unwrap(), &y);
        for h in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let expect = wp * softplus(-2.0 * h) + wn * softplus(2.0 * h);
            assert!(rel(s.value(&[h], &y).unwrap(), expect) < 1e-13);
        }
    }

    #[test]
    fn factorized_matches_naive() {
        let mut r = rng::stream(3, 0);
        for tau in [0.0, 0.3, 0.5, 1.0, 2.0] {
            for l in 1..=5 {
                for _ in 0..10 {
                    let g = random_gamma(&mut r, l);
                    let y = random_labels(&mut r, l);
                    let h: Vec<f64> = (0..l).map(|_| r.random_range(-2.0..2.0)).collect();
                    for norm in [Normalization::Raw, Normalization::PerConfig] {
                        let p = SurrogateParams { tau, offset_mode: OffsetMode::Exact, normalization: norm, nonneg_shift: None };
                        let s = Surrogate::new(&g, &p).unwrap();
                        let (n, f) = (s.naive(&h, &y).unwrap(), s.value(&h, &y).unwrap());
                        assert!(rel(f, n) <= 1e-9, "tau={tau} l={l}: {f} vs {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_gamma_constant() {
        let zero = CostCoefficients::from_tuples(vec![FourTuple::ZERO; 4]).unwrap();
        let y = LabelVector::all(4, Sign::Pos);
        let h = [0.3, -1.0, 2.0, 0.0];
        let s = Surrogate::new(&zero, &SurrogateParams::exact(0.0)).unwrap();
        assert_eq!(s.naive(&h, &y).unwrap(), 0.0);
        assert_eq!(s.value(&h, &y).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::stream(4, 0);
        for tau in [0.0, 0.5, 1.0] {
            for l in 1..=6 {
                for _ in 0..10 {
                    let g = random_gamma(&mut r, l);
                    let y = random_labels(&mut r, l);
                    let h: Vec<f64> = (0..l).map(|_| r.random_range(-2.0..2.0)).collect();
                    let s = Surrogate::new(&g, &SurrogateParams::training(tau)).unwrap();
                    let grad = s.gradient(&h, &y).unwrap();
                    for j in 0..l {
                        let (mut hp, mut hm) = (h.clone(), h.clone());
                        hp[j] += 1e-4;
                        hm[j] -= 1e-4;
                        let fd = (s.value(&hp, &y).unwrap() - s.value(&hm, &y).unwrap()) / 2e-4;
                        assert!(rel(grad[j], fd) <= 1e-5, "tau={tau} l={l} j={j}: {} vs {fd}", grad[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_gradient_vanishes_at_zero() {
        // c_j(+) = c_j(-) when Lbar_j(+, y) = Lbar_j(-, y): gamma = (0, g2, 0, g4).
        let g = CostCoefficients::from_tuples(vec![FourTuple::new(0.0, 0.4, 0.0, 0.2); 3]).unwrap();
        for tau in [0.0, 0.5, 1.0] {
            let s = Surrogate::new(&g, &SurrogateParams::training(tau)).unwrap();
            let grad = s.gradient(&[0.0; 3], &LabelVector::from_i8(&[1, -1, 1]).unwrap()).unwrap();
            assert!(grad.iter().all(|v| v.abs() < 1e-14), "{grad:?}");
        }
    }

    #[test]
    fn guards() {
        let g = f1_gamma(13, 0.5);
        let s = Surrogate::new(&g, &SurrogateParams::training(0.0)).unwrap();
        let y = LabelVector::all(13, Sign::Pos);
        assert!(matches!(s.naive(&[0.0; 13], &y), Err(Error::ScaleGuard { .. })));
        assert!(s.value(&[0.0; 13], &y).is_ok());
        assert!(matches!(s.value(&[0.0; 12], &y), Err(Error::Shape(_))));
        assert!(matches!(s.value(&[f64::NAN; 13], &y), Err(Error::Domain(_))));
        let mut p = SurrogateParams::training(0.0);
        p.normalization = Normalization::Raw;
        assert!(matches!(Surrogate::new(&f1_gamma(31, 0.5), &p), Err(Error::ScaleGuard { .. })));
    }

    #[test]
    fn normalization_preserves_minimizer() {
        let mut r = rng::stream(8, 0);
        let l = 3;
        let g = random_gamma(&mut r, l);
        let y = random_labels(&mut r, l);
        let grid: Vec<Vec<f64>> = (0..125)
            .map(|i| vec![f64::from(i % 5) - 2.0, f64::from((i / 5) % 5) - 2.0, f64::from(i / 25) - 2.0])
            .collect();
        let argmin = |norm| {
            let p = SurrogateParams { tau: 0.5, offset_mode: OffsetMode::Sigma, normalization: norm, nonneg_shift: None };
            let s = Surrogate::new(&g, &p).unwrap();
            (0..grid.len())
                .min_by(|&a, &b| s.value(&grid[a], &y).unwrap().total_cmp(&s.value(&grid[b], &y).unwrap()))
                .unwrap()
        };
        assert_eq!(argmin(Normalization::Raw), argmin(Normalization::PerConfig));
    }

    proptest! {
        #[test]
        fn weight_scaling_scales_gradient(c in 0.1f64..10.0, h in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let g = f1_gamma(4, 0.35);
            let scaled = CostCoefficients::from_tuples(g.per_label.iter().map(|t| t.scale(c)).collect()).unwrap();
            let y = LabelVector::from_i8(&[1, -1, -1, 1]).unwrap();
            for tau in [0.0, 0.7] {
                let a = Surrogate::new(&g, &SurrogateParams::training(tau)).unwrap().gradient(&h, &y).unwrap();
                let b = Surrogate::new(&scaled, &SurrogateParams::training(tau)).unwrap().gradient(&h, &y).unwrap();
                for (x, z) in a.iter().zip(&b) {
                    prop_assert!((c * x - z).abs() <= 1e-10 * (1.0 + z.abs()));
                }
            }
        }

        #[test]
        fn surrogate_nonnegative(h in proptest::collection::vec(-5.0f64..5.0, 3), lambda in 0.0f64..1.0, tau in 0.0f64..3.0) {
            let g = f1_gamma(3, lambda);
            let s = Surrogate::new(&g, &SurrogateParams::training(tau)).unwrap();
            let v = s.value(&h, &LabelVector::from_i8(&[1, -1, 1]).unwrap()).unwrap();
            prop_assert!(v >= -1e-9);
        }
    }
}
