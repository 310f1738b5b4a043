//! Kernel estimators for samples whose responses may be missing at random.
//!
//! All sums run left to right in record order. A ratio whose kernel-weight
//! denominator is zero evaluates to 0; callers that need to know use the
//! `*_point` variants, which also report the denominator.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{check_delta, Kernel};

/// One observation. `y` is read only when `observed` is true, so a latent
/// response may be kept alongside a masked record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: f64,
    pub y: Option<f64>,
    pub observed: bool,
}

impl Record {
    pub fn observed(x: f64, y: f64) -> Self {
        Record {
            x,
            y: Some(y),
            observed: true,
        }
    }

    pub fn missing(x: f64) -> Self {
        Record {
            x,
            y: None,
            observed: false,
        }
    }

    /// `Δ·Y`, zero for unobserved records.
    #[inline]
    pub fn masked_y(&self) -> f64 {
        if self.observed {
            self.y.unwrap_or(0.0)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        if self.observed {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    records: Vec<Record>,
}

impl Sample {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidData("sample must contain at least one record".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if !r.x.is_finite() {
                return Err(Error::Row {
                    row: i + 1,
                    message: "covariate x is not finite".into(),
                });
            }
            if r.observed && !r.y.is_some_and(f64::is_finite) {
                return Err(Error::Row {
                    row: i + 1,
                    message: "observed record needs a finite y".into(),
                });
            }
        }
        Ok(Sample { records })
    }

    /// A sample with every response observed.
    pub fn complete(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(invalid("x and y lengths differ"));
        }
        Sample::new(xs.iter().zip(ys).map(|(&x, &y)| Record::observed(x, y)).collect())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.records.iter().filter(|r| r.observed).count()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.x).collect()
    }

    /// Moves every covariate by `shift`.
    pub fn shifted(&self, shift: f64) -> Sample {
        let records = self.records.iter().map(|r| Record { x: r.x + shift, ..*r }).collect();
        Sample { records }
    }
}

/// Distribution of the artificial perturbations added to the weighted
/// responses and to the selection indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EpsilonSpec {
    Zero,
    /// iid Unif(−kappa, kappa)
    Uniform {
        kappa: f64,
    },
}

impl EpsilonSpec {
    pub fn kappa(&self) -> f64 {
        match *self {
            EpsilonSpec::Zero => 0.0,
            EpsilonSpec::Uniform { kappa } => kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSpec::Zero => Ok(()),
            EpsilonSpec::Uniform { kappa } if kappa.is_finite() && kappa >= 0.0 => Ok(()),
            EpsilonSpec::Uniform { kappa } => Err(invalid(format!("kappa {kappa} must be finite and >= 0"))),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            EpsilonSpec::Zero => "zero".to_string(),
            EpsilonSpec::Uniform { kappa } => format!("uniform({kappa})"),
        }
    }
}

/// Draws `n` perturbations. `Zero` consumes nothing from `rng`.
pub fn draw_epsilons<R: Rng + ?Sized>(spec: &EpsilonSpec, n: usize, rng: &mut R) -> Vec<f64> {
    match *spec {
        EpsilonSpec::Zero => vec![0.0; n],
        EpsilonSpec::Uniform { kappa } if kappa > 0.0 => {
            // open interval: reject the (measure-zero) lower endpoint
            let dist = Uniform::new(-kappa, kappa).expect("kappa > 0");
            (0..n)
                .map(|_| loop {
                    let e = dist.sample(rng);
                    if e > -kappa {
                        break e;
                    }
                })
                .collect()
        }
        EpsilonSpec::Uniform { .. } => vec![0.0; n],
    }
}

/// Perturbations drawn from a ChaCha20 stream keyed by `seed`.
pub fn seeded_epsilons(spec: &EpsilonSpec, n: usize, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    draw_epsilons(spec, n, &mut rand_chacha::ChaCha20Rng::seed_from_u64(seed))
}

/// Exponents of `h_n = n^{-delta}` (regression) and `λ_n = n^{-beta}`
/// (selection probability).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSpec {
    pub delta: f64,
    pub beta: f64,
}

impl BandwidthSpec {
    pub fn new(delta: f64, beta: f64) -> Result<Self> {
        let spec = BandwidthSpec { delta, beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if !(self.beta > 0.2 && self.beta < self.delta) {
            return Err(invalid(format!(
                "need 1/5 < beta < delta < 1/3, got delta = {}, beta = {}",
                self.delta, self.beta
            )));
        }
        Ok(())
    }

    pub fn h(&self, n: usize) -> f64 {
        (n as f64).powf(-self.delta)
    }

    pub fn lambda(&self, n: usize) -> f64 {
        (n as f64).powf(-self.beta)
    }
}

/// Numerical safeguards applied before dividing by estimated quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Safeguards {
    /// Lower clamp for the estimated selection probability.
    pub p_min: f64,
    /// Floor for the estimated conditional variance.
    pub sigma2_min: f64,
}

impl Default for Safeguards {
    fn default() -> Self {
        Safeguards {
            p_min: 0.05,
            sigma2_min: 1e-8,
        }
    }
}

impl Safeguards {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(invalid(format!("p_min {} must lie in (0, 1]", self.p_min)));
        }
        if !(self.sigma2_min > 0.0 && self.sigma2_min.is_finite()) {
            return Err(invalid(format!("sigma2_min {} must be positive", self.sigma2_min)));
        }
        Ok(())
    }

    /// Returns the floored variance and whether the floor was applied.
    pub fn floor_variance(&self, raw: f64) -> (f64, bool) {
        if raw < self.sigma2_min || raw.is_nan() {
            (self.sigma2_min, true)
        } else {
            (raw, false)
        }
    }
}

/// Kernel-weighted sums at a point: `Σ K`, `Σ w K`, `Σ w² K`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalMoments {
    pub weight: f64,
    pub first: f64,
    pub second: f64,
}

impl LocalMoments {
    pub fn accumulate<I>(pairs: I, kernel: Kernel, h: f64, x: f64) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut m = LocalMoments::default();
        for (xi, wi) in pairs {
            let k = kernel.eval((x - xi) / h);
            if k > 0.0 {
                m.weight += k;
                m.first += wi * k;
                m.second += wi * wi * k;
            }
        }
        m
    }

    pub fn is_empty(&self) -> bool {
        self.weight <= 0.0
    }

    /// Weighted mean, 0 on an empty window.
    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.first / self.weight
        }
    }

    /// Weighted second moment minus `center²`; 0 on an empty window.
    pub fn variance_about(&self, center: f64) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.second / self.weight - center * center
        }
    }
}

/// Nadaraya–Watson estimate from fully observed pairs.
pub fn nw_regress(xs: &[f64], ys: &[f64], kernel: Kernel, h: f64, x: f64) -> f64 {
    LocalMoments::accumulate(xs.iter().copied().zip(ys.iter().copied()), kernel, h, x).mean()
}

/// Kernel density estimate `(1/nh) Σ K((x − X_i)/h)` over all records.
pub fn kde(sample: &Sample, kernel: Kernel, h: f64, x: f64) -> f64 {
    let sum: f64 = sample.records.iter().map(|r| kernel.eval((x - r.x) / h)).sum();
    sum / (sample.len() as f64 * h)
}

pub fn complete_case_point(sample: &Sample, kernel: Kernel, h: f64, x: f64) -> LocalMoments {
    let pairs = sample
        .records
        .iter()
        .filter(|r| r.observed)
        .map(|r| (r.x, r.masked_y()));
    LocalMoments::accumulate(pairs, kernel, h, x)
}

/// Nadaraya–Watson estimate from the observed records only.
pub fn complete_case_regress(sample: &Sample, kernel: Kernel, h: f64, x: f64) -> f64 {
    complete_case_point(sample, kernel, h, x).mean()
}

/// Estimated selection probability at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    /// Kernel average of `Δ_i + ε_i`, 0 on an empty window.
    pub raw: f64,
    /// `raw` clamped into `[p_min, 1 + κ]`; `p_min` on an empty window.
    pub value: f64,
    pub clamped: bool,
    pub empty_window: bool,
}

/// Kernel regression of `Δ_i + ε_i` on `X_i` with bandwidth `lambda`,
/// clamped into `[p_min, p_max]`.
pub fn estimate_selection_prob(
    sample: &Sample,
    kernel: Kernel,
    lambda: f64,
    eps: &[f64],
    p_min: f64,
    p_max: f64,
    x: f64,
) -> ProbEstimate {
    let pairs = sample.records.iter().zip(eps).map(|(r, &e)| (r.x, r.delta() + e));
    let m = LocalMoments::accumulate(pairs, kernel, lambda, x);
    let raw = m.mean();
    if m.is_empty() {
        return ProbEstimate {
            raw,
            value: p_min,
            clamped: true,
            empty_window: true,
        };
    }
    let value = raw.clamp(p_min, p_max);
    ProbEstimate {
        raw,
        value,
        clamped: value != raw,
        empty_window: false,
    }
}

/// `Δ_i Y_i / p̂(X_i) + ε_i` for every record.
pub fn ipw_responses(sample: &Sample, phat: &[f64], eps: &[f64]) -> Vec<f64> {
    sample
        .records
        .iter()
        .zip(phat)
        .zip(eps)
        .map(|((r, &p), &e)| if r.observed { r.masked_y() / p + e } else { e })
        .collect()
}

pub fn ipw_point(sample: &Sample, kernel: Kernel, h: f64, responses: &[f64], x: f64) -> LocalMoments {
    let pairs = sample.records.iter().zip(responses).map(|(r, &w)| (r.x, w));
    LocalMoments::accumulate(pairs, kernel, h, x)
}

/// Inverse-probability-weighted estimate of `m(x)`; `phat` holds `p̂(X_i)`
/// for every record (already clamped away from 0).
pub fn ipw_regress(sample: &Sample, kernel: Kernel, h: f64, phat: &[f64], eps: &[f64], x: f64) -> f64 {
    let responses = ipw_responses(sample, phat, eps);
    ipw_point(sample, kernel, h, &responses, x).mean()
}

/// Conditional variance of the weighted response before flooring.
pub fn ipw_variance(sample: &Sample, kernel: Kernel, h: f64, phat: &[f64], eps: &[f64], x: f64, mhat_x: f64) -> f64 {
    let responses = ipw_responses(sample, phat, eps);
    ipw_point(sample, kernel, h, &responses, x).variance_about(mhat_x)
}
