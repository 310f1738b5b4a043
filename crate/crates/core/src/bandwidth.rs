//! Leave-one-out cross-validation of the bandwidth exponents on a grid
//! restricted to `1/5 < β < δ < 1/3`.
//!
//! δ is chosen first from the complete-case regression, then β from the
//! kernel regression of `Δ_i + ε_i`, restricted to `β ≤ δ − beta_margin`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{BandwidthSpec, Sample};
use crate::exec::Execution;
use crate::kernel::Kernel;

/// Relative tolerance under which two CV scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub delta_grid: Vec<f64>,
    pub beta_margin: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        let (lo, hi, k) = (0.205, 0.330, 14);
        let delta_grid = (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect();
        CvConfig {
            delta_grid,
            beta_margin: 0.01,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_grid.is_empty() {
            return Err(invalid("delta grid is empty"));
        }
        if let Some(g) = self.delta_grid.iter().find(|&&g| !(g > 0.2 && g < 1.0 / 3.0)) {
            return Err(invalid(format!("grid exponent {g} must lie in (1/5, 1/3)")));
        }
        if !(self.beta_margin > 0.0 && self.beta_margin.is_finite()) {
            return Err(invalid(format!("beta margin {} must be positive", self.beta_margin)));
        }
        Ok(())
    }

    fn sorted_grid(&self) -> Vec<f64> {
        let mut grid = self.delta_grid.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

/// LOO squared prediction error of a kernel regression of `responses` on
/// `xs`, scored over the indices where `score` is true. A held-out point
/// with an empty window is predicted as 0.
pub fn loo_error(xs: &[f64], responses: &[f64], score: &[bool], kernel: Kernel, h: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.len() {
        if !score[i] {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..xs.len() {
            if j == i {
                continue;
            }
            let k = kernel.eval((xs[i] - xs[j]) / h);
            if k > 0.0 {
                num += responses[j] * k;
                den += k;
            }
        }
        let pred = if den > 0.0 { num / den } else { 0.0 };
        let r = responses[i] - pred;
        total += r * r;
    }
    total
}

/// Index of the smallest score; near-ties resolve to the earliest index.
fn argmin_with_ties(scores: &[f64], tol: f64) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] - tol {
            best = i;
        }
    }
    best
}

/// CV scores of the complete-case regression for each grid exponent, in
/// ascending exponent order.
pub fn delta_scores(sample: &Sample, kernel: Kernel, config: &CvConfig, exec: Execution) -> Vec<(f64, f64)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = sample
        .records()
        .iter()
        .filter(|r| r.observed)
        .map(|r| (r.x, r.masked_y()))
        .unzip();
    let score = vec![true; xs.len()];
    let n = sample.len() as f64;
    let grid = config.sorted_grid();
    let errs = exec.map(grid.len(), |g| loo_error(&xs, &ys, &score, kernel, n.powf(-grid[g])));
    grid.into_iter().zip(errs).collect()
}

/// Exponent δ of `h = n^{-δ}` minimizing the LOO error of the complete-case
/// regression. Ties go to the smaller δ.
pub fn select_delta(sample: &Sample, kernel: Kernel, config: &CvConfig, exec: Execution) -> Result<f64> {
    config.validate()?;
    if sample.len() < 20 {
        return Err(invalid(format!("cross-validation needs n >= 20, got {}", sample.len())));
    }
    if sample.observed_count() < 2 {
        return Err(Error::Selection("fewer than 2 observed responses".into()));
    }
    let scored = delta_scores(sample, kernel, config, exec);
    let scale: f64 = sample.records().iter().map(|r| r.masked_y().powi(2)).sum();
    let errs: Vec<f64> = scored.iter().map(|s| s.1).collect();
    Ok(scored[argmin_with_ties(&errs, TIE_TOLERANCE * scale)].0)
}

/// Exponent β of `λ = n^{-β}` minimizing the LOO error of the selection
/// probability fit, over grid values in `(1/5, delta − beta_margin]`.
pub fn select_beta(
    sample: &Sample,
    kernel: Kernel,
    eps: &[f64],
    delta: f64,
    config: &CvConfig,
    exec: Execution,
) -> Result<f64> {
    config.validate()?;
    crate::kernel::check_delta(delta)?;
    if eps.len() != sample.len() {
        return Err(invalid("epsilon vector length differs from the sample size"));
    }
    let cap = delta - config.beta_margin;
    let grid: Vec<f64> = config
        .sorted_grid()
        .into_iter()
        .filter(|&g| g > 0.2 && g <= cap)
        .collect();
    if grid.is_empty() {
        // keep the fallback strictly inside (1/5, delta)
        return Ok(if cap > 0.2 { cap } else { 0.5 * (0.2 + delta) });
    }
    let xs = sample.xs();
    let responses: Vec<f64> = sample.records().iter().zip(eps).map(|(r, e)| r.delta() + e).collect();
    let score = vec![true; xs.len()];
    let n = sample.len() as f64;
    let errs = exec.map(grid.len(), |g| {
        loo_error(&xs, &responses, &score, kernel, n.powf(-grid[g]))
    });
    let scale: f64 = responses.iter().map(|r| r * r).sum();
    Ok(grid[argmin_with_ties(&errs, TIE_TOLERANCE * scale)])
}

/// Selects δ then β.
pub fn select_bandwidths(
    sample: &Sample,
    kernel: Kernel,
    eps: &[f64],
    config: &CvConfig,
    exec: Execution,
) -> Result<BandwidthSpec> {
    let delta = select_delta(sample, kernel, config, exec)?;
    let beta = select_beta(sample, kernel, eps, delta, config, exec)?;
    BandwidthSpec::new(delta, beta)
}
