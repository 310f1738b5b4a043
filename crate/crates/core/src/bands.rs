//! Uniform confidence bands, normalized maximal deviations and the
//! sup-norm test of `H0: m = m0`.
//!
//! A [`Fit`] holds the estimates on the evaluation grid. Bands at any level,
//! deviation statistics and tests are derived from it without refitting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    complete_case_point, estimate_selection_prob, ipw_point, ipw_responses, BandwidthSpec, ProbEstimate, Safeguards,
    Sample,
};
use crate::exec::Execution;
use crate::kernel::{check_delta, d_n, gumbel_cdf, gumbel_quantile, log_scale, Kernel, KernelConstants};

/// Equally spaced evaluation points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lo: 0.0,
            hi: 1.0,
            count: 200,
        }
    }
}

impl Grid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let g = Grid { lo, hi, count };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(invalid(format!(
                "grid interval [{}, {}] is not a proper interval",
                self.lo, self.hi
            )));
        }
        if self.count < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {}", self.count)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|j| {
                if j + 1 == self.count {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * (j as f64 / last)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Inverse-probability-weighted estimator with estimated selection probability.
    Proposed,
    /// Nadaraya–Watson on the observed records only.
    CompleteCase,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::CompleteCase => "complete-case",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-point diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFlags {
    /// No kernel weight at the point; estimates are 0 by convention and the
    /// band is unbounded.
    pub empty_window: bool,
    /// An observed record in the window had its selection probability clamped.
    pub clamped_p: bool,
    pub floored_variance: bool,
}

impl PointFlags {
    pub fn any(&self) -> bool {
        self.empty_window || self.clamped_p || self.floored_variance
    }

    /// `|`-separated names, empty when no flag is set.
    pub fn encode(&self) -> String {
        let mut parts = Vec::new();
        if self.empty_window {
            parts.push("empty-window");
        }
        if self.clamped_p {
            parts.push("clamped-p");
        }
        if self.floored_variance {
            parts.push("floored-variance");
        }
        parts.join("|")
    }

    pub fn decode(s: &str) -> Result<Self> {
        let mut f = PointFlags::default();
        for part in s.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "empty-window" => f.empty_window = true,
                "clamped-p" => f.clamped_p = true,
                "floored-variance" => f.floored_variance = true,
                other => return Err(Error::InvalidData(format!("unknown flag `{other}`"))),
            }
        }
        Ok(f)
    }
}

/// Shared knobs for fitting on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSettings {
    pub kernel: Kernel,
    pub grid: Grid,
    pub safeguards: Safeguards,
    pub execution: Execution,
}

impl Default for BandSettings {
    fn default() -> Self {
        BandSettings {
            kernel: Kernel::Epanechnikov,
            grid: Grid::default(),
            safeguards: Safeguards::default(),
            execution: Execution::default(),
        }
    }
}

impl BandSettings {
    pub fn with_kernel(kernel: Kernel) -> Self {
        BandSettings {
            kernel,
            ..Default::default()
        }
    }
}

/// Estimates of `m`, `f` and `σ²` on a grid, ready to be turned into bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub method: Method,
    pub kernel: Kernel,
    pub constants: KernelConstants,
    pub n: usize,
    pub delta: f64,
    pub beta: Option<f64>,
    pub h: f64,
    pub d_n: f64,
    pub grid: Vec<f64>,
    pub mhat: Vec<f64>,
    pub fhat: Vec<f64>,
    /// Floored variance estimates.
    pub sigma2: Vec<f64>,
    pub flags: Vec<PointFlags>,
}

struct PointEstimate {
    mhat: f64,
    fhat: f64,
    sigma2: f64,
    flags: PointFlags,
}

/// Fits the inverse-probability-weighted estimator on the grid.
///
/// `eps` is the realized perturbation vector, one entry per record.
pub fn fit_proposed(sample: &Sample, bw: &BandwidthSpec, eps: &[f64], settings: &BandSettings) -> Result<Fit> {
    bw.validate()?;
    settings.grid.validate()?;
    settings.safeguards.validate()?;
    if eps.len() != sample.len() {
        return Err(invalid(format!(
            "{} perturbations for {} records",
            eps.len(),
            sample.len()
        )));
    }
    let kernel = settings.kernel;
    let guards = settings.safeguards;
    let exec = settings.execution;
    let n = sample.len();
    let h = bw.h(n);
    let lambda = bw.lambda(n);
    let p_max = 1.0 + eps.iter().fold(0.0f64, |m, e| m.max(e.abs()));

    let records = sample.records();
    let probs: Vec<ProbEstimate> = exec.map(n, |i| {
        estimate_selection_prob(sample, kernel, lambda, eps, guards.p_min, p_max, records[i].x)
    });
    let phat: Vec<f64> = probs.iter().map(|p| p.value).collect();
    let responses = ipw_responses(sample, &phat, eps);
    let clamped: Vec<bool> = records
        .iter()
        .zip(&probs)
        .map(|(r, p)| r.observed && p.clamped)
        .collect();

    let grid = settings.grid.points();
    let points = exec.map(grid.len(), |j| {
        let x = grid[j];
        let m = ipw_point(sample, kernel, h, &responses, x);
        let mhat = m.mean();
        let (sigma2, floored) = guards.floor_variance(m.variance_about(mhat));
        let clamped_p = records
            .iter()
            .zip(&clamped)
            .any(|(r, &c)| c && kernel.eval((x - r.x) / h) > 0.0);
        PointEstimate {
            mhat,
            fhat: m.weight / (n as f64 * h),
            sigma2,
            flags: PointFlags {
                empty_window: m.is_empty(),
                clamped_p,
                floored_variance: floored,
            },
        }
    });
    assemble(Method::Proposed, kernel, n, bw.delta, Some(bw.beta), h, grid, points)
}

/// Fits the complete-case estimator. The density is estimated from the
/// observed covariates alone; the normalization uses the full `n`.
pub fn fit_complete_case(sample: &Sample, delta: f64, settings: &BandSettings) -> Result<Fit> {
    check_delta(delta)?;
    settings.grid.validate()?;
    settings.safeguards.validate()?;
    let kernel = settings.kernel;
    let guards = settings.safeguards;
    let n = sample.len();
    let n_obs = sample.observed_count();
    if n_obs == 0 {
        return Err(Error::Band("no observed responses".into()));
    }
    let h = (n as f64).powf(-delta);
    let grid = settings.grid.points();
    let points = settings.execution.map(grid.len(), |j| {
        let m = complete_case_point(sample, kernel, h, grid[j]);
        let mhat = m.mean();
        let (sigma2, floored) = guards.floor_variance(m.variance_about(mhat));
        PointEstimate {
            mhat,
            fhat: m.weight / (n_obs as f64 * h),
            sigma2,
            flags: PointFlags {
                empty_window: m.is_empty(),
                clamped_p: false,
                floored_variance: floored,
            },
        }
    });
    assemble(Method::CompleteCase, kernel, n, delta, None, h, grid, points)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    method: Method,
    kernel: Kernel,
    n: usize,
    delta: f64,
    beta: Option<f64>,
    h: f64,
    grid: Vec<f64>,
    points: Vec<PointEstimate>,
) -> Result<Fit> {
    if points.iter().all(|p| p.flags.empty_window) {
        return Err(Error::Band(format!(
            "every grid point has an empty {method} kernel window"
        )));
    }
    let constants = kernel.constants();
    let d = d_n(n, delta, &constants)?;
    let mut fit = Fit {
        method,
        kernel,
        constants,
        n,
        delta,
        beta,
        h,
        d_n: d,
        grid,
        mhat: Vec::with_capacity(points.len()),
        fhat: Vec::with_capacity(points.len()),
        sigma2: Vec::with_capacity(points.len()),
        flags: Vec::with_capacity(points.len()),
    };
    for p in points {
        fit.mhat.push(p.mhat);
        fit.fhat.push(p.fhat);
        fit.sigma2.push(p.sigma2);
        fit.flags.push(p.flags);
    }
    Ok(fit)
}

/// Header of a serialized band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandHeader {
    pub method: Method,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub beta: Option<f64>,
    pub h: f64,
    pub kernel: Kernel,
    #[serde(rename = "c_K")]
    pub c_k: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub d_n: f64,
    pub x_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub x: f64,
    pub mhat: f64,
    pub fhat: f64,
    pub sigma2: f64,
    pub lower: f64,
    pub upper: f64,
    pub flags: PointFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    pub header: BandHeader,
    pub rows: Vec<BandRow>,
}

impl BandResult {
    /// Trapezoid integral of `upper − lower` over the grid.
    pub fn area(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| 0.5 * (w[1].x - w[0].x) * ((w[0].upper - w[0].lower) + (w[1].upper - w[1].lower)))
            .sum()
    }

    /// True when `m(x_j)` lies in `[lower_j, upper_j]` at every grid point.
    pub fn covers<F: Fn(f64) -> f64>(&self, m: F) -> bool {
        self.rows.iter().all(|r| {
            let v = m(r.x);
            r.lower <= v && v <= r.upper
        })
    }

    pub fn half_widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| 0.5 * (r.upper - r.lower))
    }
}

/// Normalized maximal deviation of an estimate from a reference curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationStat {
    /// Max over unflagged grid points of `√(f̂/σ̂²)·|m̂ − m|`.
    pub sup_value: f64,
    pub u_n: f64,
    /// `exp(−2 exp(−u_n))`
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub reject: bool,
    pub t_n: f64,
    pub critical: f64,
}

impl Fit {
    /// `√(2δ log n)`
    pub fn scale(&self) -> f64 {
        log_scale(self.n, self.delta)
    }

    /// `x^(α)/√(2δ log n) + d_n`
    fn level_factor(&self, alpha: f64) -> Result<(f64, f64)> {
        let x_alpha = gumbel_quantile(alpha)?;
        Ok((x_alpha, x_alpha / self.scale() + self.d_n))
    }

    /// Band half-width at grid index `j` for level `alpha`.
    pub fn half_width(&self, j: usize, alpha: f64) -> Result<f64> {
        let (_, factor) = self.level_factor(alpha)?;
        Ok(self.half_width_with(j, factor))
    }

    fn half_width_with(&self, j: usize, factor: f64) -> f64 {
        let c_k = self.constants.c_k;
        (c_k * self.sigma2[j] / (self.n as f64 * self.h * self.fhat[j])).sqrt() * factor
    }

    /// Asymptotic `(1 − alpha)` uniform band.
    pub fn band(&self, alpha: f64) -> Result<BandResult> {
        let (x_alpha, factor) = self.level_factor(alpha)?;
        let rows = (0..self.grid.len())
            .map(|j| {
                let half = self.half_width_with(j, factor);
                BandRow {
                    x: self.grid[j],
                    mhat: self.mhat[j],
                    fhat: self.fhat[j],
                    sigma2: self.sigma2[j],
                    lower: self.mhat[j] - half,
                    upper: self.mhat[j] + half,
                    flags: self.flags[j],
                }
            })
            .collect();
        let header = BandHeader {
            method: self.method,
            n: self.n,
            alpha,
            delta: self.delta,
            beta: self.beta,
            h: self.h,
            kernel: self.kernel,
            c_k: self.constants.c_k,
            c1: self.constants.c1,
            c2: self.constants.c2,
            d_n: self.d_n,
            x_alpha,
        };
        Ok(BandResult { header, rows })
    }

    /// Max over unflagged points of `√(f̂/σ̂²)·|m̂ − reference|`.
    pub fn sup_deviation<F: Fn(f64) -> f64>(&self, reference: F) -> f64 {
        (0..self.grid.len())
            .filter(|&j| !self.flags[j].empty_window)
            .map(|j| (self.fhat[j] / self.sigma2[j]).sqrt() * (self.mhat[j] - reference(self.grid[j])).abs())
            .fold(0.0, f64::max)
    }

    /// Normalized maximal deviation from the true curve.
    pub fn deviation_stat<F: Fn(f64) -> f64>(&self, true_m: F) -> DeviationStat {
        let sup_value = self.sup_deviation(true_m);
        stat_from_sup(sup_value, self.n, self.h, self.delta, self.constants.c_k, self.d_n)
    }

    /// Sup-norm test of `H0: m = m0` at level `alpha`.
    pub fn test<F: Fn(f64) -> f64>(&self, m0: F, alpha: f64) -> Result<TestOutcome> {
        let (_, factor) = self.level_factor(alpha)?;
        let t_n = self.sup_deviation(m0);
        let critical = (self.constants.c_k / (self.n as f64 * self.h)).sqrt() * factor;
        Ok(TestOutcome {
            reject: t_n > critical,
            t_n,
            critical,
        })
    }
}

/// `u_n = √(2δ log n)·(√(nh/c_K)·sup − d_n)` and `u = exp(−2e^{−u_n})`.
pub fn stat_from_sup(sup_value: f64, n: usize, h: f64, delta: f64, c_k: f64, d_n: f64) -> DeviationStat {
    let u_n = log_scale(n, delta) * ((n as f64 * h / c_k).sqrt() * sup_value - d_n);
    DeviationStat {
        sup_value,
        u_n,
        u: gumbel_cdf(u_n),
    }
}

/// Fits the proposed estimator and returns its `(1 − alpha)` band.
pub fn build_band(
    sample: &Sample,
    bw: &BandwidthSpec,
    eps: &[f64],
    alpha: f64,
    settings: &BandSettings,
) -> Result<BandResult> {
    gumbel_quantile(alpha)?;
    fit_proposed(sample, bw, eps, settings)?.band(alpha)
}

pub fn deviation_stat<F: Fn(f64) -> f64>(fit: &Fit, true_m: F) -> DeviationStat {
    fit.deviation_stat(true_m)
}

/// Maximal-deviation statistic of the complete-case estimator.
pub fn complete_case_stat<F: Fn(f64) -> f64>(
    sample: &Sample,
    bw: &BandwidthSpec,
    true_m: F,
    settings: &BandSettings,
) -> Result<DeviationStat> {
    Ok(fit_complete_case(sample, bw.delta, settings)?.deviation_stat(true_m))
}

pub fn max_deviation_test<F: Fn(f64) -> f64>(
    sample: &Sample,
    bw: &BandwidthSpec,
    eps: &[f64],
    m0: F,
    alpha: f64,
    settings: &BandSettings,
) -> Result<TestOutcome> {
    gumbel_quantile(alpha)?;
    fit_proposed(sample, bw, eps, settings)?.test(m0, alpha)
}
