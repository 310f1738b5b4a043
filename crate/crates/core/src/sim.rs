//! Monte Carlo coverage study on the benchmark regression model
//!
//! ```text
//! Y = sin(π [X⁴ + e^{cos X}]) + σ(X) Z,   X ~ N(0.5, 1),  Z ~ N(0, 1),
//! σ²(x) = 1 + e^{−(x+2)}
//! ```
//!
//! with logistic missingness models. Replication `r` draws its data from
//! stream `2r` and its perturbations from stream `2r + 1` of a ChaCha20
//! generator keyed by the master seed, so each replication is reproducible
//! on its own and the report does not depend on scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bands::{fit_complete_case, fit_proposed, BandSettings, Grid, Method};
use crate::bandwidth::{select_bandwidths, CvConfig};
use crate::error::{invalid, Error, Result};
use crate::estimators::{draw_epsilons, BandwidthSpec, EpsilonSpec, Record, Safeguards, Sample};
use crate::exec::Execution;
use crate::kernel::{gumbel_quantile, Kernel};

/// `m(x) = sin(π [x⁴ + e^{cos x}])`
pub fn regression_fn(x: f64) -> f64 {
    (PI * (x.powi(4) + x.cos().exp())).sin()
}

/// `σ²(x) = 1 + e^{−(x+2)}`
pub fn variance_fn(x: f64) -> f64 {
    1.0 + (-(x + 2.0)).exp()
}

/// Selection mechanism `p(x) = P(Δ = 1 | X = x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissingModel {
    /// `p(x) = logistic(1 − 2x)`, about half of the responses missing.
    A,
    /// `p(x) = logistic(1 + 0.2x)`, about a quarter missing.
    B,
    /// Every response observed.
    None,
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl MissingModel {
    pub fn selection_prob(self, x: f64) -> f64 {
        match self {
            MissingModel::A => logistic(1.0 - 2.0 * x),
            MissingModel::B => logistic(1.0 + 0.2 * x),
            MissingModel::None => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MissingModel::A => "A",
            MissingModel::B => "B",
            MissingModel::None => "none",
        }
    }
}

impl fmt::Display for MissingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MissingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(MissingModel::A),
            "b" => Ok(MissingModel::B),
            "none" | "complete" => Ok(MissingModel::None),
            _ => Err(invalid(format!(
                "unknown missingness model `{s}` (expected A, B or none)"
            ))),
        }
    }
}

/// Fully observed draw from the benchmark model with its true curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn gen_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LatentSample {
    let mut out = LatentSample {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let x: f64 = 0.5 + rng.sample::<f64, _>(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let m = regression_fn(x);
        let sigma = variance_fn(x).sqrt();
        out.x.push(x);
        out.y.push(m + sigma * z);
        out.m.push(m);
        out.sigma.push(sigma);
    }
    out
}

/// Draws `Δ_i ~ Bernoulli(p(X_i))`. Masked records keep their latent `y`.
pub fn apply_missingness<R: Rng + ?Sized>(latent: &LatentSample, model: MissingModel, rng: &mut R) -> Result<Sample> {
    let records = latent
        .x
        .iter()
        .zip(&latent.y)
        .map(|(&x, &y)| {
            let observed = match model {
                MissingModel::None => true,
                _ => rng.random::<f64>() < model.selection_prob(x),
            };
            Record {
                x,
                y: Some(y),
                observed,
            }
        })
        .collect();
    Sample::new(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BandwidthMode {
    Fixed(BandwidthSpec),
    Cv(CvConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub model: MissingModel,
    pub reps: usize,
    pub seed: u64,
    pub kernel: Kernel,
    pub eps: EpsilonSpec,
    pub alphas: Vec<f64>,
    pub grid: Grid,
    pub bandwidth: BandwidthMode,
    pub safeguards: Safeguards,
}

impl SimConfig {
    /// Fixed exponents (0.30, 0.25), Epanechnikov, 200-point grid on [0, 1],
    /// 90% and 95% bands.
    pub fn new(n: usize, model: MissingModel, reps: usize, seed: u64) -> Self {
        SimConfig {
            n,
            model,
            reps,
            seed,
            kernel: Kernel::Epanechnikov,
            eps: EpsilonSpec::Zero,
            alphas: vec![0.10, 0.05],
            grid: Grid::default(),
            bandwidth: BandwidthMode::Fixed(BandwidthSpec {
                delta: 0.30,
                beta: 0.25,
            }),
            safeguards: Safeguards::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.n < 20 {
            return Err(invalid(format!("n must be at least 20, got {}", self.n)));
        }
        if self.alphas.is_empty() {
            return Err(invalid("at least one alpha level is required"));
        }
        for &a in &self.alphas {
            gumbel_quantile(a)?;
        }
        self.eps.validate()?;
        self.grid.validate()?;
        self.safeguards.validate()?;
        match &self.bandwidth {
            BandwidthMode::Fixed(bw) => bw.validate(),
            BandwidthMode::Cv(cv) => cv.validate(),
        }
    }

    fn settings(&self) -> BandSettings {
        BandSettings {
            kernel: self.kernel,
            grid: self.grid,
            safeguards: self.safeguards,
            execution: Execution::Sequential,
        }
    }

    fn streams(&self, rep: usize) -> (ChaCha20Rng, ChaCha20Rng) {
        let mut data = ChaCha20Rng::seed_from_u64(self.seed);
        data.set_stream(2 * rep as u64);
        let mut eps = ChaCha20Rng::seed_from_u64(self.seed);
        eps.set_stream(2 * rep as u64 + 1);
        (data, eps)
    }

    /// The sample and perturbations of replication `rep`.
    pub fn draw(&self, rep: usize) -> Result<(LatentSample, Sample, Vec<f64>)> {
        let (mut data_rng, mut eps_rng) = self.streams(rep);
        let latent = gen_sample(self.n, &mut data_rng);
        let sample = apply_missingness(&latent, self.model, &mut data_rng)?;
        let eps = draw_epsilons(&self.eps, self.n, &mut eps_rng);
        Ok((latent, sample, eps))
    }
}

/// Coverage indicator and band area at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandScore {
    pub covered: bool,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub bandwidth: BandwidthSpec,
    pub observed: usize,
    pub u: f64,
    pub v: f64,
    /// One entry per configured alpha.
    pub proposed: Vec<BandScore>,
    pub complete_case: Vec<BandScore>,
}

/// Runs replication `rep` of the study.
pub fn replicate(config: &SimConfig, rep: usize) -> Result<Replication> {
    let (_, sample, eps) = config.draw(rep)?;
    let settings = config.settings();
    let bandwidth = match &config.bandwidth {
        BandwidthMode::Fixed(bw) => *bw,
        BandwidthMode::Cv(cv) => select_bandwidths(&sample, config.kernel, &eps, cv, Execution::Sequential)?,
    };
    let proposed = fit_proposed(&sample, &bandwidth, &eps, &settings)?;
    let complete = fit_complete_case(&sample, bandwidth.delta, &settings)?;
    let score = |fit: &crate::bands::Fit| -> Result<Vec<BandScore>> {
        config
            .alphas
            .iter()
            .map(|&a| {
                let band = fit.band(a)?;
                Ok(BandScore {
                    covered: band.covers(regression_fn),
                    area: band.area(),
                })
            })
            .collect()
    };
    Ok(Replication {
        index: rep,
        bandwidth,
        observed: sample.observed_count(),
        u: proposed.deviation_stat(regression_fn).u,
        v: complete.deviation_stat(regression_fn).u,
        proposed: score(&proposed)?,
        complete_case: score(&complete)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub covered: usize,
    pub coverage: f64,
    pub mean_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub alpha: f64,
    pub proposed: MethodSummary,
    pub complete_case: MethodSummary,
}

impl LevelSummary {
    pub fn method(&self, method: Method) -> &MethodSummary {
        match method {
            Method::Proposed => &self.proposed,
            Method::CompleteCase => &self.complete_case,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    /// Replications that completed; coverage and areas are over these.
    pub completed: usize,
    /// Replications that raised an error.
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub missing_rate: f64,
    pub u_values: Vec<f64>,
    pub v_values: Vec<f64>,
    pub levels: Vec<LevelSummary>,
    pub ks_u: f64,
    pub ks_v: f64,
    pub bandwidths: Vec<BandwidthSpec>,
}

impl SimReport {
    pub fn level(&self, alpha: f64) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| (l.alpha - alpha).abs() < 1e-12)
    }
}

pub fn run_study(config: &SimConfig, exec: Execution) -> Result<SimReport> {
    config.validate()?;
    let outcomes = exec.map(config.reps, |r| replicate(config, r));

    let mut reps = Vec::with_capacity(outcomes.len());
    let mut failure_messages = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => reps.push(rep),
            Err(e) => failure_messages.push(format!("replication {r}: {e}")),
        }
    }
    let completed = reps.len();
    let summarize = |level: usize, pick: fn(&Replication) -> &Vec<BandScore>| {
        let mut covered = 0;
        let mut area = 0.0;
        for rep in &reps {
            let s = pick(rep)[level];
            covered += usize::from(s.covered);
            area += s.area;
        }
        let denom = completed.max(1) as f64;
        MethodSummary {
            covered,
            coverage: covered as f64 / denom,
            mean_area: area / denom,
        }
    };
    let levels = config
        .alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| LevelSummary {
            alpha,
            proposed: summarize(i, |r| &r.proposed),
            complete_case: summarize(i, |r| &r.complete_case),
        })
        .collect();
    let u_values: Vec<f64> = reps.iter().map(|r| r.u).collect();
    let v_values: Vec<f64> = reps.iter().map(|r| r.v).collect();
    let observed: usize = reps.iter().map(|r| r.observed).sum();
    let total = (completed * config.n).max(1);
    Ok(SimReport {
        config: config.clone(),
        completed,
        failures: failure_messages.len(),
        failure_messages,
        missing_rate: 1.0 - observed as f64 / total as f64,
        ks_u: ks_uniform(&u_values),
        ks_v: ks_uniform(&v_values),
        u_values,
        v_values,
        levels,
        bandwidths: reps.iter().map(|r| r.bandwidth).collect(),
    })
}

/// One-sample Kolmogorov–Smirnov distance to Unif[0, 1]. NaN for no data.
pub fn ks_uniform(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / k - u).max(u - i as f64 / k)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub ks_distance: f64,
    /// `(t, F̂(t))` at `t = 0, 0.01, …, 1`.
    pub ecdf: Vec<(f64, f64)>,
}

pub fn uniformity_diagnostic(values: &[f64]) -> Result<Uniformity> {
    if values.is_empty() {
        return Err(invalid("uniformity diagnostic needs at least one value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let ecdf = (0..=100)
        .map(|i| {
            let t = i as f64 / 100.0;
            let below = sorted.partition_point(|&u| u <= t);
            (t, below as f64 / k)
        })
        .collect();
    Ok(Uniformity {
        ks_distance: ks_uniform(values),
        ecdf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn model_functions() {
        assert_abs_diff_eq!(regression_fn(0.0), (PI * std::f64::consts::E).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(regression_fn(0.0), 0.773_942_685_266_708, epsilon = 1e-13);
        assert_abs_diff_eq!(variance_fn(-2.0), 2.0, epsilon = 1e-15);
        assert_eq!(MissingModel::A.selection_prob(0.5), 0.5);
        assert_eq!(MissingModel::B.selection_prob(-5.0), 0.5);
        assert_eq!(MissingModel::None.selection_prob(-50.0), 1.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_sample(50, &mut ChaCha20Rng::seed_from_u64(4));
        let b = gen_sample(50, &mut ChaCha20Rng::seed_from_u64(4));
        assert_eq!(a, b);
        for i in 0..50 {
            assert_eq!(a.m[i], regression_fn(a.x[i]));
        }
    }

    #[test]
    fn marginal_missing_rates() {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let latent = gen_sample(100_000, &mut rng);
        let mut rate = |model| {
            let s = apply_missingness(&latent, model, &mut rng).unwrap();
            1.0 - s.observed_count() as f64 / s.len() as f64
        };
        assert!((rate(MissingModel::A) - 0.50).abs() < 0.02);
        assert!((rate(MissingModel::B) - 0.25).abs() < 0.02);
        assert_eq!(rate(MissingModel::None), 0.0);
    }

    #[test]
    fn masked_records_keep_latent_response() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let latent = gen_sample(200, &mut rng);
        let s = apply_missingness(&latent, MissingModel::A, &mut rng).unwrap();
        for (r, &y) in s.records().iter().zip(&latent.y) {
            assert_eq!(r.y, Some(y));
        }
    }

    #[test]
    fn ks_fixtures() {
        assert_abs_diff_eq!(ks_uniform(&[0.5]), 0.5, epsilon = 1e-15);
        let k = 40;
        let grid: Vec<f64> = (1..=k).map(|i| (i as f64 - 0.5) / k as f64).collect();
        // brute force: sup over a fine mesh of |F̂(t) − t|, including left limits at the atoms
        let mut brute: f64 = 0.0;
        for &u in &grid {
            let below = grid.iter().filter(|&&v| v < u).count() as f64 / k as f64;
            let upto = grid.iter().filter(|&&v| v <= u).count() as f64 / k as f64;
            brute = brute.max((below - u).abs()).max((upto - u).abs());
        }
        assert_abs_diff_eq!(brute, 0.5 / k as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(ks_uniform(&grid), brute, epsilon = 1e-12);
        assert!(ks_uniform(&[]).is_nan());
    }

    #[test]
    fn ecdf_table() {
        let d = uniformity_diagnostic(&[0.1, 0.5, 0.5, 0.9]).unwrap();
        assert_eq!(d.ecdf.len(), 101);
        assert_eq!(d.ecdf[0], (0.0, 0.0));
        assert_eq!(d.ecdf[10].1, 0.25);
        assert_eq!(d.ecdf[50].1, 0.75);
        assert_eq!(d.ecdf[100], (1.0, 1.0));
        assert!(uniformity_diagnostic(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(200, MissingModel::A, 0, 1).validate().is_err());
        assert!(SimConfig::new(10, MissingModel::A, 5, 1).validate().is_err());
        let mut c = SimConfig::new(200, MissingModel::A, 5, 1);
        c.alphas = vec![1.2];
        assert!(c.validate().is_err());
        c.alphas = vec![];
        assert!(c.validate().is_err());
        assert!("c".parse::<MissingModel>().is_err());
        assert_eq!("b".parse::<MissingModel>().unwrap(), MissingModel::B);
    }

    #[test]
    fn replication_streams_are_isolated() {
        let c = SimConfig::new(100, MissingModel::A, 10, 77);
        let mut eps_cfg = c.clone();
        eps_cfg.eps = EpsilonSpec::Uniform { kappa: 1e-3 };
        let (l1, s1, e1) = c.draw(3).unwrap();
        let (l2, s2, e2) = eps_cfg.draw(3).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(s1, s2);
        assert!(e1.iter().all(|&e| e == 0.0));
        assert!(e2.iter().all(|e| e.abs() < 1e-3) && e2.iter().any(|&e| e != 0.0));
        assert_ne!(c.draw(4).unwrap().0, l1);
    }

    #[test]
    fn small_study_is_well_formed_and_deterministic() {
        let mut c = SimConfig::new(200, MissingModel::B, 12, 5);
        c.alphas = vec![0.10, 0.05];
        let a = run_study(&c, Execution::Sequential).unwrap();
        let b = run_study(&c, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        assert_eq!(a.u_values.len(), 12);
        for l in &a.levels {
            for m in [&l.proposed, &l.complete_case] {
                assert!((0.0..=1.0).contains(&m.coverage));
                assert!(m.mean_area > 0.0);
            }
        }
        assert!(a.u_values.iter().chain(&a.v_values).all(|u| (0.0..=1.0).contains(u)));
        let l10 = a.level(0.10).unwrap();
        let l05 = a.level(0.05).unwrap();
        assert!(l05.proposed.covered >= l10.proposed.covered);
        assert!(l05.proposed.mean_area > l10.proposed.mean_area);
    }

    #[test]
    fn cv_mode_respects_constraint() {
        let mut c = SimConfig::new(120, MissingModel::A, 3, 9);
        c.bandwidth = BandwidthMode::Cv(CvConfig::default());
        let r = run_study(&c, Execution::Parallel).unwrap();
        assert_eq!(r.failures, 0);
        for bw in &r.bandwidths {
            assert!(0.2 < bw.beta && bw.beta < bw.delta && bw.delta < 1.0 / 3.0);
        }
    }
}
