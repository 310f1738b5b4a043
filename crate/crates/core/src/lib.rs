//! Uniform confidence bands for a regression function `m(x) = E[Y | X = x]`
//! when responses are missing at random.
//!
//! The central estimator reweights each observed response by an inverse
//! kernel estimate of its selection probability,
//!
//! ```text
//! m̂(x) = Σ [Δ_i Y_i / p̂(X_i) + ε_i] K((x − X_i)/h) / Σ K((x − X_i)/h),
//! p̂(x) = Σ (Δ_i + ε_i) K((x − X_i)/λ) / Σ K((x − X_i)/λ),
//! ```
//!
//! and its normalized maximal deviation over an interval has the extreme-value
//! limit `exp(−2 e^{−y})`, which gives the band
//!
//! ```text
//! m̂(x) ± √(c_K σ̂²(x) / (n h f̂(x))) · (x^(α)/√(2δ log n) + d_n).
//! ```
//!
//! Modules:
//! - [`kernel`]: kernels, `c_K`, `C1`, `C2`, `d_n` and the limit law.
//! - [`estimators`]: density, regression, selection-probability and variance estimators.
//! - [`bandwidth`]: leave-one-out selection of the bandwidth exponents.
//! - [`bands`]: band construction, deviation statistics and the sup-norm test.
//! - [`sim`]: Monte Carlo coverage study.
//! - [`io`]: file formats.
//!
//! With the default `parallel` feature, grid evaluation, bandwidth candidates and
//! replications run on rayon. Results are bit-identical to the sequential path.
//!
//! ```
//! use marband::{build_band, BandSettings, BandwidthSpec, Sample};
//!
//! let xs: Vec<f64> = (0..400).map(|i| -0.5 + 2.0 * i as f64 / 399.0).collect();
//! let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
//! let sample = Sample::complete(&xs, &ys)?;
//! let bw = BandwidthSpec::new(0.30, 0.25)?;
//! let band = build_band(&sample, &bw, &vec![0.0; 400], 0.05, &BandSettings::default())?;
//! assert_eq!(band.rows.len(), 200);
//! # Ok::<(), marband::Error>(())
//! ```

pub mod bands;
pub mod bandwidth;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod io;
pub mod kernel;
pub mod sim;

pub use bands::{
    build_band, complete_case_stat, deviation_stat, fit_complete_case, fit_proposed, max_deviation_test, BandResult,
    BandSettings, DeviationStat, Fit, Grid, Method, PointFlags, TestOutcome,
};
pub use bandwidth::{select_bandwidths, select_beta, select_delta, CvConfig};
pub use error::{Error, Result};
pub use estimators::{
    complete_case_regress, draw_epsilons, estimate_selection_prob, ipw_regress, ipw_variance, kde, nw_regress,
    seeded_epsilons, BandwidthSpec, EpsilonSpec, Record, Safeguards, Sample,
};
pub use exec::Execution;
pub use kernel::{d_n, gumbel_cdf, gumbel_quantile, kernel_constants, Kernel, KernelConstants};
pub use sim::{run_study, uniformity_diagnostic, BandwidthMode, MissingModel, SimConfig, SimReport};
