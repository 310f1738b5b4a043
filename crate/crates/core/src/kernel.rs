//! Compactly supported smoothing kernels and the constants of the
//! maximal-deviation limit law.
//!
//! Only kernels with bounded support and a square-integrable derivative are
//! offered. The Gaussian kernel (unbounded support) and the uniform kernel
//! (no derivative at the support edge) are rejected by name.
//!
//! The triangular kernel has a kink at 0, so it is only piecewise continuously
//! differentiable; `∫K′²` is still finite and its constants are well defined.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Threshold separating the two centering formulas of `d_n`.
pub const C1_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Epanechnikov,
    Biweight,
    Triangular,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Epanechnikov, Kernel::Biweight, Kernel::Triangular];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Biweight => "biweight",
            Kernel::Triangular => "triangular",
        }
    }

    /// Half-width `A` of the support `[-A, A]`.
    pub fn support(self) -> f64 {
        1.0
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::Biweight => {
                let t = 1.0 - u * u;
                0.9375 * t * t
            }
            Kernel::Triangular => 1.0 - a,
        }
    }

    /// `K′(u)`. For the triangular kernel the value at the kink is 0, the
    /// mean of the one-sided derivatives.
    pub fn deriv(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => -1.5 * u,
            Kernel::Biweight => -3.75 * u * (1.0 - u * u),
            Kernel::Triangular => {
                if u > 0.0 {
                    -1.0
                } else if u < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form `c_K`, `C1`, `C2`.
    pub fn constants(self) -> KernelConstants {
        // (∫K², ∫K′²); every supported kernel vanishes at ±A so C1 = 0.
        let (c_k, int_deriv_sq) = match self {
            Kernel::Epanechnikov => (3.0 / 5.0, 3.0 / 2.0),
            Kernel::Biweight => (5.0 / 7.0, 15.0 / 7.0),
            Kernel::Triangular => (2.0 / 3.0, 2.0),
        };
        let a = self.support();
        let edge = self.eval(a).powi(2) + self.eval(-a).powi(2);
        KernelConstants {
            c_k,
            c1: edge / (2.0 * c_k),
            c2: int_deriv_sq / (2.0 * c_k),
            support: a,
        }
    }

    /// The same constants obtained by adaptive quadrature.
    pub fn constants_by_quadrature(self, tol: f64) -> KernelConstants {
        let a = self.support();
        let c_k = integrate_piecewise(|u| self.eval(u).powi(2), -a, a, tol);
        let int_deriv_sq = integrate_piecewise(|u| self.deriv(u).powi(2), -a, a, tol);
        let edge = self.eval(a).powi(2) + self.eval(-a).powi(2);
        KernelConstants {
            c_k,
            c1: edge / (2.0 * c_k),
            c2: int_deriv_sq / (2.0 * c_k),
            support: a,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            "triangular" | "triangle" => Ok(Kernel::Triangular),
            _ => Err(Error::UnsupportedKernel { name: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `∫K²`
    pub c_k: f64,
    /// `(K²(A) + K²(−A)) / (2 c_K)`
    pub c1: f64,
    /// `∫K′² / (2 c_K)`
    pub c2: f64,
    /// Support half-width `A`.
    pub support: f64,
}

pub fn kernel_constants(kernel: Kernel) -> KernelConstants {
    kernel.constants()
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.2 && delta < 1.0 / 3.0 {
        Ok(())
    } else {
        Err(invalid(format!("bandwidth exponent {delta} must lie in (1/5, 1/3)")))
    }
}

/// Centering sequence `d_n` of the maximal-deviation limit for `h_n = n^{-delta}`.
pub fn d_n(n: usize, delta: f64, consts: &KernelConstants) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("sample size {n} must be at least 2")));
    }
    check_delta(delta)?;
    let log_n = (n as f64).ln();
    let s = (2.0 * delta * log_n).sqrt();
    let correction = if consts.c1 > C1_THRESHOLD {
        (consts.c1 / PI.sqrt()).ln() + 0.5 * (delta * log_n).ln()
    } else {
        0.5 * (consts.c2 / (2.0 * PI * PI)).ln()
    };
    Ok(s + correction / s)
}

/// `√(2 δ log n)`, the scale of the maximal-deviation normalization.
pub fn log_scale(n: usize, delta: f64) -> f64 {
    (2.0 * delta * (n as f64).ln()).sqrt()
}

/// Solution `x` of `exp(−2 e^{−x}) = 1 − alpha`.
pub fn gumbel_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha {alpha} must lie in (0, 1)")));
    }
    // -ln(1 - alpha) keeps precision for small alpha.
    Ok(std::f64::consts::LN_2 - (-(-alpha).ln_1p()).ln())
}

/// Limit law `exp(−2 e^{−y})`.
pub fn gumbel_cdf(y: f64) -> f64 {
    (-2.0 * (-y).exp()).exp()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Splits at 0 so the triangular kink never sits inside a Simpson panel.
fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    integrate(&f, a, 0.0, 0.5 * tol) + integrate(&f, 0.0, b, 0.5 * tol)
}
