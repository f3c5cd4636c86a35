//! Backward-Euler convolution quadrature weights and the generating symbols
//! of the fractional Crank-Nicolson scheme.
//!
//! The weights `b_j` are the coefficients of `(1 - xi)^alpha`; the scheme's
//! error analysis runs through the symbols `beta_tau`, `mu` and `mu0`
//! evaluated at `xi = e^{-z tau}` on a truncated sectorial contour. The
//! `certify_*` operations sweep that contour and report empirical sup/inf of
//! the normalized ratios behind the scalar symbol estimates, so that tests can
//! assert the ratios stay bounded and stable under tau refinement.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CqError {
    #[error("alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("fractional-power base vanished at xi = {0}")]
    DegenerateBase(Complex64),
    #[error("theta = {0} outside the admissible band (pi/2, pi/2 + 0.1]")]
    ThetaOutOfRange(f64),
    #[error("kernel evaluation degenerate: w^alpha - lambda vanished at w = {0}")]
    DegenerateKernel(Complex64),
}

/// Weights `b_0..b_{n_max}` of the backward-Euler CQ generating function
/// `(1 - xi)^alpha` for a fixed order `alpha`.
#[derive(Debug, Clone)]
pub struct CqWeights {
    pub alpha: f64,
    pub n_max: usize,
    pub weights: Vec<f64>,
}

/// Computes the BE-CQ weights through the stable recurrence
/// `b_0 = 1`, `b_j = b_{j-1} (j - 1 - alpha) / j`.
///
/// The recurrence is algebraically identical to the Gamma-ratio closed form
/// `b_j = (-1)^j Gamma(alpha+1) / (Gamma(j+1) Gamma(alpha-j+1))` but free of
/// the overflow and cancellation that form runs into for large `j`.
pub fn be_cq_weights(alpha: f64, n_max: usize) -> Result<CqWeights, CqError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CqError::AlphaOutOfRange(alpha));
    }
    let mut weights = Vec::with_capacity(n_max + 1);
    weights.push(1.0);
    for j in 1..=n_max {
        let j_f = j as f64;
        weights.push(weights[j - 1] * (j_f - 1.0 - alpha) / j_f);
    }
    Ok(CqWeights { alpha, n_max, weights })
}

/// `1 - e^{-w}` without the subtractive cancellation that hits the literal
/// form once `|w|` drops below ~1e-5. Splitting the real part as
/// `-expm1(-a) + e^{-a} 2 sin^2(b/2)` keeps every term fully accurate.
fn one_minus_exp_neg(w: Complex64) -> Complex64 {
    let (a, b) = (w.re, w.im);
    let ea = (-a).exp();
    let re = -libm::expm1(-a) + ea * 2.0 * (0.5 * b).sin().powi(2);
    Complex64::new(re, ea * b.sin())
}

fn power_base(xi: Complex64, alpha: f64) -> Result<Complex64, CqError> {
    let base = Complex64::new(1.0 - 0.5 * alpha, 0.0) + 0.5 * alpha * xi;
    if base.norm() < 1e-14 {
        Err(CqError::DegenerateBase(xi))
    } else {
        Ok(base)
    }
}

/// Symbol `beta_tau(xi) = (1 - xi) / (tau (1 - alpha/2 + (alpha/2) xi)^{1/alpha})`,
/// principal branch. At `xi = e^{-z tau}` it approximates `z` to second order.
pub fn beta_tau(xi: Complex64, alpha: f64, tau: f64) -> Result<Complex64, CqError> {
    let base = power_base(xi, alpha)?;
    Ok((Complex64::new(1.0, 0.0) - xi) / (tau * base.powf(1.0 / alpha)))
}

/// Symbol `mu(xi) = (3 xi - xi^2) / (2 (1 - alpha/2 + (alpha/2) xi)^{1/alpha})`
/// of the two-step correction; `mu(1) = 1`.
pub fn mu(xi: Complex64, alpha: f64) -> Result<Complex64, CqError> {
    let base = power_base(xi, alpha)?;
    Ok(xi * (Complex64::new(3.0, 0.0) - xi) / (2.0 * base.powf(1.0 / alpha)))
}

/// Symbol `mu0(xi) = (4 xi - 3 xi^2 + xi^3) / (2 (1 - alpha/2 + (alpha/2) xi)^{1/alpha})`
/// of the three-step correction; `mu0(1) = 1`.
pub fn mu0(xi: Complex64, alpha: f64) -> Result<Complex64, CqError> {
    let base = power_base(xi, alpha)?;
    let num = xi * (Complex64::new(4.0, 0.0) - 3.0 * xi + xi * xi);
    Ok(num / (2.0 * base.powf(1.0 / alpha)))
}

/// One symbol evaluation at a contour point `z`: `xi = e^{-z tau}` and the
/// three symbols at that `xi`.
#[derive(Debug, Clone, Copy)]
pub struct SymbolSample {
    pub z: Complex64,
    pub tau: f64,
    pub beta: Complex64,
    pub mu: Complex64,
    pub mu0: Complex64,
}

impl SymbolSample {
    /// Evaluates the symbols at `xi = e^{-z tau}`, forming `1 - xi` through
    /// [`one_minus_exp_neg`] so that `beta` stays accurate even where
    /// `|z| tau` is tiny and the literal subtraction would cancel.
    pub fn at(z: Complex64, alpha: f64, tau: f64) -> Result<Self, CqError> {
        let xi = (-z * tau).exp();
        let base = power_base(xi, alpha)?;
        Ok(SymbolSample {
            z,
            tau,
            beta: one_minus_exp_neg(z * tau) / (tau * base.powf(1.0 / alpha)),
            mu: mu(xi, alpha)?,
            mu0: mu0(xi, alpha)?,
        })
    }
}

fn check_theta(theta: f64) -> Result<(), CqError> {
    let lo = std::f64::consts::FRAC_PI_2;
    if theta > lo && theta <= lo + 0.1 {
        Ok(())
    } else {
        Err(CqError::ThetaOutOfRange(theta))
    }
}

/// Sample points on the truncated sectorial contour: the circular arc
/// `|z| = delta, |arg z| <= theta` together with the two rays
/// `z = r e^{+-i theta}` for `r` in `[delta, pi/(tau sin theta)]`.
///
/// `n_samples` points are placed on each of the three pieces; the rays are
/// sampled log-uniformly since `r` spans several orders of magnitude.
pub fn contour_samples(theta: f64, delta: f64, tau: f64, n_samples: usize) -> Vec<Complex64> {
    let n = n_samples.max(2);
    let mut pts = Vec::with_capacity(3 * n);
    for k in 0..n {
        let phi = -theta + 2.0 * theta * (k as f64) / ((n - 1) as f64);
        pts.push(Complex64::from_polar(delta, phi));
    }
    let r_max = std::f64::consts::PI / (tau * theta.sin());
    let (ln_lo, ln_hi) = (delta.ln(), r_max.ln());
    for k in 0..n {
        let r = (ln_lo + (ln_hi - ln_lo) * (k as f64) / ((n - 1) as f64)).exp();
        pts.push(Complex64::from_polar(r, theta));
        pts.push(Complex64::from_polar(r, -theta));
    }
    pts
}

/// Empirical sup/inf of the normalized ratios behind the scalar symbol
/// estimates, over one contour sweep. With `g(z) = (1 - alpha/2 +
/// (alpha/2) e^{-z tau})^{1/alpha}` the certified quantities are:
///
/// - `g_abs_min <= |g| <= g_abs_max` (two-sided boundedness of `g`),
/// - `g_linear_ratio`: sup of `|g - (1 - z tau / 2)| / (tau^2 |z|^2)`,
/// - `g_power_ratio`: sup of
///   `|(1 - e^{-z tau})^alpha - tau^alpha z^alpha (1 - alpha/2 + (alpha/2) e^{-z tau})| / (tau^{2+alpha} |z|^{2+alpha})`,
/// - `mu_ratio`, `mu0_ratio`: sup of `|mu - 1| / (tau^2 |z|^2)` (same for `mu0`),
/// - `beta_diff_ratio`: sup of `|beta_tau - z| / (tau^2 |z|^3)`,
/// - `beta_pow_ratio`: sup of `|beta_tau^alpha - z^alpha| / (tau^2 |z|^{2+alpha})`,
/// - `beta_abs_min <= |beta_tau| / |z| <= beta_abs_max`.
///
/// The estimates themselves are analytic statements about the existence of
/// constants; a sweep can only show the empirical ratios are finite and stay
/// put under tau refinement, which is what the callers assert.
#[derive(Debug, Clone)]
pub struct SymbolBoundsReport {
    pub alpha: f64,
    pub tau: f64,
    pub theta: f64,
    pub delta: f64,
    pub n_samples: usize,
    pub g_abs_min: f64,
    pub g_abs_max: f64,
    pub g_linear_ratio: f64,
    pub g_power_ratio: f64,
    pub mu_ratio: f64,
    pub mu0_ratio: f64,
    pub beta_diff_ratio: f64,
    pub beta_pow_ratio: f64,
    pub beta_abs_min: f64,
    pub beta_abs_max: f64,
}

/// Sweeps the contour and computes [`SymbolBoundsReport`].
pub fn certify_symbol_bounds(
    alpha: f64,
    tau: f64,
    theta: f64,
    delta: f64,
    n_samples: usize,
) -> Result<SymbolBoundsReport, CqError> {
    check_theta(theta)?;
    let mut report = SymbolBoundsReport {
        alpha,
        tau,
        theta,
        delta,
        n_samples,
        g_abs_min: f64::INFINITY,
        g_abs_max: 0.0,
        g_linear_ratio: 0.0,
        g_power_ratio: 0.0,
        mu_ratio: 0.0,
        mu0_ratio: 0.0,
        beta_diff_ratio: 0.0,
        beta_pow_ratio: 0.0,
        beta_abs_min: f64::INFINITY,
        beta_abs_max: 0.0,
    };
    let one = Complex64::new(1.0, 0.0);
    for z in contour_samples(theta, delta, tau, n_samples) {
        let xi = (-z * tau).exp();
        let base = power_base(xi, alpha)?;
        let g = base.powf(1.0 / alpha);
        let abs_z = z.norm();
        let t2z2 = tau * tau * abs_z * abs_z;

        report.g_abs_min = report.g_abs_min.min(g.norm());
        report.g_abs_max = report.g_abs_max.max(g.norm());
        report.g_linear_ratio = report
            .g_linear_ratio
            .max((g - (one - 0.5 * z * tau)).norm() / t2z2);
        let lhs = one_minus_exp_neg(z * tau).powf(alpha) - tau.powf(alpha) * z.powf(alpha) * base;
        report.g_power_ratio = report
            .g_power_ratio
            .max(lhs.norm() / (tau.powf(2.0 + alpha) * abs_z.powf(2.0 + alpha)));

        let sample = SymbolSample::at(z, alpha, tau)?;
        report.mu_ratio = report.mu_ratio.max((sample.mu - one).norm() / t2z2);
        report.mu0_ratio = report.mu0_ratio.max((sample.mu0 - one).norm() / t2z2);
        report.beta_diff_ratio = report
            .beta_diff_ratio
            .max((sample.beta - z).norm() / (t2z2 * abs_z));
        report.beta_pow_ratio = report
            .beta_pow_ratio
            .max((sample.beta.powf(alpha) - z.powf(alpha)).norm() / (t2z2 * abs_z.powf(alpha)));
        report.beta_abs_min = report.beta_abs_min.min(sample.beta.norm() / abs_z);
        report.beta_abs_max = report.beta_abs_max.max(sample.beta.norm() / abs_z);
    }
    Ok(report)
}

/// Result of the sector-mapping sweep: the largest `|arg(beta_tau^alpha)|`
/// seen over the contour and the closed right half-plane (minus the origin),
/// to be compared against the target half-angle `phi`.
#[derive(Debug, Clone)]
pub struct SectorMappingReport {
    pub alpha: f64,
    pub tau: f64,
    pub phi: f64,
    pub max_abs_arg: f64,
    pub n_samples: usize,
}

impl SectorMappingReport {
    pub fn within_sector(&self) -> bool {
        self.max_abs_arg <= self.phi
    }
}

/// Sweeps the contour plus a log-polar grid over the closed right half-plane
/// and records the maximum of `|arg(beta_tau(e^{-z tau})^alpha)| = alpha |arg
/// beta_tau|`.
pub fn certify_sector_mapping(
    alpha: f64,
    tau: f64,
    theta: f64,
    delta: f64,
    phi: f64,
    n_samples: usize,
) -> Result<SectorMappingReport, CqError> {
    check_theta(theta)?;
    let mut pts = contour_samples(theta, delta, tau, n_samples);
    // Right half-plane grid: radii up to the pi/tau resolution limit of the
    // symbol (e^{-z tau} is 2 pi i / tau periodic), angles up to +-pi/2
    // inclusive so the imaginary axis is covered.
    let n = n_samples.max(2);
    let r_max = std::f64::consts::PI / tau;
    let r_min = delta * 1e-2;
    let n_angle = 41;
    for k in 0..n {
        let r = (r_min.ln() + (r_max / r_min).ln() * (k as f64) / ((n - 1) as f64)).exp();
        for a in 0..n_angle {
            let psi = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * (a as f64) / ((n_angle - 1) as f64);
            pts.push(Complex64::from_polar(r, psi));
        }
    }
    let mut max_abs_arg: f64 = 0.0;
    for z in pts {
        let beta = SymbolSample::at(z, alpha, tau)?.beta;
        // Principal branch: arg(beta^alpha) = alpha arg(beta) since
        // alpha |arg beta| < pi.
        max_abs_arg = max_abs_arg.max(alpha * beta.arg().abs());
    }
    Ok(SectorMappingReport {
        alpha,
        tau,
        phi,
        max_abs_arg,
        n_samples,
    })
}

/// Scalar kernel `K_lambda(w) = -w^{-1} (w^alpha - lambda)^{-1}`, the
/// eigenvalue surrogate of the resolvent kernel with `lambda <= 0` standing in
/// for an eigenvalue of the discrete Laplacian.
fn kernel(w: Complex64, lambda: f64, alpha: f64) -> Result<Complex64, CqError> {
    let denom = w.powf(alpha) - lambda;
    if denom.norm() < 1e-300 || w.norm() < 1e-300 {
        return Err(CqError::DegenerateKernel(w));
    }
    Ok(-1.0 / (w * denom))
}

/// Error `|mu(e^{-z tau}) K_lambda(beta_tau(e^{-z tau})) - K_lambda(z)|` of
/// the discrete kernel against the continuous one at a single contour point.
/// Callers normalize by `tau^2 |z|^{1-alpha}` and assert boundedness of the
/// normalized value over `(z, lambda)` grids.
pub fn scalar_kernel_error(
    z: Complex64,
    lambda: f64,
    alpha: f64,
    tau: f64,
) -> Result<f64, CqError> {
    let sample = SymbolSample::at(z, alpha, tau)?;
    let discrete = sample.mu * kernel(sample.beta, lambda, alpha)?;
    let continuous = kernel(z, lambda, alpha)?;
    Ok((discrete - continuous).norm())
}
