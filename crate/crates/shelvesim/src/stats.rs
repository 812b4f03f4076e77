//! Photon-counting statistics: Poisson models, regularized incomplete gamma
//! functions, and the depumping-weighted dark-state count distribution.
//!
//! Everything here is a pure function of its inputs; all rates are in
//! counts/second and all times in seconds.

use thiserror::Error;

/// Errors from the statistics layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("series/continued-fraction evaluation did not converge")]
    NoConvergence,
    #[error("invalid detection parameters: {0}")]
    InvalidParams(&'static str),
}

/// All physical and experimental quantities describing one detection
/// configuration.
///
/// `decay_time` may be `f64::INFINITY` to model a system without depumping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    /// Bright-state scattering rate, counts/s.
    pub rate_bright: f64,
    /// Background scattering rate, counts/s.
    pub rate_background: f64,
    /// Depumping 1/e time, s.
    pub decay_time: f64,
    /// Detection window length, s.
    pub detect_time: f64,
    /// Photon threshold: counts strictly above it are assigned bright.
    pub threshold: u32,
    /// Spin-flip infidelity in [0, 1].
    pub spinflip_error: f64,
    /// Sub-bin length for time-resolved detection, s.
    pub subbin_time: f64,
    /// Number of sub-bins per detection window.
    pub subbin_count: u32,
}

impl DetectionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rate_bright: f64,
        rate_background: f64,
        decay_time: f64,
        detect_time: f64,
        threshold: u32,
        spinflip_error: f64,
        subbin_time: f64,
        subbin_count: u32,
    ) -> Result<Self, StatsError> {
        let p = Self {
            rate_bright,
            rate_background,
            decay_time,
            detect_time,
            threshold,
            spinflip_error,
            subbin_time,
            subbin_count,
        };
        p.validate()?;
        Ok(p)
    }

    /// Single-window parameters: one sub-bin spanning the whole detection time.
    pub fn integrated(
        rate_bright: f64,
        rate_background: f64,
        decay_time: f64,
        detect_time: f64,
        threshold: u32,
        spinflip_error: f64,
    ) -> Result<Self, StatsError> {
        Self::new(
            rate_bright,
            rate_background,
            decay_time,
            detect_time,
            threshold,
            spinflip_error,
            detect_time,
            1,
        )
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if !self.rate_bright.is_finite() || !self.rate_background.is_finite() {
            return Err(StatsError::InvalidParams("scattering rates must be finite"));
        }
        if self.rate_background < 0.0 {
            return Err(StatsError::InvalidParams("rate_background must be >= 0"));
        }
        if self.rate_bright <= self.rate_background {
            return Err(StatsError::InvalidParams(
                "rate_bright must exceed rate_background",
            ));
        }
        if self.decay_time.is_nan() || self.decay_time <= 0.0 {
            return Err(StatsError::InvalidParams("decay_time must be > 0"));
        }
        if !self.detect_time.is_finite() || self.detect_time <= 0.0 {
            return Err(StatsError::InvalidParams("detect_time must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.spinflip_error) {
            return Err(StatsError::InvalidParams(
                "spinflip_error must lie in [0, 1]",
            ));
        }
        if !self.subbin_time.is_finite() || self.subbin_time <= 0.0 {
            return Err(StatsError::InvalidParams("subbin_time must be > 0"));
        }
        if self.subbin_count == 0 {
            return Err(StatsError::InvalidParams("subbin_count must be >= 1"));
        }
        Ok(())
    }

    /// Check the sub-bin grid tiles the detection window exactly.
    ///
    /// Required whenever a time-resolved (Bayesian) scheme is run.
    pub fn validate_subbins(&self) -> Result<(), StatsError> {
        let product = self.subbin_count as f64 * self.subbin_time;
        if (product - self.detect_time).abs() > 1e-9 * self.detect_time {
            return Err(StatsError::InvalidParams(
                "subbin_count * subbin_time must equal detect_time",
            ));
        }
        Ok(())
    }

    pub fn with_detect_time(mut self, detect_time: f64) -> Self {
        self.detect_time = detect_time;
        self.validate().expect("invalid detect_time");
        self
    }

    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_decay_time(mut self, decay_time: f64) -> Self {
        self.decay_time = decay_time;
        self.validate().expect("invalid decay_time");
        self
    }

    pub fn with_spinflip_error(mut self, spinflip_error: f64) -> Self {
        self.spinflip_error = spinflip_error;
        self.validate().expect("invalid spinflip_error");
        self
    }

    /// Retile the detection window into `count` sub-bins of length `time`.
    pub fn with_subbins(mut self, time: f64, count: u32) -> Self {
        self.subbin_time = time;
        self.subbin_count = count;
        self.detect_time = time * count as f64;
        self.validate().expect("invalid sub-bin grid");
        self
    }
}

/// Atomic constants entering the depumping-rate estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Natural linewidth of the cycling transition, rad/s.
    pub linewidth: f64,
    /// Ground-state hyperfine splitting, rad/s.
    pub hyperfine_splitting: f64,
    /// Saturation parameter s0 = I / I_sat, dimensionless.
    pub saturation: f64,
}

impl PhysicalConstants {
    pub fn new(
        linewidth: f64,
        hyperfine_splitting: f64,
        saturation: f64,
    ) -> Result<Self, StatsError> {
        if [linewidth, hyperfine_splitting, saturation]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(StatsError::InvalidParams(
                "physical constants must be strictly positive",
            ));
        }
        Ok(Self {
            linewidth,
            hyperfine_splitting,
            saturation,
        })
    }
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

// Lanczos approximation, g = 7, 9 terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection keeps the Lanczos argument away from zero.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const INCGAMMA_MAX_ITER: usize = 512;

/// Both regularized incomplete gamma functions, `(P(a, x), Q(a, x))`.
///
/// Series expansion for x < a + 1, Lentz continued fraction otherwise; the
/// prefactor is carried in log space.
pub(crate) fn regularized_gamma_pair(a: f64, x: f64) -> Result<(f64, f64), StatsError> {
    if a <= 0.0 || !a.is_finite() {
        return Err(StatsError::Domain("gamma shape must be positive"));
    }
    if x < 0.0 || x.is_nan() {
        return Err(StatsError::Domain("gamma argument must be >= 0"));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    let ln_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let p = incgamma_series(a, x, ln_prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = incgamma_cf(a, x, ln_prefactor)?;
        Ok((1.0 - q, q))
    }
}

// P(a, x) = prefactor * sum_{n>=0} x^n / (a (a+1) ... (a+n))
fn incgamma_series(a: f64, x: f64, ln_prefactor: f64) -> Result<f64, StatsError> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..INCGAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok((ln_prefactor + sum.ln()).exp());
        }
    }
    Err(StatsError::NoConvergence)
}

// Q(a, x) via the modified Lentz algorithm.
fn incgamma_cf(a: f64, x: f64, ln_prefactor: f64) -> Result<f64, StatsError> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / if b.abs() < TINY { TINY } else { b };
    let mut h = d;
    for i in 1..=INCGAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok((ln_prefactor + h.ln()).exp());
        }
    }
    Err(StatsError::NoConvergence)
}

/// Which regularized incomplete gamma function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaKind {
    /// Gamma(sigma+1, x) / sigma!
    Upper,
    /// gamma(sigma+1, x) / sigma!
    Lower,
}

/// Regularized incomplete gamma function with the Poisson-threshold shape
/// convention: shape parameter sigma + 1, normalized by sigma!.
pub fn regularized_gamma(sigma: u32, x: f64, kind: GammaKind) -> Result<f64, StatsError> {
    let (p, q) = regularized_gamma_pair(sigma as f64 + 1.0, x)?;
    Ok(match kind {
        GammaKind::Upper => q,
        GammaKind::Lower => p,
    })
}

// ---------------------------------------------------------------------------
// Poisson statistics
// ---------------------------------------------------------------------------

// Exact factorials up to 20! fit in f64 without rounding.
const FACTORIALS: [f64; 21] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
    355687428096000.0,
    6402373705728000.0,
    121645100408832000.0,
    2432902008176640000.0,
];

/// Probability of counting exactly `k` photons given mean `mean`.
///
/// Direct evaluation for k <= 20, log-space otherwise.
pub fn poisson_pmf(k: u32, mean: f64) -> Result<f64, StatsError> {
    if mean < 0.0 || mean.is_nan() {
        return Err(StatsError::Domain("poisson mean must be >= 0"));
    }
    Ok(poisson_pmf_raw(k, mean))
}

pub(crate) fn poisson_pmf_raw(k: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k <= 20 {
        (-mean).exp() * mean.powi(k as i32) / FACTORIALS[k as usize]
    } else {
        poisson_ln_pmf_raw(k, mean).exp()
    }
}

pub(crate) fn poisson_ln_pmf_raw(k: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)
}

/// Probability of counting at most `sigma` photons, P(xi <= sigma | mean).
///
/// Evaluated as the regularized upper incomplete gamma Q(sigma + 1, mean).
pub fn poisson_cdf(sigma: u32, mean: f64) -> Result<f64, StatsError> {
    if mean < 0.0 || mean.is_nan() {
        return Err(StatsError::Domain("poisson mean must be >= 0"));
    }
    Ok(poisson_cdf_raw(sigma, mean))
}

pub(crate) fn poisson_cdf_raw(sigma: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return 1.0;
    }
    let (_, q) =
        regularized_gamma_pair(sigma as f64 + 1.0, mean).expect("valid poisson cdf arguments");
    q
}

// ---------------------------------------------------------------------------
// Mean fluorescence
// ---------------------------------------------------------------------------

/// Mean bright-state photon number over the detection window.
pub fn mean_bright(p: &DetectionParams) -> f64 {
    p.rate_bright * p.detect_time
}

/// Mean background photon number over the detection window.
pub fn mean_background(p: &DetectionParams) -> f64 {
    p.rate_background * p.detect_time
}

/// Mean dark-state photon number including depumping.
pub fn mean_dark(p: &DetectionParams) -> f64 {
    let tau = p.detect_time;
    let x = tau / p.decay_time;
    // T * (1 - e^(-tau/T)) written as tau * (1 - e^(-x)) / x; series for
    // small x keeps the T -> infinity limit exact.
    let factor = if x < 1e-8 {
        tau * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        tau * (-(-x).exp_m1()) / x
    };
    p.rate_bright * tau - (p.rate_bright - p.rate_background) * factor
}

/// Mean photon number when depumping happens at time `t` inside the window.
pub(crate) fn mean_depumped_at(p: &DetectionParams, t: f64) -> f64 {
    p.rate_background * t + p.rate_bright * (p.detect_time - t)
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature
// ---------------------------------------------------------------------------

// 15-point Kronrod nodes/weights on [-1, 1] with the embedded 7-point Gauss
// rule. Nodes are symmetric; only the non-negative half is tabulated.
const GK_NODES: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut res_k = 0.0;
    let mut res_g = 0.0;
    for (i, &x) in GK_NODES.iter().enumerate() {
        let (fa, fb) = if x == 0.0 {
            let v = f(mid);
            (v, 0.0)
        } else {
            (f(mid - half * x), f(mid + half * x))
        };
        let sum = if x == 0.0 { fa } else { fa + fb };
        res_k += GK_WEIGHTS_K[i] * sum;
        // Odd Kronrod indices coincide with the embedded Gauss nodes.
        if i % 2 == 1 {
            res_g += GK_WEIGHTS_G[i / 2] * sum;
        }
    }
    res_k *= half;
    res_g *= half;
    (res_k, (res_k - res_g).abs())
}

/// Adaptive quadrature of `f` on [a, b] to absolute tolerance `tol`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0u32)];
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (value, err) = gk15(&f, lo, hi);
        if err <= t || depth >= 52 {
            total += value;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    total
}

const DARK_PMF_QUAD_TOL: f64 = 1e-10;

/// Contribution to p(xi_D = k) from shots that depump inside the window:
/// the exponentially weighted integral of Poisson(k | mean at depump time t).
pub(crate) fn depumped_pmf_integral(k: u32, p: &DetectionParams) -> f64 {
    let t_decay = p.decay_time;
    if !t_decay.is_finite() {
        return 0.0;
    }
    let tau = p.detect_time;
    // All exponential weight sits below ~45 decay times; clipping the domain
    // keeps the quadrature from missing a narrow spike when T << tau.
    let upper = tau.min(45.0 * t_decay);
    let f = |t: f64| (-t / t_decay).exp() / t_decay * poisson_pmf_raw(k, mean_depumped_at(p, t));
    integrate(f, 0.0, upper, DARK_PMF_QUAD_TOL)
}

/// Probability of counting exactly `k` photons from a dark-state shot,
/// including depumping during the window.
pub fn dark_pmf(k: u32, p: &DetectionParams) -> f64 {
    let survive = if p.decay_time.is_finite() {
        (-p.detect_time / p.decay_time).exp()
    } else {
        1.0
    };
    depumped_pmf_integral(k, p) + survive * poisson_pmf_raw(k, mean_background(p))
}

// ---------------------------------------------------------------------------
// Photon-count distributions
// ---------------------------------------------------------------------------

/// Truncation bound holding all but < 1e-12 of the Poisson mass.
pub fn support_bound(mean: f64) -> u32 {
    (mean + 10.0 * mean.sqrt()).ceil() as u32 + 20
}

/// A discrete probability distribution over photon counts 0..=support_max.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pmf: Vec<f64>,
}

impl PhotonDistribution {
    const SUM_TOL: f64 = 1e-9;

    /// Wrap an explicit pmf, validating normalization.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self, StatsError> {
        if pmf.is_empty() {
            return Err(StatsError::Domain("pmf must be non-empty"));
        }
        if pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(StatsError::Domain("pmf entries must lie in [0, 1]"));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(StatsError::Domain("pmf must sum to 1 within 1e-9"));
        }
        Ok(Self { pmf })
    }

    /// Poisson distribution truncated at the support bound of `mean`.
    pub fn poisson(mean: f64) -> Result<Self, StatsError> {
        if mean < 0.0 || !mean.is_finite() {
            return Err(StatsError::Domain("poisson mean must be >= 0 and finite"));
        }
        let kmax = support_bound(mean);
        let pmf = (0..=kmax).map(|k| poisson_pmf_raw(k, mean)).collect();
        Self::from_pmf(pmf)
    }

    /// Dark-state distribution with depumping, truncated at the bright-state
    /// support bound (dark counts never exceed bright-scale ones).
    pub fn dark(p: &DetectionParams) -> Result<Self, StatsError> {
        p.validate()?;
        let kmax = support_bound(mean_bright(p) + mean_background(p));
        let pmf = (0..=kmax).map(|k| dark_pmf(k, p)).collect();
        Self::from_pmf(pmf)
    }

    /// Normalized histogram from raw counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self, StatsError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(StatsError::Domain("histogram has no events"));
        }
        let pmf = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::from_pmf(pmf)
    }

    pub fn pmf(&self, k: u32) -> f64 {
        self.pmf.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn support_max(&self) -> u32 {
        (self.pmf.len() - 1) as u32
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| k as f64 * p)
            .sum()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.pmf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_params() -> DetectionParams {
        DetectionParams::new(146.3e3, 2.9e3, 61e-6, 10e-6, 0, 0.02, 2e-6, 5).unwrap()
    }

    #[test]
    fn poisson_pmf_empty_count_certainty() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn poisson_pmf_paper_bright_mean() {
        // e^-1.463, the zero-count probability at the reference bright mean.
        assert_relative_eq!(
            poisson_pmf(0, 1.463).unwrap(),
            0.2315406099245259,
            max_relative = 1e-13
        );
    }

    #[test]
    fn poisson_pmf_normalizes() {
        let sum: f64 = (0..=support_bound(5.0))
            .map(|k| poisson_pmf(k, 5.0).unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_pmf_rejects_negative_mean() {
        assert!(matches!(poisson_pmf(0, -1.0), Err(StatsError::Domain(_))));
        assert!(matches!(poisson_cdf(0, -1.0), Err(StatsError::Domain(_))));
    }

    #[test]
    fn poisson_pmf_log_space_consistent_at_switchover() {
        // Direct and log-space branches must agree where they meet.
        for mean in [0.5f64, 3.0, 17.0, 40.0] {
            let direct = (-mean).exp() * mean.powi(20) / FACTORIALS[20];
            assert_relative_eq!(poisson_pmf(20, mean).unwrap(), direct, max_relative = 1e-12);
            assert_relative_eq!(
                poisson_pmf(21, mean).unwrap(),
                direct * mean / 21.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn poisson_cdf_matches_summation_oracle() {
        // Independent route: direct partial sums of the pmf.
        for &(sigma, mean) in &[
            (0u32, 1.463f64),
            (1, 2.49),
            (5, 3.3),
            (12, 20.0),
            (50, 30.0),
            (3, 0.029),
        ] {
            let oracle: f64 = (0..=sigma).map(|k| poisson_pmf_raw(k, mean)).sum();
            assert_relative_eq!(
                poisson_cdf(sigma, mean).unwrap(),
                oracle,
                max_relative = 1e-12,
                epsilon = 1e-300
            );
        }
    }

    #[test]
    fn poisson_cdf_reference_values() {
        // e^-1.463 and e^-2.49 * (1 + 2.49), frozen from the summation oracle.
        assert_relative_eq!(
            poisson_cdf(0, 1.463).unwrap(),
            0.2315406099245259,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            poisson_cdf(1, 2.49).unwrap(),
            0.2893557833473527,
            max_relative = 1e-13
        );
        // Full support.
        assert_eq!(poisson_cdf(400, 17.0).unwrap(), 1.0);
    }

    #[test]
    fn regularized_gamma_trivial_and_partition() {
        assert_eq!(regularized_gamma(0, 0.0, GammaKind::Upper).unwrap(), 1.0);
        assert_relative_eq!(
            regularized_gamma(0, 1.463, GammaKind::Upper).unwrap(),
            poisson_cdf(0, 1.463).unwrap(),
            max_relative = 1e-14
        );
        for &(sigma, x) in &[(0u32, 0.3f64), (2, 1.0), (7, 7.9), (20, 3.0), (50, 99.0)] {
            let up = regularized_gamma(sigma, x, GammaKind::Upper).unwrap();
            let lo = regularized_gamma(sigma, x, GammaKind::Lower).unwrap();
            assert!((up + lo - 1.0).abs() < 1e-12, "sigma={sigma} x={x}");
        }
        assert!(matches!(
            regularized_gamma(0, -0.5, GammaKind::Upper),
            Err(StatsError::Domain(_))
        ));
    }

    #[test]
    fn ln_gamma_factorials() {
        for (k, factorial) in FACTORIALS.iter().enumerate().skip(1) {
            assert_relative_eq!(
                ln_gamma(k as f64 + 1.0),
                factorial.ln(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn mean_bright_reference() {
        let p = paper_params();
        assert_relative_eq!(mean_bright(&p), 1.463, max_relative = 1e-14);
        let p2 = DetectionParams::integrated(249e3, 11e3, 61e-6, 10e-6, 1, 0.0).unwrap();
        assert_relative_eq!(mean_bright(&p2), 2.49, max_relative = 1e-14);
    }

    #[test]
    fn mean_dark_matches_quadrature_oracle() {
        // Oracle: numeric integration of the exponentially weighted mean plus
        // the never-depumped tail.
        let p = paper_params();
        let t_decay = p.decay_time;
        let oracle = integrate(
            |t| (-t / t_decay).exp() / t_decay * mean_depumped_at(&p, t),
            0.0,
            p.detect_time,
            1e-13,
        ) + (-p.detect_time / t_decay).exp() * mean_background(&p);
        assert_relative_eq!(mean_dark(&p), oracle, max_relative = 1e-10);
        // Frozen from the oracle.
        assert_relative_eq!(mean_dark(&p), 0.14037281658093536, max_relative = 1e-12);
    }

    #[test]
    fn mean_dark_limits() {
        let p = paper_params();
        // tau -> 0: background counts dominate.
        let small = p.with_detect_time(1e-12);
        assert_relative_eq!(
            mean_dark(&small),
            small.rate_background * small.detect_time,
            max_relative = 1e-5
        );
        // tau -> infinity: bright line minus the depumping offset.
        let large = p.with_detect_time(1.0);
        let asymptote = large.rate_bright * large.detect_time
            - (large.rate_bright - large.rate_background) * large.decay_time;
        assert_relative_eq!(mean_dark(&large), asymptote, max_relative = 1e-9);
        // T -> infinity: pure background.
        let nodepump = p.with_decay_time(f64::INFINITY);
        assert_relative_eq!(
            mean_dark(&nodepump),
            mean_background(&nodepump),
            max_relative = 1e-12
        );
    }

    #[test]
    fn dark_pmf_is_normalized_with_matching_mean() {
        let p = paper_params();
        let dist = PhotonDistribution::dark(&p).unwrap();
        let sum: f64 = dist.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_relative_eq!(dist.mean(), mean_dark(&p), max_relative = 1e-6);
    }

    #[test]
    fn dark_pmf_limit_no_depumping() {
        let p = paper_params().with_decay_time(f64::INFINITY);
        for k in 0..5 {
            assert_relative_eq!(
                dark_pmf(k, &p),
                poisson_pmf_raw(k, mean_background(&p)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn dark_pmf_limit_instant_depumping() {
        // T << tau: the ion depumps immediately and looks bright.
        let p = paper_params().with_decay_time(1e-13);
        for k in 0..5 {
            assert_relative_eq!(
                dark_pmf(k, &p),
                poisson_pmf_raw(k, mean_bright(&p)),
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn dark_pmf_monotone_in_detect_time() {
        let p = paper_params();
        let mut last = f64::INFINITY;
        for tau_us in [1.0, 3.0, 10.0, 30.0, 100.0] {
            let v = dark_pmf(0, &p.with_detect_time(tau_us * 1e-6));
            assert!(v < last, "dark_pmf(0) must decrease with tau");
            last = v;
        }
    }

    #[test]
    fn photon_distribution_validation() {
        assert!(PhotonDistribution::from_pmf(vec![0.5, 0.4]).is_err());
        assert!(PhotonDistribution::from_pmf(vec![0.5, 0.5]).is_ok());
        assert!(PhotonDistribution::from_counts(&[0, 0]).is_err());
        let d = PhotonDistribution::from_counts(&[3, 1]).unwrap();
        assert_relative_eq!(d.pmf(0), 0.75);
        assert_relative_eq!(d.mean(), 0.25);
        assert_eq!(d.pmf(9), 0.0);
    }

    #[test]
    fn poisson_distribution_support_invariant() {
        for mean in [0.029, 1.463, 2.49, 20.0] {
            let d = PhotonDistribution::poisson(mean).unwrap();
            assert!(d.support_max() >= (mean + 10.0 * mean.sqrt()).ceil() as u32);
        }
    }

    #[test]
    fn params_validation_rejects_bad_inputs() {
        assert!(DetectionParams::new(1e3, 2e3, 1e-6, 1e-6, 0, 0.0, 1e-6, 1).is_err());
        assert!(DetectionParams::new(2e3, 1e3, 0.0, 1e-6, 0, 0.0, 1e-6, 1).is_err());
        assert!(DetectionParams::new(2e3, 1e3, 1e-6, 1e-6, 0, 1.5, 1e-6, 1).is_err());
        assert!(DetectionParams::new(2e3, 1e3, 1e-6, 1e-6, 0, 0.0, 1e-6, 0).is_err());
        let p = DetectionParams::new(2e3, 1e3, 1e-6, 10e-6, 0, 0.0, 2e-6, 5).unwrap();
        assert!(p.validate_subbins().is_ok());
        assert!(p.with_detect_time(11e-6).validate_subbins().is_err());
        assert!(PhysicalConstants::new(0.0, 1.0, 1.0).is_err());
    }
}
