//! Closed-form detection-error predictions: threshold and pi-scheme error
//! probabilities, assignment biases, retained statistics, the off-resonant
//! depumping rate, and projection-noise confidence bands.

use crate::stats::{
    self, mean_background, mean_bright, poisson_cdf_raw, regularized_gamma_pair, DetectionParams,
    PhysicalConstants, StatsError,
};

/// Terms of the analytic dark-error expression.
///
/// `beta` is the mean-count separation per detection window scaled by the
/// decay time; `alpha = 1 - 1/beta`. At `alpha -> 0` the expression becomes a
/// removable singularity and evaluation falls back to direct quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormTerms {
    pub beta: f64,
    pub alpha: f64,
}

impl ClosedFormTerms {
    pub fn from_params(p: &DetectionParams) -> Self {
        let beta = (mean_bright(p) - mean_background(p)) * p.decay_time / p.detect_time;
        Self {
            beta,
            alpha: 1.0 - 1.0 / beta,
        }
    }
}

/// Reference ensemble size used when a report carries its own confidence band.
const REFERENCE_SHOTS: f64 = 1000.0;

/// Per-scheme error summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub err_bright: f64,
    pub err_dark: f64,
    pub avg_error: f64,
    pub bias: f64,
    pub retained_fraction: f64,
    /// 95% projection-noise half-width for a 1000-shot ensemble at a = 0.5,
    /// scaled by the retained fraction.
    pub conf_halfwidth: f64,
}

/// Off-resonant excitation rate of the dark state, rad/s.
pub fn depumping_rate(c: &PhysicalConstants) -> f64 {
    c.linewidth.powi(3) * c.saturation / (8.0 * c.hyperfine_splitting.powi(2))
}

/// Probability that a bright-state shot stays at or below the threshold.
pub fn threshold_error_bright(p: &DetectionParams) -> f64 {
    poisson_cdf_raw(p.threshold, mean_bright(p))
}

/// Probability that a dark-state shot exceeds the threshold, including
/// depumping during the window.
pub fn threshold_error_dark(p: &DetectionParams) -> f64 {
    1.0 - dark_cdf(p)
}

/// P(xi_D <= sigma): closed form where well-conditioned, quadrature otherwise.
fn dark_cdf(p: &DetectionParams) -> f64 {
    depumped_below(p) + survival(p) * poisson_cdf_raw(p.threshold, mean_background(p))
}

fn survival(p: &DetectionParams) -> f64 {
    if p.decay_time.is_finite() {
        (-p.detect_time / p.decay_time).exp()
    } else {
        1.0
    }
}

const ALPHA_SINGULAR: f64 = 1e-6;

/// Probability mass at counts 0..=sigma contributed by shots that depump
/// inside the window.
fn depumped_below(p: &DetectionParams) -> f64 {
    if !p.decay_time.is_finite() {
        return 0.0;
    }
    let terms = ClosedFormTerms::from_params(p);
    if terms.alpha < ALPHA_SINGULAR {
        // alpha near zero (or negative) makes the analytic form ill-behaved;
        // integrate the depumped pmf directly instead.
        return (0..=p.threshold)
            .map(|k| stats::depumped_pmf_integral(k, p))
            .sum();
    }
    (0..=p.threshold).map(|k| depumped_term(p, &terms, k)).sum()
}

/// Analytic value of the depumped-shot pmf at count k.
fn depumped_term(p: &DetectionParams, terms: &ClosedFormTerms, k: u32) -> f64 {
    let xi_b = mean_bright(p);
    let xi_i = mean_background(p);
    let a = k as f64 + 1.0;
    let (p_hi, q_hi) = regularized_gamma_pair(a, xi_b * terms.alpha).expect("valid gamma args");
    let (p_lo, q_lo) = regularized_gamma_pair(a, xi_i * terms.alpha).expect("valid gamma args");
    // Pick the difference route with the least cancellation.
    let diff = if p_hi <= 0.5 {
        p_hi - p_lo
    } else {
        q_lo - q_hi
    };
    if diff <= 0.0 {
        return 0.0;
    }
    let ln_scale = -xi_b / terms.beta - terms.beta.ln() - a * terms.alpha.ln();
    (ln_scale + diff.ln()).exp()
}

/// Average single-shot threshold error with bias and (full) retained fraction.
pub fn threshold_avg_error(p: &DetectionParams) -> ErrorReport {
    let err_bright = threshold_error_bright(p);
    let err_dark = threshold_error_dark(p);
    ErrorReport {
        err_bright,
        err_dark,
        avg_error: 0.5 * (err_bright + err_dark),
        bias: bias_threshold(p),
        retained_fraction: 1.0,
        conf_halfwidth: projection_noise_halfwidth(0.5, REFERENCE_SHOTS)
            .expect("reference shots valid"),
    }
}

/// Probability that an initially dark shot survives the anti-correlation
/// filter with a bright verdict.
pub fn pi_error_dark(p: &DetectionParams) -> f64 {
    let sigma = p.threshold;
    let p_b_le = poisson_cdf_raw(sigma, mean_bright(p));
    let p_d_le = dark_cdf(p);
    let eps = p.spinflip_error;
    let depumped_above = depumped_mass(p) - depumped_below(p);
    let survived_above = survival(p) * (1.0 - poisson_cdf_raw(sigma, mean_background(p)));
    depumped_above * (p_d_le + eps * (p_b_le - p_d_le))
        + survived_above * (p_b_le - eps * (p_b_le - p_d_le))
}

/// Probability that an initially bright shot survives the filter with a dark
/// verdict.
pub fn pi_error_bright(p: &DetectionParams) -> f64 {
    let sigma = p.threshold;
    let p_b_le = poisson_cdf_raw(sigma, mean_bright(p));
    let p_b_gt = 1.0 - p_b_le;
    let p_d_gt = threshold_error_dark(p);
    let eps = p.spinflip_error;
    p_b_le * (p_d_gt + eps * (p_b_gt - p_d_gt))
}

fn depumped_mass(p: &DetectionParams) -> f64 {
    1.0 - survival(p)
}

/// Average pi-scheme error with bias and retained statistics.
pub fn pi_avg_error(p: &DetectionParams) -> ErrorReport {
    let err_bright = pi_error_bright(p);
    let err_dark = pi_error_dark(p);
    let retained = pi_retained_fraction(p);
    ErrorReport {
        err_bright,
        err_dark,
        avg_error: 0.5 * (err_bright + err_dark),
        bias: bias_pi(p),
        retained_fraction: retained,
        conf_halfwidth: projection_noise_halfwidth(0.5, (REFERENCE_SHOTS * retained).max(1.0))
            .expect("reference shots valid"),
    }
}

/// Threshold-scheme assignment bias: correct-dark minus correct-bright
/// probability. Spin-flip infidelity is deliberately excluded; the
/// Monte-Carlo engine provides the infidelity-aware estimate.
pub fn bias_threshold(p: &DetectionParams) -> f64 {
    let p_d_le = dark_cdf(p);
    let p_b_gt = 1.0 - poisson_cdf_raw(p.threshold, mean_bright(p));
    p_d_le - p_b_gt
}

/// Pi-scheme assignment bias (spin-flip infidelity excluded, as for
/// [`bias_threshold`]).
pub fn bias_pi(p: &DetectionParams) -> f64 {
    let sigma = p.threshold;
    let p_b_gt = 1.0 - poisson_cdf_raw(sigma, mean_bright(p));
    let p_d_le = dark_cdf(p);
    let p_d_gt = 1.0 - p_d_le;
    let correct_dark_survived = p_b_gt * survival(p) * poisson_cdf_raw(sigma, mean_background(p));
    let correct_dark_depumped = p_d_gt * depumped_below(p);
    correct_dark_survived + correct_dark_depumped - p_d_le * p_b_gt
}

/// Fraction of pi-detection pairs that pass the anti-correlation filter,
/// neglecting depumping and spin-flip infidelity.
pub fn pi_retained_fraction(p: &DetectionParams) -> f64 {
    let p_b_le = poisson_cdf_raw(p.threshold, mean_bright(p));
    let p_i_gt = 1.0 - poisson_cdf_raw(p.threshold, mean_background(p));
    1.0 - p_b_le - p_i_gt + 2.0 * p_b_le * p_i_gt
}

/// Half-width of the 95% quantum-projection-noise confidence interval,
/// `1.96 * sqrt(a (1 - a) / n)`.
///
/// `n_shots` may be fractional to account for retained-fraction scaling.
pub fn projection_noise_halfwidth(amplitude: f64, n_shots: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(StatsError::Domain("amplitude must lie in [0, 1]"));
    }
    if n_shots.is_nan() || n_shots < 1.0 || !n_shots.is_finite() {
        return Err(StatsError::Domain("shot count must be >= 1"));
    }
    Ok(1.96 * (amplitude * (1.0 - amplitude) / n_shots).sqrt())
}
