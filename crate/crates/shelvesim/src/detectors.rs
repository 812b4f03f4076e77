//! Per-shot state classifiers: integrated threshold detection, time-resolved
//! maximum-likelihood (Bayesian) detection with optional adaptive stopping,
//! the anti-correlation (pi) combinator, and the ensemble distribution-fit
//! estimator.

use thiserror::Error;

use crate::stats::{poisson_ln_pmf_raw, DetectionParams, PhotonDistribution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("pi combination requires two conclusive detection outcomes")]
    DiscardedInput,
    #[error("calibration histograms are degenerate (no separation)")]
    DegenerateCalibration,
    #[error("calibration bright mean must exceed the dark mean")]
    CalibrationNotSeparated,
}

/// Detection scheme identifiers, in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Threshold,
    DistributionFit,
    Bayesian,
    Pi,
    PiBayesian,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Threshold,
        Scheme::DistributionFit,
        Scheme::Bayesian,
        Scheme::Pi,
        Scheme::PiBayesian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Threshold => "threshold",
            Scheme::DistributionFit => "distribution_fit",
            Scheme::Bayesian => "bayesian",
            Scheme::Pi => "pi",
            Scheme::PiBayesian => "pi_bayesian",
        }
    }
}

/// Ternary classification result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Bright,
    Dark,
    Discarded,
}

/// Outcome of one detection event (or one combined pi pair).
///
/// `posterior_error` is present exactly when a Bayesian classifier produced
/// the outcome; it is the posterior probability of the non-assigned state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOutcome {
    pub state: Verdict,
    pub posterior_error: Option<f64>,
}

impl DetectionOutcome {
    fn hard(state: Verdict) -> Self {
        Self {
            state,
            posterior_error: None,
        }
    }
}

/// Photon counts of one detection window, time-resolved into sub-bins.
///
/// Integrated threshold detection uses a single sub-bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotData {
    pub subbin_counts: Vec<u32>,
}

impl ShotData {
    pub fn new(subbin_counts: Vec<u32>) -> Self {
        Self { subbin_counts }
    }

    pub fn total(&self) -> u32 {
        self.subbin_counts.iter().sum()
    }
}

/// Assign bright iff the total count strictly exceeds the threshold.
pub fn classify_threshold(shot: &ShotData, sigma: u32) -> DetectionOutcome {
    if shot.total() > sigma {
        DetectionOutcome::hard(Verdict::Bright)
    } else {
        DetectionOutcome::hard(Verdict::Dark)
    }
}

/// Log-likelihood of a sub-bin series under the bright-state hypothesis.
pub fn likelihood_bright(series: &[u32], p: &DetectionParams) -> f64 {
    let mean = p.rate_bright * p.subbin_time;
    series.iter().map(|&k| poisson_ln_pmf_raw(k, mean)).sum()
}

/// Log-likelihood of a sub-bin series under the dark-state hypothesis.
///
/// Mixture over the sub-bin index at which depumping occurs (bin-edge model):
/// background statistics before, bright statistics from that bin on, plus the
/// never-depumped term. Evaluated with log-sum-exp.
pub fn likelihood_dark(series: &[u32], p: &DetectionParams) -> f64 {
    let n = series.len();
    let mean_b = p.rate_bright * p.subbin_time;
    let mean_d = p.rate_background * p.subbin_time;
    let x = if p.decay_time.is_finite() {
        p.subbin_time / p.decay_time
    } else {
        0.0
    };
    let ln_stay = -x;
    // ln(1 - e^(-x)) via expm1 for small x; x = 0 gives -inf and the
    // depumped branch drops out entirely.
    let ln_flip = (-(-x).exp_m1()).ln();

    let ln_b: Vec<f64> = series
        .iter()
        .map(|&k| poisson_ln_pmf_raw(k, mean_b))
        .collect();
    let ln_d: Vec<f64> = series
        .iter()
        .map(|&k| poisson_ln_pmf_raw(k, mean_d))
        .collect();

    // prefix_d[j] = sum of dark log-pmfs over bins < j
    let mut prefix_d = Vec::with_capacity(n + 1);
    prefix_d.push(0.0);
    for &v in &ln_d {
        prefix_d.push(prefix_d.last().unwrap() + v);
    }
    // suffix_b[j] = sum of bright log-pmfs over bins >= j
    let mut suffix_b = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix_b[j] = suffix_b[j + 1] + ln_b[j];
    }

    let mut terms = Vec::with_capacity(n + 1);
    for j in 1..=n {
        let decay_weight = if j == 1 {
            0.0
        } else {
            (j as f64 - 1.0) * ln_stay
        };
        terms.push(ln_flip + decay_weight + prefix_d[j - 1] + suffix_b[j - 1]);
    }
    terms.push(n as f64 * ln_stay + prefix_d[n]);
    log_sum_exp(&terms)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Maximum-likelihood classification of a sub-bin series with equal priors.
///
/// Ties go to dark. The posterior error is the equal-prior posterior of the
/// rejected hypothesis.
pub fn classify_bayesian(series: &[u32], p: &DetectionParams) -> DetectionOutcome {
    assert_eq!(
        series.len(),
        p.subbin_count as usize,
        "series length must match the configured sub-bin count"
    );
    classify_bayesian_prefix(series, p)
}

fn classify_bayesian_prefix(series: &[u32], p: &DetectionParams) -> DetectionOutcome {
    let ln_b = likelihood_bright(series, p);
    let ln_d = likelihood_dark(series, p);
    if ln_b == ln_d {
        return DetectionOutcome {
            state: Verdict::Dark,
            posterior_error: Some(0.5),
        };
    }
    let (state, gap) = if ln_b > ln_d {
        (Verdict::Bright, ln_b - ln_d)
    } else {
        (Verdict::Dark, ln_d - ln_b)
    };
    // min(L_B, L_D) / (L_B + L_D) in log space.
    let posterior_error = 1.0 / (1.0 + gap.exp());
    DetectionOutcome {
        state,
        posterior_error: Some(posterior_error),
    }
}

/// Result of adaptive Bayesian detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveResult {
    pub outcome: DetectionOutcome,
    pub bins_used: u32,
    /// False when `max_bins` ran out before reaching the error target.
    pub converged: bool,
}

/// Consume sub-bins one at a time, stopping as soon as the posterior error
/// reaches `error_target` or `max_bins` bins have been used.
///
/// The returned outcome equals [`classify_bayesian`] evaluated on exactly the
/// consumed prefix.
pub fn classify_bayesian_adaptive<I>(
    counts: I,
    p: &DetectionParams,
    error_target: f64,
    max_bins: u32,
) -> AdaptiveResult
where
    I: IntoIterator<Item = u32>,
{
    assert!(max_bins >= 1, "at least one sub-bin is required");
    assert!(
        (0.0..=0.5).contains(&error_target),
        "error target must lie in [0, 0.5]"
    );
    let mut prefix: Vec<u32> = Vec::with_capacity(max_bins as usize);
    let mut outcome = None;
    for count in counts.into_iter().take(max_bins as usize) {
        prefix.push(count);
        let o = classify_bayesian_prefix(&prefix, p);
        let reached = o.posterior_error.expect("bayesian outcome") <= error_target;
        outcome = Some(o);
        if reached {
            return AdaptiveResult {
                outcome: o,
                bins_used: prefix.len() as u32,
                converged: true,
            };
        }
    }
    let outcome = outcome.expect("stream must provide at least one sub-bin");
    AdaptiveResult {
        outcome,
        bins_used: prefix.len() as u32,
        converged: false,
    }
}

/// Combine two detection events separated by a spin-flip.
///
/// Anti-correlated verdicts are accepted and reported as the first event's
/// state; correlated verdicts are discarded. For Bayesian inputs the combined
/// posterior error is the product of the two single-event posterior errors.
pub fn combine_pi(
    first: &DetectionOutcome,
    second: &DetectionOutcome,
) -> Result<DetectionOutcome, DetectorError> {
    if first.state == Verdict::Discarded || second.state == Verdict::Discarded {
        return Err(DetectorError::DiscardedInput);
    }
    if first.state == second.state {
        return Ok(DetectionOutcome::hard(Verdict::Discarded));
    }
    let posterior_error = match (first.posterior_error, second.posterior_error) {
        (Some(a), Some(b)) => Some(a * b),
        _ => None,
    };
    Ok(DetectionOutcome {
        state: first.state,
        posterior_error,
    })
}

/// Calibrated bright/dark photon histograms for distribution-fit detection.
///
/// The dark histogram is a background-only reference (detection light off or
/// ion absent), so it carries no depumping tail.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPair {
    pub bright_hist: PhotonDistribution,
    pub dark_hist: PhotonDistribution,
}

impl CalibrationPair {
    pub fn new(
        bright_hist: PhotonDistribution,
        dark_hist: PhotonDistribution,
    ) -> Result<Self, DetectorError> {
        if bright_hist.mean() <= dark_hist.mean() {
            return Err(DetectorError::CalibrationNotSeparated);
        }
        Ok(Self {
            bright_hist,
            dark_hist,
        })
    }

    /// Analytic calibration pair for a parameter set: Poisson histograms at
    /// the bright and background means.
    pub fn analytic(p: &DetectionParams) -> Self {
        let bright =
            PhotonDistribution::poisson(crate::stats::mean_bright(p)).expect("valid bright mean");
        let dark = PhotonDistribution::poisson(crate::stats::mean_background(p))
            .expect("valid background mean");
        Self::new(bright, dark).expect("analytic pair is separated")
    }
}

/// Least-squares estimate of the bright amplitude `a` decomposing an observed
/// histogram into the calibrated bright/dark pair.
///
/// The model is linear in `a`, so the minimizer is closed-form; the result is
/// clamped to [0, 1]. The fit is unweighted.
pub fn fit_distribution(
    observed: &PhotonDistribution,
    calib: &CalibrationPair,
) -> Result<f64, DetectorError> {
    let kmax = observed
        .support_max()
        .max(calib.bright_hist.support_max())
        .max(calib.dark_hist.support_max());
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..=kmax {
        let d = calib.bright_hist.pmf(k) - calib.dark_hist.pmf(k);
        num += (observed.pmf(k) - calib.dark_hist.pmf(k)) * d;
        den += d * d;
    }
    if den < 1e-300 {
        return Err(DetectorError::DegenerateCalibration);
    }
    Ok((num / den).clamp(0.0, 1.0))
}
