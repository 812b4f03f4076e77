//! Simulation and analytic prediction of fluorescence state detection for
//! trapped-ion style qubits.
//!
//! A qubit is read out by collecting state-dependent fluorescence: the bright
//! state scatters photons on a cycling transition while the dark state stays
//! (nearly) silent, apart from background light and off-resonant depumping
//! that eventually drives it bright. This crate models that process end to
//! end and implements five discrimination schemes on top of it:
//!
//! - **threshold** — assign bright when the photon count exceeds a threshold;
//! - **distribution fit** — decompose an ensemble histogram into calibrated
//!   bright/dark histograms to estimate the bright amplitude;
//! - **Bayesian** — per-shot maximum likelihood over a time-resolved sub-bin
//!   series, with a depumping-aware dark likelihood and adaptive stopping;
//! - **pi** — two threshold detections around a spin-flip, keeping only
//!   anti-correlated pairs;
//! - **pi-Bayesian** — the same filter applied to Bayesian verdicts.
//!
//! [`stats`] holds the photon-count models and special functions, [`theory`]
//! the closed-form error/bias predictions, [`detectors`] the per-shot
//! classifiers, [`montecarlo`] a seeded shot-level simulator that doubles as
//! the brute-force oracle for every closed form, [`experiments`] the named
//! reproduction scenarios, and [`io`] config/calibration/table plumbing for
//! the command-line tool.

pub mod detectors;
pub mod experiments;
pub mod io;
pub mod montecarlo;
pub mod stats;
pub mod theory;

pub use detectors::{
    classify_bayesian, classify_bayesian_adaptive, classify_threshold, combine_pi,
    fit_distribution, CalibrationPair, DetectionOutcome, Scheme, ShotData, Verdict,
};
pub use stats::{
    dark_pmf, mean_background, mean_bright, mean_dark, poisson_cdf, poisson_pmf, regularized_gamma,
    DetectionParams, GammaKind, PhotonDistribution, PhysicalConstants, StatsError,
};
pub use theory::{
    bias_pi, bias_threshold, depumping_rate, pi_avg_error, pi_error_bright, pi_error_dark,
    pi_retained_fraction, projection_noise_halfwidth, threshold_avg_error, threshold_error_bright,
    threshold_error_dark, ErrorReport,
};
