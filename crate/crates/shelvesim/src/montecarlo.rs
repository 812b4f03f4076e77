//! Seeded stochastic simulation of full detection cycles: state preparation,
//! depumping, photon emission, spin-flips, and detection-power scaling.
//!
//! Every shot draws from its own counter-derived RNG stream, so results are
//! bit-identical for a given seed regardless of thread count or evaluation
//! order. Aggregation sticks to integer counting.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::detectors::{
    classify_bayesian, classify_threshold, combine_pi, CalibrationPair, DetectionOutcome, Scheme,
    ShotData, Verdict,
};
use crate::stats::{DetectionParams, PhotonDistribution};

/// Physical qubit state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitState {
    Bright,
    Dark,
}

impl QubitState {
    pub fn inverted(self) -> Self {
        match self {
            QubitState::Bright => QubitState::Dark,
            QubitState::Dark => QubitState::Bright,
        }
    }
}

/// How a detection-power offset maps onto the scattering rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerLaw {
    /// Two-level saturation law for the bright rate, linear background,
    /// depumping rate proportional to power.
    Saturation,
    /// Fully linear alternative for sensitivity analysis.
    Linear,
}

/// One simulation campaign: parameters, shot budget, seed, and the power
/// offset applied to the physics (analysis always uses the nominal
/// parameters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub params: DetectionParams,
    pub n_shots: u64,
    pub seed: u64,
    pub power_offset_db: f64,
    pub power_law: PowerLaw,
    /// When false the interleaved spin-flip is treated as perfect.
    pub spinflip_enabled: bool,
    /// Probability that state preparation yields the wrong state.
    pub prep_error: f64,
}

impl SimConfig {
    pub fn new(params: DetectionParams, n_shots: u64, seed: u64) -> Self {
        Self {
            params,
            n_shots,
            seed,
            power_offset_db: 0.0,
            power_law: PowerLaw::Saturation,
            spinflip_enabled: true,
            prep_error: 0.0,
        }
    }

    /// Parameters the simulated physics actually runs at.
    pub fn true_params(&self) -> DetectionParams {
        if self.power_offset_db == 0.0 {
            self.params
        } else {
            power_scaled_params(&self.params, self.power_offset_db, self.power_law)
        }
    }

    fn effective_spinflip_error(&self) -> f64 {
        if self.spinflip_enabled {
            self.true_params().spinflip_error
        } else {
            0.0
        }
    }
}

/// One simulated detection window.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub true_state_initial: QubitState,
    /// Depump time within the window; `None` when the shot never depumps
    /// (bright shots, or dark shots that outlast the window).
    pub depump_time: Option<f64>,
    pub series: ShotData,
    /// Classifier outcomes, filled in by [`attach_outcomes`].
    pub outcomes: BTreeMap<Scheme, DetectionOutcome>,
}

impl ShotRecord {
    pub fn total(&self) -> u32 {
        self.series.total()
    }

    /// Physical state at the end of the window.
    pub fn final_state(&self) -> QubitState {
        match (self.true_state_initial, self.depump_time) {
            (QubitState::Dark, Some(_)) => QubitState::Bright,
            (state, _) => state,
        }
    }
}

// ---------------------------------------------------------------------------
// Counter-based RNG streams
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer; used to derive independent sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed for an independent simulation stage.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix64(seed ^ mix64(salt))
}

/// RNG for one shot: key = (seed, stream), counter = draw index.
pub fn shot_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&0x7368_656c_7665_7369u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn par_map_shots<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

// ---------------------------------------------------------------------------
// Elementary draws
// ---------------------------------------------------------------------------

pub(crate) fn sample_poisson<R: Rng>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    draw.min(u32::MAX as f64) as u32
}

fn sample_depump_time<R: Rng>(rng: &mut R, decay_time: f64) -> Option<f64> {
    if !decay_time.is_finite() {
        return None;
    }
    Some(
        Exp::new(1.0 / decay_time)
            .expect("positive rate")
            .sample(rng),
    )
}

/// Invert `state` with probability `1 - epsilon_rf`.
pub fn apply_spin_flip<R: Rng>(state: QubitState, epsilon_rf: f64, rng: &mut R) -> QubitState {
    if rng.random::<f64>() < 1.0 - epsilon_rf {
        state.inverted()
    } else {
        state
    }
}

fn prepare_state<R: Rng>(intended: QubitState, prep_error: f64, rng: &mut R) -> QubitState {
    if prep_error > 0.0 && rng.random::<f64>() < prep_error {
        intended.inverted()
    } else {
        intended
    }
}

/// Simulate one detection window for a given initial state.
///
/// Dark shots draw a continuous depump time; a depump inside a sub-bin splits
/// that bin's mean between background and bright rates, so depumping is not
/// restricted to bin edges.
pub fn sample_shot<R: Rng>(
    true_state: QubitState,
    params: &DetectionParams,
    rng: &mut R,
) -> ShotRecord {
    let n = params.subbin_count as usize;
    let t_s = params.subbin_time;
    match true_state {
        QubitState::Bright => {
            let mean = params.rate_bright * t_s;
            let counts = (0..n).map(|_| sample_poisson(rng, mean)).collect();
            ShotRecord {
                true_state_initial: true_state,
                depump_time: None,
                series: ShotData::new(counts),
                outcomes: BTreeMap::new(),
            }
        }
        QubitState::Dark => {
            let depump = sample_depump_time(rng, params.decay_time);
            let t_d = depump.unwrap_or(f64::INFINITY);
            let counts = (0..n)
                .map(|i| {
                    let lo = i as f64 * t_s;
                    let hi = lo + t_s;
                    let dark_span = (t_d - lo).clamp(0.0, t_s);
                    let bright_span = (hi - t_d).clamp(0.0, t_s);
                    let mean =
                        params.rate_background * dark_span + params.rate_bright * bright_span;
                    sample_poisson(rng, mean)
                })
                .collect();
            let depump_time = depump.filter(|&t| t < params.detect_time);
            ShotRecord {
                true_state_initial: true_state,
                depump_time,
                series: ShotData::new(counts),
                outcomes: BTreeMap::new(),
            }
        }
    }
}

/// Fill the single-window classifier outcomes of a record using the given
/// analysis parameters.
pub fn attach_outcomes(record: &mut ShotRecord, analysis: &DetectionParams) {
    record.outcomes.insert(
        Scheme::Threshold,
        classify_threshold(&record.series, analysis.threshold),
    );
    if record.series.subbin_counts.len() == analysis.subbin_count as usize {
        record.outcomes.insert(
            Scheme::Bayesian,
            classify_bayesian(&record.series.subbin_counts, analysis),
        );
    }
}

/// One full pi sequence: two windows separated by a spin-flip.
#[derive(Debug, Clone, PartialEq)]
pub struct PiShotRecord {
    pub first: ShotRecord,
    pub second: ShotRecord,
    pub state_after_flip: QubitState,
}

/// Run detection, spin-flip, detection. The flip acts on the physical state
/// at the end of the first window, so a dark shot that depumped enters the
/// flip as bright.
pub fn run_pi_shot<R: Rng>(
    true_state: QubitState,
    params: &DetectionParams,
    epsilon_rf: f64,
    rng: &mut R,
) -> PiShotRecord {
    let first = sample_shot(true_state, params, rng);
    let state_after_flip = apply_spin_flip(first.final_state(), epsilon_rf, rng);
    let second = sample_shot(state_after_flip, params, rng);
    PiShotRecord {
        first,
        second,
        state_after_flip,
    }
}

/// Combined threshold verdicts of a pi sequence.
pub fn pi_threshold_outcome(shot: &PiShotRecord, sigma: u32) -> DetectionOutcome {
    let first = classify_threshold(&shot.first.series, sigma);
    let second = classify_threshold(&shot.second.series, sigma);
    combine_pi(&first, &second).expect("threshold outcomes are conclusive")
}

// ---------------------------------------------------------------------------
// Power scaling
// ---------------------------------------------------------------------------

/// Rescale a calibrated parameter set to a detection-power offset.
///
/// 0 dB is the calibration point at saturation (s0 = 1). Under the
/// saturation law the bright rate follows `2 R_B s / (1 + s)`, the
/// background scales linearly with power, and the depumping time shortens as
/// `T / s`.
pub fn power_scaled_params(p: &DetectionParams, offset_db: f64, law: PowerLaw) -> DetectionParams {
    let s = 10f64.powf(offset_db / 10.0);
    let rate_bright = match law {
        PowerLaw::Saturation => p.rate_bright * 2.0 * s / (1.0 + s),
        PowerLaw::Linear => p.rate_bright * s,
    };
    DetectionParams {
        rate_bright,
        rate_background: p.rate_background * s,
        decay_time: p.decay_time / s,
        ..*p
    }
}

// ---------------------------------------------------------------------------
// Campaign-level estimators
// ---------------------------------------------------------------------------

/// Monte-Carlo threshold error estimate from `n_each` shots per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMcEstimate {
    pub err_bright: f64,
    pub err_dark: f64,
    pub n_each: u64,
}

pub fn measure_threshold_errors(cfg: &SimConfig) -> ThresholdMcEstimate {
    let params = cfg.true_params();
    let sigma = cfg.params.threshold;
    let n = cfg.n_shots;
    let bright_seed = derive_seed(cfg.seed, 1);
    let dark_seed = derive_seed(cfg.seed, 2);
    let bright_wrong: u64 = par_map_shots(n, |i| {
        let mut rng = shot_rng(bright_seed, i);
        let shot = sample_shot(QubitState::Bright, &params, &mut rng);
        u64::from(shot.total() <= sigma)
    })
    .iter()
    .sum();
    let dark_wrong: u64 = par_map_shots(n, |i| {
        let mut rng = shot_rng(dark_seed, i);
        let shot = sample_shot(QubitState::Dark, &params, &mut rng);
        u64::from(shot.total() > sigma)
    })
    .iter()
    .sum();
    ThresholdMcEstimate {
        err_bright: bright_wrong as f64 / n as f64,
        err_dark: dark_wrong as f64 / n as f64,
        n_each: n,
    }
}

/// Monte-Carlo pi-sequence statistics from `n_each` shots per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiMcEstimate {
    /// P(accepted with bright verdict | initially dark).
    pub err_dark: f64,
    /// P(accepted with dark verdict | initially bright).
    pub err_bright: f64,
    /// P(accepted | initially dark) and bright respectively.
    pub retained_dark: f64,
    pub retained_bright: f64,
    /// Correct-dark minus correct-bright acceptance probability.
    pub bias: f64,
    pub n_each: u64,
}

impl PiMcEstimate {
    pub fn retained(&self) -> f64 {
        0.5 * (self.retained_dark + self.retained_bright)
    }
}

pub fn measure_pi_stats(cfg: &SimConfig) -> PiMcEstimate {
    let params = cfg.true_params();
    let sigma = cfg.params.threshold;
    let eps = cfg.effective_spinflip_error();
    let n = cfg.n_shots;

    let tally = |state: QubitState, salt: u64| -> (u64, u64) {
        let seed = derive_seed(cfg.seed, salt);
        let per_shot = par_map_shots(n, |i| {
            let mut rng = shot_rng(seed, i);
            let shot = run_pi_shot(state, &params, eps, &mut rng);
            match pi_threshold_outcome(&shot, sigma).state {
                Verdict::Bright => (1u64, 0u64),
                Verdict::Dark => (0, 1),
                Verdict::Discarded => (0, 0),
            }
        });
        per_shot
            .iter()
            .fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
    };

    let (dark_as_bright, dark_as_dark) = tally(QubitState::Dark, 3);
    let (bright_as_bright, bright_as_dark) = tally(QubitState::Bright, 4);
    let nf = n as f64;
    PiMcEstimate {
        err_dark: dark_as_bright as f64 / nf,
        err_bright: bright_as_dark as f64 / nf,
        retained_dark: (dark_as_bright + dark_as_dark) as f64 / nf,
        retained_bright: (bright_as_bright + bright_as_dark) as f64 / nf,
        bias: dark_as_dark as f64 / nf - bright_as_bright as f64 / nf,
        n_each: n,
    }
}

/// Per-scheme amplitude estimate from one simulated batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeEstimate {
    /// Estimated bright-state amplitude.
    pub amplitude: f64,
    /// Fraction of shots the scheme kept.
    pub retained_fraction: f64,
    pub shots_used: u64,
}

pub type PointEstimates = BTreeMap<Scheme, SchemeEstimate>;

#[derive(Debug, Clone, Copy)]
struct CompactShot {
    total_first: u32,
    threshold_bright: bool,
    bayesian_bright: bool,
    pi_verdict: Option<bool>,
    pi_bayesian_verdict: Option<bool>,
}

/// Simulate `cfg.n_shots` full pi sequences at a true bright probability and
/// analyze the same data with every scheme.
///
/// Physics runs at `cfg.true_params()`; all classifiers and the distribution
/// fit use the nominal `cfg.params`, which is what makes the estimates
/// sensitive to power mismatch. Single-window schemes read the first window.
pub fn analyze_point(cfg: &SimConfig, true_bright_prob: f64, stream_salt: u64) -> PointEstimates {
    let true_params = cfg.true_params();
    let analysis = cfg.params;
    analysis
        .validate_subbins()
        .expect("analysis sub-bin grid must tile the window");
    let sigma = analysis.threshold;
    let eps = cfg.effective_spinflip_error();
    let calib = CalibrationPair::analytic(&analysis);

    let shots = par_map_shots(cfg.n_shots, |i| {
        let mut rng = shot_rng(cfg.seed, stream_salt ^ i);
        let intended = if rng.random::<f64>() < true_bright_prob {
            QubitState::Bright
        } else {
            QubitState::Dark
        };
        let state = prepare_state(intended, cfg.prep_error, &mut rng);
        let pi = run_pi_shot(state, &true_params, eps, &mut rng);

        let thr1 = classify_threshold(&pi.first.series, sigma);
        let thr2 = classify_threshold(&pi.second.series, sigma);
        let bay1 = classify_bayesian(&pi.first.series.subbin_counts, &analysis);
        let bay2 = classify_bayesian(&pi.second.series.subbin_counts, &analysis);
        let pi_thr = combine_pi(&thr1, &thr2).expect("conclusive");
        let pi_bay = combine_pi(&bay1, &bay2).expect("conclusive");
        let as_flag = |o: &DetectionOutcome| match o.state {
            Verdict::Bright => Some(true),
            Verdict::Dark => Some(false),
            Verdict::Discarded => None,
        };
        CompactShot {
            total_first: pi.first.total(),
            threshold_bright: thr1.state == Verdict::Bright,
            bayesian_bright: bay1.state == Verdict::Bright,
            pi_verdict: as_flag(&pi_thr),
            pi_bayesian_verdict: as_flag(&pi_bay),
        }
    });

    let n = cfg.n_shots;
    let nf = n as f64;
    let mut estimates = PointEstimates::new();

    let thr_bright = shots.iter().filter(|s| s.threshold_bright).count() as f64;
    estimates.insert(
        Scheme::Threshold,
        SchemeEstimate {
            amplitude: thr_bright / nf,
            retained_fraction: 1.0,
            shots_used: n,
        },
    );

    let bay_bright = shots.iter().filter(|s| s.bayesian_bright).count() as f64;
    estimates.insert(
        Scheme::Bayesian,
        SchemeEstimate {
            amplitude: bay_bright / nf,
            retained_fraction: 1.0,
            shots_used: n,
        },
    );

    let mut hist = vec![0u64; 1];
    for s in &shots {
        let k = s.total_first as usize;
        if k >= hist.len() {
            hist.resize(k + 1, 0);
        }
        hist[k] += 1;
    }
    let observed = PhotonDistribution::from_counts(&hist).expect("non-empty batch");
    let amplitude = crate::detectors::fit_distribution(&observed, &calib)
        .expect("analytic calibration is non-degenerate");
    estimates.insert(
        Scheme::DistributionFit,
        SchemeEstimate {
            amplitude,
            retained_fraction: 1.0,
            shots_used: n,
        },
    );

    let tally_pair = |pick: &dyn Fn(&CompactShot) -> Option<bool>| {
        let accepted = shots.iter().filter(|s| pick(s).is_some()).count() as u64;
        let bright = shots.iter().filter(|s| pick(s) == Some(true)).count() as f64;
        let amplitude = if accepted > 0 {
            bright / accepted as f64
        } else {
            f64::NAN
        };
        SchemeEstimate {
            amplitude,
            retained_fraction: accepted as f64 / nf,
            shots_used: accepted,
        }
    };
    estimates.insert(Scheme::Pi, tally_pair(&|s| s.pi_verdict));
    estimates.insert(Scheme::PiBayesian, tally_pair(&|s| s.pi_bayesian_verdict));

    estimates
}

/// Per-scheme error rates estimated from one paired batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeErrors {
    pub err_bright: f64,
    pub err_dark: f64,
    pub retained_fraction: f64,
}

impl SchemeErrors {
    pub fn avg_error(&self) -> f64 {
        0.5 * (self.err_bright + self.err_dark)
    }
}

/// Run `cfg.n_shots` pi sequences per initial state and classify the same
/// data with the threshold, Bayesian, pi and pi-Bayesian schemes.
///
/// Sharing one dataset across schemes makes scheme-to-scheme error gaps a
/// paired comparison with far less variance than independent runs.
pub fn measure_paired_errors(cfg: &SimConfig, salt: u64) -> BTreeMap<Scheme, SchemeErrors> {
    let true_params = cfg.true_params();
    let analysis = cfg.params;
    analysis
        .validate_subbins()
        .expect("analysis sub-bin grid must tile the window");
    let sigma = analysis.threshold;
    let eps = cfg.effective_spinflip_error();
    let n = cfg.n_shots;
    let nf = n as f64;

    // wrong / accepted-and-wrong / accepted tallies per scheme and state
    #[derive(Default, Clone, Copy)]
    struct Tally {
        thr_wrong: u64,
        bay_wrong: u64,
        pi_wrong: u64,
        pi_accepted: u64,
        pib_wrong: u64,
        pib_accepted: u64,
    }

    let run_state = |state: QubitState, sub_salt: u64| -> Tally {
        let seed = derive_seed(cfg.seed, sub_salt ^ salt);
        let per_shot = par_map_shots(n, |i| {
            let mut rng = shot_rng(seed, i);
            let pi = run_pi_shot(state, &true_params, eps, &mut rng);
            let thr1 = classify_threshold(&pi.first.series, sigma);
            let thr2 = classify_threshold(&pi.second.series, sigma);
            let bay1 = classify_bayesian(&pi.first.series.subbin_counts, &analysis);
            let bay2 = classify_bayesian(&pi.second.series.subbin_counts, &analysis);
            let pi_thr = combine_pi(&thr1, &thr2).expect("conclusive");
            let pi_bay = combine_pi(&bay1, &bay2).expect("conclusive");
            let wrong_verdict = match state {
                QubitState::Bright => Verdict::Dark,
                QubitState::Dark => Verdict::Bright,
            };
            Tally {
                thr_wrong: u64::from(thr1.state == wrong_verdict),
                bay_wrong: u64::from(bay1.state == wrong_verdict),
                pi_wrong: u64::from(pi_thr.state == wrong_verdict),
                pi_accepted: u64::from(pi_thr.state != Verdict::Discarded),
                pib_wrong: u64::from(pi_bay.state == wrong_verdict),
                pib_accepted: u64::from(pi_bay.state != Verdict::Discarded),
            }
        });
        per_shot.iter().fold(Tally::default(), |a, b| Tally {
            thr_wrong: a.thr_wrong + b.thr_wrong,
            bay_wrong: a.bay_wrong + b.bay_wrong,
            pi_wrong: a.pi_wrong + b.pi_wrong,
            pi_accepted: a.pi_accepted + b.pi_accepted,
            pib_wrong: a.pib_wrong + b.pib_wrong,
            pib_accepted: a.pib_accepted + b.pib_accepted,
        })
    };

    let bright = run_state(QubitState::Bright, 21);
    let dark = run_state(QubitState::Dark, 22);

    let mut out = BTreeMap::new();
    out.insert(
        Scheme::Threshold,
        SchemeErrors {
            err_bright: bright.thr_wrong as f64 / nf,
            err_dark: dark.thr_wrong as f64 / nf,
            retained_fraction: 1.0,
        },
    );
    out.insert(
        Scheme::Bayesian,
        SchemeErrors {
            err_bright: bright.bay_wrong as f64 / nf,
            err_dark: dark.bay_wrong as f64 / nf,
            retained_fraction: 1.0,
        },
    );
    out.insert(
        Scheme::Pi,
        SchemeErrors {
            err_bright: bright.pi_wrong as f64 / nf,
            err_dark: dark.pi_wrong as f64 / nf,
            retained_fraction: (bright.pi_accepted + dark.pi_accepted) as f64 / (2.0 * nf),
        },
    );
    out.insert(
        Scheme::PiBayesian,
        SchemeErrors {
            err_bright: bright.pib_wrong as f64 / nf,
            err_dark: dark.pib_wrong as f64 / nf,
            retained_fraction: (bright.pib_accepted + dark.pib_accepted) as f64 / (2.0 * nf),
        },
    );
    out
}

/// One time point of a simulated Rabi scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiPoint {
    pub time: f64,
    pub true_bright_prob: f64,
    pub estimates: PointEstimates,
}

/// Simulate Rabi oscillations analyzed with every scheme.
///
/// The system starts bright, so the true bright probability at pulse time t
/// is cos^2(omega t / 2).
pub fn simulate_rabi_scan(omega: f64, pulse_times: &[f64], cfg: &SimConfig) -> Vec<RabiPoint> {
    assert!(!pulse_times.is_empty(), "pulse_times must be non-empty");
    pulse_times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = (omega * t / 2.0).cos().powi(2);
            let estimates = analyze_point(cfg, p, (i as u64) << 32);
            RabiPoint {
                time: t,
                true_bright_prob: p,
                estimates,
            }
        })
        .collect()
}

/// Spread of the distribution-fit estimator at one ensemble size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistfitStudyRow {
    pub n_shots: u64,
    pub repeats: u32,
    pub mean_amplitude: f64,
    pub std_amplitude: f64,
}

/// Repeat `repeats` independent n-shot experiments at a 50/50 superposition
/// and report the standard deviation of the fitted amplitude per n.
///
/// This isolates the statistical spread of the estimator, so dark shots are
/// background-only; depumping enters through the bias quantities instead.
pub fn distfit_error_study(cfg: &SimConfig, n_grid: &[u64], repeats: u32) -> Vec<DistfitStudyRow> {
    let params = cfg
        .true_params()
        .with_subbins(cfg.params.detect_time, 1)
        .with_decay_time(f64::INFINITY);
    let calib = CalibrationPair::analytic(&cfg.params);
    n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let amplitudes: Vec<f64> = (0..repeats)
                .into_par_iter()
                .map(|rep| {
                    let salt = ((gi as u64 * repeats as u64 + rep as u64) + 1) << 32;
                    let mut hist = vec![0u64; 1];
                    for i in 0..n {
                        let mut rng = shot_rng(cfg.seed, salt ^ i);
                        let state = if rng.random::<f64>() < 0.5 {
                            QubitState::Bright
                        } else {
                            QubitState::Dark
                        };
                        let k = sample_shot(state, &params, &mut rng).total() as usize;
                        if k >= hist.len() {
                            hist.resize(k + 1, 0);
                        }
                        hist[k] += 1;
                    }
                    let observed = PhotonDistribution::from_counts(&hist).expect("n >= 1");
                    crate::detectors::fit_distribution(&observed, &calib).expect("separated")
                })
                .collect();
            let m = amplitudes.iter().sum::<f64>() / amplitudes.len() as f64;
            let var = amplitudes.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
                / (amplitudes.len() as f64 - 1.0);
            DistfitStudyRow {
                n_shots: n,
                repeats,
                mean_amplitude: m,
                std_amplitude: var.sqrt(),
            }
        })
        .collect()
}

/// Sampled calibration histograms: bright shots at the bright mean, dark
/// reference at the background mean (detection light off), as raw counts.
pub fn sample_calibration(
    params: &DetectionParams,
    n_each: u64,
    seed: u64,
) -> (Vec<u64>, Vec<u64>) {
    let single = params.with_subbins(params.detect_time, 1);
    let sample_hist = |mean: f64, salt: u64| {
        let sub_seed = derive_seed(seed, salt);
        let mut hist = vec![0u64; 1];
        for i in 0..n_each {
            let mut rng = shot_rng(sub_seed, i);
            let k = sample_poisson(&mut rng, mean) as usize;
            if k >= hist.len() {
                hist.resize(k + 1, 0);
            }
            hist[k] += 1;
        }
        hist
    };
    let bright = sample_hist(crate::stats::mean_bright(&single), 11);
    let dark = sample_hist(crate::stats::mean_background(&single), 12);
    (bright, dark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean_bright, mean_dark, regularized_gamma_pair};
    use crate::theory;
    use approx::assert_abs_diff_eq;

    fn paper_params() -> DetectionParams {
        DetectionParams::new(146.3e3, 2.9e3, 61e-6, 10e-6, 0, 0.02, 2e-6, 5).unwrap()
    }

    fn binomial_sigma(p: f64, n: f64) -> f64 {
        (p * (1.0 - p) / n).sqrt().max(1e-12)
    }

    #[test]
    fn bright_sample_mean_matches_analytic() {
        let params = paper_params();
        let n = 1_000_000u64;
        let total: u64 = par_map_shots(n, |i| {
            let mut rng = shot_rng(0xCAFE, i);
            sample_shot(QubitState::Bright, &params, &mut rng).total() as u64
        })
        .iter()
        .sum();
        let mean = total as f64 / n as f64;
        let expect = mean_bright(&params);
        // Poisson variance = mean.
        let tol = 3.0 * (expect / n as f64).sqrt();
        assert!((mean - expect).abs() < tol, "mean {mean} vs {expect}");
    }

    #[test]
    fn dark_sample_mean_matches_analytic() {
        let params = paper_params();
        let n = 1_000_000u64;
        let totals: Vec<u32> = par_map_shots(n, |i| {
            let mut rng = shot_rng(0xD00D, i);
            sample_shot(QubitState::Dark, &params, &mut rng).total()
        });
        let mean = totals.iter().map(|&t| t as f64).sum::<f64>() / n as f64;
        let expect = mean_dark(&params);
        let var = totals
            .iter()
            .map(|&t| (t as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let tol = 3.0 * (var / n as f64).sqrt();
        assert!((mean - expect).abs() < tol, "mean {mean} vs {expect}");
    }

    #[test]
    fn dark_without_depumping_is_poissonian() {
        // Chi-square goodness of fit against Poisson(background mean).
        let params = paper_params()
            .with_decay_time(f64::INFINITY)
            .with_detect_time(10e-6)
            .with_subbins(2e-6, 5);
        let n = 200_000u64;
        let mut hist = vec![0u64; 1];
        for i in 0..n {
            let mut rng = shot_rng(0xBEEF, i);
            let k = sample_shot(QubitState::Dark, &params, &mut rng).total() as usize;
            if k >= hist.len() {
                hist.resize(k + 1, 0);
            }
            hist[k] += 1;
        }
        let mean = crate::stats::mean_background(&params);
        // Pool bins with expectation below 5.
        let mut stat = 0.0;
        let mut bins = 0usize;
        let mut pooled_obs = 0.0;
        let mut pooled_exp = 0.0;
        for k in 0..hist.len().max(10) {
            let expect = n as f64 * crate::stats::poisson_pmf_raw(k as u32, mean);
            let obs = hist.get(k).copied().unwrap_or(0) as f64;
            if expect >= 5.0 {
                stat += (obs - expect).powi(2) / expect;
                bins += 1;
            } else {
                pooled_obs += obs;
                pooled_exp += expect;
            }
        }
        if pooled_exp > 0.0 {
            stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
            bins += 1;
        }
        let dof = (bins - 1) as f64;
        let (_, q) = regularized_gamma_pair(dof / 2.0, stat / 2.0).unwrap();
        assert!(q > 0.01, "chi-square p-value {q} too small (stat {stat})");
    }

    #[test]
    fn spin_flip_probabilities() {
        let n = 1_000_000u64;
        let count_flips = |eps: f64, seed: u64| -> u64 {
            par_map_shots(n, |i| {
                let mut rng = shot_rng(seed, i);
                u64::from(apply_spin_flip(QubitState::Dark, eps, &mut rng) == QubitState::Bright)
            })
            .iter()
            .sum()
        };
        assert_eq!(count_flips(0.0, 1), n);
        assert_eq!(count_flips(1.0, 2), 0);
        let flips = count_flips(0.02, 3) as f64 / n as f64;
        let tol = 3.0 * binomial_sigma(0.98, n as f64);
        assert!((flips - 0.98).abs() < tol, "flip fraction {flips}");
    }

    #[test]
    fn pi_sequence_perfect_separation_never_discards() {
        // Huge bright mean, zero background, no depumping, perfect flips.
        let params = DetectionParams::integrated(4e6, 0.0, f64::INFINITY, 10e-6, 0, 0.0).unwrap();
        let cfg = SimConfig::new(params, 20_000, 42);
        let stats = measure_pi_stats(&cfg);
        assert_eq!(stats.err_bright, 0.0);
        assert_eq!(stats.err_dark, 0.0);
        assert_eq!(stats.retained_bright, 1.0);
        assert_eq!(stats.retained_dark, 1.0);
    }

    #[test]
    fn pi_sequence_matches_closed_forms() {
        let params = paper_params();
        let cfg = SimConfig::new(params, 200_000, 0xCAFE);
        let stats = measure_pi_stats(&cfg);
        let n = cfg.n_shots as f64;
        let expect_dark = theory::pi_error_dark(&params);
        let expect_bright = theory::pi_error_bright(&params);
        assert!(
            (stats.err_dark - expect_dark).abs() < 3.0 * binomial_sigma(expect_dark, n),
            "dark {} vs {}",
            stats.err_dark,
            expect_dark
        );
        assert!(
            (stats.err_bright - expect_bright).abs() < 3.0 * binomial_sigma(expect_bright, n),
            "bright {} vs {}",
            stats.err_bright,
            expect_bright
        );
    }

    #[test]
    fn pi_retained_matches_formula_without_depumping() {
        let params = paper_params().with_decay_time(f64::INFINITY);
        let mut cfg = SimConfig::new(params, 200_000, 7);
        cfg.spinflip_enabled = false;
        let stats = measure_pi_stats(&cfg);
        let expect = theory::pi_retained_fraction(&params);
        let tol = 3.0 * binomial_sigma(expect, cfg.n_shots as f64);
        assert!((stats.retained() - expect).abs() < tol);
    }

    #[test]
    fn power_scaling_examples() {
        let p = paper_params();
        let same = power_scaled_params(&p, 0.0, PowerLaw::Saturation);
        assert_eq!(same, p);
        // Saturation ceiling.
        let high = power_scaled_params(&p, 60.0, PowerLaw::Saturation);
        assert_abs_diff_eq!(
            high.rate_bright,
            2.0 * p.rate_bright,
            epsilon = 0.01 * p.rate_bright
        );
        // -3 dB: s = 0.50119, bright factor 2s/(1+s) = 0.66772.
        let low = power_scaled_params(&p, -3.0, PowerLaw::Saturation);
        assert_abs_diff_eq!(
            low.rate_bright / p.rate_bright,
            0.6677211508337559,
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(
            low.rate_background / p.rate_background,
            0.5011872336272722,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            low.decay_time,
            p.decay_time / 0.5011872336272722,
            epsilon = 1e-12
        );
        // Linear alternative.
        let lin = power_scaled_params(&p, -3.0, PowerLaw::Linear);
        assert_abs_diff_eq!(
            lin.rate_bright / p.rate_bright,
            0.5011872336272722,
            epsilon = 1e-6
        );
    }

    #[test]
    fn streams_are_deterministic_and_independent() {
        let params = paper_params();
        let mut a = shot_rng(1, 5);
        let mut b = shot_rng(1, 5);
        let s1 = sample_shot(QubitState::Dark, &params, &mut a);
        let s2 = sample_shot(QubitState::Dark, &params, &mut b);
        assert_eq!(s1, s2);
        let mut c = shot_rng(1, 6);
        let s3 = sample_shot(QubitState::Dark, &params, &mut c);
        // Different streams almost surely differ somewhere in the draw; only
        // require they are independent objects, not equal series every time.
        let mut d = shot_rng(2, 5);
        let s4 = sample_shot(QubitState::Dark, &params, &mut d);
        assert!(s1 != s3 || s1 != s4);
    }

    #[test]
    fn analyze_point_is_thread_invariant() {
        let cfg = SimConfig::new(paper_params(), 20_000, 0xCAFE);
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| analyze_point(&cfg, 0.5, 0))
        };
        let single = run_with(1);
        let multi = run_with(4);
        assert_eq!(single, multi);
    }

    #[test]
    fn rabi_scan_endpoints_with_clean_separation() {
        // Well-separated states, no depumping, perfect flips: every scheme
        // reads amplitude ~1 at t = 0 and ~0 at a pi pulse.
        let params = DetectionParams::new(2e6, 1e3, f64::INFINITY, 10e-6, 3, 0.0, 2e-6, 5).unwrap();
        let omega = 2.0 * std::f64::consts::PI * 25e3;
        let times = [0.0, std::f64::consts::PI / omega];
        let cfg = SimConfig::new(params, 4000, 11);
        let points = simulate_rabi_scan(omega, &times, &cfg);
        assert!((points[0].true_bright_prob - 1.0).abs() < 1e-12);
        assert!(points[1].true_bright_prob < 1e-9);
        for scheme in Scheme::ALL {
            let start = points[0].estimates[&scheme].amplitude;
            let half = points[1].estimates[&scheme].amplitude;
            assert!(start > 0.99, "{scheme:?} at t=0: {start}");
            assert!(half < 0.01, "{scheme:?} at pi pulse: {half}");
        }
    }

    #[test]
    fn power_scan_threshold_monotone_pi_flat() {
        // More light turns dark-state shots into false brights, so the
        // threshold amplitude estimate rises monotonically with power, while
        // the pi estimate drifts less than the projection-noise band of the
        // 750-shot protocol.
        const SHOTS: u64 = 20_000;
        let mut threshold_amps = Vec::new();
        let mut pi_points = Vec::new();
        for i in 0..=10 {
            let db = -5.0 + i as f64;
            let mut cfg = SimConfig::new(paper_params(), SHOTS, 0xCAFE);
            cfg.power_offset_db = db;
            let est = analyze_point(&cfg, 0.5, (i as u64) << 32);
            threshold_amps.push(est[&Scheme::Threshold].amplitude);
            pi_points.push(est[&Scheme::Pi]);
        }
        for pair in threshold_amps.windows(2) {
            assert!(
                pair[1] >= pair[0] - 2e-3,
                "threshold amplitude must rise with power: {threshold_amps:?}"
            );
        }
        let center = pi_points[5];
        for p in &pi_points {
            let band = crate::theory::projection_noise_halfwidth(
                0.5,
                750.0 * p.retained_fraction.max(0.01),
            )
            .unwrap();
            assert!(
                (p.amplitude - center.amplitude).abs() <= band,
                "pi drift {} exceeds the experimental band {band}",
                (p.amplitude - center.amplitude).abs()
            );
        }
    }

    #[test]
    fn attach_outcomes_fills_schemes() {
        let params = paper_params();
        let mut rng = shot_rng(9, 0);
        let mut record = sample_shot(QubitState::Bright, &params, &mut rng);
        attach_outcomes(&mut record, &params);
        assert!(record.outcomes.contains_key(&Scheme::Threshold));
        let bay = record.outcomes.get(&Scheme::Bayesian).unwrap();
        assert!(bay.posterior_error.is_some());
    }

    #[test]
    fn sampled_calibration_means_match() {
        let params = paper_params();
        let (bright, dark) = sample_calibration(&params, 100_000, 3);
        let mean = |hist: &[u64]| {
            let n: u64 = hist.iter().sum();
            hist.iter()
                .enumerate()
                .map(|(k, &c)| k as f64 * c as f64)
                .sum::<f64>()
                / n as f64
        };
        let mb = mean(&bright);
        let md = mean(&dark);
        assert!((mb - 1.463).abs() < 3.0 * (1.463f64 / 1e5).sqrt());
        assert!((md - 0.029).abs() < 3.0 * (0.029f64 / 1e5).sqrt());
    }
}
