//! Reproduction harness: one named scenario per headline result, emitting
//! deterministic tables, plus the curve-fitting routines they rely on.

use thiserror::Error;

use crate::detectors::Scheme;
use crate::io::{Cell, Table};
use crate::montecarlo::{
    analyze_point, derive_seed, distfit_error_study, measure_paired_errors, sample_shot, shot_rng,
    simulate_rabi_scan, QubitState, SimConfig,
};
use crate::stats::{DetectionParams, StatsError};
use crate::theory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid fit input: {0}")]
    InvalidFitInput(&'static str),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Everything a scenario needs: base parameters and the root seed.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioCtx {
    pub params: DetectionParams,
    pub seed: u64,
}

/// A named, registered scenario.
pub struct ScenarioDef {
    pub name: &'static str,
    pub description: &'static str,
    run: fn(&ScenarioCtx) -> Result<Vec<Table>, ExperimentError>,
}

/// All registered scenarios, in a fixed order.
pub fn registry() -> &'static [ScenarioDef] {
    &[
        ScenarioDef {
            name: "error_maps",
            description: "threshold and pi average-error grids over detection time and threshold, with retained statistics",
            run: scenario_error_maps,
        },
        ScenarioDef {
            name: "bias_vs_decay",
            description: "threshold and pi assignment bias as a function of the depumping decay time",
            run: scenario_bias_vs_decay,
        },
        ScenarioDef {
            name: "error_vs_time",
            description: "per-scheme average error versus detection time with projection-noise bands",
            run: scenario_error_vs_time,
        },
        ScenarioDef {
            name: "power_scan",
            description: "estimated amplitude of an equal superposition under detection-power offsets, with central slopes",
            run: scenario_power_scan,
        },
        ScenarioDef {
            name: "rabi_contrast",
            description: "fitted Rabi-oscillation contrast per scheme as a function of the chosen threshold",
            run: scenario_rabi_contrast,
        },
        ScenarioDef {
            name: "depumping_curve",
            description: "mean fluorescence versus detection time with a decay-time recovery fit",
            run: scenario_depumping_curve,
        },
    ]
}

/// Run a scenario by name, prepending a provenance table.
pub fn run_scenario(name: &str, ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let def = registry()
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| ExperimentError::UnknownScenario(name.to_string()))?;
    let mut tables = vec![provenance_table(def.name, ctx)];
    tables.extend((def.run)(ctx)?);
    Ok(tables)
}

fn provenance_table(name: &str, ctx: &ScenarioCtx) -> Table {
    let mut t = Table::new("provenance", vec!["key", "value"]);
    let mut push = |key: &str, value: String| {
        t.push_row(vec![key.into(), Cell::Text(value)]);
    };
    push("scenario", name.to_string());
    push("seed", ctx.seed.to_string());
    push("crate_version", env!("CARGO_PKG_VERSION").to_string());
    push(
        "rate_bright_khz",
        format!("{}", ctx.params.rate_bright / 1e3),
    );
    push(
        "rate_background_khz",
        format!("{}", ctx.params.rate_background / 1e3),
    );
    push("decay_time_us", format!("{}", ctx.params.decay_time * 1e6));
    push(
        "detect_time_us",
        format!("{}", ctx.params.detect_time * 1e6),
    );
    push("threshold", ctx.params.threshold.to_string());
    push("spinflip_error", format!("{}", ctx.params.spinflip_error));
    push(
        "subbin_time_us",
        format!("{}", ctx.params.subbin_time * 1e6),
    );
    push("subbin_count", ctx.params.subbin_count.to_string());
    t
}

// ---------------------------------------------------------------------------
// error_maps
// ---------------------------------------------------------------------------

fn scenario_error_maps(ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let mut grid = Table::new(
        "grid",
        vec![
            "tau_us",
            "sigma",
            "threshold_avg_error",
            "pi_avg_error",
            "retained_fraction",
        ],
    );
    for tau_us in 1..=100u32 {
        for sigma in 0..=15u32 {
            let p = ctx
                .params
                .with_detect_time(tau_us as f64 / 1e6)
                .with_threshold(sigma);
            grid.push_row(vec![
                Cell::Float(tau_us as f64),
                Cell::Int(sigma as i64),
                Cell::Float(theory::threshold_avg_error(&p).avg_error),
                Cell::Float(theory::pi_avg_error(&p).avg_error),
                Cell::Float(theory::pi_retained_fraction(&p)),
            ]);
        }
    }
    Ok(vec![grid])
}

// ---------------------------------------------------------------------------
// bias_vs_decay
// ---------------------------------------------------------------------------

fn scenario_bias_vs_decay(ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let base = ctx.params.with_detect_time(10e-6).with_threshold(0);
    let mut decay_times_us: Vec<f64> = (0..=60)
        .map(|i| 10f64.powf(3.0 * i as f64 / 60.0))
        .collect();
    decay_times_us.push(60.0);
    decay_times_us.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut curve = Table::new(
        "curve",
        vec!["decay_time_us", "bias_threshold", "bias_pi", "marker"],
    );
    for t_us in decay_times_us {
        let p = base.with_decay_time(t_us / 1e6);
        curve.push_row(vec![
            Cell::Float(t_us),
            Cell::Float(theory::bias_threshold(&p)),
            Cell::Float(theory::bias_pi(&p)),
            Cell::Int(i64::from(t_us == 60.0)),
        ]);
    }
    Ok(vec![curve])
}

// ---------------------------------------------------------------------------
// error_vs_time
// ---------------------------------------------------------------------------

const ERROR_VS_TIME_EVENTS_PER_STATE: u64 = 1000;
const REFERENCE_ENSEMBLE: f64 = 1000.0;
const BAYES_SUBBIN_TIME: f64 = 2e-6;

fn scenario_error_vs_time(ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let mut table = Table::new(
        "curves",
        vec![
            "tau_us",
            "scheme",
            "source",
            "avg_error",
            "err_bright",
            "err_dark",
            "retained_fraction",
            "band_halfwidth",
        ],
    );
    let band = |retained: f64| {
        theory::projection_noise_halfwidth(0.5, (REFERENCE_ENSEMBLE * retained).max(1.0))
            .expect("valid band")
    };
    for (idx, tau_us) in (2..=50u32).step_by(2).enumerate() {
        let n_bins = tau_us / 2;
        let p = ctx
            .params
            .with_threshold(0)
            .with_subbins(BAYES_SUBBIN_TIME, n_bins);
        let th = theory::threshold_avg_error(&p);
        table.push_row(vec![
            Cell::Float(tau_us as f64),
            "threshold".into(),
            "closed_form".into(),
            Cell::Float(th.avg_error),
            Cell::Float(th.err_bright),
            Cell::Float(th.err_dark),
            Cell::Float(1.0),
            Cell::Float(band(1.0)),
        ]);
        let pi = theory::pi_avg_error(&p);
        table.push_row(vec![
            Cell::Float(tau_us as f64),
            "pi".into(),
            "closed_form".into(),
            Cell::Float(pi.avg_error),
            Cell::Float(pi.err_bright),
            Cell::Float(pi.err_dark),
            Cell::Float(pi.retained_fraction),
            Cell::Float(band(pi.retained_fraction)),
        ]);

        let cfg = SimConfig::new(
            p,
            ERROR_VS_TIME_EVENTS_PER_STATE,
            derive_seed(ctx.seed, 0x0E77),
        );
        let mc = measure_paired_errors(&cfg, idx as u64);
        for scheme in [Scheme::Bayesian, Scheme::PiBayesian] {
            let e = mc[&scheme];
            table.push_row(vec![
                Cell::Float(tau_us as f64),
                scheme.name().into(),
                "monte_carlo".into(),
                Cell::Float(e.avg_error()),
                Cell::Float(e.err_bright),
                Cell::Float(e.err_dark),
                Cell::Float(e.retained_fraction),
                Cell::Float(band(e.retained_fraction)),
            ]);
        }
    }
    Ok(vec![table])
}

// ---------------------------------------------------------------------------
// power_scan
// ---------------------------------------------------------------------------

const POWER_SCAN_SHOTS: u64 = 750;

fn scenario_power_scan(ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let mut scan = Table::new(
        "scan",
        vec![
            "offset_db",
            "scheme",
            "amplitude",
            "retained_fraction",
            "band_halfwidth",
        ],
    );
    let offsets: Vec<f64> = (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect();
    let mut by_scheme: std::collections::BTreeMap<Scheme, Vec<(f64, f64)>> = Default::default();
    for (i, &db) in offsets.iter().enumerate() {
        let mut cfg = SimConfig::new(ctx.params, POWER_SCAN_SHOTS, derive_seed(ctx.seed, 0x5037));
        cfg.power_offset_db = db;
        let estimates = analyze_point(&cfg, 0.5, (i as u64) << 32);
        for scheme in Scheme::ALL {
            let e = estimates[&scheme];
            let band = theory::projection_noise_halfwidth(
                0.5,
                (POWER_SCAN_SHOTS as f64 * e.retained_fraction).max(1.0),
            )
            .expect("valid band");
            scan.push_row(vec![
                Cell::Float(db),
                scheme.name().into(),
                Cell::Float(e.amplitude),
                Cell::Float(e.retained_fraction),
                Cell::Float(band),
            ]);
            if e.amplitude.is_finite() {
                by_scheme.entry(scheme).or_default().push((db, e.amplitude));
            }
        }
    }

    let mut slopes = Table::new("slopes", vec!["scheme", "slope_per_db", "intercept"]);
    for scheme in Scheme::ALL {
        let points: Vec<(f64, f64)> = by_scheme
            .get(&scheme)
            .map(|v| {
                v.iter()
                    .filter(|(db, _)| db.abs() <= 1.0 + 1e-9)
                    .copied()
                    .collect()
            })
            .unwrap_or_default();
        let (slope, intercept) = linear_fit(&points);
        slopes.push_row(vec![
            scheme.name().into(),
            Cell::Float(slope),
            Cell::Float(intercept),
        ]);
    }
    Ok(vec![scan, slopes])
}

/// Unweighted straight-line fit `y = slope x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (f64::NAN, f64::NAN);
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

// ---------------------------------------------------------------------------
// rabi_contrast
// ---------------------------------------------------------------------------

const RABI_SHOTS: u64 = 750;
const RABI_OMEGA: f64 = 2.0 * std::f64::consts::PI * 25e3;

fn rabi_reference_params(sigma: u32) -> DetectionParams {
    // Bright/background rates of the high-fluorescence reference data set.
    DetectionParams::new(249e3, 11e3, 61e-6, 10e-6, sigma, 0.02, 2e-6, 5)
        .expect("reference parameters are valid")
}

fn scenario_rabi_contrast(ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let times: Vec<f64> = (0..25).map(|i| i as f64 * 2.5e-6).collect();
    let mut scan = Table::new(
        "scan",
        vec![
            "sigma",
            "time_us",
            "scheme",
            "amplitude",
            "retained_fraction",
        ],
    );
    let mut contrast = Table::new(
        "contrast",
        vec![
            "sigma",
            "scheme",
            "contrast",
            "rabi_freq_rad_s",
            "offset",
            "residual",
        ],
    );
    let mut identity = Table::new(
        "threshold_identity",
        vec!["sigma", "threshold_contrast", "p_pi_stat", "gap"],
    );

    for sigma in 0..=5u32 {
        let params = rabi_reference_params(sigma);
        // Same seed for every sigma: the identical photon record is
        // re-analyzed under each threshold, as in a real data set.
        let cfg = SimConfig::new(params, RABI_SHOTS, derive_seed(ctx.seed, 0x4AB1));
        let points = simulate_rabi_scan(RABI_OMEGA, &times, &cfg);
        for scheme in Scheme::ALL {
            let series: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|pt| {
                    let e = pt.estimates[&scheme];
                    e.amplitude.is_finite().then_some((pt.time, e.amplitude))
                })
                .collect();
            for pt in &points {
                let e = pt.estimates[&scheme];
                scan.push_row(vec![
                    Cell::Int(sigma as i64),
                    Cell::Float(pt.time * 1e6),
                    scheme.name().into(),
                    Cell::Float(e.amplitude),
                    Cell::Float(e.retained_fraction),
                ]);
            }
            let fit = fit_rabi_curve(
                &series.iter().map(|p| p.0).collect::<Vec<_>>(),
                &series.iter().map(|p| p.1).collect::<Vec<_>>(),
            )?;
            contrast.push_row(vec![
                Cell::Int(sigma as i64),
                scheme.name().into(),
                Cell::Float(fit.contrast),
                Cell::Float(fit.rabi_freq),
                Cell::Float(fit.offset),
                Cell::Float(fit.residual),
            ]);
            if scheme == Scheme::Threshold {
                let p_stat = theory::pi_retained_fraction(&params);
                identity.push_row(vec![
                    Cell::Int(sigma as i64),
                    Cell::Float(fit.contrast),
                    Cell::Float(p_stat),
                    Cell::Float((fit.contrast - p_stat).abs()),
                ]);
            }
        }
    }
    Ok(vec![scan, contrast, identity])
}

/// Result of the cosine contrast fit `y(t) = offset + (C/2) cos(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastFit {
    pub contrast: f64,
    pub rabi_freq: f64,
    pub offset: f64,
    /// Sum of squared residuals; `+inf` flags a failed fit.
    pub residual: f64,
}

impl ContrastFit {
    /// Contrast may slightly overshoot 1 on noisy data; above that it is
    /// flagged rather than clamped.
    pub fn is_overshoot(&self) -> bool {
        self.contrast > 1.0
    }
}

/// Least-squares cosine fit with a 1-D frequency search.
///
/// Needs at least 8 points spanning at least one oscillation period.
pub fn fit_rabi_curve(times: &[f64], amplitudes: &[f64]) -> Result<ContrastFit, ExperimentError> {
    if times.len() != amplitudes.len() {
        return Err(ExperimentError::InvalidFitInput(
            "times and amplitudes must have equal length",
        ));
    }
    if times.len() < 8 {
        return Err(ExperimentError::InvalidFitInput(
            "need at least 8 points to fit",
        ));
    }
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if span.is_nan() || span <= 0.0 {
        return Err(ExperimentError::InvalidFitInput(
            "times must span a positive interval",
        ));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);

    // Frequency bracket: at least half a period over the span, at most the
    // Nyquist rate of the densest sampling.
    let omega_lo = std::f64::consts::PI / span;
    let omega_hi = std::f64::consts::PI / min_gap;
    let sse_at = |omega: f64| cosine_lstsq(times, amplitudes, omega).2;

    const GRID: usize = 800;
    let mut best_omega = omega_lo;
    let mut best_sse = f64::INFINITY;
    for i in 0..=GRID {
        let omega = omega_lo + (omega_hi - omega_lo) * i as f64 / GRID as f64;
        let sse = sse_at(omega);
        if sse < best_sse {
            best_sse = sse;
            best_omega = omega;
        }
    }
    if !best_sse.is_finite() {
        return Ok(ContrastFit {
            contrast: 0.0,
            rabi_freq: 0.0,
            offset: amplitudes.iter().sum::<f64>() / amplitudes.len() as f64,
            residual: f64::INFINITY,
        });
    }
    let step = (omega_hi - omega_lo) / GRID as f64;
    let omega = golden_minimize(
        sse_at,
        (best_omega - step).max(omega_lo),
        (best_omega + step).min(omega_hi),
        96,
    );
    let (offset, half_contrast, residual) = cosine_lstsq(times, amplitudes, omega);
    Ok(ContrastFit {
        contrast: 2.0 * half_contrast,
        rabi_freq: omega,
        offset,
        residual,
    })
}

/// Linear part of the cosine fit at fixed frequency: returns
/// (offset, half-contrast, sse).
fn cosine_lstsq(times: &[f64], amplitudes: &[f64], omega: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let mut sc = 0.0;
    let mut scc = 0.0;
    let mut sy = 0.0;
    let mut scy = 0.0;
    for (&t, &y) in times.iter().zip(amplitudes) {
        let c = (omega * t).cos();
        sc += c;
        scc += c * c;
        sy += y;
        scy += c * y;
    }
    let det = n * scc - sc * sc;
    if det.abs() < 1e-12 * n * n {
        return (sy / n, 0.0, f64::INFINITY);
    }
    let half = (n * scy - sc * sy) / det;
    let offset = (sy - half * sc) / n;
    let sse: f64 = times
        .iter()
        .zip(amplitudes)
        .map(|(&t, &y)| {
            let r = y - offset - half * (omega * t).cos();
            r * r
        })
        .sum();
    (offset, half, sse)
}

fn golden_minimize(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// depumping_curve
// ---------------------------------------------------------------------------

const DEPUMP_SHOTS: u64 = 10_000;

fn scenario_depumping_curve(ctx: &ScenarioCtx) -> Result<Vec<Table>, ExperimentError> {
    let taus_us: Vec<f64> = (0..=30).map(|i| 1.0 + 299.0 * i as f64 / 30.0).collect();
    let seed = derive_seed(ctx.seed, 0xDE9);

    let mut curve = Table::new(
        "curve",
        vec!["tau_us", "bright_mean_counts", "dark_mean_counts"],
    );
    let mut taus_s = Vec::new();
    let mut bright_means = Vec::new();
    let mut dark_means = Vec::new();
    for (i, &tau_us) in taus_us.iter().enumerate() {
        let p = ctx.params.with_subbins(tau_us / 1e6, 1);
        let mean_of = |state: QubitState, salt: u64| -> f64 {
            let sub_seed = derive_seed(seed, salt ^ (i as u64) << 8);
            let total: u64 = (0..DEPUMP_SHOTS)
                .map(|j| {
                    let mut rng = shot_rng(sub_seed, j);
                    sample_shot(state, &p, &mut rng).total() as u64
                })
                .sum();
            total as f64 / DEPUMP_SHOTS as f64
        };
        let bright = mean_of(QubitState::Bright, 1);
        let dark = mean_of(QubitState::Dark, 2);
        curve.push_row(vec![
            Cell::Float(tau_us),
            Cell::Float(bright),
            Cell::Float(dark),
        ]);
        taus_s.push(tau_us / 1e6);
        bright_means.push(bright);
        dark_means.push(dark);
    }

    let dark_fit = fit_depumping_curve(&taus_s, &dark_means)?;
    let bright_points: Vec<(f64, f64)> = taus_s
        .iter()
        .zip(&bright_means)
        .map(|(&t, &m)| (t, m))
        .collect();
    let (bright_slope, bright_intercept) = linear_fit(&bright_points);

    let mut fit = Table::new("fit", vec!["quantity", "fitted", "injected", "rel_error"]);
    let mut push = |name: &str, fitted: f64, injected: f64| {
        let rel = if injected != 0.0 {
            (fitted - injected).abs() / injected.abs()
        } else {
            f64::NAN
        };
        fit.push_row(vec![
            name.into(),
            Cell::Float(fitted),
            Cell::Float(injected),
            Cell::Float(rel),
        ]);
    };
    push(
        "decay_time_us",
        dark_fit.decay_time * 1e6,
        ctx.params.decay_time * 1e6,
    );
    push(
        "rate_bright_khz",
        dark_fit.rate_bright / 1e3,
        ctx.params.rate_bright / 1e3,
    );
    push(
        "rate_background_khz",
        dark_fit.rate_background / 1e3,
        ctx.params.rate_background / 1e3,
    );
    push(
        "bright_slope_khz",
        bright_slope / 1e3,
        ctx.params.rate_bright / 1e3,
    );
    push("bright_intercept_counts", bright_intercept, 0.0);
    Ok(vec![curve, fit])
}

/// Recovered parameters of the dark-fluorescence decay model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepumpFit {
    pub rate_bright: f64,
    pub rate_background: f64,
    pub decay_time: f64,
    pub residual: f64,
}

/// Fit mean dark counts vs detection time to the depumping fluorescence
/// model. Linear in the two rates at fixed decay time, so the decay time is
/// found by a 1-D search.
pub fn fit_depumping_curve(taus: &[f64], means: &[f64]) -> Result<DepumpFit, ExperimentError> {
    if taus.len() != means.len() || taus.len() < 4 {
        return Err(ExperimentError::InvalidFitInput(
            "need at least 4 (tau, mean) points",
        ));
    }
    // model: mean = A tau - B * T (1 - e^(-tau/T)), A = R_B, B = R_B - R_inf
    let sse_parts = |t_decay: f64| -> (f64, f64, f64) {
        let mut sxx = 0.0;
        let mut sxz = 0.0;
        let mut szz = 0.0;
        let mut sxy = 0.0;
        let mut szy = 0.0;
        for (&tau, &y) in taus.iter().zip(means) {
            let x = tau;
            let z = -t_decay * (1.0 - (-tau / t_decay).exp());
            sxx += x * x;
            sxz += x * z;
            szz += z * z;
            sxy += x * y;
            szy += z * y;
        }
        let det = sxx * szz - sxz * sxz;
        if det.abs() < 1e-300 {
            return (f64::NAN, f64::NAN, f64::INFINITY);
        }
        let a = (sxy * szz - szy * sxz) / det;
        let b = (sxx * szy - sxz * sxy) / det;
        let sse: f64 = taus
            .iter()
            .zip(means)
            .map(|(&tau, &y)| {
                let z = -t_decay * (1.0 - (-tau / t_decay).exp());
                let r = y - a * tau - b * z;
                r * r
            })
            .sum();
        (a, b, sse)
    };

    let t_lo: f64 = 1e-6;
    let t_hi: f64 = 1e-3;
    const GRID: usize = 400;
    let mut best_t = t_lo;
    let mut best_sse = f64::INFINITY;
    for i in 0..=GRID {
        let t = t_lo * (t_hi / t_lo).powf(i as f64 / GRID as f64);
        let (_, _, sse) = sse_parts(t);
        if sse < best_sse {
            best_sse = sse;
            best_t = t;
        }
    }
    let ratio = (t_hi / t_lo).powf(1.0 / GRID as f64);
    let t_decay = golden_minimize(
        |t| sse_parts(t).2,
        (best_t / ratio).max(t_lo),
        (best_t * ratio).min(t_hi),
        96,
    );
    let (a, b, residual) = sse_parts(t_decay);
    Ok(DepumpFit {
        rate_bright: a,
        rate_background: a - b,
        decay_time: t_decay,
        residual,
    })
}

/// Spread of the distribution-fit amplitude estimator versus ensemble size.
pub fn run_distfit_study(
    ctx: &ScenarioCtx,
    n_grid: &[u64],
    repeats: u32,
) -> Vec<crate::montecarlo::DistfitStudyRow> {
    // The study draws its shot counts from n_grid; the config's own count is
    // unused but must still satisfy the n_shots >= 1 invariant.
    let cfg = SimConfig::new(ctx.params, 1, derive_seed(ctx.seed, 0xD157));
    distfit_error_study(&cfg, n_grid, repeats)
}
