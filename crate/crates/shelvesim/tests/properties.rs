//! Property-based invariants across the library surface.

use proptest::prelude::*;

use shelvesim::detectors::{
    classify_bayesian, classify_bayesian_adaptive, classify_threshold, combine_pi, CalibrationPair,
    DetectionOutcome, ShotData, Verdict,
};
use shelvesim::io::{parse_config, serialize_config, Cell, RunConfig, Table};
use shelvesim::stats::{DetectionParams, PhotonDistribution};
use shelvesim::{dark_pmf, fit_distribution, poisson_cdf, regularized_gamma};

fn arb_params() -> impl Strategy<Value = DetectionParams> {
    (
        60e3..350e3f64,
        0.002..0.2f64,
        5e-6..300e-6f64,
        1e-6..60e-6f64,
        0u32..6,
        0.0..0.2f64,
    )
        .prop_map(
            |(rate_bright, bg_ratio, decay_time, detect_time, sigma, eps)| {
                DetectionParams::integrated(
                    rate_bright,
                    rate_bright * bg_ratio,
                    decay_time,
                    detect_time,
                    sigma,
                    eps,
                )
                .unwrap()
            },
        )
}

proptest! {
    #[test]
    fn poisson_pmf_normalizes(mean in 1e-3..50.0f64) {
        let dist = PhotonDistribution::poisson(mean).unwrap();
        let sum: f64 = dist.probabilities().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn regularized_gamma_partition(sigma in 0u32..=50, x in 1e-6..100.0f64) {
        let upper = regularized_gamma(sigma, x, shelvesim::GammaKind::Upper).unwrap();
        let lower = regularized_gamma(sigma, x, shelvesim::GammaKind::Lower).unwrap();
        prop_assert!((upper + lower - 1.0).abs() < 1e-12);
        // The Poisson cdf is exactly the upper function.
        prop_assert!((poisson_cdf(sigma, x).unwrap() - upper).abs() < 1e-15);
    }

    #[test]
    fn poisson_cdf_monotone_in_mean(sigma in 0u32..=10, mean in 0.01..30.0f64, bump in 0.01..5.0f64) {
        let lo = poisson_cdf(sigma, mean).unwrap();
        let hi = poisson_cdf(sigma, mean + bump).unwrap();
        prop_assert!(hi <= lo + 1e-14);
    }

    #[test]
    fn dark_zero_count_monotone_in_detect_time(p in arb_params(), stretch in 1.1..8.0f64) {
        let longer = p.with_subbins(p.detect_time * stretch, 1);
        prop_assert!(dark_pmf(0, &longer) < dark_pmf(0, &p) + 1e-12);
    }

    #[test]
    fn distribution_fit_recovers_exact_mixtures(
        bright_mean in 0.8..8.0f64,
        dark_mean in 0.0..0.3f64,
        amplitude in 0.0..1.0f64,
    ) {
        let bright = PhotonDistribution::poisson(bright_mean).unwrap();
        let dark = PhotonDistribution::poisson(dark_mean).unwrap();
        let calib = CalibrationPair::new(bright, dark).unwrap();
        let kmax = calib.bright_hist.support_max().max(calib.dark_hist.support_max());
        let mixed: Vec<f64> = (0..=kmax)
            .map(|k| amplitude * calib.bright_hist.pmf(k) + (1.0 - amplitude) * calib.dark_hist.pmf(k))
            .collect();
        let observed = PhotonDistribution::from_pmf(mixed).unwrap();
        let fitted = fit_distribution(&observed, &calib).unwrap();
        prop_assert!((fitted - amplitude).abs() < 1e-12);
    }

    #[test]
    fn pi_combination_partitions(first_bright in any::<bool>(), second_bright in any::<bool>()) {
        let outcome = |bright: bool| DetectionOutcome {
            state: if bright { Verdict::Bright } else { Verdict::Dark },
            posterior_error: None,
        };
        let combined = combine_pi(&outcome(first_bright), &outcome(second_bright)).unwrap();
        if first_bright == second_bright {
            prop_assert_eq!(combined.state, Verdict::Discarded);
        } else {
            prop_assert_eq!(combined.state, outcome(first_bright).state);
        }
    }

    #[test]
    fn single_bin_bayesian_is_a_count_threshold(p in arb_params()) {
        // The likelihood ratio is monotone in the count, so the decision must
        // partition counts at a single cut.
        let verdicts: Vec<Verdict> = (0..80)
            .map(|k| classify_bayesian(&[k], &p).state)
            .collect();
        let cut = verdicts.iter().position(|&v| v == Verdict::Bright);
        if let Some(cut) = cut {
            for (k, v) in verdicts.iter().enumerate() {
                let expect = if k < cut { Verdict::Dark } else { Verdict::Bright };
                prop_assert_eq!(*v, expect, "k = {}", k);
            }
            // Agreement with the integrated threshold rule at the induced cut.
            let induced_sigma = (cut - 1) as u32;
            for k in 0..80u32 {
                let thr = classify_threshold(&ShotData::new(vec![k]), induced_sigma).state;
                prop_assert_eq!(verdicts[k as usize], thr);
            }
        }
    }

    #[test]
    fn adaptive_equals_one_shot_at_zero_target(
        series in proptest::collection::vec(0u32..6, 5),
    ) {
        let p = DetectionParams::new(146.3e3, 2.9e3, 61e-6, 10e-6, 0, 0.02, 2e-6, 5).unwrap();
        let adaptive = classify_bayesian_adaptive(series.iter().copied(), &p, 0.0, 5);
        prop_assert_eq!(adaptive.bins_used, 5);
        prop_assert_eq!(adaptive.outcome, classify_bayesian(&series, &p));
    }

    #[test]
    fn csv_float_cells_round_trip(values in proptest::collection::vec(-1e12..1e12f64, 1..6)) {
        let mut table = Table::new("prop", vec!["value"]);
        for &v in &values {
            table.push_row(vec![Cell::Float(v)]);
        }
        let csv = table.to_csv_string().unwrap();
        let parsed: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|line| line.parse().unwrap())
            .collect();
        prop_assert_eq!(parsed, values);
    }

    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        detect_time_us in 1.0..100.0f64,
        threshold in 0i64..20,
        subbins in 1i64..20,
    ) {
        let mut config = RunConfig::default();
        config.run.seed = seed;
        config.params.detect_time_us = detect_time_us;
        config.params.threshold = threshold;
        config.params.subbin_count = subbins;
        config.params.subbin_time_us = detect_time_us / subbins as f64;
        let reparsed = parse_config(&serialize_config(&config)).unwrap();
        prop_assert_eq!(config, reparsed);
    }
}
