//! Monte Carlo validation of the closed-form variances: per-target error
//! samples against analytic standard deviations, determinism of the
//! counter-derived noise streams, and the report emitters.

use dtdoa_core::montecarlo::{
    anchor_budget, emit_offset_family_csv, emit_offset_family_svg, emit_error_histogram_csv, emit_error_histogram_svg, emit_target_csv,
    epsilon_pair_analytic, epsilon_pair_samples, run_mc, target_samples, McConfig, McTarget,
    NoiseFamily, DEFAULT_NOISE_BOUND,
};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn analytic_stds_match_gaussian_monte_carlo() {
    let cfg = McConfig { noise: NoiseFamily::Gaussian, ..McConfig::default() };
    for target in McTarget::ALL {
        let result = run_mc(&cfg, target).unwrap();
        assert_eq!(result.stats.len(), cfg.anchors);
        assert_eq!(result.redraws, 0);
        // The deep compositions lean on more linearization steps, so they
        // get the looser gate.
        let gate = match target {
            McTarget::Phi | McTarget::Lambda => 10.0,
            _ => 5.0,
        };
        for s in &result.stats {
            assert!(
                s.rel_err_std_pct < gate,
                "{} anchor {}: std mismatch {:.2}% exceeds {gate}%",
                target.name(),
                s.anchor,
                s.rel_err_std_pct
            );
            // Estimators are unbiased: the standardized mean stays within
            // three standard errors.
            let se_pct = 300.0 / (cfg.trials as f64).sqrt();
            assert!(
                s.rel_err_mean_pct < se_pct,
                "{} anchor {}: |mean| {:.2}% of sigma exceeds {se_pct:.2}%",
                target.name(),
                s.anchor,
                s.rel_err_mean_pct
            );
        }
    }
}

#[test]
fn analytic_std_matches_uniform_monte_carlo_for_the_observable() {
    let cfg = McConfig { noise: NoiseFamily::Uniform, ..McConfig::default() };
    let result = run_mc(&cfg, McTarget::Lambda).unwrap();
    for s in &result.stats {
        assert!(
            s.rel_err_std_pct < 20.0,
            "anchor {}: uniform-noise std mismatch {:.2}%",
            s.anchor,
            s.rel_err_std_pct
        );
    }
}

#[test]
fn conversion_error_covariance_matches_analytic() {
    let cfg = McConfig::default();
    for anchor in [0, 3, 9] {
        let pairs = epsilon_pair_samples(&cfg, anchor).unwrap();
        assert_eq!(pairs.len(), cfg.trials);
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (mx, _) = mean_std(&xs);
        let (my, _) = mean_std(&ys);
        let cov = pairs
            .iter()
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / (pairs.len() - 1) as f64;
        let analytic = epsilon_pair_analytic(&cfg, anchor).unwrap();
        let rel = (analytic - cov).abs() / cov.abs();
        assert!(
            rel < 0.10,
            "anchor {anchor}: covariance off by {:.2}%",
            rel * 100.0
        );
    }
}

#[test]
fn zero_noise_collapses_every_sample_to_zero() {
    let cfg = McConfig { trials: 200, anchors: 2, noise_bound: 0.0, ..McConfig::default() };
    for target in McTarget::ALL {
        let result = run_mc(&cfg, target).unwrap();
        for s in &result.stats {
            assert_eq!(s.empirical_std, 0.0);
            assert_eq!(s.empirical_mean, 0.0);
            assert_eq!(s.analytic_std, 0.0);
        }
        for xs in &result.samples {
            assert!(xs.iter().all(|x| *x == 0.0));
        }
    }
}

#[test]
fn identical_configs_reproduce_bitwise() {
    let cfg = McConfig { trials: 500, anchors: 3, ..McConfig::default() };
    let a = run_mc(&cfg, McTarget::Lambda).unwrap();
    let b = run_mc(&cfg, McTarget::Lambda).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trial_streams_are_independent_of_the_trial_count() {
    // Trial k draws from its own counter-derived stream, so truncating the
    // run leaves earlier samples untouched.
    let long = McConfig { trials: 1000, anchors: 2, ..McConfig::default() };
    let short = McConfig { trials: 400, ..long.clone() };
    let full = run_mc(&long, McTarget::Gamma).unwrap();
    let cut = run_mc(&short, McTarget::Gamma).unwrap();
    for (f, c) in full.samples.iter().zip(&cut.samples) {
        assert_eq!(&f[..400], &c[..]);
    }
}

#[test]
fn half_sample_means_agree_within_standard_errors() {
    let cfg = McConfig { anchors: 1, ..McConfig::default() };
    let xs = target_samples(&cfg, McTarget::Lambda, 0).unwrap();
    let (mean, std) = mean_std(&xs);
    let half = xs.len() / 2;
    let (m1, _) = mean_std(&xs[..half]);
    let (m2, _) = mean_std(&xs[half..]);
    let se = std / (half as f64).sqrt();
    assert!((m1 - mean).abs() < 3.0 * se);
    assert!((m2 - mean).abs() < 3.0 * se);
}

#[test]
fn config_validation() {
    let ok = McConfig::default();
    assert!(ok.validate().is_ok());
    assert!(McConfig { trials: 99, ..ok.clone() }.validate().is_err());
    assert!(McConfig { anchors: 0, ..ok.clone() }.validate().is_err());
    assert!(McConfig { noise_bound: -1.0, ..ok.clone() }.validate().is_err());
    assert!(McConfig { pair_gap_range: (1e-2, 1e-4), ..ok.clone() }.validate().is_err());
    assert!(McConfig { offset_range: (1e-3, -1e-3), ..ok.clone() }.validate().is_err());
}

#[test]
fn default_noise_bound_matches_uwb_tick_scale() {
    assert_eq!(DEFAULT_NOISE_BOUND, 15.65e-12);
    let cfg = McConfig::default();
    // Uniform family: sigma is the bound over sqrt(3).
    assert!((cfg.sigma_ts() - DEFAULT_NOISE_BOUND / 3f64.sqrt()).abs() < 1e-24);
}

#[test]
fn anchor_budgets_are_reproducible_and_in_envelope() {
    let cfg = McConfig::default();
    let (b1, t_i, t_m) = anchor_budget(&cfg, 4).unwrap();
    let (b2, _, _) = anchor_budget(&cfg, 4).unwrap();
    assert_eq!(b1, b2);
    assert!(t_i > t_m);
    assert!((b1.master_rate - 1.0).abs() <= 1e-3);
    assert!((b1.anchor_rate - 1.0).abs() <= 1e-3);
    assert!(b1.sync_gap > 0.0 && b1.pair_gap > 0.0);
}

#[test]
fn target_names_are_stable() {
    let names: Vec<&str> = McTarget::ALL.iter().map(|t| t.name()).collect();
    assert_eq!(
        names,
        ["gamma", "gamma-delayed", "gamma-bar", "epsilon", "xi", "phi", "lambda"]
    );
}

#[test]
fn csv_emitters_are_well_formed() {
    let cfg = McConfig { trials: 200, anchors: 2, ..McConfig::default() };
    let gamma = run_mc(&cfg, McTarget::Gamma).unwrap();
    let delayed = run_mc(&cfg, McTarget::GammaDelayed).unwrap();
    let bar = run_mc(&cfg, McTarget::GammaBar).unwrap();

    let csv = emit_target_csv(&cfg, &gamma);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "anchor,empirical_mean,empirical_std,analytic_std,rel_err_mean_pct,rel_err_std_pct"
    );
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), cfg.anchors);

    let table = emit_offset_family_csv(&cfg, &gamma, &delayed, &bar);
    let data_rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data_rows.len(), cfg.anchors);
    for row in data_rows {
        for cell in row.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert!(v >= 0.0, "error percentages are magnitudes");
        }
    }

    let svg = emit_offset_family_svg(&gamma, &delayed, &bar);
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn observable_histogram_emitters_cover_degenerate_runs() {
    let noisy = McConfig { trials: 300, anchors: 1, ..McConfig::default() };
    let silent_gaussian = McConfig {
        noise: NoiseFamily::Gaussian,
        noise_bound: 0.0,
        ..noisy.clone()
    };
    let silent_uniform = McConfig {
        noise: NoiseFamily::Uniform,
        noise_bound: 0.0,
        seed: 43,
        ..noisy.clone()
    };
    let g = run_mc(&silent_gaussian, McTarget::Lambda).unwrap();
    let u = run_mc(&silent_uniform, McTarget::Lambda).unwrap();

    // Every sample identical: the histogram degenerates to a single row.
    let csv = emit_error_histogram_csv(&silent_gaussian, &silent_uniform, &g, &u);
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 1);
    let cells: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(cells[2].parse::<usize>().unwrap(), 300);
    assert_eq!(cells[3].parse::<usize>().unwrap(), 300);

    let svg = emit_error_histogram_svg(&g, &u);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    // A noisy run spreads over many bins.
    let gn = run_mc(&noisy, McTarget::Lambda).unwrap();
    let un = run_mc(
        &McConfig { noise: NoiseFamily::Uniform, ..noisy.clone() },
        McTarget::Lambda,
    )
    .unwrap();
    let csv = emit_error_histogram_csv(&noisy, &noisy, &gn, &un);
    let rows = csv.lines().filter(|l| !l.starts_with('#')).skip(1).count();
    assert!(rows > 10);
}
