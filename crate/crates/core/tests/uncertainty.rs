//! Closed-form first-order variances for every estimation stage, from the
//! relative clock rate down to the range-difference observable.

use approx::assert_relative_eq;
use dtdoa_core::geometry::SPEED_OF_LIGHT;
use dtdoa_core::rng::substream;
use dtdoa_core::uncertainty::{
    corr_epsilon, var_beta, var_epsilon, var_gamma, var_gamma_bar, var_lambda, var_phi, var_xi,
    NoiseBudget, VarianceReport,
};
use dtdoa_core::Error;
use rand::Rng;

/// A representative indoor budget: ppm-level clocks, tens of picoseconds of
/// timestamping noise, millisecond sync gap.
fn budget() -> NoiseBudget {
    let sigma = 9.035e-12;
    NoiseBudget {
        c: SPEED_OF_LIGHT,
        master_rate: 1.0 + 3e-6,
        master_offset: 3e-4,
        anchor_rate: 1.0 - 2e-6,
        tag_rate: 1.0 + 1e-6,
        sigma_ts_m: sigma,
        sigma_ts_i: sigma,
        sigma_ts: sigma,
        sync_epoch: 0.25,
        sync_gap: 2e-3,
        pair_gap: 2e-4,
        tof_im: 3.34e-8,
        sigma_nu_m_sq: 0.0,
    }
}

fn silent(b: &NoiseBudget) -> NoiseBudget {
    NoiseBudget { sigma_ts_m: 0.0, sigma_ts_i: 0.0, sigma_ts: 0.0, sigma_nu_m_sq: 0.0, ..*b }
}

#[test]
fn rate_variance_examples() {
    assert_eq!(var_beta(&silent(&budget())).unwrap(), 0.0);

    // Unit rates, one-second gap, equal noise on both ends.
    let sigma = 5e-12;
    let b = NoiseBudget {
        master_rate: 1.0,
        anchor_rate: 1.0,
        sigma_ts_m: sigma,
        sigma_ts_i: sigma,
        sync_gap: 1.0,
        ..budget()
    };
    assert_relative_eq!(var_beta(&b).unwrap(), 4.0 * sigma * sigma, max_relative = 1e-12);

    // Doubling the gap quarters the variance.
    let wide = NoiseBudget { sync_gap: 2.0, ..b };
    assert_relative_eq!(
        var_beta(&wide).unwrap(),
        var_beta(&b).unwrap() / 4.0,
        max_relative = 1e-12
    );
}

#[test]
fn rate_variance_decreases_with_gap() {
    let b = budget();
    let gaps = [1e-3, 2e-3, 1e-2, 0.1, 1.0];
    let vals: Vec<f64> =
        gaps.iter().map(|g| var_beta(&NoiseBudget { sync_gap: *g, ..b }).unwrap()).collect();
    for w in vals.windows(2) {
        assert!(w[1] < w[0], "variance must fall as the gap widens");
    }
}

#[test]
fn offset_variance_examples() {
    assert_eq!(var_gamma(&silent(&budget())).unwrap(), 0.0);

    // Master reading zero at the sync epoch and matched rates: the two
    // stamp noises add directly.
    let b = NoiseBudget {
        master_rate: 1.0,
        anchor_rate: 1.0,
        master_offset: 0.0,
        sync_epoch: 0.0,
        ..budget()
    };
    let expect = b.sigma_ts_i.powi(2) + b.sigma_ts_m.powi(2);
    assert_relative_eq!(var_gamma(&b).unwrap(), expect, max_relative = 1e-12);
}

#[test]
fn averaged_offset_variance_examples() {
    assert_eq!(var_gamma_bar(&silent(&budget())).unwrap(), 0.0);

    // Master reading zero at the midpoint of the two sync messages kills
    // the rate term; averaging halves the stamp noise.
    let b = NoiseBudget {
        master_rate: 1.0,
        anchor_rate: 1.0,
        master_offset: 0.0,
        sync_epoch: -1e-3,
        sync_gap: 2e-3,
        ..budget()
    };
    let expect = 0.5 * (b.sigma_ts_i.powi(2) + b.sigma_ts_m.powi(2));
    assert_relative_eq!(var_gamma_bar(&b).unwrap(), expect, max_relative = 1e-12);
}

#[test]
fn averaged_offset_variance_ordering() {
    // The averaged estimator anchors at the sync midpoint. Where the master
    // stamp crosses zero, halved stamp noise beats both single-message
    // estimates.
    let b0 = budget();
    let epoch = -b0.master_offset / b0.master_rate - 0.5 * b0.sync_gap;
    let b = NoiseBudget { sync_epoch: epoch, ..b0 };
    let delayed = NoiseBudget { sync_epoch: epoch + b.sync_gap, ..b };
    let bar = var_gamma_bar(&b).unwrap();
    assert!(bar < var_gamma(&b).unwrap());
    assert!(bar < var_gamma(&delayed).unwrap());

    // Far from master-time zero the rate-error lever dominates and ranks
    // the estimators by their anchor stamps: first, midpoint, second.
    let b = NoiseBudget { sync_epoch: 10.0, ..b0 };
    let delayed = NoiseBudget { sync_epoch: b.sync_epoch + b.sync_gap, ..b };
    let bar = var_gamma_bar(&b).unwrap();
    assert!(var_gamma(&b).unwrap() < bar);
    assert!(bar < var_gamma(&delayed).unwrap());
}

#[test]
fn conversion_variance_examples() {
    assert_eq!(var_epsilon(&silent(&budget()), 0.3).unwrap(), 0.0);
    assert_eq!(corr_epsilon(&silent(&budget()), 0.3, 2e-4).unwrap(), 0.0);

    // Conversion uncertainty grows with distance from the sync midpoint.
    let b = budget();
    let mid = b.sync_epoch + 0.5 * b.sync_gap;
    let narrow = var_epsilon(&b, mid + 0.1).unwrap();
    let wide = var_epsilon(&b, mid + 10.0).unwrap();
    assert!(wide > narrow);
}

#[test]
fn zero_lag_covariance_is_variance_minus_one_stamp_noise() {
    // Two distinct stamps at the same instant share the sync state but not
    // the per-stamp noise, so the zero-lag covariance sits exactly one
    // converted stamp-noise below the variance.
    // Far from the sync epoch the rate term dwarfs the stamp noise and the
    // subtraction loses digits, so stay within a second of it.
    let b = budget();
    for t in [0.26, 0.5, 1.0] {
        let var = var_epsilon(&b, t).unwrap();
        let cov = corr_epsilon(&b, t, 0.0).unwrap();
        let nu_bar = b.anchor_rate / b.master_rate;
        let stamp = b.sigma_ts_i.powi(2) / (nu_bar * nu_bar);
        assert_relative_eq!(var - cov, stamp, max_relative = 1e-8);
    }
}

#[test]
fn covariance_stays_below_the_variances() {
    let b = budget();
    for (t, d) in [(0.3, 2e-4), (1.0, 1e-3), (10.0, 2e-4)] {
        let cov = corr_epsilon(&b, t, d).unwrap();
        let v1 = var_epsilon(&b, t).unwrap();
        let v2 = var_epsilon(&b, t + d).unwrap();
        assert!(cov <= v1.max(v2) + 1e-30);
    }
}

#[test]
fn tag_rate_variance_examples() {
    assert_eq!(var_xi(&silent(&budget()), 2e-4).unwrap(), 0.0);

    // Unit rates, one-second frame pair, equal anchor and tag noise, and a
    // sync gap so wide the rate-estimate term vanishes.
    let sigma = 5e-12;
    let b = NoiseBudget {
        master_rate: 1.0,
        anchor_rate: 1.0,
        tag_rate: 1.0,
        sigma_ts_i: sigma,
        sigma_ts: sigma,
        sigma_ts_m: sigma,
        sync_gap: 1e9,
        ..budget()
    };
    assert_relative_eq!(var_xi(&b, 1.0).unwrap(), 4.0 * sigma * sigma, max_relative = 1e-9);
}

#[test]
fn tag_rate_variance_decreases_with_pair_gap() {
    let b = budget();
    let vals: Vec<f64> = [1e-4, 2e-4, 1e-3, 1e-2]
        .iter()
        .map(|d| var_xi(&b, *d).unwrap())
        .collect();
    for w in vals.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn interval_variance_collapses_to_master_rate_term() {
    // With every stamp noise silenced, only the injected master-rate
    // variance survives, scaled by the squared tag-master rate.
    let s = 1e-12;
    let b = NoiseBudget { sigma_nu_m_sq: s, ..silent(&budget()) };
    let nm = b.tag_rate / b.master_rate;
    let phi = var_phi(&b, 0.3, 0.2999).unwrap();
    assert_relative_eq!(phi, nm * nm * s, max_relative = 1e-12);
}

#[test]
fn observable_variance_tag_term() {
    // Unit master and anchor rates, master frame at the timescale origin,
    // anchor slot exactly one pair gap later: the tag contributes
    // 2 * (1 + 1) stamp variances, in meters through c.
    let b = NoiseBudget { master_rate: 1.0, anchor_rate: 1.0, ..budget() };
    let t_m = 0.0;
    let t_i = b.pair_gap;
    let lam = var_lambda(&b, t_i, t_m).unwrap();
    let phi = var_phi(&b, t_i, t_m).unwrap();
    let tag_term = lam - b.c * b.c * phi;
    assert_relative_eq!(
        tag_term,
        4.0 * b.c * b.c * b.sigma_ts.powi(2),
        max_relative = 1e-9
    );
}

#[test]
fn silent_budget_collapses_every_variance_to_zero() {
    let b = silent(&budget());
    let report = VarianceReport::compute(&b, 0.3, 0.2998).unwrap();
    assert_eq!(report.sigma2_beta, 0.0);
    assert_eq!(report.sigma2_gamma, 0.0);
    assert_eq!(report.sigma2_gamma_bar, 0.0);
    assert_eq!(report.sigma2_epsilon, 0.0);
    assert_eq!(report.corr_epsilon, 0.0);
    assert_eq!(report.sigma2_xi, 0.0);
    assert_eq!(report.sigma2_phi, 0.0);
    assert_eq!(report.sigma2_lambda, 0.0);
    assert!(report.negative.is_empty());
}

#[test]
fn report_matches_individual_formulas() {
    let b = budget();
    let (t_i, t_m) = (3.2002, 3.2);
    let report = VarianceReport::compute(&b, t_i, t_m).unwrap();
    assert_eq!(report.sigma2_beta, var_beta(&b).unwrap());
    assert_eq!(report.sigma2_gamma, var_gamma(&b).unwrap());
    assert_eq!(report.sigma2_gamma_bar, var_gamma_bar(&b).unwrap());
    assert_eq!(report.sigma2_epsilon, var_epsilon(&b, t_i).unwrap());
    assert_eq!(report.corr_epsilon, corr_epsilon(&b, t_i, b.pair_gap).unwrap());
    assert_eq!(report.sigma2_xi, var_xi(&b, b.pair_gap).unwrap());
    assert_eq!(report.sigma2_phi, var_phi(&b, t_i, t_m).unwrap());
    assert_eq!(report.sigma2_lambda, var_lambda(&b, t_i, t_m).unwrap());
}

#[test]
fn variances_are_nonnegative_across_the_operating_envelope() {
    let mut rng = substream(42, 15);
    for _ in 0..200 {
        let sigma = rng.random_range(1e-12..5e-11);
        let b = NoiseBudget {
            c: SPEED_OF_LIGHT,
            master_rate: 1.0 + rng.random_range(-10.0..10.0) * 1e-6,
            master_offset: rng.random_range(-1e-3..1e-3),
            anchor_rate: 1.0 + rng.random_range(-10.0..10.0) * 1e-6,
            tag_rate: 1.0 + rng.random_range(-10.0..10.0) * 1e-6,
            sigma_ts_m: sigma,
            sigma_ts_i: sigma * rng.random_range(0.1..10.0),
            sigma_ts: sigma * rng.random_range(0.1..10.0),
            sync_epoch: rng.random_range(0.0..30.0),
            sync_gap: rng.random_range(1e-4..1e-2),
            pair_gap: rng.random_range(1e-4..1e-2),
            tof_im: rng.random_range(0.0..1e-7),
            sigma_nu_m_sq: 0.0,
        };
        let t_m = b.sync_epoch + rng.random_range(0.0..3.0);
        let t_i = t_m + rng.random_range(1e-5..1e-3);
        let report = VarianceReport::compute(&b, t_i, t_m).unwrap();
        assert!(report.negative.is_empty(), "unexpected negative variance: {:?}", report.negative);
        for v in [
            report.sigma2_beta,
            report.sigma2_gamma,
            report.sigma2_gamma_bar,
            report.sigma2_epsilon,
            report.sigma2_xi,
            report.sigma2_phi,
            report.sigma2_lambda,
        ] {
            assert!(v >= 0.0, "negative variance {v}");
        }
    }
}

#[test]
fn zero_intervals_are_rejected() {
    let b = budget();
    assert!(matches!(
        var_beta(&NoiseBudget { sync_gap: 0.0, ..b }),
        Err(Error::ZeroInterval)
    ));
    assert!(var_gamma(&NoiseBudget { sync_gap: -1.0, ..b }).is_err());
    assert!(var_xi(&b, 0.0).is_err());
    assert!(var_phi(&NoiseBudget { pair_gap: 0.0, ..b }, 0.3, 0.29).is_err());
    assert!(var_lambda(&NoiseBudget { pair_gap: -2e-4, ..b }, 0.3, 0.29).is_err());
}

#[test]
fn budget_helpers() {
    let b = budget();
    assert_relative_eq!(
        b.rel_rate(),
        b.anchor_rate / b.master_rate,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        b.tag_master_rate(),
        b.tag_rate / b.master_rate,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        b.residual(),
        (1.0 - b.anchor_rate) / b.rel_rate() * b.tof_im,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        b.tau_m(2.0),
        b.master_offset + b.master_rate * 2.0,
        max_relative = 1e-15
    );
}
