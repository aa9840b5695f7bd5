//! Monte Carlo validation of the closed-form uncertainties.
//!
//! For each anchor, a randomized but frozen protocol configuration is
//! drawn once (clock offsets and rates, node positions, frame gaps), and
//! then many trials rerun the full estimation pipeline with fresh
//! timestamping noise. Every estimator error sample is the difference
//! between the noisy pipeline and the same pipeline on noiseless stamps,
//! so a zero-noise run yields exactly zero samples and floating-point
//! rounding cancels out of the statistics.
//!
//! Within a trial each physical stamping event is drawn once and shared by
//! every estimator that uses it; the correlation structure between the
//! sync state, the conversions, the syntonization, and the observable is
//! exactly the one the closed forms model.
//!
//! Per-trial noise comes from counter-derived substreams, so trial k's
//! draws do not depend on the trial count: runs can be sliced and rejoined
//! reproducibly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{distance, Point, SPEED_OF_LIGHT};
use crate::report::{CsvBuilder, PlotFrame, SvgCanvas, SIG_DEFAULT};
use crate::rng::{stream_id, substream};
use crate::uncertainty::{
    corr_epsilon, var_epsilon, var_gamma, var_gamma_bar, var_lambda, var_phi, var_xi, NoiseBudget,
};
use crate::{Error, Result};

/// Which estimator error the run samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McTarget {
    /// First-message relative offset estimate error.
    Gamma,
    /// Second-message (delayed) relative offset estimate error.
    GammaDelayed,
    /// Averaged relative offset estimate error.
    GammaBar,
    /// Anchor-to-master conversion error at the anchor's first frame.
    Epsilon,
    /// Tag syntonization (rate ratio) error.
    Xi,
    /// Protocol interval error.
    Phi,
    /// Range-difference observable error.
    Lambda,
}

impl McTarget {
    pub const ALL: [McTarget; 7] = [
        McTarget::Gamma,
        McTarget::GammaDelayed,
        McTarget::GammaBar,
        McTarget::Epsilon,
        McTarget::Xi,
        McTarget::Phi,
        McTarget::Lambda,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            McTarget::Gamma => "gamma",
            McTarget::GammaDelayed => "gamma-delayed",
            McTarget::GammaBar => "gamma-bar",
            McTarget::Epsilon => "epsilon",
            McTarget::Xi => "xi",
            McTarget::Phi => "phi",
            McTarget::Lambda => "lambda",
        }
    }
}

/// Timestamping noise family for a run. Both families are parameterized by
/// the same half-width bound and share the standard deviation
/// `bound/sqrt(3)`, so comparing them isolates the distribution shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
}

impl NoiseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
        }
    }
}

/// One hardware tick of the modeled radio, seconds.
pub const DEFAULT_NOISE_BOUND: f64 = 15.65e-12;

/// Monte Carlo run configuration. Parameter ranges are recorded in every
/// output header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub anchors: usize,
    pub seed: u64,
    pub noise: NoiseFamily,
    /// Half-width of the timestamp noise, seconds. The effective standard
    /// deviation used in the closed forms is `noise_bound/sqrt(3)` for both
    /// families.
    pub noise_bound: f64,
    /// Clock offsets are drawn uniformly from this range, seconds.
    pub offset_range: (f64, f64),
    /// Clock rates are drawn as 1 + ppm*1e-6 with ppm uniform in this range.
    pub rate_ppm_range: (f64, f64),
    /// Node positions are drawn uniformly in a square of this side, meters.
    pub box_size: f64,
    /// Anchor frame pair gap range, seconds.
    pub pair_gap_range: (f64, f64),
    /// Sync message gap range, seconds; the anchor's slot delay after the
    /// master uses the same draw.
    pub sync_gap_range: (f64, f64),
    /// True time of the first sync message, seconds.
    pub sync_epoch: f64,
    /// Delay from the sync epoch to the master's cycle transmission.
    pub cycle_lead: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 10_000,
            anchors: 10,
            seed: 42,
            noise: NoiseFamily::Uniform,
            noise_bound: DEFAULT_NOISE_BOUND,
            offset_range: (-1e-3, 1e-3),
            rate_ppm_range: (-10.0, 10.0),
            box_size: 20.0,
            pair_gap_range: (0.1e-3, 10e-3),
            sync_gap_range: (0.1e-3, 10e-3),
            sync_epoch: 0.25,
            cycle_lead: 3.0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::InvalidConfig("trials must be >= 100".into()));
        }
        if self.anchors < 1 {
            return Err(Error::InvalidConfig("anchors must be >= 1".into()));
        }
        if self.anchors as u64 >= 1 << 24 {
            return Err(Error::InvalidConfig("anchor count exceeds the stream id space".into()));
        }
        if self.trials as u64 > u32::MAX as u64 {
            return Err(Error::InvalidConfig("trial count exceeds the stream id space".into()));
        }
        if !(self.noise_bound >= 0.0) {
            return Err(Error::InvalidConfig("noise bound must be >= 0".into()));
        }
        for (lo, hi, name) in [
            (self.offset_range.0, self.offset_range.1, "offset_range"),
            (self.rate_ppm_range.0, self.rate_ppm_range.1, "rate_ppm_range"),
            (self.pair_gap_range.0, self.pair_gap_range.1, "pair_gap_range"),
            (self.sync_gap_range.0, self.sync_gap_range.1, "sync_gap_range"),
        ] {
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} is empty")));
            }
        }
        if self.pair_gap_range.0 <= 0.0 || self.sync_gap_range.0 <= 0.0 {
            return Err(Error::InvalidConfig("gap ranges must be positive".into()));
        }
        if self.box_size <= 0.0 {
            return Err(Error::InvalidConfig("box size must be positive".into()));
        }
        Ok(())
    }

    /// Effective timestamp noise standard deviation, seconds.
    pub fn sigma_ts(&self) -> f64 {
        self.noise_bound / 3f64.sqrt()
    }

    fn meta(&self, csv: &mut CsvBuilder) {
        csv.meta("version", env!("CARGO_PKG_VERSION"));
        csv.meta("seed", &self.seed.to_string());
        csv.meta("trials", &self.trials.to_string());
        csv.meta("anchors", &self.anchors.to_string());
        csv.meta("noise_family", self.noise.name());
        csv.meta("noise_bound_s", &format!("{:e}", self.noise_bound));
        csv.meta("sigma_ts_s", &format!("{:e}", self.sigma_ts()));
        csv.meta("offset_range_s", &format!("{:e}..{:e}", self.offset_range.0, self.offset_range.1));
        csv.meta(
            "rate_ppm_range",
            &format!("{}..{}", self.rate_ppm_range.0, self.rate_ppm_range.1),
        );
        csv.meta("position_box_m", &format!("{}", self.box_size));
        csv.meta(
            "pair_gap_range_s",
            &format!("{:e}..{:e}", self.pair_gap_range.0, self.pair_gap_range.1),
        );
        csv.meta(
            "sync_gap_range_s",
            &format!("{:e}..{:e}", self.sync_gap_range.0, self.sync_gap_range.1),
        );
        csv.meta("sync_epoch_s", &format!("{}", self.sync_epoch));
        csv.meta("cycle_lead_s", &format!("{}", self.cycle_lead));
    }

    /// The `# key: value` metadata block every artifact of this run starts
    /// with: version, seed, and the full configuration.
    pub fn meta_lines(&self) -> String {
        let mut csv = CsvBuilder::new(SIG_DEFAULT);
        self.meta(&mut csv);
        csv.finish()
    }
}

/// Per-anchor agreement between the empirical statistics and the closed
/// form. `rel_err_mean_pct` is the standardized empirical mean,
/// 100*|mean|/std (the closed-form mean is zero for every target);
/// `rel_err_std_pct` is 100*|analytic - empirical|/empirical.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McAnchorStats {
    pub anchor: usize,
    pub empirical_mean: f64,
    pub empirical_std: f64,
    pub analytic_std: f64,
    pub rel_err_mean_pct: f64,
    pub rel_err_std_pct: f64,
}

/// Result of one Monte Carlo run for one target.
#[derive(Clone, Debug, PartialEq)]
pub struct McRunResult {
    pub target: McTarget,
    pub stats: Vec<McAnchorStats>,
    /// Per-anchor error samples, for histograms and correlation checks.
    pub samples: Vec<Vec<f64>>,
    /// Parameter draws rejected for violating preconditions, then redrawn.
    pub redraws: usize,
}

/// Frozen per-anchor protocol configuration.
#[derive(Clone, Copy, Debug)]
struct AnchorSetup {
    master_offset: f64,
    master_rate: f64,
    anchor_offset: f64,
    anchor_rate: f64,
    tag_offset: f64,
    tag_rate: f64,
    tof_im: f64,
    /// Tag-to-anchor and tag-to-master flight times; the tag is static.
    tof_at: f64,
    tof_mt: f64,
    sync_gap: f64,
    pair_gap: f64,
    t_sync: f64,
    t_m: f64,
    t_i: f64,
}

impl AnchorSetup {
    fn budget(&self, sigma_ts: f64) -> NoiseBudget {
        NoiseBudget {
            c: SPEED_OF_LIGHT,
            master_rate: self.master_rate,
            master_offset: self.master_offset,
            anchor_rate: self.anchor_rate,
            tag_rate: self.tag_rate,
            sigma_ts_m: sigma_ts,
            sigma_ts_i: sigma_ts,
            sigma_ts,
            sync_epoch: self.t_sync,
            sync_gap: self.sync_gap,
            pair_gap: self.pair_gap,
            tof_im: self.tof_im,
            sigma_nu_m_sq: 0.0,
        }
    }
}

const DOMAIN_PARAMS: u8 = 1;
const DOMAIN_NOISE: u8 = 2;

/// Minimum node separation accepted when drawing positions.
const MIN_SEPARATION: f64 = 1e-3;
const MAX_REDRAWS: usize = 1000;

fn draw_setup(cfg: &McConfig, anchor: usize) -> Result<(AnchorSetup, usize)> {
    let mut rng = substream(cfg.seed, stream_id(DOMAIN_PARAMS, anchor as u32, 0));
    let mut redraws = 0;
    loop {
        let offset = |rng: &mut rand_chacha::ChaCha8Rng| {
            rng.random_range(cfg.offset_range.0..=cfg.offset_range.1)
        };
        let rate = |rng: &mut rand_chacha::ChaCha8Rng| {
            1.0 + 1e-6 * rng.random_range(cfg.rate_ppm_range.0..=cfg.rate_ppm_range.1)
        };
        let point = |rng: &mut rand_chacha::ChaCha8Rng| {
            Point::new(rng.random_range(0.0..=cfg.box_size), rng.random_range(0.0..=cfg.box_size))
        };
        let master_offset = offset(&mut rng);
        let master_rate = rate(&mut rng);
        let anchor_offset = offset(&mut rng);
        let anchor_rate = rate(&mut rng);
        let tag_offset = offset(&mut rng);
        let tag_rate = rate(&mut rng);
        let master_pos = point(&mut rng);
        let anchor_pos = point(&mut rng);
        let tag_pos = point(&mut rng);
        let sync_gap = rng.random_range(cfg.sync_gap_range.0..=cfg.sync_gap_range.1);
        let pair_gap = rng.random_range(cfg.pair_gap_range.0..=cfg.pair_gap_range.1);

        let separated = distance(master_pos, anchor_pos) >= MIN_SEPARATION
            && distance(master_pos, tag_pos) >= MIN_SEPARATION
            && distance(anchor_pos, tag_pos) >= MIN_SEPARATION;
        if !separated {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(Error::InvalidConfig(
                    "could not draw a non-degenerate configuration".into(),
                ));
            }
            continue;
        }

        let t_m = cfg.sync_epoch + cfg.cycle_lead;
        return Ok((
            AnchorSetup {
                master_offset,
                master_rate,
                anchor_offset,
                anchor_rate,
                tag_offset,
                tag_rate,
                tof_im: distance(master_pos, anchor_pos) / SPEED_OF_LIGHT,
                tof_at: distance(anchor_pos, tag_pos) / SPEED_OF_LIGHT,
                tof_mt: distance(master_pos, tag_pos) / SPEED_OF_LIGHT,
                sync_gap,
                pair_gap,
                t_sync: cfg.sync_epoch,
                t_m,
                t_i: t_m + sync_gap,
            },
            redraws,
        ))
    }
}

/// Stamping events of one trial, in draw order.
const N_STAMPS: usize = 10;

/// All estimator outputs of one pipeline evaluation.
#[derive(Clone, Copy, Debug, Default)]
struct PipelineOut {
    offset_first: f64,
    offset_second: f64,
    offset_avg: f64,
    conv_first: f64,
    conv_second: f64,
    tag_rate: f64,
    interval: f64,
    dtdoa: f64,
}

/// Runs the full estimation chain on the given stamp noises. `noise` holds
/// one entry per stamping event: sync master tx pair, sync anchor rx pair,
/// anchor cycle tx pair, master cycle tx, tag rx of the anchor pair, tag rx
/// of the master frame.
fn pipeline(s: &AnchorSetup, noise: &[f64; N_STAMPS]) -> PipelineOut {
    let tau_m = |t: f64| s.master_offset + s.master_rate * t;
    let tau_i = |t: f64| s.anchor_offset + s.anchor_rate * t;
    let tau_t = |t: f64| s.tag_offset + s.tag_rate * t;

    let m1 = tau_m(s.t_sync) + noise[0];
    let m2 = tau_m(s.t_sync + s.sync_gap) + noise[1];
    let a1 = tau_i(s.t_sync + s.tof_im) + noise[2];
    let a2 = tau_i(s.t_sync + s.sync_gap + s.tof_im) + noise[3];

    let rel_rate = (a2 - a1) / (m2 - m1);
    let offset_first = a1 - rel_rate * m1 - s.tof_im;
    let offset_second = a2 - rel_rate * m2 - s.tof_im;
    let offset_avg = 0.5 * (offset_first + offset_second);

    let atx1 = tau_i(s.t_i) + noise[4];
    let atx2 = tau_i(s.t_i + s.pair_gap) + noise[5];
    let conv_first = (atx1 - offset_avg) / rel_rate;
    let conv_second = (atx2 - offset_avg) / rel_rate;

    let mtx1 = tau_m(s.t_m) + noise[6];
    let r_a1 = tau_t(s.t_i + s.tof_at) + noise[7];
    let r_a2 = tau_t(s.t_i + s.pair_gap + s.tof_at) + noise[8];
    let r_m1 = tau_t(s.t_m + s.tof_mt) + noise[9];

    let tag_rate = (r_a2 - r_a1) / (conv_second - conv_first);
    let interval = tag_rate * (conv_first - mtx1);
    let dtdoa = SPEED_OF_LIGHT * (r_a1 - r_m1 - interval);

    PipelineOut {
        offset_first,
        offset_second,
        offset_avg,
        conv_first,
        conv_second,
        tag_rate,
        interval,
        dtdoa,
    }
}

fn draw_noise(cfg: &McConfig, rng: &mut impl Rng) -> [f64; N_STAMPS] {
    let mut out = [0.0; N_STAMPS];
    for slot in &mut out {
        *slot = match cfg.noise {
            NoiseFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * cfg.sigma_ts()
            }
            NoiseFamily::Uniform => rng.random_range(-cfg.noise_bound..=cfg.noise_bound),
        };
    }
    out
}

/// Error samples of one trial: noisy pipeline minus noiseless pipeline.
#[derive(Clone, Copy, Debug)]
struct TrialErrors {
    gamma: f64,
    gamma_delayed: f64,
    gamma_bar: f64,
    epsilon: f64,
    epsilon_delayed: f64,
    xi: f64,
    phi: f64,
    lambda: f64,
}

fn trial_errors(s: &AnchorSetup, base: &PipelineOut, noise: &[f64; N_STAMPS]) -> TrialErrors {
    let noisy = pipeline(s, noise);
    TrialErrors {
        gamma: noisy.offset_first - base.offset_first,
        gamma_delayed: noisy.offset_second - base.offset_second,
        gamma_bar: noisy.offset_avg - base.offset_avg,
        epsilon: noisy.conv_first - base.conv_first,
        epsilon_delayed: noisy.conv_second - base.conv_second,
        xi: noisy.tag_rate - base.tag_rate,
        phi: noisy.interval - base.interval,
        lambda: noisy.dtdoa - base.dtdoa,
    }
}

fn pick(errors: &TrialErrors, target: McTarget) -> f64 {
    match target {
        McTarget::Gamma => errors.gamma,
        McTarget::GammaDelayed => errors.gamma_delayed,
        McTarget::GammaBar => errors.gamma_bar,
        McTarget::Epsilon => errors.epsilon,
        McTarget::Xi => errors.xi,
        McTarget::Phi => errors.phi,
        McTarget::Lambda => errors.lambda,
    }
}

fn analytic_std(s: &AnchorSetup, sigma_ts: f64, target: McTarget) -> Result<f64> {
    let b = s.budget(sigma_ts);
    let var = match target {
        McTarget::Gamma => var_gamma(&b)?,
        McTarget::GammaDelayed => {
            let delayed = NoiseBudget { sync_epoch: b.sync_epoch + b.sync_gap, ..b };
            var_gamma(&delayed)?
        }
        McTarget::GammaBar => var_gamma_bar(&b)?,
        McTarget::Epsilon => var_epsilon(&b, s.t_i)?,
        McTarget::Xi => var_xi(&b, s.pair_gap)?,
        McTarget::Phi => var_phi(&b, s.t_i, s.t_m)?,
        McTarget::Lambda => var_lambda(&b, s.t_i, s.t_m)?,
    };
    Ok(var.max(0.0).sqrt())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn pct_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        100.0 * num / den
    }
}

/// Runs the Monte Carlo experiment for one target and reports per-anchor
/// agreement between empirical statistics and the closed form.
pub fn run_mc(cfg: &McConfig, target: McTarget) -> Result<McRunResult> {
    cfg.validate()?;
    let sigma_ts = cfg.sigma_ts();
    let mut stats = Vec::with_capacity(cfg.anchors);
    let mut samples = Vec::with_capacity(cfg.anchors);
    let mut redraws = 0;
    for anchor in 0..cfg.anchors {
        let (setup, r) = draw_setup(cfg, anchor)?;
        redraws += r;
        let base = pipeline(&setup, &[0.0; N_STAMPS]);
        let mut xs = Vec::with_capacity(cfg.trials);
        for trial in 0..cfg.trials {
            let mut rng = substream(cfg.seed, stream_id(DOMAIN_NOISE, anchor as u32, trial as u32));
            let noise = draw_noise(cfg, &mut rng);
            xs.push(pick(&trial_errors(&setup, &base, &noise), target));
        }
        let (mean, std) = mean_std(&xs);
        let analytic = analytic_std(&setup, sigma_ts, target)?;
        stats.push(McAnchorStats {
            anchor,
            empirical_mean: mean,
            empirical_std: std,
            analytic_std: analytic,
            rel_err_mean_pct: pct_ratio(mean.abs(), std),
            rel_err_std_pct: pct_ratio((analytic - std).abs(), std),
        });
        samples.push(xs);
    }
    Ok(McRunResult { target, stats, samples, redraws })
}

/// Error samples for one anchor, one per trial, in trial order.
pub fn target_samples(cfg: &McConfig, target: McTarget, anchor: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    if anchor >= cfg.anchors {
        return Err(Error::InvalidConfig("anchor index out of range".into()));
    }
    let (setup, _) = draw_setup(cfg, anchor)?;
    let base = pipeline(&setup, &[0.0; N_STAMPS]);
    Ok((0..cfg.trials)
        .map(|trial| {
            let mut rng = substream(cfg.seed, stream_id(DOMAIN_NOISE, anchor as u32, trial as u32));
            let noise = draw_noise(cfg, &mut rng);
            pick(&trial_errors(&setup, &base, &noise), target)
        })
        .collect())
}

/// Paired conversion-error samples (first frame, second frame) for one
/// anchor, for validating the conversion error covariance.
pub fn epsilon_pair_samples(cfg: &McConfig, anchor: usize) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if anchor >= cfg.anchors {
        return Err(Error::InvalidConfig("anchor index out of range".into()));
    }
    let (setup, _) = draw_setup(cfg, anchor)?;
    let base = pipeline(&setup, &[0.0; N_STAMPS]);
    Ok((0..cfg.trials)
        .map(|trial| {
            let mut rng = substream(cfg.seed, stream_id(DOMAIN_NOISE, anchor as u32, trial as u32));
            let noise = draw_noise(cfg, &mut rng);
            let e = trial_errors(&setup, &base, &noise);
            (e.epsilon, e.epsilon_delayed)
        })
        .collect())
}

/// The closed-form covariance of the paired conversion errors for the
/// anchor's drawn configuration, alongside its evaluation inputs.
pub fn epsilon_pair_analytic(cfg: &McConfig, anchor: usize) -> Result<f64> {
    cfg.validate()?;
    let (setup, _) = draw_setup(cfg, anchor)?;
    corr_epsilon(&setup.budget(cfg.sigma_ts()), setup.t_i, setup.pair_gap)
}

/// The frozen noise budget and cycle times for one anchor's drawn
/// configuration, for diagnostics.
pub fn anchor_budget(cfg: &McConfig, anchor: usize) -> Result<(NoiseBudget, f64, f64)> {
    cfg.validate()?;
    let (setup, _) = draw_setup(cfg, anchor)?;
    Ok((setup.budget(cfg.sigma_ts()), setup.t_i, setup.t_m))
}

fn stats_csv_rows(csv: &mut CsvBuilder, result: &McRunResult) {
    for s in &result.stats {
        csv.row(&[
            s.anchor.to_string(),
            csv.num(s.empirical_mean),
            csv.num(s.empirical_std),
            csv.num(s.analytic_std),
            csv.num(s.rel_err_mean_pct),
            csv.num(s.rel_err_std_pct),
        ]);
    }
}

/// Per-anchor statistics table for one target.
pub fn emit_target_csv(cfg: &McConfig, result: &McRunResult) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    cfg.meta(&mut csv);
    csv.meta("target", result.target.name());
    csv.meta("redraws", &result.redraws.to_string());
    csv.meta("mean_pct_definition", "100*|empirical_mean|/empirical_std");
    csv.meta("std_pct_definition", "100*|analytic_std-empirical_std|/empirical_std");
    csv.header(&[
        "anchor",
        "empirical_mean",
        "empirical_std",
        "analytic_std",
        "rel_err_mean_pct",
        "rel_err_std_pct",
    ]);
    stats_csv_rows(&mut csv, result);
    csv.finish()
}

/// Relative-error table for the three offset estimators, one row per
/// anchor.
pub fn emit_offset_family_csv(
    cfg: &McConfig,
    gamma: &McRunResult,
    gamma_delayed: &McRunResult,
    gamma_bar: &McRunResult,
) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    cfg.meta(&mut csv);
    csv.meta("mean_pct_definition", "100*|empirical_mean|/empirical_std");
    csv.meta("std_pct_definition", "100*|analytic_std-empirical_std|/empirical_std");
    csv.header(&[
        "anchor",
        "gamma_mean_pct",
        "gamma_std_pct",
        "gamma_delayed_mean_pct",
        "gamma_delayed_std_pct",
        "gamma_bar_mean_pct",
        "gamma_bar_std_pct",
    ]);
    for ((g, gd), gb) in gamma.stats.iter().zip(&gamma_delayed.stats).zip(&gamma_bar.stats) {
        csv.row(&[
            g.anchor.to_string(),
            csv.num(g.rel_err_mean_pct),
            csv.num(g.rel_err_std_pct),
            csv.num(gd.rel_err_mean_pct),
            csv.num(gd.rel_err_std_pct),
            csv.num(gb.rel_err_mean_pct),
            csv.num(gb.rel_err_std_pct),
        ]);
    }
    csv.finish()
}

/// Grouped bar chart of the offset estimators' relative errors, anchors on
/// the abscissa; standardized means on the top panel, standard deviation
/// errors on the bottom panel.
pub fn emit_offset_family_svg(
    gamma: &McRunResult,
    gamma_delayed: &McRunResult,
    gamma_bar: &McRunResult,
) -> String {
    let n = gamma.stats.len();
    let mut canvas = SvgCanvas::new(760.0, 520.0);
    let series = [
        ("offset (first message)", "#1f77b4", gamma),
        ("offset (delayed message)", "#ff7f0e", gamma_delayed),
        ("offset (averaged)", "#2ca02c", gamma_bar),
    ];
    let panels = [
        ("standardized empirical mean, %", 40.0, true),
        ("std relative error, %", 300.0, false),
    ];
    for (label, top, use_mean) in panels {
        let values: Vec<Vec<f64>> = series
            .iter()
            .map(|(_, _, r)| {
                r.stats
                    .iter()
                    .map(|s| if use_mean { s.rel_err_mean_pct } else { s.rel_err_std_pct })
                    .collect()
            })
            .collect();
        let ymax = values
            .iter()
            .flatten()
            .copied()
            .fold(1e-12_f64, f64::max);
        let frame = PlotFrame {
            x0: 70.0,
            y0: top,
            w: 640.0,
            h: 200.0,
            xmin: 0.0,
            xmax: n.max(1) as f64,
            ymin: 0.0,
            ymax: ymax * 1.15,
        };
        frame.draw_axes(&mut canvas, "anchor", label);
        let group_w = frame.w / n.max(1) as f64;
        let bar_w = group_w / 4.0;
        for (si, vals) in values.iter().enumerate() {
            let (_, color, _) = series[si];
            for (ai, v) in vals.iter().enumerate() {
                let x = frame.px(ai as f64) + bar_w * (si as f64 + 0.5);
                let y = frame.py(*v);
                canvas.rect(x, y, bar_w * 0.9, frame.y0 + frame.h - y, color, "none");
            }
        }
        for ai in 0..n {
            canvas.text(
                frame.px(ai as f64) + group_w / 2.0,
                frame.y0 + frame.h + 16.0,
                11.0,
                "middle",
                &format!("{ai}"),
            );
        }
    }
    for (si, (label, color, _)) in series.iter().enumerate() {
        let y = 18.0 + 14.0 * si as f64;
        canvas.rect(600.0, y - 9.0, 10.0, 10.0, color, "none");
        canvas.text(614.0, y, 11.0, "start", label);
    }
    canvas.finish()
}

fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        let idx = if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    counts
}

/// Side-by-side histogram data of the observable error for anchor 0 under
/// the two noise families, with shared bin edges.
pub fn emit_error_histogram_csv(
    cfg_gaussian: &McConfig,
    cfg_uniform: &McConfig,
    gaussian: &McRunResult,
    uniform: &McRunResult,
) -> String {
    let gs = &gaussian.samples[0];
    let us = &uniform.samples[0];
    let lo = gs.iter().chain(us).copied().fold(f64::INFINITY, f64::min);
    let hi = gs.iter().chain(us).copied().fold(f64::NEG_INFINITY, f64::max);
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    cfg_gaussian.meta(&mut csv);
    csv.meta("uniform_seed", &cfg_uniform.seed.to_string());
    csv.meta("anchor", "0");
    csv.meta("analytic_std_gaussian_m", &format!("{:e}", gaussian.stats[0].analytic_std));
    csv.meta("analytic_std_uniform_m", &format!("{:e}", uniform.stats[0].analytic_std));
    csv.meta("empirical_std_gaussian_m", &format!("{:e}", gaussian.stats[0].empirical_std));
    csv.meta("empirical_std_uniform_m", &format!("{:e}", uniform.stats[0].empirical_std));
    csv.header(&["bin_lo_m", "bin_hi_m", "count_gaussian", "count_uniform"]);
    if lo == hi {
        csv.row(&[
            csv.num(lo),
            csv.num(hi),
            gs.len().to_string(),
            us.len().to_string(),
        ]);
        return csv.finish();
    }
    let bins = 41;
    let gh = histogram(gs, lo, hi, bins);
    let uh = histogram(us, lo, hi, bins);
    let width = (hi - lo) / bins as f64;
    for i in 0..bins {
        csv.row(&[
            csv.num(lo + width * i as f64),
            csv.num(lo + width * (i + 1) as f64),
            gh[i].to_string(),
            uh[i].to_string(),
        ]);
    }
    csv.finish()
}

/// Two-panel histogram of the observable error for anchor 0: Gaussian
/// noise on the left, uniform on the right.
pub fn emit_error_histogram_svg(gaussian: &McRunResult, uniform: &McRunResult) -> String {
    let mut canvas = SvgCanvas::new(760.0, 320.0);
    let panels = [("gaussian noise", 60.0, gaussian), ("uniform noise", 420.0, uniform)];
    for (label, x0, result) in panels {
        let samples = &result.samples[0];
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = 41;
        let counts = histogram(samples, lo, hi, bins);
        let cmax = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
        let degenerate = lo == hi;
        let frame = PlotFrame {
            x0,
            y0: 40.0,
            w: 280.0,
            h: 220.0,
            xmin: if degenerate { lo - 1.0 } else { lo },
            xmax: if degenerate { hi + 1.0 } else { hi },
            ymin: 0.0,
            ymax: cmax * 1.1,
        };
        frame.draw_axes(&mut canvas, "observable error, m", "count");
        canvas.text(x0 + 140.0, 24.0, 12.0, "middle", label);
        if degenerate {
            canvas.line(frame.px(lo), frame.py(0.0), frame.px(lo), frame.py(cmax), "#1f77b4", 2.0);
            continue;
        }
        let width = (hi - lo) / bins as f64;
        for (i, count) in counts.iter().enumerate() {
            let x = frame.px(lo + width * i as f64);
            let x2 = frame.px(lo + width * (i + 1) as f64);
            let y = frame.py(*count as f64);
            canvas.rect(x, y, (x2 - x).max(0.5), frame.y0 + frame.h - y, "#1f77b4", "none");
        }
    }
    canvas.finish()
}
