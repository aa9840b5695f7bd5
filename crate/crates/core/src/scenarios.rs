//! Desk-scale end-to-end studies: static-tag precision histograms, a
//! walking tag tracked against its planned path, and the update-rate
//! scalability table.
//!
//! A scenario file describes the room, the clocks, the noise, the
//! broadcast schedule, and the tags; runs are deterministic functions of
//! the scenario and its seed. Static precision runs replicate one short
//! timeline many times with fresh noise rather than extending a single
//! timeline, so every repetition sees the same sync age and the samples
//! are identically distributed.

use serde::{Deserialize, Serialize};

use crate::clocks::{ClockModel, NoiseSpec};
use crate::dtdoa::{
    measure_cycle, simulate_cycle, truth_parts, BroadcastSchedule, DtdoaMeasurement, FrameSource,
    PairIndex, ReceivedFrame, TagRateMode,
};
use crate::geometry::{distance, NetworkGeometry, Point, TagState, SPEED_OF_LIGHT};
use crate::report::{CsvBuilder, PlotFrame, SvgCanvas, SIG_DEFAULT, SIG_TIMESTAMP};
use crate::rng::{stream_id, substream};
use crate::solver::{solve, SolveOptions};
use crate::sync::{estimate_tag_rate, to_master_timescale, OffsetMode, SyncObservation, SyncState};
use crate::uncertainty::{var_lambda, NoiseBudget, VarianceReport};
use crate::{Error, Result};

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

/// Room layout: node coordinates in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub master: [f64; 2],
    pub anchors: Vec<[f64; 2]>,
    #[serde(default = "default_c")]
    pub c: f64,
}

/// Affine clock parameters of one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockConfig {
    pub offset: f64,
    pub rate: f64,
}

/// Clock parameters of the fixed infrastructure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClocksConfig {
    pub master: ClockConfig,
    pub anchors: Vec<ClockConfig>,
}

/// Synchronization protocol settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncConfig {
    /// Gap between consecutive sync messages, seconds.
    pub interval: f64,
    pub offset_mode: OffsetMode,
    pub tag_rate_mode: TagRateMode,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            interval: 10.0,
            offset_mode: OffsetMode::Averaged,
            tag_rate_mode: TagRateMode::MasterPair,
        }
    }
}

/// One tag: its clock and either a fixed position or a waypoint path
/// walked at constant speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagConfig {
    pub clock: ClockConfig,
    #[serde(default)]
    pub position: Option<[f64; 2]>,
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 2]>>,
    /// Walking speed along the waypoints, m/s.
    #[serde(default)]
    pub speed: Option<f64>,
}

/// A complete simulation scenario; the schema of scenario TOML files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Simulated span for trajectory runs, seconds.
    pub duration: f64,
    /// Free-form label recorded in output headers.
    #[serde(default)]
    pub label: Option<String>,
    pub geometry: GeometryConfig,
    pub clocks: ClocksConfig,
    /// Timestamping noise applied to every clock.
    pub noise: NoiseSpec,
    /// Broadcast schedule; the standard schedule for the anchor count when
    /// absent.
    #[serde(default)]
    pub schedule: Option<BroadcastSchedule>,
    #[serde(default)]
    pub sync: SyncConfig,
    pub tags: Vec<TagConfig>,
    /// Constant per-anchor range bias in meters, a stand-in for
    /// non-line-of-sight propagation.
    #[serde(default)]
    pub anchor_bias: Option<Vec<f64>>,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Scenario> {
        let scenario: Scenario =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(format!("scenario parse: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        let n = self.geometry.anchors.len();
        if self.clocks.anchors.len() != n {
            return Err(Error::InvalidConfig(format!(
                "{} anchor clocks for {} anchors",
                self.clocks.anchors.len(),
                n
            )));
        }
        if self.tags.is_empty() {
            return Err(Error::InvalidConfig("scenario needs at least one tag".into()));
        }
        if let Some(bias) = &self.anchor_bias {
            if bias.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "{} bias entries for {} anchors",
                    bias.len(),
                    n
                )));
            }
            if bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidConfig("anchor bias must be finite".into()));
            }
        }
        if !(self.sync.interval > 0.0) {
            return Err(Error::InvalidConfig("sync interval must be positive".into()));
        }
        self.noise.validate()?;
        self.network()?;
        self.broadcast_schedule().validate()?;
        self.master_clock()?;
        self.anchor_clocks()?;
        for (idx, tag) in self.tags.iter().enumerate() {
            self.tag_clock(tag)?;
            match (&tag.position, &tag.waypoints) {
                (Some(p), None) => {
                    if !p.iter().all(|v| v.is_finite()) {
                        return Err(Error::InvalidConfig(format!("tag {idx} position not finite")));
                    }
                }
                (None, Some(w)) => {
                    if w.is_empty() {
                        return Err(Error::InvalidConfig(format!("tag {idx} has no waypoints")));
                    }
                    if w.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
                        return Err(Error::InvalidConfig(format!(
                            "tag {idx} waypoints not finite"
                        )));
                    }
                    match tag.speed {
                        Some(s) if s.is_finite() && s >= 0.0 => {}
                        _ => {
                            return Err(Error::InvalidConfig(format!(
                                "tag {idx} waypoints need a finite speed >= 0"
                            )))
                        }
                    }
                }
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "tag {idx} needs exactly one of position or waypoints"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn network(&self) -> Result<NetworkGeometry> {
        NetworkGeometry::new(
            Point::new(self.geometry.master[0], self.geometry.master[1]),
            self.geometry.anchors.iter().map(|a| Point::new(a[0], a[1])).collect(),
            self.geometry.c,
        )
    }

    /// The scenario's schedule, or the standard one for its anchor count.
    pub fn broadcast_schedule(&self) -> BroadcastSchedule {
        self.schedule
            .clone()
            .unwrap_or_else(|| BroadcastSchedule::standard(self.geometry.anchors.len()))
    }

    pub fn master_clock(&self) -> Result<ClockModel> {
        ClockModel::new(self.clocks.master.offset, self.clocks.master.rate, self.noise.clone())
    }

    pub fn anchor_clocks(&self) -> Result<Vec<ClockModel>> {
        self.clocks
            .anchors
            .iter()
            .map(|c| ClockModel::new(c.offset, c.rate, self.noise.clone()))
            .collect()
    }

    fn tag_clock(&self, tag: &TagConfig) -> Result<ClockModel> {
        ClockModel::new(tag.clock.offset, tag.clock.rate, self.noise.clone())
    }

    fn meta(&self, csv: &mut CsvBuilder) {
        csv.meta("version", env!("CARGO_PKG_VERSION"));
        csv.meta("seed", &self.seed.to_string());
        if let Some(label) = &self.label {
            csv.meta("label", label);
        }
        for line in self.to_toml_string().lines() {
            csv.meta("cfg", line);
        }
    }

    /// The `# key: value` metadata block every artifact of this scenario
    /// starts with: version, seed, label, and the full configuration.
    pub fn meta_lines(&self) -> String {
        let mut csv = CsvBuilder::new(SIG_DEFAULT);
        self.meta(&mut csv);
        csv.finish()
    }
}

/// The default desk-scale room: a 10 m by 8 m rectangle with six anchors
/// on the walls, the master mid-wall, and two static test tags. The
/// coordinates are an illustrative layout, not surveyed positions, and
/// outputs flag them as such.
pub fn default_room(seed: u64) -> Scenario {
    let anchor_ppm = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
    let anchor_offsets = [-8e-4, -4e-4, -1e-4, 2e-4, 5e-4, 9e-4];
    Scenario {
        seed,
        duration: 30.0,
        label: Some("default-room (illustrative layout, not surveyed)".into()),
        geometry: GeometryConfig {
            master: [5.0, 0.0],
            anchors: vec![
                [0.0, 0.0],
                [10.0, 0.0],
                [10.0, 8.0],
                [0.0, 8.0],
                [0.0, 4.0],
                [10.0, 4.0],
            ],
            c: SPEED_OF_LIGHT,
        },
        clocks: ClocksConfig {
            master: ClockConfig { offset: 3e-4, rate: 1.0 + 3e-6 },
            anchors: anchor_ppm
                .iter()
                .zip(anchor_offsets)
                .map(|(ppm, offset)| ClockConfig { offset, rate: 1.0 + ppm * 1e-6 })
                .collect(),
        },
        noise: NoiseSpec::uniform(crate::montecarlo::DEFAULT_NOISE_BOUND),
        schedule: None,
        sync: SyncConfig::default(),
        tags: vec![
            TagConfig {
                clock: ClockConfig { offset: 7e-4, rate: 1.0 - 3e-6 },
                position: Some([3.5, 3.0]),
                waypoints: None,
                speed: None,
            },
            TagConfig {
                clock: ClockConfig { offset: -6e-4, rate: 1.0 + 2e-6 },
                position: Some([6.5, 5.0]),
                waypoints: None,
                speed: None,
            },
        ],
        anchor_bias: None,
    }
}

/// Constant-speed piecewise-linear trajectory through waypoints; the tag
/// stops at the last waypoint.
struct WaypointPath {
    points: Vec<Point>,
    cumulative: Vec<f64>,
    speed: f64,
}

impl WaypointPath {
    fn new(waypoints: &[[f64; 2]], speed: f64) -> Self {
        let points: Vec<Point> = waypoints.iter().map(|p| Point::new(p[0], p[1])).collect();
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + distance(w[0], w[1]));
        }
        WaypointPath { points, cumulative, speed }
    }

    /// Position and velocity at time `t` from the path start. Zero speed
    /// keeps the tag parked on the first waypoint.
    fn at(&self, t: f64) -> (Point, Point) {
        let total = *self.cumulative.last().expect("non-empty");
        let s = self.speed * t.max(0.0);
        if self.points.len() == 1 || s >= total {
            return (*self.points.last().expect("non-empty"), Point::new(0.0, 0.0));
        }
        let seg = self
            .cumulative
            .windows(2)
            .position(|w| s < w[1] && w[1] > w[0])
            .unwrap_or(self.points.len() - 2);
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        let f = (s - self.cumulative[seg]) / len;
        let dir = (b - a) * (1.0 / len);
        (a + dir * (f * len), dir * self.speed)
    }
}

/// Sync domain gets one substream per (tag, repetition); the walk uses a
/// single chronological stream.
const DOMAIN_STATIC: u8 = 3;
const DOMAIN_WALK: u8 = 4;
const DOMAIN_DEMO: u8 = 5;
const DOMAIN_SAMPLE: u8 = 6;

/// Stamps of one broadcast sync message: the master's transmit stamp and
/// each anchor's receive stamp, all drawn once and shared downstream.
struct SyncMessage {
    t: f64,
    master_tx: f64,
    anchor_rx: Vec<f64>,
}

fn send_sync_message(
    network: &NetworkGeometry,
    master: &ClockModel,
    anchors: &[ClockModel],
    t: f64,
    rng: &mut impl rand::Rng,
) -> SyncMessage {
    let master_tx = master.read_measured(t, rng);
    let anchor_rx = anchors
        .iter()
        .enumerate()
        .map(|(i, clock)| clock.read_measured(t + network.master_tof(i), rng))
        .collect();
    SyncMessage { t, master_tx, anchor_rx }
}

/// Pairs two consecutive sync messages into per-anchor observations.
fn pair_sync_messages(
    network: &NetworkGeometry,
    first: &SyncMessage,
    second: &SyncMessage,
) -> Vec<SyncObservation> {
    (0..network.anchors.len())
        .map(|i| SyncObservation {
            master_tx_1: first.master_tx,
            master_tx_2: second.master_tx,
            anchor_rx_1: first.anchor_rx[i],
            anchor_rx_2: second.anchor_rx[i],
            tof_im: network.master_tof(i),
        })
        .collect()
}

/// Draws one complete sync exchange (two messages `gap` apart) for every
/// anchor, sharing the master transmit stamps across anchors as the
/// broadcast does.
fn observe_sync_round(
    network: &NetworkGeometry,
    master: &ClockModel,
    anchors: &[ClockModel],
    t_first: f64,
    gap: f64,
    rng: &mut impl rand::Rng,
) -> Vec<SyncObservation> {
    let first = send_sync_message(network, master, anchors, t_first, rng);
    let second = send_sync_message(network, master, anchors, t_first + gap, rng);
    pair_sync_messages(network, &first, &second)
}

fn sync_states(
    scenario: &Scenario,
    observations: &[SyncObservation],
    anchor_clocks: &[ClockModel],
) -> Result<Vec<SyncState>> {
    observations
        .iter()
        .zip(anchor_clocks)
        .map(|(obs, clock)| {
            let mut state = SyncState::estimate(obs, scenario.sync.offset_mode)?;
            state.residual = crate::sync::conversion_residual(clock.rate, state.rel_rate, obs.tof_im);
            Ok(state)
        })
        .collect()
}

/// The noise budget of one anchor for one cycle, from the configured clock
/// parameters and the noise level.
fn anchor_noise_budget(
    scenario: &Scenario,
    network: &NetworkGeometry,
    schedule: &BroadcastSchedule,
    tag_rate: f64,
    sync_epoch: f64,
    anchor: usize,
) -> NoiseBudget {
    let sigma = scenario.noise.sigma_ts();
    NoiseBudget {
        c: network.c,
        master_rate: scenario.clocks.master.rate,
        master_offset: scenario.clocks.master.offset,
        anchor_rate: scenario.clocks.anchors[anchor].rate,
        tag_rate,
        sigma_ts_m: sigma,
        sigma_ts_i: sigma,
        sigma_ts: sigma,
        sync_epoch,
        sync_gap: scenario.sync.interval,
        pair_gap: schedule.pair_gaps[anchor],
        tof_im: network.master_tof(anchor),
        sigma_nu_m_sq: 0.0,
    }
}

/// Predicted observable variances for each anchor of one cycle.
fn predicted_variances(
    scenario: &Scenario,
    network: &NetworkGeometry,
    tag_rate: f64,
    sync_epoch: f64,
    cycle_start: f64,
) -> Result<Vec<f64>> {
    let schedule = scenario.broadcast_schedule();
    let t_m = cycle_start + schedule.master_first_tx;
    (0..network.anchors.len())
        .map(|i| {
            let b = anchor_noise_budget(scenario, network, &schedule, tag_rate, sync_epoch, i);
            var_lambda(&b, t_m + schedule.slot_offsets[i], t_m)
        })
        .collect()
}

/// Every closed-form variance for each anchor of one protocol cycle,
/// evaluated at the times the simulation itself uses: first sync message at
/// zero, the cycle one sync interval plus one cycle period later. The tag
/// terms use the first tag's clock.
pub fn anchor_variance_reports(scenario: &Scenario) -> Result<Vec<VarianceReport>> {
    scenario.validate()?;
    let network = scenario.network()?;
    let schedule = scenario.broadcast_schedule();
    let cycle_start = scenario.sync.interval + schedule.cycle_period;
    let t_m = cycle_start + schedule.master_first_tx;
    let tag_rate = scenario.tags[0].clock.rate;
    (0..network.anchors.len())
        .map(|i| {
            let b = anchor_noise_budget(scenario, &network, &schedule, tag_rate, 0.0, i);
            VarianceReport::compute(&b, t_m + schedule.slot_offsets[i], t_m)
        })
        .collect()
}

fn apply_bias(scenario: &Scenario, measurements: &mut [DtdoaMeasurement]) {
    if let Some(bias) = &scenario.anchor_bias {
        for m in measurements.iter_mut() {
            m.value += bias[m.anchor_id];
        }
    }
}

/// Simulates one full protocol round for one tag: a sync message pair, then
/// one broadcast cycle measured into observables with predicted variances
/// and truth attached.
#[allow(clippy::too_many_arguments)]
fn round_measurements(
    scenario: &Scenario,
    network: &NetworkGeometry,
    master: &ClockModel,
    anchor_clocks: &[ClockModel],
    tag: &TagState,
    variances: &[f64],
    rng: &mut impl rand::Rng,
) -> Result<(Vec<ReceivedFrame>, Vec<DtdoaMeasurement>)> {
    let schedule = scenario.broadcast_schedule();
    let observations = observe_sync_round(network, master, anchor_clocks, 0.0, scenario.sync.interval, rng);
    let states = sync_states(scenario, &observations, anchor_clocks)?;
    let cycle_start = scenario.sync.interval + schedule.cycle_period;
    let frames =
        simulate_cycle(network, master, anchor_clocks, tag, &schedule, &states, cycle_start, rng)?;
    let mut measurements = measure_cycle(&frames, scenario.sync.tag_rate_mode, network.c)?;
    for m in measurements.iter_mut() {
        m.predicted_variance = Some(variances[m.anchor_id]);
        m.truth = Some(truth_parts(
            scenario.clocks.anchors[m.anchor_id].rate,
            scenario.clocks.master.rate,
            tag.clock.rate,
            network.master_tof(m.anchor_id),
            network.range_diff(m.anchor_id, tag.position),
            network.c,
        ));
    }
    apply_bias(scenario, &mut measurements);
    Ok((frames, measurements))
}

#[allow(clippy::too_many_arguments)]
fn one_round(
    scenario: &Scenario,
    network: &NetworkGeometry,
    master: &ClockModel,
    anchor_clocks: &[ClockModel],
    tag: &TagState,
    variances: &[f64],
    rng: &mut impl rand::Rng,
) -> Result<Point> {
    let (_, measurements) =
        round_measurements(scenario, network, master, anchor_clocks, tag, variances, rng)?;
    let fix = solve(network, &measurements, &SolveOptions::default())?;
    Ok(fix.position)
}

/// The tag's kinematic state at true time `t`: fixed tags sit still,
/// waypoint tags follow their path.
fn tag_state_at(scenario: &Scenario, tag_cfg: &TagConfig, t: f64) -> Result<TagState> {
    let clock = scenario.tag_clock(tag_cfg)?;
    if let Some(p) = tag_cfg.position {
        return Ok(TagState {
            position: Point::new(p[0], p[1]),
            velocity: Point::new(0.0, 0.0),
            clock,
        });
    }
    let path = WaypointPath::new(
        tag_cfg.waypoints.as_ref().expect("validated: position or waypoints"),
        tag_cfg.speed.expect("validated"),
    );
    let (position, velocity) = path.at(t);
    Ok(TagState { position, velocity, clock })
}

/// One protocol round's measurements for every tag: the raw solver input a
/// cycle produces, with predicted variances and truth attached. Waypoint
/// tags are sampled where their path stands at the cycle start.
pub fn sample_measurements(scenario: &Scenario) -> Result<Vec<Vec<DtdoaMeasurement>>> {
    scenario.validate()?;
    let network = scenario.network()?;
    let master = scenario.master_clock()?;
    let anchor_clocks = scenario.anchor_clocks()?;
    let schedule = scenario.broadcast_schedule();
    let cycle_start = scenario.sync.interval + schedule.cycle_period;
    scenario
        .tags
        .iter()
        .enumerate()
        .map(|(tag_idx, tag_cfg)| {
            let tag = tag_state_at(scenario, tag_cfg, cycle_start)?;
            let variances =
                predicted_variances(scenario, &network, tag_cfg.clock.rate, 0.0, cycle_start)?;
            let mut rng =
                substream(scenario.seed, stream_id(DOMAIN_SAMPLE, tag_idx as u32, 0));
            let (_, measurements) = round_measurements(
                scenario,
                &network,
                &master,
                &anchor_clocks,
                &tag,
                &variances,
                &mut rng,
            )?;
            Ok(measurements)
        })
        .collect()
}

/// Stage-1 estimates of one sync exchange for one anchor, with truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncDemoAnchor {
    pub anchor: usize,
    /// Surveyed master-to-anchor flight time, seconds.
    pub tof_s: f64,
    pub true_rel_rate: f64,
    pub est_rel_rate: f64,
    pub true_rel_offset_s: f64,
    pub est_rel_offset_s: f64,
    /// Deterministic conversion residual carried by the sync state.
    pub residual_s: f64,
    /// Conversion error of an exact anchor stamp taken at the probe time,
    /// against the true master reading, seconds.
    pub conversion_error_s: f64,
}

/// Stage-2 syntonization result for one tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncDemoTag {
    pub tag: usize,
    /// Rate estimated from the master's received frame pair.
    pub est_rate: f64,
    /// True tag over master clock rate; motion shifts the estimate away
    /// from it by up to speed over c.
    pub true_clock_ratio: f64,
}

/// One pass of the two-stage synchronization under the scenario's noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncDemo {
    pub anchors: Vec<SyncDemoAnchor>,
    pub tags: Vec<SyncDemoTag>,
    /// True time the conversion columns are probed at, seconds.
    pub probe_t: f64,
}

/// Runs one sync exchange for every anchor and one broadcast cycle for
/// every tag, reporting estimates next to their configured truths.
pub fn run_sync_demo(scenario: &Scenario) -> Result<SyncDemo> {
    scenario.validate()?;
    let network = scenario.network()?;
    let master = scenario.master_clock()?;
    let anchor_clocks = scenario.anchor_clocks()?;
    let schedule = scenario.broadcast_schedule();
    let mut rng = substream(scenario.seed, stream_id(DOMAIN_DEMO, 0, 0));

    let observations =
        observe_sync_round(&network, &master, &anchor_clocks, 0.0, scenario.sync.interval, &mut rng);
    let states = sync_states(scenario, &observations, &anchor_clocks)?;
    let probe_t = scenario.sync.interval + schedule.cycle_period;

    let anchors = states
        .iter()
        .enumerate()
        .map(|(i, state)| {
            let true_rel_rate = scenario.clocks.anchors[i].rate / scenario.clocks.master.rate;
            let converted = to_master_timescale(anchor_clocks[i].read_ideal(probe_t), state);
            SyncDemoAnchor {
                anchor: i,
                tof_s: network.master_tof(i),
                true_rel_rate,
                est_rel_rate: state.rel_rate,
                true_rel_offset_s: scenario.clocks.anchors[i].offset
                    - true_rel_rate * scenario.clocks.master.offset,
                est_rel_offset_s: state.rel_offset,
                residual_s: state.residual,
                conversion_error_s: converted - master.read_ideal(probe_t),
            }
        })
        .collect();

    let mut tags = Vec::with_capacity(scenario.tags.len());
    for (tag_idx, tag_cfg) in scenario.tags.iter().enumerate() {
        let tag = tag_state_at(scenario, tag_cfg, probe_t)?;
        let frames = simulate_cycle(
            &network,
            &master,
            &anchor_clocks,
            &tag,
            &schedule,
            &states,
            probe_t,
            &mut rng,
        )?;
        let find = |pair: PairIndex| {
            frames
                .iter()
                .find(|f| f.source == FrameSource::Master && f.pair_index == pair)
                .expect("cycle contains the master pair")
        };
        let (first, second) = (find(PairIndex::First), find(PairIndex::Second));
        tags.push(SyncDemoTag {
            tag: tag_idx,
            est_rate: estimate_tag_rate(
                first.rx_tag_ts,
                second.rx_tag_ts,
                first.tx_master_ts,
                second.tx_master_ts,
            )?,
            true_clock_ratio: tag_cfg.clock.rate / scenario.clocks.master.rate,
        });
    }
    Ok(SyncDemo { anchors, tags, probe_t })
}

/// Static-tag precision run: per tag, per repetition position errors.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticRun {
    pub tag_positions: Vec<Point>,
    /// `errors[tag][repetition] = (x_fix - x_true, y_fix - y_true)`, m.
    pub errors: Vec<Vec<(f64, f64)>>,
    /// Repetitions dropped because the solver failed.
    pub solver_failures: usize,
}

impl StaticRun {
    /// Largest absolute error component over all tags and repetitions.
    pub fn max_abs_error(&self) -> f64 {
        self.errors
            .iter()
            .flatten()
            .map(|(x, y)| x.abs().max(y.abs()))
            .fold(0.0, f64::max)
    }
}

/// Repeats one protocol round per repetition for every static tag and
/// collects position errors. Each repetition replays the same short
/// timeline (sync pair, then one cycle) with fresh noise. Solver failures
/// are counted and skipped.
pub fn run_static(scenario: &Scenario, repetitions: usize) -> Result<StaticRun> {
    scenario.validate()?;
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
    }
    if repetitions as u64 > u32::MAX as u64 {
        return Err(Error::InvalidConfig("repetition count exceeds the stream id space".into()));
    }
    if scenario.tags.iter().any(|t| t.position.is_none()) {
        return Err(Error::InvalidConfig("static run needs fixed-position tags".into()));
    }
    let network = scenario.network()?;
    let master = scenario.master_clock()?;
    let anchor_clocks = scenario.anchor_clocks()?;
    let schedule = scenario.broadcast_schedule();
    let cycle_start = scenario.sync.interval + schedule.cycle_period;

    let mut tag_positions = Vec::new();
    let mut errors = Vec::new();
    let mut solver_failures = 0;
    for (tag_idx, tag_cfg) in scenario.tags.iter().enumerate() {
        let p = tag_cfg.position.expect("checked static");
        let position = Point::new(p[0], p[1]);
        let tag = TagState {
            position,
            velocity: Point::new(0.0, 0.0),
            clock: scenario.tag_clock(tag_cfg)?,
        };
        let variances =
            predicted_variances(scenario, &network, tag_cfg.clock.rate, 0.0, cycle_start)?;
        let mut samples = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let mut rng =
                substream(scenario.seed, stream_id(DOMAIN_STATIC, tag_idx as u32, rep as u32));
            match one_round(scenario, &network, &master, &anchor_clocks, &tag, &variances, &mut rng)
            {
                Ok(fix) => samples.push((fix.x - position.x, fix.y - position.y)),
                Err(Error::NoConvergence { .. }) | Err(Error::Degenerate(_)) => {
                    solver_failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
        tag_positions.push(position);
        errors.push(samples);
    }
    Ok(StaticRun { tag_positions, errors, solver_failures })
}

/// One tracked instant of a walking-tag run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkSample {
    /// Cycle start, seconds of true time.
    pub t: f64,
    pub truth: Point,
    /// Fitted position; absent when the solver failed for this cycle.
    pub fix: Option<Point>,
}

/// Walking-tag run output.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkRun {
    pub planned: Vec<Point>,
    pub track: Vec<WalkSample>,
    pub solver_failures: usize,
}

/// Tracks one moving tag across the scenario duration: sync exchanges
/// every sync interval, one broadcast cycle per cycle period, one fix per
/// cycle. The tag follows its waypoints at constant speed; the first cycle
/// starts after the first complete sync pair.
pub fn run_walk(scenario: &Scenario) -> Result<WalkRun> {
    scenario.validate()?;
    let movers: Vec<&TagConfig> = scenario.tags.iter().filter(|t| t.waypoints.is_some()).collect();
    if movers.len() != 1 || scenario.tags.len() != 1 {
        return Err(Error::InvalidConfig("walk run needs exactly one waypoint tag".into()));
    }
    let tag_cfg = movers[0];
    let path = WaypointPath::new(
        tag_cfg.waypoints.as_ref().expect("checked"),
        tag_cfg.speed.expect("validated"),
    );
    let network = scenario.network()?;
    let master = scenario.master_clock()?;
    let anchor_clocks = scenario.anchor_clocks()?;
    let schedule = scenario.broadcast_schedule();
    let tag_clock = scenario.tag_clock(tag_cfg)?;
    let interval = scenario.sync.interval;

    let mut rng = substream(scenario.seed, stream_id(DOMAIN_WALK, 0, 0));
    // Sync messages go out every interval; each new message pairs with the
    // previous one to refresh the per-anchor states.
    let mut prev_message = send_sync_message(&network, &master, &anchor_clocks, 0.0, &mut rng);
    let mut last_message = send_sync_message(&network, &master, &anchor_clocks, interval, &mut rng);
    let mut states = sync_states(
        scenario,
        &pair_sync_messages(&network, &prev_message, &last_message),
        &anchor_clocks,
    )?;
    let mut sync_count = 2;
    let mut sync_epoch = 0.0;

    let mut track = Vec::new();
    let mut solver_failures = 0;
    let mut cycle_start = interval + schedule.cycle_period;
    while cycle_start + schedule.cycle_period <= scenario.duration {
        // Sync messages due before this cycle: message k at k*interval.
        while (sync_count as f64) * interval <= cycle_start {
            prev_message = last_message;
            last_message = send_sync_message(
                &network,
                &master,
                &anchor_clocks,
                (sync_count as f64) * interval,
                &mut rng,
            );
            states = sync_states(
                scenario,
                &pair_sync_messages(&network, &prev_message, &last_message),
                &anchor_clocks,
            )?;
            sync_epoch = prev_message.t;
            sync_count += 1;
        }
        let (position, velocity) = path.at(cycle_start);
        let tag = TagState { position, velocity, clock: tag_clock.clone() };
        let variances =
            predicted_variances(scenario, &network, tag_cfg.clock.rate, sync_epoch, cycle_start)?;
        let frames = simulate_cycle(
            &network,
            &master,
            &anchor_clocks,
            &tag,
            &schedule,
            &states,
            cycle_start,
            &mut rng,
        )?;
        let mut measurements = measure_cycle(&frames, scenario.sync.tag_rate_mode, network.c)?;
        for m in measurements.iter_mut() {
            m.predicted_variance = Some(variances[m.anchor_id]);
        }
        apply_bias(scenario, &mut measurements);
        let fix = match solve(&network, &measurements, &SolveOptions::default()) {
            Ok(f) => Some(f.position),
            Err(Error::NoConvergence { .. }) | Err(Error::Degenerate(_)) => {
                solver_failures += 1;
                None
            }
            Err(e) => return Err(e),
        };
        track.push(WalkSample { t: cycle_start, truth: position, fix });
        cycle_start += schedule.cycle_period;
    }
    Ok(WalkRun { planned: path.points.clone(), track, solver_failures })
}

/// One row of the update-rate table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalabilityRow {
    pub tags: usize,
    /// Broadcast cycle duration, seconds; independent of the tag count.
    pub cycle_duration: f64,
    pub fixes_per_second_per_tag: f64,
}

/// Update rate as a function of simultaneous tag count. Tags only listen,
/// so the cycle duration is a pure function of the schedule and the rate
/// per tag never degrades.
pub fn run_scalability(scenario: &Scenario, tag_counts: &[usize]) -> Result<Vec<ScalabilityRow>> {
    scenario.validate()?;
    if tag_counts.is_empty() {
        return Err(Error::InvalidConfig("tag_counts must not be empty".into()));
    }
    if tag_counts.iter().any(|&t| t == 0) {
        return Err(Error::InvalidConfig("tag counts must be >= 1".into()));
    }
    let schedule = scenario.broadcast_schedule();
    schedule.validate()?;
    let cycle_duration = schedule.cycle_period;
    Ok(tag_counts
        .iter()
        .map(|&tags| ScalabilityRow {
            tags,
            cycle_duration,
            fixes_per_second_per_tag: 1.0 / cycle_duration,
        })
        .collect())
}

fn histogram_counts(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        let idx = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[idx] += 1;
    }
    counts
}

/// Histogram CSV of per-axis position errors, one count column per tag and
/// axis, shared bin edges.
pub fn emit_static_csv(scenario: &Scenario, repetitions: usize, run: &StaticRun) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    scenario.meta(&mut csv);
    csv.meta("repetitions", &repetitions.to_string());
    csv.meta("solver_failures", &run.solver_failures.to_string());
    for (i, (pos, samples)) in run.tag_positions.iter().zip(&run.errors).enumerate() {
        csv.meta(&format!("tag{i}_position_m"), &format!("{},{}", pos.x, pos.y));
        let n = samples.len().max(1) as f64;
        let (mx, my) = samples
            .iter()
            .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x / n, ay + y / n));
        csv.meta(&format!("tag{i}_mean_error_m"), &format!("{:e},{:e}", mx, my));
        let max = samples.iter().map(|(x, y)| x.abs().max(y.abs())).fold(0.0, f64::max);
        csv.meta(&format!("tag{i}_max_abs_error_m"), &format!("{max:e}"));
    }
    let all: Vec<f64> = run
        .errors
        .iter()
        .flatten()
        .flat_map(|(x, y)| [*x, *y])
        .collect();
    let mut header: Vec<String> = vec!["bin_lo_m".into(), "bin_hi_m".into()];
    for i in 0..run.errors.len() {
        header.push(format!("tag{i}_x_count"));
        header.push(format!("tag{i}_y_count"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv.header(&header_refs);
    if all.is_empty() {
        return csv.finish();
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = if lo == hi { 1 } else { 61 };
    let width = (hi - lo) / bins as f64;
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for samples in &run.errors {
        let xs: Vec<f64> = samples.iter().map(|(x, _)| *x).collect();
        let ys: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();
        columns.push(histogram_counts(&xs, lo, hi, bins));
        columns.push(histogram_counts(&ys, lo, hi, bins));
    }
    for b in 0..bins {
        let mut row = vec![csv.num(lo + width * b as f64), csv.num(lo + width * (b + 1) as f64)];
        for col in &columns {
            row.push(col[b].to_string());
        }
        csv.row(&row);
    }
    csv.finish()
}

/// One histogram panel per tag, x errors filled, y errors outlined.
pub fn emit_static_svg(run: &StaticRun) -> String {
    let n_tags = run.errors.len().max(1);
    let panel_w = 320.0;
    let mut canvas = SvgCanvas::new(60.0 + panel_w * n_tags as f64, 300.0);
    for (i, samples) in run.errors.iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|(x, _)| *x).collect();
        let ys: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();
        let lo = xs.iter().chain(&ys).copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().chain(&ys).copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if samples.is_empty() || lo == hi {
            (lo.min(0.0) - 1e-3, hi.max(0.0) + 1e-3)
        } else {
            (lo, hi)
        };
        let bins = 41;
        let cx = histogram_counts(&xs, lo, hi, bins);
        let cy = histogram_counts(&ys, lo, hi, bins);
        let cmax = cx.iter().chain(&cy).copied().max().unwrap_or(1).max(1) as f64;
        let frame = PlotFrame {
            x0: 50.0 + panel_w * i as f64,
            y0: 40.0,
            w: panel_w - 60.0,
            h: 200.0,
            xmin: lo,
            xmax: hi,
            ymin: 0.0,
            ymax: cmax * 1.1,
        };
        frame.draw_axes(&mut canvas, "error, m", "count");
        canvas.text(frame.x0 + frame.w / 2.0, 24.0, 12.0, "middle", &format!("test position {i}"));
        let width = (hi - lo) / bins as f64;
        for (b, count) in cx.iter().enumerate() {
            let x = frame.px(lo + width * b as f64);
            let x2 = frame.px(lo + width * (b + 1) as f64);
            let y = frame.py(*count as f64);
            canvas.rect(x, y, (x2 - x).max(0.5), frame.y0 + frame.h - y, "#9ecae1", "none");
        }
        let pts: Vec<(f64, f64)> = cy
            .iter()
            .enumerate()
            .flat_map(|(b, count)| {
                let y = frame.py(*count as f64);
                [(frame.px(lo + width * b as f64), y), (frame.px(lo + width * (b + 1) as f64), y)]
            })
            .collect();
        canvas.polyline(&pts, "#ff7f0e", 1.5, None);
    }
    canvas.finish()
}

/// Track CSV: truth and fix per cycle. Failed fixes render as NaN.
pub fn emit_walk_csv(scenario: &Scenario, run: &WalkRun) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    scenario.meta(&mut csv);
    csv.meta("solver_failures", &run.solver_failures.to_string());
    csv.meta("cycles", &run.track.len().to_string());
    csv.header(&["t_s", "truth_x_m", "truth_y_m", "fix_x_m", "fix_y_m", "error_m"]);
    for s in &run.track {
        let (fx, fy, err) = match s.fix {
            Some(p) => (p.x, p.y, distance(p, s.truth)),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        csv.row(&[
            csv.num(s.t),
            csv.num(s.truth.x),
            csv.num(s.truth.y),
            csv.num(fx),
            csv.num(fy),
            csv.num(err),
        ]);
    }
    csv.finish()
}

/// Overlay of the planned path (dashed), the fixes (dots), and the
/// infrastructure (master diamond, anchor squares).
pub fn emit_walk_svg(scenario: &Scenario, run: &WalkRun) -> String {
    let network = match scenario.network() {
        Ok(n) => n,
        Err(_) => return SvgCanvas::new(10.0, 10.0).finish(),
    };
    let mut xs: Vec<f64> = network.anchors.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = network.anchors.iter().map(|p| p.y).collect();
    xs.push(network.master.x);
    ys.push(network.master.y);
    for p in &run.planned {
        xs.push(p.x);
        ys.push(p.y);
    }
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let ymax = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut canvas = SvgCanvas::new(640.0, 540.0);
    let frame = PlotFrame {
        x0: 60.0,
        y0: 30.0,
        w: 540.0,
        h: 450.0,
        xmin,
        xmax,
        ymin,
        ymax,
    };
    frame.draw_axes(&mut canvas, "x, m", "y, m");
    for a in &network.anchors {
        canvas.rect(frame.px(a.x) - 4.0, frame.py(a.y) - 4.0, 8.0, 8.0, "#444444", "none");
    }
    canvas.circle(frame.px(network.master.x), frame.py(network.master.y), 5.0, "#000000");
    let planned: Vec<(f64, f64)> =
        run.planned.iter().map(|p| (frame.px(p.x), frame.py(p.y))).collect();
    if planned.len() > 1 {
        canvas.polyline(&planned, "#2ca02c", 2.0, Some("8 5"));
    }
    for s in &run.track {
        if let Some(fix) = s.fix {
            canvas.circle(frame.px(fix.x), frame.py(fix.y), 1.6, "#d62728");
        }
    }
    canvas.finish()
}

/// Update-rate table CSV.
pub fn emit_scalability_csv(scenario: &Scenario, rows: &[ScalabilityRow]) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    scenario.meta(&mut csv);
    csv.header(&["tags", "cycle_duration_s", "fixes_per_second_per_tag"]);
    for row in rows {
        csv.row(&[
            row.tags.to_string(),
            csv.num(row.cycle_duration),
            csv.num(row.fixes_per_second_per_tag),
        ]);
    }
    csv.finish()
}

/// Anchor table of one sync pass: estimates beside their truths.
pub fn emit_sync_demo_csv(scenario: &Scenario, demo: &SyncDemo) -> String {
    let mut csv = CsvBuilder::new(SIG_TIMESTAMP);
    scenario.meta(&mut csv);
    csv.meta("probe_t_s", &csv.num(demo.probe_t));
    csv.header(&[
        "anchor",
        "tof_s",
        "true_rel_rate",
        "est_rel_rate",
        "true_rel_offset_s",
        "est_rel_offset_s",
        "residual_s",
        "conversion_error_s",
    ]);
    for a in &demo.anchors {
        csv.row(&[
            a.anchor.to_string(),
            csv.num(a.tof_s),
            csv.num(a.true_rel_rate),
            csv.num(a.est_rel_rate),
            csv.num(a.true_rel_offset_s),
            csv.num(a.est_rel_offset_s),
            csv.num(a.residual_s),
            csv.num(a.conversion_error_s),
        ]);
    }
    csv.finish()
}

/// Tag table of one sync pass: rate estimates beside true clock ratios.
pub fn emit_sync_demo_tags_csv(scenario: &Scenario, demo: &SyncDemo) -> String {
    let mut csv = CsvBuilder::new(SIG_TIMESTAMP);
    scenario.meta(&mut csv);
    csv.header(&["tag", "est_rate", "true_clock_ratio"]);
    for t in &demo.tags {
        csv.row(&[t.tag.to_string(), csv.num(t.est_rate), csv.num(t.true_clock_ratio)]);
    }
    csv.finish()
}

/// One row per measurement across all tags of one protocol round.
pub fn emit_measurements_csv(
    scenario: &Scenario,
    measurements: &[Vec<DtdoaMeasurement>],
) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    scenario.meta(&mut csv);
    csv.header(&[
        "tag",
        "anchor",
        "value_m",
        "predicted_variance_m2",
        "truth_ideal_m",
        "truth_bias_m",
    ]);
    for (tag_idx, tag_measurements) in measurements.iter().enumerate() {
        for m in tag_measurements {
            let (ideal, bias) = match &m.truth {
                Some(t) => (t.ideal, t.bias),
                None => (f64::NAN, f64::NAN),
            };
            csv.row(&[
                tag_idx.to_string(),
                m.anchor_id.to_string(),
                csv.num(m.value),
                csv.num(m.predicted_variance.unwrap_or(f64::NAN)),
                csv.num(ideal),
                csv.num(bias),
            ]);
        }
    }
    csv.finish()
}

/// One row per anchor of every closed-form variance in the report.
pub fn emit_variance_report_csv(scenario: &Scenario, reports: &[VarianceReport]) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    scenario.meta(&mut csv);
    csv.header(&[
        "anchor",
        "sigma2_beta",
        "sigma2_gamma_s2",
        "sigma2_gamma_bar_s2",
        "sigma2_epsilon_s2",
        "corr_epsilon_s2",
        "sigma2_xi",
        "sigma2_phi_s2",
        "sigma2_lambda_m2",
        "std_lambda_m",
        "negative_terms",
    ]);
    for (i, r) in reports.iter().enumerate() {
        csv.row(&[
            i.to_string(),
            csv.num(r.sigma2_beta),
            csv.num(r.sigma2_gamma),
            csv.num(r.sigma2_gamma_bar),
            csv.num(r.sigma2_epsilon),
            csv.num(r.corr_epsilon),
            csv.num(r.sigma2_xi),
            csv.num(r.sigma2_phi),
            csv.num(r.sigma2_lambda),
            csv.num(r.sigma2_lambda.max(0.0).sqrt()),
            r.negative.join(";"),
        ]);
    }
    csv.finish()
}

/// The sample coordinate of cell `i` of `n` spanning `bounds`, matching the
/// dilution-map grid convention: endpoints included, midpoint when alone.
fn grid_coord(bounds: (f64, f64), i: usize, n: usize) -> f64 {
    if n == 1 {
        return 0.5 * (bounds.0 + bounds.1);
    }
    bounds.0 + (bounds.1 - bounds.0) * i as f64 / (n - 1) as f64
}

/// Long-form dilution map CSV; degenerate cells leave the value empty.
pub fn emit_pdop_map_csv(
    scenario: &Scenario,
    x_bounds: (f64, f64),
    y_bounds: (f64, f64),
    map: &[Vec<Option<f64>>],
) -> String {
    let mut csv = CsvBuilder::new(SIG_DEFAULT);
    scenario.meta(&mut csv);
    csv.header(&["x_m", "y_m", "pdop"]);
    let ny = map.len();
    for (iy, row) in map.iter().enumerate() {
        let y = grid_coord(y_bounds, iy, ny);
        for (ix, cell) in row.iter().enumerate() {
            let x = grid_coord(x_bounds, ix, row.len());
            let value = match cell {
                Some(v) => csv.num(*v),
                None => String::new(),
            };
            csv.row(&[csv.num(x), csv.num(y), value]);
        }
    }
    csv.finish()
}

/// Linear blend between two `#rrggbb` colors.
fn blend(a: (u8, u8, u8), b: (u8, u8, u8), f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let ch = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(a.0, b.0), ch(a.1, b.1), ch(a.2, b.2))
}

/// Color of a normalized dilution value: blue over yellow to red.
fn heat_color(f: f64) -> String {
    let (blue, yellow, red) = ((0x2c, 0x7b, 0xb6), (0xff, 0xff, 0xbf), (0xd7, 0x19, 0x1c));
    if f < 0.5 {
        blend(blue, yellow, f * 2.0)
    } else {
        blend(yellow, red, (f - 0.5) * 2.0)
    }
}

/// Dilution heatmap with the infrastructure overlaid: master diamond,
/// anchor squares. Degenerate cells stay blank.
pub fn emit_pdop_map_svg(
    network: &NetworkGeometry,
    x_bounds: (f64, f64),
    y_bounds: (f64, f64),
    map: &[Vec<Option<f64>>],
) -> String {
    let values: Vec<f64> = map.iter().flatten().filter_map(|c| *c).filter(|v| v.is_finite()).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut canvas = SvgCanvas::new(640.0, 560.0);
    let frame = PlotFrame {
        x0: 60.0,
        y0: 30.0,
        w: 520.0,
        h: 450.0,
        xmin: x_bounds.0,
        xmax: x_bounds.1,
        ymin: y_bounds.0,
        ymax: y_bounds.1,
    };
    let ny = map.len();
    for (iy, row) in map.iter().enumerate() {
        let nx = row.len();
        for (ix, cell) in row.iter().enumerate() {
            let Some(v) = cell else { continue };
            // Cells are centered on their sample points; edge cells extend
            // half a step past the bounds so the grid tiles the frame.
            let dx = frame.w / nx as f64;
            let dy = frame.h / ny as f64;
            let cx = frame.px(grid_coord(x_bounds, ix, nx));
            let cy = frame.py(grid_coord(y_bounds, iy, ny));
            let f = if v.is_finite() { (v - lo) / span } else { 1.0 };
            canvas.rect(cx - dx / 2.0, cy - dy / 2.0, dx, dy, &heat_color(f), "none");
        }
    }
    frame.draw_axes(&mut canvas, "x, m", "y, m");
    for a in &network.anchors {
        canvas.rect(frame.px(a.x) - 4.0, frame.py(a.y) - 4.0, 8.0, 8.0, "#000000", "none");
    }
    let (mx, my) = (frame.px(network.master.x), frame.py(network.master.y));
    canvas.polyline(
        &[(mx, my - 6.0), (mx + 6.0, my), (mx, my + 6.0), (mx - 6.0, my), (mx, my - 6.0)],
        "#000000",
        2.0,
        None,
    );
    // Legend: the color ramp with its endpoints labeled.
    let (lx, ly, lw) = (60.0, 520.0, 200.0);
    let steps = 40;
    for i in 0..steps {
        let f = i as f64 / (steps - 1) as f64;
        canvas.rect(lx + lw * i as f64 / steps as f64, ly, lw / steps as f64 + 1.0, 12.0, &heat_color(f), "none");
    }
    if values.is_empty() {
        canvas.text(lx + lw + 10.0, ly + 10.0, 11.0, "start", "pdop: no valid cells");
    } else {
        canvas.text(lx, ly + 24.0, 11.0, "start", &format!("{lo:.2}"));
        canvas.text(lx + lw, ly + 24.0, 11.0, "end", &format!("{hi:.2}"));
        canvas.text(lx + lw + 10.0, ly + 10.0, 11.0, "start", "pdop");
    }
    canvas.finish()
}
