//! Downlink broadcast schedule and the range-difference measurement engine.
//!
//! Each cycle the master transmits a timestamped frame pair, then every
//! anchor transmits its own pair in its slot, with anchor transmit stamps
//! already converted to the master timescale. A passive tag stamps each
//! arrival with its own clock, syntonizes its rate, reconstructs the
//! transmit spacing (the protocol interval), and turns the receive spacing
//! minus that interval into a range difference in meters. Tags never
//! transmit, so the update rate is independent of how many listen.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{tof, NetworkGeometry, Point, TagState};
use crate::clocks::ClockModel;
use crate::sync::{self, SyncState};
use crate::{Error, Result};

/// Transmit timing of one broadcast cycle, relative to the cycle start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadcastSchedule {
    /// Master's first transmission, seconds after cycle start.
    pub master_first_tx: f64,
    /// Gap between the master's two transmissions.
    pub master_pair_gap: f64,
    /// Per-anchor delay of the anchor's first transmission after the
    /// master's first transmission.
    pub slot_offsets: Vec<f64>,
    /// Per-anchor gap between the anchor's two transmissions.
    pub pair_gaps: Vec<f64>,
    /// Cycle length; the reciprocal is the position update rate.
    pub cycle_period: f64,
    /// Minimum spacing between any two frames.
    pub guard_time: f64,
}

pub const DEFAULT_PAIR_GAP: f64 = 200e-6;
pub const DEFAULT_SLOT_SPACING: f64 = 400e-6;
pub const DEFAULT_GUARD_TIME: f64 = 50e-6;
pub const DEFAULT_CYCLE_PERIOD: f64 = 15e-3;

impl BroadcastSchedule {
    /// Default layout: master at the cycle start, anchors in id order at
    /// 400 us spacing, 200 us pair gaps, 50 us guard, 15 ms cycle (stretched
    /// when the anchor count does not fit).
    pub fn standard(n_anchors: usize) -> Self {
        let slot_offsets: Vec<f64> =
            (0..n_anchors).map(|i| DEFAULT_SLOT_SPACING * (i + 1) as f64).collect();
        let last_tx = DEFAULT_SLOT_SPACING * n_anchors as f64 + DEFAULT_PAIR_GAP;
        BroadcastSchedule {
            master_first_tx: 0.0,
            master_pair_gap: DEFAULT_PAIR_GAP,
            slot_offsets,
            pair_gaps: vec![DEFAULT_PAIR_GAP; n_anchors],
            cycle_period: DEFAULT_CYCLE_PERIOD.max(last_tx + 2.0 * DEFAULT_SLOT_SPACING),
            guard_time: DEFAULT_GUARD_TIME,
        }
    }

    pub fn n_anchors(&self) -> usize {
        self.slot_offsets.len()
    }

    /// Transmit times of every frame, relative to cycle start, in frame
    /// order: master pair first, then each anchor's pair in id order.
    pub fn tx_times(&self) -> Vec<f64> {
        let mut times = vec![self.master_first_tx, self.master_first_tx + self.master_pair_gap];
        for (slot, gap) in self.slot_offsets.iter().zip(&self.pair_gaps) {
            let first = self.master_first_tx + slot;
            times.push(first);
            times.push(first + gap);
        }
        times
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_offsets.len() != self.pair_gaps.len() {
            return Err(Error::InvalidConfig(
                "slot_offsets and pair_gaps must have one entry per anchor".into(),
            ));
        }
        if self.master_pair_gap <= 0.0 || self.pair_gaps.iter().any(|g| *g <= 0.0) {
            return Err(Error::ZeroInterval);
        }
        if self.guard_time < 0.0 || self.master_first_tx < 0.0 {
            return Err(Error::InvalidConfig("guard time and first tx must be >= 0".into()));
        }
        for (k, slot) in self.slot_offsets.iter().enumerate() {
            if *slot <= 0.0 {
                return Err(Error::InvalidConfig(format!("slot offset {k} must be positive")));
            }
            if self.slot_offsets[..k].contains(slot) {
                return Err(Error::InvalidConfig(format!("slot offset {k} duplicates another")));
            }
        }
        let mut times = self.tx_times();
        times.sort_by(f64::total_cmp);
        for pair in times.windows(2) {
            if pair[1] - pair[0] < self.guard_time {
                return Err(Error::ScheduleOverlap { first_s: pair[0], second_s: pair[1] });
            }
        }
        let last = times.last().copied().unwrap_or(0.0);
        if self.cycle_period <= last {
            return Err(Error::InvalidConfig(
                "cycle period must exceed the last transmission".into(),
            ));
        }
        Ok(())
    }
}

/// Who transmitted a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSource {
    Master,
    Anchor(usize),
}

impl std::fmt::Display for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrameSource::Master => write!(f, "master"),
            FrameSource::Anchor(i) => write!(f, "anchor{i}"),
        }
    }
}

/// Which half of a sender's frame pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairIndex {
    First,
    Second,
}

/// One frame as stored by the tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReceivedFrame {
    pub source: FrameSource,
    /// Sender's transmit stamp on the master timescale: the raw master
    /// reading for master frames, the converted anchor reading otherwise.
    pub tx_master_ts: f64,
    /// Tag clock reading at arrival.
    pub rx_tag_ts: f64,
    pub pair_index: PairIndex,
}

/// Noiseless split of a measurement into its geometric part and the
/// deterministic conversion bias, for debugging and oracle tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthDecomposition {
    /// tag_rate * (range to anchor - range to master), meters.
    pub ideal: f64,
    /// -c * (tag_rate/master_rate) * conversion_residual, meters.
    pub bias: f64,
}

/// One range-difference observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtdoaMeasurement {
    pub anchor_id: usize,
    /// Observable in meters.
    pub value: f64,
    /// Closed-form variance in m^2, filled from the uncertainty budget when
    /// available.
    pub predicted_variance: Option<f64>,
    /// Noiseless truth split, available only in simulation.
    pub truth: Option<TruthDecomposition>,
}

/// How the tag obtains its rate relative to the master for the protocol
/// interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagRateMode {
    /// One estimate per cycle from the master's own frame pair.
    MasterPair,
    /// One estimate per anchor from that anchor's frame pair.
    PerAnchor,
}

/// Simulates one broadcast cycle for one tag and returns the frames in
/// transmit order (master pair, then each anchor pair in id order).
///
/// Transmit stamps are read from the sender's noisy clock at the true send
/// time; anchor stamps are then converted to the master timescale with that
/// anchor's sync state. Receive stamps are read from the tag's noisy clock
/// at send time plus flight time toward the tag position at the send time,
/// with the tag coasting along its velocity during the cycle.
pub fn simulate_cycle(
    geometry: &NetworkGeometry,
    master_clock: &ClockModel,
    anchor_clocks: &[ClockModel],
    tag: &TagState,
    schedule: &BroadcastSchedule,
    sync_states: &[SyncState],
    cycle_start: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ReceivedFrame>> {
    schedule.validate()?;
    let n = geometry.anchors.len();
    if anchor_clocks.len() != n || sync_states.len() != n || schedule.n_anchors() != n {
        return Err(Error::InvalidConfig(
            "anchor clocks, sync states, and schedule slots must match the anchor count".into(),
        ));
    }

    let mut frames = Vec::with_capacity(2 * (n + 1));
    let mut arrivals = Vec::with_capacity(2 * (n + 1));
    let push = |source: FrameSource,
                    pair_index: PairIndex,
                    tx_offset: f64,
                    sender_pos: Point,
                    frames: &mut Vec<ReceivedFrame>,
                    arrivals: &mut Vec<f64>,
                    rng: &mut dyn rand::RngCore| {
        let t_send = cycle_start + tx_offset;
        let tx_master_ts = match source {
            FrameSource::Master => master_clock.read_measured(t_send, rng),
            FrameSource::Anchor(i) => {
                let local = anchor_clocks[i].read_measured(t_send, rng);
                sync::to_master_timescale(local, &sync_states[i])
            }
        };
        let tag_pos = tag.position_at(t_send - cycle_start);
        let t_arrive = t_send + tof(sender_pos, tag_pos, geometry.c);
        let rx_tag_ts = tag.clock.read_measured(t_arrive, rng);
        frames.push(ReceivedFrame { source, tx_master_ts, rx_tag_ts, pair_index });
        arrivals.push(t_arrive);
    };

    let m0 = schedule.master_first_tx;
    push(FrameSource::Master, PairIndex::First, m0, geometry.master, &mut frames, &mut arrivals, rng);
    push(
        FrameSource::Master,
        PairIndex::Second,
        m0 + schedule.master_pair_gap,
        geometry.master,
        &mut frames,
        &mut arrivals,
        rng,
    );
    for i in 0..n {
        let first = m0 + schedule.slot_offsets[i];
        push(FrameSource::Anchor(i), PairIndex::First, first, geometry.anchors[i], &mut frames, &mut arrivals, rng);
        push(
            FrameSource::Anchor(i),
            PairIndex::Second,
            first + schedule.pair_gaps[i],
            geometry.anchors[i],
            &mut frames,
            &mut arrivals,
            rng,
        );
    }

    let mut sorted = arrivals.clone();
    sorted.sort_by(f64::total_cmp);
    for pair in sorted.windows(2) {
        if pair[1] - pair[0] < schedule.guard_time {
            return Err(Error::ScheduleOverlap { first_s: pair[0], second_s: pair[1] });
        }
    }
    Ok(frames)
}

/// Tag-side reconstruction of the master-timescale spacing between an
/// anchor transmission and the master transmission of the same cycle,
/// scaled into tag time by the syntonized rate.
pub fn protocol_interval(
    frame_anchor_first: &ReceivedFrame,
    frame_master_first: &ReceivedFrame,
    tag_rate: f64,
) -> f64 {
    tag_rate * (frame_anchor_first.tx_master_ts - frame_master_first.tx_master_ts)
}

/// Turns a receive-stamp difference minus the protocol interval into a
/// range difference in meters.
pub fn compute_dtdoa(
    frame_anchor: &ReceivedFrame,
    frame_master: &ReceivedFrame,
    g: f64,
    c: f64,
) -> Result<DtdoaMeasurement> {
    let anchor_id = match frame_anchor.source {
        FrameSource::Anchor(i) => i,
        FrameSource::Master => {
            return Err(Error::InvalidConfig("first argument must be an anchor frame".into()))
        }
    };
    let value = c * (frame_anchor.rx_tag_ts - frame_master.rx_tag_ts - g);
    Ok(DtdoaMeasurement { anchor_id, value, predicted_variance: None, truth: None })
}

/// Reference observable of the impossible simultaneous-transmission case:
/// tag_rate * (range to anchor - range to master). The oracle for
/// [`compute_dtdoa`].
pub fn ideal_tdoa(tag: &TagState, anchor: Point, geometry: &NetworkGeometry) -> f64 {
    use crate::geometry::distance;
    tag.clock.rate * (distance(tag.position, anchor) - distance(tag.position, geometry.master))
}

/// Noiseless truth split for a static tag, from the true clock parameters.
pub fn truth_parts(
    anchor_rate: f64,
    master_rate: f64,
    tag_rate: f64,
    tof_im: f64,
    range_diff: f64,
    c: f64,
) -> TruthDecomposition {
    let rel = anchor_rate / master_rate;
    let residual = (1.0 - anchor_rate) / rel * tof_im;
    TruthDecomposition {
        ideal: tag_rate * range_diff,
        bias: -c * (tag_rate / master_rate) * residual,
    }
}

/// Computes one measurement per anchor from a cycle's frames, using the
/// first-pair frames. Frames must contain the master pair and both frames
/// of every anchor present.
pub fn measure_cycle(
    frames: &[ReceivedFrame],
    mode: TagRateMode,
    c: f64,
) -> Result<Vec<DtdoaMeasurement>> {
    let find = |source: FrameSource, pair: PairIndex| {
        frames
            .iter()
            .find(|f| f.source == source && f.pair_index == pair)
            .ok_or_else(|| Error::InvalidConfig(format!("missing frame {source}")))
    };
    let master_first = find(FrameSource::Master, PairIndex::First)?;
    let master_second = find(FrameSource::Master, PairIndex::Second)?;
    let master_rate = sync::estimate_tag_rate(
        master_first.rx_tag_ts,
        master_second.rx_tag_ts,
        master_first.tx_master_ts,
        master_second.tx_master_ts,
    )?;

    let mut anchor_ids: Vec<usize> = frames
        .iter()
        .filter_map(|f| match f.source {
            FrameSource::Anchor(i) if f.pair_index == PairIndex::First => Some(i),
            _ => None,
        })
        .collect();
    anchor_ids.sort_unstable();

    let mut measurements = Vec::with_capacity(anchor_ids.len());
    for i in anchor_ids {
        let first = find(FrameSource::Anchor(i), PairIndex::First)?;
        let rate = match mode {
            TagRateMode::MasterPair => master_rate,
            TagRateMode::PerAnchor => {
                let second = find(FrameSource::Anchor(i), PairIndex::Second)?;
                sync::estimate_tag_rate(
                    first.rx_tag_ts,
                    second.rx_tag_ts,
                    first.tx_master_ts,
                    second.tx_master_ts,
                )?
            }
        };
        let g = protocol_interval(first, master_first, rate);
        measurements.push(compute_dtdoa(first, master_first, g, c)?);
    }
    Ok(measurements)
}
