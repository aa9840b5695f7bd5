//! Two-stage wireless clock alignment.
//!
//! Stage 1: the master broadcasts two timestamped messages; each anchor
//! estimates its relative clock rate and offset from the receive stamps and
//! the surveyed time of flight, then converts its own timestamps to the
//! master timescale. Stage 2: a passive tag estimates its rate relative to
//! the master from any broadcast pair (syntonization, rates only).
//!
//! Conversion to the master timescale is exact up to a deterministic
//! residual proportional to (1 - anchor_rate) * tof: the receive stamps
//! absorb the flight time, so the offset estimate is biased by the part of
//! the flight time the anchor clock does not tick through. The residual is
//! carried explicitly, never dropped.

use serde::{Deserialize, Serialize};

use crate::clocks::ClockModel;
use crate::{Error, Result};

/// Receive/transmit stamps of one two-message sync exchange, as seen by one
/// anchor, plus the known master-to-anchor time of flight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncObservation {
    /// Master transmit stamp of the first message (master clock).
    pub master_tx_1: f64,
    /// Master transmit stamp of the second message (master clock).
    pub master_tx_2: f64,
    /// Anchor receive stamp of the first message (anchor clock).
    pub anchor_rx_1: f64,
    /// Anchor receive stamp of the second message (anchor clock).
    pub anchor_rx_2: f64,
    /// Surveyed master-to-anchor time of flight, seconds.
    pub tof_im: f64,
}

/// Which offset estimate a sync state carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// First-message estimate only.
    Single,
    /// Mean of the first-message and second-message estimates.
    Averaged,
}

/// Per-anchor snapshot of the estimated clock relation to the master.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncState {
    /// Estimated anchor rate over master rate.
    pub rel_rate: f64,
    /// Estimated relative offset, seconds.
    pub rel_offset: f64,
    /// Deterministic conversion residual (1 - anchor_rate)/rel_rate * tof,
    /// seconds. Known only to the simulation (it needs the true anchor
    /// rate); zero when truth is unavailable.
    pub residual: f64,
}

impl SyncState {
    /// Estimates rate and offset from one observation. The residual is left
    /// at zero; simulations that know the true anchor rate fill it with
    /// [`conversion_residual`].
    pub fn estimate(obs: &SyncObservation, mode: OffsetMode) -> Result<SyncState> {
        let rel_rate = estimate_rel_rate(obs)?;
        let first = estimate_rel_offset(obs, rel_rate);
        let rel_offset = match mode {
            OffsetMode::Single => first,
            OffsetMode::Averaged => {
                average_rel_offset(first, estimate_rel_offset_delayed(obs, rel_rate))
            }
        };
        Ok(SyncState { rel_rate, rel_offset, residual: 0.0 })
    }

    /// Identity state: anchor clock treated as already on the master
    /// timescale.
    pub fn identity() -> SyncState {
        SyncState { rel_rate: 1.0, rel_offset: 0.0, residual: 0.0 }
    }
}

/// Relative clock rate: ratio of the anchor receive span to the master
/// transmit span. With exact stamps this equals anchor_rate/master_rate.
pub fn estimate_rel_rate(obs: &SyncObservation) -> Result<f64> {
    let dt = obs.master_tx_2 - obs.master_tx_1;
    if dt == 0.0 {
        return Err(Error::ZeroInterval);
    }
    Ok((obs.anchor_rx_2 - obs.anchor_rx_1) / dt)
}

/// Relative offset from the first message:
/// anchor_rx_1 - rel_rate * master_tx_1 - tof.
pub fn estimate_rel_offset(obs: &SyncObservation, rel_rate: f64) -> f64 {
    obs.anchor_rx_1 - rel_rate * obs.master_tx_1 - obs.tof_im
}

/// Relative offset from the delayed (second) message; equals the
/// first-message estimate when the stamps are exact.
pub fn estimate_rel_offset_delayed(obs: &SyncObservation, rel_rate: f64) -> f64 {
    obs.anchor_rx_2 - rel_rate * obs.master_tx_2 - obs.tof_im
}

/// Mean of the two single-message offset estimates.
pub fn average_rel_offset(first: f64, second: f64) -> f64 {
    0.5 * (first + second)
}

/// Converts an anchor-clock timestamp to the master timescale:
/// (anchor_ts - rel_offset)/rel_rate. With exact stamps the result is the
/// master reading at the same instant plus the state's residual.
pub fn to_master_timescale(anchor_ts: f64, state: &SyncState) -> f64 {
    (anchor_ts - state.rel_offset) / state.rel_rate
}

/// Deterministic error of [`to_master_timescale`] under exact stamps:
/// (1 - anchor_rate)/rel_rate * tof.
pub fn conversion_residual(anchor_rate: f64, rel_rate: f64, tof_im: f64) -> f64 {
    (1.0 - anchor_rate) / rel_rate * tof_im
}

/// Tag rate relative to the master from two received broadcasts: ratio of
/// the tag receive span to the sender's master-timescale transmit span.
/// Static tags get exactly tag_rate/master_rate with exact stamps; motion
/// toward or away from the sender scales the result by up to
/// 1 ± speed/c.
pub fn estimate_tag_rate(
    tag_rx_1: f64,
    tag_rx_2: f64,
    anchor_master_ts_1: f64,
    anchor_master_ts_2: f64,
) -> Result<f64> {
    let dt = anchor_master_ts_2 - anchor_master_ts_1;
    if dt == 0.0 {
        return Err(Error::ZeroInterval);
    }
    Ok((tag_rx_2 - tag_rx_1) / dt)
}

/// Simulates one sync exchange: the master transmits at true times
/// `t_first` and `t_first + gap`, the anchor receives each message one time
/// of flight later, and both nodes stamp with their own (noisy) clocks.
pub fn observe_sync(
    master_clock: &ClockModel,
    anchor_clock: &ClockModel,
    tof_im: f64,
    t_first: f64,
    gap: f64,
    rng: &mut impl rand::Rng,
) -> Result<SyncObservation> {
    if gap <= 0.0 {
        return Err(Error::ZeroInterval);
    }
    Ok(SyncObservation {
        master_tx_1: master_clock.read_measured(t_first, rng),
        master_tx_2: master_clock.read_measured(t_first + gap, rng),
        anchor_rx_1: anchor_clock.read_measured(t_first + tof_im, rng),
        anchor_rx_2: anchor_clock.read_measured(t_first + gap + tof_im, rng),
        tof_im,
    })
}
