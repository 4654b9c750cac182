// SPDX-License-Identifier: Apache-2.0
//! Wired-AND synchronization bus and the per-board Sync IP.
//!
//! Each board owns one open-drain pin on a shared line with an external
//! pull-up. A board signals readiness by releasing its pin; the line reads
//! high only once every pin is released. The Sync IP samples the line into a
//! register on every `pl_refclk` edge and, when the registered sample is high
//! while it is waiting, pulses the timing processor's flag input for exactly
//! one cycle. Because every FSM consumes the same registered sample, all
//! boards pulse on the same edge.

use crate::timebase::{ClockDomain, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PinState {
    DrivenLow,
    /// High impedance; the pull-up wins if every other pin agrees.
    Released,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn is_high(self) -> bool {
        self == Level::High
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum SyncBusError {
    #[error("bus has no pins attached")]
    EmptyBus,
}

/// Wired-AND of the pin vector.
pub fn line_level(pins: &[PinState]) -> Result<Level, SyncBusError> {
    if pins.is_empty() {
        return Err(SyncBusError::EmptyBus);
    }
    Ok(if pins.iter().all(|&p| p == PinState::Released) {
        Level::High
    } else {
        Level::Low
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SyncFsm {
    Idle,
    AwaitingAll,
    Releasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SyncIpState {
    pub fsm: SyncFsm,
    pub pin: PinState,
    pub flag_out: bool,
}

impl Default for SyncIpState {
    fn default() -> Self {
        SyncIpState {
            fsm: SyncFsm::Idle,
            pin: PinState::DrivenLow,
            flag_out: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlagPulse {
    pub at: SimTime,
}

impl SyncIpState {
    /// The timing processor's readiness trigger. Idempotent while waiting.
    pub fn assert_ready(self) -> SyncIpState {
        match self.fsm {
            SyncFsm::Idle => SyncIpState {
                fsm: SyncFsm::AwaitingAll,
                pin: PinState::Released,
                flag_out: false,
            },
            _ => self,
        }
    }
}

/// Advance one Sync IP by one `pl_refclk` edge.
///
/// `line` is the registered sample taken on the previous edge.
pub fn sync_ip_step(
    state: SyncIpState,
    line: Level,
    ref_edge: SimTime,
) -> (SyncIpState, Option<FlagPulse>) {
    match state.fsm {
        SyncFsm::Idle => (SyncIpState { flag_out: false, ..state }, None),
        SyncFsm::AwaitingAll if line.is_high() => (
            SyncIpState {
                fsm: SyncFsm::Releasing,
                pin: PinState::DrivenLow,
                flag_out: true,
            },
            Some(FlagPulse { at: ref_edge }),
        ),
        SyncFsm::AwaitingAll => (state, None),
        SyncFsm::Releasing => (SyncIpState::default(), None),
    }
}

/// The shared line plus one Sync IP per board, stepped two-phase: every FSM
/// sees the sample registered on the previous edge, then the line is
/// re-sampled from the updated pins.
#[derive(Clone, Debug)]
pub struct SyncBus {
    ips: Vec<SyncIpState>,
    /// Time at which each pin was last released.
    released_at: Vec<Option<SimTime>>,
    registered: Level,
    pub propagation_delay: SimTime,
}

impl SyncBus {
    pub fn new(boards: usize, propagation_delay: SimTime) -> Result<Self, SyncBusError> {
        if boards == 0 {
            return Err(SyncBusError::EmptyBus);
        }
        Ok(SyncBus {
            ips: vec![SyncIpState::default(); boards],
            released_at: vec![None; boards],
            registered: Level::Low,
            propagation_delay,
        })
    }

    pub fn boards(&self) -> usize {
        self.ips.len()
    }

    pub fn ip(&self, board: usize) -> SyncIpState {
        self.ips[board]
    }

    pub fn pins(&self) -> Vec<PinState> {
        self.ips.iter().map(|s| s.pin).collect()
    }

    pub fn registered_level(&self) -> Level {
        self.registered
    }

    /// First phase of an edge: every FSM consumes the registered sample.
    /// Returns the flag input seen by each board on this edge.
    pub fn clock_fsms(&mut self, edge: SimTime) -> Vec<bool> {
        let line = self.registered;
        self.ips
            .iter_mut()
            .zip(self.released_at.iter_mut())
            .map(|(ip, rel)| {
                let (next, flag) = sync_ip_step(*ip, line, edge);
                if next.pin == PinState::DrivenLow {
                    *rel = None;
                }
                *ip = next;
                flag.is_some()
            })
            .collect()
    }

    /// Readiness trigger from board `b`, effective at `t`.
    pub fn assert_ready(&mut self, b: usize, t: SimTime) {
        let before = self.ips[b];
        self.ips[b] = before.assert_ready();
        if before.pin == PinState::DrivenLow && self.ips[b].pin == PinState::Released {
            self.released_at[b] = Some(t);
        }
    }

    /// Level of the line at time `t` given the current pins, including the
    /// propagation delay from the last release. Ideal pull-up.
    pub fn level_at(&self, t: SimTime) -> Level {
        let mut last = SimTime(i64::MIN);
        for rel in &self.released_at {
            match rel {
                Some(r) => last = last.max(*r),
                None => return Level::Low,
            }
        }
        if last + self.propagation_delay <= t {
            Level::High
        } else {
            Level::Low
        }
    }

    /// Second phase of an edge: register the line sample taken at `edge`.
    pub fn sample(&mut self, edge: SimTime) {
        self.registered = self.level_at(edge);
    }

    /// True when no FSM can change state until some pin changes.
    pub fn quiescent(&self) -> bool {
        self.registered == Level::Low
            && !self.ips.iter().any(|s| s.fsm == SyncFsm::Releasing)
            && self.released_at.iter().any(|r| r.is_none())
    }
}

/// Common flag edge for a barrier: the first `pl_refclk` edge at or after
/// `max(ready) + delay`, plus one FSM cycle. `None` when some board never
/// becomes ready.
pub fn barrier_release_time(
    ready_times: &[Option<SimTime>],
    refclk: &ClockDomain,
    propagation_delay: SimTime,
) -> Option<SimTime> {
    if ready_times.is_empty() {
        return None;
    }
    let mut latest = SimTime(i64::MIN);
    for r in ready_times {
        latest = latest.max((*r)?);
    }
    let edge = refclk.first_edge_at_or_after(latest + propagation_delay);
    Some(refclk.nominal_edge(edge + 1))
}
