//! Energest-style time accounting and the current profile that turns it into
//! energy and power.

use thiserror::Error;

use crate::time::{SimDuration, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnergyError {
    #[error("averaging window must be longer than zero")]
    ZeroWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerState {
    Cpu,
    Lpm,
    Tx,
    Rx,
}

/// Cumulative time a node spent in each of the four tracked states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EnergyTimers {
    pub t_cpu: SimDuration,
    pub t_lpm: SimDuration,
    pub t_tx: SimDuration,
    pub t_rx: SimDuration,
}

impl EnergyTimers {
    pub fn accrue(mut self, state: PowerState, d: SimDuration) -> Self {
        match state {
            PowerState::Cpu => self.t_cpu += d,
            PowerState::Lpm => self.t_lpm += d,
            PowerState::Tx => self.t_tx += d,
            PowerState::Rx => self.t_rx += d,
        }
        self
    }

    /// Component-wise difference against an earlier snapshot.
    pub fn since(&self, earlier: &EnergyTimers) -> EnergyTimers {
        EnergyTimers {
            t_cpu: self.t_cpu - earlier.t_cpu,
            t_lpm: self.t_lpm - earlier.t_lpm,
            t_tx: self.t_tx - earlier.t_tx,
            t_rx: self.t_rx - earlier.t_rx,
        }
    }
}

/// Per-state supply currents. Defaults are the Z1 datasheet values at 3 V.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentProfile {
    pub i_lpm_ma: f64,
    pub i_cpu_ma: f64,
    pub i_tx_ma: f64,
    pub i_rx_ma: f64,
    pub voltage: f64,
}

impl Default for CurrentProfile {
    fn default() -> Self {
        CurrentProfile {
            i_lpm_ma: 0.020,
            i_cpu_ma: 0.426,
            i_tx_ma: 17.4,
            i_rx_ma: 18.8,
            voltage: 3.0,
        }
    }
}

impl CurrentProfile {
    /// Charge drawn in mA·s. Radio currents add on top of CPU/LPM.
    pub fn charge_mas(&self, t: &EnergyTimers) -> f64 {
        t.t_cpu.as_secs_f64() * self.i_cpu_ma
            + t.t_lpm.as_secs_f64() * self.i_lpm_ma
            + t.t_tx.as_secs_f64() * self.i_tx_ma
            + t.t_rx.as_secs_f64() * self.i_rx_ma
    }

    /// Energy in millijoules.
    pub fn energy_mj(&self, t: &EnergyTimers) -> f64 {
        self.voltage * self.charge_mas(t)
    }
}

/// Mean power in mW over `window`.
pub fn average_power(
    timers: &EnergyTimers,
    profile: &CurrentProfile,
    window: SimDuration,
) -> Result<f64, EnergyError> {
    if window.ticks() == 0 {
        return Err(EnergyError::ZeroWindow);
    }
    Ok(profile.energy_mj(timers) / window.as_secs_f64())
}

/// CPU activity as a chain of busy periods. Work requested at `now` starts
/// when the CPU is next free, so booked time never overlaps and never leads
/// the clock by more than the outstanding backlog.
#[derive(Clone, Debug, Default)]
pub struct CpuLedger {
    booked: u64,
    busy_until: SimTime,
}

impl CpuLedger {
    pub fn book(&mut self, now: SimTime, cost: SimDuration) {
        let start = self.busy_until.max(now);
        self.busy_until = start + cost;
        self.booked += cost.ticks();
    }

    /// CPU time elapsed by instant `s` (caller guarantees no booking after `s`
    /// began before `s`).
    pub fn cpu_at(&self, s: SimTime) -> SimDuration {
        let tail = self.busy_until.ticks().saturating_sub(s.ticks());
        SimDuration(self.booked - tail.min(self.booked))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadioState {
    Tx,
    Rx,
}

/// Radio on-time as a union of intervals. A later booking that overlaps an
/// earlier one only pays for the uncovered part, so `tx + rx` never exceeds
/// wall time.
#[derive(Clone, Debug, Default)]
pub struct RadioLedger {
    done_tx: u64,
    done_rx: u64,
    /// Sorted, disjoint, all ending after the last prune point.
    pending: Vec<(u64, u64, RadioState)>,
}

impl RadioLedger {
    fn prune(&mut self, now: SimTime) {
        let now = now.ticks();
        let mut keep = Vec::with_capacity(self.pending.len());
        for seg in self.pending.drain(..) {
            if seg.1 <= now {
                match seg.2 {
                    RadioState::Tx => self.done_tx += seg.1 - seg.0,
                    RadioState::Rx => self.done_rx += seg.1 - seg.0,
                }
            } else {
                keep.push(seg);
            }
        }
        self.pending = keep;
    }

    /// Books `[start, start + d)` in `state`. `start` must not precede `now`.
    /// Returns the ticks actually added.
    pub fn book(&mut self, now: SimTime, state: RadioState, start: SimTime, d: SimDuration) -> u64 {
        debug_assert!(start >= now);
        self.prune(now);
        let (mut a, b) = (start.ticks(), start.ticks() + d.ticks());
        let mut added = Vec::new();
        for &(s, e, _) in &self.pending {
            if e <= a {
                continue;
            }
            if s >= b {
                break;
            }
            if s > a {
                added.push((a, s, state));
            }
            a = a.max(e);
            if a >= b {
                break;
            }
        }
        if a < b {
            added.push((a, b, state));
        }
        let total = added.iter().map(|(s, e, _)| e - s).sum();
        self.pending.extend(added);
        self.pending.sort_by_key(|seg| seg.0);
        total
    }

    /// End of the last booked TX segment, if still in the future of `now`.
    pub fn busy_until(&self) -> Option<SimTime> {
        self.pending.iter().map(|s| SimTime(s.1)).max()
    }

    /// Radio time elapsed by instant `s`.
    pub fn at(&self, s: SimTime) -> (SimDuration, SimDuration) {
        let s = s.ticks();
        let (mut tx, mut rx) = (self.done_tx, self.done_rx);
        for &(a, b, st) in &self.pending {
            if a >= s {
                continue;
            }
            let part = b.min(s) - a;
            match st {
                RadioState::Tx => tx += part,
                RadioState::Rx => rx += part,
            }
        }
        (SimDuration(tx), SimDuration(rx))
    }
}

/// A node's full energy state.
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    pub cpu: CpuLedger,
    pub radio: RadioLedger,
}

impl EnergyLedger {
    /// Timers as of instant `s` (elapsed since time zero).
    pub fn timers_at(&self, s: SimTime) -> EnergyTimers {
        let t_cpu = self.cpu.cpu_at(s);
        let (t_tx, t_rx) = self.radio.at(s);
        EnergyTimers {
            t_cpu,
            t_lpm: SimDuration(s.ticks() - t_cpu.ticks()),
            t_tx,
            t_rx,
        }
    }
}
