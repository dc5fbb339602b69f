//! Trickle timer (RFC 6206) as a pure state machine.
//!
//! The owner schedules a wake-up at the instant returned by each call and
//! feeds it back through [`Trickle::fire`]. Each interval has two wake-ups:
//! the transmission point `t` and the interval end.

use rand::Rng;

use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrickleConfig {
    pub i_min: SimDuration,
    pub doublings: u32,
    /// Redundancy constant.
    pub k: u32,
}

impl Default for TrickleConfig {
    fn default() -> Self {
        TrickleConfig {
            i_min: SimDuration::from_millis(4_096),
            doublings: 8,
            k: 10,
        }
    }
}

impl TrickleConfig {
    pub fn i_max(&self) -> SimDuration {
        self.i_min.saturating_mul(1u64 << self.doublings.min(40))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Transmit,
    IntervalEnd,
}

#[derive(Clone, Debug)]
pub struct Trickle {
    cfg: TrickleConfig,
    interval: SimDuration,
    start: SimTime,
    t: SimDuration,
    counter: u32,
    phase: Phase,
    running: bool,
    seen_min: Option<SimDuration>,
    seen_max: Option<SimDuration>,
}

/// Outcome of a timer wake-up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fired {
    pub transmit: bool,
    pub next: SimTime,
}

impl Trickle {
    pub fn new(cfg: TrickleConfig) -> Self {
        Trickle {
            cfg,
            interval: cfg.i_min,
            start: SimTime::ZERO,
            t: SimDuration::ZERO,
            counter: 0,
            phase: Phase::Transmit,
            running: false,
            seen_min: None,
            seen_max: None,
        }
    }

    pub fn config(&self) -> &TrickleConfig {
        &self.cfg
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn interval(&self) -> SimDuration {
        self.interval
    }

    pub fn counter(&self) -> u32 {
        self.counter
    }

    /// Smallest and largest interval this timer has ever used.
    pub fn observed_bounds(&self) -> Option<(SimDuration, SimDuration)> {
        Some((self.seen_min?, self.seen_max?))
    }

    /// When the owner should call [`Trickle::fire`] next.
    pub fn next_fire(&self) -> SimTime {
        match self.phase {
            Phase::Transmit => self.start + self.t,
            Phase::IntervalEnd => self.start + self.interval,
        }
    }

    fn begin_interval<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> SimTime {
        let half = self.interval.ticks() / 2;
        let t = rng.gen_range(half..self.interval.ticks().max(half + 1));
        self.start = now;
        self.t = SimDuration(t);
        self.counter = 0;
        self.phase = Phase::Transmit;
        self.seen_min = Some(self.seen_min.map_or(self.interval, |m| m.min(self.interval)));
        self.seen_max = Some(self.seen_max.map_or(self.interval, |m| m.max(self.interval)));
        self.next_fire()
    }

    /// Starts (or restarts) at `i_min` unconditionally.
    pub fn start<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> SimTime {
        self.running = true;
        self.interval = self.cfg.i_min;
        self.begin_interval(now, rng)
    }

    pub fn stop(&mut self) {
        self.running = false;
    }

    /// Reaction to an inconsistency. Per RFC 6206 this does nothing while the
    /// interval is already `i_min`; returns the new wake-up time when the
    /// schedule changed.
    pub fn reset<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Option<SimTime> {
        if !self.running {
            return Some(self.start(now, rng));
        }
        if self.interval > self.cfg.i_min {
            self.interval = self.cfg.i_min;
            Some(self.begin_interval(now, rng))
        } else {
            None
        }
    }

    /// A consistent transmission was heard.
    pub fn hear_consistent(&mut self) {
        self.counter = self.counter.saturating_add(1);
    }

    pub fn fire<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Fired {
        match self.phase {
            Phase::Transmit => {
                self.phase = Phase::IntervalEnd;
                Fired {
                    transmit: self.counter < self.cfg.k,
                    next: self.next_fire(),
                }
            }
            Phase::IntervalEnd => {
                self.interval = (self.interval + self.interval).min(self.cfg.i_max());
                Fired {
                    transmit: false,
                    next: self.begin_interval(now, rng),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn first_transmission_lands_in_upper_half_of_i_min() {
        let cfg = TrickleConfig::default();
        for seed in 0..50 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut tr = Trickle::new(cfg);
            let at = tr.start(SimTime::ZERO, &mut r);
            assert!(at.ticks() >= 2_048_000 && at.ticks() < 4_096_000, "{at}");
            assert!(tr.fire(at, &mut r).transmit);
        }
    }

    #[test]
    fn interval_caps_after_all_doublings() {
        let mut r = rng();
        let mut tr = Trickle::new(TrickleConfig::default());
        let mut next = tr.start(SimTime::ZERO, &mut r);
        for _ in 0..40 {
            next = tr.fire(next, &mut r).next;
        }
        assert_eq!(tr.interval().ticks(), 1_048_576_000);
        assert_eq!(TrickleConfig::default().i_max().ticks(), 1_048_576_000);
    }

    #[test]
    fn suppressed_when_counter_reaches_k() {
        let mut r = rng();
        let mut tr = Trickle::new(TrickleConfig::default());
        let at = tr.start(SimTime::ZERO, &mut r);
        for _ in 0..10 {
            tr.hear_consistent();
        }
        assert!(!tr.fire(at, &mut r).transmit);
    }

    #[test]
    fn reset_returns_to_i_min_with_fresh_counter() {
        let mut r = rng();
        let mut tr = Trickle::new(TrickleConfig::default());
        let mut next = tr.start(SimTime::ZERO, &mut r);
        for _ in 0..6 {
            next = tr.fire(next, &mut r).next;
        }
        assert!(tr.interval() > tr.config().i_min);
        tr.hear_consistent();
        let now = SimTime::from_secs(30);
        let at = tr.reset(now, &mut r).expect("interval above i_min resets");
        assert_eq!(tr.interval(), tr.config().i_min);
        assert_eq!(tr.counter(), 0);
        assert!(at >= now + SimDuration(2_048_000) && at < now + SimDuration(4_096_000));
    }

    #[test]
    fn reset_at_i_min_is_a_no_op() {
        let mut r = rng();
        let mut tr = Trickle::new(TrickleConfig::default());
        let at = tr.start(SimTime::ZERO, &mut r);
        assert_eq!(tr.reset(SimTime(1), &mut r), None);
        assert_eq!(tr.next_fire(), at);
    }

    proptest! {
        #[test]
        fn intervals_stay_within_bounds(seed in any::<u64>(), ops in proptest::collection::vec(0u8..3, 1..200)) {
            let cfg = TrickleConfig { i_min: SimDuration::from_millis(100), doublings: 5, k: 3 };
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut tr = Trickle::new(cfg);
            let mut now = SimTime::ZERO;
            let mut next = tr.start(now, &mut r);
            for op in ops {
                match op {
                    0 => { now = next; next = tr.fire(now, &mut r).next; }
                    1 => { tr.hear_consistent(); }
                    _ => { if let Some(n) = tr.reset(now, &mut r) { next = n; } }
                }
                prop_assert!(next >= now);
                prop_assert!(tr.interval() >= cfg.i_min && tr.interval() <= cfg.i_max());
            }
            let (lo, hi) = tr.observed_bounds().unwrap();
            prop_assert!(lo >= cfg.i_min && hi <= cfg.i_max());
        }
    }
}
