//! Discrete-event engine: virtual clock, cancellable priority queue and
//! per-node random streams.
//!
//! Events are ordered by `(fire_at, seq)`. `seq` is a monotone insertion
//! counter, so two events scheduled for the same instant dispatch in the order
//! they were scheduled. Nothing here depends on hash iteration order or wall
//! clock, which makes a run a pure function of its inputs.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::time::SimTime;
use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {at} which is before the current time {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Handle returned by [`Scheduler::schedule`]; pass it to [`Scheduler::cancel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Clone, Debug)]
pub struct Event<K> {
    pub fire_at: SimTime,
    pub target: NodeId,
    pub kind: K,
    pub seq: u64,
}

impl<K> Event<K> {
    pub fn handle(&self) -> EventHandle {
        EventHandle(self.seq)
    }
}

struct Queued<K>(Event<K>);

impl<K> PartialEq for Queued<K> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<K> Eq for Queued<K> {}

impl<K> PartialOrd for Queued<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Queued<K> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Implemented by event payloads so the dispatch digest can tell kinds apart.
pub trait EventTag {
    fn tag(&self) -> u8;
}

/// The simulation clock and pending-event queue.
pub struct Scheduler<K> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<K>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
    digest: u64,
    log: Option<Vec<(SimTime, NodeId, u8, u64)>>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_mix(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl<K: EventTag> Default for Scheduler<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: EventTag> Scheduler<K> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
            digest: FNV_OFFSET,
            log: None,
        }
    }

    /// Keep a full `(time, target, tag, seq)` record of every dispatched event.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> Option<&[(SimTime, NodeId, u8, u64)]> {
        self.log.as_deref()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Running FNV-1a digest over the dispatch sequence.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: NodeId,
        kind: K,
    ) -> Result<EventHandle, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::SchedulingInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            fire_at,
            target,
            kind,
            seq,
        }));
        Ok(EventHandle(seq))
    }

    /// Cancels a pending event. Returns false if it already fired or was cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        if !self.queue.iter().any(|q| q.0.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<K>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > t_end {
                return None;
            }
            let Queued(ev) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.dispatched += 1;
            let tag = ev.kind.tag();
            let mut h = fnv_mix(self.digest, &ev.fire_at.0.to_le_bytes());
            h = fnv_mix(h, &ev.target.0.to_le_bytes());
            h = fnv_mix(h, &[tag]);
            self.digest = fnv_mix(h, &ev.seq.to_le_bytes());
            if let Some(log) = self.log.as_mut() {
                log.push((ev.fire_at, ev.target, tag, ev.seq));
            }
            return Some(ev);
        }
    }

    /// Moves the clock forward without dispatching. No-op if `t` is in the past.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Dispatches every event due at or before `t_end` through `handler`, then
    /// sets the clock to `t_end`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<K>),
    {
        let before = self.dispatched;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.advance_to(t_end);
        self.dispatched - before
    }

    /// Iterates over live queued events in no particular order.
    pub fn queued(&self) -> impl Iterator<Item = &Event<K>> {
        self.queue
            .iter()
            .map(|q| &q.0)
            .filter(|e| !self.cancelled.contains(&e.seq))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives the seed of a node's private stream from the run seed.
pub fn stream_seed(global_seed: u64, node: NodeId) -> u64 {
    splitmix64(global_seed ^ splitmix64(0x5250_4c00 ^ node.0 as u64))
}

/// A node's private random stream. Depends only on `(global_seed, node)`.
pub struct RngStream {
    pub node: NodeId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(global_seed: u64, node: NodeId) -> Self {
        RngStream {
            node,
            rng: ChaCha8Rng::seed_from_u64(stream_seed(global_seed, node)),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
