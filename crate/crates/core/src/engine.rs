//! Deterministic discrete-event core.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is assigned at schedule
//! time, so two events due at the same instant run in the order they were
//! scheduled.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

/// Simulation time in integer picoseconds since the start of the run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * 1_000)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000_000)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-12
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Time to push `bytes` through a link of `bytes_per_sec`, rounded up to
    /// the next picosecond.
    pub fn serialization(bytes: u64, bytes_per_sec: u64) -> SimTime {
        debug_assert!(bytes_per_sec > 0);
        let ps = (bytes as u128 * 1_000_000_000_000u128).div_ceil(bytes_per_sec as u128);
        SimTime(ps as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// A scheduled event as seen by the handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: E,
}

/// Opaque handle returned by [`Engine::schedule`]; used to cancel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    fire_at: SimTime,
    seq: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub events_processed: u64,
    pub final_time: SimTime,
}

/// How far [`Engine::run`] goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunBound {
    /// Until the queue is empty.
    Drain,
    /// Process events with `fire_at <= t` only.
    Until(SimTime),
}

/// Handler return value: keep going or abort the run.
pub type HandlerResult<Err> = Result<(), Err>;

pub struct Engine<E> {
    now: SimTime,
    next_seq: u64,
    queue: BTreeMap<(SimTime, u64), E>,
    start: SimTime,
    processed: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Self::starting_at(SimTime::ZERO)
    }

    pub fn starting_at(start: SimTime) -> Self {
        Engine {
            now: start,
            next_seq: 0,
            queue: BTreeMap::new(),
            start,
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_drained(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::SchedulingInPast {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((fire_at, seq), payload);
        Ok(EventHandle { fire_at, seq })
    }

    /// Schedule `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.queue.remove(&(handle.fire_at, handle.seq)).is_some()
    }

    /// Pop the next event and advance the clock to it.
    pub fn pop(&mut self) -> Option<Event<E>> {
        let ((fire_at, seq), payload) = self.queue.pop_first()?;
        debug_assert!(fire_at >= self.now);
        self.now = fire_at;
        self.processed += 1;
        Some(Event {
            fire_at,
            seq,
            payload,
        })
    }

    fn peek_time(&self) -> Option<SimTime> {
        self.queue.first_key_value().map(|((t, _), _)| *t)
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            events_processed: self.processed,
            final_time: self.now,
        }
    }

    /// Run the handler over events in `(fire_at, seq)` order. The handler may
    /// schedule and cancel through the engine reference it receives. An error
    /// from the handler stops the run and is returned as is.
    pub fn run<W, Err>(
        &mut self,
        world: &mut W,
        bound: RunBound,
        mut handler: impl FnMut(&mut Self, &mut W, Event<E>) -> HandlerResult<Err>,
    ) -> Result<SimStats, Err> {
        while let Some(next) = self.peek_time() {
            if let RunBound::Until(limit) = bound {
                if next > limit {
                    break;
                }
            }
            let ev = self.pop().expect("peeked");
            handler(self, world, ev)?;
        }
        Ok(self.stats())
    }

    /// Clock value the engine was created with.
    pub fn start_time(&self) -> SimTime {
        self.start
    }
}
