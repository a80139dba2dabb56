//! Discrete-event scheduling.
//!
//! Events fire in `(fire_time, sequence)` order, where `sequence` is the
//! order of scheduling. In standalone mode the queue owns the clock; in
//! managed mode a host drives it through [`ManagedModel`] and hands in its
//! own notion of now.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KernelError {
    #[error("cannot schedule at {at} s, the clock is already at {now} s")]
    PastSchedule { at: f64, now: f64 },
    #[error("host time {host} s is behind the kernel clock {now} s")]
    ClockRegression { host: f64, now: f64 },
    #[error("event due at {due} s dispatched at host time {host} s")]
    OutOfOrder { due: f64, host: f64 },
    #[error("invalid event time {0}")]
    InvalidTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HandlerId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    MobilityStep,
    SignalStep,
    /// Target handler id is the vehicle.
    TxTrigger,
    SampleSnr,
    StatFlush,
    Custom(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub fire_time: f64,
    pub sequence: u64,
    pub target: HandlerId,
    pub kind: EventKind,
}

/// Identifies a scheduled event for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Standalone,
    Managed,
}

struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_time
            .total_cmp(&self.0.fire_time)
            .then(other.0.sequence.cmp(&self.0.sequence))
    }
}

pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    cancelled: HashSet<u64>,
    next_sequence: u64,
    now: f64,
    mode: ClockMode,
    dispatched: u64,
}

impl EventQueue {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_sequence: 0,
            now: 0.0,
            mode,
            dispatched: 0,
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, at: f64, target: HandlerId, kind: EventKind) -> Result<EventHandle, KernelError> {
        if !at.is_finite() {
            return Err(KernelError::InvalidTime(at));
        }
        if at < self.now {
            return Err(KernelError::PastSchedule { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Queued(Event { fire_time: at, sequence, target, kind }));
        Ok(EventHandle(sequence))
    }

    /// Returns false if the event already fired or was cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        let pending = self.heap.iter().any(|q| q.0.sequence == handle.0);
        pending && self.cancelled.insert(handle.0)
    }

    fn skip_cancelled(&mut self) {
        while let Some(top) = self.heap.peek() {
            if !self.cancelled.remove(&top.0.sequence) {
                break;
            }
            self.heap.pop();
        }
    }

    pub fn next_event_time(&mut self) -> Option<f64> {
        self.skip_cancelled();
        self.heap.peek().map(|q| q.0.fire_time)
    }

    /// Removes the earliest event and moves the clock to its fire time.
    pub fn pop(&mut self) -> Option<Event> {
        self.skip_cancelled();
        let event = self.heap.pop()?.0;
        self.now = event.fire_time;
        self.dispatched += 1;
        Some(event)
    }

    /// Moves the clock forward without dispatching.
    pub fn advance_to(&mut self, t: f64) -> Result<(), KernelError> {
        if t < self.now {
            return Err(KernelError::ClockRegression { host: t, now: self.now });
        }
        if let Some(due) = self.next_event_time() {
            if due < t {
                return Err(KernelError::OutOfOrder { due, host: t });
            }
        }
        self.now = t;
        Ok(())
    }

    /// Managed mode: pops the next event after checking the host clock is
    /// neither behind the kernel nor past the event.
    pub fn pop_at(&mut self, host_now: f64) -> Result<Option<Event>, KernelError> {
        if host_now < self.now {
            return Err(KernelError::ClockRegression { host: host_now, now: self.now });
        }
        match self.next_event_time() {
            None => Ok(None),
            Some(due) if due < host_now => Err(KernelError::OutOfOrder { due, host: host_now }),
            Some(due) if due > host_now => Ok(None),
            Some(_) => Ok(self.pop()),
        }
    }

    /// Dispatches every event with `fire_time <= end` to `handler`, which may
    /// schedule further events. The clock ends at `end`.
    pub fn run_until<E, F>(&mut self, end: f64, mut handler: F) -> Result<(), E>
    where
        F: FnMut(&mut Self, Event) -> Result<(), E>,
        E: From<KernelError>,
    {
        while self.next_event_time().is_some_and(|t| t <= end) {
            let event = self.pop().expect("peeked");
            handler(self, event)?;
        }
        self.advance_to(end)?;
        Ok(())
    }
}

/// A model whose clock is driven by an external host simulator.
pub trait ManagedModel {
    type Error;

    fn next_event_time(&mut self) -> Option<f64>;

    /// Dispatches the next due event. `host_now` must equal its fire time.
    fn dispatch_next(&mut self, host_now: f64) -> Result<Option<Event>, Self::Error>;
}

/// Evenly spaced event times `k * period` computed without accumulation.
pub fn periodic_time(k: u64, period: f64) -> f64 {
    k as f64 * period
}
