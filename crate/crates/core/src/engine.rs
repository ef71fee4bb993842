//! Deterministic discrete-event scheduler.
//!
//! Owns virtual time, the event queue, run statistics and the seeded random
//! source. Events are dispatched in `(fire time, insertion order)` order, so
//! two events scheduled for the same instant fire in the order they were
//! scheduled. Fire times are quantized to integer nanoseconds: events less
//! than 1 ns apart are treated as simultaneous and fall back to insertion
//! order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;
use thiserror::Error;

pub type EventId = u64;

const NS_PER_SEC: u64 = 1_000_000_000;

fn to_ns(seconds: f64) -> u64 {
    (seconds * NS_PER_SEC as f64).round() as u64
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("negative delay")]
    NegativeDelay,
    #[error("non-finite delay")]
    NonFiniteDelay,
    #[error("engine already finished its run")]
    EngineFinished,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunError {
    #[error("run() called while a run is in progress")]
    ReentrantRun,
    #[error("engine already finished its run")]
    EngineFinished,
}

/// Statistics for a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub events_processed: u64,
    pub wall_seconds: f64,
    pub virtual_seconds: f64,
    /// Event count per virtual second; entry `k` covers the interval
    /// `(k, k+1]` seconds (events at exactly t=0 count into entry 0).
    pub events_per_interval: Vec<u64>,
}

/// Emitted once per virtual second while the run progresses.
#[derive(Debug, Clone, Copy)]
pub struct IntervalMark {
    /// Index of the completed interval; the interval ends at `second + 1` s.
    pub second: u64,
    pub events: u64,
    /// Wall-clock seconds spent inside this interval.
    pub wall_interval: f64,
    /// Wall-clock seconds since the run started.
    pub wall_total: f64,
}

struct Scheduled<E> {
    fire_at_ns: u64,
    seq: u64,
    id: EventId,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at_ns == other.fire_at_ns && self.seq == other.seq
    }
}
impl<E> Eq for Scheduled<E> {}
impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the earliest event
        match other.fire_at_ns.cmp(&self.fire_at_ns) {
            Ordering::Equal => other.seq.cmp(&self.seq),
            ord => ord,
        }
    }
}

pub struct Engine<E> {
    queue: BinaryHeap<Scheduled<E>>,
    pending: HashSet<EventId>,
    cancelled: HashSet<EventId>,
    now_ns: u64,
    next_id: EventId,
    next_seq: u64,
    running: bool,
    finished: bool,
    rng: ChaCha12Rng,
}

impl<E> Engine<E> {
    pub fn new(seed: u64) -> Self {
        Self {
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            cancelled: HashSet::new(),
            now_ns: 0,
            next_id: 0,
            next_seq: 0,
            running: false,
            finished: false,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Current virtual time in seconds.
    pub fn now(&self) -> f64 {
        self.now_ns as f64 / NS_PER_SEC as f64
    }

    /// The engine-owned seeded random source.
    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }

    /// Schedules `event` to fire `delay` seconds from now.
    pub fn schedule(&mut self, delay: f64, event: E) -> Result<EventId, ScheduleError> {
        if self.finished {
            return Err(ScheduleError::EngineFinished);
        }
        if !delay.is_finite() {
            return Err(ScheduleError::NonFiniteDelay);
        }
        if delay < 0.0 {
            return Err(ScheduleError::NegativeDelay);
        }
        let id = self.next_id;
        self.next_id += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        let fire_at_ns = self.now_ns + to_ns(delay);
        self.queue.push(Scheduled {
            fire_at_ns,
            seq,
            id,
            event,
        });
        self.pending.insert(id);
        Ok(id)
    }

    /// Cancels a pending event. Returns true iff the event existed and had
    /// not fired yet; a cancelled event never executes. Idempotent.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if self.pending.remove(&id) {
            self.cancelled.insert(id);
            true
        } else {
            false
        }
    }

    /// Dispatches events until the queue empties or the next event lies past
    /// `duration`. `dispatch` receives the engine back so handlers can
    /// schedule and cancel; `on_interval` fires once per completed virtual
    /// second.
    pub fn run<F>(
        &mut self,
        duration: f64,
        mut dispatch: F,
        mut on_interval: Option<&mut dyn FnMut(IntervalMark)>,
    ) -> Result<RunStats, RunError>
    where
        F: FnMut(&mut Engine<E>, E),
    {
        if self.running {
            return Err(RunError::ReentrantRun);
        }
        if self.finished {
            return Err(RunError::EngineFinished);
        }
        self.running = true;

        let duration_ns = to_ns(duration.max(0.0));
        let n_intervals = duration.ceil().max(0.0) as usize;
        let mut per_interval = vec![0u64; n_intervals];
        let mut events_processed = 0u64;

        let started = Instant::now();
        let mut emitted_through = 0usize; // intervals already reported
        let mut last_mark_wall = 0.0f64;

        // Events at exactly t=0 belong to interval 0; afterwards an event at
        // time t belongs to interval ceil(t) - 1.
        let bucket = |t_ns: u64| -> usize {
            if t_ns == 0 {
                0
            } else {
                ((t_ns - 1) / NS_PER_SEC) as usize
            }
        };

        loop {
            let fire_at_ns = match self.queue.peek() {
                Some(top) if top.fire_at_ns <= duration_ns => top.fire_at_ns,
                _ => break,
            };
            let scheduled = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&scheduled.id) {
                continue;
            }
            self.pending.remove(&scheduled.id);

            // Report every interval fully behind the event we are about to fire.
            if let Some(cb) = on_interval.as_mut() {
                let target = bucket(fire_at_ns);
                while emitted_through < target.min(n_intervals) {
                    let wall_total = started.elapsed().as_secs_f64();
                    cb(IntervalMark {
                        second: emitted_through as u64,
                        events: per_interval[emitted_through],
                        wall_interval: wall_total - last_mark_wall,
                        wall_total,
                    });
                    last_mark_wall = wall_total;
                    emitted_through += 1;
                }
            }

            debug_assert!(fire_at_ns >= self.now_ns, "time must not run backwards");
            self.now_ns = fire_at_ns;
            if n_intervals > 0 {
                per_interval[bucket(fire_at_ns).min(n_intervals - 1)] += 1;
            }
            events_processed += 1;
            dispatch(self, scheduled.event);
        }

        // Clock always reaches the configured end of scenario.
        self.now_ns = self.now_ns.max(duration_ns);

        if let Some(cb) = on_interval.as_mut() {
            while emitted_through < n_intervals {
                let wall_total = started.elapsed().as_secs_f64();
                cb(IntervalMark {
                    second: emitted_through as u64,
                    events: per_interval[emitted_through],
                    wall_interval: wall_total - last_mark_wall,
                    wall_total,
                });
                last_mark_wall = wall_total;
                emitted_through += 1;
            }
        }

        self.running = false;
        self.finished = true;
        Ok(RunStats {
            events_processed,
            wall_seconds: started.elapsed().as_secs_f64(),
            virtual_seconds: duration,
            events_per_interval: per_interval,
        })
    }
}
