use std::cell::Cell;
use std::time::{Duration, Instant};

/// Monotonic time source used for update-time accounting.
pub trait Clock {
    fn now(&self) -> Duration;
}

#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Advances by a fixed tick on every reading. Useful in tests: each timed
/// interval measures exactly one tick, whatever ran inside it.
#[derive(Debug, Clone)]
pub struct TickingClock {
    tick: Duration,
    readings: Cell<u32>,
}

impl TickingClock {
    pub fn new(tick: Duration) -> Self {
        Self {
            tick,
            readings: Cell::new(0),
        }
    }

    pub fn readings(&self) -> u32 {
        self.readings.get()
    }
}

impl Clock for TickingClock {
    fn now(&self) -> Duration {
        let n = self.readings.get();
        self.readings.set(n + 1);
        self.tick * n
    }
}
