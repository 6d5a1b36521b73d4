use std::time::{Instant, SystemTime, UNIX_EPOCH};

use grounding_core::engine::Timestamp;

/// Source of session time in milliseconds.
pub trait Clock: Send + Sync + 'static {
    fn now_ms(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Timestamp {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Timestamp)
            .unwrap_or(0)
    }
}

/// Session time running `factor` times faster than the wall clock, starting
/// at `base`. Lets tests play full-length sessions quickly.
#[derive(Debug, Clone, Copy)]
pub struct ScaledClock {
    start: Instant,
    base: Timestamp,
    factor: f64,
}

impl ScaledClock {
    pub fn new(base: Timestamp, factor: f64) -> ScaledClock {
        ScaledClock {
            start: Instant::now(),
            base,
            factor,
        }
    }
}

impl Clock for ScaledClock {
    fn now_ms(&self) -> Timestamp {
        self.base + (self.start.elapsed().as_secs_f64() * 1000.0 * self.factor) as Timestamp
    }
}
