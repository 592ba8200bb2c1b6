//! Per-endpoint token bucket.
//!
//! Capacity is one minute's allowance (`requests_per_minute` tokens) and the
//! bucket refills continuously at `requests_per_minute / 60` tokens per
//! second. A caller that finds the bucket empty reserves the next token
//! (the balance goes negative) and sleeps until it is due, so waiting
//! callers are served in arrival order. A reservation that would wait longer
//! than `max_queue` is refused instead.

use std::sync::Mutex;
use std::time::Duration;

use tokio::time::Instant;

#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_sec: f64,
    max_queue: Duration,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

/// The limiter refused to queue the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Saturated {
    pub retry_after: Duration,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32, max_queue: Duration) -> Self {
        let rpm = requests_per_minute.max(1) as f64;
        Self {
            capacity: rpm,
            per_sec: rpm / 60.0,
            max_queue,
            state: Mutex::new(Bucket {
                tokens: rpm,
                last: Instant::now(),
            }),
        }
    }

    /// Reserve one request slot, sleeping until it is due.
    pub async fn acquire(&self) -> Result<(), Saturated> {
        let wait = self.reserve(Instant::now())?;
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
        Ok(())
    }

    fn reserve(&self, now: Instant) -> Result<Duration, Saturated> {
        let mut b = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let elapsed = now.saturating_duration_since(b.last).as_secs_f64();
        b.tokens = (b.tokens + elapsed * self.per_sec).min(self.capacity);
        b.last = now;
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            return Ok(Duration::ZERO);
        }
        let wait = Duration::from_secs_f64((1.0 - b.tokens) / self.per_sec);
        if wait > self.max_queue {
            return Err(Saturated { retry_after: wait });
        }
        b.tokens -= 1.0;
        Ok(wait)
    }
}
