//! Time sources and per-subject retry limiting.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
}

#[derive(Debug)]
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

/// Clock advanced by hand. Clones share the same time.
#[derive(Clone, Debug, Default)]
pub struct ManualClock {
    micros: Arc<AtomicU64>,
}

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        self.micros.fetch_add(by.as_micros() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_micros(self.micros.load(Ordering::SeqCst))
    }
}

/// Sliding-window limit on failed verifications per subject: once `limit`
/// failures fall inside the last `window`, new attempts are refused.
#[derive(Debug)]
pub struct RetryLimiter {
    limit: usize,
    window: Duration,
    failures: HashMap<String, VecDeque<Duration>>,
}

impl RetryLimiter {
    pub fn new(limit: usize, window: Duration) -> Self {
        Self {
            limit,
            window,
            failures: HashMap::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    fn prune(&mut self, subject: &str, now: Duration) -> usize {
        let window = self.window;
        match self.failures.get_mut(subject) {
            Some(q) => {
                while q.front().is_some_and(|&t| now.saturating_sub(t) >= window) {
                    q.pop_front();
                }
                q.len()
            }
            None => 0,
        }
    }

    pub fn is_blocked(&mut self, subject: &str, now: Duration) -> bool {
        self.prune(subject, now) >= self.limit
    }

    pub fn record_failure(&mut self, subject: &str, now: Duration) {
        self.prune(subject, now);
        self.failures.entry(subject.to_string()).or_default().push_back(now);
    }

    pub fn record_success(&mut self, subject: &str) {
        self.failures.remove(subject);
    }

    pub fn recent_failures(&mut self, subject: &str, now: Duration) -> usize {
        self.prune(subject, now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_slides() {
        let clock = ManualClock::default();
        let mut l = RetryLimiter::new(2, Duration::from_secs(60));
        l.record_failure("s", clock.now());
        clock.advance(Duration::from_secs(30));
        assert!(!l.is_blocked("s", clock.now()));
        l.record_failure("s", clock.now());
        assert!(l.is_blocked("s", clock.now()));
        assert!(!l.is_blocked("other", clock.now()));
        clock.advance(Duration::from_secs(30));
        assert!(!l.is_blocked("s", clock.now()));
        assert_eq!(l.recent_failures("s", clock.now()), 1);
        l.record_success("s");
        assert_eq!(l.recent_failures("s", clock.now()), 0);
    }
}
