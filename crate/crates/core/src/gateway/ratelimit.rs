//! Sliding-window rate limiter: at most `max` grants inside any window.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

#[derive(Debug)]
pub struct RateLimiter {
    window: Duration,
    max: usize,
    grants: VecDeque<Instant>,
}

impl RateLimiter {
    pub fn new(window: Duration, max: u32) -> Self {
        RateLimiter {
            window,
            max: max.max(1) as usize,
            grants: VecDeque::new(),
        }
    }

    pub fn per_minute(max: u32) -> Self {
        Self::new(Duration::from_secs(60), max)
    }

    /// Try to take a slot at `now`. `None` means granted (and recorded);
    /// `Some(wait)` means the window is full for that long.
    pub fn acquire(&mut self, now: Instant) -> Option<Duration> {
        while let Some(&front) = self.grants.front() {
            if now.duration_since(front) >= self.window {
                self.grants.pop_front();
            } else {
                break;
            }
        }
        if self.grants.len() < self.max {
            self.grants.push_back(now);
            None
        } else {
            let front = *self.grants.front().expect("non-empty at capacity");
            Some(self.window - now.duration_since(front))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_window_ever_exceeds_the_limit() {
        let mut limiter = RateLimiter::new(Duration::from_secs(60), 5);
        let start = Instant::now();
        let mut granted: Vec<Duration> = Vec::new();
        let mut t = Duration::ZERO;

        // Greedy client: ask as fast as allowed for simulated 5 minutes.
        while t < Duration::from_secs(300) {
            match limiter.acquire(start + t) {
                None => {
                    granted.push(t);
                    t += Duration::from_millis(10);
                }
                Some(wait) => t += wait,
            }
        }

        for (i, &gt) in granted.iter().enumerate() {
            let in_window = granted[..=i]
                .iter()
                .rev()
                .take_while(|&&g| gt - g < Duration::from_secs(60))
                .count();
            assert!(in_window <= 5, "window ending at {gt:?} holds {in_window}");
        }
        assert!(granted.len() >= 20, "limiter should keep granting over time");
    }

    #[test]
    fn grants_free_up_after_the_window() {
        let mut limiter = RateLimiter::new(Duration::from_secs(60), 2);
        let start = Instant::now();
        assert!(limiter.acquire(start).is_none());
        assert!(limiter.acquire(start).is_none());
        let wait = limiter.acquire(start + Duration::from_secs(1)).unwrap();
        assert_eq!(wait, Duration::from_secs(59));
        assert!(limiter.acquire(start + Duration::from_secs(61)).is_none());
    }
}
