use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::Clock;

pub const WINDOW: Duration = Duration::from_secs(60);

/// Sliding-window limiter: at most `per_minute` dispatches in any half-open
/// 60 s window.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: usize,
    state: Mutex<LimiterState>,
}

#[derive(Debug, Default)]
struct LimiterState {
    recent: VecDeque<Duration>,
    log: Vec<Duration>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        RateLimiter { per_minute: per_minute.max(1) as usize, state: Mutex::default() }
    }

    /// Blocks (on `clock`) until a slot is free, then records a dispatch.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = clock.now();
                while st.recent.front().is_some_and(|&t| t + WINDOW <= now) {
                    st.recent.pop_front();
                }
                if st.recent.len() < self.per_minute {
                    st.recent.push_back(now);
                    st.log.push(now);
                    return now;
                }
                st.recent[0] + WINDOW - now
            };
            clock.sleep(wait);
        }
    }

    /// Every dispatch time so far, in acquisition order.
    pub fn dispatch_log(&self) -> Vec<Duration> {
        self.state.lock().unwrap().log.clone()
    }

    /// Largest number of dispatches in any half-open window of [`WINDOW`].
    pub fn max_in_window(log: &[Duration]) -> usize {
        let mut times = log.to_vec();
        times.sort();
        let mut best = 0;
        let mut lo = 0;
        for hi in 0..times.len() {
            while times[lo] + WINDOW <= times[hi] {
                lo += 1;
            }
            best = best.max(hi - lo + 1);
        }
        best
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyGate {
    limit: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

impl ConcurrencyGate {
    pub fn new(limit: usize) -> Self {
        ConcurrencyGate { limit: limit.max(1), state: Mutex::new((0, 0)), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut st = self.state.lock().unwrap();
        while st.0 >= self.limit {
            st = self.freed.wait(st).unwrap();
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        GatePermit { gate: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().0
    }

    /// Highest in-flight count observed.
    pub fn peak(&self) -> usize {
        self.state.lock().unwrap().1
    }
}

pub struct GatePermit<'a> {
    gate: &'a ConcurrencyGate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        self.gate.state.lock().unwrap().0 -= 1;
        self.gate.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::SimClock;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn limiter_spaces_dispatches() {
        let clock = SimClock::new();
        let rl = RateLimiter::new(3);
        for _ in 0..7 {
            rl.acquire(&clock);
        }
        let secs: Vec<u64> = rl.dispatch_log().iter().map(|d| d.as_secs()).collect();
        assert_eq!(secs, vec![0, 0, 0, 60, 60, 60, 120]);
        assert_eq!(RateLimiter::max_in_window(&rl.dispatch_log()), 3);
    }

    #[test]
    fn max_in_window_oracle() {
        let s = |v: &[u64]| v.iter().map(|&x| Duration::from_secs(x)).collect::<Vec<_>>();
        assert_eq!(RateLimiter::max_in_window(&s(&[])), 0);
        assert_eq!(RateLimiter::max_in_window(&s(&[0, 59, 60, 61])), 3);
        assert_eq!(RateLimiter::max_in_window(&s(&[0, 60, 120])), 1);
    }

    #[test]
    fn gate_bounds_concurrency() {
        let gate = ConcurrencyGate::new(3);
        let live = AtomicUsize::new(0);
        let worst = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = gate.acquire();
                    let n = live.fetch_add(1, Ordering::SeqCst) + 1;
                    worst.fetch_max(n, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(worst.load(Ordering::SeqCst) <= 3);
        assert!(gate.peak() <= 3);
        assert_eq!(gate.in_flight(), 0);
    }
}
