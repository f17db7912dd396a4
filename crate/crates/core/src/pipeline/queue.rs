use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Bounded MPMC hand-off with occupancy accounting done under the lock, so
/// the recorded occupancy is exact.
pub(crate) struct BoundedQueue<T> {
    cap: usize,
    epoch: Instant,
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
}

struct State<T> {
    items: VecDeque<(T, f64)>,
    producers: usize,
    aborted: bool,
    max_occupancy: usize,
}

pub(crate) enum Pop<T> {
    Item { value: T, pushed_s: f64, popped_s: f64 },
    Closed,
    TimedOut,
}

impl<T> BoundedQueue<T> {
    pub(crate) fn new(cap: usize, producers: usize, epoch: Instant) -> Self {
        assert!(cap >= 1);
        BoundedQueue {
            cap,
            epoch,
            state: Mutex::new(State {
                items: VecDeque::with_capacity(cap),
                producers,
                aborted: false,
                max_occupancy: 0,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        }
    }

    /// Blocks while full. Returns the enqueue timestamp, or `None` once aborted
    /// or after `timeout` without space.
    pub(crate) fn push(&self, value: T, timeout: Duration) -> Result<f64, PushError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().unwrap();
        while st.items.len() >= self.cap && !st.aborted {
            let now = Instant::now();
            if now >= deadline {
                return Err(PushError::TimedOut);
            }
            st = self.not_full.wait_timeout(st, deadline - now).unwrap().0;
        }
        if st.aborted {
            return Err(PushError::Aborted);
        }
        let t = self.epoch.elapsed().as_secs_f64();
        st.items.push_back((value, t));
        st.max_occupancy = st.max_occupancy.max(st.items.len());
        drop(st);
        self.not_empty.notify_one();
        Ok(t)
    }

    pub(crate) fn pop(&self, timeout: Duration) -> Pop<T> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().unwrap();
        loop {
            if st.aborted {
                return Pop::Closed;
            }
            if let Some((value, pushed_s)) = st.items.pop_front() {
                let popped_s = self.epoch.elapsed().as_secs_f64();
                drop(st);
                self.not_full.notify_one();
                return Pop::Item { value, pushed_s, popped_s };
            }
            if st.producers == 0 {
                return Pop::Closed;
            }
            let now = Instant::now();
            if now >= deadline {
                return Pop::TimedOut;
            }
            st = self.not_empty.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    pub(crate) fn producer_done(&self) {
        let mut st = self.state.lock().unwrap();
        st.producers = st.producers.saturating_sub(1);
        drop(st);
        self.not_empty.notify_all();
    }

    pub(crate) fn abort(&self) {
        self.state.lock().unwrap().aborted = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub(crate) fn max_occupancy(&self) -> usize {
        self.state.lock().unwrap().max_occupancy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PushError {
    TimedOut,
    Aborted,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn occupancy_never_exceeds_cap() {
        let q = Arc::new(BoundedQueue::new(2, 1, Instant::now()));
        let producer = {
            let q = q.clone();
            thread::spawn(move || {
                for i in 0..50 {
                    q.push(i, Duration::from_secs(5)).unwrap();
                }
                q.producer_done();
            })
        };
        let mut got = Vec::new();
        loop {
            match q.pop(Duration::from_secs(5)) {
                Pop::Item { value, pushed_s, popped_s } => {
                    assert!(pushed_s <= popped_s);
                    got.push(value);
                    thread::sleep(Duration::from_micros(200));
                }
                Pop::Closed => break,
                Pop::TimedOut => panic!("timed out"),
            }
        }
        producer.join().unwrap();
        assert_eq!(got, (0..50).collect::<Vec<_>>());
        assert_eq!(q.max_occupancy(), 2);
    }

    #[test]
    fn pop_times_out_when_producer_stalls() {
        let q: BoundedQueue<u8> = BoundedQueue::new(2, 1, Instant::now());
        assert!(matches!(q.pop(Duration::from_millis(10)), Pop::TimedOut));
        q.producer_done();
        assert!(matches!(q.pop(Duration::from_millis(10)), Pop::Closed));
    }

    #[test]
    fn abort_unblocks_full_push() {
        let q = Arc::new(BoundedQueue::new(1, 1, Instant::now()));
        q.push(1, Duration::from_secs(1)).unwrap();
        let q2 = q.clone();
        let h = thread::spawn(move || q2.push(2, Duration::from_secs(10)));
        thread::sleep(Duration::from_millis(20));
        q.abort();
        assert_eq!(h.join().unwrap(), Err(PushError::Aborted));
    }
}
