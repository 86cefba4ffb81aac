use std::sync::{Condvar, Mutex};

/// Counting semaphore that admits waiters strictly in arrival order.
pub struct FairLimiter {
    max: usize,
    state: Mutex<State>,
    cv: Condvar,
}

struct State {
    next_ticket: u64,
    serving: u64,
    in_flight: usize,
}

pub struct Permit<'a> {
    limiter: &'a FairLimiter,
}

impl FairLimiter {
    pub fn new(max: usize) -> Self {
        assert!(max >= 1);
        Self {
            max,
            state: Mutex::new(State {
                next_ticket: 0,
                serving: 0,
                in_flight: 0,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().expect("limiter poisoned");
        let ticket = s.next_ticket;
        s.next_ticket += 1;
        while ticket != s.serving || s.in_flight >= self.max {
            s = self.cv.wait(s).expect("limiter poisoned");
        }
        s.serving += 1;
        s.in_flight += 1;
        self.cv.notify_all();
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter poisoned").in_flight
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.limiter.state.lock().expect("limiter poisoned");
        s.in_flight -= 1;
        self.limiter.cv.notify_all();
    }
}
