//! Walker occupancy: a fixed number of page table walkers fed FIFO from the
//! page walk buffer.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WalkerPool {
    /// When each walker next becomes free.
    free_at: BinaryHeap<Reverse<u64>>,
    /// Start times of admitted requests, to know which still wait.
    waiting: BinaryHeap<Reverse<u64>>,
    pwb_depth: Option<usize>,
}

impl WalkerPool {
    pub fn new(walkers: usize, pwb_depth: Option<usize>) -> Self {
        assert!(walkers > 0);
        WalkerPool {
            free_at: (0..walkers).map(|_| Reverse(0)).collect(),
            waiting: BinaryHeap::new(),
            pwb_depth,
        }
    }

    /// Requests that are queued (admitted but not yet started) at `now`.
    pub fn queued(&mut self, now: u64) -> usize {
        while self.waiting.peek().is_some_and(|Reverse(t)| *t <= now) {
            self.waiting.pop();
        }
        self.waiting.len()
    }

    /// Schedules a walk of `duration` cycles arriving at `now`, which must be
    /// non-decreasing across calls. Returns its start time.
    pub fn admit(&mut self, now: u64, duration: u64) -> Result<u64> {
        let Reverse(free) = *self.free_at.peek().unwrap();
        let start = free.max(now);
        if start > now {
            let queued = self.queued(now);
            if let Some(depth) = self.pwb_depth {
                if queued >= depth {
                    return Err(Error::PwbOverflow { depth });
                }
            }
            self.waiting.push(Reverse(start));
        }
        self.free_at.pop();
        self.free_at.push(Reverse(start + duration));
        Ok(start)
    }
}
