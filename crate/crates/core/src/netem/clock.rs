use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::NetemError;

struct Entry<E> {
    at_us: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at_us, self.seq) == (other.at_us, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at_us, other.seq).cmp(&(self.at_us, self.seq))
    }
}

/// Discrete-event clock in microseconds. Events with equal timestamps fire
/// in insertion order.
pub struct VirtualClock<E> {
    now_us: u64,
    next_seq: u64,
    queue: BinaryHeap<Entry<E>>,
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> VirtualClock<E> {
    pub fn new() -> Self {
        Self {
            now_us: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Queues `event` at `at_us`; times in the past fire at the current time.
    pub fn schedule(&mut self, at_us: u64, event: E) {
        let at_us = at_us.max(self.now_us);
        self.queue.push(Entry {
            at_us,
            seq: self.next_seq,
            event,
        });
        self.next_seq += 1;
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|e| e.at_us)
    }

    /// Pops the earliest event and moves the clock to its timestamp.
    pub fn advance(&mut self) -> Result<(u64, E), NetemError> {
        let entry = self.queue.pop().ok_or(NetemError::EmptyQueue)?;
        self.now_us = entry.at_us;
        Ok((entry.at_us, entry.event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn equal_timestamps_fire_in_insertion_order() {
        let mut c = VirtualClock::new();
        c.schedule(5, "a");
        c.schedule(3, "b");
        c.schedule(3, "c");
        let order: Vec<_> = std::iter::from_fn(|| c.advance().ok()).collect();
        assert_eq!(order, vec![(3, "b"), (3, "c"), (5, "a")]);
    }

    #[test]
    fn single_event_then_empty() {
        let mut c = VirtualClock::new();
        c.schedule(7, ());
        assert_eq!(c.advance().unwrap(), (7, ()));
        assert!(c.is_empty());
        assert_eq!(c.advance(), Err(NetemError::EmptyQueue));
        assert_eq!(c.now_us(), 7);
    }

    #[test]
    fn matches_stable_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let times: Vec<u64> = (0..10_000).map(|_| rng.random_range(0..500)).collect();
        let mut c = VirtualClock::new();
        for (i, &t) in times.iter().enumerate() {
            c.schedule(t, i);
        }
        let mut oracle: Vec<(u64, usize)> = times.iter().copied().zip(0..).collect();
        oracle.sort_by_key(|&(t, _)| t); // stable
        let fired: Vec<_> = std::iter::from_fn(|| c.advance().ok()).collect();
        assert_eq!(fired, oracle);
    }

    #[test]
    fn time_never_decreases() {
        let mut c = VirtualClock::new();
        c.schedule(10, 0);
        c.advance().unwrap();
        c.schedule(4, 1);
        assert_eq!(c.advance().unwrap(), (10, 1));
    }
}
