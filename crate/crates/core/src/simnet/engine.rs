use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::SimTime;

struct Scheduled<E> {
    time: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Discrete-event queue. Events fire in `(time, sequence)` order, where the
/// sequence number is assigned at scheduling time.
pub struct Engine<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Scheduled<E>>,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Self {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Schedules `event` at `time`, clamped to the present.
    pub fn schedule(&mut self, time: SimTime, event: E) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled {
            time: time.max(self.now),
            seq,
            event,
        });
        seq
    }

    pub fn next_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|s| s.time)
    }

    /// Pops the next event if it fires no later than `limit`, advancing the
    /// clock to its fire time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<(SimTime, u64, E)> {
        if self.queue.peek()?.time > limit {
            return None;
        }
        let s = self.queue.pop()?;
        self.now = s.time;
        Some((s.time, s.seq, s.event))
    }

    /// Moves the clock forward without processing anything.
    pub fn advance_to(&mut self, time: SimTime) {
        self.now = self.now.max(time);
    }
}

/// Processes every event with fire time `<= t_end` through `handle`, then
/// leaves the clock at `t_end`.
pub fn run_until<E>(
    engine: &mut Engine<E>,
    t_end: SimTime,
    mut handle: impl FnMut(&mut Engine<E>, SimTime, E),
) {
    while let Some((t, _, e)) = engine.pop_until(t_end) {
        handle(engine, t, e);
    }
    engine.advance_to(t_end);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_queue_advances_clock() {
        let mut e: Engine<()> = Engine::new();
        run_until(&mut e, 50, |_, _, _| panic!("no events"));
        assert_eq!(e.now(), 50);
    }

    #[test]
    fn ties_fire_in_sequence_order() {
        let mut e = Engine::new();
        e.schedule(5, "b");
        e.schedule(5, "c");
        e.schedule(1, "a");
        e.schedule(9, "late");
        let mut seen = Vec::new();
        run_until(&mut e, 5, |_, t, ev| seen.push((t, ev)));
        assert_eq!(seen, vec![(1, "a"), (5, "b"), (5, "c")]);
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn handlers_can_schedule() {
        let mut e = Engine::new();
        e.schedule(0, 0u32);
        let mut count = 0;
        run_until(&mut e, 10, |eng, t, n| {
            count += 1;
            if n < 100 {
                eng.schedule(t + 1, n + 1);
            }
        });
        assert_eq!(count, 11);
    }
}
