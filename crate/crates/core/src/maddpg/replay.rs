use std::collections::VecDeque;

use rand::Rng;

use super::TransitionRecord;
use crate::error::{Error, Result};

/// Floor added to priorities so a record with zero TD error stays sampleable.
const PRIORITY_FLOOR: f64 = 1e-6;

/// Fixed-capacity FIFO of joint transitions with optional priorities.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    records: VecDeque<TransitionRecord>,
    priorities: VecDeque<f64>,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: VecDeque::with_capacity(capacity),
            priorities: VecDeque::with_capacity(capacity),
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a record at the current maximum priority, evicting the oldest
    /// when full.
    pub fn push(&mut self, record: TransitionRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
            self.priorities.pop_front();
        }
        self.records.push_back(record);
        self.priorities.push_back(self.max_priority);
    }

    pub fn get(&self, index: usize) -> &TransitionRecord {
        &self.records[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.records.iter()
    }

    pub fn priority(&self, index: usize) -> f64 {
        self.priorities[index]
    }

    pub fn set_priority(&mut self, index: usize, priority: f64) {
        let p = priority.abs() + PRIORITY_FLOOR;
        self.priorities[index] = p;
        self.max_priority = self.max_priority.max(p);
    }
}

/// Indices of `size` records drawn with replacement: uniformly, or in
/// proportion to priority when `prioritized` is set.
pub fn sample_batch<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    size: usize,
    prioritized: bool,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if buffer.len() < size || buffer.is_empty() {
        return Err(Error::NotReady {
            have: buffer.len(),
            need: size.max(1),
        });
    }
    if !prioritized {
        return Ok((0..size).map(|_| rng.gen_range(0..buffer.len())).collect());
    }
    let mut cumulative = Vec::with_capacity(buffer.len());
    let mut acc = 0.0;
    for &p in &buffer.priorities {
        acc += p;
        cumulative.push(acc);
    }
    Ok((0..size)
        .map(|_| {
            let x = rng.gen::<f64>() * acc;
            cumulative.partition_point(|&c| c <= x).min(buffer.len() - 1)
        })
        .collect())
}
