//! Fixed-capacity sliding window of labelled instances.

use std::collections::VecDeque;

use crate::streams::Instance;

/// Sliding window `W` of the most recent instances, oldest first.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    capacity: usize,
    rows: VecDeque<Instance>,
}

impl WindowBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            rows: VecDeque::with_capacity(capacity),
        }
    }

    pub fn from_instances(capacity: usize, instances: impl IntoIterator<Item = Instance>) -> Self {
        let mut window = Self::new(capacity);
        for inst in instances {
            window.push(inst);
        }
        window
    }

    /// Appends an instance, evicting the oldest one when full.
    pub fn push(&mut self, instance: Instance) {
        if self.rows.len() == self.capacity {
            self.rows.pop_front();
        }
        self.rows.push_back(instance);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    /// Keeps only the newest `n` instances.
    pub fn retain_last(&mut self, n: usize) {
        while self.rows.len() > n {
            self.rows.pop_front();
        }
    }

    /// Drops every instance whose stream index is older than `boundary`.
    pub fn truncate_before(&mut self, boundary: usize) {
        while self.rows.front().is_some_and(|r| r.index < boundary) {
            self.rows.pop_front();
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Instance> + DoubleEndedIterator {
        self.rows.iter()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    pub fn oldest_index(&self) -> Option<usize> {
        self.rows.front().map(|r| r.index)
    }

    pub fn newest(&self) -> Option<&Instance> {
        self.rows.back()
    }

    pub fn to_vec(&self) -> Vec<Instance> {
        self.rows.iter().cloned().collect()
    }
}
