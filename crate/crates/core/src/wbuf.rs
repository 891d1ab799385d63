//! Write buffer: a single operation log for the whole tree.
//!
//! Inserts are appended until the byte budget (`capacity_pages` worth of
//! records) is full, then stably sorted by key and applied in batch so runs
//! of entries hitting the same leaf share one leaf write. Buffered entries
//! are volatile; the durability contract starts when they are applied.

use alloc::vec::Vec;

use crate::codec::ValueBuf;

#[derive(Debug)]
pub struct OpLog {
    capacity_entries: usize,
    byte_budget: usize,
    entries: Vec<(u64, ValueBuf)>,
}

impl OpLog {
    pub fn new(capacity_pages: usize, page_size: usize, record_width: usize) -> Self {
        let byte_budget = capacity_pages * page_size;
        OpLog {
            capacity_entries: byte_budget / record_width,
            byte_budget,
            entries: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity_entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append an entry; returns true when the log just reached capacity and
    /// the owner must flush.
    pub fn push(&mut self, key: u64, value: ValueBuf) -> bool {
        self.entries.push((key, value));
        self.entries.len() >= self.capacity_entries
    }

    /// Buffered entries in arrival order.
    pub fn entries(&self) -> &[(u64, ValueBuf)] {
        &self.entries
    }

    /// Drain all entries, stably sorted by key (duplicate keys keep their
    /// insertion order).
    pub fn drain_sorted(&mut self) -> Vec<(u64, ValueBuf)> {
        let mut out = core::mem::take(&mut self.entries);
        out.sort_by_key(|&(k, _)| k);
        out
    }

    pub fn footprint(&self) -> usize {
        self.byte_budget
    }
}
