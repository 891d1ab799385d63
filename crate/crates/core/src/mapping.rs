//! Bounded in-memory table of virtual page mappings.
//!
//! A mapping `prev -> new` redirects a parent pointer that still stores the
//! page id `prev` to the node's current physical page `new`. The table is a
//! fixed-capacity open-addressing hash table with double hashing; lookups
//! never touch storage. The update rule never chains: rewriting a node that
//! already has a mapping replaces the entry in place, so `resolve` is a
//! single probe sequence and `resolve(resolve(x)) == resolve(x)` for any id
//! a node can store.
//!
//! Capacity is the byte budget divided by the entry width (4 bytes for
//! 16-bit page ids, 8 bytes otherwise), rounded down to a power of two so
//! the odd double-hashing step visits every slot. Removal uses tombstones;
//! the table rebuilds itself when tombstones pile up.

use alloc::vec;
use alloc::vec::Vec;

use crate::flash::PageId;

/// Insert failed: the caller must materialize the pointer instead (write
/// the node that required the mapping).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableFull;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Empty,
    Tomb,
    Used { prev: PageId, new: PageId },
}

#[derive(Debug)]
pub struct MappingTable {
    budget_bytes: usize,
    entry_width: usize,
    slots: Vec<Slot>,
    occupied: usize,
    tombstones: usize,
    peak: usize,
}

// 32-bit finalizer (lowbias32); good avalanche, documented constants.
fn mix(mut x: u32) -> u32 {
    x ^= x >> 16;
    x = x.wrapping_mul(0x7feb352d);
    x ^= x >> 15;
    x = x.wrapping_mul(0x846ca68b);
    x ^= x >> 16;
    x
}

impl MappingTable {
    pub fn new(budget_bytes: usize, num_pages: u32) -> Self {
        let entry_width = if num_pages <= u16::MAX as u32 { 4 } else { 8 };
        let raw = budget_bytes / entry_width;
        let capacity = if raw == 0 { 0 } else { 1 << (usize::BITS - 1 - raw.leading_zeros()) };
        MappingTable {
            budget_bytes,
            entry_width,
            slots: vec![Slot::Empty; capacity],
            occupied: 0,
            tombstones: 0,
            peak: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    pub fn load_factor(&self) -> f32 {
        if self.slots.is_empty() {
            1.0
        } else {
            self.occupied as f32 / self.slots.len() as f32
        }
    }

    pub fn peak_load_factor(&self) -> f32 {
        if self.slots.is_empty() {
            1.0
        } else {
            self.peak as f32 / self.slots.len() as f32
        }
    }

    /// Modeled byte footprint (the configured budget).
    pub fn footprint(&self) -> usize {
        self.budget_bytes
    }

    pub fn entry_width(&self) -> usize {
        self.entry_width
    }

    fn probe(&self, prev: PageId, i: usize) -> usize {
        let cap = self.slots.len();
        let h1 = mix(prev) as usize;
        let step = (mix(prev ^ 0x9e37_79b9) as usize) | 1;
        (h1 + i * step) & (cap - 1)
    }

    /// Insert or replace in place; never chains.
    pub fn put(&mut self, prev: PageId, new: PageId) -> Result<(), TableFull> {
        debug_assert_ne!(prev, new);
        if self.slots.is_empty() {
            return Err(TableFull);
        }
        let cap = self.slots.len();
        let mut first_free: Option<usize> = None;
        for i in 0..cap {
            let idx = self.probe(prev, i);
            match self.slots[idx] {
                Slot::Used { prev: p, .. } if p == prev => {
                    self.slots[idx] = Slot::Used { prev, new };
                    return Ok(());
                }
                Slot::Used { .. } => {}
                Slot::Tomb => {
                    if first_free.is_none() {
                        first_free = Some(idx);
                    }
                }
                Slot::Empty => {
                    if first_free.is_none() {
                        first_free = Some(idx);
                    }
                    break;
                }
            }
        }
        match first_free {
            Some(idx) => {
                if self.slots[idx] == Slot::Tomb {
                    self.tombstones -= 1;
                }
                self.slots[idx] = Slot::Used { prev, new };
                self.occupied += 1;
                self.peak = self.peak.max(self.occupied);
                Ok(())
            }
            None => Err(TableFull),
        }
    }

    pub fn get(&self, prev: PageId) -> Option<PageId> {
        if self.slots.is_empty() {
            return None;
        }
        for i in 0..self.slots.len() {
            match self.slots[self.probe(prev, i)] {
                Slot::Used { prev: p, new } if p == prev => return Some(new),
                Slot::Used { .. } | Slot::Tomb => {}
                Slot::Empty => return None,
            }
        }
        None
    }

    pub fn contains(&self, prev: PageId) -> bool {
        self.get(prev).is_some()
    }

    /// The page's current physical location: the mapped id if present, else
    /// the id itself. No I/O.
    pub fn resolve(&self, id: PageId) -> PageId {
        self.get(id).unwrap_or(id)
    }

    /// Delete an entry; missing entries are a no-op.
    pub fn remove(&mut self, prev: PageId) {
        if self.slots.is_empty() {
            return;
        }
        for i in 0..self.slots.len() {
            let idx = self.probe(prev, i);
            match self.slots[idx] {
                Slot::Used { prev: p, .. } if p == prev => {
                    self.slots[idx] = Slot::Tomb;
                    self.occupied -= 1;
                    self.tombstones += 1;
                    if self.tombstones > self.slots.len() / 4 {
                        self.rebuild();
                    }
                    return;
                }
                Slot::Used { .. } | Slot::Tomb => {}
                Slot::Empty => return,
            }
        }
    }

    fn rebuild(&mut self) {
        let entries: Vec<(PageId, PageId)> = self.iter().collect();
        for s in self.slots.iter_mut() {
            *s = Slot::Empty;
        }
        self.occupied = 0;
        self.tombstones = 0;
        for (p, n) in entries {
            let _ = self.put(p, n);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PageId, PageId)> + '_ {
        self.slots.iter().filter_map(|s| match s {
            Slot::Used { prev, new } => Some((*prev, *new)),
            _ => None,
        })
    }

    pub fn clear(&mut self) {
        for s in self.slots.iter_mut() {
            *s = Slot::Empty;
        }
        self.occupied = 0;
        self.tombstones = 0;
    }
}
