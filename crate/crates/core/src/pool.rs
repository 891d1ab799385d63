//! Fixed-budget LRU page cache shared by all engine variants.
//!
//! The engines write through: every node write goes to the device at once
//! and the cached copy is refreshed via [`BufferPool::update`], so frames
//! are never dirty and eviction costs no I/O. The root frame is pinned and
//! survives every eviction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::EngineError;
use crate::flash::{FlashDevice, PageId, NO_PAGE};

#[derive(Debug, Clone, Copy)]
struct FrameMeta {
    page: PageId,
    pinned: bool,
    stamp: u64,
}

#[derive(Debug)]
pub struct BufferPool {
    page_size: usize,
    frames: Vec<Vec<u8>>,
    meta: Vec<FrameMeta>,
    clock: u64,
    hits: u64,
    misses: u64,
}

impl BufferPool {
    pub fn new(frames: usize, page_size: usize) -> Result<Self, EngineError> {
        if frames < 3 {
            return Err(EngineError::BadConfig);
        }
        Ok(BufferPool {
            page_size,
            frames: vec![vec![0u8; page_size]; frames],
            meta: vec![
                FrameMeta {
                    page: NO_PAGE,
                    pinned: false,
                    stamp: 0,
                };
                frames
            ],
            clock: 0,
            hits: 0,
            misses: 0,
        })
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn find(&self, page: PageId) -> Option<usize> {
        self.meta.iter().position(|m| m.page == page)
    }

    /// Resident page content, loading through the device on a miss (the LRU
    /// unpinned frame is evicted).
    pub fn fetch(&mut self, page: PageId, dev: &mut FlashDevice) -> Result<&[u8], EngineError> {
        if let Some(i) = self.find(page) {
            self.hits += 1;
            self.meta[i].stamp = self.tick();
            return Ok(&self.frames[i]);
        }
        self.misses += 1;
        let i = self.victim()?;
        let data = dev.read_page(page)?;
        self.frames[i].copy_from_slice(data);
        let stamp = self.tick();
        self.meta[i] = FrameMeta {
            page,
            pinned: false,
            stamp,
        };
        Ok(&self.frames[i])
    }

    fn victim(&self) -> Result<usize, EngineError> {
        self.meta
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.pinned)
            .min_by_key(|(_, m)| if m.page == NO_PAGE { 0 } else { m.stamp })
            .map(|(i, _)| i)
            .ok_or(EngineError::PoolExhausted)
    }

    /// Install content after a device write, without any I/O or hit/miss
    /// accounting. Replaces an existing frame for the page if present.
    pub fn update(&mut self, page: PageId, data: &[u8]) -> Result<(), EngineError> {
        debug_assert_eq!(data.len(), self.page_size);
        let i = match self.find(page) {
            Some(i) => i,
            None => self.victim()?,
        };
        self.frames[i].copy_from_slice(data);
        let stamp = self.tick();
        let pinned = self.meta[i].page == page && self.meta[i].pinned;
        self.meta[i] = FrameMeta {
            page,
            pinned,
            stamp,
        };
        Ok(())
    }

    /// Re-key a resident page after relocation, keeping pin state.
    pub fn rename(&mut self, old: PageId, new: PageId) {
        if let Some(i) = self.find(old) {
            self.meta[i].page = new;
        }
    }

    pub fn invalidate(&mut self, page: PageId) {
        if let Some(i) = self.find(page) {
            self.meta[i] = FrameMeta {
                page: NO_PAGE,
                pinned: false,
                stamp: 0,
            };
        }
    }

    pub fn set_pinned(&mut self, page: PageId, pinned: bool) {
        if let Some(i) = self.find(page) {
            self.meta[i].pinned = pinned;
        }
    }

    pub fn contains(&self, page: PageId) -> bool {
        self.find(page).is_some()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Page memory plus frame metadata.
    pub fn footprint(&self) -> (usize, usize) {
        (
            self.frames.len() * self.page_size,
            self.frames.len() * core::mem::size_of::<FrameMeta>(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::{FlashGeometry, FlashMode};

    fn dev() -> FlashDevice {
        let mut d = FlashDevice::new(FlashGeometry::new(128, 4, 16).unwrap(), FlashMode::Ftl);
        for p in 0..16u32 {
            d.write_page(p, &vec![p as u8; 128]).unwrap();
        }
        d.reset_counters();
        d
    }

    #[test]
    fn refetch_hits_without_device_read() {
        let mut d = dev();
        let mut pool = BufferPool::new(3, 128).unwrap();
        pool.fetch(5, &mut d).unwrap();
        pool.fetch(5, &mut d).unwrap();
        assert_eq!(pool.hits(), 1);
        assert_eq!(pool.misses(), 1);
        assert_eq!(d.counters().page_reads, 1);
    }

    #[test]
    fn lru_evicts_least_recent_unpinned() {
        let mut d = dev();
        let mut pool = BufferPool::new(3, 128).unwrap();
        for p in [0u32, 1, 2] {
            pool.fetch(p, &mut d).unwrap();
        }
        pool.fetch(0, &mut d).unwrap(); // 1 is now LRU
        pool.fetch(3, &mut d).unwrap();
        assert!(!pool.contains(1));
        assert!(pool.contains(0) && pool.contains(2) && pool.contains(3));
    }

    #[test]
    fn pinned_root_survives_any_fetch_sequence() {
        let mut d = dev();
        let mut pool = BufferPool::new(3, 128).unwrap();
        pool.fetch(7, &mut d).unwrap();
        pool.set_pinned(7, true);
        for p in 0..16u32 {
            if p != 7 {
                pool.fetch(p, &mut d).unwrap();
            }
        }
        assert!(pool.contains(7));
    }

    #[test]
    fn all_pinned_is_exhausted() {
        let mut d = dev();
        let mut pool = BufferPool::new(3, 128).unwrap();
        for p in [0u32, 1, 2] {
            pool.fetch(p, &mut d).unwrap();
            pool.set_pinned(p, true);
        }
        assert_eq!(pool.fetch(9, &mut d).unwrap_err(), EngineError::PoolExhausted);
    }

    #[test]
    fn update_and_rename_track_content() {
        let mut d = dev();
        let mut pool = BufferPool::new(3, 128).unwrap();
        pool.fetch(4, &mut d).unwrap();
        pool.update(4, &vec![0xEE; 128]).unwrap();
        pool.rename(4, 12);
        assert!(pool.contains(12) && !pool.contains(4));
        assert_eq!(pool.fetch(12, &mut d).unwrap()[0], 0xEE);
        assert_eq!(d.counters().page_reads, 1); // only the original miss
    }
}
