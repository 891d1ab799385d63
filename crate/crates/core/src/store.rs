//! Physical storage management for VmTree on raw flash.
//!
//! The circular region (all device blocks except the last) is consumed
//! sequentially by [`StorageManager::allocate_next`]. A window of blocks
//! ahead of the write head is kept garbage-collected: before a block is
//! erased its live pages are staged in the reserved spill block (the last
//! device block) and written back to their original addresses afterwards,
//! so no tree pointers or mappings change. Staging through storage rather
//! than RAM keeps a crash between the block erase and the write-back
//! recoverable: recovery first copies any spill page whose home page is
//! erased back into place.
//!
//! Crash recovery orders the written pages by the monotone write stamp in
//! each page header (position order alone is unreliable: garbage collection
//! rewrites surviving pages in place, long after their neighbours). The
//! first sighting of a node's stable id in newest-first order is its live
//! version; every later sighting is an older version and marked free.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{is_erased_page, PageHeader};
use crate::error::EngineError;
use crate::flash::{FlashDevice, FlashGeometry, PageId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GcStats {
    pub relocations: u64,
    pub erases: u64,
    pub spill_cycles: u64,
}

#[derive(Debug)]
pub struct StorageManager {
    geometry: FlashGeometry,
    /// Pages in the circular region; the last block is the spill block.
    circ_pages: u32,
    window_pages: u64,
    /// Free-space bitmap, one bit per device page: bit set = free. Spill
    /// pages are permanently marked used.
    bitmap: Vec<u8>,
    /// Pages known to be in the erased state (erased and not yet written).
    erased: Vec<bool>,
    free_pages: u32,
    write_cursor: u64,
    erase_cursor: u64,
    stats: GcStats,
    allocations: u64,
}

impl StorageManager {
    pub fn new(geometry: FlashGeometry, window_blocks: u32) -> Result<Self, EngineError> {
        let ppb = geometry.pages_per_block;
        if geometry.num_blocks() < window_blocks + 3 {
            return Err(EngineError::BadConfig);
        }
        let circ_pages = geometry.num_pages - ppb;
        let mut sm = StorageManager {
            geometry,
            circ_pages,
            window_pages: window_blocks as u64 * ppb as u64,
            bitmap: vec![0xFF; (geometry.num_pages as usize + 7) / 8],
            erased: vec![true; geometry.num_pages as usize],
            free_pages: geometry.num_pages,
            write_cursor: 0,
            // the device starts pre-erased, so the whole region is runway
            erase_cursor: circ_pages as u64,
            stats: GcStats::default(),
            allocations: 0,
        };
        for p in circ_pages..geometry.num_pages {
            sm.mark_used(p);
        }
        Ok(sm)
    }

    pub fn circular_pages(&self) -> u32 {
        self.circ_pages
    }

    pub fn spill_block_first_page(&self) -> PageId {
        self.circ_pages
    }

    pub fn stats(&self) -> GcStats {
        self.stats
    }

    /// Completed passes through the circular region.
    pub fn passes(&self) -> u64 {
        self.write_cursor / self.circ_pages as u64
    }

    pub fn allocations(&self) -> u64 {
        self.allocations
    }

    pub fn free_count(&self) -> u32 {
        self.free_pages
    }

    pub fn is_free(&self, page: PageId) -> bool {
        self.bitmap[page as usize / 8] & (1 << (page % 8)) != 0
    }

    pub fn mark_free(&mut self, page: PageId) {
        debug_assert!(page < self.geometry.num_pages);
        if !self.is_free(page) {
            self.bitmap[page as usize / 8] |= 1 << (page % 8);
            self.free_pages += 1;
        }
    }

    pub fn mark_used(&mut self, page: PageId) {
        debug_assert!(page < self.geometry.num_pages);
        if self.is_free(page) {
            self.bitmap[page as usize / 8] &= !(1 << (page % 8));
            self.free_pages -= 1;
        }
    }

    pub fn bitmap_bytes(&self) -> usize {
        self.bitmap.len()
    }

    /// Next free, erased page at the sequential write head. `skip` can veto
    /// otherwise-free pages (the engine skips live mapping keys so a fresh
    /// node never shares an id with an active redirect).
    pub fn allocate_next(
        &mut self,
        dev: &mut FlashDevice,
        mut skip: impl FnMut(PageId) -> bool,
    ) -> Result<PageId, EngineError> {
        if self.free_pages == 0 {
            return Err(EngineError::StorageFull);
        }
        let mut attempts: u64 = 0;
        loop {
            while self.erase_cursor - self.write_cursor < self.window_pages {
                self.gc_step(dev)?;
            }
            let page = (self.write_cursor % self.circ_pages as u64) as PageId;
            self.write_cursor += 1;
            attempts += 1;
            if self.is_free(page) && self.erased[page as usize] && !skip(page) {
                self.mark_used(page);
                self.erased[page as usize] = false;
                self.allocations += 1;
                return Ok(page);
            }
            if attempts > 2 * self.circ_pages as u64 {
                return Err(EngineError::StorageFull);
            }
        }
    }

    /// Process the next block ahead of the erased window: stage live pages
    /// in the spill block, erase, write the live pages back in place.
    pub fn gc_step(&mut self, dev: &mut FlashDevice) -> Result<usize, EngineError> {
        let ppb = self.geometry.pages_per_block;
        let first = (self.erase_cursor % self.circ_pages as u64) as PageId;
        debug_assert_eq!(first % ppb, 0);
        let live: Vec<PageId> = (first..first + ppb).filter(|&p| !self.is_free(p)).collect();
        if live.len() == ppb as usize {
            // nothing to reclaim; leave the block untouched
            self.erase_cursor += ppb as u64;
            return Ok(0);
        }
        if live.is_empty() {
            dev.erase_block(self.geometry.block_of(first))?;
        } else {
            let spill = self.spill_block_first_page();
            dev.erase_block(self.geometry.block_of(spill))?;
            for (i, &p) in live.iter().enumerate() {
                let data = dev.read_page(p)?.to_vec();
                dev.write_page(spill + i as u32, &data)?;
            }
            dev.erase_block(self.geometry.block_of(first))?;
            for (i, &p) in live.iter().enumerate() {
                let data = dev.read_page(spill + i as u32)?.to_vec();
                dev.write_page(p, &data)?;
            }
            self.stats.relocations += live.len() as u64;
            self.stats.spill_cycles += 1;
        }
        for p in first..first + ppb {
            self.erased[p as usize] = self.is_free(p);
        }
        self.stats.erases += 1;
        self.erase_cursor += ppb as u64;
        Ok(live.len())
    }
}

// --- recovery -----------------------------------------------------------

#[derive(Debug)]
pub struct ScanOutcome {
    /// stable id -> newest physical page (identity entries included).
    pub mappings: BTreeMap<PageId, PageId>,
    /// stable id -> every page claiming it, newest first. A page address
    /// freed and reallocated to a fresh node can shadow an older chain
    /// that still carries the same id; the tree walk disambiguates with
    /// the parent's separator range, so it needs all claimants.
    pub claims: BTreeMap<PageId, Vec<PageId>>,
    /// Older versions found behind newer ones.
    pub superseded: Vec<PageId>,
    /// Pages that decode as nodes and are not superseded, newest first.
    pub current: Vec<PageId>,
    pub root_phys: Option<PageId>,
    pub root_stable: Option<PageId>,
    /// Rank of every non-erased page with a decodable header, ordered by
    /// write stamp; smaller means written more recently.
    pub recency: BTreeMap<PageId, u64>,
    /// Largest write stamp seen on storage.
    pub max_serial: u32,
    pub write_cursor: u64,
    pub pages_scanned: u64,
}

/// Copy spill-block pages whose home page is erased back into place,
/// completing an interrupted garbage-collection cycle.
pub fn restore_spill(dev: &mut FlashDevice, circ_pages: u32) -> Result<u32, EngineError> {
    let ppb = dev.geometry().pages_per_block;
    let mut restored = 0;
    for i in 0..ppb {
        let spill_page = circ_pages + i;
        let data = dev.read_page(spill_page)?.to_vec();
        if is_erased_page(&data) {
            continue;
        }
        let header = match PageHeader::decode(&data) {
            Ok(h) => h,
            Err(_) => continue,
        };
        let home = header.page_id;
        if home < circ_pages && dev.is_erased(home)? {
            dev.write_page(home, &data)?;
            restored += 1;
        }
    }
    Ok(restored)
}

/// Backward scan of the circular region from the last page write,
/// rebuilding the mapping table and locating the newest root.
pub fn scan_storage(dev: &mut FlashDevice, circ_pages: u32) -> Result<ScanOutcome, EngineError> {
    let n = circ_pages as u64;
    let mut erased = vec![false; circ_pages as usize];
    let mut pages_scanned = 0u64;
    for p in 0..circ_pages {
        erased[p as usize] = dev.is_erased(p)?;
        pages_scanned += 1;
    }
    let written = erased.iter().filter(|&&e| !e).count() as u64;
    if written == 0 {
        return Ok(ScanOutcome {
            mappings: BTreeMap::new(),
            claims: BTreeMap::new(),
            superseded: Vec::new(),
            current: Vec::new(),
            root_phys: None,
            root_stable: None,
            recency: BTreeMap::new(),
            max_serial: 0,
            write_cursor: 0,
            pages_scanned,
        });
    }
    if written == n {
        return Err(EngineError::StorageFull);
    }
    // order pages by write stamp, newest first; the head sits just past
    // the most recently stamped page
    let mut stamped: Vec<(u32, PageId, PageHeader)> = Vec::new();
    for p in 0..circ_pages {
        if erased[p as usize] {
            continue;
        }
        let data = dev.read_page(p)?;
        pages_scanned += 1;
        if let Ok(header) = PageHeader::decode(data) {
            stamped.push((header.serial, p, header));
        }
    }
    stamped.sort_by(|a, b| b.0.cmp(&a.0));
    let max_serial = stamped.first().map_or(0, |e| e.0);
    let write_head = stamped.first().map_or(0, |e| (e.1 as u64 + 1) % n);

    let mut mappings: BTreeMap<PageId, PageId> = BTreeMap::new();
    let mut claims: BTreeMap<PageId, Vec<PageId>> = BTreeMap::new();
    let mut superseded = Vec::new();
    let mut current = Vec::new();
    let mut root_phys = None;
    let mut root_stable = None;
    let mut recency = BTreeMap::new();
    for (rank, &(_, p, ref header)) in stamped.iter().enumerate() {
        recency.insert(p, rank as u64);
        let stable = header.stable_id();
        claims.entry(stable).or_default().push(p);
        if header.is_root && root_phys.is_some() {
            // roots form no pointer chain: every older root-flagged page
            // is a dead version of the one the scan already picked
            superseded.push(p);
            continue;
        }
        if mappings.contains_key(&stable) {
            superseded.push(p);
        } else {
            mappings.insert(stable, p);
            current.push(p);
            if header.is_root {
                root_phys = Some(p);
                root_stable = Some(stable);
            }
        }
    }
    Ok(ScanOutcome {
        mappings,
        claims,
        superseded,
        current,
        root_phys,
        root_stable,
        recency,
        max_serial,
        write_cursor: write_head,
        pages_scanned,
    })
}

impl StorageManager {
    /// Rebuild manager state after a crash. The bitmap starts entirely
    /// free (except the spill block); the caller marks reachable pages used.
    pub fn from_scan(
        geometry: FlashGeometry,
        window_blocks: u32,
        dev: &FlashDevice,
        scan: &ScanOutcome,
    ) -> Result<Self, EngineError> {
        let mut sm = StorageManager::new(geometry, window_blocks)?;
        let n = sm.circ_pages as u64;
        let ppb = geometry.pages_per_block as u64;
        for p in 0..geometry.num_pages {
            sm.erased[p as usize] = dev.is_erased(p)?;
        }
        sm.write_cursor = scan.write_cursor;
        // runway resumes at the next block boundary and extends over the
        // consecutive fully erased blocks ahead of the head
        let mut ec = (scan.write_cursor + ppb - 1) / ppb * ppb;
        while ec - scan.write_cursor < n {
            let block_erased = (0..ppb).all(|i| sm.erased[((ec + i) % n) as usize]);
            if !block_erased {
                break;
            }
            ec += ppb;
        }
        sm.erase_cursor = ec;
        Ok(sm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::FlashMode;

    fn setup() -> (FlashDevice, StorageManager) {
        let g = FlashGeometry::new(128, 4, 32).unwrap();
        let dev = FlashDevice::new(g, FlashMode::RawNand);
        let sm = StorageManager::new(g, 2).unwrap();
        (dev, sm)
    }

    fn write_marker(dev: &mut FlashDevice, p: PageId) {
        let mut data = vec![0u8; 128];
        data[0..4].copy_from_slice(&p.to_le_bytes());
        dev.write_page(p, &data).unwrap();
    }

    #[test]
    fn fresh_store_allocates_in_order() {
        let (mut dev, mut sm) = setup();
        for want in 0..8u32 {
            let p = sm.allocate_next(&mut dev, |_| false).unwrap();
            assert_eq!(p, want);
            write_marker(&mut dev, p);
        }
    }

    #[test]
    fn bitmap_partitions_pages() {
        let (_, mut sm) = setup();
        let total = sm.circular_pages();
        assert_eq!(sm.free_count(), total);
        sm.mark_used(3);
        sm.mark_used(3);
        assert_eq!(sm.free_count(), total - 1);
        sm.mark_free(3);
        sm.mark_free(3);
        assert_eq!(sm.free_count(), total);
    }

    #[test]
    fn wraps_after_gc_of_block_zero() {
        let (mut dev, mut sm) = setup();
        let circ = sm.circular_pages();
        // fill a pass, freeing everything as we go
        for _ in 0..circ {
            let p = sm.allocate_next(&mut dev, |_| false).unwrap();
            write_marker(&mut dev, p);
            sm.mark_free(p);
        }
        let p = sm.allocate_next(&mut dev, |_| false).unwrap();
        assert_eq!(p, 0);
        assert!(sm.stats().erases > 0);
        assert_eq!(sm.passes(), 1);
    }

    #[test]
    fn gc_relocates_live_pages_in_place() {
        let (mut dev, mut sm) = setup();
        let circ = sm.circular_pages();
        let mut live = Vec::new();
        for i in 0..circ {
            let p = sm.allocate_next(&mut dev, |_| false).unwrap();
            write_marker(&mut dev, p);
            if i % 4 == 1 {
                live.push(p);
            } else {
                sm.mark_free(p);
            }
        }
        // force gc around the ring; live pages must survive at their address
        for _ in 0..circ / 2 {
            let p = sm.allocate_next(&mut dev, |_| false).unwrap();
            write_marker(&mut dev, p);
            sm.mark_free(p);
        }
        for &p in &live {
            let data = dev.peek_page(p).unwrap();
            assert_eq!(&data[0..4], &p.to_le_bytes());
        }
        assert!(sm.stats().relocations >= live.len() as u64);
    }

    #[test]
    fn empty_block_is_erase_only() {
        let (mut dev, mut sm) = setup();
        let relocated = sm.gc_step(&mut dev).unwrap();
        assert_eq!(relocated, 0);
        assert_eq!(sm.stats().relocations, 0);
    }

    #[test]
    fn storage_full_when_everything_live() {
        let (mut dev, mut sm) = setup();
        let circ = sm.circular_pages();
        for _ in 0..circ {
            let p = sm.allocate_next(&mut dev, |_| false).unwrap();
            write_marker(&mut dev, p);
        }
        assert_eq!(
            sm.allocate_next(&mut dev, |_| false).unwrap_err(),
            EngineError::StorageFull
        );
    }

    #[test]
    fn scan_finds_write_head_and_versions() {
        let g = FlashGeometry::new(128, 4, 32).unwrap();
        let mut dev = FlashDevice::new(g, FlashMode::RawNand);
        // seed the recovery example: headers (5,-1),(6,5),(7,5),(8,5)
        use crate::codec::{NodeKind, PageHeader};
        use crate::flash::NO_PAGE;
        for (serial, (page, prev, root)) in [
            (5u32, NO_PAGE, false),
            (6, 5, false),
            (7, 5, false),
            (8, 5, true),
        ]
        .into_iter()
        .enumerate()
        {
            let mut data = vec![0u8; 128];
            PageHeader {
                page_id: page,
                prev_page_id: prev,
                kind: NodeKind::Leaf,
                is_root: root,
                entry_count: 0,
                serial: serial as u32 + 1,
            }
            .encode_into(&mut data);
            dev.write_page(page, &data).unwrap();
        }
        let scan = scan_storage(&mut dev, 28).unwrap();
        assert_eq!(scan.mappings.get(&5), Some(&8));
        assert_eq!(scan.mappings.len(), 1);
        let mut sup = scan.superseded.clone();
        sup.sort_unstable();
        assert_eq!(sup, vec![5, 6, 7]);
        assert_eq!(scan.root_phys, Some(8));
        assert_eq!(scan.write_cursor, 9);
    }

    #[test]
    fn spill_restore_completes_interrupted_gc() {
        let (mut dev, mut sm) = setup();
        use crate::codec::{NodeKind, PageHeader};
        use crate::flash::NO_PAGE;
        // live node page at 1
        let mut data = vec![0u8; 128];
        PageHeader {
            page_id: 1,
            prev_page_id: NO_PAGE,
            kind: NodeKind::Leaf,
            is_root: true,
            entry_count: 0,
            serial: 1,
        }
        .encode_into(&mut data);
        let p = sm.allocate_next(&mut dev, |_| false).unwrap();
        let _ = p;
        let p1 = sm.allocate_next(&mut dev, |_| false).unwrap();
        assert_eq!(p1, 1);
        dev.write_page(1, &data).unwrap();
        // simulate a crash between the spill staging + erase and write-back:
        let spill = sm.spill_block_first_page();
        dev.erase_block(dev.geometry().block_of(spill)).unwrap();
        dev.write_page(spill, &data).unwrap();
        dev.erase_block(0).unwrap();
        assert!(dev.is_erased(1).unwrap());
        let restored = restore_spill(&mut dev, sm.circular_pages()).unwrap();
        assert_eq!(restored, 1);
        assert_eq!(&dev.peek_page(1).unwrap()[..12], &data[..12]);
        // stale spill copies are ignored once the home page is written
        let restored = restore_spill(&mut dev, sm.circular_pages()).unwrap();
        assert_eq!(restored, 0);
    }
}
