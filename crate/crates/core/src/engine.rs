//! The three index engine variants behind one interface.
//!
//! * `BTree` rewrites nodes at their original page. Legal on an FTL, and on
//!   overwrite-capable memory via the page erase-then-write primitive.
//! * `VmTree` never rewrites a page in place: an updated node goes to the
//!   next sequential page and the parent's stale pointer is redirected
//!   through the in-memory mapping table. The table never chains (one entry
//!   per node, replaced in place), so lookups stay O(1) and repeated updates
//!   of one node cost one entry total. When the table cannot take a new
//!   entry, the pointer is materialized instead: the parent is rewritten
//!   with the child's real location (cascading upward at worst to the root,
//!   which lives in RAM and needs no entry).
//! * `VmTreeOw` keeps nodes unsorted with per-slot count/valid bits so
//!   inserts and deletions of slots are 1 -> 0 bit programs on the same
//!   page. Pages never relocate; parents always hold literal pointers.
//!
//! Shared policies: fixed-width records, duplicate keys allowed, no sibling
//! pointers (range scans re-descend), equal keys route to the right child,
//! median splits with the separator equal to the right node's first key,
//! an LRU buffer pool with the root pinned, and an optional write buffer
//! that batches inserts per leaf.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{
    child_index, decode_sorted, encode_sorted, max_entries, ow_append_child, ow_append_record,
    ow_clear_root, ow_init, ow_invalidate, ow_is_root, ow_kind, ow_leftmost_child,
    ow_live_children, ow_live_records, ow_used_slots, LayoutKind, NodeKind, PageHeader,
    RecordLayout, SortedNode, ValueBuf,
};
use crate::error::EngineError;
use crate::flash::{FlashDevice, FlashMode, IoCounters, PageId, NO_PAGE};
use crate::mapping::MappingTable;
use crate::pool::BufferPool;
use crate::store::{restore_spill, scan_storage, StorageManager};
use crate::wbuf::OpLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    BTree,
    VmTree,
    VmTreeOw,
}

impl Variant {
    pub fn compatible(self, mode: FlashMode) -> bool {
        match self {
            Variant::BTree => matches!(mode, FlashMode::Ftl | FlashMode::Overwrite),
            Variant::VmTree => true,
            Variant::VmTreeOw => matches!(mode, FlashMode::Ftl | FlashMode::Overwrite),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub variant: Variant,
    pub layout: RecordLayout,
    /// Buffer pool frames (minimum 3; the root stays pinned).
    pub buffer_frames: usize,
    /// Mapping table byte budget (VmTree only; 0 disables the table and
    /// every relocation cascades into its parent).
    pub mapping_table_bytes: usize,
    /// Write buffer size in pages; 0 disables batching.
    pub write_buffer_pages: usize,
    /// Blocks kept erased ahead of the sequential write head (VmTree on
    /// raw NAND).
    pub erased_window_blocks: u32,
    /// Minimum mapped children before a maintenance rewrite of an interior
    /// node pays off.
    pub flush_threshold: usize,
    /// Mapping-table load factor above which maintenance starts
    /// materializing pointers along the insert path.
    pub maintenance_load_factor: f32,
    /// Cap on leaf entries (None = whatever fits the page). Pinning the
    /// same cap across variants makes tree shapes comparable.
    pub max_leaf_entries: Option<usize>,
    pub max_interior_entries: Option<usize>,
}

impl EngineConfig {
    pub fn new(variant: Variant, layout: RecordLayout) -> Self {
        EngineConfig {
            variant,
            layout,
            buffer_frames: 3,
            mapping_table_bytes: 1024,
            write_buffer_pages: 0,
            erased_window_blocks: 2,
            flush_threshold: 2,
            maintenance_load_factor: 0.5,
            max_leaf_entries: None,
            max_interior_entries: None,
        }
    }
}

/// RAM the engine holds, by component. `total` excludes the per-frame
/// bookkeeping reported in `buffer_meta_bytes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryFootprint {
    pub buffer_bytes: usize,
    pub buffer_meta_bytes: usize,
    pub mapping_bytes: usize,
    pub write_buffer_bytes: usize,
    pub bitmap_bytes: usize,
}

impl MemoryFootprint {
    pub fn total(&self) -> usize {
        self.buffer_bytes + self.mapping_bytes + self.write_buffer_bytes + self.bitmap_bytes
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EngineStats {
    pub records: u64,
    pub buffered: usize,
    pub height: usize,
    pub mapping_entries: usize,
    pub mapping_load: f32,
    pub mapping_peak_load: f32,
    pub forced_flushes: u64,
    pub maintenance_writes: u64,
    pub batch_flushes: u64,
    pub gc_relocations: u64,
    pub gc_erases: u64,
    pub passes: u64,
    pub pool_hits: u64,
    pub pool_misses: u64,
    pub recovery_pages_scanned: u64,
    pub orphan_records_reinserted: u64,
}

#[derive(Debug)]
enum Alloc {
    Circular(StorageManager),
    Simple {
        next: PageId,
        num_pages: u32,
        free: Vec<PageId>,
    },
}

#[derive(Debug)]
struct SortedStep {
    /// Id the parent stores for this node (for the root: the RAM-tracked
    /// stable id). Mapping keys are always pointer ids.
    ptr_id: PageId,
    phys: PageId,
    node: SortedNode,
    child_idx: usize,
}

#[derive(Debug)]
struct OwStep {
    phys: PageId,
    page: Vec<u8>,
}

#[derive(Debug)]
pub struct IndexEngine {
    cfg: EngineConfig,
    dev: FlashDevice,
    pool: BufferPool,
    mapping: MappingTable,
    wbuf: Option<OpLog>,
    alloc: Alloc,
    root_phys: PageId,
    serial: u32,
    height: usize,
    records: u64,
    leaf_cap: usize,
    int_cap: usize,
    forced_flushes: u64,
    maintenance_writes: u64,
    batch_flushes: u64,
    recovery_pages_scanned: u64,
    orphan_records_reinserted: u64,
}

fn validate(cfg: &EngineConfig, page_size: usize, mode: FlashMode) -> Result<(usize, usize), EngineError> {
    if !cfg.variant.compatible(mode) {
        return Err(EngineError::IncompatibleMode);
    }
    RecordLayout::new(cfg.layout.key_width, cfg.layout.record_width)?;
    if cfg.flush_threshold < 2
        || cfg.erased_window_blocks < 1
        || !(cfg.maintenance_load_factor > 0.0 && cfg.maintenance_load_factor <= 1.0)
    {
        return Err(EngineError::BadConfig);
    }
    let (lk, ik) = match cfg.variant {
        Variant::VmTreeOw => (LayoutKind::OwLeaf, LayoutKind::OwInterior),
        _ => (LayoutKind::SortedLeaf, LayoutKind::SortedInterior),
    };
    let max_leaf = max_entries(page_size, cfg.layout, lk)?;
    let max_int = max_entries(page_size, cfg.layout, ik)?;
    let leaf_cap = cfg.max_leaf_entries.unwrap_or(max_leaf);
    let int_cap = cfg.max_interior_entries.unwrap_or(max_int);
    if leaf_cap < 2 || leaf_cap > max_leaf || int_cap < 2 || int_cap > max_int {
        return Err(EngineError::BadConfig);
    }
    Ok((leaf_cap, int_cap))
}

impl IndexEngine {
    pub fn create(cfg: EngineConfig, dev: FlashDevice) -> Result<Self, EngineError> {
        let geom = dev.geometry();
        let (leaf_cap, int_cap) = validate(&cfg, geom.page_size, dev.mode())?;
        let alloc = match (cfg.variant, dev.mode()) {
            (Variant::VmTree, FlashMode::RawNand) => {
                Alloc::Circular(StorageManager::new(geom, cfg.erased_window_blocks)?)
            }
            _ => Alloc::Simple {
                next: 0,
                num_pages: geom.num_pages,
                free: Vec::new(),
            },
        };
        let table_budget = if cfg.variant == Variant::VmTree {
            cfg.mapping_table_bytes
        } else {
            0
        };
        let wbuf = if cfg.write_buffer_pages > 0 {
            Some(OpLog::new(cfg.write_buffer_pages, geom.page_size, cfg.layout.record_width))
        } else {
            None
        };
        let mut eng = IndexEngine {
            cfg,
            pool: BufferPool::new(cfg.buffer_frames, geom.page_size)?,
            mapping: MappingTable::new(table_budget, geom.num_pages),
            wbuf,
            alloc,
            dev,
            root_phys: 0,
            serial: 0,
            height: 1,
            records: 0,
            leaf_cap,
            int_cap,
            forced_flushes: 0,
            maintenance_writes: 0,
            batch_flushes: 0,
            recovery_pages_scanned: 0,
            orphan_records_reinserted: 0,
        };
        let p = eng.alloc_page()?;
        let img = match eng.cfg.variant {
            Variant::VmTreeOw => ow_init(geom.page_size, p, NodeKind::Leaf, true, None),
            _ => {
                let mut root = SortedNode::new_leaf(p, NO_PAGE, true);
                root.header.serial = eng.stamp();
                encode_sorted(&root, eng.cfg.layout, geom.page_size)?
            }
        };
        eng.put_page(p, &img)?;
        eng.pool.update(p, &img)?;
        eng.root_phys = p;
        eng.pool.set_pinned(p, true);
        Ok(eng)
    }

    // --- small helpers ---------------------------------------------------

    fn page_size(&self) -> usize {
        self.dev.geometry().page_size
    }

    fn alloc_page(&mut self) -> Result<PageId, EngineError> {
        match &mut self.alloc {
            Alloc::Circular(sm) => {
                let mapping = &self.mapping;
                sm.allocate_next(&mut self.dev, |p| mapping.contains(p))
            }
            Alloc::Simple { next, num_pages, free } => {
                let mapping = &self.mapping;
                if let Some(pos) = free.iter().rposition(|&p| !mapping.contains(p)) {
                    return Ok(free.swap_remove(pos));
                }
                if *next < *num_pages {
                    let p = *next;
                    *next += 1;
                    Ok(p)
                } else {
                    Err(EngineError::StorageFull)
                }
            }
        }
    }

    fn free_page(&mut self, page: PageId) {
        match &mut self.alloc {
            Alloc::Circular(sm) => sm.mark_free(page),
            Alloc::Simple { free, .. } => {
                debug_assert!(!free.contains(&page), "double free of page {page}");
                free.push(page);
            }
        }
    }

    /// Write a page image wherever the mode allows: plain write to erased
    /// space, erase-then-write when reusing a page on overwrite memory.
    fn put_page(&mut self, addr: PageId, data: &[u8]) -> Result<(), EngineError> {
        if self.dev.mode() == FlashMode::Overwrite && !self.dev.is_erased(addr)? {
            self.dev.erase_then_write_page(addr, data)?;
        } else {
            self.dev.write_page(addr, data)?;
        }
        Ok(())
    }

    /// Replace a page's content at the same address.
    fn rewrite_in_place(&mut self, addr: PageId, data: &[u8]) -> Result<(), EngineError> {
        match self.dev.mode() {
            FlashMode::Overwrite => self.dev.erase_then_write_page(addr, data)?,
            _ => self.dev.write_page(addr, data)?,
        }
        Ok(())
    }

    fn set_root_phys(&mut self, q: PageId) {
        if q != self.root_phys {
            self.pool.set_pinned(self.root_phys, false);
            self.root_phys = q;
        }
        self.pool.set_pinned(q, true);
    }

    /// Next write stamp for a full page image.
    fn stamp(&mut self) -> u32 {
        self.serial += 1;
        self.serial
    }

    fn materialize_children(node: &mut SortedNode, mapping: &mut MappingTable) {
        for c in node.children.iter_mut() {
            if let Some(p) = mapping.get(*c) {
                mapping.remove(*c);
                *c = p;
            }
        }
    }

    // --- sorted-layout paths (BTree, VmTree) -----------------------------

    fn descend_sorted(&mut self, key: u64) -> Result<(Vec<SortedStep>, Option<u64>), EngineError> {
        let mut path = Vec::new();
        // the root has no parent pointer, so it owns no id in the chain
        // namespace; NO_PAGE keeps it out of the mapping table entirely
        let mut ptr_id = NO_PAGE;
        let mut phys = self.root_phys;
        let mut upper: Option<u64> = None;
        loop {
            let bytes = self.pool.fetch(phys, &mut self.dev)?.to_vec();
            let node = decode_sorted(&bytes, self.cfg.layout)?;
            if node.is_leaf() {
                path.push(SortedStep { ptr_id, phys, node, child_idx: 0 });
                return Ok((path, upper));
            }
            let idx = child_index(&node.keys, key);
            if idx < node.keys.len() {
                let s = node.keys[idx];
                upper = Some(upper.map_or(s, |u| u.min(s)));
            }
            let child_ptr = node.children[idx];
            let child_phys = self.mapping.resolve(child_ptr);
            path.push(SortedStep { ptr_id, phys, node, child_idx: idx });
            ptr_id = child_ptr;
            phys = child_phys;
        }
    }

    fn write_sorted_in_place(&mut self, step: &mut SortedStep) -> Result<(), EngineError> {
        step.node.header.serial = self.stamp();
        let bytes = encode_sorted(&step.node, self.cfg.layout, self.page_size())?;
        self.put_page(step.phys, &bytes)?;
        self.pool.update(step.phys, &bytes)?;
        Ok(())
    }

    /// Write the node to a fresh sequential page and free its old one.
    fn relocate_sorted(&mut self, step: &mut SortedStep, is_root: bool) -> Result<PageId, EngineError> {
        let q = self.alloc_page()?;
        let old = step.phys;
        step.node.header.page_id = q;
        step.node.header.prev_page_id = step.ptr_id;
        step.node.header.is_root = is_root;
        step.node.header.serial = self.stamp();
        let bytes = encode_sorted(&step.node, self.cfg.layout, self.page_size())?;
        self.put_page(q, &bytes)?;
        self.pool.invalidate(old);
        self.pool.update(q, &bytes)?;
        self.free_page(old);
        step.phys = q;
        Ok(q)
    }

    /// Record where the relocated node at `path[level]` went: into the
    /// mapping table if it fits, else into the parent node itself
    /// (a forced flush, cascading upward while the table stays full).
    fn publish(
        &mut self,
        path: &mut [SortedStep],
        mut level: usize,
        mut new_phys: PageId,
    ) -> Result<(), EngineError> {
        loop {
            if level == 0 {
                self.set_root_phys(new_phys);
                return Ok(());
            }
            let ptr = path[level].ptr_id;
            if self.mapping.put(ptr, new_phys).is_ok() {
                return Ok(());
            }
            self.forced_flushes += 1;
            level -= 1;
            let idx = path[level].child_idx;
            {
                let node = &mut path[level].node;
                node.children[idx] = new_phys;
                Self::materialize_children(node, &mut self.mapping);
            }
            let is_root = level == 0;
            new_phys = self.relocate_sorted(&mut path[level], is_root)?;
        }
    }

    fn insert_sorted_one(&mut self, key: u64, value: ValueBuf) -> Result<(), EngineError> {
        let (mut path, _) = self.descend_sorted(key)?;
        let last = path.len() - 1;
        {
            let node = &mut path[last].node;
            let pos = node.keys.partition_point(|&k| k <= key);
            node.keys.insert(pos, key);
            node.values.insert(pos, value);
        }
        if path[last].node.keys.len() <= self.leaf_cap {
            if self.cfg.variant == Variant::VmTree {
                let is_root = last == 0;
                let q = self.relocate_sorted(&mut path[last], is_root)?;
                self.publish(&mut path, last, q)?;
            } else {
                self.write_sorted_in_place(&mut path[last])?;
            }
        } else {
            self.split_sorted(path)?;
        }
        self.records += 1;
        Ok(())
    }

    fn split_sorted(&mut self, mut path: Vec<SortedStep>) -> Result<(), EngineError> {
        let layout = self.cfg.layout;
        let ps = self.page_size();
        let vm = self.cfg.variant == Variant::VmTree;
        let mut level = path.len() - 1;
        // pages replaced by fresh-chain split halves; freeing them before
        // the ancestor re-link is durable would let garbage collection
        // erase the only copy a crashed tree can still reach
        let mut deferred: Vec<PageId> = Vec::new();
        loop {
            let is_root = level == 0;
            let leaf = path[level].node.is_leaf();
            let cap = if leaf { self.leaf_cap } else { self.int_cap };
            if path[level].node.keys.len() <= cap {
                // fits after absorbing the carried separator
                if vm {
                    if !leaf {
                        Self::materialize_children(&mut path[level].node, &mut self.mapping);
                    }
                    let q = self.relocate_sorted(&mut path[level], is_root)?;
                    self.publish(&mut path, level, q)?;
                } else {
                    self.write_sorted_in_place(&mut path[level])?;
                }
                for p in deferred {
                    self.free_page(p);
                }
                return Ok(());
            }
            if vm && !leaf {
                Self::materialize_children(&mut path[level].node, &mut self.mapping);
            }
            let (sep, mut right) = {
                let node = &mut path[level].node;
                if leaf {
                    let mid = (node.keys.len() + 1) / 2;
                    let keys = node.keys.split_off(mid);
                    let values = node.values.split_off(mid);
                    let sep = keys[0];
                    let mut r = SortedNode::new_leaf(0, NO_PAGE, false);
                    r.keys = keys;
                    r.values = values;
                    (sep, r)
                } else {
                    let mid = node.keys.len() / 2;
                    let rkeys = node.keys.split_off(mid + 1);
                    let sep = node.keys.pop().unwrap();
                    let rchildren = node.children.split_off(mid + 1);
                    (
                        sep,
                        SortedNode {
                            header: PageHeader {
                                page_id: 0,
                                prev_page_id: NO_PAGE,
                                kind: NodeKind::Interior,
                                is_root: false,
                                entry_count: 0,
                                serial: 0,
                            },
                            keys: rkeys,
                            values: Vec::new(),
                            children: rchildren,
                        },
                    )
                }
            };
            path[level].node.header.is_root = false;
            let (lid, rid);
            if vm {
                // both halves start fresh chains; the old page and its
                // redirect die with the split
                let qr = self.alloc_page()?;
                right.header.page_id = qr;
                right.header.serial = self.stamp();
                let bytes_r = encode_sorted(&right, layout, ps)?;
                self.put_page(qr, &bytes_r)?;
                self.pool.update(qr, &bytes_r)?;
                let ql = self.alloc_page()?;
                let old = path[level].phys;
                let ptr = path[level].ptr_id;
                path[level].node.header.page_id = ql;
                path[level].node.header.prev_page_id = NO_PAGE;
                path[level].node.header.serial = self.stamp();
                let bytes_l = encode_sorted(&path[level].node, layout, ps)?;
                self.put_page(ql, &bytes_l)?;
                self.pool.invalidate(old);
                self.pool.update(ql, &bytes_l)?;
                deferred.push(old);
                if ptr != NO_PAGE {
                    self.mapping.remove(ptr);
                }
                path[level].phys = ql;
                lid = ql;
                rid = qr;
            } else {
                let qr = self.alloc_page()?;
                right.header.page_id = qr;
                right.header.serial = self.stamp();
                let bytes_r = encode_sorted(&right, layout, ps)?;
                self.put_page(qr, &bytes_r)?;
                self.pool.update(qr, &bytes_r)?;
                path[level].node.header.serial = self.stamp();
                let bytes_l = encode_sorted(&path[level].node, layout, ps)?;
                self.put_page(path[level].phys, &bytes_l)?;
                self.pool.update(path[level].phys, &bytes_l)?;
                lid = path[level].phys;
                rid = qr;
            }
            if is_root {
                let q = self.alloc_page()?;
                let root_serial = self.stamp();
                let root = SortedNode {
                    header: PageHeader {
                        page_id: q,
                        prev_page_id: NO_PAGE,
                        kind: NodeKind::Interior,
                        is_root: true,
                        entry_count: 0,
                        serial: root_serial,
                    },
                    keys: vec![sep],
                    values: Vec::new(),
                    children: vec![lid, rid],
                };
                let bytes = encode_sorted(&root, layout, ps)?;
                self.put_page(q, &bytes)?;
                self.pool.update(q, &bytes)?;
                self.set_root_phys(q);
                self.height += 1;
                for p in deferred {
                    self.free_page(p);
                }
                return Ok(());
            }
            level -= 1;
            let idx = path[level].child_idx;
            let node = &mut path[level].node;
            node.children[idx] = lid;
            node.keys.insert(idx, sep);
            node.children.insert(idx + 1, rid);
        }
    }

    /// Materialize pointers along the insert path while the table runs hot,
    /// cheapest (lowest) nodes first.
    fn maintain(&mut self, key: u64) -> Result<(), EngineError> {
        if self.cfg.variant != Variant::VmTree || self.mapping.capacity() == 0 {
            return Ok(());
        }
        for _ in 0..self.height {
            if self.mapping.load_factor() < self.cfg.maintenance_load_factor {
                break;
            }
            let (mut path, _) = self.descend_sorted(key)?;
            let mut target = None;
            for level in (0..path.len().saturating_sub(1)).rev() {
                let mapped = path[level]
                    .node
                    .children
                    .iter()
                    .filter(|c| self.mapping.contains(**c))
                    .count();
                if mapped >= self.cfg.flush_threshold {
                    target = Some(level);
                    break;
                }
            }
            let level = match target {
                Some(l) => l,
                None => break,
            };
            Self::materialize_children(&mut path[level].node, &mut self.mapping);
            let is_root = level == 0;
            let q = self.relocate_sorted(&mut path[level], is_root)?;
            self.publish(&mut path, level, q)?;
            self.maintenance_writes += 1;
        }
        Ok(())
    }

    /// Free pages whose id is a live mapping key cannot be reallocated, so
    /// on small devices the table can starve the allocator while plenty of
    /// space sits idle. Retire such entries (materialize the parent pointer)
    /// until a worst-case split path can allocate again.
    fn ensure_allocatable(&mut self) -> Result<(), EngineError> {
        let slack = 2 * self.height + 3;
        for _ in 0..self.mapping.capacity().max(1) * self.height.max(1) {
            let (usable, pick) = match &self.alloc {
                Alloc::Circular(sm) => {
                    let mut blocked = 0u32;
                    let mut pick = None;
                    for (p, n) in self.mapping.iter() {
                        if sm.is_free(p) {
                            blocked += 1;
                            pick = Some((p, n));
                        }
                    }
                    (sm.free_count().saturating_sub(blocked), pick)
                }
                _ => return Ok(()),
            };
            if usable as usize >= slack {
                return Ok(());
            }
            let Some((prev, cur)) = pick else { return Ok(()) };
            self.retire_entry(prev, cur)?;
        }
        Ok(())
    }

    /// Materialize the single parent pointer behind the mapping entry
    /// `prev -> cur` by rewriting that parent.
    fn retire_entry(&mut self, prev: PageId, cur: PageId) -> Result<(), EngineError> {
        let bytes = self.pool.fetch(cur, &mut self.dev)?.to_vec();
        let node = decode_sorted(&bytes, self.cfg.layout)?;
        let Some(&key) = node.keys.first() else {
            return Ok(());
        };
        let (mut path, _) = self.descend_sorted(key)?;
        let hit = path.iter().position(|s| s.ptr_id == prev);
        let Some(hit) = hit else {
            return Ok(());
        };
        let level = hit - 1;
        Self::materialize_children(&mut path[level].node, &mut self.mapping);
        let is_root = level == 0;
        let q = self.relocate_sorted(&mut path[level], is_root)?;
        self.publish(&mut path, level, q)?;
        self.maintenance_writes += 1;
        Ok(())
    }

    // --- overwrite-layout paths (VmTreeOw) -------------------------------

    fn descend_ow(&mut self, key: u64) -> Result<(Vec<OwStep>, Option<u64>), EngineError> {
        let layout = self.cfg.layout;
        let mut path = Vec::new();
        let mut phys = self.root_phys;
        let mut upper: Option<u64> = None;
        loop {
            let page = self.pool.fetch(phys, &mut self.dev)?.to_vec();
            match ow_kind(&page)? {
                NodeKind::Leaf => {
                    path.push(OwStep { phys, page });
                    return Ok((path, upper));
                }
                NodeKind::Interior => {
                    let mut live = ow_live_children(&page, layout);
                    live.sort_by_key(|e| e.1);
                    let seps: Vec<u64> = live.iter().map(|e| e.1).collect();
                    let mut children = vec![ow_leftmost_child(&page)];
                    children.extend(live.iter().map(|e| e.2));
                    let idx = child_index(&seps, key);
                    if idx < seps.len() {
                        let s = seps[idx];
                        upper = Some(upper.map_or(s, |u| u.min(s)));
                    }
                    let next = children[idx];
                    path.push(OwStep { phys, page });
                    phys = next;
                }
            }
        }
    }

    fn insert_ow_one(&mut self, key: u64, value: ValueBuf) -> Result<(), EngineError> {
        let layout = self.cfg.layout;
        let ps = self.page_size();
        let (mut path, _) = self.descend_ow(key)?;
        let last = path.len() - 1;
        let used = ow_used_slots(&path[last].page, layout, false);
        if used < self.leaf_cap {
            // append is a pure 1 -> 0 delta on the same page
            ow_append_record(&mut path[last].page, layout, key, &value)?;
            let phys = path[last].phys;
            let img = path[last].page.clone();
            self.dev.write_page(phys, &img)?;
            self.pool.update(phys, &img)?;
            self.records += 1;
            return Ok(());
        }
        let live = ow_live_records(&path[last].page, layout);
        if live.len() < used {
            // dead slots: reclaim them with one page rewrite
            let is_root = ow_is_root(&path[last].page);
            let phys = path[last].phys;
            let mut img = ow_init(ps, phys, NodeKind::Leaf, is_root, None);
            for (_, k, v) in &live {
                ow_append_record(&mut img, layout, *k, v)?;
            }
            ow_append_record(&mut img, layout, key, &value)?;
            self.rewrite_in_place(phys, &img)?;
            self.pool.update(phys, &img)?;
            self.records += 1;
            return Ok(());
        }
        self.split_ow_leaf(&mut path, key, value)?;
        self.records += 1;
        Ok(())
    }

    fn split_ow_leaf(
        &mut self,
        path: &mut Vec<OwStep>,
        key: u64,
        value: ValueBuf,
    ) -> Result<(), EngineError> {
        let layout = self.cfg.layout;
        let ps = self.page_size();
        let last = path.len() - 1;
        let root_split = last == 0;
        let phys = path[last].phys;
        let live = ow_live_records(&path[last].page, layout);
        // slot order is arrival order, which a stable sort preserves per key
        let mut all: Vec<(u64, ValueBuf, Option<usize>)> =
            live.iter().map(|(s, k, v)| (*k, *v, Some(*s))).collect();
        all.sort_by_key(|e| e.0);
        let pos = all.partition_point(|e| e.0 <= key);
        all.insert(pos, (key, value, None));
        let mid = (all.len() + 1) / 2;
        let sep = all[mid].0;
        let pending_left = all[..mid].iter().any(|e| e.2.is_none());
        let qr = self.alloc_page()?;
        let mut img_r = ow_init(ps, qr, NodeKind::Leaf, false, None);
        for (k, v, _) in &all[mid..] {
            ow_append_record(&mut img_r, layout, *k, v)?;
        }
        self.put_page(qr, &img_r)?;
        self.pool.update(qr, &img_r)?;
        if pending_left {
            // the full page cannot take the new record as a delta
            let mut img_l = ow_init(ps, phys, NodeKind::Leaf, false, None);
            for (k, v, _) in &all[..mid] {
                ow_append_record(&mut img_l, layout, *k, v)?;
            }
            self.rewrite_in_place(phys, &img_l)?;
            self.pool.update(phys, &img_l)?;
        } else {
            // moved records die in place: valid bits 1 -> 0
            let page = &mut path[last].page;
            for (_, _, slot) in &all[mid..] {
                if let Some(s) = slot {
                    ow_invalidate(page, layout, *s, false)?;
                }
            }
            if root_split {
                ow_clear_root(page);
            }
            let img = page.clone();
            self.dev.write_page(phys, &img)?;
            self.pool.update(phys, &img)?;
        }
        let parent = if root_split { None } else { Some(last - 1) };
        self.ow_add_child(path, parent, sep, qr)
    }

    fn build_ow_interior(
        &self,
        page_id: PageId,
        is_root: bool,
        leftmost: PageId,
        entries: &[(u64, PageId)],
    ) -> Result<Vec<u8>, EngineError> {
        let mut img = ow_init(self.page_size(), page_id, NodeKind::Interior, is_root, Some(leftmost));
        for (s, c) in entries {
            ow_append_child(&mut img, self.cfg.layout, *s, *c)?;
        }
        Ok(img)
    }

    /// Insert a (separator, right child) pair at `level`, splitting upward
    /// as needed; `None` grows a new root.
    fn ow_add_child(
        &mut self,
        path: &mut Vec<OwStep>,
        mut level_opt: Option<usize>,
        mut sep: u64,
        mut right: PageId,
    ) -> Result<(), EngineError> {
        let layout = self.cfg.layout;
        let ps = self.page_size();
        loop {
            let level = match level_opt {
                Some(l) => l,
                None => {
                    let q = self.alloc_page()?;
                    let mut img = ow_init(ps, q, NodeKind::Interior, true, Some(path[0].phys));
                    ow_append_child(&mut img, layout, sep, right)?;
                    self.put_page(q, &img)?;
                    self.pool.update(q, &img)?;
                    self.set_root_phys(q);
                    self.height += 1;
                    return Ok(());
                }
            };
            let phys = path[level].phys;
            let used = ow_used_slots(&path[level].page, layout, true);
            if used < self.int_cap {
                ow_append_child(&mut path[level].page, layout, sep, right)?;
                let img = path[level].page.clone();
                self.dev.write_page(phys, &img)?;
                self.pool.update(phys, &img)?;
                return Ok(());
            }
            let mut live = ow_live_children(&path[level].page, layout);
            live.sort_by_key(|e| e.1);
            let mut entries: Vec<(u64, PageId)> = live.iter().map(|e| (e.1, e.2)).collect();
            let pos = entries.partition_point(|e| e.0 <= sep);
            entries.insert(pos, (sep, right));
            let leftmost = ow_leftmost_child(&path[level].page);
            if live.len() < used {
                // dead slots: compact and absorb the new pair
                let img = self.build_ow_interior(phys, ow_is_root(&path[level].page), leftmost, &entries)?;
                self.rewrite_in_place(phys, &img)?;
                self.pool.update(phys, &img)?;
                return Ok(());
            }
            // interior split: promote the median separator
            let mid = entries.len() / 2;
            let (sm, rchild0) = entries[mid];
            let right_entries = entries[mid + 1..].to_vec();
            let left_entries = entries[..mid].to_vec();
            let was_root = ow_is_root(&path[level].page);
            let qp = self.alloc_page()?;
            let img_r = self.build_ow_interior(qp, false, rchild0, &right_entries)?;
            self.put_page(qp, &img_r)?;
            self.pool.update(qp, &img_r)?;
            let img_l = self.build_ow_interior(phys, false, leftmost, &left_entries)?;
            self.rewrite_in_place(phys, &img_l)?;
            self.pool.update(phys, &img_l)?;
            sep = sm;
            right = qp;
            level_opt = if level == 0 {
                debug_assert!(was_root);
                None
            } else {
                Some(level - 1)
            };
        }
    }

    // --- public interface ------------------------------------------------

    pub fn insert(&mut self, key: u64, value: &[u8]) -> Result<(), EngineError> {
        if key > self.cfg.layout.max_key() || value.len() != self.cfg.layout.value_width() {
            return Err(EngineError::BadConfig);
        }
        let v = ValueBuf::from_slice(value);
        if self.wbuf.is_some() {
            let full = self.wbuf.as_mut().unwrap().push(key, v);
            if full {
                self.flush()?;
            }
            return Ok(());
        }
        self.insert_one(key, v)?;
        self.maintain(key)
    }

    fn insert_one(&mut self, key: u64, value: ValueBuf) -> Result<(), EngineError> {
        self.ensure_allocatable()?;
        match self.cfg.variant {
            Variant::VmTreeOw => self.insert_ow_one(key, value),
            _ => self.insert_sorted_one(key, value),
        }
    }

    /// Apply all buffered inserts, batching runs that land in one leaf.
    pub fn flush(&mut self) -> Result<(), EngineError> {
        let entries = match &mut self.wbuf {
            Some(w) => w.drain_sorted(),
            None => return Ok(()),
        };
        if entries.is_empty() {
            return Ok(());
        }
        self.batch_flushes += 1;
        self.apply_batch(&entries)?;
        self.maintain(entries[entries.len() - 1].0)
    }

    fn apply_batch(&mut self, entries: &[(u64, ValueBuf)]) -> Result<(), EngineError> {
        let layout = self.cfg.layout;
        let mut i = 0;
        while i < entries.len() {
            let key = entries[i].0;
            self.ensure_allocatable()?;
            match self.cfg.variant {
                Variant::VmTreeOw => {
                    let (mut path, upper) = self.descend_ow(key)?;
                    let last = path.len() - 1;
                    let used = ow_used_slots(&path[last].page, layout, false);
                    if used >= self.leaf_cap {
                        let (k, v) = entries[i];
                        self.insert_ow_one(k, v)?;
                        i += 1;
                        continue;
                    }
                    let room = self.leaf_cap - used;
                    let mut take = 0;
                    while i + take < entries.len()
                        && take < room
                        && upper.map_or(true, |u| entries[i + take].0 < u)
                    {
                        let (k, v) = entries[i + take];
                        ow_append_record(&mut path[last].page, layout, k, &v)?;
                        take += 1;
                    }
                    let phys = path[last].phys;
                    let img = path[last].page.clone();
                    self.dev.write_page(phys, &img)?;
                    self.pool.update(phys, &img)?;
                    self.records += take as u64;
                    i += take;
                }
                _ => {
                    let (mut path, upper) = self.descend_sorted(key)?;
                    let last = path.len() - 1;
                    if path[last].node.keys.len() >= self.leaf_cap {
                        let (k, v) = entries[i];
                        self.insert_sorted_one(k, v)?;
                        i += 1;
                        continue;
                    }
                    let room = self.leaf_cap - path[last].node.keys.len();
                    let mut take = 0;
                    while i + take < entries.len()
                        && take < room
                        && upper.map_or(true, |u| entries[i + take].0 < u)
                    {
                        let (k, v) = entries[i + take];
                        let node = &mut path[last].node;
                        let pos = node.keys.partition_point(|&x| x <= k);
                        node.keys.insert(pos, k);
                        node.values.insert(pos, v);
                        take += 1;
                    }
                    if self.cfg.variant == Variant::VmTree {
                        let is_root = last == 0;
                        let q = self.relocate_sorted(&mut path[last], is_root)?;
                        self.publish(&mut path, last, q)?;
                    } else {
                        self.write_sorted_in_place(&mut path[last])?;
                    }
                    self.records += take as u64;
                    i += take;
                }
            }
        }
        Ok(())
    }

    pub fn get(&mut self, key: u64) -> Result<Option<ValueBuf>, EngineError> {
        if let Some(w) = &self.wbuf {
            if let Some((_, v)) = w.entries().iter().rev().find(|(k, _)| *k == key) {
                return Ok(Some(*v));
            }
        }
        match self.cfg.variant {
            Variant::VmTreeOw => {
                let (path, _) = self.descend_ow(key)?;
                let leaf = &path[path.len() - 1];
                let live = ow_live_records(&leaf.page, self.cfg.layout);
                Ok(live.iter().rev().find(|(_, k, _)| *k == key).map(|(_, _, v)| *v))
            }
            _ => {
                let (path, _) = self.descend_sorted(key)?;
                let node = &path[path.len() - 1].node;
                match crate::codec::sorted_search(&node.keys, key) {
                    Some(i) => Ok(Some(node.values[i])),
                    None => Ok(None),
                }
            }
        }
    }

    /// All records with keys in `[lo, hi]`, sorted by key (duplicates keep
    /// arrival order). Re-descends through parents; nodes have no sibling
    /// links.
    pub fn range(&mut self, lo: u64, hi: u64) -> Result<Vec<(u64, ValueBuf)>, EngineError> {
        let mut out = Vec::new();
        let root = self.root_phys;
        self.range_walk(root, lo, hi, &mut out)?;
        if let Some(w) = &self.wbuf {
            out.extend(w.entries().iter().filter(|(k, _)| lo <= *k && *k <= hi).copied());
        }
        out.sort_by_key(|e| e.0);
        Ok(out)
    }

    fn range_walk(
        &mut self,
        phys: PageId,
        lo: u64,
        hi: u64,
        out: &mut Vec<(u64, ValueBuf)>,
    ) -> Result<(), EngineError> {
        let layout = self.cfg.layout;
        let bytes = self.pool.fetch(phys, &mut self.dev)?.to_vec();
        if self.cfg.variant == Variant::VmTreeOw {
            match ow_kind(&bytes)? {
                NodeKind::Leaf => {
                    for (_, k, v) in ow_live_records(&bytes, layout) {
                        if lo <= k && k <= hi {
                            out.push((k, v));
                        }
                    }
                }
                NodeKind::Interior => {
                    let mut live = ow_live_children(&bytes, layout);
                    live.sort_by_key(|e| e.1);
                    let seps: Vec<u64> = live.iter().map(|e| e.1).collect();
                    let mut children = vec![ow_leftmost_child(&bytes)];
                    children.extend(live.iter().map(|e| e.2));
                    // duplicates may straddle a separator equal to `lo`, so
                    // include the child left of it as well
                    let start = seps.partition_point(|&s| s < lo);
                    let end = child_index(&seps, hi);
                    for idx in start..=end {
                        self.range_walk(children[idx], lo, hi, out)?;
                    }
                }
            }
        } else {
            let node = decode_sorted(&bytes, layout)?;
            if node.is_leaf() {
                for (i, &k) in node.keys.iter().enumerate() {
                    if lo <= k && k <= hi {
                        out.push((k, node.values[i]));
                    }
                }
            } else {
                let start = node.keys.partition_point(|&s| s < lo);
                let end = child_index(&node.keys, hi);
                for idx in start..=end {
                    let child = self.mapping.resolve(node.children[idx]);
                    self.range_walk(child, lo, hi, out)?;
                }
            }
        }
        Ok(())
    }

    // --- recovery ---------------------------------------------------------

    /// Rebuild a VmTree from raw NAND content after power loss: finish any
    /// interrupted garbage collection from the spill block, scan backward
    /// from the write head to rebuild the mapping table and find the newest
    /// root, then re-insert records from leaves that were written but whose
    /// parent pointer never landed.
    pub fn recover(cfg: EngineConfig, mut dev: FlashDevice) -> Result<Self, EngineError> {
        if cfg.variant != Variant::VmTree || dev.mode() != FlashMode::RawNand {
            return Err(EngineError::BadConfig);
        }
        let geom = dev.geometry();
        let (leaf_cap, int_cap) = validate(&cfg, geom.page_size, dev.mode())?;
        let circ = geom.num_pages - geom.pages_per_block;
        restore_spill(&mut dev, circ)?;
        let scan = scan_storage(&mut dev, circ)?;
        let root_phys = match scan.root_phys {
            Some(p) => p,
            None => {
                return if scan.current.is_empty() {
                    Self::create(cfg, dev)
                } else {
                    Err(EngineError::EmptyTree)
                }
            }
        };
        let mut sm = StorageManager::from_scan(geom, cfg.erased_window_blocks, &dev, &scan)?;
        // Walk the reachable tree. A pointer id is ambiguous on its own: the
        // page it names may hold the node (materialized pointer) or a stale
        // image, and the newest page claiming it as chain key may be the
        // node's relocated version or a leftover of a retired chain. The
        // parent's separators bound the keys the child must hold, so filter
        // both candidates by that range and take the more recently written.
        let mut reachable: BTreeSet<PageId> = BTreeSet::new();
        let mut referenced: Vec<(PageId, PageId)> = Vec::new();
        let mut stack: Vec<(PageId, u64, u64, usize)> = vec![(root_phys, 0, u64::MAX, 1)];
        let mut height = 1;
        let mut records = 0u64;
        let mut walk_reads = 0u64;
        while let Some((c, lo, hi, depth)) = stack.pop() {
            let mut best: Option<(u64, PageId, SortedNode)> = None;
            let mut candidates = vec![c];
            if let Some(claimants) = scan.claims.get(&c) {
                // a freed page reused for a new node can out-rank the chain
                // it shadows, so keep older claimants too; the separator
                // filter below rejects the impostors
                candidates.extend(claimants.iter().copied().filter(|&p| p != c));
            }
            for p in candidates {
                let Some(&order) = scan.recency.get(&p) else { continue };
                let bytes = dev.read_page(p)?.to_vec();
                walk_reads += 1;
                let Ok(node) = decode_sorted(&bytes, cfg.layout) else { continue };
                if node.header.is_root && depth > 1 {
                    continue;
                }
                if !node.keys.iter().all(|&k| lo <= k && k <= hi) {
                    continue;
                }
                if best.as_ref().map_or(true, |(b, _, _)| order < *b) {
                    best = Some((order, p, node));
                }
            }
            let Some((_, phys, node)) = best else {
                return Err(EngineError::Corrupt);
            };
            if !reachable.insert(phys) {
                continue;
            }
            if phys != c {
                referenced.push((c, phys));
            }
            height = height.max(depth);
            if node.is_leaf() {
                records += node.keys.len() as u64;
            } else {
                for (idx, &child) in node.children.iter().enumerate() {
                    let clo = if idx == 0 { lo } else { node.keys[idx - 1] };
                    let chi = if idx == node.keys.len() { hi } else { node.keys[idx] };
                    stack.push((child, clo, chi, depth + 1));
                }
            }
        }
        for &p in &reachable {
            sm.mark_used(p);
        }
        let mut mapping = MappingTable::new(cfg.mapping_table_bytes, geom.num_pages);
        for (c, cp) in referenced {
            mapping.put(c, cp).map_err(|_| EngineError::RecoveryOverflow)?;
        }
        let wbuf = if cfg.write_buffer_pages > 0 {
            Some(OpLog::new(cfg.write_buffer_pages, geom.page_size, cfg.layout.record_width))
        } else {
            None
        };
        let mut eng = IndexEngine {
            cfg,
            pool: BufferPool::new(cfg.buffer_frames, geom.page_size)?,
            mapping,
            wbuf,
            alloc: Alloc::Circular(sm),
            dev,
            root_phys,
            height,
            records,
            leaf_cap,
            int_cap,
            forced_flushes: 0,
            maintenance_writes: 0,
            serial: scan.max_serial,
            batch_flushes: 0,
            recovery_pages_scanned: scan.pages_scanned + walk_reads,
            orphan_records_reinserted: 0,
        };
        eng.pool.fetch(root_phys, &mut eng.dev)?;
        eng.pool.set_pinned(root_phys, true);
        // orphan leaves: written but never linked before the crash
        let orphans: Vec<PageId> = scan
            .current
            .iter()
            .copied()
            .filter(|p| !reachable.contains(p))
            .collect();
        for p in orphans {
            let bytes = eng.dev.read_page(p)?.to_vec();
            eng.recovery_pages_scanned += 1;
            let node = match decode_sorted(&bytes, eng.cfg.layout) {
                // root-flagged leaves are old root versions, not orphans
                Ok(n) if n.is_leaf() && !n.header.is_root => n,
                _ => continue,
            };
            let mut groups: BTreeMap<(u64, ValueBuf), u64> = BTreeMap::new();
            for (i, &k) in node.keys.iter().enumerate() {
                *groups.entry((k, node.values[i])).or_insert(0) += 1;
            }
            for ((k, v), m) in groups {
                let have = eng.count_matches(k, &v)?;
                for _ in have..m {
                    eng.insert_one(k, v)?;
                    eng.orphan_records_reinserted += 1;
                }
            }
        }
        Ok(eng)
    }

    fn count_matches(&mut self, key: u64, value: &ValueBuf) -> Result<u64, EngineError> {
        Ok(self
            .range(key, key)?
            .iter()
            .filter(|(_, v)| v == value)
            .count() as u64)
    }

    // --- introspection ----------------------------------------------------

    pub fn variant(&self) -> Variant {
        self.cfg.variant
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn record_count(&self) -> u64 {
        self.records + self.wbuf.as_ref().map_or(0, |w| w.len() as u64)
    }

    pub fn io(&self) -> IoCounters {
        self.dev.counters()
    }

    pub fn device(&self) -> &FlashDevice {
        &self.dev
    }

    pub fn device_mut(&mut self) -> &mut FlashDevice {
        &mut self.dev
    }

    pub fn into_device(self) -> FlashDevice {
        self.dev
    }

    pub fn footprint(&self) -> MemoryFootprint {
        let (buffer_bytes, buffer_meta_bytes) = self.pool.footprint();
        MemoryFootprint {
            buffer_bytes,
            buffer_meta_bytes,
            mapping_bytes: self.mapping.footprint(),
            write_buffer_bytes: self.wbuf.as_ref().map_or(0, |w| w.footprint()),
            bitmap_bytes: match &self.alloc {
                Alloc::Circular(sm) => sm.bitmap_bytes(),
                Alloc::Simple { .. } => 0,
            },
        }
    }

    pub fn stats(&self) -> EngineStats {
        let (gc_relocations, gc_erases, passes) = match &self.alloc {
            Alloc::Circular(sm) => (sm.stats().relocations, sm.stats().erases, sm.passes()),
            Alloc::Simple { .. } => (0, 0, 0),
        };
        EngineStats {
            records: self.records,
            buffered: self.wbuf.as_ref().map_or(0, |w| w.len()),
            height: self.height,
            mapping_entries: self.mapping.len(),
            mapping_load: self.mapping.load_factor(),
            mapping_peak_load: self.mapping.peak_load_factor(),
            forced_flushes: self.forced_flushes,
            maintenance_writes: self.maintenance_writes,
            batch_flushes: self.batch_flushes,
            gc_relocations,
            gc_erases,
            passes,
            pool_hits: self.pool.hits(),
            pool_misses: self.pool.misses(),
            recovery_pages_scanned: self.recovery_pages_scanned,
            orphan_records_reinserted: self.orphan_records_reinserted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::FlashGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap as StdMap;

    const L16: RecordLayout = RecordLayout {
        key_width: 4,
        record_width: 16,
    };

    fn small_cfg(variant: Variant) -> EngineConfig {
        let mut cfg = EngineConfig::new(variant, L16);
        cfg.buffer_frames = 4;
        cfg.max_leaf_entries = Some(8);
        cfg.max_interior_entries = Some(8);
        cfg
    }

    fn device(mode: FlashMode) -> FlashDevice {
        FlashDevice::new(FlashGeometry::new(512, 8, 512).unwrap(), mode)
    }

    fn value_for(key: u64, salt: u64) -> Vec<u8> {
        ValueBuf::from_u64(key * 1000 + salt, L16.value_width())
            .as_slice()
            .to_vec()
    }

    fn combos() -> Vec<(Variant, FlashMode)> {
        vec![
            (Variant::BTree, FlashMode::Ftl),
            (Variant::BTree, FlashMode::Overwrite),
            (Variant::VmTree, FlashMode::RawNand),
            (Variant::VmTree, FlashMode::Ftl),
            (Variant::VmTree, FlashMode::Overwrite),
            (Variant::VmTreeOw, FlashMode::Overwrite),
            (Variant::VmTreeOw, FlashMode::Ftl),
        ]
    }

    fn run_oracle(variant: Variant, mode: FlashMode, n: u64, seed: u64) {
        let mut eng = IndexEngine::create(small_cfg(variant), device(mode)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut oracle: StdMap<u64, Vec<Vec<u8>>> = StdMap::new();
        for i in 0..n {
            let k = rng.gen_range(0..200u64);
            let v = value_for(k, i);
            eng.insert(k, &v).unwrap();
            oracle.entry(k).or_default().push(v);
        }
        for k in 0..200u64 {
            let got = eng.get(k).unwrap();
            match oracle.get(&k) {
                Some(vals) => {
                    let g = got.expect("missing key");
                    assert!(vals.iter().any(|v| v[..] == *g.as_slice()), "wrong value for {k}");
                }
                None => assert!(got.is_none(), "phantom key {k}"),
            }
        }
        let got: Vec<(u64, Vec<u8>)> = eng
            .range(40, 160)
            .unwrap()
            .into_iter()
            .map(|(k, v)| (k, v.as_slice().to_vec()))
            .collect();
        let mut want: Vec<(u64, Vec<u8>)> = oracle
            .range(40..=160)
            .flat_map(|(k, vs)| vs.iter().map(move |v| (*k, v.clone())))
            .collect();
        want.sort();
        let mut got_sorted = got.clone();
        got_sorted.sort();
        assert_eq!(got_sorted, want, "{variant:?}/{mode:?} range mismatch");
        assert_eq!(eng.record_count(), n);
        assert_eq!(eng.io().illegal_write_rejects, 0, "{variant:?}/{mode:?} illegal writes");
    }

    #[test]
    fn every_variant_matches_oracle() {
        for (v, m) in combos() {
            run_oracle(v, m, 800, 7);
        }
    }

    #[test]
    fn incompatible_modes_are_rejected() {
        assert_eq!(
            IndexEngine::create(small_cfg(Variant::BTree), device(FlashMode::RawNand)).unwrap_err(),
            EngineError::IncompatibleMode
        );
        assert_eq!(
            IndexEngine::create(small_cfg(Variant::VmTreeOw), device(FlashMode::RawNand))
                .unwrap_err(),
            EngineError::IncompatibleMode
        );
    }

    #[test]
    fn vmtree_leaf_update_is_one_write_with_mapping() {
        // height-2 tree: a leaf insert relocates the leaf only, leaving the
        // parent's stale pointer to the table
        let mut eng = IndexEngine::create(small_cfg(Variant::VmTree), device(FlashMode::RawNand))
            .unwrap();
        for k in 0..9u64 {
            eng.insert(k, &value_for(k, 0)).unwrap();
        }
        assert_eq!(eng.height(), 2);
        let before = eng.io();
        eng.insert(3, &value_for(3, 1)).unwrap();
        let delta = eng.io().since(&before);
        assert_eq!(delta.page_writes, 1);
        // repeated updates of the same leaf keep a single table entry
        let entries = eng.stats().mapping_entries;
        for s in 2..4u64 {
            eng.insert(3, &value_for(3, s)).unwrap();
        }
        assert_eq!(eng.stats().mapping_entries, entries);
    }

    #[test]
    fn vmtree_without_table_cascades_to_root() {
        let mut cfg = small_cfg(Variant::VmTree);
        cfg.mapping_table_bytes = 0;
        let mut eng = IndexEngine::create(cfg, device(FlashMode::RawNand)).unwrap();
        for k in 0..60u64 {
            eng.insert(k, &value_for(k, 0)).unwrap();
        }
        let h = eng.height() as u64;
        assert!(h >= 3);
        // find a non-splitting insert; it must rewrite the whole path
        let mut found = false;
        for k in 0..60u64 {
            let before = eng.io();
            eng.insert(k, &value_for(k, 9)).unwrap();
            let delta = eng.io().since(&before);
            if delta.page_writes == h {
                found = true;
                break;
            }
            assert!(delta.page_writes > h, "leaf write below path length");
        }
        assert!(found);
    }

    #[test]
    fn write_buffer_preserves_content_and_saves_writes() {
        let run = |wbuf_pages: usize| {
            let mut cfg = small_cfg(Variant::VmTree);
            cfg.write_buffer_pages = wbuf_pages;
            let mut eng =
                IndexEngine::create(cfg, device(FlashMode::RawNand)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for i in 0..600u64 {
                // skewed keys so sorted runs share leaves
                let k = rng.gen_range(0..40u64) * 3;
                eng.insert(k, &value_for(k, i)).unwrap();
            }
            eng.flush().unwrap();
            let content = eng.range(0, u64::MAX >> 1).unwrap();
            (eng.io().total_writes(), content)
        };
        let (writes_plain, content_plain) = run(0);
        let (writes_buffered, content_buffered) = run(1);
        let sort = |mut v: Vec<(u64, ValueBuf)>| {
            v.sort();
            v
        };
        assert_eq!(sort(content_plain), sort(content_buffered));
        assert!(
            writes_buffered < writes_plain,
            "buffered {writes_buffered} >= plain {writes_plain}"
        );
    }

    #[test]
    fn vmtree_survives_many_wraps() {
        // 60 circular pages, enough records to wrap several times
        let g = FlashGeometry::new(512, 4, 64).unwrap();
        let dev = FlashDevice::new(g, FlashMode::RawNand);
        let mut cfg = small_cfg(Variant::VmTree);
        cfg.max_leaf_entries = Some(20);
        cfg.max_interior_entries = Some(20);
        let mut eng = IndexEngine::create(cfg, dev).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut oracle: StdMap<u64, u64> = StdMap::new();
        for i in 0..600u64 {
            let k = rng.gen_range(0..150u64);
            eng.insert(k, &value_for(k, i)).unwrap();
            *oracle.entry(k).or_insert(0) += 1;
        }
        let s = eng.stats();
        assert!(s.passes >= 2, "only {} passes", s.passes);
        assert!(s.gc_erases > 0);
        assert_eq!(eng.io().illegal_write_rejects, 0);
        let all = eng.range(0, 1 << 20).unwrap();
        assert_eq!(all.len() as u64, 600);
        for (k, want) in oracle {
            let got = all.iter().filter(|e| e.0 == k).count() as u64;
            assert_eq!(got, want, "key {k}");
        }
    }

    #[test]
    fn recovery_rebuilds_identical_content() {
        let g = FlashGeometry::new(512, 4, 64).unwrap();
        let dev = FlashDevice::new(g, FlashMode::RawNand);
        let mut cfg = small_cfg(Variant::VmTree);
        cfg.max_leaf_entries = Some(20);
        cfg.max_interior_entries = Some(20);
        let mut eng = IndexEngine::create(cfg, dev).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..500u64 {
            let k = rng.gen_range(0..150u64);
            eng.insert(k, &value_for(k, i)).unwrap();
        }
        let want = eng.range(0, 1 << 20).unwrap();
        let raw = eng.device().raw_pages().to_vec();
        let dev2 = FlashDevice::from_raw(g, FlashMode::RawNand, &raw).unwrap();
        let mut rec = IndexEngine::recover(cfg, dev2).unwrap();
        assert_eq!(rec.range(0, 1 << 20).unwrap(), want);
        assert_eq!(rec.record_count(), 500);
        // and it keeps working
        rec.insert(42, &value_for(42, 9999)).unwrap();
        assert_eq!(rec.record_count(), 501);
    }

    #[test]
    fn recovery_of_empty_storage_yields_empty_tree() {
        let g = FlashGeometry::new(512, 4, 64).unwrap();
        let dev = FlashDevice::new(g, FlashMode::RawNand);
        let mut rec = IndexEngine::recover(small_cfg(Variant::VmTree), dev).unwrap();
        assert_eq!(rec.record_count(), 0);
        rec.insert(1, &value_for(1, 0)).unwrap();
        assert_eq!(rec.get(1).unwrap().is_some(), true);
    }

    #[test]
    fn footprint_components_add_up() {
        let g = FlashGeometry::new(512, 8, 1024).unwrap();
        let dev = FlashDevice::new(g, FlashMode::RawNand);
        let mut cfg = EngineConfig::new(Variant::VmTree, L16);
        cfg.buffer_frames = 3;
        cfg.mapping_table_bytes = 1024;
        let eng = IndexEngine::create(cfg, dev).unwrap();
        let f = eng.footprint();
        assert_eq!(f.buffer_bytes, 3 * 512);
        assert_eq!(f.mapping_bytes, 1024);
        assert_eq!(f.bitmap_bytes, 1024 / 8);
        assert_eq!(f.write_buffer_bytes, 0);
        assert_eq!(f.total(), 3 * 512 + 1024 + 128);
        assert!(f.total() <= 4096);
    }

    #[test]
    fn ow_dup_heavy_load_compacts_instead_of_splitting_forever() {
        let mut eng =
            IndexEngine::create(small_cfg(Variant::VmTreeOw), device(FlashMode::Overwrite))
                .unwrap();
        for i in 0..300u64 {
            eng.insert(7, &value_for(7, i)).unwrap();
        }
        assert_eq!(eng.range(7, 7).unwrap().len(), 300);
        assert_eq!(eng.io().illegal_write_rejects, 0);
    }
}
