//! Bit-exact node encoding.
//!
//! Two page layouts share one 12-byte header:
//!
//! ```text
//! offset  size  field
//! 0       4     pageId       (u32 LE, physical page the node was written at)
//! 4       4     prevPageId   (u32 LE, 0xFFFFFFFF = none / first version)
//! 8       1     kind         (0xA5 = leaf, 0xC3 = interior)
//! 9       1     root         (0xFF = root, 0x0F = not root)
//! 10      2     entryCount   (u16 LE; 0xFFFF in the overwrite layout)
//! ```
//!
//! Sorted layout (BTree / VmTree):
//!   leaf:      header, then entryCount records of `record_width` bytes
//!              (key LE-packed in the first `key_width` bytes).
//!   interior:  header, then entryCount keys of `key_width` bytes, then
//!              entryCount+1 child page ids of 4 bytes.
//!
//! Overwrite layout (VmTreeOw):
//!   leaf:      header, record slots of `record_width` bytes from offset 12.
//!   interior:  header, leftmost child id (u32 LE) at offset 12, then slots
//!              of `key_width + 4` bytes (separator key, right child id).
//!   Both carry two bit vectors of ceil(capacity/8) bytes at the page tail:
//!   valid bits in the last group, count bits directly before them. Bit i
//!   lives in byte i/8, mask 1 << (i % 8); the erased value 1 means
//!   "slot free" (count) / "record live" (valid). A slot holds a record iff
//!   its count bit is 0; the record is live iff additionally valid is 1.
//!   Every append or invalidate changes bits 1 -> 0 only, so the deltas are
//!   legal page overwrites on NOR/DataFlash-style memory.
//!
//! The root byte starts at the erased value for fresh pages and moves to
//! 0x0F when a node stops being the root, which is also a 1 -> 0 change.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::EngineError;
use crate::flash::{PageId, ERASED_BYTE, NO_PAGE};

pub const HEADER_LEN: usize = 16;
pub const CHILD_PTR_LEN: usize = 4;
pub const KIND_LEAF: u8 = 0xA5;
pub const KIND_INTERIOR: u8 = 0xC3;
pub const ROOT_YES: u8 = 0xFF;
pub const ROOT_NO: u8 = 0x0F;
/// Offset of the leftmost-child field in overwrite-layout interior pages.
pub const OW_INTERIOR_SLOTS: usize = HEADER_LEN + CHILD_PTR_LEN;

/// Fixed record geometry for one tree instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLayout {
    pub key_width: usize,
    pub record_width: usize,
}

impl RecordLayout {
    pub fn new(key_width: usize, record_width: usize) -> Result<Self, EngineError> {
        if !(key_width == 4 || key_width == 8) || record_width <= key_width || record_width > 16 {
            return Err(EngineError::BadConfig);
        }
        Ok(RecordLayout {
            key_width,
            record_width,
        })
    }

    pub fn value_width(&self) -> usize {
        self.record_width - self.key_width
    }

    pub fn max_key(&self) -> u64 {
        if self.key_width >= 8 {
            u64::MAX
        } else {
            (1u64 << (8 * self.key_width)) - 1
        }
    }
}

/// Fixed-width value bytes (at most 12: 16-byte record, 4-byte key).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueBuf {
    len: u8,
    bytes: [u8; 12],
}

impl ValueBuf {
    pub fn from_slice(s: &[u8]) -> Self {
        let mut bytes = [0u8; 12];
        bytes[..s.len()].copy_from_slice(s);
        ValueBuf {
            len: s.len() as u8,
            bytes,
        }
    }

    pub fn from_u64(v: u64, width: usize) -> Self {
        let mut bytes = [0u8; 12];
        let n = width.min(8);
        bytes[..n].copy_from_slice(&v.to_le_bytes()[..n]);
        ValueBuf {
            len: width as u8,
            bytes,
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageHeader {
    pub page_id: PageId,
    pub prev_page_id: PageId,
    pub kind: NodeKind,
    pub is_root: bool,
    pub entry_count: u16,
    /// Monotone write stamp: every full-page write gets the next value, so
    /// recovery can order any two page images without trusting their
    /// physical position (garbage collection rewrites pages in place).
    pub serial: u32,
}

impl PageHeader {
    pub fn encode_into(&self, page: &mut [u8]) {
        page[0..4].copy_from_slice(&self.page_id.to_le_bytes());
        page[4..8].copy_from_slice(&self.prev_page_id.to_le_bytes());
        page[8] = match self.kind {
            NodeKind::Leaf => KIND_LEAF,
            NodeKind::Interior => KIND_INTERIOR,
        };
        page[9] = if self.is_root { ROOT_YES } else { ROOT_NO };
        page[10..12].copy_from_slice(&self.entry_count.to_le_bytes());
        page[12..16].copy_from_slice(&self.serial.to_le_bytes());
    }

    pub fn decode(page: &[u8]) -> Result<Self, EngineError> {
        if page.len() < HEADER_LEN {
            return Err(EngineError::Corrupt);
        }
        let kind = match page[8] {
            KIND_LEAF => NodeKind::Leaf,
            KIND_INTERIOR => NodeKind::Interior,
            _ => return Err(EngineError::Corrupt),
        };
        let is_root = match page[9] {
            ROOT_YES => true,
            ROOT_NO => false,
            _ => return Err(EngineError::Corrupt),
        };
        Ok(PageHeader {
            page_id: u32::from_le_bytes(page[0..4].try_into().unwrap()),
            prev_page_id: u32::from_le_bytes(page[4..8].try_into().unwrap()),
            kind,
            is_root,
            entry_count: u16::from_le_bytes(page[10..12].try_into().unwrap()),
            serial: u32::from_le_bytes(page[12..16].try_into().unwrap()),
        })
    }

    /// The id the node's parent pointer stores: its original location, or
    /// the page itself for a first version.
    pub fn stable_id(&self) -> PageId {
        if self.prev_page_id == NO_PAGE {
            self.page_id
        } else {
            self.prev_page_id
        }
    }
}

pub fn is_erased_page(page: &[u8]) -> bool {
    page.iter().all(|&b| b == ERASED_BYTE)
}

/// Decoded sorted-layout node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedNode {
    pub header: PageHeader,
    pub keys: Vec<u64>,
    /// Leaf payloads, aligned to `keys`. Empty for interior nodes.
    pub values: Vec<ValueBuf>,
    /// Child page ids, len = keys + 1. Empty for leaves.
    pub children: Vec<PageId>,
}

impl SortedNode {
    pub fn new_leaf(page_id: PageId, prev: PageId, is_root: bool) -> Self {
        SortedNode {
            header: PageHeader {
                page_id,
                prev_page_id: prev,
                kind: NodeKind::Leaf,
                is_root,
                entry_count: 0,
                serial: 0,
            },
            keys: Vec::new(),
            values: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.header.kind == NodeKind::Leaf
    }
}

/// Which of the four on-page layouts capacity is asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    SortedLeaf,
    SortedInterior,
    OwLeaf,
    OwInterior,
}

fn bitvec_bytes(n: usize) -> usize {
    (n + 7) / 8
}

/// Largest entry count that fits a page, per layout.
pub fn max_entries(
    page_size: usize,
    layout: RecordLayout,
    kind: LayoutKind,
) -> Result<usize, EngineError> {
    let n = match kind {
        LayoutKind::SortedLeaf => (page_size - HEADER_LEN) / layout.record_width,
        LayoutKind::SortedInterior => {
            (page_size - HEADER_LEN - CHILD_PTR_LEN) / (layout.key_width + CHILD_PTR_LEN)
        }
        LayoutKind::OwLeaf => {
            let mut n = (page_size - HEADER_LEN) / layout.record_width;
            while n > 0 && HEADER_LEN + n * layout.record_width + 2 * bitvec_bytes(n) > page_size {
                n -= 1;
            }
            n
        }
        LayoutKind::OwInterior => {
            let slot = layout.key_width + CHILD_PTR_LEN;
            let mut n = (page_size - OW_INTERIOR_SLOTS) / slot;
            while n > 0 && OW_INTERIOR_SLOTS + n * slot + 2 * bitvec_bytes(n) > page_size {
                n -= 1;
            }
            n
        }
    };
    if n == 0 {
        Err(EngineError::CapacityExceeded)
    } else {
        Ok(n)
    }
}

fn put_key(buf: &mut [u8], key: u64, width: usize) {
    buf[..width].copy_from_slice(&key.to_le_bytes()[..width]);
}

fn get_key(buf: &[u8], width: usize) -> u64 {
    let mut b = [0u8; 8];
    b[..width].copy_from_slice(&buf[..width]);
    u64::from_le_bytes(b)
}

pub fn encode_sorted(
    node: &SortedNode,
    layout: RecordLayout,
    page_size: usize,
) -> Result<Vec<u8>, EngineError> {
    let n = node.keys.len();
    let cap = match node.header.kind {
        NodeKind::Leaf => max_entries(page_size, layout, LayoutKind::SortedLeaf)?,
        NodeKind::Interior => max_entries(page_size, layout, LayoutKind::SortedInterior)?,
    };
    if n > cap || n > u16::MAX as usize {
        return Err(EngineError::CapacityExceeded);
    }
    let mut page = vec![ERASED_BYTE; page_size];
    let mut h = node.header;
    h.entry_count = n as u16;
    h.encode_into(&mut page);
    match node.header.kind {
        NodeKind::Leaf => {
            debug_assert_eq!(node.values.len(), n);
            for (i, (k, v)) in node.keys.iter().zip(&node.values).enumerate() {
                let off = HEADER_LEN + i * layout.record_width;
                put_key(&mut page[off..], *k, layout.key_width);
                page[off + layout.key_width..off + layout.record_width]
                    .copy_from_slice(v.as_slice());
            }
        }
        NodeKind::Interior => {
            debug_assert_eq!(node.children.len(), n + 1);
            for (i, k) in node.keys.iter().enumerate() {
                put_key(&mut page[HEADER_LEN + i * layout.key_width..], *k, layout.key_width);
            }
            let coff = HEADER_LEN + n * layout.key_width;
            for (i, c) in node.children.iter().enumerate() {
                page[coff + i * CHILD_PTR_LEN..coff + (i + 1) * CHILD_PTR_LEN]
                    .copy_from_slice(&c.to_le_bytes());
            }
        }
    }
    Ok(page)
}

pub fn decode_sorted(page: &[u8], layout: RecordLayout) -> Result<SortedNode, EngineError> {
    let header = PageHeader::decode(page)?;
    let n = header.entry_count as usize;
    let mut node = SortedNode {
        header,
        keys: Vec::with_capacity(n),
        values: Vec::new(),
        children: Vec::new(),
    };
    match header.kind {
        NodeKind::Leaf => {
            if HEADER_LEN + n * layout.record_width > page.len() {
                return Err(EngineError::Corrupt);
            }
            node.values.reserve(n);
            for i in 0..n {
                let off = HEADER_LEN + i * layout.record_width;
                node.keys.push(get_key(&page[off..], layout.key_width));
                node.values.push(ValueBuf::from_slice(
                    &page[off + layout.key_width..off + layout.record_width],
                ));
            }
        }
        NodeKind::Interior => {
            let coff = HEADER_LEN + n * layout.key_width;
            if coff + (n + 1) * CHILD_PTR_LEN > page.len() {
                return Err(EngineError::Corrupt);
            }
            for i in 0..n {
                node.keys
                    .push(get_key(&page[HEADER_LEN + i * layout.key_width..], layout.key_width));
            }
            node.children.reserve(n + 1);
            for i in 0..=n {
                let off = coff + i * CHILD_PTR_LEN;
                node.children
                    .push(u32::from_le_bytes(page[off..off + 4].try_into().unwrap()));
            }
        }
    }
    Ok(node)
}

// --- overwrite layout ---------------------------------------------------

fn ow_capacity(page_size: usize, layout: RecordLayout, interior: bool) -> usize {
    let kind = if interior {
        LayoutKind::OwInterior
    } else {
        LayoutKind::OwLeaf
    };
    max_entries(page_size, layout, kind).unwrap_or(0)
}

fn ow_bit(page: &[u8], page_size: usize, cap: usize, vec_index: usize, slot: usize) -> bool {
    let vb = bitvec_bytes(cap);
    // vec_index 0 = count bits, 1 = valid bits
    let base = page_size - (2 - vec_index) * vb;
    page[base + slot / 8] & (1 << (slot % 8)) != 0
}

fn ow_clear_bit(page: &mut [u8], page_size: usize, cap: usize, vec_index: usize, slot: usize) {
    let vb = bitvec_bytes(cap);
    let base = page_size - (2 - vec_index) * vb;
    page[base + slot / 8] &= !(1 << (slot % 8));
}

/// Fresh overwrite-layout page image. Bit vectors stay at the erased value
/// (all ones); a fresh root keeps the erased root byte.
pub fn ow_init(
    page_size: usize,
    page_id: PageId,
    kind: NodeKind,
    is_root: bool,
    leftmost_child: Option<PageId>,
) -> Vec<u8> {
    let mut page = vec![ERASED_BYTE; page_size];
    page[0..4].copy_from_slice(&page_id.to_le_bytes());
    // prevPageId stays 0xFFFFFFFF (none): overwrite pages never relocate
    page[8] = match kind {
        NodeKind::Leaf => KIND_LEAF,
        NodeKind::Interior => KIND_INTERIOR,
    };
    if !is_root {
        page[9] = ROOT_NO;
    }
    if let Some(c) = leftmost_child {
        page[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&c.to_le_bytes());
    }
    page
}

/// Clear the root flag in place (0xFF -> 0x0F, overwrite-legal).
pub fn ow_clear_root(page: &mut [u8]) {
    page[9] = ROOT_NO;
}

pub fn ow_is_root(page: &[u8]) -> bool {
    page[9] == ROOT_YES
}

pub fn ow_kind(page: &[u8]) -> Result<NodeKind, EngineError> {
    match page[8] {
        KIND_LEAF => Ok(NodeKind::Leaf),
        KIND_INTERIOR => Ok(NodeKind::Interior),
        _ => Err(EngineError::Corrupt),
    }
}

pub fn ow_leftmost_child(page: &[u8]) -> PageId {
    u32::from_le_bytes(page[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap())
}

/// Append a record into the first free slot: record bytes land in erased
/// space and the slot's count bit goes 1 -> 0; the valid bit stays 1.
pub fn ow_append_record(
    page: &mut [u8],
    layout: RecordLayout,
    key: u64,
    value: &ValueBuf,
) -> Result<usize, EngineError> {
    let page_size = page.len();
    let cap = ow_capacity(page_size, layout, false);
    let slot = (0..cap)
        .find(|&i| ow_bit(page, page_size, cap, 0, i))
        .ok_or(EngineError::CapacityExceeded)?;
    let off = HEADER_LEN + slot * layout.record_width;
    put_key(&mut page[off..], key, layout.key_width);
    page[off + layout.key_width..off + layout.record_width].copy_from_slice(value.as_slice());
    ow_clear_bit(page, page_size, cap, 0, slot);
    Ok(slot)
}

/// Append a (separator, right child) slot to an overwrite interior page.
pub fn ow_append_child(
    page: &mut [u8],
    layout: RecordLayout,
    key: u64,
    child: PageId,
) -> Result<usize, EngineError> {
    let page_size = page.len();
    let cap = ow_capacity(page_size, layout, true);
    let slot = (0..cap)
        .find(|&i| ow_bit(page, page_size, cap, 0, i))
        .ok_or(EngineError::CapacityExceeded)?;
    let sw = layout.key_width + CHILD_PTR_LEN;
    let off = OW_INTERIOR_SLOTS + slot * sw;
    put_key(&mut page[off..], key, layout.key_width);
    page[off + layout.key_width..off + sw].copy_from_slice(&child.to_le_bytes());
    ow_clear_bit(page, page_size, cap, 0, slot);
    Ok(slot)
}

/// Mark an occupied slot dead (valid bit 1 -> 0).
pub fn ow_invalidate(
    page: &mut [u8],
    layout: RecordLayout,
    slot: usize,
    interior: bool,
) -> Result<(), EngineError> {
    let page_size = page.len();
    let cap = ow_capacity(page_size, layout, interior);
    if slot >= cap
        || ow_bit(page, page_size, cap, 0, slot)
        || !ow_bit(page, page_size, cap, 1, slot)
    {
        return Err(EngineError::Corrupt);
    }
    ow_clear_bit(page, page_size, cap, 1, slot);
    Ok(())
}

/// Live records of an overwrite leaf, in slot (arrival) order.
pub fn ow_live_records(page: &[u8], layout: RecordLayout) -> Vec<(usize, u64, ValueBuf)> {
    let page_size = page.len();
    let cap = ow_capacity(page_size, layout, false);
    let mut out = Vec::new();
    for slot in 0..cap {
        if !ow_bit(page, page_size, cap, 0, slot) && ow_bit(page, page_size, cap, 1, slot) {
            let off = HEADER_LEN + slot * layout.record_width;
            out.push((
                slot,
                get_key(&page[off..], layout.key_width),
                ValueBuf::from_slice(&page[off + layout.key_width..off + layout.record_width]),
            ));
        }
    }
    out
}

/// Live (separator, right child) slots of an overwrite interior page.
pub fn ow_live_children(page: &[u8], layout: RecordLayout) -> Vec<(usize, u64, PageId)> {
    let page_size = page.len();
    let cap = ow_capacity(page_size, layout, true);
    let sw = layout.key_width + CHILD_PTR_LEN;
    let mut out = Vec::new();
    for slot in 0..cap {
        if !ow_bit(page, page_size, cap, 0, slot) && ow_bit(page, page_size, cap, 1, slot) {
            let off = OW_INTERIOR_SLOTS + slot * sw;
            out.push((
                slot,
                get_key(&page[off..], layout.key_width),
                u32::from_le_bytes(page[off + layout.key_width..off + sw].try_into().unwrap()),
            ));
        }
    }
    out
}

/// Number of occupied slots (dead or live).
pub fn ow_used_slots(page: &[u8], layout: RecordLayout, interior: bool) -> usize {
    let page_size = page.len();
    let cap = ow_capacity(page_size, layout, interior);
    (0..cap).filter(|&i| !ow_bit(page, page_size, cap, 0, i)).count()
}

// --- search -------------------------------------------------------------

/// Leftmost position of `key` in a sorted key array, or None.
pub fn sorted_search(keys: &[u64], key: u64) -> Option<usize> {
    let i = keys.partition_point(|&k| k < key);
    if i < keys.len() && keys[i] == key {
        Some(i)
    } else {
        None
    }
}

/// Child index to descend for `key` given interior separators: number of
/// separators `<= key` (equal keys route right, where the newest duplicates
/// live).
pub fn child_index(separators: &[u64], key: u64) -> usize {
    separators.partition_point(|&s| s <= key)
}

#[cfg(test)]
mod tests {
    use super::*;

    const L16: RecordLayout = RecordLayout {
        key_width: 4,
        record_width: 16,
    };

    fn leaf(keys: &[u64]) -> SortedNode {
        let mut n = SortedNode::new_leaf(7, NO_PAGE, true);
        for &k in keys {
            n.keys.push(k);
            n.values.push(ValueBuf::from_u64(k * 10, L16.value_width()));
        }
        n
    }

    #[test]
    fn empty_root_leaf_round_trips() {
        let n = leaf(&[]);
        let page = encode_sorted(&n, L16, 512).unwrap();
        let d = decode_sorted(&page, L16).unwrap();
        assert_eq!(d.header.entry_count, 0);
        assert!(d.header.is_root);
        assert_eq!(d.header.kind, NodeKind::Leaf);
        assert_eq!(d, n);
    }

    #[test]
    fn leaf_insert_keeps_order() {
        // leaf (40,60), inserting 50 yields (40,50,60)
        let mut n = leaf(&[40, 60]);
        let pos = n.keys.partition_point(|&k| k <= 50);
        n.keys.insert(pos, 50);
        n.values.insert(pos, ValueBuf::from_u64(500, L16.value_width()));
        let d = decode_sorted(&encode_sorted(&n, L16, 512).unwrap(), L16).unwrap();
        assert_eq!(d.keys, vec![40, 50, 60]);
    }

    #[test]
    fn overflowing_node_is_rejected() {
        let cap = max_entries(512, L16, LayoutKind::SortedLeaf).unwrap();
        let keys: Vec<u64> = (0..=cap as u64).collect();
        let n = leaf(&keys);
        assert_eq!(encode_sorted(&n, L16, 512), Err(EngineError::CapacityExceeded));
    }

    #[test]
    fn capacity_arithmetic() {
        assert_eq!(
            max_entries(512, L16, LayoutKind::SortedLeaf).unwrap(),
            (512 - HEADER_LEN) / 16
        );
        // overwrite layout pays 2 bits per slot
        assert!(
            max_entries(512, L16, LayoutKind::OwLeaf).unwrap()
                <= max_entries(512, L16, LayoutKind::SortedLeaf).unwrap()
        );
        let l8 = RecordLayout::new(4, 8).unwrap();
        assert!(
            max_entries(2048, l8, LayoutKind::SortedLeaf).unwrap()
                >= 2 * max_entries(512, l8, LayoutKind::SortedLeaf).unwrap()
        );
    }

    #[test]
    fn ow_append_uses_first_free_slot() {
        let mut page = ow_init(512, 3, NodeKind::Leaf, false, None);
        let cap = ow_capacity(512, L16, false);
        let v = ValueBuf::from_u64(9, L16.value_width());
        assert_eq!(ow_append_record(&mut page, L16, 40, &v).unwrap(), 0);
        assert!(!ow_bit(&page, 512, cap, 0, 0));
        assert!(ow_bit(&page, 512, cap, 1, 0));
        for i in 1..cap {
            assert!(ow_bit(&page, 512, cap, 0, i));
        }
    }

    #[test]
    fn ow_appends_are_overwrite_legal_deltas() {
        let mut page = ow_init(512, 3, NodeKind::Leaf, true, None);
        let v = ValueBuf::from_u64(1, L16.value_width());
        for k in [40u64, 60, 50] {
            let before = page.clone();
            ow_append_record(&mut page, L16, k, &v).unwrap();
            assert!(before
                .iter()
                .zip(&page)
                .all(|(&old, &new)| new & !old == 0));
        }
        let before = page.clone();
        ow_invalidate(&mut page, L16, 1, false).unwrap();
        assert!(before.iter().zip(&page).all(|(&old, &new)| new & !old == 0));
        let live: Vec<u64> = ow_live_records(&page, L16).iter().map(|r| r.1).collect();
        assert_eq!(live, vec![40, 50]);
    }

    #[test]
    fn ow_full_page_rejects_append() {
        let mut page = ow_init(512, 3, NodeKind::Leaf, false, None);
        let cap = ow_capacity(512, L16, false);
        let v = ValueBuf::from_u64(0, L16.value_width());
        for k in 0..cap as u64 {
            ow_append_record(&mut page, L16, k, &v).unwrap();
        }
        assert_eq!(
            ow_append_record(&mut page, L16, 99, &v),
            Err(EngineError::CapacityExceeded)
        );
    }

    #[test]
    fn ow_double_invalidate_errors() {
        let mut page = ow_init(512, 3, NodeKind::Leaf, false, None);
        let v = ValueBuf::from_u64(0, L16.value_width());
        ow_append_record(&mut page, L16, 1, &v).unwrap();
        ow_invalidate(&mut page, L16, 0, false).unwrap();
        assert!(ow_invalidate(&mut page, L16, 0, false).is_err());
        // empty slot
        assert!(ow_invalidate(&mut page, L16, 5, false).is_err());
        assert!(ow_live_records(&page, L16).is_empty());
    }

    #[test]
    fn interior_child_routing() {
        // interior (40,70): key 50 routes to the middle child
        assert_eq!(child_index(&[40, 70], 50), 1);
        assert_eq!(child_index(&[40, 70], 10), 0);
        assert_eq!(child_index(&[40, 70], 90), 2);
        // equal keys go right
        assert_eq!(child_index(&[40, 70], 40), 1);
        assert_eq!(sorted_search(&[], 5), None);
        assert_eq!(sorted_search(&[1, 3, 3, 7], 3), Some(1));
    }

    #[test]
    fn header_decode_rejects_erased_and_garbage() {
        let page = vec![ERASED_BYTE; 512];
        assert!(PageHeader::decode(&page).is_err());
        assert!(is_erased_page(&page));
        let mut page = page;
        page[8] = 0x42;
        assert!(PageHeader::decode(&page).is_err());
    }
}
