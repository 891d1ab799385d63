//! Simulated flash device.
//!
//! Three device modes cover the storage types the engines target:
//!
//! * `RawNand` — a page can only be written while in the erased state;
//!   erasing happens in whole blocks.
//! * `Overwrite` — a written page may be rewritten as long as every bit
//!   change is 1 -> 0 (NOR / DataFlash). A page-level erase-then-write
//!   primitive is also available, at its own (higher) cost.
//! * `Ftl` — logical in-place writes always succeed; the translation layer
//!   is opaque and only shows up through the cost model's sequential vs.
//!   random write costs.
//!
//! Every accepted operation bumps exactly one counter; rejected operations
//! change neither content nor counters. Combined with a [`CostModel`] the
//! counters give a deterministic simulated elapsed time.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::FlashError;

/// Physical or logical page number.
pub type PageId = u32;

/// Sentinel for "no page" (also the on-page encoding of prevPageId = -1).
pub const NO_PAGE: PageId = u32::MAX;

pub const ERASED_BYTE: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlashMode {
    RawNand,
    Overwrite,
    Ftl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlashGeometry {
    pub page_size: usize,
    pub pages_per_block: u32,
    pub num_pages: u32,
}

impl FlashGeometry {
    pub fn new(page_size: usize, pages_per_block: u32, num_pages: u32) -> Result<Self, FlashError> {
        if page_size < 64
            || page_size > 65536
            || pages_per_block == 0
            || num_pages % pages_per_block != 0
            || num_pages < 2 * pages_per_block
        {
            return Err(FlashError::OutOfRange);
        }
        Ok(FlashGeometry {
            page_size,
            pages_per_block,
            num_pages,
        })
    }

    pub fn num_blocks(&self) -> u32 {
        self.num_pages / self.pages_per_block
    }

    pub fn block_of(&self, page: PageId) -> u32 {
        page / self.pages_per_block
    }
}

/// Exact operation counts. Monotone; reset only by [`IoCounters::reset`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoCounters {
    pub page_reads: u64,
    pub page_writes: u64,
    /// Subset of `page_writes` whose address followed the previous write.
    pub seq_page_writes: u64,
    pub block_erases: u64,
    pub page_erase_writes: u64,
    /// Writes rejected as illegal (never applied).
    pub illegal_write_rejects: u64,
}

impl IoCounters {
    pub fn reset(&mut self) {
        *self = IoCounters::default();
    }

    /// Writes of any kind (plain plus erase-then-write).
    pub fn total_writes(&self) -> u64 {
        self.page_writes + self.page_erase_writes
    }

    /// Component-wise difference since `earlier`.
    pub fn since(&self, earlier: &IoCounters) -> IoCounters {
        IoCounters {
            page_reads: self.page_reads - earlier.page_reads,
            page_writes: self.page_writes - earlier.page_writes,
            seq_page_writes: self.seq_page_writes - earlier.seq_page_writes,
            block_erases: self.block_erases - earlier.block_erases,
            page_erase_writes: self.page_erase_writes - earlier.page_erase_writes,
            illegal_write_rejects: self.illegal_write_rejects - earlier.illegal_write_rejects,
        }
    }
}

/// Per-operation costs in abstract time units (the harness uses microseconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub read_cost: f64,
    pub seq_write_cost: f64,
    pub rand_write_cost: f64,
    pub erase_write_cost: f64,
    pub block_erase_cost: f64,
}

impl CostModel {
    pub fn uniform(read: f64, write: f64, erase_write: f64, block_erase: f64) -> Self {
        CostModel {
            read_cost: read,
            seq_write_cost: write,
            rand_write_cost: write,
            erase_write_cost: erase_write,
            block_erase_cost: block_erase,
        }
    }

    /// Deterministic total time for a set of counters.
    pub fn simulated_time(&self, c: &IoCounters) -> f64 {
        let rand_writes = c.page_writes - c.seq_page_writes;
        c.page_reads as f64 * self.read_cost
            + c.seq_page_writes as f64 * self.seq_write_cost
            + rand_writes as f64 * self.rand_write_cost
            + c.page_erase_writes as f64 * self.erase_write_cost
            + c.block_erases as f64 * self.block_erase_cost
    }
}

/// One mutation applied to the device, for trace-based crash replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Write { addr: PageId, data: Vec<u8> },
    EraseWrite { addr: PageId, data: Vec<u8> },
    EraseBlock { block: u32 },
}

#[derive(Debug)]
pub struct FlashDevice {
    geometry: FlashGeometry,
    mode: FlashMode,
    pages: Vec<u8>,
    written: Vec<bool>,
    counters: IoCounters,
    last_write: Option<PageId>,
    /// Fail (without applying) any mutation once this many mutations ran.
    fault_after: Option<u64>,
    mutations: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl FlashDevice {
    pub fn new(geometry: FlashGeometry, mode: FlashMode) -> Self {
        let n = geometry.num_pages as usize * geometry.page_size;
        FlashDevice {
            geometry,
            mode,
            pages: vec![ERASED_BYTE; n],
            written: vec![false; geometry.num_pages as usize],
            counters: IoCounters::default(),
            last_write: None,
            fault_after: None,
            mutations: 0,
            trace: None,
        }
    }

    pub fn geometry(&self) -> FlashGeometry {
        self.geometry
    }

    pub fn mode(&self) -> FlashMode {
        self.mode
    }

    pub fn counters(&self) -> IoCounters {
        self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters.reset();
    }

    fn range(&self, addr: PageId) -> Result<core::ops::Range<usize>, FlashError> {
        if addr >= self.geometry.num_pages {
            return Err(FlashError::OutOfRange);
        }
        let start = addr as usize * self.geometry.page_size;
        Ok(start..start + self.geometry.page_size)
    }

    fn check_fault(&mut self) -> Result<(), FlashError> {
        if let Some(limit) = self.fault_after {
            if self.mutations >= limit {
                return Err(FlashError::Crashed);
            }
        }
        self.mutations += 1;
        Ok(())
    }

    pub fn read_page(&mut self, addr: PageId) -> Result<&[u8], FlashError> {
        let r = self.range(addr)?;
        self.counters.page_reads += 1;
        Ok(&self.pages[r])
    }

    /// Page content without counting an I/O (recovery-free inspection is
    /// not allowed through this; it exists for persistence and tests).
    pub fn peek_page(&self, addr: PageId) -> Result<&[u8], FlashError> {
        let r = self.range(addr)?;
        Ok(&self.pages[r])
    }

    pub fn is_erased(&self, addr: PageId) -> Result<bool, FlashError> {
        let r = self.range(addr)?;
        Ok(self.pages[r].iter().all(|&b| b == ERASED_BYTE))
    }

    fn note_write_addr(&mut self, addr: PageId) {
        let seq = match self.last_write {
            Some(prev) => addr == prev.wrapping_add(1),
            None => true,
        };
        if seq {
            self.counters.seq_page_writes += 1;
        }
        self.last_write = Some(addr);
    }

    pub fn write_page(&mut self, addr: PageId, data: &[u8]) -> Result<(), FlashError> {
        if data.len() != self.geometry.page_size {
            return Err(FlashError::BadLength);
        }
        let r = self.range(addr)?;
        let legal = match self.mode {
            FlashMode::Ftl => true,
            FlashMode::RawNand => !self.written[addr as usize],
            FlashMode::Overwrite => {
                // every bit transition must be 1 -> 0
                self.pages[r.clone()]
                    .iter()
                    .zip(data)
                    .all(|(&old, &new)| new & !old == 0)
            }
        };
        if !legal {
            self.counters.illegal_write_rejects += 1;
            return Err(FlashError::IllegalWrite);
        }
        self.check_fault()?;
        self.pages[r].copy_from_slice(data);
        self.written[addr as usize] = true;
        self.counters.page_writes += 1;
        self.note_write_addr(addr);
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent::Write {
                addr,
                data: data.to_vec(),
            });
        }
        Ok(())
    }

    pub fn erase_block(&mut self, block: u32) -> Result<(), FlashError> {
        if block >= self.geometry.num_blocks() {
            return Err(FlashError::OutOfRange);
        }
        self.check_fault()?;
        let ppb = self.geometry.pages_per_block;
        let first = block * ppb;
        let start = first as usize * self.geometry.page_size;
        let end = start + ppb as usize * self.geometry.page_size;
        self.pages[start..end].fill(ERASED_BYTE);
        for p in first..first + ppb {
            self.written[p as usize] = false;
        }
        self.counters.block_erases += 1;
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent::EraseBlock { block });
        }
        Ok(())
    }

    /// Page rewrite with an implicit page erase (DataFlash-style). Only in
    /// `Overwrite` mode; `Ftl` covers the same need with plain writes.
    pub fn erase_then_write_page(&mut self, addr: PageId, data: &[u8]) -> Result<(), FlashError> {
        if self.mode != FlashMode::Overwrite {
            return Err(FlashError::Unsupported);
        }
        if data.len() != self.geometry.page_size {
            return Err(FlashError::BadLength);
        }
        let r = self.range(addr)?;
        self.check_fault()?;
        self.pages[r].copy_from_slice(data);
        self.written[addr as usize] = true;
        self.counters.page_erase_writes += 1;
        self.last_write = Some(addr);
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent::EraseWrite {
                addr,
                data: data.to_vec(),
            });
        }
        Ok(())
    }

    // --- test and persistence hooks -------------------------------------

    /// Stop applying mutations after `n` more; the failing op returns
    /// `Crashed` and the device then looks like a powered-off chip.
    pub fn set_fault_after(&mut self, n: Option<u64>) {
        self.mutations = 0;
        self.fault_after = n;
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    pub fn trace_len(&self) -> usize {
        self.trace.as_ref().map_or(0, |t| t.len())
    }

    /// Raw page array, for the backing-file format.
    pub fn raw_pages(&self) -> &[u8] {
        &self.pages
    }

    /// Rebuild a device from a raw page array (e.g. a backing file or a
    /// crash snapshot). Written flags are derived from content: a page is
    /// treated as written unless it is all 0xFF.
    pub fn from_raw(
        geometry: FlashGeometry,
        mode: FlashMode,
        raw: &[u8],
    ) -> Result<Self, FlashError> {
        if raw.len() != geometry.num_pages as usize * geometry.page_size {
            return Err(FlashError::BadLength);
        }
        let mut dev = FlashDevice::new(geometry, mode);
        dev.pages.copy_from_slice(raw);
        for p in 0..geometry.num_pages {
            let r = dev.range(p)?;
            dev.written[p as usize] = dev.pages[r].iter().any(|&b| b != ERASED_BYTE);
        }
        Ok(dev)
    }

    /// Apply a trace prefix onto a fresh device (crash replay).
    pub fn replay(
        geometry: FlashGeometry,
        mode: FlashMode,
        events: &[TraceEvent],
    ) -> Result<Self, FlashError> {
        let mut dev = FlashDevice::new(geometry, mode);
        for ev in events {
            match ev {
                TraceEvent::Write { addr, data } => dev.write_page(*addr, data)?,
                TraceEvent::EraseWrite { addr, data } => dev.erase_then_write_page(*addr, data)?,
                TraceEvent::EraseBlock { block } => dev.erase_block(*block)?,
            }
        }
        dev.reset_counters();
        Ok(dev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev(mode: FlashMode) -> FlashDevice {
        FlashDevice::new(FlashGeometry::new(256, 4, 16).unwrap(), mode)
    }

    #[test]
    fn erased_page_reads_all_ones() {
        let mut d = dev(FlashMode::RawNand);
        assert!(d.read_page(3).unwrap().iter().all(|&b| b == 0xFF));
    }

    #[test]
    fn write_read_round_trips_and_counts() {
        let mut d = dev(FlashMode::RawNand);
        let data = vec![0xAB; 256];
        d.write_page(5, &data).unwrap();
        assert_eq!(d.read_page(5).unwrap(), &data[..]);
        d.read_page(5).unwrap();
        d.read_page(5).unwrap();
        assert_eq!(d.counters().page_reads, 3);
        assert_eq!(d.counters().page_writes, 1);
    }

    #[test]
    fn raw_nand_rejects_second_write_without_erase() {
        let mut d = dev(FlashMode::RawNand);
        let data = vec![0u8; 256];
        d.write_page(0, &data).unwrap();
        assert_eq!(d.write_page(0, &data), Err(FlashError::IllegalWrite));
        // rejected writes change nothing and do not count
        assert_eq!(d.counters().page_writes, 1);
        assert_eq!(d.counters().illegal_write_rejects, 1);
    }

    #[test]
    fn overwrite_allows_one_to_zero_only() {
        let mut d = dev(FlashMode::Overwrite);
        let mut data = vec![0xFF; 256];
        data[0] = 0b1111_0111;
        d.write_page(0, &data).unwrap();
        data[0] = 0b1111_0011;
        d.write_page(0, &data).unwrap();
        data[0] = 0b1111_1111;
        assert_eq!(d.write_page(0, &data), Err(FlashError::IllegalWrite));
        assert_eq!(d.peek_page(0).unwrap()[0], 0b1111_0011);
    }

    #[test]
    fn erase_block_resets_pages_and_counts() {
        let mut d = dev(FlashMode::RawNand);
        let data = vec![0x11; 256];
        d.write_page(4, &data).unwrap();
        d.erase_block(1).unwrap();
        assert!(d.is_erased(4).unwrap());
        d.write_page(4, &data).unwrap();
        d.erase_block(1).unwrap();
        d.erase_block(1).unwrap();
        assert_eq!(d.counters().block_erases, 3);
    }

    #[test]
    fn erase_then_write_replaces_arbitrary_content() {
        let mut d = dev(FlashMode::Overwrite);
        let a = vec![0x0F; 256];
        let b = vec![0xF0; 256];
        d.erase_then_write_page(2, &a).unwrap();
        d.erase_then_write_page(2, &b).unwrap();
        assert_eq!(d.peek_page(2).unwrap(), &b[..]);
        assert_eq!(d.counters().page_erase_writes, 2);
        assert_eq!(d.counters().page_writes, 0);
        let mut n = dev(FlashMode::RawNand);
        assert_eq!(n.erase_then_write_page(2, &a), Err(FlashError::Unsupported));
    }

    #[test]
    fn simulated_time_is_linear_in_counters() {
        let m = CostModel::uniform(2.0, 3.0, 10.0, 40.0);
        assert_eq!(m.simulated_time(&IoCounters::default()), 0.0);
        let mut c = IoCounters::default();
        c.page_reads = 10;
        assert_eq!(m.simulated_time(&c), 20.0);
        // DataFlash-like: 512-byte page, erase-then-write at 35 KB/s
        let us_per_etw = 512.0 / (35.0 * 1024.0) * 1e6;
        let df = CostModel::uniform(1.0, 1.0, us_per_etw, 0.0);
        let mut c = IoCounters::default();
        c.page_erase_writes = 100;
        let expect = 100.0 * 512.0 / (35.0 * 1024.0) * 1e6;
        assert!((df.simulated_time(&c) - expect).abs() < 1e-6);
    }

    #[test]
    fn fault_injection_stops_before_applying() {
        let mut d = dev(FlashMode::RawNand);
        d.set_fault_after(Some(1));
        let data = vec![0x22; 256];
        d.write_page(0, &data).unwrap();
        assert_eq!(d.write_page(1, &data), Err(FlashError::Crashed));
        assert!(d.is_erased(1).unwrap());
        assert_eq!(d.counters().page_writes, 1);
    }

    #[test]
    fn replay_reproduces_state() {
        let mut d = dev(FlashMode::RawNand);
        d.enable_trace();
        let data = vec![0x33; 256];
        d.write_page(0, &data).unwrap();
        d.write_page(1, &data).unwrap();
        d.erase_block(0).unwrap();
        d.write_page(2, &data).unwrap();
        let trace = d.take_trace();
        let r = FlashDevice::replay(d.geometry(), FlashMode::RawNand, &trace).unwrap();
        assert_eq!(r.raw_pages(), d.raw_pages());
    }
}
