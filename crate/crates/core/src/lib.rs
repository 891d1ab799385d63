//! Flash-aware B+-tree index engines for memory-constrained devices.
//!
//! The crate provides three index variants over one key-value interface:
//!
//! * `BTree` — classic update-in-place B+-tree. Needs storage that accepts
//!   logical overwrites (an FTL, or page-level erase-then-write).
//! * `VmTree` — sequential writes plus an in-memory table of virtual page
//!   mappings so a relocated node can be found without rewriting its parent.
//!   Runs on raw NAND and manages its own free space and garbage collection.
//! * `VmTreeOw` — keeps nodes in an unsorted, append-only page layout whose
//!   updates only ever flip bits from 1 to 0, so pages can be physically
//!   overwritten on NOR/DataFlash-style memory.
//!
//! Storage is a simulated flash device ([`flash::FlashDevice`]) that enforces
//! erase-before-write rules per memory mode and counts every operation, so
//! I/O and simulated-time comparisons are exact and deterministic.
//!
//! The crate is `no_std` (with `alloc`); file I/O, workload generation and
//! the CLI live in the companion `vmtree-bench` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod codec;
pub mod engine;
pub mod error;
pub mod flash;
pub mod mapping;
pub mod pool;
pub mod store;
pub mod wbuf;

pub use engine::{EngineConfig, IndexEngine, MemoryFootprint, Variant};
pub use error::{EngineError, FlashError};
pub use flash::{CostModel, FlashDevice, FlashGeometry, FlashMode, IoCounters, PageId, NO_PAGE};
