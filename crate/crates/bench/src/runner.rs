//! Benchmark execution: one run = an insert phase followed by a point-query
//! phase, with counters snapshotted per phase. All timing comes from the
//! device cost model, never the wall clock.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use vmtree_core::codec::{RecordLayout, ValueBuf};
use vmtree_core::{EngineConfig, FlashDevice, FlashGeometry, IndexEngine, IoCounters, Variant};

use crate::profile::DeviceProfile;
use crate::workload::{self, Dataset, Record};

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub variant: Variant,
    pub profile: DeviceProfile,
    pub dataset: Dataset,
    pub record_count: u64,
    pub query_count: u64,
    pub key_width: usize,
    pub record_width: usize,
    pub buffer_frames: usize,
    pub write_buffer_pages: usize,
    pub mapping_table_bytes: usize,
    pub seed: u64,
    pub verify: bool,
}

impl RunSpec {
    pub fn new(variant: Variant, profile: DeviceProfile, dataset: Dataset) -> Self {
        RunSpec {
            variant,
            profile,
            dataset,
            record_count: 10_000,
            query_count: 10_000,
            key_width: 4,
            record_width: 16,
            buffer_frames: 3,
            write_buffer_pages: 0,
            mapping_table_bytes: 1024,
            seed: 1,
            verify: false,
        }
    }

    pub fn layout(&self) -> Result<RecordLayout> {
        RecordLayout::new(self.key_width, self.record_width)
            .map_err(|e| anyhow::anyhow!("bad record layout: {e}"))
    }

    pub fn config(&self) -> Result<EngineConfig> {
        let mut cfg = EngineConfig::new(self.variant, self.layout()?);
        cfg.buffer_frames = self.buffer_frames;
        cfg.write_buffer_pages = self.write_buffer_pages;
        cfg.mapping_table_bytes = self.mapping_table_bytes;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub insert_io: IoCounters,
    pub query_io: IoCounters,
    pub insert_time_us: f64,
    pub query_time_us: f64,
    /// Records per simulated second of insert time.
    pub insert_throughput: f64,
    pub query_throughput: f64,
    pub buffer_hit_rate: f64,
    pub mapping_peak_load: f32,
    pub forced_flushes: u64,
    pub gc_relocations: u64,
    pub gc_erases: u64,
    pub storage_passes: u64,
    pub memory_total_bytes: usize,
    pub height: usize,
    pub verified: bool,
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::BTree => "btree",
        Variant::VmTree => "vmtree",
        Variant::VmTreeOw => "vmtree-ow",
    }
}

pub fn parse_variant(s: &str) -> Option<Variant> {
    match s {
        "btree" => Some(Variant::BTree),
        "vmtree" => Some(Variant::VmTree),
        "vmtree-ow" => Some(Variant::VmTreeOw),
        _ => None,
    }
}

pub fn run(spec: &RunSpec) -> Result<RunReport> {
    let records = workload::generate(spec.dataset, spec.record_count, spec.layout()?, spec.seed);
    run_records(spec, &records)
}

pub fn run_records(spec: &RunSpec, records: &[Record]) -> Result<RunReport> {
    if !spec.variant.compatible(spec.profile.mode) {
        bail!(
            "{} cannot run on a {:?} device",
            variant_name(spec.variant),
            spec.profile.mode
        );
    }
    let dev = FlashDevice::new(spec.profile.geometry, spec.profile.mode);
    let mut eng = IndexEngine::create(spec.config()?, dev)
        .map_err(|e| anyhow::anyhow!("engine setup: {e}"))?;

    let mut oracle: BTreeMap<u64, Vec<ValueBuf>> = BTreeMap::new();
    for &(k, v) in records {
        eng.insert(k, v.as_slice())
            .map_err(|e| anyhow::anyhow!("insert {k}: {e}"))?;
        if spec.verify {
            oracle.entry(k).or_default().push(v);
        }
    }
    eng.flush().map_err(|e| anyhow::anyhow!("flush: {e}"))?;
    let insert_io = eng.io();
    let insert_time_us = spec.profile.cost.simulated_time(&insert_io);

    let queries = workload::query_keys(records, spec.query_count, spec.seed);
    for &k in &queries {
        let got = eng.get(k).map_err(|e| anyhow::anyhow!("get {k}: {e}"))?;
        if spec.verify {
            let vs = oracle.get(&k);
            let ok = match (&got, vs) {
                (Some(g), Some(vs)) => vs.contains(g),
                (None, None) => true,
                _ => false,
            };
            if !ok {
                bail!("verification failed: key {k} returned {got:?}");
            }
        }
    }
    let query_io = eng.io().since(&insert_io);
    let query_time_us = spec.profile.cost.simulated_time(&query_io);

    if spec.verify {
        let all = eng
            .range(0, u64::MAX >> 1)
            .map_err(|e| anyhow::anyhow!("range: {e}"))?;
        let want: u64 = oracle.values().map(|v| v.len() as u64).sum();
        if all.len() as u64 != want {
            bail!(
                "verification failed: {} records on storage, {} inserted",
                all.len(),
                want
            );
        }
        let mut have: BTreeMap<u64, Vec<ValueBuf>> = BTreeMap::new();
        for (k, v) in all {
            have.entry(k).or_default().push(v);
        }
        for (k, vs) in &mut have {
            vs.sort();
            let mut want = oracle.remove(k).unwrap_or_default();
            want.sort();
            if *vs != want {
                bail!("verification failed: key {k} multiset mismatch");
            }
        }
        if !oracle.is_empty() {
            bail!("verification failed: {} keys missing", oracle.len());
        }
    }

    let s = eng.stats();
    let fetches = s.pool_hits + s.pool_misses;
    Ok(RunReport {
        insert_io,
        query_io,
        insert_time_us,
        query_time_us,
        insert_throughput: throughput(spec.record_count, insert_time_us),
        query_throughput: throughput(spec.query_count, query_time_us),
        buffer_hit_rate: if fetches == 0 {
            0.0
        } else {
            s.pool_hits as f64 / fetches as f64
        },
        mapping_peak_load: s.mapping_peak_load,
        forced_flushes: s.forced_flushes,
        gc_relocations: s.gc_relocations,
        gc_erases: s.gc_erases,
        storage_passes: s.passes,
        memory_total_bytes: eng.footprint().total(),
        height: eng.height(),
        verified: spec.verify,
    })
}

fn throughput(ops: u64, time_us: f64) -> f64 {
    if time_us <= 0.0 {
        0.0
    } else {
        ops as f64 / (time_us / 1e6)
    }
}

/// Size a geometry to roughly `factor` times the data footprint, rounded
/// up to whole blocks (used when a spec does not pin the store size).
pub fn sized_geometry(
    page_size: usize,
    pages_per_block: u32,
    record_count: u64,
    record_width: usize,
    factor: u64,
) -> Result<FlashGeometry> {
    let data_pages = (record_count * record_width as u64).div_ceil(page_size as u64);
    let blocks = (data_pages * factor)
        .div_ceil(pages_per_block as u64)
        .max(4) as u32;
    FlashGeometry::new(page_size, pages_per_block, blocks * pages_per_block)
        .map_err(|e| anyhow::anyhow!("geometry: {e}"))
}
