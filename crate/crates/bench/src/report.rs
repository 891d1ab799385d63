//! CSV assembly with a stable column order, so reruns with the same seeds
//! produce byte-identical output.

use crate::runner::{variant_name, RunReport, RunSpec};

pub const COLUMNS: &[&str] = &[
    "variant",
    "device",
    "dataset",
    "records",
    "queries",
    "key_width",
    "record_width",
    "buffer_frames",
    "write_buffer_pages",
    "mapping_table_bytes",
    "seed",
    "status",
    "insert_reads",
    "insert_writes",
    "insert_erase_writes",
    "insert_block_erases",
    "insert_time_us",
    "insert_throughput",
    "query_reads",
    "query_writes",
    "query_time_us",
    "query_throughput",
    "buffer_hit_rate",
    "mapping_peak_load",
    "forced_flushes",
    "gc_relocations",
    "gc_erases",
    "storage_passes",
    "memory_bytes",
    "height",
];

pub fn header() -> String {
    COLUMNS.join(",")
}

pub fn row(spec: &RunSpec, outcome: &Result<RunReport, String>) -> String {
    let mut cells: Vec<String> = vec![
        variant_name(spec.variant).into(),
        spec.profile.name.clone(),
        spec.dataset.name().into(),
        spec.record_count.to_string(),
        spec.query_count.to_string(),
        spec.key_width.to_string(),
        spec.record_width.to_string(),
        spec.buffer_frames.to_string(),
        spec.write_buffer_pages.to_string(),
        spec.mapping_table_bytes.to_string(),
        spec.seed.to_string(),
    ];
    match outcome {
        Ok(r) => {
            cells.push("ok".into());
            cells.push(r.insert_io.page_reads.to_string());
            cells.push(r.insert_io.page_writes.to_string());
            cells.push(r.insert_io.page_erase_writes.to_string());
            cells.push(r.insert_io.block_erases.to_string());
            cells.push(format!("{:.1}", r.insert_time_us));
            cells.push(format!("{:.1}", r.insert_throughput));
            cells.push(r.query_io.page_reads.to_string());
            cells.push(r.query_io.total_writes().to_string());
            cells.push(format!("{:.1}", r.query_time_us));
            cells.push(format!("{:.1}", r.query_throughput));
            cells.push(format!("{:.4}", r.buffer_hit_rate));
            cells.push(format!("{:.4}", r.mapping_peak_load));
            cells.push(r.forced_flushes.to_string());
            cells.push(r.gc_relocations.to_string());
            cells.push(r.gc_erases.to_string());
            cells.push(r.storage_passes.to_string());
            cells.push(r.memory_total_bytes.to_string());
            cells.push(r.height.to_string());
        }
        Err(e) => {
            // partial failure: record the error, keep the grid going
            cells.push(format!("error:{}", e.replace(',', ";")));
            cells.extend(std::iter::repeat(String::new()).take(COLUMNS.len() - cells.len()));
        }
    }
    cells.join(",")
}
