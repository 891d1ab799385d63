//! Deterministic workload generation: uniform random keys, a slowly
//! drifting temperature-like signal, a mixed-period health-like signal,
//! and CSV ingestion. Every generator is a pure function of its seed.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmtree_core::codec::{RecordLayout, ValueBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Random,
    Temperature,
    Health,
}

impl Dataset {
    pub fn parse(s: &str) -> Option<Dataset> {
        match s {
            "random" => Some(Dataset::Random),
            "temperature" => Some(Dataset::Temperature),
            "health" => Some(Dataset::Health),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Random => "random",
            Dataset::Temperature => "temperature",
            Dataset::Health => "health",
        }
    }
}

/// One insert stream entry: key plus value payload.
pub type Record = (u64, ValueBuf);

pub fn generate(
    dataset: Dataset,
    count: u64,
    layout: RecordLayout,
    seed: u64,
) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vw = layout.value_width();
    let max_key = layout.max_key();
    let mut out = Vec::with_capacity(count as usize);
    match dataset {
        Dataset::Random => {
            for i in 0..count {
                let k = rng.gen::<u64>() & max_key;
                out.push((k, ValueBuf::from_u64(i, vw)));
            }
        }
        Dataset::Temperature => {
            // bounded random walk quantized to tenths of a degree: heavy
            // duplication, strong temporal clustering
            let mut t = 20.0f64;
            for i in 0..count {
                t += rng.gen_range(-0.15..0.15);
                t = t.clamp(-40.0, 60.0);
                let k = (((t + 40.0) * 10.0).round() as u64) & max_key;
                out.push((k, ValueBuf::from_u64(i, vw)));
            }
        }
        Dataset::Health => {
            // heart-rate-like mix of slow and fast periodic components
            for i in 0..count {
                let x = i as f64;
                let hr = 72.0
                    + 18.0 * (x / 711.0).sin()
                    + 6.0 * (x / 53.0).sin()
                    + rng.gen_range(-1.5..1.5);
                let k = ((hr * 10.0).round() as u64) & max_key;
                out.push((k, ValueBuf::from_u64(i, vw)));
            }
        }
    }
    out
}

/// Keys to use for the point-query phase: sampled uniformly from the keys
/// that were inserted.
pub fn query_keys(records: &[Record], count: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    (0..count)
        .map(|_| records[rng.gen_range(0..records.len())].0)
        .collect()
}

pub fn write_csv(records: &[Record], path: &Path) -> Result<()> {
    let mut text = String::from("key,value\n");
    for (k, v) in records {
        let mut bytes = [0u8; 8];
        let s = v.as_slice();
        bytes[..s.len().min(8)].copy_from_slice(&s[..s.len().min(8)]);
        text.push_str(&format!("{},{}\n", k, u64::from_le_bytes(bytes)));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_csv(path: &Path, layout: RecordLayout) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV")?;
    if header.trim() != "key,value" {
        anyhow::bail!("expected header `key,value`, got {header:?}");
    }
    let vw = layout.value_width();
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(',')
            .with_context(|| format!("line {}: expected key,value", n + 2))?;
        let k: u64 = k.trim().parse().with_context(|| format!("line {}", n + 2))?;
        let v: u64 = v.trim().parse().with_context(|| format!("line {}", n + 2))?;
        out.push((k, ValueBuf::from_u64(v, vw)));
    }
    Ok(out)
}
