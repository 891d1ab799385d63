use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmtree_core::codec::ValueBuf;
use vmtree_core::flash::TraceEvent;
use vmtree_core::{EngineError, FlashDevice, IndexEngine, Variant};

use vmtree_bench::profile::DeviceProfile;
use vmtree_bench::report;
use vmtree_bench::runner::{self, parse_variant, variant_name, RunSpec};
use vmtree_bench::workload::{self, Dataset};

#[derive(Parser)]
#[command(name = "vmtree-bench", about = "Flash B+-tree benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workload CSV (`key,value`) from one of the built-in
    /// dataset generators.
    Gen {
        /// random | temperature | health
        #[arg(long, default_value = "random")]
        dataset: String,
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        key_width: usize,
        #[arg(long, default_value_t = 16)]
        record_width: usize,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one variant on one device and print the report.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        /// Append the run as a CSV row (header written if file is new)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the full variant x device x write-buffer grid and emit CSV.
    Grid {
        /// Device profiles (builtin names or files), comma separated
        #[arg(long, default_value = "sd_ftl,dataflash,raw_nand")]
        devices: String,
        /// Variants, comma separated
        #[arg(long, default_value = "btree,vmtree,vmtree-ow")]
        variants: String,
        /// Datasets, comma separated
        #[arg(long, default_value = "random,temperature")]
        datasets: String,
        /// Write-buffer sizes in pages, comma separated
        #[arg(long, default_value = "0,1,2")]
        write_buffers: String,
        /// Page-buffer counts, comma separated
        #[arg(long, default_value = "3")]
        buffers: String,
        #[arg(long, default_value_t = 10_000)]
        records: u64,
        #[arg(long, default_value_t = 10_000)]
        queries: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Verify every cell against an in-memory oracle
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Directory for plot-ready data files (one per device x dataset)
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Crash-injection sweep: insert, replay trace prefixes, recover,
    /// check every acknowledged insert.
    RecoverTest {
        #[arg(long, default_value_t = 1000)]
        records: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Crash points to test (0 = every mutation boundary)
        #[arg(long, default_value_t = 0)]
        points: u64,
        /// Device profile (must be a raw NAND profile)
        #[arg(long, default_value = "raw_nand")]
        device: String,
    },
}

#[derive(Args)]
struct SpecArgs {
    /// btree | vmtree | vmtree-ow
    #[arg(long)]
    variant: String,
    /// Builtin profile name or profile file path
    #[arg(long, default_value = "sd_ftl")]
    device: String,
    /// random | temperature | health (ignored when --input is given)
    #[arg(long, default_value = "random")]
    dataset: String,
    /// Workload CSV (`key,value`) instead of a generator
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    records: u64,
    #[arg(long, default_value_t = 10_000)]
    queries: u64,
    #[arg(long, default_value_t = 4)]
    key_width: usize,
    #[arg(long, default_value_t = 16)]
    record_width: usize,
    /// Page buffer frames (M)
    #[arg(long, default_value_t = 3)]
    buffers: usize,
    #[arg(long, default_value_t = 0)]
    write_buffer: usize,
    #[arg(long, default_value_t = 1024)]
    mapping_table: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Check every query and the final content against an oracle
    #[arg(long)]
    verify: bool,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            dataset,
            count,
            seed,
            key_width,
            record_width,
            out,
        } => {
            let ds = Dataset::parse(&dataset).context("unknown dataset")?;
            let layout = vmtree_core::codec::RecordLayout::new(key_width, record_width)
                .map_err(|e| anyhow::anyhow!("bad layout: {e}"))?;
            let recs = workload::generate(ds, count, layout, seed);
            workload::write_csv(&recs, &out)?;
            println!("wrote {} records to {}", recs.len(), out.display());
        }
        Command::Run { spec, csv } => {
            let rs = build_spec(&spec)?;
            let outcome = if let Some(input) = &spec.input {
                let recs = workload::read_csv(input, rs.layout()?)?;
                runner::run_records(&rs, &recs)
            } else {
                runner::run(&rs)
            };
            let outcome_str = outcome.as_ref().map_err(|e| e.to_string());
            if let Some(path) = csv {
                append_csv(&path, &[report::row(&rs, &outcome_str.cloned())])?;
            }
            let r = outcome?;
            print_report(&rs, &r);
        }
        Command::Grid {
            devices,
            variants,
            datasets,
            write_buffers,
            buffers,
            records,
            queries,
            seed,
            verify,
            csv,
            plots,
        } => {
            let devices: Vec<DeviceProfile> = devices
                .split(',')
                .map(DeviceProfile::resolve)
                .collect::<Result<_>>()?;
            let variants: Vec<Variant> = variants
                .split(',')
                .map(|s| parse_variant(s).context("unknown variant"))
                .collect::<Result<_>>()?;
            let datasets: Vec<Dataset> = datasets
                .split(',')
                .map(|s| Dataset::parse(s).context("unknown dataset"))
                .collect::<Result<_>>()?;
            let wbufs: Vec<usize> = parse_list(&write_buffers)?;
            let frames: Vec<usize> = parse_list(&buffers)?;

            let mut rows = vec![report::header()];
            let mut plot_groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for dev in &devices {
                for &ds in &datasets {
                    for &variant in &variants {
                        for &wb in &wbufs {
                            for &m in &frames {
                                let mut rs = RunSpec::new(variant, dev.clone(), ds);
                                rs.record_count = records;
                                rs.query_count = queries;
                                rs.write_buffer_pages = wb;
                                rs.buffer_frames = m;
                                rs.seed = seed;
                                rs.verify = verify;
                                if !variant.compatible(dev.mode) {
                                    continue; // documented matrix, not an error
                                }
                                let outcome =
                                    runner::run(&rs).map_err(|e| e.to_string());
                                rows.push(report::row(&rs, &outcome));
                                if let Ok(r) = &outcome {
                                    plot_groups
                                        .entry(format!("{}_{}", dev.name, ds.name()))
                                        .or_default()
                                        .push(format!(
                                            "{} {} {} {} {} {:.1} {:.1}",
                                            variant_name(variant),
                                            m,
                                            wb,
                                            r.insert_io.total_writes(),
                                            r.query_io.page_reads,
                                            r.insert_time_us,
                                            r.query_time_us,
                                        ));
                                }
                            }
                        }
                    }
                }
            }
            let text = rows.join("\n") + "\n";
            match csv {
                Some(path) => {
                    fs::write(&path, text)?;
                    println!("wrote {} rows to {}", rows.len() - 1, path.display());
                }
                None => print!("{text}"),
            }
            if let Some(dir) = plots {
                fs::create_dir_all(&dir)?;
                for (name, lines) in plot_groups {
                    let mut body = String::from(
                        "# variant M write_buffer insert_writes query_reads insert_us query_us\n",
                    );
                    body.push_str(&lines.join("\n"));
                    body.push('\n');
                    fs::write(dir.join(format!("{name}.dat")), body)?;
                }
                println!("plot data in {}", dir.display());
            }
        }
        Command::RecoverTest {
            records,
            seed,
            points,
            device,
        } => {
            recover_test(records, seed, points, &device)?;
        }
    }
    Ok(())
}

fn build_spec(a: &SpecArgs) -> Result<RunSpec> {
    let variant = parse_variant(&a.variant).context("unknown variant")?;
    let profile = DeviceProfile::resolve(&a.device)?;
    let dataset = Dataset::parse(&a.dataset).context("unknown dataset")?;
    let mut rs = RunSpec::new(variant, profile, dataset);
    rs.record_count = a.records;
    rs.query_count = a.queries;
    rs.key_width = a.key_width;
    rs.record_width = a.record_width;
    rs.buffer_frames = a.buffers;
    rs.write_buffer_pages = a.write_buffer;
    rs.mapping_table_bytes = a.mapping_table;
    rs.seed = a.seed;
    rs.verify = a.verify;
    Ok(rs)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse().context("expected a number list"))
        .collect()
}

fn append_csv(path: &PathBuf, rows: &[String]) -> Result<()> {
    let mut text = if path.exists() {
        fs::read_to_string(path)?
    } else {
        report::header() + "\n"
    };
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn print_report(spec: &RunSpec, r: &vmtree_bench::runner::RunReport) {
    println!(
        "{} on {} ({} x{} records, seed {})",
        variant_name(spec.variant),
        spec.profile.name,
        spec.dataset.name(),
        spec.record_count,
        spec.seed
    );
    println!(
        "  insert: {} reads, {} writes, {} erase-writes, {} block erases, {:.1} ms ({:.0} rec/s)",
        r.insert_io.page_reads,
        r.insert_io.page_writes,
        r.insert_io.page_erase_writes,
        r.insert_io.block_erases,
        r.insert_time_us / 1000.0,
        r.insert_throughput
    );
    println!(
        "  query:  {} reads, {:.1} ms ({:.0} rec/s), hit rate {:.1}%",
        r.query_io.page_reads,
        r.query_time_us / 1000.0,
        r.query_throughput,
        r.buffer_hit_rate * 100.0
    );
    println!(
        "  memory {} B, height {}, peak mapping load {:.2}, forced flushes {}, gc {} relocations / {} erases, {} passes",
        r.memory_total_bytes,
        r.height,
        r.mapping_peak_load,
        r.forced_flushes,
        r.gc_relocations,
        r.gc_erases,
        r.storage_passes
    );
    if r.verified {
        println!("  oracle verification: ok");
    }
}

fn recover_test(records: u64, seed: u64, points: u64, device: &str) -> Result<()> {
    let profile = DeviceProfile::resolve(device)?;
    if profile.mode != vmtree_core::FlashMode::RawNand {
        bail!("recover-test needs a raw NAND profile");
    }
    let layout = vmtree_core::codec::RecordLayout::new(4, 16)
        .map_err(|e| anyhow::anyhow!("layout: {e}"))?;
    let cfg = vmtree_core::EngineConfig::new(Variant::VmTree, layout);
    let mut dev = profile.device();
    dev.enable_trace();
    let mut eng =
        IndexEngine::create(cfg, dev).map_err(|e| anyhow::anyhow!("setup: {e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acked: Vec<(u64, ValueBuf, usize)> = Vec::new();
    for i in 0..records {
        let k = rng.gen::<u32>() as u64;
        let v = ValueBuf::from_u64(i, 12);
        eng.insert(k, v.as_slice())
            .map_err(|e| anyhow::anyhow!("insert: {e}"))?;
        acked.push((k, v, eng.device().trace_len()));
    }
    let trace: Vec<TraceEvent> = eng.device_mut().take_trace();
    let cuts: Vec<usize> = if points == 0 || points as usize >= trace.len() {
        (0..=trace.len()).collect()
    } else {
        (0..=points).map(|i| (i as usize * trace.len()) / points as usize).collect()
    };
    let mut tested = 0u64;
    for &cut in &cuts {
        let crashed = FlashDevice::replay(profile.geometry, profile.mode, &trace[..cut])
            .map_err(|e| anyhow::anyhow!("replay: {e}"))?;
        let mut rec = match IndexEngine::recover(cfg, crashed) {
            Ok(r) => r,
            Err(EngineError::EmptyTree) => {
                if acked.iter().any(|&(_, _, t)| t <= cut) {
                    bail!("cut {cut}: acknowledged inserts lost with empty tree");
                }
                continue;
            }
            Err(e) => bail!("cut {cut}: recovery failed: {e}"),
        };
        for &(k, v, t) in &acked {
            if t > cut {
                continue;
            }
            let found = rec
                .range(k, k)
                .map_err(|e| anyhow::anyhow!("range: {e}"))?
                .iter()
                .any(|(_, got)| *got == v);
            if !found {
                bail!("cut {cut}: acknowledged record {k} missing after recovery");
            }
        }
        tested += 1;
    }
    println!(
        "recover-test: {} crash points over a {}-mutation trace, all acknowledged inserts preserved",
        tested,
        trace.len()
    );
    Ok(())
}
