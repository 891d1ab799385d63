//! Device profiles: geometry + mode + per-operation time costs, loadable
//! from a key=value text file, plus the raw backing-file format that lets a
//! device state survive between process runs.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use vmtree_core::{CostModel, FlashDevice, FlashGeometry, FlashMode};

#[derive(Debug, Clone)]
pub struct DeviceProfile {
    pub name: String,
    pub geometry: FlashGeometry,
    pub mode: FlashMode,
    pub cost: CostModel,
}

/// Microseconds to move one page at the given KB/s rate.
pub fn us_per_page(page_size: usize, kb_per_s: f64) -> f64 {
    page_size as f64 / (kb_per_s * 1024.0) * 1e6
}

impl DeviceProfile {
    pub fn device(&self) -> FlashDevice {
        FlashDevice::new(self.geometry, self.mode)
    }

    /// DataFlash-style overwrite memory: fast reads, slow page
    /// erase-then-writes, no block-erase cost (page-erase device).
    pub fn dataflash() -> Self {
        let page = 512;
        DeviceProfile {
            name: "dataflash".into(),
            geometry: FlashGeometry::new(page, 8, 4096).unwrap(),
            mode: FlashMode::Overwrite,
            cost: CostModel {
                read_cost: us_per_page(page, 475.0),
                seq_write_cost: us_per_page(page, 380.0),
                rand_write_cost: us_per_page(page, 380.0),
                erase_write_cost: us_per_page(page, 35.0),
                block_erase_cost: 0.0,
            },
        }
    }

    /// SD-card-style FTL: logical in-place writes, random writes slower
    /// than sequential.
    pub fn sd_ftl() -> Self {
        let page = 512;
        DeviceProfile {
            name: "sd_ftl".into(),
            geometry: FlashGeometry::new(page, 8, 4096).unwrap(),
            mode: FlashMode::Ftl,
            cost: CostModel {
                read_cost: us_per_page(page, 1000.0),
                seq_write_cost: us_per_page(page, 500.0),
                rand_write_cost: us_per_page(page, 250.0),
                erase_write_cost: 0.0,
                block_erase_cost: 0.0,
            },
        }
    }

    /// Raw NAND: cheap page ops, expensive block erases.
    pub fn raw_nand() -> Self {
        let page = 512;
        DeviceProfile {
            name: "raw_nand".into(),
            geometry: FlashGeometry::new(page, 8, 4096).unwrap(),
            mode: FlashMode::RawNand,
            cost: CostModel {
                read_cost: 50.0,
                seq_write_cost: 250.0,
                rand_write_cost: 250.0,
                erase_write_cost: 0.0,
                block_erase_cost: 2000.0,
            },
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "dataflash" => Some(Self::dataflash()),
            "sd_ftl" => Some(Self::sd_ftl()),
            "raw_nand" => Some(Self::raw_nand()),
            _ => None,
        }
    }

    /// Builtin name, or a path to a key=value profile file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(p) = Self::builtin(spec) {
            return Ok(p);
        }
        Self::load(Path::new(spec))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading profile {}", path.display()))?;
        let mut p = Self::parse(&text)?;
        if p.name.is_empty() {
            p.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(p)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::new();
        let mut page_size = None;
        let mut pages_per_block = None;
        let mut num_pages = None;
        let mut mode = None;
        let mut read = 0.0;
        let mut write = 0.0;
        let mut rand_write = None;
        let mut erase_write = 0.0;
        let mut block_erase = 0.0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "name" => name = value.to_string(),
                "pageSize" => page_size = Some(value.parse()?),
                "pagesPerBlock" => pages_per_block = Some(value.parse()?),
                "numPages" => num_pages = Some(value.parse()?),
                "mode" => {
                    mode = Some(match value {
                        "raw_nand" => FlashMode::RawNand,
                        "overwrite" => FlashMode::Overwrite,
                        "ftl" => FlashMode::Ftl,
                        other => bail!("unknown mode {other:?}"),
                    })
                }
                "readCost" => read = value.parse()?,
                "writeCost" => write = value.parse()?,
                "randWriteCost" => rand_write = Some(value.parse()?),
                "eraseWriteCost" => erase_write = value.parse()?,
                "blockEraseCost" => block_erase = value.parse()?,
                other => bail!("unknown profile key {other:?}"),
            }
        }
        let page_size = page_size.context("missing pageSize")?;
        let geometry = FlashGeometry::new(
            page_size,
            pages_per_block.context("missing pagesPerBlock")?,
            num_pages.context("missing numPages")?,
        )
        .map_err(|e| anyhow::anyhow!("bad geometry: {e}"))?;
        Ok(DeviceProfile {
            name,
            geometry,
            mode: mode.context("missing mode")?,
            cost: CostModel {
                read_cost: read,
                seq_write_cost: write,
                rand_write_cost: rand_write.unwrap_or(write),
                erase_write_cost: erase_write,
                block_erase_cost: block_erase,
            },
        })
    }
}

// --- backing file --------------------------------------------------------

const MAGIC: &[u8; 8] = b"VMTDEV\0\0";

/// Raw page array prefixed by a geometry header, so a device can be
/// reopened with the same shape it was saved with.
pub fn save_device(dev: &FlashDevice, path: &Path) -> Result<()> {
    let g = dev.geometry();
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(g.page_size as u32).to_le_bytes())?;
    f.write_all(&g.pages_per_block.to_le_bytes())?;
    f.write_all(&g.num_pages.to_le_bytes())?;
    let mode = match dev.mode() {
        FlashMode::RawNand => 0u8,
        FlashMode::Overwrite => 1,
        FlashMode::Ftl => 2,
    };
    f.write_all(&[mode; 1])?;
    f.write_all(&[0u8; 11])?; // pad header to 32 bytes
    f.write_all(dev.raw_pages())?;
    Ok(())
}

pub fn load_device(path: &Path) -> Result<FlashDevice> {
    let mut f = fs::File::open(path)?;
    let mut header = [0u8; 32];
    f.read_exact(&mut header)?;
    if &header[0..8] != MAGIC {
        bail!("{} is not a device backing file", path.display());
    }
    let page_size = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let ppb = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let num_pages = u32::from_le_bytes(header[16..20].try_into().unwrap());
    let mode = match header[20] {
        0 => FlashMode::RawNand,
        1 => FlashMode::Overwrite,
        2 => FlashMode::Ftl,
        other => bail!("unknown mode byte {other}"),
    };
    let geometry = FlashGeometry::new(page_size, ppb, num_pages)
        .map_err(|e| anyhow::anyhow!("bad geometry: {e}"))?;
    let mut raw = Vec::new();
    f.read_to_end(&mut raw)?;
    FlashDevice::from_raw(geometry, mode, &raw)
        .map_err(|e| anyhow::anyhow!("corrupt backing file: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "\
# DataFlash-like part
name = df_test
pageSize = 512
pagesPerBlock = 8
numPages = 1024
mode = overwrite
readCost = 1052.6
writeCost = 1315.8
eraseWriteCost = 14285.7
blockEraseCost = 0
";
        let p = DeviceProfile::parse(text).unwrap();
        assert_eq!(p.name, "df_test");
        assert_eq!(p.geometry.page_size, 512);
        assert_eq!(p.mode, FlashMode::Overwrite);
        assert!((p.cost.erase_write_cost - 14285.7).abs() < 1e-9);
        // randWriteCost defaults to writeCost
        assert_eq!(p.cost.rand_write_cost, p.cost.seq_write_cost);
    }

    #[test]
    fn backing_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dev.bin");
        let mut dev = DeviceProfile::dataflash().device();
        dev.write_page(3, &vec![0x42; 512]).unwrap();
        save_device(&dev, &path).unwrap();
        let back = load_device(&path).unwrap();
        assert_eq!(back.geometry(), dev.geometry());
        assert_eq!(back.mode(), dev.mode());
        assert_eq!(back.raw_pages(), dev.raw_pages());
    }

    #[test]
    fn dataflash_costs_follow_rate_table() {
        let p = DeviceProfile::dataflash();
        assert!((p.cost.read_cost - 512.0 / (475.0 * 1024.0) * 1e6).abs() < 1e-6);
        assert!((p.cost.erase_write_cost - 512.0 / (35.0 * 1024.0) * 1e6).abs() < 1e-6);
    }
}
