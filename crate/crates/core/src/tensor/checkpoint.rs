use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RalignError, Result};
use crate::tensor::Matrix;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
}

/// Writes `<base>.bin` (concatenated little-endian f64 arrays) and
/// `<base>.json` (ordered shape manifest).
pub fn save_checkpoint(base: &Path, entries: &[(String, Matrix)]) -> Result<()> {
    let mut bin = Vec::new();
    let mut manifest = Vec::new();
    for (name, m) in entries {
        manifest.push(ManifestEntry {
            name: name.clone(),
            rows: m.rows,
            cols: m.cols,
        });
        for &x in &m.data {
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(base.with_extension("bin"), bin)?;
    fs::write(
        base.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_checkpoint(base: &Path) -> Result<Vec<(String, Matrix)>> {
    let manifest: Vec<ManifestEntry> =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
    let bin = fs::read(base.with_extension("bin"))?;
    let total: usize = manifest.iter().map(|e| e.rows * e.cols).sum();
    if bin.len() != total * 8 {
        return Err(RalignError::Contract(format!(
            "checkpoint binary is {} bytes, manifest wants {}",
            bin.len(),
            total * 8
        )));
    }
    let mut out = Vec::new();
    let mut offset = 0;
    for e in manifest {
        let count = e.rows * e.cols;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let start = (offset + i) * 8;
            let bytes: [u8; 8] = bin[start..start + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(bytes));
        }
        offset += count;
        out.push((e.name, Matrix::from_vec(e.rows, e.cols, data)?));
    }
    Ok(out)
}
