//! Minimal binary PGM (P5) writer, used to export images and heatmaps for
//! eyeball inspection.

use std::path::Path;

use crate::error::{Error, Result};

/// Encode 8-bit grayscale pixels (row-major) as a binary PGM file.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Dimension {
            op: "pgm_bytes",
            detail: format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            ),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = pgm_bytes(width, height, pixels)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
