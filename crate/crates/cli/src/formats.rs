//! Depth map file I/O: PFM (32-bit float) and 16-bit grayscale PNG.
//!
//! PFM follows the de-facto standard: `Pf` magic, width/height, a scale
//! whose sign encodes endianness (negative = little-endian), then rows of
//! floats stored bottom-up. Invalid pixels are written as 0.0 and anything
//! non-finite or <= 0 reads back as invalid.
//!
//! PNG16 uses the raw = depth * 256 convention with raw 0 marking an
//! invalid pixel, capping representable depth just below 256 m. Valid
//! depths that quantize to raw 0 (below ~2 mm) collapse to invalid.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use depthfill_core::{DepthGrid, DepthSpace, GridError, RgbImage};
use thiserror::Error;

/// Meters per raw PNG16 unit step is 1/256.
pub const PNG16_SCALE: f64 = 256.0;
pub const PNG16_MAX_DEPTH: f64 = 65535.0 / PNG16_SCALE;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot infer a depth format from `{0}` (expected .pfm or .png)")]
    UnknownExtension(PathBuf),
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path} is truncated: expected {expected} raster bytes, found {got}")]
    TruncatedData {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("depth {depth} m at ({row}, {col}) exceeds the png16 ceiling of {PNG16_MAX_DEPTH} m")]
    DepthOutOfRange { row: usize, col: usize, depth: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Png(#[from] image::ImageError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Reads a depth map, dispatching on the file extension.
pub fn read_depth(path: &Path) -> Result<DepthGrid, FormatError> {
    match extension(path)?.as_str() {
        "pfm" => read_pfm(path),
        "png" => read_png16(path),
        _ => Err(FormatError::UnknownExtension(path.to_path_buf())),
    }
}

/// Writes a linear-depth grid, dispatching on the file extension.
pub fn write_depth(grid: &DepthGrid, path: &Path) -> Result<(), FormatError> {
    match extension(path)?.as_str() {
        "pfm" => write_pfm(grid, path),
        "png" => write_png16(grid, path),
        _ => Err(FormatError::UnknownExtension(path.to_path_buf())),
    }
}

fn extension(path: &Path) -> Result<String, FormatError> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| FormatError::UnknownExtension(path.to_path_buf()))
}

fn open_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(FormatError::FileNotFound(path.to_path_buf()))
        }
        Err(e) => Err(e.into()),
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_pfm(grid: &DepthGrid, path: &Path) -> Result<(), FormatError> {
    let (height, width) = grid.shape();
    let mut out = Vec::with_capacity(32 + 4 * height * width);
    write!(out, "Pf\n{width} {height}\n-1.0\n")?;
    for row in (0..height).rev() {
        for col in 0..width {
            let v = grid.get(row, col).unwrap_or(0.0) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<DepthGrid, FormatError> {
    let bytes = open_bytes(path)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String, FormatError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "unexpected end of header"));
        }
        String::from_utf8(bytes[start..pos].to_vec())
            .map_err(|_| malformed(path, "non-ASCII header token"))
    };

    let magic = token()?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(malformed(path, "3-channel color PFM is not supported")),
        other => return Err(malformed(path, format!("bad magic `{other}`, expected `Pf`"))),
    }
    let width: usize = token()?
        .parse()
        .map_err(|_| malformed(path, "width is not an integer"))?;
    let height: usize = token()?
        .parse()
        .map_err(|_| malformed(path, "height is not an integer"))?;
    let scale: f64 = token()?
        .parse()
        .map_err(|_| malformed(path, "scale is not a number"))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(malformed(path, format!("scale {scale} must be finite and nonzero")));
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the scale from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed(path, "missing separator before the raster"));
    }
    pos += 1;

    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| malformed(path, "dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(FormatError::TruncatedData {
            path: path.to_path_buf(),
            expected,
            got: raster.len(),
        });
    }

    let mut values = vec![0.0f64; height * width];
    let mut valid = vec![false; height * width];
    for stored_row in 0..height {
        // PFM scanlines run bottom-up.
        let row = height - 1 - stored_row;
        for col in 0..width {
            let at = 4 * (stored_row * width + col);
            let raw: [u8; 4] = raster[at..at + 4].try_into().expect("length checked");
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            } as f64;
            if v.is_finite() && v > 0.0 {
                values[row * width + col] = v;
                valid[row * width + col] = true;
            }
        }
    }
    Ok(DepthGrid::new(height, width, values, valid, DepthSpace::Linear)?)
}

pub fn write_png16(grid: &DepthGrid, path: &Path) -> Result<(), FormatError> {
    let (height, width) = grid.shape();
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(width as u32, height as u32);
    for row in 0..height {
        for col in 0..width {
            let raw = match grid.get(row, col) {
                None => 0u16,
                Some(depth) => {
                    let scaled = (depth * PNG16_SCALE).round();
                    if scaled > 65535.0 {
                        return Err(FormatError::DepthOutOfRange { row, col, depth });
                    }
                    scaled as u16
                }
            };
            buf.put_pixel(col as u32, row as u32, image::Luma([raw]));
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png16(path: &Path) -> Result<DepthGrid, FormatError> {
    let bytes = open_bytes(path)?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?;
    let buf = match decoded {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(malformed(
                path,
                format!("expected 16-bit grayscale PNG, got {:?}", other.color()),
            ))
        }
    };
    let (width, height) = (buf.width() as usize, buf.height() as usize);
    let mut values = vec![0.0f64; height * width];
    let mut valid = vec![false; height * width];
    for row in 0..height {
        for col in 0..width {
            let raw = buf.get_pixel(col as u32, row as u32).0[0];
            if raw > 0 {
                values[row * width + col] = raw as f64 / PNG16_SCALE;
                valid[row * width + col] = true;
            }
        }
    }
    Ok(DepthGrid::new(height, width, values, valid, DepthSpace::Linear)?)
}

/// Loads an RGB image (any format the png decoder accepts) with channels
/// normalized to [0, 1].
pub fn read_image(path: &Path) -> Result<RgbImage, FormatError> {
    let bytes = open_bytes(path)?;
    let rgb = image::load_from_memory(&bytes)?.to_rgb8();
    let (width, height) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = Vec::with_capacity(height * width);
    for row in 0..height {
        for col in 0..width {
            let px = rgb.get_pixel(col as u32, row as u32).0;
            data.push([
                px[0] as f64 / 255.0,
                px[1] as f64 / 255.0,
                px[2] as f64 / 255.0,
            ]);
        }
    }
    Ok(RgbImage::new(height, width, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scratch(name: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    fn random_depth(seed: u64, height: usize, width: usize) -> DepthGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..height * width)
            .map(|_| rng.random_range(0.1..80.0))
            .collect();
        let valid: Vec<bool> = (0..height * width).map(|_| rng.random_bool(0.8)).collect();
        DepthGrid::new(height, width, values, valid, DepthSpace::Linear).unwrap()
    }

    #[test]
    fn pfm_round_trip_preserves_values_and_validity() {
        let (_dir, path) = scratch("depth.pfm");
        let grid = random_depth(7, 13, 9);
        write_pfm(&grid, &path).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.shape(), grid.shape());
        assert_eq!(back.valid(), grid.valid());
        for (a, b) in grid.values().iter().zip(back.values()) {
            if *a > 0.0 {
                assert!((a - b).abs() / a <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pfm_reads_big_endian_files() {
        let (_dir, path) = scratch("be.pfm");
        // 2x2 grid, values 1..4, written by hand with positive scale.
        let mut bytes = b"Pf\n2 2\n1.0\n".to_vec();
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        fs::write(&path, bytes).unwrap();
        let grid = read_pfm(&path).unwrap();
        assert_eq!(grid.get(0, 0), Some(1.0));
        assert_eq!(grid.get(0, 1), Some(2.0));
        assert_eq!(grid.get(1, 0), Some(3.0));
        assert_eq!(grid.get(1, 1), Some(4.0));
    }

    #[test]
    fn pfm_rejects_malformed_inputs() {
        let (_dir, path) = scratch("bad.pfm");

        fs::write(&path, b"PF\n2 2\n-1.0\n").unwrap();
        assert!(matches!(read_pfm(&path), Err(FormatError::MalformedHeader { .. })));

        fs::write(&path, b"Qx\n2 2\n-1.0\n").unwrap();
        assert!(matches!(read_pfm(&path), Err(FormatError::MalformedHeader { .. })));

        fs::write(&path, b"Pf\n2 2\n0.0\n").unwrap();
        assert!(matches!(read_pfm(&path), Err(FormatError::MalformedHeader { .. })));

        let mut short = b"Pf\n2 2\n-1.0\n".to_vec();
        short.extend_from_slice(&1.0f32.to_le_bytes());
        fs::write(&path, short).unwrap();
        assert!(matches!(
            read_pfm(&path),
            Err(FormatError::TruncatedData { expected: 16, got: 4, .. })
        ));
    }

    #[test]
    fn pfm_maps_nonpositive_and_nan_to_invalid() {
        let (_dir, path) = scratch("inv.pfm");
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [f32::NAN, -3.0, 5.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, bytes).unwrap();
        let grid = read_pfm(&path).unwrap();
        // Stored row order is bottom-up: the file holds rows 1 then 0.
        assert_eq!(grid.get(1, 0), None);
        assert_eq!(grid.get(1, 1), None);
        assert_eq!(grid.get(0, 0), Some(5.0));
        assert_eq!(grid.get(0, 1), None);
    }

    #[test]
    fn png16_scale_convention() {
        let (_dir, path) = scratch("raw.png");
        let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(2, 2);
        buf.put_pixel(0, 0, image::Luma([256]));
        buf.put_pixel(1, 0, image::Luma([0]));
        buf.put_pixel(0, 1, image::Luma([32]));
        buf.put_pixel(1, 1, image::Luma([65535]));
        buf.save_with_format(&path, image::ImageFormat::Png).unwrap();

        let grid = read_png16(&path).unwrap();
        assert_eq!(grid.get(0, 0), Some(1.0));
        assert_eq!(grid.get(0, 1), None);
        assert_eq!(grid.get(1, 0), Some(0.125));
        assert_eq!(grid.get(1, 1), Some(PNG16_MAX_DEPTH));
    }

    #[test]
    fn png16_round_trip_quantizes_to_half_a_step() {
        let (_dir, path) = scratch("depth.png");
        let grid = random_depth(21, 6, 11);
        write_png16(&grid, &path).unwrap();
        let back = read_png16(&path).unwrap();
        for idx in 0..grid.values().len() {
            if grid.valid()[idx] && grid.values()[idx] >= 1.0 / PNG16_SCALE {
                assert!(back.valid()[idx]);
                let diff = (grid.values()[idx] - back.values()[idx]).abs();
                assert!(diff <= 0.5 / PNG16_SCALE + 1e-12, "diff {diff}");
            }
        }
    }

    #[test]
    fn png16_rejects_out_of_range_depth() {
        let (_dir, path) = scratch("far.png");
        let grid =
            DepthGrid::from_dense(2, 2, vec![1.0, 2.0, 300.0, 4.0], DepthSpace::Linear).unwrap();
        assert!(matches!(
            write_png16(&grid, &path),
            Err(FormatError::DepthOutOfRange { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn dispatch_handles_extensions_and_missing_files() {
        let (_dir, dir_path) = scratch("x");
        let grid = random_depth(3, 4, 4);
        assert!(matches!(
            write_depth(&grid, &dir_path.with_extension("txt")),
            Err(FormatError::UnknownExtension(_))
        ));
        assert!(matches!(
            read_depth(&dir_path.with_extension("pfm")),
            Err(FormatError::FileNotFound(_))
        ));
        let p = dir_path.with_extension("png");
        write_depth(&grid, &p).unwrap();
        assert_eq!(read_depth(&p).unwrap().shape(), grid.shape());
    }
}
