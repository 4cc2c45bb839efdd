//! Elevation grids: construction, statistics, normalization, and bit-exact
//! binary I/O.
//!
//! A [`Heightmap`] is an immutable row-major grid of `f64` elevations in
//! meters with a physical cell resolution. Maps are validated once at
//! construction (finite data, matching length, at least 4x4 so gradients
//! are well defined) and shared read-only afterwards.
//!
//! The on-disk format is `ADTG-HF v1`: ASCII magic `ADTG`, `u16` version,
//! `u32` width, `u32` height, `f64` resolution, then `width*height` `f64`
//! elevations row-major, all little-endian. Round-trips are bit-exact.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Magic bytes of the binary heightfield format.
pub const MAGIC: [u8; 4] = *b"ADTG";
/// Current format version.
pub const FORMAT_VERSION: u16 = 1;
/// Smallest legal side length; central differences need interior cells.
pub const MIN_SIDE: usize = 4;

#[derive(Debug, Error)]
pub enum HeightfieldError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected \"ADTG\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing data after payload: {0} extra bytes")]
    TrailingData(usize),
    #[error("non-finite value at cell {0}")]
    NonFinite(usize),
    #[error("invalid dimensions {width}x{height} (each side must be >= {MIN_SIDE})")]
    InvalidDimensions { width: usize, height: usize },
    #[error("data length {len} does not match {width}x{height}")]
    LengthMismatch { len: usize, width: usize, height: usize },
    #[error("invalid resolution {0} (must be finite and positive)")]
    InvalidResolution(f64),
    #[error("invalid normalization range [{0}, {1}]")]
    InvalidRange(f64, f64),
}

/// Row-major elevation grid with physical resolution (meters per cell).
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    width: usize,
    height: usize,
    resolution: f64,
    data: Vec<f64>,
}

/// Summary statistics of a heightmap. `roughness` is the mean gradient
/// magnitude (rise over run) across interior cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainStats {
    pub mean: f64,
    pub variance: f64,
    pub roughness: f64,
    pub min: f64,
    pub max: f64,
}

/// Parameters of an affine normalization, sufficient to invert it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeParams {
    pub lo: f64,
    pub hi: f64,
    pub src_min: f64,
    pub src_max: f64,
}

impl Heightmap {
    /// Validate and build a heightmap from row-major data.
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        data: Vec<f64>,
    ) -> Result<Self, HeightfieldError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(HeightfieldError::InvalidDimensions { width, height });
        }
        if !resolution.is_finite() || resolution <= 0.0 {
            return Err(HeightfieldError::InvalidResolution(resolution));
        }
        if data.len() != width * height {
            return Err(HeightfieldError::LengthMismatch { len: data.len(), width, height });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HeightfieldError::NonFinite(i));
        }
        Ok(Self { width, height, resolution, data })
    }

    /// All-zero map.
    pub fn flat(width: usize, height: usize, resolution: f64) -> Result<Self, HeightfieldError> {
        Self::new(width, height, resolution, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    /// Map extent along x (columns), in meters.
    pub fn extent_x(&self) -> f64 {
        (self.width - 1) as f64 * self.resolution
    }

    /// Map extent along y (rows), in meters.
    pub fn extent_y(&self) -> f64 {
        (self.height - 1) as f64 * self.resolution
    }

    /// Replace the elevation data, re-validating.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self, HeightfieldError> {
        Self::new(self.width, self.height, self.resolution, data)
    }

    /// Elevation gradient (d/dx, d/dy) at a grid cell, in rise over run.
    /// Central differences on interior cells, one-sided at the boundary.
    pub fn gradient_at(&self, row: usize, col: usize) -> (f64, f64) {
        let (w, h, r) = (self.width, self.height, self.resolution);
        let gx = if col == 0 {
            (self.at(row, 1) - self.at(row, 0)) / r
        } else if col == w - 1 {
            (self.at(row, w - 1) - self.at(row, w - 2)) / r
        } else {
            (self.at(row, col + 1) - self.at(row, col - 1)) / (2.0 * r)
        };
        let gy = if row == 0 {
            (self.at(1, col) - self.at(0, col)) / r
        } else if row == h - 1 {
            (self.at(h - 1, col) - self.at(h - 2, col)) / r
        } else {
            (self.at(row + 1, col) - self.at(row - 1, col)) / (2.0 * r)
        };
        (gx, gy)
    }

    /// Gradient of the bilinear surface at a continuous position in meters.
    /// Positions outside the extent are clamped onto it.
    pub fn gradient_at_pos(&self, x: f64, y: f64) -> (f64, f64) {
        let r = self.resolution;
        let u = (x / r).clamp(0.0, (self.width - 1) as f64);
        let v = (y / r).clamp(0.0, (self.height - 1) as f64);
        let i0 = (u.floor() as usize).min(self.width - 2);
        let j0 = (v.floor() as usize).min(self.height - 2);
        let fu = u - i0 as f64;
        let fv = v - j0 as f64;
        let z00 = self.at(j0, i0);
        let z10 = self.at(j0, i0 + 1);
        let z01 = self.at(j0 + 1, i0);
        let z11 = self.at(j0 + 1, i0 + 1);
        let gx = ((z10 - z00) * (1.0 - fv) + (z11 - z01) * fv) / r;
        let gy = ((z01 - z00) * (1.0 - fu) + (z11 - z10) * fu) / r;
        (gx, gy)
    }

    /// Bilinearly interpolated elevation at a continuous position in meters.
    pub fn elevation_at_pos(&self, x: f64, y: f64) -> f64 {
        let r = self.resolution;
        let u = (x / r).clamp(0.0, (self.width - 1) as f64);
        let v = (y / r).clamp(0.0, (self.height - 1) as f64);
        let i0 = (u.floor() as usize).min(self.width - 2);
        let j0 = (v.floor() as usize).min(self.height - 2);
        let fu = u - i0 as f64;
        let fv = v - j0 as f64;
        let top = self.at(j0, i0) * (1.0 - fu) + self.at(j0, i0 + 1) * fu;
        let bot = self.at(j0 + 1, i0) * (1.0 - fu) + self.at(j0 + 1, i0 + 1) * fu;
        top * (1.0 - fv) + bot * fv
    }
}

/// Mean, variance (population), roughness over interior cells, min and max.
pub fn compute_stats(map: &Heightmap) -> TerrainStats {
    let n = map.len() as f64;
    let mut mean = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in map.data() {
        mean += v;
        min = min.min(v);
        max = max.max(v);
    }
    mean /= n;
    let mut variance = 0.0;
    for &v in map.data() {
        let d = v - mean;
        variance += d * d;
    }
    variance /= n;

    // Interior cells only; boundary one-sided differences would bias the
    // difficulty proxy.
    let mut roughness = 0.0;
    let mut count = 0usize;
    for row in 1..map.height() - 1 {
        for col in 1..map.width() - 1 {
            let (gx, gy) = map.gradient_at(row, col);
            roughness += (gx * gx + gy * gy).sqrt();
            count += 1;
        }
    }
    roughness /= count as f64;

    TerrainStats { mean, variance, roughness, min, max }
}

/// Affine rescale so the map minimum maps to `lo` and the maximum to `hi`.
/// Constant maps rescale to the midpoint. Returns the normalized map and
/// the parameters needed to invert the transform.
pub fn normalize(
    map: &Heightmap,
    lo: f64,
    hi: f64,
) -> Result<(Heightmap, NormalizeParams), HeightfieldError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(HeightfieldError::InvalidRange(lo, hi));
    }
    let stats = compute_stats(map);
    let params = NormalizeParams { lo, hi, src_min: stats.min, src_max: stats.max };
    let span = stats.max - stats.min;
    let data = if span == 0.0 {
        vec![(lo + hi) / 2.0; map.len()]
    } else {
        map.data().iter().map(|&v| lo + (v - stats.min) / span * (hi - lo)).collect()
    };
    Ok((map.with_data(data)?, params))
}

/// Invert [`normalize`] using the stored parameters.
pub fn denormalize(map: &Heightmap, params: &NormalizeParams) -> Result<Heightmap, HeightfieldError> {
    let span = params.src_max - params.src_min;
    let data = if span == 0.0 {
        vec![params.src_min; map.len()]
    } else {
        map.data()
            .iter()
            .map(|&v| params.src_min + (v - params.lo) / (params.hi - params.lo) * span)
            .collect()
    };
    map.with_data(data)
}

/// Serialize in the `ADTG-HF v1` format.
pub fn to_bytes(map: &Heightmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + 4 + 4 + 8 + map.len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&map.resolution().to_le_bytes());
    for &v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Deserialize from the `ADTG-HF v1` format.
pub fn from_bytes(bytes: &[u8]) -> Result<Heightmap, HeightfieldError> {
    const HEADER: usize = 4 + 2 + 4 + 4 + 8;
    if bytes.len() < HEADER {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(HeightfieldError::BadMagic);
        }
        return Err(HeightfieldError::Truncated { expected: HEADER, actual: bytes.len() });
    }
    if bytes[..4] != MAGIC {
        return Err(HeightfieldError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(HeightfieldError::UnsupportedVersion(version));
    }
    let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let resolution = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let cells = width
        .checked_mul(height)
        .ok_or(HeightfieldError::InvalidDimensions { width, height })?;
    let expected = HEADER + cells * 8;
    if bytes.len() < expected {
        return Err(HeightfieldError::Truncated { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(HeightfieldError::TrailingData(bytes.len() - expected));
    }
    let mut data = Vec::with_capacity(cells);
    for i in 0..cells {
        let off = HEADER + i * 8;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(HeightfieldError::NonFinite(i));
        }
        data.push(v);
    }
    Heightmap::new(width, height, resolution, data)
}

/// Write a heightmap to a file; the round-trip with [`read_heightmap`] is
/// bit-exact.
pub fn write_heightmap(map: &Heightmap, path: &Path) -> Result<(), HeightfieldError> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(&to_bytes(map))?;
    file.flush()?;
    Ok(())
}

/// Read a heightmap from a file.
pub fn read_heightmap(path: &Path) -> Result<Heightmap, HeightfieldError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Export as CSV with header `row,col,elevation`, one cell per line.
pub fn write_csv<W: Write>(map: &Heightmap, mut out: W) -> io::Result<()> {
    writeln!(out, "row,col,elevation")?;
    for row in 0..map.height() {
        for col in 0..map.width() {
            writeln!(out, "{},{},{}", row, col, map.at(row, col))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bump_map() -> Heightmap {
        // Single Gaussian bump, amplitude 1, sigma = 2 cells, centered.
        let (w, h, res) = (8usize, 8usize, 0.1f64);
        let sigma = 2.0;
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let mut data = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let dx = c as f64 - cx;
                let dy = r as f64 - cy;
                data[r * w + c] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
        Heightmap::new(w, h, res, data).unwrap()
    }

    /// Reference double-loop roughness, written independently of
    /// `compute_stats`: explicit central differences over interior cells.
    fn roughness_oracle(map: &Heightmap) -> f64 {
        let (w, h, res) = (map.width(), map.height(), map.resolution());
        let e = |r: usize, c: usize| map.data()[r * w + c];
        let mut total = 0.0;
        let mut n = 0;
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let gx = (e(r, c + 1) - e(r, c - 1)) / (2.0 * res);
                let gy = (e(r + 1, c) - e(r - 1, c)) / (2.0 * res);
                total += (gx * gx + gy * gy).sqrt();
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn stats_flat_map() {
        let map = Heightmap::flat(6, 5, 0.5).unwrap();
        let s = compute_stats(&map);
        assert_eq!(s.roughness, 0.0);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn stats_unit_slope_plane() {
        // z = x * resolution: unit rise over run along x.
        let (w, h, res) = (8, 8, 0.25);
        let data: Vec<f64> =
            (0..w * h).map(|i| (i % w) as f64 * res).collect();
        let map = Heightmap::new(w, h, res, data).unwrap();
        let s = compute_stats(&map);
        assert!((s.roughness - 1.0).abs() < 1e-12, "roughness {}", s.roughness);
    }

    #[test]
    fn stats_gaussian_bump_matches_oracle() {
        let map = bump_map();
        let s = compute_stats(&map);
        let expected = roughness_oracle(&map);
        // Frozen oracle output for this exact map.
        assert!((expected - 2.351067304805726).abs() < 1e-12, "oracle moved: {expected:.15}");
        assert!((s.roughness - expected).abs() < 1e-12);
    }

    #[test]
    fn stats_shift_invariance() {
        let map = bump_map();
        let a = compute_stats(&map);
        let shifted = map
            .with_data(map.data().iter().map(|v| v + 11.25).collect())
            .unwrap();
        let b = compute_stats(&shifted);
        assert!((a.variance - b.variance).abs() < 1e-9);
        assert!((a.roughness - b.roughness).abs() < 1e-12);
        assert!((b.mean - a.mean - 11.25).abs() < 1e-9);
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(matches!(
            Heightmap::new(3, 8, 0.1, vec![0.0; 24]),
            Err(HeightfieldError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            Heightmap::new(4, 4, 0.1, vec![0.0; 15]),
            Err(HeightfieldError::LengthMismatch { .. })
        ));
        let mut data = vec![0.0; 16];
        data[7] = f64::NAN;
        assert!(matches!(
            Heightmap::new(4, 4, 0.1, data),
            Err(HeightfieldError::NonFinite(7))
        ));
        assert!(matches!(
            Heightmap::new(4, 4, 0.0, vec![0.0; 16]),
            Err(HeightfieldError::InvalidResolution(_))
        ));
    }

    #[test]
    fn normalize_halves_symmetric_range() {
        let mut data = vec![0.0; 16];
        data[0] = -2.0;
        data[15] = 2.0;
        data[5] = 1.0;
        let map = Heightmap::new(4, 4, 0.1, data).unwrap();
        let (normed, _) = normalize(&map, -1.0, 1.0).unwrap();
        assert_eq!(normed.data()[0], -1.0);
        assert_eq!(normed.data()[15], 1.0);
        assert!((normed.data()[5] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalize_constant_map_to_midpoint() {
        let map = Heightmap::new(4, 4, 0.1, vec![3.0; 16]).unwrap();
        let (normed, params) = normalize(&map, -1.0, 1.0).unwrap();
        assert!(normed.data().iter().all(|&v| v == 0.0));
        let back = denormalize(&normed, &params).unwrap();
        assert!(back.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn io_round_trip_is_bit_exact() {
        let map = bump_map();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bump.ahf");
        write_heightmap(&map, &path).unwrap();
        let back = read_heightmap(&path).unwrap();
        assert_eq!(map, back);
        // Bit-exactness, not just value equality.
        assert_eq!(to_bytes(&map), to_bytes(&back));
    }

    #[test]
    fn read_errors_are_distinct() {
        let map = Heightmap::flat(4, 4, 0.1).unwrap();
        let bytes = to_bytes(&map);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(from_bytes(&bad_magic), Err(HeightfieldError::BadMagic)));

        let truncated = &bytes[..bytes.len() - 9];
        assert!(matches!(from_bytes(truncated), Err(HeightfieldError::Truncated { .. })));

        // Declared dims exceed the remaining payload.
        let mut oversized = bytes.clone();
        oversized[6..10].copy_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(from_bytes(&oversized), Err(HeightfieldError::Truncated { .. })));

        let mut nonfinite = bytes.clone();
        nonfinite[22..30].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(from_bytes(&nonfinite), Err(HeightfieldError::NonFinite(0))));

        let mut wrong_version = bytes.clone();
        wrong_version[4..6].copy_from_slice(&9u16.to_le_bytes());
        assert!(matches!(
            from_bytes(&wrong_version),
            Err(HeightfieldError::UnsupportedVersion(9))
        ));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(from_bytes(&trailing), Err(HeightfieldError::TrailingData(1))));
    }

    #[test]
    fn csv_export_has_header_and_cells() {
        let map = Heightmap::flat(4, 4, 0.1).unwrap();
        let mut buf = Vec::new();
        write_csv(&map, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("row,col,elevation"));
        assert_eq!(lines.count(), 16);
    }

    proptest! {
        #[test]
        fn round_trip_any_map(
            w in 4usize..12,
            h in 4usize..12,
            seed in 0u64..1000,
        ) {
            let mut rng = crate::rng::stream(seed);
            use rand::Rng;
            let data: Vec<f64> = (0..w * h).map(|_| rng.random_range(-100.0..100.0)).collect();
            let map = Heightmap::new(w, h, 0.1, data).unwrap();
            let back = from_bytes(&to_bytes(&map)).unwrap();
            prop_assert_eq!(&map, &back);
        }

        #[test]
        fn normalize_round_trip(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed);
            let data: Vec<f64> = (0..36).map(|_| rng.random_range(-5.0..5.0)).collect();
            let map = Heightmap::new(6, 6, 0.1, data).unwrap();
            let (normed, params) = normalize(&map, -1.0, 1.0).unwrap();
            let back = denormalize(&normed, &params).unwrap();
            for (a, b) in map.data().iter().zip(back.data()) {
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }
}
