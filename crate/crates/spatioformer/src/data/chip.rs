//! Multispectral image chips centered on survey locations.
//!
//! A chip is a size x size window of 6-band surface reflectance in [0,1],
//! band-major in memory, with the center pixel aligned to the sample
//! coordinate. File layout: the magic string "CHIP0001", then size and
//! band count as little-endian u64, then center_lon, center_lat and
//! pixel_pitch as little-endian f64, then the band-major payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CHIP0001";

pub const BAND_NAMES: [&str; 6] = ["blue", "green", "red", "nir", "swir1", "swir2"];
pub const BAND_RED: usize = 2;
pub const BAND_NIR: usize = 3;

/// 30 m expressed in degrees, with one degree taken as 111.32 km.
pub const PIXEL_PITCH_30M: f64 = 30.0 / 111_320.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageChip {
    pub size: usize,
    pub bands: usize,
    pub center_lon: f64,
    pub center_lat: f64,
    pub pixel_pitch: f64,
    reflectance: Vec<f64>,
}

impl ImageChip {
    pub fn new(
        size: usize,
        bands: usize,
        center_lon: f64,
        center_lat: f64,
        pixel_pitch: f64,
        reflectance: Vec<f64>,
    ) -> Result<ImageChip> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::Data(format!(
                "chip size must be odd and positive, got {size}"
            )));
        }
        if bands == 0 {
            return Err(Error::Data("chip must have at least one band".into()));
        }
        if reflectance.len() != bands * size * size {
            return Err(Error::Data(format!(
                "expected {} reflectance values for a {size}x{size}x{bands} chip, got {}",
                bands * size * size,
                reflectance.len()
            )));
        }
        if !center_lon.is_finite() || !center_lat.is_finite() || !pixel_pitch.is_finite() {
            return Err(Error::Data("chip georeference must be finite".into()));
        }
        for (i, v) in reflectance.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Data(format!(
                    "reflectance {v} at flat index {i} outside [0, 1]"
                )));
            }
        }
        Ok(ImageChip {
            size,
            bands,
            center_lon,
            center_lat,
            pixel_pitch,
            reflectance,
        })
    }

    pub fn reflectance(&self) -> &[f64] {
        &self.reflectance
    }

    pub fn value(&self, band: usize, row: usize, col: usize) -> f64 {
        self.reflectance[(band * self.size + row) * self.size + col]
    }

    /// Center coordinates of pixel (row, col); row 0 is the northern edge
    /// and the middle pixel sits exactly on (center_lon, center_lat).
    pub fn pixel_coord(&self, row: usize, col: usize) -> (f64, f64) {
        let mid = (self.size / 2) as f64;
        let lon = self.center_lon + (col as f64 - mid) * self.pixel_pitch;
        let lat = self.center_lat - (row as f64 - mid) * self.pixel_pitch;
        (lon, lat)
    }

    /// Odd-sized center crop sharing the same center pixel.
    pub fn center_crop(&self, size: usize) -> Result<ImageChip> {
        if size > self.size {
            return Err(Error::Data(format!(
                "cannot crop {size}x{size} out of a {0}x{0} chip",
                self.size
            )));
        }
        if size % 2 == 0 || size == 0 {
            return Err(Error::Data(format!("crop size must be odd, got {size}")));
        }
        let offset = (self.size - size) / 2;
        let mut reflectance = Vec::with_capacity(self.bands * size * size);
        for band in 0..self.bands {
            for row in 0..size {
                for col in 0..size {
                    reflectance.push(self.value(band, row + offset, col + offset));
                }
            }
        }
        ImageChip::new(
            size,
            self.bands,
            self.center_lon,
            self.center_lat,
            self.pixel_pitch,
            reflectance,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.size as u64).to_le_bytes())?;
        w.write_all(&(self.bands as u64).to_le_bytes())?;
        w.write_all(&self.center_lon.to_le_bytes())?;
        w.write_all(&self.center_lat.to_le_bytes())?;
        w.write_all(&self.pixel_pitch.to_le_bytes())?;
        for v in &self.reflectance {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ImageChip> {
        let format_err = |offset: u64, message: String| Error::Format {
            path: path.display().to_string(),
            offset,
            message,
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| format_err(0, "file shorter than magic string".into()))?;
        if &magic != MAGIC {
            return Err(format_err(0, format!("bad magic {magic:?}")));
        }
        let mut u = [0u8; 8];
        let mut read_u64 = |r: &mut BufReader<File>, offset: u64| -> Result<u64> {
            r.read_exact(&mut u)
                .map_err(|_| format_err(offset, "truncated header".into()))?;
            Ok(u64::from_le_bytes(u))
        };
        let size = read_u64(&mut r, 8)? as usize;
        let bands = read_u64(&mut r, 16)? as usize;
        let mut f = [0u8; 8];
        let mut read_f64 = |r: &mut BufReader<File>, offset: u64| -> Result<f64> {
            r.read_exact(&mut f)
                .map_err(|_| format_err(offset, "truncated header".into()))?;
            Ok(f64::from_le_bytes(f))
        };
        let center_lon = read_f64(&mut r, 24)?;
        let center_lat = read_f64(&mut r, 32)?;
        let pixel_pitch = read_f64(&mut r, 40)?;

        let count = bands
            .checked_mul(size * size)
            .ok_or_else(|| format_err(8, format!("implausible dimensions {size}x{size}x{bands}")))?;
        let mut reflectance = vec![0.0f64; count];
        let mut buf = [0u8; 8];
        for (i, v) in reflectance.iter_mut().enumerate() {
            r.read_exact(&mut buf)
                .map_err(|_| format_err(48 + (i * 8) as u64, "truncated payload".into()))?;
            *v = f64::from_le_bytes(buf);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(format_err(
                48 + (count * 8) as u64,
                "trailing bytes after payload".into(),
            ));
        }
        ImageChip::new(size, bands, center_lon, center_lat, pixel_pitch, reflectance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    fn sample_chip() -> ImageChip {
        let mut rng = RngStream::new(9, 0);
        let reflectance: Vec<f64> = (0..6 * 9).map(|_| rng.uniform(0.0, 1.0)).collect();
        ImageChip::new(3, 6, 151.2, -33.9, PIXEL_PITCH_30M, reflectance).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let chip = sample_chip();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.chip");
        chip.save(&path).unwrap();
        let back = ImageChip::load(&path).unwrap();
        assert_eq!(back.size, chip.size);
        assert_eq!(back.center_lon.to_bits(), chip.center_lon.to_bits());
        for (a, b) in chip.reflectance().iter().zip(back.reflectance()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupted_magic_names_the_offset() {
        let chip = sample_chip();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.chip");
        chip.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match ImageChip::load(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_reflectance_rejected() {
        let mut data = vec![0.5; 6 * 9];
        data[10] = 1.5;
        assert!(ImageChip::new(3, 6, 0.0, 0.0, PIXEL_PITCH_30M, data).is_err());
        let mut nan = vec![0.5; 6 * 9];
        nan[0] = f64::NAN;
        assert!(ImageChip::new(3, 6, 0.0, 0.0, PIXEL_PITCH_30M, nan).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let chip = sample_chip();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.chip");
        chip.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            ImageChip::load(&path).unwrap_err(),
            Error::Format { .. }
        ));
    }

    #[test]
    fn center_pixel_sits_on_the_sample_coordinate() {
        let chip = sample_chip();
        assert_eq!(chip.pixel_coord(1, 1), (151.2, -33.9));
        let (lon_east, _) = chip.pixel_coord(1, 2);
        assert!(lon_east > 151.2);
        let (_, lat_south) = chip.pixel_coord(2, 1);
        assert!(lat_south < -33.9);
    }

    #[test]
    fn center_crop_keeps_center_values() {
        let mut rng = RngStream::new(10, 0);
        let reflectance: Vec<f64> = (0..6 * 81).map(|_| rng.uniform(0.0, 1.0)).collect();
        let chip = ImageChip::new(9, 6, 140.0, -20.0, PIXEL_PITCH_30M, reflectance).unwrap();
        let crop = chip.center_crop(3).unwrap();
        assert_eq!(crop.size, 3);
        for band in 0..6 {
            for row in 0..3 {
                for col in 0..3 {
                    assert_eq!(crop.value(band, row, col), chip.value(band, row + 3, col + 3));
                }
            }
        }
        let single = chip.center_crop(1).unwrap();
        assert_eq!(single.value(0, 0, 0), chip.value(0, 4, 4));
        assert!(chip.center_crop(4).is_err());
        assert!(chip.center_crop(11).is_err());
    }
}
