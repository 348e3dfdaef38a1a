//! Gridded raster values over a geographic bounding box, with a binary
//! file format and PNG rendering for inspection.
//!
//! Grids are row-major with row 0 at the northern edge. A cell value of
//! NaN means masked. File layout: the magic string "RAST0001", a
//! little-endian u64 header length, a UTF-8 JSON header (geometry, band,
//! tag), then width*height little-endian f64 values. Payload bits are
//! preserved exactly, including NaN patterns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RAST0001";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl Bbox {
    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<Bbox> {
        let b = Bbox {
            west,
            south,
            east,
            north,
        };
        if ![west, south, east, north].iter().all(|v| v.is_finite()) || east <= west || north <= south
        {
            return Err(Error::Config(format!("degenerate bounding box {b:?}")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.east - self.west
    }

    pub fn height(&self) -> f64 {
        self.north - self.south
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.west && lon <= self.east && lat >= self.south && lat <= self.north
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    pub bbox: Bbox,
    pub cell_size: f64,
    pub band: String,
    pub tag: String,
    values: Vec<f64>,
}

impl RasterGrid {
    /// A fully masked grid spanning `bbox` at `cell_size` degrees per cell.
    /// The box extents must agree with a whole number of cells to within
    /// half a cell on each axis.
    pub fn masked(bbox: Bbox, cell_size: f64, band: &str, tag: &str) -> Result<RasterGrid> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::Config(format!("invalid cell size {cell_size}")));
        }
        let width = (bbox.width() / cell_size).round() as usize;
        let height = (bbox.height() / cell_size).round() as usize;
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "bounding box {bbox:?} smaller than one {cell_size}-degree cell"
            )));
        }
        let grid = RasterGrid {
            width,
            height,
            bbox,
            cell_size,
            band: band.to_string(),
            tag: tag.to_string(),
            values: vec![f64::NAN; width * height],
        };
        grid.check_geometry()?;
        Ok(grid)
    }

    pub fn from_values(
        bbox: Bbox,
        cell_size: f64,
        band: &str,
        tag: &str,
        values: Vec<f64>,
    ) -> Result<RasterGrid> {
        let mut grid = RasterGrid::masked(bbox, cell_size, band, tag)?;
        if values.len() != grid.width * grid.height {
            return Err(Error::Config(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.width * grid.height,
                grid.width,
                grid.height,
                values.len()
            )));
        }
        grid.values = values;
        Ok(grid)
    }

    fn check_geometry(&self) -> Result<()> {
        let half = self.cell_size / 2.0;
        let lon_err = (self.bbox.west + self.width as f64 * self.cell_size - self.bbox.east).abs();
        let lat_err = (self.bbox.south + self.height as f64 * self.cell_size - self.bbox.north).abs();
        if lon_err > half || lat_err > half {
            return Err(Error::Config(format!(
                "bounding box {:?} does not align with {} cells of {} degrees",
                self.bbox,
                self.width.max(self.height),
                self.cell_size
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_nan()
    }

    /// Geographic coordinates of the cell center; row 0 touches the
    /// northern edge.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let lon = self.bbox.west + (col as f64 + 0.5) * self.cell_size;
        let lat = self.bbox.north - (row as f64 + 0.5) * self.cell_size;
        (lon, lat)
    }

    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bbox == other.bbox
            && self.cell_size == other.cell_size
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            width: self.width,
            height: self.height,
            bbox: self.bbox,
            cell_size: self.cell_size,
            band: self.band.clone(),
            tag: self.tag.clone(),
        })?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RasterGrid> {
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
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)
            .map_err(|_| format_err(8, "truncated header length".into()))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)
            .map_err(|_| format_err(16, "truncated header".into()))?;
        let header: Header = serde_json::from_slice(&header_bytes)?;

        let payload_start = 16 + header_len as u64;
        let count = header.width * header.height;
        let mut values = vec![0.0f64; count];
        let mut buf = [0u8; 8];
        for (i, v) in values.iter_mut().enumerate() {
            r.read_exact(&mut buf)
                .map_err(|_| format_err(payload_start + (i * 8) as u64, "truncated payload".into()))?;
            *v = f64::from_le_bytes(buf);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(format_err(
                payload_start + (count * 8) as u64,
                "trailing bytes after payload".into(),
            ));
        }
        RasterGrid::from_values(header.bbox, header.cell_size, &header.band, &header.tag, values)
    }

    /// Render to an 8-bit PNG. Finite values are normalized over their
    /// observed range and mapped through a fixed five-stop color ramp
    /// (dark violet, low, through yellow, high); masked cells come out
    /// fully transparent. `grayscale` maps the normalized value straight
    /// to luminance instead.
    pub fn write_png(&self, path: &Path, grayscale: bool) -> Result<()> {
        let finite: Vec<f64> = self.values.iter().copied().filter(|v| v.is_finite()).collect();
        let (lo, hi) = finite
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut img = image::RgbaImage::new(self.width as u32, self.height as u32);
        for row in 0..self.height {
            for col in 0..self.width {
                let v = self.get(row, col);
                let pixel = if v.is_finite() {
                    let t = ((v - lo) / span).clamp(0.0, 1.0);
                    if grayscale {
                        let g = (t * 255.0).round() as u8;
                        image::Rgba([g, g, g, 255])
                    } else {
                        let [r, g, b] = ramp(t);
                        image::Rgba([r, g, b, 255])
                    }
                } else {
                    image::Rgba([0, 0, 0, 0])
                };
                img.put_pixel(col as u32, row as u32, pixel);
            }
        }
        img.save(path)
            .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Stack of grids with identical geometry: input scene bands, or one
/// prediction grid per year.
#[derive(Clone, Debug)]
pub struct RasterStack {
    grids: Vec<RasterGrid>,
}

impl RasterStack {
    pub fn new(grids: Vec<RasterGrid>) -> Result<RasterStack> {
        if grids.is_empty() {
            return Err(Error::Config("raster stack needs at least one grid".into()));
        }
        for g in &grids[1..] {
            if !g.same_geometry(&grids[0]) {
                return Err(Error::Config(format!(
                    "grid geometry mismatch in stack: {:?} vs {:?}",
                    (grids[0].width, grids[0].height, grids[0].bbox),
                    (g.width, g.height, g.bbox),
                )));
            }
        }
        Ok(RasterStack { grids })
    }

    pub fn grids(&self) -> &[RasterGrid] {
        &self.grids
    }

    /// Mutable access to the member grids for value edits; the shared
    /// geometry was checked at construction and must stay untouched.
    pub fn grids_mut(&mut self) -> &mut [RasterGrid] {
        &mut self.grids
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.grids[0].width
    }

    pub fn height(&self) -> usize {
        self.grids[0].height
    }

    pub fn geometry(&self) -> &RasterGrid {
        &self.grids[0]
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    width: usize,
    height: usize,
    bbox: Bbox,
    cell_size: f64,
    band: String,
    tag: String,
}

fn ramp(t: f64) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.00, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.50, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.00, [253.0, 231.0, 37.0]),
    ];
    let mut rgb = STOPS[4].1;
    for w in STOPS.windows(2) {
        let ((t0, c0), (t1, c1)) = (w[0], w[1]);
        if t >= t0 && t <= t1 {
            let f = (t - t0) / (t1 - t0);
            rgb = [
                c0[0] + f * (c1[0] - c0[0]),
                c0[1] + f * (c1[1] - c0[1]),
                c0[2] + f * (c1[2] - c0[2]),
            ];
            break;
        }
    }
    [
        rgb[0].round() as u8,
        rgb[1].round() as u8,
        rgb[2].round() as u8,
    ]
}
