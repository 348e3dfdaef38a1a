//! Spatial block splitting: whole tiles, not individual samples, are
//! assigned to train/val/test so that nearby (spatially autocorrelated)
//! samples never straddle a split boundary.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::sample::SampleRecord;
use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;

/// Fixed-degree tiling of the plane. 100 km is approximated as 0.9
/// degrees of latitude; the longitude width is configurable since the
/// ground distance per degree varies with latitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub tile_width: f64,
    pub tile_height: f64,
}

impl Default for TileGrid {
    fn default() -> Self {
        TileGrid {
            origin_lon: 0.0,
            origin_lat: 0.0,
            tile_width: 1.0,
            tile_height: 0.9,
        }
    }
}

impl TileGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.tile_width > 0.0) || !(self.tile_height > 0.0) {
            return Err(Error::Config(format!(
                "tile dimensions must be positive, got {} x {}",
                self.tile_width, self.tile_height
            )));
        }
        Ok(())
    }

    /// Every coordinate maps to exactly one tile (floor semantics).
    pub fn index(&self, lon: f64, lat: f64) -> (i64, i64) {
        let i = ((lon - self.origin_lon) / self.tile_width).floor() as i64;
        let j = ((lat - self.origin_lat) / self.tile_height).floor() as i64;
        (i, j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub grid: TileGrid,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
    /// Tile index -> split, ordered for stable serialization. JSON maps
    /// need string keys, so the map travels as a list of (i, j, split)
    /// rows.
    #[serde(serialize_with = "tiles_to_rows", deserialize_with = "tiles_from_rows")]
    tiles: BTreeMap<(i64, i64), Split>,
}

fn tiles_to_rows<S: serde::Serializer>(
    tiles: &BTreeMap<(i64, i64), Split>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<(i64, i64, Split)> = tiles.iter().map(|(&(i, j), &s)| (i, j, s)).collect();
    rows.serialize(ser)
}

fn tiles_from_rows<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<BTreeMap<(i64, i64), Split>, D::Error> {
    let rows: Vec<(i64, i64, Split)> = Vec::deserialize(de)?;
    Ok(rows.into_iter().map(|(i, j, s)| ((i, j), s)).collect())
}

impl SplitAssignment {
    pub fn split_of_tile(&self, tile: (i64, i64)) -> Option<Split> {
        self.tiles.get(&tile).copied()
    }

    pub fn split_of(&self, lon: f64, lat: f64) -> Option<Split> {
        self.split_of_tile(self.grid.index(lon, lat))
    }

    pub fn tile_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for split in self.tiles.values() {
            match split {
                Split::Train => counts.0 += 1,
                Split::Val => counts.1 += 1,
                Split::Test => counts.2 += 1,
            }
        }
        counts
    }

    /// Partition samples by their tile's split. Samples in tiles the
    /// assignment has never seen are rejected.
    pub fn partition<'a>(
        &self,
        samples: &'a [SampleRecord],
    ) -> Result<(Vec<&'a SampleRecord>, Vec<&'a SampleRecord>, Vec<&'a SampleRecord>)> {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for s in samples {
            match self.split_of(s.lon, s.lat) {
                Some(Split::Train) => out.0.push(s),
                Some(Split::Val) => out.1.push(s),
                Some(Split::Test) => out.2.push(s),
                None => {
                    return Err(Error::Data(format!(
                        "sample {} falls in tile {:?} with no split assignment",
                        s.id,
                        self.grid.index(s.lon, s.lat)
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SplitAssignment> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Shuffle the non-empty tiles with the seed and cut them by the
/// fractions, rounding each boundary to the nearest tile.
pub fn split_by_tiles(
    samples: &[SampleRecord],
    grid: TileGrid,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("cannot split an empty sample set".into()));
    }
    let sum = fractions.0 + fractions.1 + fractions.2;
    if (sum - 1.0).abs() > 1e-9 || fractions.0 < 0.0 || fractions.1 < 0.0 || fractions.2 < 0.0 {
        return Err(Error::Config(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }

    let mut occupied: Vec<(i64, i64)> = samples
        .iter()
        .map(|s| grid.index(s.lon, s.lat))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    occupied.sort();

    let mut rng = RngStream::new(seed, 0);
    rng.shuffle(&mut occupied);

    let n = occupied.len();
    let n_train = (n as f64 * fractions.0).round() as usize;
    let n_val = ((n as f64 * fractions.1).round() as usize).min(n - n_train);

    let mut tiles = BTreeMap::new();
    for (pos, tile) in occupied.into_iter().enumerate() {
        let split = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        tiles.insert(tile, split);
    }

    let assignment = SplitAssignment {
        grid,
        fractions,
        seed,
        tiles,
    };
    let (t, v, e) = assignment.tile_counts();
    if t == 0 || v == 0 || e == 0 {
        log::warn!("degenerate split: {t} train / {v} val / {e} test tiles");
    }
    Ok(assignment)
}

/// Hard gate run before training: the two sets must not share sample ids
/// or tiles.
pub fn check_leakage(
    grid: &TileGrid,
    a: &[&SampleRecord],
    b: &[&SampleRecord],
    label: &str,
) -> Result<()> {
    let ids_a: HashSet<&str> = a.iter().map(|s| s.id.as_str()).collect();
    for s in b {
        if ids_a.contains(s.id.as_str()) {
            return Err(Error::Data(format!(
                "leakage: sample {} appears in both {label} sets",
                s.id
            )));
        }
    }
    let tiles_a: HashSet<(i64, i64)> = a.iter().map(|s| grid.index(s.lon, s.lat)).collect();
    for s in b {
        let tile = grid.index(s.lon, s.lat);
        if tiles_a.contains(&tile) {
            return Err(Error::Data(format!(
                "leakage: tile {tile:?} contributes samples to both {label} sets"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_at(id: usize, lon: f64, lat: f64) -> SampleRecord {
        SampleRecord {
            id: format!("s{id}"),
            lon,
            lat,
            year: 2015,
            richness: 10.0,
            chip_path: String::new(),
        }
    }

    /// One sample per tile on an nx-by-ny grid of tile centers.
    fn one_sample_per_tile(grid: &TileGrid, nx: usize, ny: usize) -> Vec<SampleRecord> {
        let mut samples = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                samples.push(sample_at(
                    i * ny + j,
                    grid.origin_lon + (i as f64 + 0.5) * grid.tile_width,
                    grid.origin_lat + (j as f64 + 0.5) * grid.tile_height,
                ));
            }
        }
        samples
    }

    #[test]
    fn tiling_is_a_partition() {
        let grid = TileGrid::default();
        assert_eq!(grid.index(0.0, 0.0), (0, 0));
        assert_eq!(grid.index(-0.001, 0.0), (-1, 0));
        assert_eq!(grid.index(0.999, 0.89), (0, 0));
        assert_eq!(grid.index(1.0, 0.9), (1, 1));
        assert_eq!(grid.index(151.2, -33.9), (151, -38));
    }

    #[test]
    fn survey_scale_tile_counts() {
        // 958 occupied tiles at (0.8, 0.1, 0.1) must cut 766/96/96.
        let grid = TileGrid::default();
        let samples = one_sample_per_tile(&grid, 479, 2);
        assert_eq!(samples.len(), 958);
        let assignment = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(assignment.tile_counts(), (766, 96, 96));
    }

    #[test]
    fn same_seed_reproduces_the_assignment() {
        let grid = TileGrid::default();
        let samples = one_sample_per_tile(&grid, 20, 10);
        let a = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 99).unwrap();
        let b = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 99).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 100).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn partition_is_disjoint_and_tile_pure() {
        let grid = TileGrid::default();
        let mut samples = one_sample_per_tile(&grid, 12, 8);
        // Densify: several samples per tile.
        let extra: Vec<SampleRecord> = samples
            .iter()
            .enumerate()
            .map(|(k, s)| sample_at(1000 + k, s.lon + 0.1, s.lat + 0.1))
            .collect();
        samples.extend(extra);
        let assignment = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 3).unwrap();
        let (train, val, test) = assignment.partition(&samples).unwrap();
        assert_eq!(train.len() + val.len() + test.len(), samples.len());

        let ids: HashSet<&str> = train
            .iter()
            .chain(&val)
            .chain(&test)
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(ids.len(), samples.len());

        for (set_a, set_b, label) in [
            (&train, &val, "train/val"),
            (&train, &test, "train/test"),
            (&val, &test, "val/test"),
        ] {
            check_leakage(&grid, set_a, set_b, label).unwrap();
        }
    }

    #[test]
    fn single_tile_degenerates_with_warning() {
        let grid = TileGrid::default();
        let samples: Vec<SampleRecord> = (0..5)
            .map(|k| sample_at(k, 0.2 + 0.01 * k as f64, 0.3))
            .collect();
        let assignment = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 1).unwrap();
        let (train, val, test) = assignment.partition(&samples).unwrap();
        assert_eq!(train.len(), 5);
        assert!(val.is_empty() && test.is_empty());
    }

    #[test]
    fn bad_fractions_rejected() {
        let grid = TileGrid::default();
        let samples = one_sample_per_tile(&grid, 2, 2);
        assert!(split_by_tiles(&samples, grid, (0.5, 0.2, 0.2), 1).is_err());
        assert!(split_by_tiles(&samples, grid, (1.2, -0.1, -0.1), 1).is_err());
        assert!(split_by_tiles(&[], grid, (0.8, 0.1, 0.1), 1).is_err());
    }

    #[test]
    fn leakage_check_catches_shared_tile() {
        let grid = TileGrid::default();
        let a = sample_at(0, 0.2, 0.2);
        let b = sample_at(1, 0.3, 0.3);
        let err = check_leakage(&grid, &[&a], &[&b], "train/val").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn assignment_round_trips_through_json() {
        let grid = TileGrid::default();
        let samples = one_sample_per_tile(&grid, 6, 5);
        let assignment = split_by_tiles(&samples, grid, (0.8, 0.1, 0.1), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        assignment.save(&path).unwrap();
        let back = SplitAssignment::load(&path).unwrap();
        assert_eq!(back.tile_counts(), assignment.tile_counts());
        for s in &samples {
            assert_eq!(back.split_of(s.lon, s.lat), assignment.split_of(s.lon, s.lat));
        }
    }
}
