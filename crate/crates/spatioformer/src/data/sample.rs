//! Survey sample records and their CSV interchange format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub year: i32,
    pub richness: f64,
    pub chip_path: String,
}

impl SampleRecord {
    pub fn validate(&self, year_range: (i32, i32)) -> Result<()> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(Error::Data(format!(
                "sample {}: non-finite coordinates ({}, {})",
                self.id, self.lon, self.lat
            )));
        }
        if !(self.richness >= 0.0) {
            return Err(Error::Data(format!(
                "sample {}: richness {} must be non-negative",
                self.id, self.richness
            )));
        }
        if self.year < year_range.0 || self.year > year_range.1 {
            return Err(Error::Data(format!(
                "sample {}: year {} outside {}..={}",
                self.id, self.year, year_range.0, year_range.1
            )));
        }
        Ok(())
    }
}

pub const DEFAULT_YEAR_RANGE: (i32, i32) = (1900, 2100);

pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut samples = Vec::new();
    for row in reader.deserialize() {
        let record: SampleRecord = row?;
        record.validate(DEFAULT_YEAR_RANGE)?;
        samples.push(record);
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: no samples", path.display())));
    }
    Ok(samples)
}

pub fn write_samples(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for s in samples {
        writer.serialize(s)?;
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, richness: f64) -> SampleRecord {
        SampleRecord {
            id: id.to_string(),
            lon: 145.0,
            lat: -37.0,
            year: 2015,
            richness,
            chip_path: format!("chips/{id}.chip"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let samples = vec![record("a", 12.0), record("b", 0.0), record("c", 31.5)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        write_samples(&path, &samples).unwrap();
        let back = read_samples(&path).unwrap();
        assert_eq!(samples, back);
    }

    #[test]
    fn negative_richness_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        write_samples(&path, &[record("bad", -1.0)]).unwrap();
        assert!(read_samples(&path).is_err());
    }

    #[test]
    fn implausible_year_rejected() {
        let mut r = record("old", 5.0);
        r.year = 1512;
        assert!(r.validate(DEFAULT_YEAR_RANGE).is_err());
        r.year = 2015;
        assert!(r.validate(DEFAULT_YEAR_RANGE).is_ok());
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        write_samples(&path, &[]).unwrap();
        assert!(read_samples(&path).is_err());
    }
}
