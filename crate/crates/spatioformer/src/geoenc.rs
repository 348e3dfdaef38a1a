//! Multi-scale sinusoidal encoding of geographic coordinates.
//!
//! A location (lon, lat) in degrees maps to a d-dimensional token whose
//! element j (1-based) is
//!
//!   sin(lon/w_j) + sin(lat/v_j)   for even j
//!   cos(lon/w_j) + cos(lat/v_j)   for odd j
//!
//! with wavelengths w_j = a*c^(j/d) and v_j = a*c^((d-j)/d). Longitude
//! wavelengths grow with j while latitude wavelengths shrink, so every
//! token mixes fine and coarse structure on both axes. The encoding is
//! fixed (not learned) and defined for all finite coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Bbox, RasterGrid};

/// Optional affine change of coordinates applied before encoding, for
/// reuse outside plain-degree workflows. Identity by default.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoordTransform {
    pub lon_scale: f64,
    pub lon_offset: f64,
    pub lat_scale: f64,
    pub lat_offset: f64,
}

impl Default for CoordTransform {
    fn default() -> Self {
        CoordTransform {
            lon_scale: 1.0,
            lon_offset: 0.0,
            lat_scale: 1.0,
            lat_offset: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GeoEncoderConfig {
    pub d: usize,
    pub a: f64,
    pub c: f64,
    #[serde(default)]
    pub pre_transform: Option<CoordTransform>,
}

impl Default for GeoEncoderConfig {
    fn default() -> Self {
        GeoEncoderConfig {
            d: 16,
            a: 1.0,
            c: 100.0,
            pre_transform: None,
        }
    }
}

impl GeoEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.d % 2 != 0 {
            return Err(Error::Config(format!(
                "encoder dimension must be even and at least 2, got {}",
                self.d
            )));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Config(format!("encoder scale a must be positive, got {}", self.a)));
        }
        if !(self.c > 1.0) || !self.c.is_finite() {
            return Err(Error::Config(format!(
                "encoder base c must be greater than 1, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Longitude wavelength of (1-based) layer j.
    pub fn lon_wavelength(&self, j: usize) -> f64 {
        self.a * self.c.powf(j as f64 / self.d as f64)
    }

    /// Latitude wavelength of (1-based) layer j.
    pub fn lat_wavelength(&self, j: usize) -> f64 {
        self.a * self.c.powf((self.d - j) as f64 / self.d as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoToken {
    pub values: Vec<f64>,
}

impl GeoToken {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn encode(cfg: &GeoEncoderConfig, lon: f64, lat: f64) -> Result<GeoToken> {
    cfg.validate()?;
    if !lon.is_finite() || !lat.is_finite() {
        return Err(Error::NonFinite(format!(
            "coordinates must be finite, got ({lon}, {lat})"
        )));
    }
    let (lon, lat) = match cfg.pre_transform {
        Some(t) => (lon * t.lon_scale + t.lon_offset, lat * t.lat_scale + t.lat_offset),
        None => (lon, lat),
    };
    let mut values = Vec::with_capacity(cfg.d);
    for j in 1..=cfg.d {
        let w = cfg.lon_wavelength(j);
        let v = cfg.lat_wavelength(j);
        values.push(if j % 2 == 0 {
            (lon / w).sin() + (lat / v).sin()
        } else {
            (lon / w).cos() + (lat / v).cos()
        });
    }
    Ok(GeoToken { values })
}

/// Sample one encoding layer over a bounding box at `resolution` degrees
/// per cell, evaluated at cell centers.
pub fn render_layer(
    cfg: &GeoEncoderConfig,
    j: usize,
    bbox: Bbox,
    resolution: f64,
) -> Result<RasterGrid> {
    cfg.validate()?;
    if j < 1 || j > cfg.d {
        return Err(Error::Config(format!(
            "layer index {j} outside 1..={}",
            cfg.d
        )));
    }
    let mut grid = RasterGrid::masked(bbox, resolution, &format!("g{j}"), "encoding")?;
    for row in 0..grid.height {
        for col in 0..grid.width {
            let (lon, lat) = grid.cell_center(row, col);
            let token = encode(cfg, lon, lat)?;
            grid.set(row, col, token.values[j - 1]);
        }
    }
    Ok(grid)
}

/// Minimum Euclidean distance between tokens over all point pairs at
/// least `min_separation` degrees apart. Infinity if no pair qualifies.
pub fn distinctiveness(
    cfg: &GeoEncoderConfig,
    points: &[(f64, f64)],
    min_separation: f64,
) -> Result<f64> {
    cfg.validate()?;
    if points.len() < 2 {
        return Err(Error::Config(format!(
            "distinctiveness needs at least 2 points, got {}",
            points.len()
        )));
    }
    let tokens: Vec<GeoToken> = points
        .iter()
        .map(|&(lon, lat)| encode(cfg, lon, lat))
        .collect::<Result<_>>()?;
    let mut min_dist = f64::INFINITY;
    for i in 0..points.len() {
        for k in i + 1..points.len() {
            let (dx, dy) = (points[i].0 - points[k].0, points[i].1 - points[k].1);
            if (dx * dx + dy * dy).sqrt() < min_separation {
                continue;
            }
            let dist = tokens[i]
                .values
                .iter()
                .zip(&tokens[k].values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(dist);
        }
    }
    Ok(min_dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    fn default_cfg() -> GeoEncoderConfig {
        GeoEncoderConfig::default()
    }

    const AUSTRALIA: (f64, f64, f64, f64) = (112.0, -44.0, 154.0, -10.0);

    #[test]
    fn origin_alternates_two_and_zero() {
        let token = encode(&default_cfg(), 0.0, 0.0).unwrap();
        for (i, v) in token.values.iter().enumerate() {
            let j = i + 1;
            if j % 2 == 0 {
                assert_eq!(*v, 0.0);
            } else {
                assert_eq!(*v, 2.0);
            }
        }
    }

    #[test]
    fn matches_scalar_oracle_at_sydney() {
        // Computed by a standalone scalar script evaluating the encoding
        // element by element at (151.2, -33.9) with d=16, a=1, c=100.
        let expected = [
            1.8587386051595818,
            -0.7685966604045347,
            1.2928158555453475,
            -1.5145079290965993,
            -0.12898525203245917,
            0.03887869805278543,
            -0.5709736190873432,
            0.8005279708843397,
            0.14557171661429813,
            1.0489880724341298,
            0.8117688829595281,
            -0.03532009574540107,
            -1.0607568072803135,
            0.22532625385306906,
            0.5277242678595098,
            0.3871168476120994,
        ];
        let token = encode(&default_cfg(), 151.2, -33.9).unwrap();
        for (got, want) in token.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn all_elements_bounded_by_two() {
        let cfg = default_cfg();
        let mut rng = RngStream::new(77, 0);
        for _ in 0..500 {
            let lon = rng.uniform(-1e6, 1e6);
            let lat = rng.uniform(-1e6, 1e6);
            let token = encode(&cfg, lon, lat).unwrap();
            for v in &token.values {
                assert!((-2.0..=2.0).contains(v), "element {v} out of range");
            }
        }
    }

    #[test]
    fn even_elements_are_odd_functions_of_lon_at_equator() {
        let cfg = default_cfg();
        let mut rng = RngStream::new(78, 0);
        for _ in 0..100 {
            let lon = rng.uniform(-500.0, 500.0);
            let pos = encode(&cfg, lon, 0.0).unwrap();
            let neg = encode(&cfg, -lon, 0.0).unwrap();
            for j in (2..=cfg.d).step_by(2) {
                assert!((pos.values[j - 1] + neg.values[j - 1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wavelength_ladder_is_monotone() {
        let cfg = default_cfg();
        for j in 1..cfg.d {
            assert!(cfg.lon_wavelength(j + 1) > cfg.lon_wavelength(j));
            assert!(cfg.lat_wavelength(j + 1) < cfg.lat_wavelength(j));
        }
    }

    #[test]
    fn rejects_bad_configs_and_coordinates() {
        let cfg = default_cfg();
        assert!(encode(&cfg, f64::NAN, 0.0).is_err());
        assert!(encode(&cfg, 0.0, f64::INFINITY).is_err());
        assert!(encode(&GeoEncoderConfig { d: 7, ..cfg }, 0.0, 0.0).is_err());
        assert!(encode(&GeoEncoderConfig { d: 0, ..cfg }, 0.0, 0.0).is_err());
        assert!(encode(&GeoEncoderConfig { a: 0.0, ..cfg }, 0.0, 0.0).is_err());
        assert!(encode(&GeoEncoderConfig { c: 1.0, ..cfg }, 0.0, 0.0).is_err());
    }

    #[test]
    fn encode_is_deterministic() {
        let cfg = default_cfg();
        let a = encode(&cfg, 133.7, -25.3).unwrap();
        let b = encode(&cfg, 133.7, -25.3).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn pre_transform_shifts_the_input() {
        let cfg = GeoEncoderConfig {
            pre_transform: Some(CoordTransform {
                lon_offset: 10.0,
                ..CoordTransform::default()
            }),
            ..default_cfg()
        };
        let shifted = encode(&cfg, 5.0, 3.0).unwrap();
        let direct = encode(&default_cfg(), 15.0, 3.0).unwrap();
        assert_eq!(shifted, direct);
    }

    #[test]
    fn identical_points_have_zero_distinctiveness() {
        let cfg = default_cfg();
        let d = distinctiveness(&cfg, &[(151.2, -33.9), (151.2, -33.9)], 0.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn aliasing_pair_collapses_small_config_but_not_default() {
        // With d=2, a=1, c=4 the two wavelengths are 2 and 4, so shifting
        // longitude by 8*pi leaves every layer unchanged: the points are
        // ~25 degrees apart yet share a token. The d=16 ladder has no
        // common period there and keeps them apart.
        let small = GeoEncoderConfig {
            d: 2,
            a: 1.0,
            c: 4.0,
            pre_transform: None,
        };
        let pts = [(0.0, 5.0), (8.0 * std::f64::consts::PI, 5.0)];
        let collapsed = distinctiveness(&small, &pts, 1.0).unwrap();
        assert!(collapsed < 1e-9, "aliased pair should share a token, got {collapsed}");
        let separated = distinctiveness(&default_cfg(), &pts, 1.0).unwrap();
        assert!(separated > 1e-3, "default ladder should break the alias, got {separated}");
    }

    #[test]
    fn thousand_point_sample_stays_distinct() {
        let cfg = default_cfg();
        let (w, s, e, n) = AUSTRALIA;
        let mut rng = RngStream::new(404, 0);
        let mut points: Vec<(f64, f64)> = Vec::new();
        while points.len() < 1000 {
            let p = (rng.uniform(w, e), rng.uniform(s, n));
            let ok = points
                .iter()
                .all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= 0.01);
            if ok {
                points.push(p);
            }
        }
        let d = distinctiveness(&cfg, &points, 0.01).unwrap();
        assert!(d > 0.0, "minimum token distance {d} not positive");
    }

    #[test]
    fn render_single_cell_equals_encode_at_center() {
        let cfg = default_cfg();
        let bbox = Bbox::new(150.0, -34.0, 151.0, -33.0).unwrap();
        for j in [1, 2, 15, 16] {
            let grid = render_layer(&cfg, j, bbox, 1.0).unwrap();
            assert_eq!((grid.width, grid.height), (1, 1));
            let token = encode(&cfg, 150.5, -33.5).unwrap();
            assert_eq!(grid.get(0, 0), token.values[j - 1]);
        }
    }

    #[test]
    fn even_layer_on_equator_line_is_pure_lon_sine() {
        let cfg = default_cfg();
        let bbox = Bbox::new(0.0, -0.5, 40.0, 0.5).unwrap();
        let grid = render_layer(&cfg, 2, bbox, 1.0).unwrap();
        for col in 0..grid.width {
            let (lon, _) = grid.cell_center(0, col);
            let expected = (lon / cfg.lon_wavelength(2)).sin();
            assert!((grid.get(0, col) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn first_layer_period_matches_wavelength() {
        // Count mean crossings along one grid row; consecutive crossings
        // of a sinusoid sit half a period apart, so the measured period
        // should come out near 2*pi*w_1 degrees.
        let cfg = default_cfg();
        let (w, s, e, n) = AUSTRALIA;
        let res = 0.05;
        let grid = render_layer(&cfg, 1, Bbox::new(w, s, e, n).unwrap(), res).unwrap();
        let row = grid.height / 2;
        let values: Vec<f64> = (0..grid.width).map(|c| grid.get(row, c)).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let crossings: Vec<usize> = values
            .windows(2)
            .enumerate()
            .filter(|(_, p)| (p[0] - mean).signum() != (p[1] - mean).signum())
            .map(|(i, _)| i)
            .collect();
        assert!(crossings.len() >= 4);
        let gaps: Vec<f64> = crossings.windows(2).map(|p| (p[1] - p[0]) as f64 * res).collect();
        let measured_period = 2.0 * gaps.iter().sum::<f64>() / gaps.len() as f64;
        let expected = 2.0 * std::f64::consts::PI * cfg.lon_wavelength(1);
        assert!(
            (measured_period - expected).abs() / expected < 0.02,
            "measured {measured_period}, expected {expected}"
        );
    }

    #[test]
    fn low_layers_oscillate_along_lon_high_layers_along_lat() {
        let cfg = default_cfg();
        let (w, s, e, n) = AUSTRALIA;
        let bbox = Bbox::new(w, s, e, n).unwrap();
        let crossings = |values: &[f64]| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values
                .windows(2)
                .filter(|p| (p[0] - mean).signum() != (p[1] - mean).signum())
                .count()
        };
        let first = render_layer(&cfg, 1, bbox, 0.5).unwrap();
        let last = render_layer(&cfg, cfg.d, bbox, 0.5).unwrap();
        let row_of = |g: &RasterGrid| (0..g.width).map(|c| g.get(g.height / 2, c)).collect::<Vec<_>>();
        let col_of = |g: &RasterGrid| (0..g.height).map(|r| g.get(r, g.width / 2)).collect::<Vec<_>>();
        assert!(crossings(&row_of(&first)) > crossings(&col_of(&first)));
        assert!(crossings(&col_of(&last)) > crossings(&row_of(&last)));
    }

    #[test]
    fn render_rejects_bad_layer_index() {
        let cfg = default_cfg();
        let bbox = Bbox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(render_layer(&cfg, 0, bbox, 1.0).is_err());
        assert!(render_layer(&cfg, 17, bbox, 1.0).is_err());
    }
}
