//! Sliding-window raster inference and cross-year aggregation.
//!
//! A scene is a six-band `RasterStack` in chip band order. For every
//! unmasked cell a chip-sized window is read around it (edges clamp to
//! the scene border), the model runs on that chip with per-pixel
//! coordinates taken from the raster geometry, and the prediction lands
//! in the output cell. Cells masked in any band stay masked in the
//! output. Work proceeds in bounded tiles so memory stays flat however
//! large the scene is.

use serde::{Deserialize, Serialize};

use crate::data::chip::{ImageChip, BAND_NAMES};
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelKind};
use crate::numerics::params::ParamSet;
use crate::raster::{RasterGrid, RasterStack};
use crate::uncert::{self, UncertaintyConfig};

/// What to substitute when a window overlaps a masked neighbor cell.
/// The substitute only feeds the model input; masked cells themselves
/// never receive predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    /// Band-wise mean over the scene's unmasked cells.
    SceneMean,
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapperOptions {
    /// Output cells processed per tile edge.
    pub tile_size: usize,
    pub mask_fill: MaskFill,
}

impl Default for MapperOptions {
    fn default() -> Self {
        MapperOptions {
            tile_size: 64,
            mask_fill: MaskFill::SceneMean,
        }
    }
}

impl MapperOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::Config("tile size must be positive".into()));
        }
        if let MaskFill::Constant(v) = self.mask_fill {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "mask fill constant {v} outside the reflectance range [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

fn check_scene(cfg: &ModelConfig, scene: &RasterStack) -> Result<()> {
    if scene.len() != cfg.bands {
        return Err(Error::Data(format!(
            "scene has {} bands, the model consumes {}",
            scene.len(),
            cfg.bands
        )));
    }
    for (grid, expected) in scene.grids().iter().zip(BAND_NAMES) {
        if grid.band != expected {
            return Err(Error::Data(format!(
                "scene band \"{}\" where \"{expected}\" was expected; bands must follow chip order",
                grid.band
            )));
        }
    }
    Ok(())
}

fn band_means(scene: &RasterStack) -> Vec<f64> {
    scene
        .grids()
        .iter()
        .map(|g| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for v in g.values() {
                if v.is_finite() {
                    sum += v;
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        })
        .collect()
}

/// Chip centered on one scene cell. Window rows and columns past the
/// border clamp to the border; masked neighbors take the fill value.
fn window_chip(
    scene: &RasterStack,
    fill: &[f64],
    chip_size: usize,
    row: usize,
    col: usize,
) -> Result<ImageChip> {
    let half = (chip_size / 2) as isize;
    let (h, w) = (scene.height() as isize, scene.width() as isize);
    let mut reflectance = Vec::with_capacity(scene.len() * chip_size * chip_size);
    for (b, grid) in scene.grids().iter().enumerate() {
        for dy in -half..=half {
            for dx in -half..=half {
                let r = (row as isize + dy).clamp(0, h - 1) as usize;
                let c = (col as isize + dx).clamp(0, w - 1) as usize;
                let v = grid.get(r, c);
                reflectance.push(if v.is_finite() { v } else { fill[b] });
            }
        }
    }
    let (lon, lat) = scene.geometry().cell_center(row, col);
    ImageChip::new(
        chip_size,
        scene.len(),
        lon,
        lat,
        scene.geometry().cell_size,
        reflectance,
    )
}

fn masked_anywhere(scene: &RasterStack, row: usize, col: usize) -> bool {
    scene.grids().iter().any(|g| g.is_masked(row, col))
}

fn map_cells(
    scene: &RasterStack,
    opts: &MapperOptions,
    band: &str,
    tag: &str,
    chip_size: usize,
    mut predict_cell: impl FnMut(&ImageChip) -> Result<f64>,
) -> Result<RasterGrid> {
    opts.validate()?;
    let fill = match opts.mask_fill {
        MaskFill::SceneMean => band_means(scene),
        MaskFill::Constant(v) => vec![v; scene.len()],
    };
    let geometry = scene.geometry();
    let mut out = RasterGrid::masked(geometry.bbox, geometry.cell_size, band, tag)?;
    let (h, w) = (scene.height(), scene.width());
    for tile_row in (0..h).step_by(opts.tile_size) {
        for tile_col in (0..w).step_by(opts.tile_size) {
            for row in tile_row..(tile_row + opts.tile_size).min(h) {
                for col in tile_col..(tile_col + opts.tile_size).min(w) {
                    if masked_anywhere(scene, row, col) {
                        continue;
                    }
                    let chip = window_chip(scene, &fill, chip_size, row, col)?;
                    out.set(row, col, predict_cell(&chip)?);
                }
            }
        }
    }
    Ok(out)
}

/// Predicted richness for every unmasked scene cell.
pub fn predict_map(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &ModelConfig,
    scene: &RasterStack,
    opts: &MapperOptions,
    tag: &str,
) -> Result<RasterGrid> {
    cfg.validate()?;
    check_scene(cfg, scene)?;
    map_cells(scene, opts, "richness", tag, cfg.chip_size, |chip| {
        model::predict(kind, params, cfg, chip)
    })
}

/// Monte Carlo dropout epsilon for every unmasked scene cell. Every cell
/// uses the same uncertainty seed, so a cell's value equals
/// `mc_uncertainty` on that cell's chip in isolation. Cells whose
/// stochastic mean is zero have no defined epsilon and stay masked.
pub fn uncertainty_map(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &ModelConfig,
    scene: &RasterStack,
    ucfg: &UncertaintyConfig,
    opts: &MapperOptions,
    tag: &str,
) -> Result<RasterGrid> {
    cfg.validate()?;
    check_scene(cfg, scene)?;
    ucfg.validate()?;
    map_cells(scene, opts, "epsilon", tag, cfg.chip_size, |chip| {
        let report = uncert::mc_uncertainty(kind, params, cfg, chip, ucfg)?;
        Ok(report.epsilon.unwrap_or(f64::NAN))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AggregateStat {
    Mean,
    Std,
}

/// Per-cell statistic across a stack of yearly maps, ignoring masked
/// years. Cell values are sorted before summing, so the year order
/// cannot influence the result. A cell is masked when no year covers it;
/// std cells additionally need two covered years.
pub fn aggregate(stack: &RasterStack, stat: AggregateStat) -> Result<RasterGrid> {
    if stat == AggregateStat::Std && stack.len() < 2 {
        return Err(Error::Data(format!(
            "standard deviation needs at least 2 grids, got {}",
            stack.len()
        )));
    }
    let geometry = stack.geometry();
    let tag = match stat {
        AggregateStat::Mean => "mean",
        AggregateStat::Std => "std",
    };
    let mut out = RasterGrid::masked(geometry.bbox, geometry.cell_size, &geometry.band, tag)?;
    let mut cell = Vec::with_capacity(stack.len());
    for row in 0..stack.height() {
        for col in 0..stack.width() {
            cell.clear();
            cell.extend(
                stack
                    .grids()
                    .iter()
                    .map(|g| g.get(row, col))
                    .filter(|v| v.is_finite()),
            );
            cell.sort_by(f64::total_cmp);
            if cell.is_empty() {
                continue;
            }
            let mean = cell.iter().sum::<f64>() / cell.len() as f64;
            let value = match stat {
                AggregateStat::Mean => mean,
                AggregateStat::Std => {
                    if cell.len() < 2 {
                        continue;
                    }
                    let ss: f64 = cell.iter().map(|v| (v - mean) * (v - mean)).sum();
                    (ss / (cell.len() - 1) as f64).sqrt()
                }
            };
            out.set(row, col, value);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Bbox;

    fn uniform_scene(width_deg: f64, level: f64) -> RasterStack {
        let bbox = Bbox::new(130.0, -25.0 - width_deg, 130.0 + width_deg, -25.0).unwrap();
        let grids = BAND_NAMES
            .iter()
            .map(|band| {
                let mut g = RasterGrid::masked(bbox, 0.5, band, "2020").unwrap();
                for v in g.values_mut() {
                    *v = level;
                }
                g
            })
            .collect();
        RasterStack::new(grids).unwrap()
    }

    fn small_cfg(chip_size: usize) -> ModelConfig {
        ModelConfig {
            chip_size,
            head_hidden: 32,
            dropout: 0.0,
            lambda_init: 1.7,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn single_cell_scene_equals_direct_forward() {
        let cfg = small_cfg(1);
        let params = model::init(ModelKind::Vit, &cfg, 3).unwrap();
        let bbox = Bbox::new(130.0, -25.5, 130.5, -25.0).unwrap();
        let grids = BAND_NAMES
            .iter()
            .map(|band| {
                RasterGrid::from_values(bbox, 0.5, band, "2020", vec![0.25]).unwrap()
            })
            .collect();
        let scene = RasterStack::new(grids).unwrap();

        let map = predict_map(
            ModelKind::Vit,
            &params,
            &cfg,
            &scene,
            &MapperOptions::default(),
            "2020",
        )
        .unwrap();
        assert_eq!((map.width, map.height), (1, 1));

        let (lon, lat) = scene.geometry().cell_center(0, 0);
        let chip = ImageChip::new(1, 6, lon, lat, 0.5, vec![0.25; 6]).unwrap();
        let direct = model::predict(ModelKind::Vit, &params, &cfg, &chip).unwrap();
        assert_eq!(map.get(0, 0).to_bits(), direct.to_bits());
    }

    #[test]
    fn geo_aware_map_varies_where_geo_blind_map_is_flat() {
        let cfg = small_cfg(3);
        let scene = uniform_scene(4.0, 0.6);
        let spat = model::init(ModelKind::Spatioformer, &cfg, 5).unwrap();
        let aware = predict_map(
            ModelKind::Spatioformer,
            &spat,
            &cfg,
            &scene,
            &MapperOptions::default(),
            "2020",
        )
        .unwrap();
        let spread = |m: &RasterGrid| {
            let lo = m.values().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = m.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        assert!(spread(&aware) > 1e-6, "uniform pixels, varying coordinates");

        let mut severed = spat.clone();
        severed
            .set("lambda", crate::numerics::tensor::Tensor::scalar(0.0))
            .unwrap();
        let blind = predict_map(
            ModelKind::Spatioformer,
            &severed,
            &cfg,
            &scene,
            &MapperOptions::default(),
            "2020",
        )
        .unwrap();
        assert_eq!(spread(&blind), 0.0);
    }

    #[test]
    fn masked_cells_propagate_and_neighbors_still_predict() {
        let cfg = small_cfg(3);
        let params = model::init(ModelKind::Vit, &cfg, 7).unwrap();
        let mut scene = uniform_scene(3.0, 0.4);
        let masked: Vec<(usize, usize)> = (0..scene.height())
            .flat_map(|r| (0..scene.width()).map(move |c| (r, c)))
            .filter(|(r, c)| (r + c) % 2 == 0)
            .collect();
        {
            let grids = scene.grids_mut();
            for &(r, c) in &masked {
                grids[2].set(r, c, f64::NAN);
            }
        }
        let map = predict_map(
            ModelKind::Vit,
            &params,
            &cfg,
            &scene,
            &MapperOptions::default(),
            "2020",
        )
        .unwrap();
        for r in 0..map.height {
            for c in 0..map.width {
                assert_eq!(map.is_masked(r, c), (r + c) % 2 == 0);
            }
        }
    }

    #[test]
    fn tile_size_never_changes_the_output() {
        let cfg = small_cfg(3);
        let params = model::init(ModelKind::Spatioformer, &cfg, 11).unwrap();
        let scene = uniform_scene(3.0, 0.7);
        let base = predict_map(
            ModelKind::Spatioformer,
            &params,
            &cfg,
            &scene,
            &MapperOptions { tile_size: 64, ..MapperOptions::default() },
            "2020",
        )
        .unwrap();
        for tile_size in [1, 3, 5] {
            let tiled = predict_map(
                ModelKind::Spatioformer,
                &params,
                &cfg,
                &scene,
                &MapperOptions { tile_size, ..MapperOptions::default() },
                "2020",
            )
            .unwrap();
            for (a, b) in base.values().iter().zip(tiled.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn translation_changes_nothing_for_a_geo_blind_model() {
        let cfg = small_cfg(3);
        let params = model::init(ModelKind::Vit, &cfg, 13).unwrap();
        let here = uniform_scene(3.0, 0.55);
        let bbox = Bbox::new(140.0, -38.0, 143.0, -35.0).unwrap();
        let there = RasterStack::new(
            BAND_NAMES
                .iter()
                .map(|band| {
                    let mut g = RasterGrid::masked(bbox, 0.5, band, "2020").unwrap();
                    for v in g.values_mut() {
                        *v = 0.55;
                    }
                    g
                })
                .collect(),
        )
        .unwrap();

        let opts = MapperOptions::default();
        let map_here = predict_map(ModelKind::Vit, &params, &cfg, &here, &opts, "2020").unwrap();
        let map_there = predict_map(ModelKind::Vit, &params, &cfg, &there, &opts, "2020").unwrap();
        for (a, b) in map_here.values().iter().zip(map_there.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let spat = model::init(ModelKind::Spatioformer, &cfg, 13).unwrap();
        let aware_here =
            predict_map(ModelKind::Spatioformer, &spat, &cfg, &here, &opts, "2020").unwrap();
        let aware_there =
            predict_map(ModelKind::Spatioformer, &spat, &cfg, &there, &opts, "2020").unwrap();
        let differs = aware_here
            .values()
            .iter()
            .zip(aware_there.values())
            .any(|(a, b)| a != b);
        assert!(differs, "a geo-aware model must notice the move");
    }

    #[test]
    fn aggregate_matches_hand_values_and_ignores_year_order() {
        let bbox = Bbox::new(130.0, -26.0, 132.0, -25.0).unwrap();
        let grid = |vals: Vec<f64>, tag: &str| {
            RasterGrid::from_values(bbox, 1.0, "richness", tag, vals).unwrap()
        };
        let a = grid(vec![8.0, 1.0], "2019");
        let b = grid(vec![12.0, f64::NAN], "2020");

        let stack = RasterStack::new(vec![a.clone(), b.clone()]).unwrap();
        let mean = aggregate(&stack, AggregateStat::Mean).unwrap();
        let std = aggregate(&stack, AggregateStat::Std).unwrap();
        assert_eq!(mean.get(0, 0), 10.0);
        assert!((std.get(0, 0) - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean.get(0, 1), 1.0);
        assert!(std.is_masked(0, 1), "one covered year has no sample std");

        let flipped = RasterStack::new(vec![b, a]).unwrap();
        let mean_flipped = aggregate(&flipped, AggregateStat::Mean).unwrap();
        for (x, y) in mean.values().iter().zip(mean_flipped.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn aggregate_of_identical_grids_is_identity_and_zero_spread() {
        let bbox = Bbox::new(130.0, -26.0, 132.0, -25.0).unwrap();
        let g = RasterGrid::from_values(bbox, 1.0, "richness", "2019", vec![4.5, 6.0]).unwrap();
        let stack = RasterStack::new(vec![g.clone(), g.clone(), g.clone()]).unwrap();
        let mean = aggregate(&stack, AggregateStat::Mean).unwrap();
        let std = aggregate(&stack, AggregateStat::Std).unwrap();
        assert_eq!(mean.values(), g.values());
        assert!(std.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn std_of_a_single_grid_is_rejected() {
        let bbox = Bbox::new(130.0, -26.0, 132.0, -25.0).unwrap();
        let g = RasterGrid::from_values(bbox, 1.0, "richness", "2019", vec![1.0, 2.0]).unwrap();
        let stack = RasterStack::new(vec![g]).unwrap();
        assert!(aggregate(&stack, AggregateStat::Std).is_err());
        assert!(aggregate(&stack, AggregateStat::Mean).is_ok());
    }

    #[test]
    fn uncertainty_cells_match_isolated_estimates() {
        let cfg = ModelConfig {
            chip_size: 1,
            head_hidden: 32,
            dropout: 0.1,
            lambda_init: 1.7,
            ..ModelConfig::default()
        };
        let params = model::init(ModelKind::Spatioformer, &cfg, 17).unwrap();
        let scene = uniform_scene(1.0, 0.8);
        let ucfg = UncertaintyConfig {
            n: 8,
            ..UncertaintyConfig::default()
        };
        let map = uncertainty_map(
            ModelKind::Spatioformer,
            &params,
            &cfg,
            &scene,
            &ucfg,
            &MapperOptions::default(),
            "2020",
        )
        .unwrap();
        assert_eq!(map.band, "epsilon");

        let (lon, lat) = scene.geometry().cell_center(1, 0);
        let chip = ImageChip::new(1, 6, lon, lat, 0.5, vec![0.8; 6]).unwrap();
        let report =
            uncert::mc_uncertainty(ModelKind::Spatioformer, &params, &cfg, &chip, &ucfg).unwrap();
        assert_eq!(map.get(1, 0).to_bits(), report.epsilon.unwrap().to_bits());
    }

    #[test]
    fn wrong_band_order_rejected() {
        let cfg = small_cfg(3);
        let params = model::init(ModelKind::Vit, &cfg, 1).unwrap();
        let scene = uniform_scene(2.0, 0.5);
        let mut grids = scene.grids().to_vec();
        grids.swap(0, 1);
        let shuffled = RasterStack::new(grids).unwrap();
        let err = predict_map(
            ModelKind::Vit,
            &params,
            &cfg,
            &shuffled,
            &MapperOptions::default(),
            "2020",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }
}
