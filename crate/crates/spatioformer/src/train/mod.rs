//! Training loop, evaluation, and the input-size ablation harness.

pub mod metrics;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::chip::ImageChip;
use crate::data::sample::SampleRecord;
use crate::data::tiles::{check_leakage, TileGrid};
use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::model::{self, cnn, ModelConfig, ModelKind, RunMode};
use crate::numerics::adam::{AdamConfig, AdamState};
use crate::numerics::params::{accumulate_grads, scale_grads, ParamSet};
use crate::numerics::rng::RngStream;
use crate::numerics::schedule::LrSchedule;
use crate::numerics::tape::Tape;
use crate::numerics::tensor::Tensor;

pub use metrics::{compute_metrics, MetricsReport};

pub const STREAM_ORDER: u64 = 3;
pub const STREAM_DROPOUT: u64 = 4;

/// Optimization settings. Architecture and dropout live in
/// `ModelConfig`; this covers everything the optimizer and the loop
/// need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_lr: f64,
    /// Linear warmup steps; defaults to 5% of the total when unset.
    pub warmup_steps: Option<u64>,
    /// Cosine restart period in steps; defaults to the whole run.
    pub restart_period: Option<u64>,
    pub weight_decay: f64,
    /// Stop after this many epochs without a validation improvement;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Spatioformer,
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            min_lr: 0.0,
            warmup_steps: None,
            restart_period: None,
            weight_decay: 1e-4,
            early_stop_patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.lr
            )));
        }
        if !(0.0..=self.lr).contains(&self.min_lr) {
            return Err(Error::Config(format!(
                "min learning rate {} must lie in [0, {}]",
                self.min_lr, self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative and finite, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn schedule(&self, total_steps: u64) -> LrSchedule {
        let mut s = LrSchedule::for_total_steps(self.lr, total_steps);
        s.min_lr = self.min_lr;
        if let Some(w) = self.warmup_steps {
            s.warmup_steps = w;
            s.period_steps = total_steps.saturating_sub(w).max(1);
        }
        if let Some(p) = self.restart_period {
            s.period_steps = p.max(1);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    /// Parameters of the best validation epoch (the initial parameters
    /// if no epoch completed).
    pub params: ParamSet,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub log: Vec<EpochLog>,
    /// A non-finite loss or gradient stopped the run; `params` holds the
    /// last good checkpoint.
    pub diverged: bool,
    pub stopped_early: bool,
}

fn cropped_targets(set: &SampleSet, chip_size: usize) -> Result<Vec<(f64, ImageChip)>> {
    set.iter()
        .map(|(rec, chip)| Ok((rec.richness, chip.center_crop(chip_size)?)))
        .collect()
}

fn records(set: &SampleSet) -> Vec<&SampleRecord> {
    set.iter().map(|(rec, _)| rec).collect()
}

/// Mean squared error of deterministic predictions over a cropped set.
fn mse_over(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &ModelConfig,
    set: &[(f64, ImageChip)],
) -> Result<f64> {
    let mut sum = 0.0;
    for (y, chip) in set {
        let p = model::predict(kind, params, cfg, chip)?;
        sum += (p - y) * (p - y);
    }
    Ok(sum / set.len() as f64)
}

/// Minimize MSE with Adam under the warm-restart schedule, keeping the
/// best-on-validation checkpoint. A non-finite loss or gradient ends the
/// run immediately with the last good checkpoint preserved and
/// `diverged` set.
pub fn train(
    init_params: ParamSet,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    grid: &TileGrid,
    train_set: &SampleSet,
    val_set: &SampleSet,
) -> Result<TrainResult> {
    tcfg.validate()?;
    mcfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    check_leakage(grid, &records(train_set), &records(val_set), "train/val")?;

    let train_data = cropped_targets(train_set, mcfg.chip_size)?;
    let val_data = cropped_targets(val_set, mcfg.chip_size)?;

    let n = train_data.len();
    let steps_per_epoch = n.div_ceil(tcfg.batch_size) as u64;
    let sched = tcfg.schedule(steps_per_epoch * tcfg.epochs as u64);
    let mut adam = AdamState::new(AdamConfig {
        weight_decay: tcfg.weight_decay,
        ..AdamConfig::default()
    });

    let mut params = init_params;
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stagnant = 0usize;
    let mut log = Vec::with_capacity(tcfg.epochs);
    let mut stopped_early = false;

    let mut order_rng = RngStream::new(tcfg.seed, STREAM_ORDER);
    let mut drop_rng = RngStream::new(tcfg.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0u64;

    let diverged = |params: ParamSet, best_epoch, best_val, log, what: &str| {
        log::warn!("training diverged ({what}); keeping the last good checkpoint");
        Ok(TrainResult {
            params,
            best_epoch,
            best_val_mse: best_val,
            log,
            diverged: true,
            stopped_early: false,
        })
    };

    for epoch in 0..tcfg.epochs {
        order_rng.shuffle(&mut order);
        let epoch_lr = sched.lr_at(step);
        let mut loss_sum = 0.0;

        for chunk in order.chunks(tcfg.batch_size) {
            let lr = sched.lr_at(step);
            let mut grads: IndexMap<String, Tensor> = IndexMap::new();
            for &idx in chunk {
                let (y, chip) = &train_data[idx];
                let mut tape = Tape::new();
                let bound = params.bind(&mut tape);
                let pass = model::forward_pass(
                    tcfg.model,
                    &mut tape,
                    &bound,
                    &params,
                    mcfg,
                    chip,
                    RunMode::Train,
                    &mut drop_rng,
                )?;
                let target = tape.leaf(Tensor::scalar(*y));
                let diff = tape.sub(pass.output, target)?;
                let loss = tape.mul(diff, diff)?;
                let loss_val = tape.value(loss).item();
                if !loss_val.is_finite() {
                    return diverged(best, best_epoch, best_val, log, "non-finite loss");
                }
                loss_sum += loss_val;
                tape.backward(loss)?;
                accumulate_grads(&mut grads, &bound.grads(&tape))?;
                if tcfg.model == ModelKind::Cnn {
                    cnn::update_running_stats(&mut params, &pass.batch_stats, cnn::BN_MOMENTUM)?;
                }
            }
            scale_grads(&mut grads, 1.0 / chunk.len() as f64);
            if adam.step(&mut params, &grads, lr).is_err() {
                return diverged(best, best_epoch, best_val, log, "non-finite gradient");
            }
            step += 1;
        }

        let val_mse = match mse_over(tcfg.model, &params, mcfg, &val_data) {
            Ok(v) if v.is_finite() => v,
            _ => return diverged(best, best_epoch, best_val, log, "non-finite validation loss"),
        };
        log.push(EpochLog {
            epoch,
            lr: epoch_lr,
            train_mse: loss_sum / n as f64,
            val_mse,
        });

        if val_mse < best_val {
            best_val = val_mse;
            best = params.clone();
            best_epoch = epoch;
            stagnant = 0;
        } else {
            stagnant += 1;
            if tcfg.early_stop_patience > 0 && stagnant >= tcfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainResult {
        params: best,
        best_epoch,
        best_val_mse: best_val,
        log,
        diverged: false,
        stopped_early,
    })
}

/// Deterministic predictions for every sample, chips center-cropped to
/// the model's input size.
pub fn predictions(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &ModelConfig,
    set: &SampleSet,
) -> Result<Vec<f64>> {
    set.iter()
        .map(|(_, chip)| model::predict(kind, params, cfg, &chip.center_crop(cfg.chip_size)?))
        .collect()
}

pub fn evaluate(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &ModelConfig,
    test_set: &SampleSet,
) -> Result<MetricsReport> {
    if test_set.is_empty() {
        return Err(Error::Data("cannot evaluate an empty test set".into()));
    }
    let predicted = predictions(kind, params, cfg, test_set)?;
    let actual: Vec<f64> = test_set.iter().map(|(rec, _)| rec.richness).collect();
    compute_metrics(&actual, &predicted)
}

/// Train and evaluate once per input size, all from the same seed and
/// the same stored chips (smaller sizes are center crops).
pub fn ablate_chip_size(
    base_mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    sizes: &[usize],
    grid: &TileGrid,
    train_set: &SampleSet,
    val_set: &SampleSet,
    test_set: &SampleSet,
) -> Result<Vec<(usize, MetricsReport)>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mcfg = ModelConfig {
            chip_size: size,
            ..base_mcfg.clone()
        };
        let params = model::init(tcfg.model, &mcfg, tcfg.seed)?;
        let result = train(params, &mcfg, tcfg, grid, train_set, val_set)?;
        if result.diverged {
            return Err(Error::NonFinite(format!(
                "training diverged during the {size}x{size} ablation run"
            )));
        }
        let report = evaluate(tcfg.model, &result.params, &mcfg, test_set)?;
        log::info!(
            "ablation {size}x{size}: test mse {:.4}, r {:.4}",
            report.mse,
            report.r
        );
        rows.push((size, report));
    }
    Ok(rows)
}

pub fn write_epoch_log(path: &std::path::Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,lr,train_mse,val_mse\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.lr, e.train_mse, e.val_mse
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_ablation_csv(path: &std::path::Path, rows: &[(usize, MetricsReport)]) -> Result<()> {
    let mut out = format!("chip_size,{}\n", MetricsReport::CSV_HEADER);
    for (size, report) in rows {
        out.push_str(&format!("{size},{}\n", report.csv_row()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::chip::PIXEL_PITCH_30M;
    use crate::data::synth::{RegionCoeff, SignalKind, SynthConfig};

    fn tiny_grid() -> TileGrid {
        TileGrid::default()
    }

    fn sample_at(id: &str, lon: f64, lat: f64, richness: f64, chip_seed: u64) -> (SampleRecord, ImageChip) {
        let mut rng = RngStream::new(chip_seed, 9);
        let reflectance = (0..6 * 9).map(|_| rng.uniform(0.0, 1.0)).collect();
        let chip = ImageChip::new(3, 6, lon, lat, PIXEL_PITCH_30M, reflectance).unwrap();
        (
            SampleRecord {
                id: id.into(),
                lon,
                lat,
                year: 2018,
                richness,
                chip_path: format!("chips/{id}.chip"),
            },
            chip,
        )
    }

    fn quick_cfgs(kind: ModelKind) -> (ModelConfig, TrainConfig) {
        let mcfg = ModelConfig {
            chip_size: 3,
            head_hidden: 32,
            dropout: 0.0,
            lambda_init: 1.0,
            ..ModelConfig::default()
        };
        let tcfg = TrainConfig {
            model: kind,
            epochs: 3,
            batch_size: 4,
            lr: 1e-3,
            weight_decay: 0.0,
            early_stop_patience: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        (mcfg, tcfg)
    }

    fn synth_sets(cfg: &SynthConfig, n: usize, seed: u64) -> (SampleSet, SampleSet) {
        let samples = crate::data::synth::synth_generate(cfg, n, seed).unwrap();
        let cut = n * 4 / 5;
        let train: SampleSet = samples[..cut].to_vec();
        let val: SampleSet = samples[cut..].to_vec();
        (train, val)
    }

    fn one_region_cfg(beta: f64, gamma: f64, noise: f64, signal: SignalKind) -> SynthConfig {
        SynthConfig {
            regions: vec![RegionCoeff { beta, gamma }],
            noise_std: noise,
            signal,
            chip_size: 9,
            ..SynthConfig::default()
        }
    }

    // Samples land in distinct tiles by construction, so the random
    // 80/20 cut below cannot leak; the leakage check still runs.
    fn spread_out(set: &mut SampleSet) {
        for (i, (rec, chip)) in set.iter_mut().enumerate() {
            rec.lon = 115.0 + 2.0 * i as f64;
            rec.lat = -30.0;
            *chip = ImageChip::new(
                chip.size,
                chip.bands,
                rec.lon,
                rec.lat,
                PIXEL_PITCH_30M,
                chip.reflectance().to_vec(),
            )
            .unwrap();
        }
    }

    #[test]
    fn one_sample_overfits_to_tiny_loss() {
        let (mcfg, mut tcfg) = quick_cfgs(ModelKind::Vit);
        tcfg.epochs = 200;
        tcfg.batch_size = 1;
        tcfg.lr = 0.02;
        let train_set = vec![sample_at("fit-0", 120.0, -20.0, 2.0, 1)];
        let val_set = vec![sample_at("val-0", 140.0, -20.0, 2.0, 2)];
        let params = model::init(ModelKind::Vit, &mcfg, 5).unwrap();
        let result = train(params, &mcfg, &tcfg, &tiny_grid(), &train_set, &val_set).unwrap();
        assert!(!result.diverged);
        let final_mse = result.log.last().unwrap().train_mse;
        assert!(final_mse < 1e-4, "train mse {final_mse}");
    }

    #[test]
    fn same_seed_reproduces_the_loss_curve_bitwise() {
        let cfg = one_region_cfg(1.5, 2.0, 0.2, SignalKind::CenterNirRedContrast);
        let (mut train_set, mut val_set) = synth_sets(&cfg, 10, 3);
        spread_out(&mut train_set);
        for (rec, _) in val_set.iter_mut() {
            rec.lat = -35.0;
        }
        let (mcfg, tcfg) = quick_cfgs(ModelKind::Spatioformer);
        let run = || {
            let params = model::init(ModelKind::Spatioformer, &mcfg, tcfg.seed).unwrap();
            train(params, &mcfg, &tcfg, &tiny_grid(), &train_set, &val_set).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.log.len(), b.log.len());
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.train_mse.to_bits(), y.train_mse.to_bits());
            assert_eq!(x.val_mse.to_bits(), y.val_mse.to_bits());
        }
    }

    #[test]
    fn noiseless_loss_falls_at_least_tenfold() {
        let cfg = one_region_cfg(1.5, 2.0, 0.0, SignalKind::CenterNirRedContrast);
        let (mut train_set, mut val_set) = synth_sets(&cfg, 40, 11);
        spread_out(&mut train_set);
        for (rec, _) in val_set.iter_mut() {
            rec.lat = -35.0;
        }
        let (mcfg, mut tcfg) = quick_cfgs(ModelKind::Vit);
        tcfg.epochs = 50;
        tcfg.batch_size = 8;
        tcfg.lr = 0.01;
        let params = model::init(ModelKind::Vit, &mcfg, tcfg.seed).unwrap();
        let result = train(params, &mcfg, &tcfg, &tiny_grid(), &train_set, &val_set).unwrap();
        assert!(!result.diverged);
        let first = result.log.first().unwrap().train_mse;
        let best = result.log.iter().map(|e| e.train_mse).fold(f64::INFINITY, f64::min);
        assert!(
            best * 10.0 <= first,
            "loss only fell from {first} to {best}"
        );
    }

    #[test]
    fn shared_tiles_between_train_and_val_abort() {
        let (mcfg, tcfg) = quick_cfgs(ModelKind::Vit);
        let train_set = vec![sample_at("a", 120.0, -20.0, 2.0, 1)];
        let val_set = vec![sample_at("b", 120.3, -20.2, 2.0, 2)];
        let params = model::init(ModelKind::Vit, &mcfg, 5).unwrap();
        let err = train(params, &mcfg, &tcfg, &tiny_grid(), &train_set, &val_set).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn non_finite_loss_keeps_the_last_good_checkpoint() {
        let (mcfg, tcfg) = quick_cfgs(ModelKind::Vit);
        let train_set = vec![sample_at("hot", 120.0, -20.0, 1e160, 1)];
        let val_set = vec![sample_at("cool", 140.0, -20.0, 2.0, 2)];
        let params = model::init(ModelKind::Vit, &mcfg, 5).unwrap();
        let before = params.clone();
        let result = train(params, &mcfg, &tcfg, &tiny_grid(), &train_set, &val_set).unwrap();
        assert!(result.diverged);
        assert!(result.log.is_empty());
        for ((_, a), (_, b)) in result.params.iter().zip(before.iter()) {
            assert_eq!(a.tensor.data(), b.tensor.data());
        }
    }

    #[test]
    fn stagnant_validation_stops_early() {
        let (mcfg, mut tcfg) = quick_cfgs(ModelKind::Vit);
        tcfg.epochs = 10;
        tcfg.early_stop_patience = 1;
        tcfg.lr = 1e-300;
        tcfg.min_lr = 0.0;
        let train_set = vec![sample_at("a", 120.0, -20.0, 2.0, 1)];
        let val_set = vec![sample_at("b", 140.0, -20.0, 2.0, 2)];
        let params = model::init(ModelKind::Vit, &mcfg, 5).unwrap();
        let result = train(params, &mcfg, &tcfg, &tiny_grid(), &train_set, &val_set).unwrap();
        assert!(result.stopped_early);
        assert_eq!(result.log.len(), 2);
    }

    // Place train, val, and test in disjoint latitude bands so the tile
    // check passes without a random split.
    fn banded_sets(samples: &SampleSet, cuts: (usize, usize)) -> (SampleSet, SampleSet, SampleSet) {
        let mut train_set: SampleSet = samples[..cuts.0].to_vec();
        let mut val_set: SampleSet = samples[cuts.0..cuts.1].to_vec();
        let mut test_set: SampleSet = samples[cuts.1..].to_vec();
        for (i, (rec, chip)) in train_set.iter_mut().enumerate() {
            rec.lon = 115.0 + 0.1 * i as f64;
            rec.lat = -20.0;
            *chip = chip_at(chip, rec.lon, rec.lat);
        }
        for (rec, chip) in val_set.iter_mut() {
            rec.lat = -25.0;
            *chip = chip_at(chip, rec.lon, rec.lat);
        }
        for (rec, chip) in test_set.iter_mut() {
            rec.lat = -30.0;
            *chip = chip_at(chip, rec.lon, rec.lat);
        }
        (train_set, val_set, test_set)
    }

    #[test]
    fn texture_signal_needs_the_neighborhood() {
        let cfg = one_region_cfg(60.0, 10.0, 0.2, SignalKind::NeighborhoodVariance);
        let samples = crate::data::synth::synth_generate(&cfg, 500, 21).unwrap();
        let (train_set, val_set, test_set) = banded_sets(&samples, (360, 430));

        let mcfg = ModelConfig {
            chip_size: 3,
            head_hidden: 64,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let tcfg = TrainConfig {
            model: ModelKind::Vit,
            epochs: 50,
            batch_size: 32,
            lr: 5e-3,
            weight_decay: 0.0,
            early_stop_patience: 0,
            seed: 2,
            ..TrainConfig::default()
        };
        let rows = ablate_chip_size(
            &mcfg,
            &tcfg,
            &[1, 3],
            &tiny_grid(),
            &train_set,
            &val_set,
            &test_set,
        )
        .unwrap();
        assert_eq!(rows[0].0, 1);
        assert_eq!(rows[1].0, 3);
        let mse_1 = rows[0].1.mse;
        let mse_3 = rows[1].1.mse;
        assert!(
            mse_3 < mse_1,
            "3x3 should beat 1x1 on a texture signal: {mse_3} vs {mse_1}"
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ablation.csv");
        write_ablation_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("chip_size,n,r,"));
        assert_eq!(text.lines().count(), 3);
    }

    fn chip_at(chip: &ImageChip, lon: f64, lat: f64) -> ImageChip {
        ImageChip::new(
            chip.size,
            chip.bands,
            lon,
            lat,
            PIXEL_PITCH_30M,
            chip.reflectance().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn center_signal_makes_sizes_tie() {
        let cfg = one_region_cfg(3.0, 4.0, 0.3, SignalKind::CenterNirRedContrast);
        let samples = crate::data::synth::synth_generate(&cfg, 300, 23).unwrap();
        let (train_set, val_set, test_set) = banded_sets(&samples, (220, 260));
        let mcfg = ModelConfig {
            chip_size: 3,
            head_hidden: 64,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let tcfg = TrainConfig {
            model: ModelKind::Vit,
            epochs: 12,
            batch_size: 32,
            lr: 5e-3,
            weight_decay: 0.0,
            early_stop_patience: 0,
            seed: 2,
            ..TrainConfig::default()
        };
        let rows = ablate_chip_size(
            &mcfg,
            &tcfg,
            &[1, 3],
            &tiny_grid(),
            &train_set,
            &val_set,
            &test_set,
        )
        .unwrap();
        let mse_1 = rows[0].1.mse;
        let mse_3 = rows[1].1.mse;
        assert!(
            mse_1 <= 2.0 * mse_3 + 1.0 && mse_3 <= 2.0 * mse_1 + 1.0,
            "sizes should tie on a center-only signal: {mse_1} vs {mse_3}"
        );
    }

    #[test]
    fn epoch_log_round_trips_through_csv() {
        let log = vec![
            EpochLog { epoch: 0, lr: 1e-3, train_mse: 4.5, val_mse: 5.0 },
            EpochLog { epoch: 1, lr: 9e-4, train_mse: 3.0, val_mse: 4.1 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_epoch_log(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("epoch,lr,train_mse,val_mse"));
    }

    #[test]
    fn invalid_optimizer_settings_rejected() {
        let bad_lr = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert!(bad_lr.validate().is_err());
        let bad_floor = TrainConfig { min_lr: 2e-3, ..TrainConfig::default() };
        assert!(bad_floor.validate().is_err());
        let bad_batch = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad_batch.validate().is_err());
    }
}
