//! Monte Carlo dropout uncertainty.
//!
//! Repeated stochastic forwards with dropout left active give a spread
//! of predictions; the reported uncertainty is their coefficient of
//! variation (sample std over mean). Dropout acts on the same sites used
//! in training, at its own rate, while any normalization buffers stay in
//! inference mode.

use serde::{Deserialize, Serialize};

use crate::data::chip::ImageChip;
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelKind, RunMode};
use crate::numerics::params::ParamSet;
use crate::numerics::rng::RngStream;
use crate::numerics::tape::Tape;

pub const STREAM_MC: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub n: usize,
    pub mc_dropout_rate: f64,
    pub seed: u64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            n: 100,
            mc_dropout_rate: 0.5,
            seed: 0,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "spread needs at least 2 repetitions, got {}",
                self.n
            )));
        }
        if !(self.mc_dropout_rate > 0.0 && self.mc_dropout_rate < 1.0) {
            return Err(Error::Config(format!(
                "dropout rate must lie strictly between 0 and 1, got {}",
                self.mc_dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Dropout-off prediction, the value richness maps use.
    pub deterministic: f64,
    /// Mean over the stochastic passes.
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator).
    pub std: f64,
    /// Coefficient of variation std/mean; `None` when the mean is zero,
    /// so a degenerate spread is never hidden behind a division.
    pub epsilon: Option<f64>,
}

/// Mean, sample std, and coefficient of variation of a spread of
/// predictions. Kahan-compensated sums keep the result insensitive to
/// summation order.
pub fn cv_stats(values: &[f64]) -> Result<(f64, f64, Option<f64>)> {
    if values.len() < 2 {
        return Err(Error::Data(format!(
            "spread statistics need at least 2 values, got {}",
            values.len()
        )));
    }
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("non-finite prediction {v}")));
        }
    }
    let mean = kahan_sum(values.iter().copied()) / values.len() as f64;
    let ss = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let std = (ss / (values.len() - 1) as f64).sqrt();
    let epsilon = if mean == 0.0 { None } else { Some(std / mean) };
    Ok((mean, std, epsilon))
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Run `ucfg.n` stochastic forwards on one chip and reduce them to an
/// uncertainty report. Fixed (params, seed) pairs give bit-identical
/// results.
pub fn mc_uncertainty(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &ModelConfig,
    chip: &ImageChip,
    ucfg: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    ucfg.validate()?;
    let deterministic = model::predict(kind, params, cfg, chip)?;

    let mc_cfg = ModelConfig {
        dropout: ucfg.mc_dropout_rate,
        ..cfg.clone()
    };
    let mut rng = RngStream::new(ucfg.seed, STREAM_MC);
    let mut draws = Vec::with_capacity(ucfg.n);
    for i in 0..ucfg.n {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let pass = model::forward_pass(
            kind,
            &mut tape,
            &bound,
            params,
            &mc_cfg,
            chip,
            RunMode::McDropout,
            &mut rng,
        )?;
        let y = tape.value(pass.output).item();
        if !y.is_finite() {
            return Err(Error::NonFinite(format!(
                "stochastic pass {i} produced {y}"
            )));
        }
        draws.push(y);
    }

    let (mean, std, epsilon) = cv_stats(&draws)?;
    if epsilon.is_none() {
        log::warn!("stochastic mean is zero; coefficient of variation undefined");
    }
    Ok(UncertaintyReport {
        deterministic,
        mean,
        std,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::chip::PIXEL_PITCH_30M;

    fn test_model() -> (ModelConfig, ParamSet, ImageChip) {
        let cfg = ModelConfig {
            chip_size: 3,
            head_hidden: 64,
            lambda_init: 1.7,
            ..ModelConfig::default()
        };
        let params = model::init(ModelKind::Spatioformer, &cfg, 42).unwrap();
        let mut rng = RngStream::new(7, 7);
        let reflectance = (0..54).map(|_| rng.uniform(0.0, 1.0)).collect();
        let chip = ImageChip::new(3, 6, 151.2, -33.9, PIXEL_PITCH_30M, reflectance).unwrap();
        (cfg, params, chip)
    }

    #[test]
    fn two_point_spread_matches_hand_values() {
        let (mean, std, eps) = cv_stats(&[8.0, 12.0]).unwrap();
        assert!((mean - 10.0).abs() < 1e-12);
        assert!((std - 8f64.sqrt()).abs() < 1e-9);
        assert!((eps.unwrap() - 0.2828427124746190).abs() < 1e-9);
    }

    #[test]
    fn constant_spread_has_zero_epsilon() {
        let (mean, std, eps) = cv_stats(&[10.0, 10.0, 10.0, 10.0]).unwrap();
        assert_eq!(mean, 10.0);
        assert_eq!(std, 0.0);
        assert_eq!(eps, Some(0.0));
    }

    #[test]
    fn epsilon_is_scale_invariant() {
        let base = [4.0, 5.5, 6.25, 3.75, 5.0];
        let (m0, _, e0) = cv_stats(&base).unwrap();
        let k = 17.25;
        let scaled: Vec<f64> = base.iter().map(|v| v * k).collect();
        let (m1, _, e1) = cv_stats(&scaled).unwrap();
        assert!((m1 - k * m0).abs() < 1e-12 * m1.abs());
        assert!((e1.unwrap() - e0.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_spread_yields_no_epsilon() {
        let (mean, std, eps) = cv_stats(&[-1.0, 1.0]).unwrap();
        assert_eq!(mean, 0.0);
        assert!(std > 0.0);
        assert_eq!(eps, None);
    }

    #[test]
    fn summation_order_does_not_matter() {
        let mut values: Vec<f64> = (0..200).map(|i| 1e6 + (i as f64) * 0.125).collect();
        let (m0, s0, _) = cv_stats(&values).unwrap();
        values.reverse();
        let (m1, s1, _) = cv_stats(&values).unwrap();
        assert!((m0 - m1).abs() <= 1e-12 * m0.abs());
        assert!((s0 - s1).abs() <= 1e-12 * s0.max(1.0));
    }

    #[test]
    fn vanishing_dropout_rate_collapses_to_the_deterministic_forward() {
        let (cfg, params, chip) = test_model();
        let ucfg = UncertaintyConfig {
            n: 10,
            mc_dropout_rate: 1e-9,
            seed: 3,
        };
        let report = mc_uncertainty(ModelKind::Spatioformer, &params, &cfg, &chip, &ucfg).unwrap();
        assert!((report.mean - report.deterministic).abs() <= 1e-6 * report.deterministic.abs());
        assert!(report.epsilon.unwrap().abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_reproduces_the_report_bitwise() {
        let (cfg, params, chip) = test_model();
        let ucfg = UncertaintyConfig {
            n: 12,
            seed: 9,
            ..UncertaintyConfig::default()
        };
        let a = mc_uncertainty(ModelKind::Spatioformer, &params, &cfg, &chip, &ucfg).unwrap();
        let b = mc_uncertainty(ModelKind::Spatioformer, &params, &cfg, &chip, &ucfg).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std.to_bits(), b.std.to_bits());
        assert_eq!(a.epsilon, b.epsilon);
        assert!(a.std > 0.0);
    }

    #[test]
    fn defaults_are_one_hundred_passes_at_half_rate() {
        let ucfg = UncertaintyConfig::default();
        assert_eq!(ucfg.n, 100);
        assert_eq!(ucfg.mc_dropout_rate, 0.5);
    }

    #[test]
    fn degenerate_configs_rejected() {
        let base = UncertaintyConfig::default();
        assert!(UncertaintyConfig { n: 1, ..base }.validate().is_err());
        assert!(UncertaintyConfig { mc_dropout_rate: 0.0, ..base }.validate().is_err());
        assert!(UncertaintyConfig { mc_dropout_rate: 1.0, ..base }.validate().is_err());
        assert!(cv_stats(&[5.0]).is_err());
        assert!(cv_stats(&[5.0, f64::NAN]).is_err());
    }
}
