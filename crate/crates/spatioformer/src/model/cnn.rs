//! Convolutional baseline: three 3x3 conv layers with ReLU and batch
//! normalization, then the shared flatten-and-regress head.
//!
//! Normalization statistics are taken over the spatial positions of each
//! channel. In training mode the current chip's statistics are used and
//! returned to the caller, who folds them into the running buffers; at
//! inference the stored buffers are applied as constants.

use crate::data::chip::ImageChip;
use crate::error::{Error, Result};
use crate::model::{ForwardPass, ModelConfig, RunMode};
use crate::numerics::params::{Bound, ParamSet};
use crate::numerics::rng::RngStream;
use crate::numerics::tape::{ChannelStats, Tape};
use crate::numerics::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const CONV_LAYERS: usize = 3;

/// Chip as a [bands, size, size] tensor; the band-major storage already
/// has that layout.
pub fn chip_tensor(chip: &ImageChip) -> Tensor {
    Tensor::from_vec(
        &[chip.bands, chip.size, chip.size],
        chip.reflectance().to_vec(),
    )
    .expect("chip tensor shape")
}

pub fn forward(
    tape: &mut Tape,
    bound: &Bound,
    params: &ParamSet,
    cfg: &ModelConfig,
    chip: &ImageChip,
    mode: RunMode,
    rng: &mut RngStream,
) -> Result<ForwardPass> {
    cfg.validate()?;
    if cfg.chip_size < 3 {
        return Err(Error::Config(
            "convolutional model needs a chip of at least 3x3".into(),
        ));
    }
    if chip.size != cfg.chip_size || chip.bands != cfg.bands {
        return Err(Error::ShapeMismatch {
            op: "model_forward",
            lhs: vec![cfg.chip_size, cfg.chip_size, cfg.bands],
            rhs: vec![chip.size, chip.size, chip.bands],
        });
    }

    let mut x = tape.leaf(chip_tensor(chip));
    let mut batch_stats = Vec::with_capacity(CONV_LAYERS);
    for layer in 0..CONV_LAYERS {
        x = tape.conv2d(
            x,
            bound.var(&format!("conv{layer}.k")),
            bound.var(&format!("conv{layer}.b")),
        )?;
        x = tape.relu(x);
        x = if mode.batch_stats() {
            let (normed, stats) = tape.channel_norm(x, BN_EPS)?;
            batch_stats.push(stats);
            normed
        } else {
            let mean = params.tensor(&format!("bn{layer}.mean"))?.data();
            let var = params.tensor(&format!("bn{layer}.var"))?.data();
            let shift: Vec<f64> = mean.iter().map(|m| -m).collect();
            let scale: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            tape.channel_shift_scale(x, &shift, &scale)?
        };
        x = tape.channel_affine(
            x,
            bound.var(&format!("bn{layer}.g")),
            bound.var(&format!("bn{layer}.b")),
        )?;
    }

    let flat = tape.reshape(x, &[1, cfg.cnn_filters * cfg.pixel_count()])?;
    let h = tape.matmul(flat, bound.var("head.w1"))?;
    let h = tape.add_row(h, bound.var("head.b1"))?;
    let h = tape.relu(h);
    let h = tape.dropout(h, cfg.dropout, mode.dropout_on(), rng)?;
    let out = tape.matmul(h, bound.var("head.w2"))?;
    let output = tape.add_row(out, bound.var("head.b2"))?;
    Ok(ForwardPass { output, batch_stats })
}

/// Fold one forward pass's batch statistics into the running buffers:
/// buffer = (1 - momentum) * buffer + momentum * batch.
pub fn update_running_stats(
    params: &mut ParamSet,
    batch_stats: &[ChannelStats],
    momentum: f64,
) -> Result<()> {
    if batch_stats.len() != CONV_LAYERS {
        return Err(Error::Numeric(format!(
            "expected statistics for {CONV_LAYERS} layers, got {}",
            batch_stats.len()
        )));
    }
    for (layer, stats) in batch_stats.iter().enumerate() {
        for (suffix, fresh) in [("mean", &stats.mean), ("var", &stats.var)] {
            let buffer = params.tensor_mut(&format!("bn{layer}.{suffix}"))?;
            if buffer.data().len() != fresh.len() {
                return Err(Error::Numeric(format!(
                    "bn{layer}.{suffix} holds {} channels, statistics have {}",
                    buffer.data().len(),
                    fresh.len()
                )));
            }
            for (b, f) in buffer.data_mut().iter_mut().zip(fresh) {
                *b = (1.0 - momentum) * *b + momentum * f;
            }
        }
    }
    Ok(())
}
