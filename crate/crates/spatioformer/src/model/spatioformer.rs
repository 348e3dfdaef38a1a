//! The geolocation-aware transformer and its attention decomposition.

use crate::data::chip::ImageChip;
use crate::error::{Error, Result};
use crate::model::encoder::{self, GeoWiring};
use crate::model::ModelConfig;
use crate::numerics::params::{Bound, ParamSet};
use crate::numerics::rng::RngStream;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Forward pass with the full geolocation wiring: lambda-scaled geo
/// tokens added to the pixel embeddings and the location-independent
/// token prepended.
pub fn forward(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    chip: &ImageChip,
    dropout_on: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    encoder::token_forward(tape, bound, cfg, chip, GeoWiring::Full, dropout_on, rng)
}

/// Pre-softmax attention logits of one head split into the four
/// interaction routes between pixel content and geolocation.
///
/// With fused embeddings e + lambda*g, the bilinear logit map factors as
/// (q_p + q_g)(k_p + k_g)^T, so `fused` equals the elementwise sum of
/// the four terms up to rounding. The decomposition applies the chosen
/// layer's query/key projections directly to the fused input, before any
/// residual or normalization, which is what keeps the identity exact.
pub struct AttentionDecomposition {
    /// Pixel queries against pixel keys.
    pub pixel_pixel: Tensor,
    /// Pixel queries against geolocation keys.
    pub pixel_geo: Tensor,
    /// Geolocation queries against pixel keys.
    pub geo_pixel: Tensor,
    /// Geolocation queries against geolocation keys.
    pub geo_geo: Tensor,
    /// Logits of the undecomposed fused input.
    pub fused: Tensor,
}

impl AttentionDecomposition {
    /// Largest absolute gap between `fused` and the sum of the four terms.
    pub fn residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.fused.data().len() {
            let sum = self.pixel_pixel.data()[i]
                + self.pixel_geo.data()[i]
                + self.geo_pixel.data()[i]
                + self.geo_geo.data()[i];
            worst = worst.max((self.fused.data()[i] - sum).abs());
        }
        worst
    }
}

fn slice_cols(t: &Tensor, start: usize, len: usize) -> Tensor {
    let mut out = Tensor::zeros(&[t.rows(), len]);
    for r in 0..t.rows() {
        for c in 0..len {
            out.set(r, c, t.at(r, start + c));
        }
    }
    out
}

/// Decompose one head's attention logits for a chip. Uses the current
/// parameter values; no tape is involved.
pub fn attention_decompose(
    params: &ParamSet,
    cfg: &ModelConfig,
    chip: &ImageChip,
    layer: usize,
    head: usize,
) -> Result<AttentionDecomposition> {
    cfg.validate()?;
    if layer >= cfg.layers || head >= cfg.heads {
        return Err(Error::Config(format!(
            "layer {layer} / head {head} out of range for {} layers, {} heads",
            cfg.layers, cfg.heads
        )));
    }
    let dk = cfg.embed_dim / cfg.heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let pixel_part = encoder::pixel_matrix(chip).matmul(params.tensor("embed.w")?)?;
    let lambda = params.tensor("lambda")?.item();
    let geo_part = encoder::geo_matrix(cfg, chip)?.map(|v| lambda * v);

    let wq = slice_cols(params.tensor(&format!("enc{layer}.attn.wq"))?, head * dk, dk);
    let wk = slice_cols(params.tensor(&format!("enc{layer}.attn.wk"))?, head * dk, dk);

    let q_p = pixel_part.matmul(&wq)?;
    let q_g = geo_part.matmul(&wq)?;
    let k_p = pixel_part.matmul(&wk)?;
    let k_g = geo_part.matmul(&wk)?;

    let logits = |q: &Tensor, k: &Tensor| -> Result<Tensor> {
        Ok(q.matmul(&k.transpose())?.map(|v| v * scale))
    };
    let fused_q = q_p.add(&q_g)?;
    let fused_k = k_p.add(&k_g)?;

    Ok(AttentionDecomposition {
        pixel_pixel: logits(&q_p, &k_p)?,
        pixel_geo: logits(&q_p, &k_g)?,
        geo_pixel: logits(&q_g, &k_p)?,
        geo_geo: logits(&q_g, &k_g)?,
        fused: logits(&fused_q, &fused_k)?,
    })
}
