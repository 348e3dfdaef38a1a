//! Shared token pipeline for the transformer models.
//!
//! Pixels are embedded individually (patch size 1), optionally fused with
//! scaled geolocation tokens, run through pre-norm encoder blocks, and
//! flattened into a two-layer regression head. The geo-aware model and
//! the plain baseline differ only in the wiring selected here, so
//! equivalences between them hold at the graph level rather than by
//! approximate agreement.

use crate::data::chip::ImageChip;
use crate::error::{Error, Result};
use crate::geoenc;
use crate::model::ModelConfig;
use crate::numerics::params::Bound;
use crate::numerics::rng::RngStream;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

/// How geolocation enters the token sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeoWiring {
    /// Pixel embeddings plus lambda-scaled geolocation tokens, with the
    /// learnable location-independent token prepended.
    Full,
    /// The lambda-scaled addition only, no independent token. With
    /// lambda = 0 this coincides with `PixelsOnly` node for node.
    FusionOnly,
    /// Pixel embeddings alone (the plain transformer baseline).
    PixelsOnly,
}

/// Pixel values as an m x bands matrix, pixels in row-major chip order.
pub fn pixel_matrix(chip: &ImageChip) -> Tensor {
    let m = chip.size * chip.size;
    let mut data = Vec::with_capacity(m * chip.bands);
    for row in 0..chip.size {
        for col in 0..chip.size {
            for band in 0..chip.bands {
                data.push(chip.value(band, row, col));
            }
        }
    }
    Tensor::from_vec(&[m, chip.bands], data).expect("pixel matrix shape")
}

/// Geolocation tokens for every pixel center, as an m x d matrix.
pub fn geo_matrix(cfg: &ModelConfig, chip: &ImageChip) -> Result<Tensor> {
    let m = chip.size * chip.size;
    let mut data = Vec::with_capacity(m * cfg.geo.d);
    for row in 0..chip.size {
        for col in 0..chip.size {
            let (lon, lat) = chip.pixel_coord(row, col);
            data.extend(geoenc::encode(&cfg.geo, lon, lat)?.values);
        }
    }
    Tensor::from_vec(&[m, cfg.geo.d], data)
}

fn check_chip(cfg: &ModelConfig, chip: &ImageChip) -> Result<()> {
    if chip.size != cfg.chip_size || chip.bands != cfg.bands {
        return Err(Error::ShapeMismatch {
            op: "model_forward",
            lhs: vec![cfg.chip_size, cfg.chip_size, cfg.bands],
            rhs: vec![chip.size, chip.size, chip.bands],
        });
    }
    Ok(())
}

/// Full pipeline: tokens -> encoder stack -> regression head. Returns the
/// scalar prediction var on the caller's tape.
pub fn token_forward(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    chip: &ImageChip,
    wiring: GeoWiring,
    dropout_on: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    cfg.validate()?;
    check_chip(cfg, chip)?;

    let pixels = tape.leaf(pixel_matrix(chip));
    let mut tokens = tape.matmul(pixels, bound.var("embed.w"))?;

    if wiring != GeoWiring::PixelsOnly {
        let geo = tape.leaf(geo_matrix(cfg, chip)?);
        let scaled = tape.scale_var(geo, bound.var("lambda"))?;
        tokens = tape.add(tokens, scaled)?;
    }
    if wiring == GeoWiring::Full {
        tokens = tape.concat_rows(&[bound.var("geo_token"), tokens])?;
    }

    let encoded = encoder_stack(tape, bound, cfg, tokens, dropout_on, rng)?;
    head(tape, bound, cfg, encoded, dropout_on, rng)
}

/// Pre-norm encoder blocks: x += Attn(LN(x)); x += FFN(LN(x)).
pub fn encoder_stack(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    mut x: Var,
    dropout_on: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    for layer in 0..cfg.layers {
        let p = |name: &str| format!("enc{layer}.{name}");

        let normed = layer_norm(tape, bound, &p("ln1"), x)?;
        let attn = attention(tape, bound, cfg, layer, normed)?;
        let attn = tape.dropout(attn, cfg.dropout, dropout_on, rng)?;
        x = tape.add(x, attn)?;

        let normed = layer_norm(tape, bound, &p("ln2"), x)?;
        let h = tape.matmul(normed, bound.var(&p("ffn.w1")))?;
        let h = tape.add_row(h, bound.var(&p("ffn.b1")))?;
        let h = tape.relu(h);
        let h = tape.matmul(h, bound.var(&p("ffn.w2")))?;
        let h = tape.add_row(h, bound.var(&p("ffn.b2")))?;
        let h = tape.dropout(h, cfg.dropout, dropout_on, rng)?;
        x = tape.add(x, h)?;
    }
    Ok(x)
}

fn layer_norm(tape: &mut Tape, bound: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let normed = tape.layer_norm_rows(x, LN_EPS)?;
    let scaled = tape.mul_row(normed, bound.var(&format!("{prefix}.g")))?;
    tape.add_row(scaled, bound.var(&format!("{prefix}.b")))
}

/// Multi-head self-attention with bias-free projections; logits scaled
/// by 1/sqrt(per-head key dimension).
fn attention(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    layer: usize,
    x: Var,
) -> Result<Var> {
    let dk = cfg.embed_dim / cfg.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = tape.matmul(x, bound.var(&format!("enc{layer}.attn.wq")))?;
    let k = tape.matmul(x, bound.var(&format!("enc{layer}.attn.wk")))?;
    let v = tape.matmul(x, bound.var(&format!("enc{layer}.attn.wv")))?;

    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dk, dk)?;
        let kt = tape.transpose(kh);
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.softmax_rows(logits)?;
        heads.push(tape.matmul(weights, vh)?);
    }
    let z = tape.concat_cols(&heads)?;
    tape.matmul(z, bound.var(&format!("enc{layer}.attn.wo")))
}

/// Flatten every token and regress through one hidden layer.
fn head(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    x: Var,
    dropout_on: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    let tokens = tape.value(x).rows();
    let flat = tape.reshape(x, &[1, tokens * cfg.embed_dim])?;
    let h = tape.matmul(flat, bound.var("head.w1"))?;
    let h = tape.add_row(h, bound.var("head.b1"))?;
    let h = tape.relu(h);
    let h = tape.dropout(h, cfg.dropout, dropout_on, rng)?;
    let out = tape.matmul(h, bound.var("head.w2"))?;
    tape.add_row(out, bound.var("head.b2"))
}

/// Post-softmax attention maps of one layer on an already-built token
/// matrix, for diagnostics. Rows sum to 1.
pub fn attention_maps(
    params_bound: &Bound,
    tape: &mut Tape,
    cfg: &ModelConfig,
    layer: usize,
    x: Var,
) -> Result<Vec<Tensor>> {
    let dk = cfg.embed_dim / cfg.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let normed = layer_norm(tape, params_bound, &format!("enc{layer}.ln1"), x)?;
    let q = tape.matmul(normed, params_bound.var(&format!("enc{layer}.attn.wq")))?;
    let k = tape.matmul(normed, params_bound.var(&format!("enc{layer}.attn.wk")))?;
    let mut maps = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let kt = tape.transpose(kh);
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.softmax_rows(logits)?;
        maps.push(tape.value(weights).clone());
    }
    Ok(maps)
}
