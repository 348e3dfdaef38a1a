//! The geolocation-aware transformer regressor and its two baselines.
//!
//! All three models share the input contract (one 6-band chip in, one
//! richness value out) and the flatten-into-FC regression head. The
//! transformer variants tokenize per pixel with no intra-chip positional
//! encoding; location enters only through the sinusoidal geolocation
//! tokens, scaled by the learnable balance scalar lambda, plus one
//! learnable location-independent token. The convolutional baseline uses
//! three 3x3 conv layers with ReLU and batch normalization.

pub mod cnn;
pub mod encoder;
pub mod spatioformer;
pub mod vit;

use serde::{Deserialize, Serialize};

use crate::data::chip::ImageChip;
use crate::error::{Error, Result};
use crate::geoenc::GeoEncoderConfig;
use crate::numerics::params::{Bound, ParamSet};
use crate::numerics::rng::RngStream;
use crate::numerics::tape::{ChannelStats, Tape, Var};
use crate::numerics::tensor::Tensor;

pub use encoder::GeoWiring;
pub use spatioformer::{attention_decompose, AttentionDecomposition};

/// Stream id for parameter initialization draws. Stream ids are unique
/// across the crate so the same seed never replays one sequence in two
/// roles: 0 sample synthesis, 1 scene synthesis, 2 init, 3 batch order,
/// 4 training dropout, 5 Monte Carlo dropout.
pub const STREAM_INIT: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Spatioformer,
    Vit,
    Cnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Spatioformer => "spatioformer",
            ModelKind::Vit => "vit",
            ModelKind::Cnn => "cnn",
        })
    }
}

/// Dropout and normalization behavior of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Dropout active, batch normalization on batch statistics.
    Train,
    /// Dropout off, batch normalization on running statistics.
    Infer,
    /// Dropout active but normalization on running statistics, for Monte
    /// Carlo dropout at inference time.
    McDropout,
}

impl RunMode {
    pub fn dropout_on(self) -> bool {
        !matches!(self, RunMode::Infer)
    }

    pub fn batch_stats(self) -> bool {
        matches!(self, RunMode::Train)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub chip_size: usize,
    pub bands: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub lambda_init: f64,
    pub cnn_filters: usize,
    pub geo: GeoEncoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            chip_size: 9,
            bands: 6,
            embed_dim: 16,
            layers: 3,
            heads: 8,
            ffn_dim: 64,
            head_hidden: 1024,
            dropout: 0.1,
            lambda_init: 1e4,
            cnn_filters: 8,
            geo: GeoEncoderConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chip_size == 0 || self.chip_size % 2 == 0 || self.chip_size > 9 {
            return Err(Error::Config(format!(
                "chip size must be odd and within 1..=9, got {}",
                self.chip_size
            )));
        }
        self.geo.validate()?;
        if self.geo.d != self.embed_dim {
            return Err(Error::Config(format!(
                "geo token dimension {} must equal embedding dimension {} (they are added elementwise)",
                self.geo.d, self.embed_dim
            )));
        }
        if self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embedding dimension {} must divide into {} heads",
                self.embed_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.bands == 0
            || self.layers == 0
            || self.ffn_dim == 0
            || self.head_hidden == 0
            || self.cnn_filters == 0
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !self.lambda_init.is_finite() {
            return Err(Error::Config(format!(
                "lambda init must be finite, got {}",
                self.lambda_init
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.chip_size * self.chip_size
    }

    /// Sequence length the regression head consumes for a given kind.
    pub fn token_count(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::Spatioformer => self.pixel_count() + 1,
            ModelKind::Vit => self.pixel_count(),
            ModelKind::Cnn => 0,
        }
    }
}

fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor {
    let limit = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(shape, -limit, limit, rng)
}

/// Seeded parameter set for one model kind. Identical (kind, cfg, seed)
/// triples produce bit-identical tensors.
pub fn init(kind: ModelKind, cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = RngStream::new(seed, STREAM_INIT);
    let mut params = ParamSet::new();
    let e = cfg.embed_dim;

    match kind {
        ModelKind::Spatioformer | ModelKind::Vit => {
            params.insert("embed.w", fan_in_uniform(&[cfg.bands, e], cfg.bands, &mut rng));
            if kind == ModelKind::Spatioformer {
                params.insert("geo_token", Tensor::uniform(&[1, e], -0.05, 0.05, &mut rng));
                params.insert("lambda", Tensor::scalar(cfg.lambda_init));
            }
            for layer in 0..cfg.layers {
                let p = |name: &str| format!("enc{layer}.{name}");
                params.insert(&p("ln1.g"), Tensor::full(&[1, e], 1.0));
                params.insert(&p("ln1.b"), Tensor::zeros(&[1, e]));
                for proj in ["wq", "wk", "wv", "wo"] {
                    params.insert(
                        &p(&format!("attn.{proj}")),
                        fan_in_uniform(&[e, e], e, &mut rng),
                    );
                }
                params.insert(&p("ln2.g"), Tensor::full(&[1, e], 1.0));
                params.insert(&p("ln2.b"), Tensor::zeros(&[1, e]));
                params.insert(&p("ffn.w1"), fan_in_uniform(&[e, cfg.ffn_dim], e, &mut rng));
                params.insert(&p("ffn.b1"), Tensor::zeros(&[1, cfg.ffn_dim]));
                params.insert(&p("ffn.w2"), fan_in_uniform(&[cfg.ffn_dim, e], cfg.ffn_dim, &mut rng));
                params.insert(&p("ffn.b2"), Tensor::zeros(&[1, e]));
            }
            let flat = cfg.token_count(kind) * e;
            params.insert("head.w1", fan_in_uniform(&[flat, cfg.head_hidden], flat, &mut rng));
            params.insert("head.b1", Tensor::zeros(&[1, cfg.head_hidden]));
            params.insert("head.w2", fan_in_uniform(&[cfg.head_hidden, 1], cfg.head_hidden, &mut rng));
            params.insert("head.b2", Tensor::zeros(&[1, 1]));
        }
        ModelKind::Cnn => {
            let f = cfg.cnn_filters;
            let mut in_ch = cfg.bands;
            for layer in 0..3 {
                let fan_in = in_ch * 9;
                params.insert(
                    &format!("conv{layer}.k"),
                    fan_in_uniform(&[f, in_ch, 3, 3], fan_in, &mut rng),
                );
                params.insert(&format!("conv{layer}.b"), Tensor::zeros(&[f]));
                params.insert(&format!("bn{layer}.g"), Tensor::full(&[f], 1.0));
                params.insert(&format!("bn{layer}.b"), Tensor::zeros(&[f]));
                params.insert_buffer(&format!("bn{layer}.mean"), Tensor::zeros(&[f]));
                params.insert_buffer(&format!("bn{layer}.var"), Tensor::full(&[f], 1.0));
                in_ch = f;
            }
            let flat = f * cfg.pixel_count();
            params.insert("head.w1", fan_in_uniform(&[flat, cfg.head_hidden], flat, &mut rng));
            params.insert("head.b1", Tensor::zeros(&[1, cfg.head_hidden]));
            params.insert("head.w2", fan_in_uniform(&[cfg.head_hidden, 1], cfg.head_hidden, &mut rng));
            params.insert("head.b2", Tensor::zeros(&[1, 1]));
        }
    }
    Ok(params)
}

/// One forward pass on the caller's tape. `batch_stats` carries the
/// per-layer normalization statistics when a convolutional model runs in
/// training mode; the caller folds them into the running buffers.
pub struct ForwardPass {
    pub output: Var,
    pub batch_stats: Vec<ChannelStats>,
}

pub fn forward_pass(
    kind: ModelKind,
    tape: &mut Tape,
    bound: &Bound,
    params: &ParamSet,
    cfg: &ModelConfig,
    chip: &ImageChip,
    mode: RunMode,
    rng: &mut RngStream,
) -> Result<ForwardPass> {
    match kind {
        ModelKind::Spatioformer => {
            let output = spatioformer::forward(tape, bound, cfg, chip, mode.dropout_on(), rng)?;
            Ok(ForwardPass {
                output,
                batch_stats: Vec::new(),
            })
        }
        ModelKind::Vit => {
            let output = vit::forward(tape, bound, cfg, chip, mode.dropout_on(), rng)?;
            Ok(ForwardPass {
                output,
                batch_stats: Vec::new(),
            })
        }
        ModelKind::Cnn => cnn::forward(tape, bound, params, cfg, chip, mode, rng),
    }
}

/// Deterministic scalar prediction (dropout off, running statistics).
pub fn predict(kind: ModelKind, params: &ParamSet, cfg: &ModelConfig, chip: &ImageChip) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut rng = RngStream::new(0, 0);
    let pass = forward_pass(kind, &mut tape, &bound, params, cfg, chip, RunMode::Infer, &mut rng)?;
    let y = tape.value(pass.output).item();
    if !y.is_finite() {
        return Err(Error::NonFinite(format!("prediction {y} is not finite")));
    }
    Ok(y)
}
