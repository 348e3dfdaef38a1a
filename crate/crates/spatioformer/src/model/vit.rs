//! Plain transformer baseline: the same token pipeline with no
//! geolocation input of any kind.

use crate::data::chip::ImageChip;
use crate::error::Result;
use crate::model::encoder::{self, GeoWiring};
use crate::model::ModelConfig;
use crate::numerics::params::Bound;
use crate::numerics::rng::RngStream;
use crate::numerics::tape::{Tape, Var};

pub fn forward(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    chip: &ImageChip,
    dropout_on: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    encoder::token_forward(tape, bound, cfg, chip, GeoWiring::PixelsOnly, dropout_on, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::chip::PIXEL_PITCH_30M;
    use crate::model::tests::{random_chip, small_cfg};
    use crate::model::{self, ModelKind};
    use crate::numerics::tensor::Tensor;

    #[test]
    fn predictions_ignore_the_chip_location() {
        let cfg = small_cfg();
        let params = model::init(ModelKind::Vit, &cfg, 6).unwrap();
        let here = random_chip(9, 3, 130.0, -25.0);
        let there = ImageChip::new(
            3,
            6,
            145.0,
            -12.0,
            PIXEL_PITCH_30M,
            here.reflectance().to_vec(),
        )
        .unwrap();
        let y_here = model::predict(ModelKind::Vit, &params, &cfg, &here).unwrap();
        let y_there = model::predict(ModelKind::Vit, &params, &cfg, &there).unwrap();
        assert_eq!(y_here.to_bits(), y_there.to_bits());
    }

    #[test]
    fn permuting_bands_with_matching_embed_rows_is_equivariant() {
        let cfg = small_cfg();
        let params = model::init(ModelKind::Vit, &cfg, 13).unwrap();
        let chip = random_chip(14, 3, 138.0, -28.0);
        let y = model::predict(ModelKind::Vit, &params, &cfg, &chip).unwrap();

        let perm = [3usize, 0, 5, 1, 4, 2];
        let n = chip.size * chip.size;
        let mut shuffled = vec![0.0; 6 * n];
        for (new_band, &old_band) in perm.iter().enumerate() {
            shuffled[new_band * n..(new_band + 1) * n]
                .copy_from_slice(&chip.reflectance()[old_band * n..(old_band + 1) * n]);
        }
        let permuted_chip =
            ImageChip::new(3, 6, 138.0, -28.0, PIXEL_PITCH_30M, shuffled).unwrap();

        let embed = params.tensor("embed.w").unwrap().clone();
        let mut permuted_embed = Tensor::zeros(&[6, cfg.embed_dim]);
        for (new_band, &old_band) in perm.iter().enumerate() {
            for c in 0..cfg.embed_dim {
                permuted_embed.set(new_band, c, embed.at(old_band, c));
            }
        }
        let mut permuted_params = params.clone();
        permuted_params.set("embed.w", permuted_embed).unwrap();

        let y_perm = model::predict(ModelKind::Vit, &permuted_params, &cfg, &permuted_chip).unwrap();
        assert!((y - y_perm).abs() <= 1e-12 * y.abs().max(1.0));
    }

    #[test]
    fn severed_geo_path_at_zero_lambda_matches_exactly() {
        let cfg = small_cfg();
        let vit_params = model::init(ModelKind::Vit, &cfg, 17).unwrap();
        let mut fused_params = vit_params.clone();
        fused_params.insert("lambda", Tensor::scalar(0.0));
        let chip = random_chip(18, 3, 150.0, -30.0);

        let y_vit = model::predict(ModelKind::Vit, &vit_params, &cfg, &chip).unwrap();

        let mut tape = Tape::new();
        let bound = fused_params.bind(&mut tape);
        let mut rng = RngStream::new(0, 0);
        let out = encoder::token_forward(
            &mut tape,
            &bound,
            &cfg,
            &chip,
            GeoWiring::FusionOnly,
            false,
            &mut rng,
        )
        .unwrap();
        let y_fused = tape.value(out).item();
        assert_eq!(y_vit.to_bits(), y_fused.to_bits());
    }
}
