//! Feature enhancer layer: bi-directional image/text cross-attention, then
//! per-modality refinement (text: self-attention + FFN; image: deformable
//! self-attention + FFN). Sublayer order follows the fusion recipe exactly;
//! every block is pre-norm residual.

use grounder_autodiff::{Tape, Var};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::image::ImageFeatures;
use crate::layers::{DeformP, FfnP, LayerNormP, MhaP, RefMode};
use crate::params::{Bound, Init};
use crate::text_enc::TextFeatures;

#[derive(Debug, Clone)]
pub(crate) struct EnhancerLayerP {
    ln_img_bi: LayerNormP,
    ln_txt_bi: LayerNormP,
    img_from_txt: MhaP,
    txt_from_img: MhaP,
    ln_txt_self: LayerNormP,
    txt_self: MhaP,
    ln_txt_ffn: LayerNormP,
    txt_ffn: FfnP,
    ln_img_deform: LayerNormP,
    img_deform: DeformP,
    ln_img_ffn: LayerNormP,
    img_ffn: FfnP,
}

impl EnhancerLayerP {
    pub fn new(init: &mut Init, cfg: &ModelConfig, index: usize) -> Self {
        let d = cfg.d_model;
        let name = format!("enhancer.{index}");
        Self {
            ln_img_bi: LayerNormP::new(init, &format!("{name}.ln_img_bi"), d),
            ln_txt_bi: LayerNormP::new(init, &format!("{name}.ln_txt_bi"), d),
            img_from_txt: MhaP::new(init, &format!("{name}.img_from_txt"), d, cfg.n_heads),
            txt_from_img: MhaP::new(init, &format!("{name}.txt_from_img"), d, cfg.n_heads),
            ln_txt_self: LayerNormP::new(init, &format!("{name}.ln_txt_self"), d),
            txt_self: MhaP::new(init, &format!("{name}.txt_self"), d, cfg.n_heads),
            ln_txt_ffn: LayerNormP::new(init, &format!("{name}.ln_txt_ffn"), d),
            txt_ffn: FfnP::new(init, &format!("{name}.txt_ffn"), d, cfg.ffn_dim),
            ln_img_deform: LayerNormP::new(init, &format!("{name}.ln_img_deform"), d),
            img_deform: DeformP::new(
                init,
                &format!("{name}.img_deform"),
                d,
                cfg.n_heads,
                cfg.n_feature_levels,
                cfg.deformable_points,
            ),
            ln_img_ffn: LayerNormP::new(init, &format!("{name}.ln_img_ffn"), d),
            img_ffn: FfnP::new(init, &format!("{name}.img_ffn"), d, cfg.ffn_dim),
        }
    }

    /// Returns the fused `(image_tokens, text_tokens)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        img: &ImageFeatures,
        img_tokens: Var,
        txt: &TextFeatures,
        txt_tokens: Var,
    ) -> Result<(Var, Var)> {
        // 1. bi-directional cross-attention; both directions read the
        //    pre-update streams
        let img_n = self.ln_img_bi.forward(tape, bound, img_tokens)?;
        let txt_n = self.ln_txt_bi.forward(tape, bound, txt_tokens)?;
        let img_q = tape.add(img_n, img.pos)?;
        let txt_q = tape.add(txt_n, txt.pos)?;

        let img_upd = self
            .img_from_txt
            .attend(tape, bound, img_q, txt_q, txt_n, None)?;
        let txt_upd = self
            .txt_from_img
            .attend(tape, bound, txt_q, img_q, img_n, None)?;
        let mut img_tokens = tape.add(img_tokens, img_upd)?;
        let mut txt_tokens = tape.add(txt_tokens, txt_upd)?;

        // 2. text: self-attention, then FFN
        let txt_n = self.ln_txt_self.forward(tape, bound, txt_tokens)?;
        let qk = tape.add(txt_n, txt.pos)?;
        let upd = self.txt_self.attend(tape, bound, qk, qk, txt_n, None)?;
        txt_tokens = tape.add(txt_tokens, upd)?;

        let txt_n = self.ln_txt_ffn.forward(tape, bound, txt_tokens)?;
        let upd = self.txt_ffn.forward(tape, bound, txt_n)?;
        txt_tokens = tape.add(txt_tokens, upd)?;

        // 3. image: deformable self-attention, then FFN
        let img_n = self.ln_img_deform.forward(tape, bound, img_tokens)?;
        let q = tape.add(img_n, img.pos)?;
        let img_value = ImageFeatures {
            tokens: img_n,
            pos: img.pos,
            levels: img.levels.clone(),
            ref_points: img.ref_points.clone(),
        };
        let upd = self
            .img_deform
            .attend(tape, bound, q, &img_value, RefMode::Points(&img.ref_points))?;
        img_tokens = tape.add(img_tokens, upd)?;

        let img_n = self.ln_img_ffn.forward(tape, bound, img_tokens)?;
        let upd = self.img_ffn.forward(tape, bound, img_n)?;
        img_tokens = tape.add(img_tokens, upd)?;

        Ok((img_tokens, txt_tokens))
    }
}
