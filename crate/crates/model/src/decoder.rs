//! Cross-modality decoder layer: query self-attention, deformable image
//! cross-attention anchored at the current boxes, text cross-attention, FFN,
//! then anchor refinement in inverse-sigmoid space.

use grounder_autodiff::{Tape, Var};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::heads::HeadsP;
use crate::image::ImageFeatures;
use crate::layers::{DeformP, FfnP, LayerNormP, MhaP, RefMode};
use crate::params::{Bound, Init};
use crate::posenc::box_positions;
use crate::selection::QueryState;

#[derive(Debug, Clone)]
pub(crate) struct DecoderLayerP {
    ln_self: LayerNormP,
    self_attn: MhaP,
    ln_img: LayerNormP,
    img_cross: DeformP,
    ln_txt: LayerNormP,
    txt_cross: MhaP,
    ln_ffn: LayerNormP,
    ffn: FfnP,
}

impl DecoderLayerP {
    pub fn new(init: &mut Init, cfg: &ModelConfig, index: usize) -> Self {
        let d = cfg.d_model;
        let name = format!("decoder.{index}");
        Self {
            ln_self: LayerNormP::new(init, &format!("{name}.ln_self"), d),
            self_attn: MhaP::new(init, &format!("{name}.self_attn"), d, cfg.n_heads),
            ln_img: LayerNormP::new(init, &format!("{name}.ln_img"), d),
            img_cross: DeformP::new(
                init,
                &format!("{name}.img_cross"),
                d,
                cfg.n_heads,
                cfg.n_feature_levels,
                cfg.deformable_points,
            ),
            ln_txt: LayerNormP::new(init, &format!("{name}.ln_txt"), d),
            txt_cross: MhaP::new(init, &format!("{name}.txt_cross"), d, cfg.n_heads),
            ln_ffn: LayerNormP::new(init, &format!("{name}.ln_ffn"), d),
            ffn: FfnP::new(init, &format!("{name}.ffn"), d, cfg.ffn_dim),
        }
    }

    /// One refinement step; `img_mem`/`txt_mem` are the (normalized) fused
    /// streams shared by every layer.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cfg: &ModelConfig,
        heads: &HeadsP,
        img_mem: &ImageFeatures,
        txt_mem: Var,
        txt_pos: Var,
        q: QueryState,
    ) -> Result<QueryState> {
        let QueryState {
            mut content,
            anchors,
            selected,
        } = q;
        let pos_q = box_positions(tape, anchors, cfg.d_model)?;

        // query self-attention
        let n = self.ln_self.forward(tape, bound, content)?;
        let qk = tape.add(n, pos_q)?;
        let upd = self.self_attn.attend(tape, bound, qk, qk, n, None)?;
        content = tape.add(content, upd)?;

        // image cross-attention, deformable, anchored at the current boxes
        let n = self.ln_img.forward(tape, bound, content)?;
        let qin = tape.add(n, pos_q)?;
        let upd = self
            .img_cross
            .attend(tape, bound, qin, img_mem, RefMode::Boxes(anchors))?;
        content = tape.add(content, upd)?;

        // text cross-attention
        let n = self.ln_txt.forward(tape, bound, content)?;
        let qin = tape.add(n, pos_q)?;
        let kin = tape.add(txt_mem, txt_pos)?;
        let upd = self.txt_cross.attend(tape, bound, qin, kin, txt_mem, None)?;
        content = tape.add(content, upd)?;

        // FFN
        let n = self.ln_ffn.forward(tape, bound, content)?;
        let upd = self.ffn.forward(tape, bound, n)?;
        content = tape.add(content, upd)?;

        // iterative anchor refinement in inverse-sigmoid space
        let n = heads.ln_query_out.forward(tape, bound, content)?;
        let delta = heads.box_delta.forward(tape, bound, n)?;
        let logits = tape.logit(anchors, 1e-6)?;
        let shifted = tape.add(logits, delta)?;
        let anchors = tape.sigmoid(shifted)?;

        Ok(QueryState {
            content,
            anchors,
            selected,
        })
    }
}
