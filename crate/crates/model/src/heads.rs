//! Prediction heads: the contrastive text-alignment head and the shared
//! box-refinement MLPs.

use grounder_autodiff::{Tape, Var};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::layers::{LayerNormP, MlpP};
use crate::params::{Bound, Init, ParamId};

/// Scaled dot-product alignment between visual queries and text tokens with
/// a learned scalar bias:
/// `logits = visual @ text^T / sqrt(d) + bias`.
pub fn contrastive_embedding(
    tape: &mut Tape,
    visual: Var,
    text: Var,
    bias: Var,
) -> Result<Var> {
    let d = tape.shape(visual)[1];
    let tt = tape.transpose2(text)?;
    let sim = tape.matmul(visual, tt)?;
    let scaled = tape.scale(sim, 1.0 / (d as f64).sqrt())?;
    Ok(tape.add(scaled, bias)?)
}

#[derive(Debug, Clone)]
pub(crate) struct HeadsP {
    /// Learned scalar bias of the contrastive head, initialized to
    /// `-ln((1-p)/p)` so initial activations sit near the prior `p`.
    pub bias: ParamId,
    /// Box head applied to encoder tokens (proposal generation).
    pub enc_box: MlpP,
    /// Box-delta head shared by all decoder layers.
    pub box_delta: MlpP,
    /// Final norms applied before any head reads a stream.
    pub ln_img_out: LayerNormP,
    pub ln_txt_out: LayerNormP,
    pub ln_query_out: LayerNormP,
}

impl HeadsP {
    pub fn new(init: &mut Init, cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        Self {
            bias: init.full("heads.contrastive_bias", &[], cfg.contrastive_bias_init()),
            enc_box: MlpP::new(init, "heads.enc_box", d, d, 4),
            box_delta: MlpP::new(init, "heads.box_delta", d, d, 4),
            ln_img_out: LayerNormP::new(init, "heads.ln_img_out", d),
            ln_txt_out: LayerNormP::new(init, "heads.ln_txt_out", d),
            ln_query_out: LayerNormP::new(init, "heads.ln_query_out", d),
        }
    }

    pub fn bias_var(&self, bound: &Bound) -> Var {
        bound.var(self.bias)
    }
}
