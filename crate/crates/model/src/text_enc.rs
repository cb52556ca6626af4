//! Toy text encoder: token embedding plus one pre-norm self-attention block,
//! standing in for a pretrained language model.

use grounder_autodiff::{Tape, Tensor, Var};
use grounder_text::TokenizedCaption;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::layers::{FfnP, LayerNormP, MhaP};
use crate::params::{Bound, Init, ParamId};
use crate::posenc::text_positions;

pub struct TextFeatures {
    /// `[n_tokens, d_model]`
    pub tokens: Var,
    /// `[n_tokens, d_model]` sinusoidal positions (zeros when disabled).
    pub pos: Var,
    pub n_tokens: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct TextEncP {
    embed: ParamId,
    ln_attn: LayerNormP,
    attn: MhaP,
    ln_ffn: LayerNormP,
    ffn: FfnP,
}

impl TextEncP {
    pub fn new(init: &mut Init, cfg: &ModelConfig) -> Self {
        Self {
            embed: init.normal("text_enc.embed", &[cfg.vocab_size, cfg.d_model], 0.02),
            ln_attn: LayerNormP::new(init, "text_enc.ln_attn", cfg.d_model),
            attn: MhaP::new(init, "text_enc.attn", cfg.d_model, cfg.n_heads),
            ln_ffn: LayerNormP::new(init, "text_enc.ln_ffn", cfg.d_model),
            ffn: FfnP::new(init, "text_enc.ffn", cfg.d_model, cfg.ffn_dim),
        }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cfg: &ModelConfig,
        caption: &TokenizedCaption,
    ) -> Result<TextFeatures> {
        let n = caption.len();
        for &id in &caption.token_ids {
            if id as usize >= cfg.vocab_size {
                return Err(ModelError::TokenOutOfVocab {
                    id,
                    vocab_size: cfg.vocab_size,
                });
            }
        }
        let rows: Vec<usize> = caption.token_ids.iter().map(|&i| i as usize).collect();
        let mut x = tape.gather_rows(bound.var(self.embed), &rows)?;

        let pos = if cfg.text_pos_encoding {
            tape.constant(text_positions(n, cfg.d_model))
        } else {
            tape.constant(Tensor::zeros(&[n, cfg.d_model]))
        };

        let mask = if cfg.cross_phrase_mask {
            Some(cross_phrase_mask(caption))
        } else {
            None
        };

        // pre-norm self-attention with positions on q/k only
        let normed = self.ln_attn.forward(tape, bound, x)?;
        let qk = tape.add(normed, pos)?;
        let attn = self.attn.attend(tape, bound, qk, qk, normed, mask.as_ref())?;
        x = tape.add(x, attn)?;

        let normed = self.ln_ffn.forward(tape, bound, x)?;
        let ff = self.ffn.forward(tape, bound, normed)?;
        x = tape.add(x, ff)?;

        Ok(TextFeatures {
            tokens: x,
            pos,
            n_tokens: n,
        })
    }
}

/// Attention mask that stops tokens of unrelated phrases from attending to
/// each other. Tokens outside every phrase (separators) stay unrestricted;
/// every token may attend to itself.
fn cross_phrase_mask(caption: &TokenizedCaption) -> Tensor {
    let n = caption.len();
    let mut group_of = vec![None; n];
    for g in &caption.phrase_groups {
        for &t in &g.token_indices {
            group_of[t] = Some(g.phrase_id);
        }
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let (Some(a), Some(b)) = (group_of[i], group_of[j]) {
                if a != b {
                    data[i * n + j] = -1e9;
                }
            }
        }
    }
    Tensor::new(vec![n, n], data).expect("mask shape")
}
