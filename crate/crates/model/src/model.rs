use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use grounder_autodiff::{Tape, Tensor, Var};
use grounder_text::TokenizedCaption;

use crate::config::{ModelConfig, Similarity};
use crate::decoder::DecoderLayerP;
use crate::enhancer::EnhancerLayerP;
use crate::error::Result;
use crate::heads::{contrastive_embedding, HeadsP};
use crate::image::{ImageEncP, ImageFeatures};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::selection::{anchor_prior_logits, select_top, selection_scores, QueryState};
use crate::text_enc::TextEncP;

/// Boxes and per-token logits from one supervision point.
#[derive(Debug)]
pub struct LayerPrediction {
    /// `[n, 4]` normalized cxcywh.
    pub boxes: Var,
    /// `[n, n_text_tokens]`.
    pub token_logits: Var,
}

/// Everything the losses and the evaluation harness consume: one prediction
/// per decoder layer plus the encoder-output prediction over image tokens.
#[derive(Debug)]
pub struct Prediction {
    pub decoder_layers: Vec<LayerPrediction>,
    pub encoder: LayerPrediction,
    pub selected: Vec<usize>,
    pub n_text_tokens: usize,
}

impl Prediction {
    /// All supervision sets: decoder layers in order, then the encoder
    /// output. Count is always `n_decoder_layers + 1`.
    pub fn supervision_sets(&self) -> Vec<&LayerPrediction> {
        let mut sets: Vec<&LayerPrediction> = self.decoder_layers.iter().collect();
        sets.push(&self.encoder);
        sets
    }

    /// The final decoder layer's prediction, used at inference time.
    pub fn final_layer(&self) -> &LayerPrediction {
        self.decoder_layers.last().expect("at least one decoder layer")
    }
}

pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    image_enc: ImageEncP,
    text_enc: TextEncP,
    enhancers: Vec<EnhancerLayerP>,
    decoders: Vec<DecoderLayerP>,
    heads: HeadsP,
    query_content: ParamId,
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let image_enc = ImageEncP::new(&mut init, &cfg);
        let text_enc = TextEncP::new(&mut init, &cfg);
        let enhancers = (0..cfg.n_enhancer_layers)
            .map(|i| EnhancerLayerP::new(&mut init, &cfg, i))
            .collect();
        let decoders = (0..cfg.n_decoder_layers)
            .map(|i| DecoderLayerP::new(&mut init, &cfg, i))
            .collect();
        let heads = HeadsP::new(&mut init, &cfg);
        // content part of the queries: all-zero and learnable
        let query_content = init.zeros("query_content", &[cfg.num_query, cfg.d_model]);
        Ok(Self {
            cfg,
            store,
            image_enc,
            text_enc,
            enhancers,
            decoders,
            heads,
            query_content,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.store.bind(tape)
    }

    pub fn n_scalar_params(&self) -> usize {
        self.store.n_scalars()
    }

    /// Full forward pass for one image/caption pair. Emits one prediction
    /// per decoder layer plus the encoder-output prediction.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pixels: &Tensor,
        caption: &TokenizedCaption,
    ) -> Result<Prediction> {
        let img = self.image_enc.encode(tape, bound, &self.cfg, pixels)?;
        let txt = self.text_enc.encode(tape, bound, &self.cfg, caption)?;

        let mut img_tokens = img.tokens;
        let mut txt_tokens = txt.tokens;
        for layer in &self.enhancers {
            (img_tokens, txt_tokens) =
                layer.forward(tape, bound, &img, img_tokens, &txt, txt_tokens)?;
        }

        let img_mem_tokens = self.heads.ln_img_out.forward(tape, bound, img_tokens)?;
        let txt_mem = self.heads.ln_txt_out.forward(tape, bound, txt_tokens)?;
        let bias = self.heads.bias_var(bound);

        // encoder-output prediction over all image tokens
        let enc_logits = contrastive_embedding(tape, img_mem_tokens, txt_mem, bias)?;
        let enc_delta = self.heads.enc_box.forward(tape, bound, img_mem_tokens)?;
        let prior = anchor_prior_logits(tape, &img.ref_points, &img.levels)?;
        let enc_box_logits = tape.add(enc_delta, prior)?;
        let enc_boxes = tape.sigmoid(enc_box_logits)?;

        // language-guided query selection on detached values
        let scores = selection_scores(
            tape.value(img_mem_tokens),
            tape.value(txt_mem),
            self.cfg.selection_similarity,
            match self.cfg.selection_similarity {
                Similarity::ScaledDot => tape.value(bias).scalar_value(),
                Similarity::Cosine => 0.0,
            },
        );
        let selected = select_top(&scores, self.cfg.num_query)?;

        let anchors = tape.gather_rows(enc_boxes, &selected)?;
        let mut state = QueryState {
            content: bound.var(self.query_content),
            anchors,
            selected,
        };

        let img_mem = ImageFeatures {
            tokens: img_mem_tokens,
            pos: img.pos,
            levels: img.levels.clone(),
            ref_points: img.ref_points.clone(),
        };

        let mut decoder_layers = Vec::with_capacity(self.decoders.len());
        for layer in &self.decoders {
            state = layer.forward(
                tape,
                bound,
                &self.cfg,
                &self.heads,
                &img_mem,
                txt_mem,
                txt.pos,
                state,
            )?;
            let normed = self.heads.ln_query_out.forward(tape, bound, state.content)?;
            let token_logits = contrastive_embedding(tape, normed, txt_mem, bias)?;
            decoder_layers.push(LayerPrediction {
                boxes: state.anchors,
                token_logits,
            });
        }

        Ok(Prediction {
            decoder_layers,
            encoder: LayerPrediction {
                boxes: enc_boxes,
                token_logits: enc_logits,
            },
            selected: state.selected,
            n_text_tokens: caption.len(),
        })
    }

    /// Zero every residual sublayer's output projection (attention/deformable
    /// output projections, FFN second linears, box-head final linears).
    /// With these at zero each enhancer and decoder layer is the identity.
    pub fn zero_sublayer_outputs(&mut self) {
        let names: Vec<String> = self
            .store
            .names()
            .iter()
            .filter(|n| {
                n.ends_with(".o.w")
                    || n.ends_with(".o.b")
                    || n.ends_with(".out.w")
                    || n.ends_with(".out.b")
                    || n.ends_with(".lin2.w")
                    || n.ends_with(".lin2.b")
            })
            .cloned()
            .collect();
        for name in names {
            let id = self.store.id_of(&name).expect("listed name");
            let shape = self.store.tensor(id).shape().to_vec();
            self.store.set_tensor(id, Tensor::zeros(&shape));
        }
    }
}
