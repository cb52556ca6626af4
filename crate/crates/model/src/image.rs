//! Toy image encoder: a strided patch-embedding pyramid standing in for a
//! full backbone. Level 0 projects `patch_size`-square pixel patches; each
//! further level merges 2x2 cells of the previous one.

use std::sync::Arc;

use grounder_autodiff::{Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::params::{Bound, Init, ParamId};
use crate::posenc::grid_positions;
use crate::layers::LinearP;

#[derive(Debug, Clone, Copy)]
pub struct LevelMeta {
    pub h: usize,
    pub w: usize,
    /// Index of the level's first token in the flattened token matrix.
    pub start: usize,
}

/// Flattened multi-scale image tokens plus their grid metadata.
pub struct ImageFeatures {
    /// `[n_tokens, d_model]`
    pub tokens: Var,
    /// `[n_tokens, d_model]`; sinusoidal grid encoding plus the learned
    /// level embedding, kept separate from the content stream.
    pub pos: Var,
    pub levels: Vec<LevelMeta>,
    /// Normalized cell-center (x, y) per token.
    pub ref_points: Vec<(f64, f64)>,
}

impl ImageFeatures {
    pub fn n_tokens(&self) -> usize {
        self.ref_points.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ImageEncP {
    patch_proj: LinearP,
    level_projs: Vec<LinearP>,
    level_embed: ParamId,
}

impl ImageEncP {
    pub fn new(init: &mut Init, cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let patch_dim = 3 * cfg.patch_size * cfg.patch_size;
        let patch_proj = LinearP::new(init, "image_enc.patch_proj", patch_dim, d);
        let level_projs = (1..cfg.n_feature_levels)
            .map(|l| LinearP::new(init, &format!("image_enc.level_proj{l}"), 4 * d, d))
            .collect();
        let level_embed = init.normal("image_enc.level_embed", &[cfg.n_feature_levels, d], 0.02);
        Self {
            patch_proj,
            level_projs,
            level_embed,
        }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cfg: &ModelConfig,
        pixels: &Tensor,
    ) -> Result<ImageFeatures> {
        let shape = pixels.shape();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(ModelError::Config(format!(
                "expected pixels [3, H, W], got {shape:?}"
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        let min = cfg.min_image_edge();
        if h < min || w < min {
            return Err(ModelError::ImageTooSmall {
                h,
                w,
                levels: cfg.n_feature_levels,
                min,
            });
        }

        // zero-pad so every level divides evenly
        let unit = cfg.patch_size << (cfg.n_feature_levels - 1);
        let hp = h.div_ceil(unit) * unit;
        let wp = w.div_ceil(unit) * unit;
        let padded = pad_image(pixels, hp, wp);
        let px = tape.constant(padded);

        // level 0: non-overlapping patch embedding
        let p = cfg.patch_size;
        let (h0, w0) = (hp / p, wp / p);
        let mut idx = Vec::with_capacity(h0 * w0 * 3 * p * p);
        for gy in 0..h0 {
            for gx in 0..w0 {
                for c in 0..3 {
                    for dy in 0..p {
                        for dx in 0..p {
                            idx.push((c * hp * wp + (gy * p + dy) * wp + (gx * p + dx)) as i64);
                        }
                    }
                }
            }
        }
        let patches = tape.gather(px, Arc::new(idx), vec![h0 * w0, 3 * p * p])?;
        let mut level_tokens = vec![self.patch_proj.forward(tape, bound, patches)?];
        let mut dims = vec![(h0, w0)];

        // deeper levels: merge 2x2 cells
        let d = cfg.d_model;
        for (l, proj) in self.level_projs.iter().enumerate() {
            let (ph, pw) = dims[l];
            let (nh, nw) = (ph / 2, pw / 2);
            let mut idx = Vec::with_capacity(nh * nw * 4 * d);
            for gy in 0..nh {
                for gx in 0..nw {
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let cell = (gy * 2 + dy) * pw + (gx * 2 + dx);
                        for c in 0..d {
                            idx.push((cell * d + c) as i64);
                        }
                    }
                }
            }
            let merged = tape.gather(level_tokens[l], Arc::new(idx), vec![nh * nw, 4 * d])?;
            level_tokens.push(proj.forward(tape, bound, merged)?);
            dims.push((nh, nw));
        }

        let tokens = tape.concat(&level_tokens, 0)?;

        let mut levels = Vec::with_capacity(dims.len());
        let mut ref_points = Vec::new();
        let mut level_of_token = Vec::new();
        let mut start = 0usize;
        for (l, &(lh, lw)) in dims.iter().enumerate() {
            levels.push(LevelMeta { h: lh, w: lw, start });
            for gy in 0..lh {
                for gx in 0..lw {
                    ref_points.push(((gx as f64 + 0.5) / lw as f64, (gy as f64 + 0.5) / lh as f64));
                    level_of_token.push(l);
                }
            }
            start += lh * lw;
        }

        let sincos = tape.constant(grid_positions(&ref_points, d));
        let level_rows = tape.gather_rows(bound.var(self.level_embed), &level_of_token)?;
        let pos = tape.add(sincos, level_rows)?;

        Ok(ImageFeatures {
            tokens,
            pos,
            levels,
            ref_points,
        })
    }
}

fn pad_image(pixels: &Tensor, hp: usize, wp: usize) -> Tensor {
    let shape = pixels.shape();
    let (h, w) = (shape[1], shape[2]);
    if h == hp && w == wp {
        return pixels.clone();
    }
    let mut out = vec![0.0; 3 * hp * wp];
    let data = pixels.data();
    for c in 0..3 {
        for y in 0..h {
            let src = c * h * w + y * w;
            let dst = c * hp * wp + y * wp;
            out[dst..dst + w].copy_from_slice(&data[src..src + w]);
        }
    }
    Tensor::new(vec![3, hp, wp], out).expect("padded image")
}
