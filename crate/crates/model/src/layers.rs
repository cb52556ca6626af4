//! Parameterized building blocks shared by the enhancer and decoder.
//! Every residual block is pre-norm, so zeroing a sublayer's output
//! projection turns the block into the identity map.

use grounder_autodiff::{Tape, Tensor, Var};

use crate::error::Result;
use crate::image::ImageFeatures;
use crate::params::{Bound, Init, ParamId};

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub(crate) struct LinearP {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearP {
    pub fn new(init: &mut Init, name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            w: init.xavier(&format!("{name}.w"), d_in, d_out),
            b: init.zeros(&format!("{name}.b"), &[d_out]),
        }
    }

    /// Both weight and bias start at zero (used for output projections under
    /// test and for refinement heads).
    pub fn new_zero(init: &mut Init, name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            w: init.zeros(&format!("{name}.w"), &[d_in, d_out]),
            b: init.zeros(&format!("{name}.b"), &[d_out]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, bound.var(self.w))?;
        Ok(tape.add(xw, bound.var(self.b))?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNormP {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormP {
    pub fn new(init: &mut Init, name: &str, d: usize) -> Self {
        Self {
            gamma: init.full(&format!("{name}.gamma"), &[d], 1.0),
            beta: init.zeros(&format!("{name}.beta"), &[d]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        Ok(tape.layer_norm(x, bound.var(self.gamma), bound.var(self.beta), LN_EPS)?)
    }
}

/// Multi-head attention with projections for query/key/value and output.
#[derive(Debug, Clone)]
pub(crate) struct MhaP {
    pub q: LinearP,
    pub k: LinearP,
    pub v: LinearP,
    pub o: LinearP,
    pub n_heads: usize,
}

impl MhaP {
    pub fn new(init: &mut Init, name: &str, d: usize, n_heads: usize) -> Self {
        Self {
            q: LinearP::new(init, &format!("{name}.q"), d, d),
            k: LinearP::new(init, &format!("{name}.k"), d, d),
            v: LinearP::new(init, &format!("{name}.v"), d, d),
            o: LinearP::new(init, &format!("{name}.o"), d, d),
            n_heads,
        }
    }

    /// `q_in [n,d]`, `k_in/v_in [m,d]`; `mask` is added to the `[n,m]`
    /// score matrix before softmax (0 = keep, large negative = drop).
    pub fn attend(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        q_in: Var,
        k_in: Var,
        v_in: Var,
        mask: Option<&Tensor>,
    ) -> Result<Var> {
        let d = tape.shape(q_in)[1];
        let dh = d / self.n_heads;
        let q = self.q.forward(tape, bound, q_in)?;
        let k = self.k.forward(tape, bound, k_in)?;
        let v = self.v.forward(tape, bound, v_in)?;
        let mask_var = match mask {
            Some(m) => Some(tape.constant(m.clone())),
            None => None,
        };
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose2(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let mut scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
            if let Some(m) = mask_var {
                scores = tape.add(scores, m)?;
            }
            let attn = tape.softmax(scores, 1)?;
            heads.push(tape.matmul(attn, vh)?);
        }
        let merged = tape.concat(&heads, 1)?;
        self.o.forward(tape, bound, merged)
    }
}

/// Two-layer feed-forward block with SiLU. The activation is smooth, which
/// keeps finite-difference gradient checks clean.
#[derive(Debug, Clone)]
pub(crate) struct FfnP {
    pub lin1: LinearP,
    pub lin2: LinearP,
}

impl FfnP {
    pub fn new(init: &mut Init, name: &str, d: usize, hidden: usize) -> Self {
        Self {
            lin1: LinearP::new(init, &format!("{name}.lin1"), d, hidden),
            lin2: LinearP::new(init, &format!("{name}.lin2"), hidden, d),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = self.lin1.forward(tape, bound, x)?;
        let h = tape.silu(h)?;
        self.lin2.forward(tape, bound, h)
    }
}

/// Small MLP used by box heads; the final layer starts at zero so initial
/// boxes coincide with their reference anchors.
#[derive(Debug, Clone)]
pub(crate) struct MlpP {
    pub lin1: LinearP,
    pub lin2: LinearP,
}

impl MlpP {
    pub fn new(init: &mut Init, name: &str, d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            lin1: LinearP::new(init, &format!("{name}.lin1"), d_in, hidden),
            lin2: LinearP::new_zero(init, &format!("{name}.lin2"), hidden, d_out),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = self.lin1.forward(tape, bound, x)?;
        let h = tape.silu(h)?;
        self.lin2.forward(tape, bound, h)
    }
}

/// Where a deformable-attention query anchors its sampling grid.
pub(crate) enum RefMode<'a> {
    /// Fixed normalized (x, y) per query; offsets are in cells of each level.
    Points(&'a [(f64, f64)]),
    /// Anchor boxes `[nq, 4]` (cx, cy, w, h); offsets scale with box size and
    /// gradients flow into the anchors.
    Boxes(Var),
}

/// Multi-scale deformable attention.
#[derive(Debug, Clone)]
pub(crate) struct DeformP {
    pub value: LinearP,
    pub offsets: LinearP,
    pub weights: LinearP,
    pub out: LinearP,
    pub n_heads: usize,
    pub n_points: usize,
}

impl DeformP {
    /// Offset prediction starts as a small fixed ring around the reference
    /// (weight zero, ring bias): sampling exactly on the integer lattice
    /// would sit on interpolation kinks. Attention weights start uniform.
    pub fn new(init: &mut Init, name: &str, d: usize, n_heads: usize, n_levels: usize, n_points: usize) -> Self {
        let value = LinearP::new(init, &format!("{name}.value"), d, d);
        let out = LinearP::new(init, &format!("{name}.out"), d, d);

        let off_dim = n_heads * n_levels * n_points * 2;
        let offsets_w = init.zeros(&format!("{name}.offsets.w"), &[d, off_dim]);
        let mut bias = vec![0.0; off_dim];
        for h in 0..n_heads {
            for l in 0..n_levels {
                for p in 0..n_points {
                    // phase keeps both components away from zero, so initial
                    // sampling never lands exactly on a grid line (bilinear
                    // interpolation is non-smooth there)
                    let angle = std::f64::consts::TAU * ((h * n_points + p) as f64 + 0.3)
                        / (n_heads * n_points) as f64;
                    let radius = 0.5 * (p + 1) as f64 / n_points as f64;
                    let at = ((h * n_levels + l) * n_points + p) * 2;
                    bias[at] = radius * angle.cos();
                    bias[at + 1] = radius * angle.sin();
                }
            }
        }
        let offsets_b = init.store.register(
            &format!("{name}.offsets.b"),
            Tensor::new(vec![off_dim], bias).expect("ring bias"),
        );

        let wt_dim = n_heads * n_levels * n_points;
        let weights_w = init.zeros(&format!("{name}.weights.w"), &[d, wt_dim]);
        let weights_b = init.zeros(&format!("{name}.weights.b"), &[wt_dim]);

        Self {
            value,
            offsets: LinearP { w: offsets_w, b: offsets_b },
            weights: LinearP { w: weights_w, b: weights_b },
            out,
            n_heads,
            n_points,
        }
    }

    pub fn attend(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        query: Var,
        img: &ImageFeatures,
        refs: RefMode,
    ) -> Result<Var> {
        let nq = tape.shape(query)[0];
        let d = tape.shape(query)[1];
        let dh = d / self.n_heads;
        let n_levels = img.levels.len();
        let p = self.n_points;

        let value = self.value.forward(tape, bound, img.tokens)?;
        // per-level value grids [d, h, w]
        let mut grids = Vec::with_capacity(n_levels);
        for lvl in &img.levels {
            let rows: Vec<usize> = (lvl.start..lvl.start + lvl.h * lvl.w).collect();
            let sel = tape.gather_rows(value, &rows)?;
            let t = tape.transpose2(sel)?;
            grids.push(tape.reshape(t, vec![d, lvl.h, lvl.w])?);
        }

        let off = self.offsets.forward(tape, bound, query)?; // [nq, H*L*P*2]
        let wts = self.weights.forward(tape, bound, query)?; // [nq, H*L*P]

        // expand refs to one row per sampling point
        let rep_idx: Vec<usize> = (0..nq).flat_map(|q| std::iter::repeat(q).take(p)).collect();
        let (centers, box_wh) = match refs {
            RefMode::Points(pts) => {
                let mut data = Vec::with_capacity(nq * p * 2);
                for &(x, y) in pts {
                    for _ in 0..p {
                        data.push(x);
                        data.push(y);
                    }
                }
                let c = tape.constant(Tensor::new(vec![nq * p, 2], data)?);
                (c, None)
            }
            RefMode::Boxes(boxes) => {
                let cxy = tape.slice_cols(boxes, 0, 2)?;
                let wh = tape.slice_cols(boxes, 2, 2)?;
                let c = tape.gather_rows(cxy, &rep_idx)?;
                let s = tape.gather_rows(wh, &rep_idx)?;
                (c, Some(s))
            }
        };

        // aggregation matrix summing the P points of each query
        let mut agg = vec![0.0; nq * p * nq];
        for q in 0..nq {
            for pt in 0..p {
                agg[(q * p + pt) * nq + q] = 1.0;
            }
        }
        let agg = tape.constant(Tensor::new(vec![nq * p, nq], agg)?);

        let mut head_outputs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let wts_h = tape.slice_cols(wts, h * n_levels * p, n_levels * p)?;
            let wts_h = tape.softmax(wts_h, 1)?; // normalize over levels x points

            let mut acc: Option<Var> = None;
            for (l, lvl) in img.levels.iter().enumerate() {
                let off_hl = tape.slice_cols(off, ((h * n_levels + l) * p) * 2, p * 2)?;
                let off_hl = tape.reshape(off_hl, vec![nq * p, 2])?;

                // normalized sampling locations
                let loc = match &box_wh {
                    None => {
                        let scale = tape.constant(Tensor::new(
                            vec![2],
                            vec![1.0 / lvl.w as f64, 1.0 / lvl.h as f64],
                        )?);
                        let scaled = tape.mul(off_hl, scale)?;
                        tape.add(scaled, centers)?
                    }
                    Some(wh) => {
                        let scaled = tape.mul(off_hl, *wh)?;
                        let scaled = tape.scale(scaled, 0.5 / p as f64)?;
                        tape.add(scaled, centers)?
                    }
                };
                // to pixel coordinates of this level's grid
                let px_scale = tape.constant(Tensor::new(
                    vec![2],
                    vec![lvl.w as f64, lvl.h as f64],
                )?);
                let px = tape.mul(loc, px_scale)?;
                let px = tape.add_scalar(px, -0.5)?;

                let sampled = tape.bilinear_sample(grids[l], px)?; // [d, nq*P]
                let rows: Vec<usize> = (h * dh..(h + 1) * dh).collect();
                let sampled_h = tape.gather_rows(sampled, &rows)?; // [dh, nq*P]

                let w_hl = tape.slice_cols(wts_h, l * p, p)?;
                let w_flat = tape.reshape(w_hl, vec![nq * p])?;
                let weighted = tape.mul(sampled_h, w_flat)?;
                let pooled = tape.matmul(weighted, agg)?; // [dh, nq]
                acc = Some(match acc {
                    None => pooled,
                    Some(a) => tape.add(a, pooled)?,
                });
            }
            let pooled = acc.expect("at least one level");
            head_outputs.push(tape.transpose2(pooled)?); // [nq, dh]
        }
        let merged = tape.concat(&head_outputs, 1)?;
        self.out.forward(tape, bound, merged)
    }
}
