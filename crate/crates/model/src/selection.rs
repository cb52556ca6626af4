//! Language-guided query selection: rank image tokens by their best text
//! similarity and keep the top `num_query` as decoder queries with anchors
//! from the encoder box head.

use grounder_autodiff::{Tape, Tensor, Var};

use crate::config::Similarity;
use crate::error::{ModelError, Result};

/// Per-image-token selection score: the maximum over text tokens of the
/// chosen similarity.
///
/// `scaled_dot` reads the contrastive head's logits directly. `cosine`
/// ignores the bias and normalizes both sides, so the ranking is invariant
/// under positive rescaling of either feature set.
pub fn selection_scores(
    visual: &Tensor,
    text: &Tensor,
    mode: Similarity,
    bias: f64,
) -> Vec<f64> {
    let d = visual.shape()[1];
    let n = visual.shape()[0];
    let m = text.shape()[0];
    let vd = visual.data();
    let td = text.data();
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let vrow = &vd[i * d..(i + 1) * d];
        let mut best = f64::NEG_INFINITY;
        for j in 0..m {
            let trow = &td[j * d..(j + 1) * d];
            let dot: f64 = vrow.iter().zip(trow).map(|(a, b)| a * b).sum();
            let s = match mode {
                Similarity::ScaledDot => dot / (d as f64).sqrt() + bias,
                Similarity::Cosine => {
                    let nv: f64 = vrow.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nt: f64 = trow.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if nv == 0.0 || nt == 0.0 {
                        0.0
                    } else {
                        dot / (nv * nt)
                    }
                }
            };
            best = best.max(s);
        }
        scores.push(best);
    }
    scores
}

/// Top-k indices ordered by score descending; ties broken by lower index.
pub fn select_top(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(ModelError::TooManyQueries {
            num_query: k,
            n_tokens: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

/// Decoder query state: learnable content plus normalized cxcywh anchors.
pub struct QueryState {
    /// `[num_query, d_model]`
    pub content: Var,
    /// `[num_query, 4]`, each coordinate in (0, 1) via sigmoid.
    pub anchors: Var,
    /// Image-token indices the queries were initialized from.
    pub selected: Vec<usize>,
}

/// Reference-box prior for an image token: centered on the token's grid
/// cell, sized a couple of cells per side.
pub fn anchor_prior_logits(tape: &mut Tape, ref_points: &[(f64, f64)], levels: &[crate::image::LevelMeta]) -> Result<Var> {
    let mut data = Vec::with_capacity(ref_points.len() * 4);
    let eps = 1e-6;
    let logit = |p: f64| {
        let p = p.clamp(eps, 1.0 - eps);
        (p / (1.0 - p)).ln()
    };
    let mut level_of = vec![0usize; ref_points.len()];
    for (l, lvl) in levels.iter().enumerate() {
        for t in lvl.start..lvl.start + lvl.h * lvl.w {
            level_of[t] = l;
        }
    }
    for (t, &(x, y)) in ref_points.iter().enumerate() {
        let lvl = &levels[level_of[t]];
        let w0 = (2.0 / lvl.w as f64).clamp(0.02, 0.8);
        let h0 = (2.0 / lvl.h as f64).clamp(0.02, 0.8);
        data.extend_from_slice(&[logit(x), logit(y), logit(w0), logit(h0)]);
    }
    Ok(tape.constant(Tensor::new(vec![ref_points.len(), 4], data)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_break_prefers_lower_index() {
        let sel = select_top(&[0.2, 0.9, 0.9], 2).unwrap();
        assert_eq!(sel, vec![1, 2]);
    }

    #[test]
    fn degenerate_top_k_keeps_everything_ordered() {
        let sel = select_top(&[0.1, 0.5, 0.3], 3).unwrap();
        assert_eq!(sel, vec![1, 2, 0]);
    }

    #[test]
    fn too_many_queries_is_an_error() {
        assert!(matches!(
            select_top(&[0.1], 2),
            Err(ModelError::TooManyQueries { num_query: 2, n_tokens: 1 })
        ));
    }

    #[test]
    fn cosine_scores_are_scale_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v = Tensor::from_fn_rng(&[6, 8], &mut rng, |r| r.gen_range(-1.0..1.0));
            let t = Tensor::from_fn_rng(&[3, 8], &mut rng, |r| r.gen_range(-1.0..1.0));
            let scale: f64 = rng.gen_range(0.01..100.0);
            let t_scaled =
                Tensor::new(vec![3, 8], t.data().iter().map(|x| x * scale).collect()).unwrap();
            let s1 = selection_scores(&v, &t, Similarity::Cosine, 0.0);
            let s2 = selection_scores(&v, &t_scaled, Similarity::Cosine, 0.0);
            let k1 = select_top(&s1, 3).unwrap();
            let k2 = select_top(&s2, 3).unwrap();
            assert_eq!(k1, k2);
        }
    }
}
