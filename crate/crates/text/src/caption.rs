use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TextError};

/// Join category names into one caption: `"People. Ball. Racket. Cat."`.
/// Returns the caption and one character span per category.
pub fn assemble_ovd_caption(categories: &[String]) -> Result<(String, Vec<(usize, usize)>)> {
    if categories.is_empty() {
        return Err(TextError::NoCategories);
    }
    let mut caption = String::new();
    let mut spans = Vec::with_capacity(categories.len());
    for (i, cat) in categories.iter().enumerate() {
        if cat.trim().is_empty() || cat.contains(". ") {
            return Err(TextError::CategoryContainsSeparator(cat.clone()));
        }
        if i > 0 {
            caption.push(' ');
        }
        let start = caption.len();
        caption.push_str(cat);
        spans.push((start, caption.len()));
        caption.push('.');
    }
    Ok((caption, spans))
}

/// Negatives drawn from a pool, excluding case-insensitive duplicates of the
/// positives. Reproducible from the seed.
pub fn sample_negatives(
    positives: &[String],
    pool: &[String],
    n_neg: usize,
    rng_seed: u64,
) -> Result<Vec<String>> {
    let lowered: Vec<String> = positives.iter().map(|p| p.to_lowercase()).collect();
    let candidates: Vec<&String> = pool
        .iter()
        .filter(|p| !lowered.contains(&p.to_lowercase()))
        .collect();
    if candidates.len() < n_neg {
        return Err(TextError::PoolTooSmall {
            pool: candidates.len(),
            requested: n_neg,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen: Vec<String> = candidates
        .choose_multiple(&mut rng, n_neg)
        .map(|s| (*s).clone())
        .collect();
    Ok(chosen)
}

/// Caption with `n_neg` sampled negatives appended after the positives.
#[derive(Debug, Clone)]
pub struct AugmentedCaption {
    pub caption: String,
    /// One span per phrase: positives first, then negatives.
    pub spans: Vec<(usize, usize)>,
    pub n_positive: usize,
}

pub fn assemble_with_negatives(
    positives: &[String],
    pool: &[String],
    n_neg: usize,
    rng_seed: u64,
) -> Result<AugmentedCaption> {
    let negatives = sample_negatives(positives, pool, n_neg, rng_seed)?;
    let mut all = positives.to_vec();
    all.extend(negatives);
    let (caption, spans) = assemble_ovd_caption(&all)?;
    Ok(AugmentedCaption {
        caption,
        spans,
        n_positive: positives.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn paper_example_string() {
        let (caption, spans) =
            assemble_ovd_caption(&strs(&["People", "Ball", "Racket", "Cat"])).unwrap();
        assert_eq!(caption, "People. Ball. Racket. Cat.");
        assert_eq!(spans.len(), 4);
        assert_eq!(&caption[spans[2].0..spans[2].1], "Racket");
    }

    #[test]
    fn singleton_category() {
        let (caption, _) = assemble_ovd_caption(&strs(&["dog"])).unwrap();
        assert_eq!(caption, "dog.");
    }

    #[test]
    fn separator_inside_category_rejected() {
        let err = assemble_ovd_caption(&strs(&["u.s. flag"])).unwrap_err();
        assert!(matches!(err, TextError::CategoryContainsSeparator(_)));
    }

    #[test]
    fn zero_negatives_leaves_caption_unchanged() {
        let aug = assemble_with_negatives(&strs(&["cat"]), &strs(&["dog", "car"]), 0, 7).unwrap();
        assert_eq!(aug.caption, "cat.");
        assert_eq!(aug.n_positive, 1);
        assert_eq!(aug.spans.len(), 1);
    }

    #[test]
    fn two_negatives_appended() {
        let aug = assemble_with_negatives(&strs(&["cat"]), &strs(&["dog", "car"]), 2, 0).unwrap();
        assert_eq!(aug.n_positive, 1);
        assert_eq!(aug.spans.len(), 3);
        assert!(aug.caption == "cat. dog. car." || aug.caption == "cat. car. dog.");
    }

    #[test]
    fn positives_excluded_from_pool() {
        // "CAT" differs only by case; it must never be drawn
        for seed in 0..1000u64 {
            let chosen =
                sample_negatives(&strs(&["cat"]), &strs(&["CAT", "dog", "car"]), 2, seed).unwrap();
            assert!(!chosen.iter().any(|c| c.eq_ignore_ascii_case("cat")), "seed {seed}");
        }
    }

    #[test]
    fn pool_too_small_errors() {
        let err = sample_negatives(&strs(&["cat"]), &strs(&["cat", "dog"]), 2, 0).unwrap_err();
        assert!(matches!(err, TextError::PoolTooSmall { pool: 1, requested: 2 }));
    }

    #[test]
    fn same_seed_same_sample() {
        let pool = strs(&["a", "b", "c", "d", "e", "f"]);
        let x = sample_negatives(&[], &pool, 3, 42).unwrap();
        let y = sample_negatives(&[], &pool, 3, 42).unwrap();
        assert_eq!(x, y);
        let z = sample_negatives(&[], &pool, 3, 43).unwrap();
        // almost surely different; if not, at least deterministic
        let _ = z;
    }
}
