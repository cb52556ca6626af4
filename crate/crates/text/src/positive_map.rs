use crate::error::{Result, TextError};
use crate::tokenize::TokenizedCaption;

/// Binary GT-instance x token matrix: positives of instance `i` are exactly
/// the tokens of its phrase group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveMap {
    n_rows: usize,
    n_cols: usize,
    bits: Vec<bool>,
}

impl PositiveMap {
    pub fn n_instances(&self) -> usize {
        self.n_rows
    }

    pub fn n_tokens(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.bits[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Dense 0/1 matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Column has no positive in any row.
    pub fn column_is_empty(&self, col: usize) -> bool {
        (0..self.n_rows).all(|r| !self.get(r, col))
    }
}

/// Row `i` carries 1s exactly on instance `i`'s phrase tokens.
pub fn build_positive_map(
    caption: &TokenizedCaption,
    instance_phrase_ids: &[usize],
) -> Result<PositiveMap> {
    let n_cols = caption.len();
    let n_rows = instance_phrase_ids.len();
    let mut bits = vec![false; n_rows * n_cols];
    for (row, &pid) in instance_phrase_ids.iter().enumerate() {
        let group = caption
            .phrase_groups
            .iter()
            .find(|g| g.phrase_id == pid)
            .ok_or(TextError::DanglingPhraseId(pid))?;
        for &t in &group.token_indices {
            bits[row * n_cols + t] = true;
        }
    }
    Ok(PositiveMap {
        n_rows,
        n_cols,
        bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize;
    use crate::vocab::Vocabulary;

    #[test]
    fn whole_caption_phrase_covers_all_tokens() {
        let v = Vocabulary::from_words(["big", "red", "ball"]);
        let c = tokenize("big red ball", &v, 64)
            .unwrap()
            .with_phrase_spans(&[(0, 12)])
            .unwrap();
        let m = build_positive_map(&c, &[0]).unwrap();
        assert_eq!(m.row(0), &[true, true, true]);
    }

    #[test]
    fn shared_phrase_gives_identical_rows() {
        let v = Vocabulary::from_words(["cat", "dog"]);
        let c = tokenize("cat. dog.", &v, 64)
            .unwrap()
            .with_phrase_spans(&[(0, 3), (5, 8)])
            .unwrap();
        // two boxes refer to the same phrase
        let m = build_positive_map(&c, &[0, 0, 1]).unwrap();
        assert_eq!(m.row(0), m.row(1));
        assert!(m.get(0, 0) && !m.get(0, 2));
        assert!(m.get(2, 2));
        // every GT row has at least one positive token
        for r in 0..m.n_instances() {
            assert!(m.row(r).iter().any(|&b| b));
        }
    }

    #[test]
    fn dangling_phrase_id_errors() {
        let v = Vocabulary::from_words(["cat"]);
        let c = tokenize("cat.", &v, 64)
            .unwrap()
            .with_phrase_spans(&[(0, 3)])
            .unwrap();
        assert!(matches!(
            build_positive_map(&c, &[1]).unwrap_err(),
            TextError::DanglingPhraseId(1)
        ));
    }
}
