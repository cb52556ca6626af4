//! Assemble -> tokenize -> span recovery must reproduce every category
//! verbatim, and negative-augmented token columns must stay empty in the
//! positive map.

use proptest::prelude::*;

use grounder_text::{
    assemble_ovd_caption, assemble_with_negatives, build_positive_map, tokenize, Vocabulary,
};

fn category_strategy() -> impl Strategy<Value = String> {
    // 1..=3 words of lowercase/digit chars, single spaces between
    prop::collection::vec("[a-z0-9]{1,8}", 1..=3).prop_map(|ws| ws.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn assemble_tokenize_round_trip(cats in prop::collection::vec(category_strategy(), 1..12)) {
        let (caption, spans) = assemble_ovd_caption(&cats).unwrap();
        let vocab = Vocabulary::from_words(cats.iter().flat_map(|c| c.split(' ')));
        let tokenized = tokenize(&caption, &vocab, 256).unwrap()
            .with_phrase_spans(&spans)
            .unwrap();
        for (i, cat) in cats.iter().enumerate() {
            prop_assert_eq!(tokenized.phrase_text(i).unwrap(), cat.as_str());
        }
    }

    #[test]
    fn negative_columns_stay_empty(
        seed in 0u64..1000,
        n_neg in 0usize..4,
    ) {
        let positives = vec!["cat".to_string()];
        let pool = vec!["dog".into(), "car".into(), "tree".into(), "lamp".into(), "cup".into()];
        let aug = assemble_with_negatives(&positives, &pool, n_neg, seed).unwrap();
        let vocab = Vocabulary::from_words(["cat", "dog", "car", "tree", "lamp", "cup"]);
        let tokenized = tokenize(&aug.caption, &vocab, 256).unwrap()
            .with_phrase_spans(&aug.spans)
            .unwrap();
        // one instance bound to the positive phrase
        let map = build_positive_map(&tokenized, &[0]).unwrap();
        let positive_tokens: &[usize] = &tokenized.phrase_groups[0].token_indices;
        for col in 0..map.n_tokens() {
            if positive_tokens.contains(&col) {
                prop_assert!(!map.column_is_empty(col));
            } else {
                prop_assert!(map.column_is_empty(col), "column {} unexpectedly positive", col);
            }
        }
    }
}

#[test]
fn same_seed_reproduces_selection() {
    let positives = vec!["cat".to_string()];
    let pool: Vec<String> = (0..20).map(|i| format!("thing{i}")).collect();
    let a = assemble_with_negatives(&positives, &pool, 5, 123).unwrap();
    let b = assemble_with_negatives(&positives, &pool, 5, 123).unwrap();
    assert_eq!(a.caption, b.caption);
}
