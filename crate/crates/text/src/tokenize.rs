use crate::error::{Result, TextError};
use crate::vocab::Vocabulary;

/// A token group belonging to one phrase of the caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseGroup {
    pub phrase_id: usize,
    pub token_indices: Vec<usize>,
}

/// Tokenized caption with exact character spans back into the source text.
#[derive(Debug, Clone)]
pub struct TokenizedCaption {
    pub text: String,
    pub token_ids: Vec<u32>,
    /// Per-token byte offsets `(start, end)` into `text`, ordered and
    /// non-overlapping.
    pub char_spans: Vec<(usize, usize)>,
    pub phrase_groups: Vec<PhraseGroup>,
    pub max_len: usize,
    /// Byte position after the last kept token when the budget truncated the
    /// raw token stream.
    truncated_after: Option<usize>,
}

/// Lowercasing whitespace tokenizer; `'.'` always becomes its own separator
/// token. Spans index the original (un-lowercased) text.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenizedCaption> {
    if text.trim().is_empty() {
        return Err(TextError::EmptyText);
    }
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() || ch == '.' {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
            if ch == '.' {
                spans.push((i, i + ch.len_utf8()));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }

    let truncated_after = if spans.len() > max_len {
        Some(spans[max_len - 1].1)
    } else {
        None
    };
    spans.truncate(max_len);

    let token_ids = spans
        .iter()
        .map(|&(s, e)| {
            let tok = text[s..e].to_lowercase();
            vocab.id_of(&tok).unwrap_or_else(|| vocab.unk_id())
        })
        .collect();

    Ok(TokenizedCaption {
        text: text.to_string(),
        token_ids,
        char_spans: spans,
        phrase_groups: Vec::new(),
        max_len,
        truncated_after,
    })
}

impl TokenizedCaption {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Attach phrase groups from character spans. Every phrase must survive
    /// the token budget and cover at least one whole token.
    pub fn with_phrase_spans(mut self, spans: &[(usize, usize)]) -> Result<Self> {
        let mut groups = Vec::with_capacity(spans.len());
        for (phrase_id, &(start, end)) in spans.iter().enumerate() {
            if let Some(cut) = self.truncated_after {
                if end > cut {
                    return Err(TextError::PhraseTruncated {
                        phrase: self.text.get(start..end).unwrap_or("<out of range>").to_string(),
                        max_len: self.max_len,
                    });
                }
            }
            let token_indices: Vec<usize> = self
                .char_spans
                .iter()
                .enumerate()
                .filter(|(_, &(s, e))| s >= start && e <= end)
                .map(|(i, _)| i)
                .collect();
            let aligned = token_indices
                .first()
                .zip(token_indices.last())
                .map(|(&f, &l)| self.char_spans[f].0 == start && self.char_spans[l].1 == end)
                .unwrap_or(false);
            if !aligned {
                return Err(TextError::MisalignedSpan {
                    start,
                    end,
                    text: self.text.clone(),
                });
            }
            groups.push(PhraseGroup {
                phrase_id,
                token_indices,
            });
        }
        self.phrase_groups = groups;
        Ok(self)
    }

    /// The source string covered by a phrase group.
    pub fn phrase_text(&self, phrase_id: usize) -> Option<&str> {
        let g = self.phrase_groups.iter().find(|g| g.phrase_id == phrase_id)?;
        let s = self.char_spans[*g.token_indices.first()?].0;
        let e = self.char_spans[*g.token_indices.last()?].1;
        self.text.get(s..e)
    }
}
