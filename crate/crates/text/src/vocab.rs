use std::collections::HashMap;
use std::path::Path;

use crate::error::{Result, TextError};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SEP_TOKEN: &str = ".";

/// Token-string to id map with dense ids. Id 0 is always the pad token;
/// unknown and separator ids follow.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from plain words; specials are prepended automatically.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for special in [PAD_TOKEN, UNK_TOKEN, SEP_TOKEN] {
            v.insert(special);
        }
        for w in words {
            v.insert(&w.as_ref().to_lowercase());
        }
        v
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn unk_id(&self) -> u32 {
        self.ids[UNK_TOKEN]
    }

    pub fn sep_id(&self) -> u32 {
        self.ids[SEP_TOKEN]
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// One token per line, line number = id, UTF-8.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let mut tokens = Vec::new();
        let mut ids = HashMap::new();
        for (i, line) in content.lines().enumerate() {
            if ids.insert(line.to_string(), i as u32).is_some() {
                return Err(TextError::Vocab(format!("duplicate token {line:?} at line {i}")));
            }
            tokens.push(line.to_string());
        }
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(TextError::Vocab(format!(
                "line 0 must be the pad token {PAD_TOKEN:?}"
            )));
        }
        if !ids.contains_key(UNK_TOKEN) || !ids.contains_key(SEP_TOKEN) {
            return Err(TextError::Vocab("missing unknown or separator token".into()));
        }
        Ok(Self { tokens, ids })
    }
}
