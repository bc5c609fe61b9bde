//! Tokenization, vocabulary and the token-embedding table.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Init, ParamSet, Var};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const RESERVED: usize = 2;
pub const MAX_TOKENS: usize = 40;

/// Lowercases, turns every non-alphanumeric character into a space, splits on
/// whitespace, then splits each word wherever it switches between digits and
/// other characters (so `14th` gives `14`, `th`).
pub fn tokenize(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let mut tokens = Vec::new();
    for word in cleaned.split_whitespace() {
        let mut current = String::new();
        let mut digit_run = None;
        for c in word.chars() {
            let is_digit = c.is_numeric();
            if digit_run.is_some_and(|d| d != is_digit) {
                tokens.push(std::mem::take(&mut current));
            }
            digit_run = Some(is_digit);
            current.push(c);
        }
        tokens.push(current);
    }
    tokens
}

/// Token to id map with PAD = 0 and UNK = 1 reserved. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary over `tokens` in the given order, ids starting at 2.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (k, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("invalid token {t:?}"),
                });
            }
            if ids.insert(t.clone(), k + RESERVED).is_some() {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("duplicate token {t:?}"),
                });
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    /// Total id count including the reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        match id {
            PAD => Some("<pad>"),
            UNK => Some("<unk>"),
            _ => self.tokens.get(id - RESERVED).map(String::as_str),
        }
    }

    /// Non-reserved tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, line k holding id k + 2.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_string(&text)
    }
}

/// Tokens seen at least `min_count` times get ids in first-appearance order.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("vocabulary corpus".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in corpus.iter().flatten() {
        let t = t.as_ref();
        let c = counts.entry(t).or_insert(0);
        if *c == 0 {
            order.push(t);
        }
        *c += 1;
    }
    let kept = order
        .into_iter()
        .filter(|t| counts[t] >= min_count.max(1))
        .map(str::to_owned)
        .collect();
    Vocabulary::from_tokens(kept)
}

/// Learned lookup table, vocabulary size × D, initialized uniform(-0.1, 0.1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Embedding {
    pub table: usize,
    pub vocab_size: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn register(params: &mut ParamSet, name: &str, vocab_size: usize, dim: usize, rng: &mut Rng) -> Self {
        let table = params.add(format!("{name}.table"), &[vocab_size, dim], Init::Uniform(0.1), rng);
        Embedding { table, vocab_size, dim }
    }

    /// N_T×D rows for `ids`.
    pub fn apply(&self, g: &mut Graph, vars: &[Var], ids: &[usize]) -> Result<Var> {
        g.gather(vars[self.table], ids)
    }
}
