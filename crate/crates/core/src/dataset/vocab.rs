use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    itos: Vec<String>,
    stoi: HashMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its index→token list.
    pub fn from_tokens(itos: Vec<String>) -> Result<Self> {
        if itos.get(PAD).map(String::as_str) != Some(PAD_TOKEN)
            || itos.get(UNK).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::InvalidArgument(
                "vocabulary must start with <pad>, <unk>".into(),
            ));
        }
        let mut stoi = HashMap::with_capacity(itos.len());
        for (i, t) in itos.iter().enumerate() {
            if stoi.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self { itos, stoi })
    }

    pub fn len(&self) -> usize {
        self.itos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itos.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.stoi.get(token).copied()
    }

    /// Index of `token`, falling back to UNK.
    pub fn encode(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.itos.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.itos
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(v)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.itos
    }
}

/// PAD, UNK, then every token seen at least `min_count` times, in order of
/// first appearance.
pub fn build_vocab(examples: &[Example], min_count: usize) -> Result<Vocabulary> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a vocabulary from no examples".into(),
        ));
    }
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for ex in examples {
        for t in &ex.tokens {
            let c = counts.entry(t.as_str()).or_insert(0);
            if *c == 0 {
                order.push(t.as_str());
            }
            *c += 1;
        }
    }
    let mut itos = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    itos.extend(
        order
            .into_iter()
            .filter(|t| counts[t] >= min_count && *t != PAD_TOKEN && *t != UNK_TOKEN)
            .map(str::to_string),
    );
    Vocabulary::from_tokens(itos)
}
