//! SemEval-2010 Task 8 input: record parsing, vocabulary, batching and the
//! train/dev split.
//!
//! A record in the official release looks like this, with a tab after the
//! id:
//!
//! ```text
//! 8    "<e1>People</e1> have been moving back into <e2>downtown</e2>."
//! Entity-Destination(e1,e2)
//! Comment:
//!
//! ```
//!
//! Sentences are lowercased and split on whitespace; the characters
//! `. , ! ? ; : ' " ( )` are peeled off either end of a word as tokens of
//! their own. An entity span that covers several tokens is represented by
//! its last token.

mod schema;
mod vocab;

pub use schema::{Direction, RelationSchema, FAMILIES, OTHER};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Default maximum sentence length in tokens.
pub const MAX_LEN: usize = 100;

const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: u64,
    pub tokens: Vec<String>,
    /// Token index of entity 1.
    pub e1: usize,
    /// Token index of entity 2, always after `e1`.
    pub e2: usize,
    /// Class id in the [`RelationSchema`].
    pub label: usize,
}

impl Example {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Serializes back into the official record format with the entity
    /// tags around the stored entity tokens.
    pub fn to_record(&self) -> String {
        let schema = RelationSchema::semeval();
        let mut words = Vec::with_capacity(self.tokens.len());
        for (i, t) in self.tokens.iter().enumerate() {
            words.push(if i == self.e1 {
                format!("<e1>{t}</e1>")
            } else if i == self.e2 {
                format!("<e2>{t}</e2>")
            } else {
                t.clone()
            });
        }
        format!(
            "{}\t\"{}\"\n{}\nComment:\n\n",
            self.id,
            words.join(" "),
            schema.name(self.label).unwrap_or(OTHER)
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub max_len: usize,
    /// When false, records without a relation line are accepted and
    /// labelled `Other` (for unlabeled prediction input).
    pub require_label: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_len: MAX_LEN,
            require_label: true,
        }
    }
}

/// Parses a labeled file; the first malformed record aborts.
pub fn parse_semeval(text: &str) -> Result<Vec<Example>> {
    parse_semeval_with(text, &ParseOptions::default())
}

pub fn parse_semeval_with(text: &str, opts: &ParseOptions) -> Result<Vec<Example>> {
    parse_records(text, opts).into_iter().collect()
}

/// Parses every record independently, so one bad record does not hide the
/// others.
pub fn parse_records(text: &str, opts: &ParseOptions) -> Vec<Result<Example>> {
    let schema = RelationSchema::semeval();
    let mut out = Vec::new();
    let mut current: Option<RawRecord> = None;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r');
        if let Some((id, sentence)) = split_sentence_line(line) {
            if let Some(rec) = current.take() {
                out.push(rec.finish(schema, opts));
            }
            current = Some(RawRecord {
                id: id.to_string(),
                sentence: sentence.to_string(),
                relation: None,
                error: None,
            });
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("Comment") {
            continue;
        }
        match current.as_mut() {
            Some(rec) if rec.relation.is_none() => rec.relation = Some(trimmed.to_string()),
            Some(rec) => {
                rec.error
                    .get_or_insert_with(|| format!("unexpected line `{trimmed}`"));
            }
            None => out.push(Err(Error::Parse {
                id: format!("line {}", lineno + 1),
                message: format!("expected `<id>\\t\"<sentence>\"`, found `{trimmed}`"),
            })),
        }
    }
    if let Some(rec) = current.take() {
        out.push(rec.finish(schema, opts));
    }
    out
}

struct RawRecord {
    id: String,
    sentence: String,
    relation: Option<String>,
    error: Option<String>,
}

impl RawRecord {
    fn finish(self, schema: &RelationSchema, opts: &ParseOptions) -> Result<Example> {
        let err = |message: String| Error::Parse {
            id: self.id.clone(),
            message,
        };
        if let Some(e) = &self.error {
            return Err(err(e.clone()));
        }
        let id: u64 = self
            .id
            .parse()
            .map_err(|_| err(format!("record id `{}` is not an integer", self.id)))?;
        let label = match &self.relation {
            Some(name) => schema
                .id(name)
                .ok_or_else(|| err(format!("unknown relation `{name}`")))?,
            None if opts.require_label => return Err(err("missing relation line".into())),
            None => schema.other(),
        };
        let tagged = tokenize_tagged(&self.sentence).map_err(err)?;
        if tagged.tokens.len() > opts.max_len {
            return Err(Error::TooLong {
                id,
                len: tagged.tokens.len(),
                max: opts.max_len,
            });
        }
        Ok(Example {
            id,
            tokens: tagged.tokens,
            e1: tagged.e1,
            e2: tagged.e2,
            label,
        })
    }
}

/// `<digits>\t"<sentence>"`
fn split_sentence_line(line: &str) -> Option<(&str, &str)> {
    let (id, rest) = line.split_once('\t')?;
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let rest = rest.trim();
    let inner = rest.strip_prefix('"')?.strip_suffix('"')?;
    Some((id, inner))
}

struct Tagged {
    tokens: Vec<String>,
    e1: usize,
    e2: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tag {
    Open1,
    Close1,
    Open2,
    Close2,
}

const TAGS: [(&str, Tag); 4] = [
    ("<e1>", Tag::Open1),
    ("</e1>", Tag::Close1),
    ("<e2>", Tag::Open2),
    ("</e2>", Tag::Close2),
];

fn tokenize_tagged(sentence: &str) -> std::result::Result<Tagged, String> {
    let mut tokens = Vec::new();
    let mut seen: Vec<(Tag, usize)> = Vec::new();
    let mut rest = sentence;
    loop {
        let next = TAGS
            .iter()
            .filter_map(|&(s, t)| rest.find(s).map(|pos| (pos, s, t)))
            .min_by_key(|&(pos, _, _)| pos);
        match next {
            Some((pos, s, tag)) => {
                tokenize_plain(&rest[..pos], &mut tokens);
                seen.push((tag, tokens.len()));
                rest = &rest[pos + s.len()..];
            }
            None => {
                tokenize_plain(rest, &mut tokens);
                break;
            }
        }
    }

    let order: Vec<Tag> = seen.iter().map(|&(t, _)| t).collect();
    for (s, t) in TAGS {
        match order.iter().filter(|&&x| x == t).count() {
            0 => return Err(format!("missing {s}")),
            1 => {}
            _ => return Err(format!("repeated {s}")),
        }
    }
    if order != [Tag::Open1, Tag::Close1, Tag::Open2, Tag::Close2] {
        return Err("entity tags must appear as <e1>…</e1> then <e2>…</e2>".into());
    }
    let pos = |t: Tag| seen.iter().find(|&&(x, _)| x == t).map(|&(_, p)| p).unwrap();
    let (s1, c1, s2, c2) = (
        pos(Tag::Open1),
        pos(Tag::Close1),
        pos(Tag::Open2),
        pos(Tag::Close2),
    );
    if c1 == s1 {
        return Err("empty <e1> span".into());
    }
    if c2 == s2 {
        return Err("empty <e2> span".into());
    }
    Ok(Tagged {
        tokens,
        e1: c1 - 1,
        e2: c2 - 1,
    })
}

/// Lowercases and splits `text` into tokens, appending to `out`.
pub fn tokenize_plain(text: &str, out: &mut Vec<String>) {
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let mut w = word.as_str();
        let mut trailing = Vec::new();
        while let Some(c) = w.chars().next().filter(|c| PUNCT.contains(c)) {
            out.push(c.to_string());
            w = &w[c.len_utf8()..];
        }
        while let Some(c) = w.chars().next_back().filter(|c| PUNCT.contains(c)) {
            trailing.push(c.to_string());
            w = &w[..w.len() - c.len_utf8()];
        }
        if !w.is_empty() {
            out.push(w.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
}

/// Padded mini-batch. Row `b` holds example `ids[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<u64>,
    pub token_ids: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub e1: Vec<usize>,
    pub e2: Vec<usize>,
    pub labels: Vec<usize>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Padded width L_b.
    pub fn width(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// Builds one batch from `examples` in the given order.
    pub fn from_examples(examples: &[&Example], vocab: &Vocabulary, max_len: usize) -> Result<Batch> {
        for ex in examples {
            if ex.len() > max_len {
                return Err(Error::TooLong {
                    id: ex.id,
                    len: ex.len(),
                    max: max_len,
                });
            }
        }
        let width = examples.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut b = Batch {
            ids: Vec::with_capacity(examples.len()),
            token_ids: Vec::with_capacity(examples.len()),
            lengths: Vec::with_capacity(examples.len()),
            e1: Vec::with_capacity(examples.len()),
            e2: Vec::with_capacity(examples.len()),
            labels: Vec::with_capacity(examples.len()),
            mask: Vec::with_capacity(examples.len()),
        };
        for ex in examples {
            let mut ids: Vec<usize> = ex.tokens.iter().map(|t| vocab.encode(t)).collect();
            ids.resize(width, PAD);
            b.ids.push(ex.id);
            b.token_ids.push(ids);
            b.lengths.push(ex.len());
            b.e1.push(ex.e1);
            b.e2.push(ex.e2);
            b.labels.push(ex.label);
            b.mask.push((0..width).map(|i| i < ex.len()).collect());
        }
        Ok(b)
    }
}

/// Splits `examples` into padded batches of at most `batch_size`. With a
/// seed the example order is shuffled first (deterministically).
pub fn make_batches(
    examples: &[Example],
    vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    max_len: usize,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if let Some(seed) = shuffle_seed {
        Rng::new(seed).shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            Batch::from_examples(&refs, vocab, max_len)
        })
        .collect()
}

/// Random disjoint split into (train, dev) with exactly `dev_size` dev
/// examples. Both halves keep the input order.
pub fn split_dev(examples: &[Example], dev_size: usize, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    if dev_size > 0 && dev_size >= examples.len() {
        return Err(Error::InvalidArgument(format!(
            "dev_size {dev_size} must be smaller than the {} available examples",
            examples.len()
        )));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut in_dev = vec![false; examples.len()];
    for &i in &order[..dev_size] {
        in_dev[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::with_capacity(dev_size));
    for (ex, &d) in examples.iter().zip(&in_dev) {
        if d {
            dev.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    Ok((train, dev))
}
