//! Word and relative-position embedding tables.
//!
//! Tables are stored one vector per row: the word table is [|V| × d_w] and
//! the position table is [(2L−1) × d_p]. Row `PAD` of the word table is
//! zero and held fixed.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::config::ModelConfig;
use crate::dataset::{Batch, Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Rng, Tensor, Var};
use crate::scalar::Scalar;

pub const WORD_TABLE: &str = "embed.words";
pub const POSITION_TABLE: &str = "embed.positions";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    /// [|V| × d_w]
    pub words: ParamId,
    /// [(2L−1) × d_p]
    pub positions: ParamId,
}

impl EmbeddingParams {
    /// Registers both tables. `words` replaces the random word table when
    /// given (pre-trained vectors); its PAD row is zeroed and frozen.
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        vocab_size: usize,
        words: Option<Tensor<T>>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut table = match words {
            Some(t) => {
                if t.shape() != [vocab_size, cfg.d_w] {
                    return Err(Error::shape(format!(
                        "word table {:?} for vocabulary {vocab_size} × {}",
                        t.shape(),
                        cfg.d_w
                    )));
                }
                t
            }
            None => random_word_table(vocab_size, cfg.d_w, cfg.init_std, rng),
        };
        if vocab_size > PAD {
            table.data_mut()[PAD * cfg.d_w..(PAD + 1) * cfg.d_w].fill(T::zero());
        }
        let words = store.add(WORD_TABLE, table)?;
        {
            let p = store.get_mut(words);
            p.frozen_rows = vec![PAD];
            p.trainable = !cfg.freeze_words;
        }
        let pos: Vec<T> = (0..cfg.position_rows() * cfg.d_p)
            .map(|_| T::from_f64_lossy(rng.normal(0.0, cfg.init_std)))
            .collect();
        let positions = store.add(POSITION_TABLE, Tensor::matrix(cfg.position_rows(), cfg.d_p, pos)?)?;
        Ok(Self { words, positions })
    }
}

/// True for the two lookup tables.
pub fn is_embedding(name: &str) -> bool {
    name == WORD_TABLE || name == POSITION_TABLE
}

/// Gaussian-initialized word table with a zero PAD row.
pub fn random_word_table<T: Scalar>(vocab_size: usize, d_w: usize, std: f64, rng: &mut Rng) -> Tensor<T> {
    let mut data: Vec<T> = (0..vocab_size * d_w)
        .map(|_| T::from_f64_lossy(rng.normal(0.0, std)))
        .collect();
    if vocab_size > PAD {
        data[PAD * d_w..(PAD + 1) * d_w].fill(T::zero());
    }
    Tensor::matrix(vocab_size, d_w, data).expect("sized")
}

/// Reads pre-trained vectors (`token v1 … v_d` per line) for the tokens
/// of `vocab`. Every row is first drawn from N(0, `oov_std`²) so that
/// tokens absent from the file keep a reproducible random vector; PAD is
/// zero.
pub fn load_pretrained<T: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    d_w: usize,
    oov_std: f64,
    rng: &mut Rng,
) -> Result<(Tensor<T>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pretrained(BufReader::new(file), vocab, d_w, oov_std, rng).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// As [`load_pretrained`], from any reader. Returns the table and the
/// number of vocabulary tokens found.
pub fn read_pretrained<T: Scalar>(
    reader: impl BufRead,
    vocab: &Vocabulary,
    d_w: usize,
    oov_std: f64,
    rng: &mut Rng,
) -> Result<(Tensor<T>, usize)> {
    let mut table = random_word_table::<T>(vocab.len(), d_w, oov_std, rng);
    let mut width: Option<usize> = None;
    let mut found = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        let mut parts = line.split_ascii_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        let w = *width.get_or_insert(values.len());
        if values.len() != w {
            return Err(Error::EmbeddingFormat {
                line: lineno + 1,
                message: format!("expected {w} values, found {}", values.len()),
            });
        }
        if w != d_w {
            return Err(Error::EmbeddingFormat {
                line: lineno + 1,
                message: format!("vectors have width {w}, configured d_w is {d_w}"),
            });
        }
        let Some(id) = vocab.get(token).filter(|&id| id != PAD) else {
            continue;
        };
        let row = &mut table.data_mut()[id * d_w..(id + 1) * d_w];
        for (slot, v) in row.iter_mut().zip(&values) {
            let x: f64 = v.parse().map_err(|_| Error::EmbeddingFormat {
                line: lineno + 1,
                message: format!("`{v}` is not a number"),
            })?;
            *slot = T::from_f64_lossy(x);
        }
        found += 1;
    }
    Ok((table, found))
}

/// Table column index of offset i − e: (i − e) + (L − 1), in [0, 2L−2].
pub fn relative_offset(i: usize, e: usize, max_len: usize) -> usize {
    debug_assert!(i < max_len && e < max_len);
    i + max_len - 1 - e
}

/// Word vectors for one padded row of token ids.
pub fn lookup_words<T: Scalar>(g: &mut Graph<'_, T>, table: Var, ids: &[usize]) -> Result<Var> {
    g.gather_rows(table, ids)
}

/// Position vectors relative to `entity` for positions 0..`width`.
pub fn lookup_positions<T: Scalar>(
    g: &mut Graph<'_, T>,
    table: Var,
    width: usize,
    entity: usize,
    max_len: usize,
) -> Result<Var> {
    if width > max_len || entity >= max_len {
        return Err(Error::InvalidArgument(format!(
            "positions up to {width} relative to {entity} exceed max length {max_len}"
        )));
    }
    let ids: Vec<usize> = (0..width).map(|i| relative_offset(i, entity, max_len)).collect();
    g.gather_rows(table, &ids)
}

/// Batch-level word lookup: [B × L_b × d_w].
pub fn lookup_words_batch<T: Scalar>(batch: &Batch, table: &Tensor<T>) -> Result<Tensor<T>> {
    let d = table.cols();
    let width = batch.width();
    let mut out = Vec::with_capacity(batch.len() * width * d);
    for row in &batch.token_ids {
        for &id in row {
            if id >= table.rows() {
                return Err(Error::Index {
                    what: "vocabulary",
                    index: id,
                    size: table.rows(),
                });
            }
            out.extend_from_slice(table.row(id));
        }
    }
    Tensor::new(vec![batch.len(), width, d], out)
}

/// Batch-level position lookup relative to entity 1 (`which` = 1) or 2.
pub fn lookup_positions_batch<T: Scalar>(
    batch: &Batch,
    table: &Tensor<T>,
    which: u8,
    max_len: usize,
) -> Result<Tensor<T>> {
    let d = table.cols();
    let width = batch.width();
    let mut out = Vec::with_capacity(batch.len() * width * d);
    for b in 0..batch.len() {
        let e = if which == 1 { batch.e1[b] } else { batch.e2[b] };
        for i in 0..width {
            out.extend_from_slice(table.row(relative_offset(i, e, max_len)));
        }
    }
    Tensor::new(vec![batch.len(), width, d], out)
}
