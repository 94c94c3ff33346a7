//! Attention internals for inspection: self-attention maps, entity-aware
//! weights α, latent type weights and the per-type entity listing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::softmax;
use crate::dataset::{Example, RelationSchema};
use crate::error::Result;
use crate::model::{argmax, Input, Model};
use crate::scalar::Scalar;

/// Entities listed per latent type in [`TypesReport`].
pub const TOP_ENTITIES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAttnRecord {
    pub head: usize,
    pub row: usize,
    pub col: usize,
    pub row_token: String,
    pub col_token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityTrace {
    pub position: usize,
    pub token: String,
    /// Latent type weights a (sum to 1).
    pub type_weights: Vec<f64>,
    /// argmax of `type_weights`, lowest index on ties.
    pub type_id: usize,
    /// Type representation t.
    pub type_vector: Vec<f64>,
    /// Scores h_e · c_k for every type k.
    pub type_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub id: u64,
    pub tokens: Vec<String>,
    pub predicted: String,
    pub gold: String,
    /// r matrices, each n × n, row = query position.
    pub heads: Vec<Vec<Vec<f64>>>,
    pub alpha: Vec<f64>,
    pub entities: [EntityTrace; 2],
}

impl AttentionTrace {
    /// Flattened `{head, row, col, row_token, col_token, weight}` records.
    pub fn self_attention_records(&self) -> Vec<SelfAttnRecord> {
        let mut out = Vec::new();
        for (head, m) in self.heads.iter().enumerate() {
            for (row, weights) in m.iter().enumerate() {
                for (col, &weight) in weights.iter().enumerate() {
                    out.push(SelfAttnRecord {
                        head,
                        row,
                        col,
                        row_token: self.tokens[row].clone(),
                        col_token: self.tokens[col].clone(),
                        weight,
                    });
                }
            }
        }
        out
    }
}

fn to_f64<T: Scalar>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

/// Eval-mode forward pass over one example, keeping the attention data.
pub fn trace_sentence<T: Scalar>(model: &Model<T>, example: &Example) -> Result<AttentionTrace> {
    let schema = RelationSchema::semeval();
    let input = Input::new(example, &model.vocab);
    let n = input.length;
    let mut g = model.graph();
    let f = model.forward(&mut g, &input, None)?;
    let heads = f
        .self_attention
        .iter()
        .map(|&w| g.value(w).chunks(n).map(to_f64).collect())
        .collect();
    let types = model.store.value(model.params.types.types);
    let entity = |g: &crate::numerics::Graph<'_, T>, pos: usize, a, t| {
        let h = &g.value(f.hidden)[pos * 2 * model.config.d_h..(pos + 1) * 2 * model.config.d_h];
        let type_scores = (0..types.rows())
            .map(|k| {
                let mut s = T::zero();
                for (x, c) in h.iter().zip(types.row(k)) {
                    s += *x * *c;
                }
                s.as_f64()
            })
            .collect();
        let a: Vec<T> = g.value(a).to_vec();
        EntityTrace {
            position: pos,
            token: example.tokens[pos].clone(),
            type_id: argmax(&a),
            type_weights: to_f64(&a),
            type_vector: to_f64(g.value(t)),
            type_scores,
        }
    };
    let e1 = entity(&g, input.e1, f.pooled.a1, f.pooled.t1);
    let e2 = entity(&g, input.e2, f.pooled.a2, f.pooled.t2);
    let probs = softmax(g.value(f.logits));
    Ok(AttentionTrace {
        id: example.id,
        tokens: example.tokens.clone(),
        predicted: schema.name(argmax(&probs)).unwrap_or_default().to_string(),
        gold: schema.name(example.label).unwrap_or_default().to_string(),
        heads,
        alpha: to_f64(g.value(f.pooled.alpha)),
        entities: [e1, e2],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeEntry {
    pub type_id: usize,
    pub vector: Vec<f64>,
    /// Entities with the highest h_e · c_k, best first.
    pub top_entities: Vec<RankedEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub sentence: u64,
    pub which: u8,
    pub token: String,
    pub type_id: usize,
    pub type_weights: Vec<f64>,
    pub type_vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypesReport {
    pub types: Vec<TypeEntry>,
    pub entities: Vec<EntityRecord>,
}

/// Per-type listing of the min(50, #distinct entity tokens) entities in
/// `traces` with the highest score. A token seen several times keeps its
/// best score; ties are ordered by token.
pub fn types_report<T: Scalar>(model: &Model<T>, traces: &[AttentionTrace]) -> TypesReport {
    let c = model.store.value(model.params.types.types);
    let mut entities = Vec::new();
    let mut best: Vec<BTreeMap<&str, f64>> = vec![BTreeMap::new(); c.rows()];
    for tr in traces {
        for (which, e) in tr.entities.iter().enumerate() {
            entities.push(EntityRecord {
                sentence: tr.id,
                which: which as u8 + 1,
                token: e.token.clone(),
                type_id: e.type_id,
                type_weights: e.type_weights.clone(),
                type_vector: e.type_vector.clone(),
            });
            for (k, &s) in e.type_scores.iter().enumerate() {
                let slot = best[k].entry(e.token.as_str()).or_insert(f64::NEG_INFINITY);
                if s > *slot {
                    *slot = s;
                }
            }
        }
    }
    let types = best
        .into_iter()
        .enumerate()
        .map(|(k, scores)| {
            let mut ranked: Vec<RankedEntity> = scores
                .into_iter()
                .map(|(token, score)| RankedEntity {
                    token: token.to_string(),
                    score,
                })
                .collect();
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
            ranked.truncate(TOP_ENTITIES);
            TypeEntry {
                type_id: k,
                vector: to_f64(c.row(k)),
                top_entities: ranked,
            }
        })
        .collect();
    TypesReport { types, entities }
}
