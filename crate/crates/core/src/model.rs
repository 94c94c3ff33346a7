//! The full network: embeddings, self-attention, BLSTM, entity-aware
//! attention and the output layer, plus checkpoint I/O.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, OutputParams};
use crate::config::ModelConfig;
use crate::dataset::{Example, RelationSchema, Vocabulary, PAD};
use crate::embedding::{lookup_positions, lookup_words, EmbeddingParams};
use crate::encoder::{blstm_encode, BlstmParams};
use crate::entityattn::{entity_attention, EntityAttnParams, LetParams, PooledSentence};
use crate::error::{Error, Result};
use crate::numerics::checkpoint::Container;
use crate::numerics::{Fault, Gradients, Graph, ParamStore, Rng, Tensor, Var};
use crate::scalar::Scalar;
use crate::selfattn::{attention_scale, multi_head, SelfAttnParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingParams,
    pub selfattn: SelfAttnParams,
    pub blstm: BlstmParams,
    pub types: LetParams,
    pub entity: EntityAttnParams,
    pub output: OutputParams,
}

/// One sentence ready for the network. `ids` may carry trailing PAD
/// positions beyond `length`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub ids: Vec<usize>,
    pub length: usize,
    pub e1: usize,
    pub e2: usize,
}

impl Input {
    pub fn new(example: &Example, vocab: &Vocabulary) -> Self {
        Self {
            ids: example.tokens.iter().map(|t| vocab.encode(t)).collect(),
            length: example.len(),
            e1: example.e1,
            e2: example.e2,
        }
    }

    /// Appends `extra` PAD positions.
    pub fn padded(mut self, extra: usize) -> Self {
        self.ids.extend(std::iter::repeat_n(PAD, extra));
        self
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.length).collect()
    }
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// [1 × |R|]
    pub logits: Var,
    /// [n × 2d_h]
    pub hidden: Var,
    /// Per-head [n × n] self-attention weights.
    pub self_attention: Vec<Var>,
    pub pooled: PooledSentence,
}

/// Result of running one labeled example through forward and backward.
#[derive(Debug, Clone)]
pub struct ExampleGrad<T> {
    pub loss: T,
    pub correct: bool,
    pub grads: Gradients<T>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    vocab: Vocabulary,
    relations: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore<T>,
    pub params: ModelParams,
    fault: Option<Fault>,
}

impl<T: Scalar> Model<T> {
    /// Fresh model with every weight drawn from `seed`. `words`, when given,
    /// supplies the word table (pre-trained vectors).
    pub fn new(config: ModelConfig, vocab: Vocabulary, words: Option<Tensor<T>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let classes = RelationSchema::semeval().len();
        let embedding = EmbeddingParams::init(&mut store, &config, vocab.len(), words, &mut rng)?;
        let selfattn = SelfAttnParams::init(&mut store, &config, &mut rng)?;
        let blstm = BlstmParams::init(&mut store, &config, &mut rng)?;
        let types = LetParams::init(&mut store, &config, &mut rng)?;
        let entity = EntityAttnParams::init(&mut store, &config, &mut rng)?;
        let output = OutputParams::init(&mut store, &config, classes, &mut rng)?;
        Ok(Self {
            config,
            vocab,
            store,
            params: ModelParams {
                embedding,
                selfattn,
                blstm,
                types,
                entity,
                output,
            },
            fault: None,
        })
    }

    /// Corrupts one backward rule in every graph this model builds; used to
    /// confirm that the gradient checker notices.
    pub fn inject_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn graph(&self) -> Graph<'_, T> {
        let mut g = Graph::with_params(&self.store);
        g.inject_fault(self.fault);
        g
    }

    fn dropout(&self, g: &mut Graph<'_, T>, x: Var, p: f64, rng: Option<&mut Rng>) -> Result<Var> {
        let Some(rng) = rng else { return Ok(x) };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let mask = (0..g.value(x).len())
            .map(|_| if rng.uniform() < p { T::zero() } else { keep })
            .collect();
        g.dropout(x, mask)
    }

    /// Builds the forward pass for one sentence. Dropout is applied only
    /// when `rng` is given.
    pub fn forward(&self, g: &mut Graph<'_, T>, input: &Input, mut rng: Option<&mut Rng>) -> Result<Forward> {
        let cfg = &self.config;
        let n = input.ids.len();
        if input.length == 0 || input.length > n || n > cfg.max_len {
            return Err(Error::InvalidArgument(format!(
                "sentence of length {} padded to {n} (max {})",
                input.length, cfg.max_len
            )));
        }
        let mask = input.mask();
        let p = &self.params;

        let words = g.param(p.embedding.words);
        let x = lookup_words(g, words, &input.ids)?;
        let x = self.dropout(g, x, cfg.dropout_word, rng.as_deref_mut())?;
        let (m, self_attention) = multi_head(g, x, &p.selfattn, &mask, attention_scale(cfg))?;
        let h = blstm_encode(g, m, input.length, &p.blstm)?;
        let h = self.dropout(g, h, cfg.dropout_lstm, rng.as_deref_mut())?;

        let positions = g.param(p.embedding.positions);
        let p1 = lookup_positions(g, positions, n, input.e1, cfg.max_len)?;
        let p2 = lookup_positions(g, positions, n, input.e2, cfg.max_len)?;
        let pooled = entity_attention(g, h, p1, p2, input.e1, input.e2, &p.entity, &p.types, &mask)?;
        let z = self.dropout(g, pooled.z, cfg.dropout_attention, rng)?;
        let logits = classifier::logits(g, z, &p.output)?;
        Ok(Forward {
            logits,
            hidden: h,
            self_attention,
            pooled,
        })
    }

    /// Eval-mode logits.
    pub fn logits(&self, input: &Input) -> Result<Vec<T>> {
        let mut g = self.graph();
        let f = self.forward(&mut g, input, None)?;
        Ok(g.value(f.logits).to_vec())
    }

    pub fn predict_proba(&self, example: &Example) -> Result<Vec<T>> {
        Ok(classifier::softmax(
            &self.logits(&Input::new(example, &self.vocab))?,
        ))
    }

    /// Most probable class per example (ties to the lower id).
    pub fn predict(&self, examples: &[Example]) -> Result<Vec<usize>> {
        examples
            .par_iter()
            .map(|ex| Ok(argmax(&self.logits(&Input::new(ex, &self.vocab))?)))
            .collect()
    }

    /// Cross-entropy of one example and its parameter gradients (without
    /// the L2 term).
    pub fn example_gradients(&self, example: &Example, rng: Option<&mut Rng>) -> Result<ExampleGrad<T>> {
        let input = Input::new(example, &self.vocab);
        let mut g = self.graph();
        let f = self.forward(&mut g, &input, rng)?;
        let correct = argmax(g.value(f.logits)) == example.label;
        let ce = classifier::cross_entropy(&mut g, f.logits, &[example.label], false)?;
        let loss = g.scalar_value(ce);
        let grads = g.backward(ce)?;
        Ok(ExampleGrad { loss, correct, grads })
    }

    pub fn to_container(&self) -> Result<Container<T>> {
        let metadata = serde_json::to_string(&Metadata {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            relations: RelationSchema::semeval().names().to_vec(),
        })?;
        Ok(Container {
            metadata,
            tensors: self
                .store
                .iter()
                .map(|(_, p)| (p.name.clone(), p.value.clone()))
                .collect(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.to_container()?.encode())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::<T>::decode(bytes)?;
        let meta: Metadata = serde_json::from_str(&c.metadata)
            .map_err(|e| Error::CheckpointFormat(format!("metadata: {e}")))?;
        if meta.relations != RelationSchema::semeval().names() {
            return Err(Error::CheckpointMismatch("relation inventory differs".into()));
        }
        let mut model = Model::new(meta.config, meta.vocab, None, 0)?;
        if c.tensors.len() != model.store.len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} tensors stored, model has {}",
                c.tensors.len(),
                model.store.len()
            )));
        }
        for (name, t) in c.tensors {
            let id = model
                .store
                .id(&name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("unknown tensor `{name}`")))?;
            let slot = &mut model.store.get_mut(id).value;
            if slot.shape() != t.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "`{name}` is {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the stored dimensions agree with `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let model = Self::load(path)?;
        model.ensure_compatible(expected)?;
        Ok(model)
    }

    /// Errors unless `expected` describes the same parameter shapes.
    pub fn ensure_compatible(&self, expected: &ModelConfig) -> Result<()> {
        if self.config.shape_signature() != expected.shape_signature()
            || self.config.entity_bias != expected.entity_bias
        {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint dims (d_w, r, d_h, d_p, d_a, K, L) = {:?}, configured {:?}",
                self.config.shape_signature(),
                expected.shape_signature()
            )));
        }
        Ok(())
    }
}

/// Index of the largest value; the first wins ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
