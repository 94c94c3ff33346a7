use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters and switches. Defaults are the published settings
/// (d_w = 300, r = 4, d_h = 300, d_p = 50, d_a = 50, K = 3, batch 20,
/// η = 1.0, dropout 0.3/0.3/0.5, λ = 1e-5).
///
/// Config files are TOML with these field names; any subset may be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Word embedding width.
    pub d_w: usize,
    /// Self-attention heads.
    #[serde(alias = "heads")]
    pub r: usize,
    /// LSTM state width per direction.
    pub d_h: usize,
    /// Relative position embedding width.
    pub d_p: usize,
    /// Entity-aware attention width.
    pub d_a: usize,
    /// Number of latent entity types.
    #[serde(alias = "K")]
    pub k: usize,
    pub batch_size: usize,
    #[serde(alias = "eta")]
    pub learning_rate: f64,
    pub dropout_word: f64,
    pub dropout_lstm: f64,
    pub dropout_attention: f64,
    /// L2 coefficient λ.
    #[serde(alias = "lambda")]
    pub l2: f64,
    /// Maximum sentence length L; the position table has 2L−1 rows.
    pub max_len: usize,

    pub rho: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub dev_size: usize,
    pub min_count: usize,

    /// σ of the Gaussian used for every randomly initialized weight.
    pub init_std: f64,
    /// σ for words missing from the pre-trained vectors.
    pub oov_std: f64,
    pub forget_bias: f64,

    /// Scale attention logits by 1/√(d_w/r) instead of 1/√d_w.
    pub per_head_scale: bool,
    /// Adds a bias vector inside the entity-aware attention tanh.
    pub entity_bias: bool,
    /// Average the cross-entropy over the batch instead of summing.
    pub mean_loss: bool,
    /// Include the embedding tables in the L2 penalty.
    pub l2_embeddings: bool,
    /// Keep the word table fixed during training.
    pub freeze_words: bool,
    /// Global gradient-norm clip; none by default.
    pub clip_norm: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_w: 300,
            r: 4,
            d_h: 300,
            d_p: 50,
            d_a: 50,
            k: 3,
            batch_size: 20,
            learning_rate: 1.0,
            dropout_word: 0.3,
            dropout_lstm: 0.3,
            dropout_attention: 0.5,
            l2: 1e-5,
            max_len: 100,
            rho: 0.95,
            eps: 1e-6,
            max_epochs: 100,
            patience: 15,
            dev_size: 800,
            min_count: 1,
            init_std: 0.1,
            oov_std: 0.1,
            forget_bias: 1.0,
            per_head_scale: false,
            entity_bias: false,
            mean_loss: false,
            l2_embeddings: true,
            freeze_words: false,
            clip_norm: None,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for gradient checks and quick tests; dropout off.
    pub fn tiny() -> Self {
        Self {
            d_w: 8,
            r: 2,
            d_h: 6,
            d_p: 4,
            d_a: 4,
            k: 2,
            dropout_word: 0.0,
            dropout_lstm: 0.0,
            dropout_attention: 0.0,
            dev_size: 0,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the keys present in `s` on top of `self`.
    pub fn merge_toml_str(&self, s: &str) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in overrides {
            let key = match k.as_str() {
                "K" => "k",
                "heads" => "r",
                "eta" => "learning_rate",
                "lambda" => "l2",
                other => other,
            };
            base.insert(key.to_string(), v);
        }
        let cfg: ModelConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn merge_file(&self, path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.merge_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_w", self.d_w),
            ("r", self.r),
            ("d_h", self.d_h),
            ("d_p", self.d_p),
            ("d_a", self.d_a),
            ("k", self.k),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
            ("min_count", self.min_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_w.is_multiple_of(self.r) {
            return Err(Error::Config(format!(
                "d_w = {} is not divisible by r = {}",
                self.d_w, self.r
            )));
        }
        for (name, p) in [
            ("dropout_word", self.dropout_word),
            ("dropout_lstm", self.dropout_lstm),
            ("dropout_attention", self.dropout_attention),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::Config("l2 must be a finite non-negative number".into()));
        }
        if !(0.0..1.0).contains(&self.rho) || self.eps <= 0.0 || self.learning_rate <= 0.0 {
            return Err(Error::Config(
                "need 0 <= rho < 1, eps > 0 and learning_rate > 0".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }

    /// Per-head projection width d_w / r.
    pub fn head_dim(&self) -> usize {
        self.d_w / self.r
    }

    /// Rows of the relative position table.
    pub fn position_rows(&self) -> usize {
        2 * self.max_len - 1
    }

    /// Dimensions that fix parameter shapes, for checkpoint compatibility.
    pub fn shape_signature(&self) -> [usize; 7] {
        [
            self.d_w,
            self.r,
            self.d_h,
            self.d_p,
            self.d_a,
            self.k,
            self.max_len,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_table() {
        let c = ModelConfig::default();
        assert_eq!((c.d_w, c.r, c.d_h, c.d_p, c.d_a, c.k), (300, 4, 300, 50, 50, 3));
        assert_eq!(c.batch_size, 20);
        assert_eq!(c.learning_rate, 1.0);
        assert_eq!(
            (c.dropout_word, c.dropout_lstm, c.dropout_attention),
            (0.3, 0.3, 0.5)
        );
        assert_eq!(c.l2, 1e-5);
        c.validate().unwrap();
    }

    #[test]
    fn partial_override() {
        let c = ModelConfig::default()
            .merge_toml_str("d_h = 6\nK = 2\nlambda = 0.0\n")
            .unwrap();
        assert_eq!(c.d_h, 6);
        assert_eq!(c.k, 2);
        assert_eq!(c.l2, 0.0);
        assert_eq!(c.d_w, 300);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelConfig::default().merge_toml_str("r = 7").is_err());
        assert!(ModelConfig::default()
            .merge_toml_str("dropout_word = 1.0")
            .is_err());
        assert!(ModelConfig::default().merge_toml_str("bogus = 1").is_err());
        assert!(ModelConfig::from_toml_str("d_w = 0").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = ModelConfig::tiny();
        assert_eq!(ModelConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }
}
