use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four published GPT-2 sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Small,
    Medium,
    Large,
    Xl,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::Small, ModelId::Medium, ModelId::Large, ModelId::Xl];

    /// `(n_layers, n_heads, d_model)`.
    pub fn shape(self) -> (usize, usize, usize) {
        match self {
            ModelId::Small => (12, 12, 768),
            ModelId::Medium => (24, 16, 1024),
            ModelId::Large => (36, 20, 1280),
            ModelId::Xl => (48, 25, 1600),
        }
    }

    /// Hub repository name of the checkpoint.
    pub fn hub_name(self) -> &'static str {
        match self {
            ModelId::Small => "gpt2",
            ModelId::Medium => "gpt2-medium",
            ModelId::Large => "gpt2-large",
            ModelId::Xl => "gpt2-xl",
        }
    }

    pub fn from_shape(n_layers: usize, n_heads: usize, d_model: usize) -> Option<ModelId> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.shape() == (n_layers, n_heads, d_model))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelId::Small => "small",
            ModelId::Medium => "medium",
            ModelId::Large => "large",
            ModelId::Xl => "xl",
        })
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" | "gpt2" => Ok(ModelId::Small),
            "medium" | "gpt2-medium" => Ok(ModelId::Medium),
            "large" | "gpt2-large" => Ok(ModelId::Large),
            "xl" | "gpt2-xl" => Ok(ModelId::Xl),
            other => Err(Error::Config(format!("unknown model id `{other}`"))),
        }
    }
}

pub const GPT2_VOCAB: usize = 50257;
pub const GPT2_CONTEXT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
    pub ln_eps: f32,
    /// Set for the published sizes; `None` for toy and test models.
    pub model_id: Option<ModelId>,
}

/// Subset of a hub `config.json` that determines the architecture.
#[derive(Deserialize)]
struct HubConfig {
    vocab_size: usize,
    n_positions: usize,
    n_embd: usize,
    n_layer: usize,
    n_head: usize,
    #[serde(default)]
    n_inner: Option<usize>,
    #[serde(default = "default_eps")]
    layer_norm_epsilon: f32,
}

fn default_eps() -> f32 {
    1e-5
}

impl ModelConfig {
    pub fn gpt2(id: ModelId) -> Self {
        let (n_layers, n_heads, d_model) = id.shape();
        ModelConfig {
            n_layers,
            n_heads,
            d_model,
            d_mlp: 4 * d_model,
            vocab_size: GPT2_VOCAB,
            n_ctx: GPT2_CONTEXT,
            ln_eps: 1e-5,
            model_id: Some(id),
        }
    }

    /// A non-published architecture (toys, fixtures).
    pub fn custom(
        n_layers: usize,
        n_heads: usize,
        d_model: usize,
        vocab_size: usize,
        n_ctx: usize,
    ) -> Result<Self> {
        let cfg = ModelConfig {
            n_layers,
            n_heads,
            d_model,
            d_mlp: 4 * d_model,
            vocab_size,
            n_ctx,
            ln_eps: 1e-5,
            model_id: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_layers == 0
            || self.n_heads == 0
            || self.d_model == 0
            || self.vocab_size == 0
            || self.n_ctx == 0
        {
            return bad(format!("all dimensions must be positive: {self:?}"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_mlp != 4 * self.d_model {
            return bad(format!(
                "d_mlp {} != 4 * d_model {}",
                self.d_mlp, self.d_model
            ));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps > 0.0) {
            return bad(format!(
                "layer norm epsilon {} must be positive",
                self.ln_eps
            ));
        }
        if let Some(id) = self.model_id {
            if (self.n_layers, self.n_heads, self.d_model) != id.shape() {
                return bad(format!(
                    "{id} expects (L, H, d) = {:?}, config has ({}, {}, {})",
                    id.shape(),
                    self.n_layers,
                    self.n_heads,
                    self.d_model
                ));
            }
            if self.vocab_size != GPT2_VOCAB || self.n_ctx != GPT2_CONTEXT {
                return bad(format!(
                    "{id} expects vocab {GPT2_VOCAB} and context {GPT2_CONTEXT}"
                ));
            }
        }
        Ok(())
    }

    /// Parses a hub-style `config.json`. The model id is inferred from the
    /// shape when it matches one of the published sizes.
    pub fn from_hub_json(text: &str) -> Result<Self> {
        let hub: HubConfig = serde_json::from_str(text)?;
        let d_mlp = hub.n_inner.unwrap_or(4 * hub.n_embd);
        let model_id = ModelId::from_shape(hub.n_layer, hub.n_head, hub.n_embd)
            .filter(|_| hub.vocab_size == GPT2_VOCAB && hub.n_positions == GPT2_CONTEXT);
        let cfg = ModelConfig {
            n_layers: hub.n_layer,
            n_heads: hub.n_head,
            d_model: hub.n_embd,
            d_mlp,
            vocab_size: hub.vocab_size,
            n_ctx: hub.n_positions,
            ln_eps: hub.layer_norm_epsilon,
            model_id,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_hub_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_hub_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_shapes_validate() {
        for id in ModelId::ALL {
            let c = ModelConfig::gpt2(id);
            c.validate().unwrap();
            assert_eq!(c.d_head() * c.n_heads, c.d_model);
            assert_eq!(c.d_mlp, 4 * c.d_model);
        }
        assert_eq!(ModelConfig::gpt2(ModelId::Small).d_head(), 64);
    }

    #[test]
    fn mismatched_id_is_rejected() {
        let mut c = ModelConfig::gpt2(ModelId::Small);
        c.n_layers = 24;
        assert!(c.validate().is_err());
        assert!(ModelConfig::custom(2, 3, 32, 10, 8).is_err());
    }

    #[test]
    fn hub_json_infers_id() {
        let j = r#"{"vocab_size":50257,"n_positions":1024,"n_embd":768,"n_layer":12,"n_head":12}"#;
        let c = ModelConfig::from_hub_json(j).unwrap();
        assert_eq!(c.model_id, Some(ModelId::Small));
        let j = r#"{"vocab_size":300,"n_positions":32,"n_embd":32,"n_layer":2,"n_head":4,"layer_norm_epsilon":1e-5}"#;
        assert_eq!(ModelConfig::from_hub_json(j).unwrap().model_id, None);
    }

    #[test]
    fn id_parsing() {
        assert_eq!("gpt2-xl".parse::<ModelId>().unwrap(), ModelId::Xl);
        assert_eq!("Medium".parse::<ModelId>().unwrap(), ModelId::Medium);
        assert!("huge".parse::<ModelId>().is_err());
    }
}
