use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parameters of the dual encoder are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Nothing is trainable; the frozen model as initialized.
    ZeroShot,
    /// Learnable context vectors added to every class prototype.
    Prompt,
    /// LoRA adapters on every text-encoder layer.
    LoraText,
    /// LoRA adapters on every vision-encoder layer.
    LoraVision,
    /// LoRA adapters on every layer of both encoders.
    LoraBoth,
    /// Bias terms of both encoders.
    Bitfit,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::ZeroShot => "zero_shot",
            HeadKind::Prompt => "prompt",
            HeadKind::LoraText => "lora_text",
            HeadKind::LoraVision => "lora_vision",
            HeadKind::LoraBoth => "lora_both",
            HeadKind::Bitfit => "bitfit",
        }
    }

    pub fn adapts(self, modality: Modality) -> bool {
        matches!(
            (self, modality),
            (HeadKind::LoraBoth, _)
                | (HeadKind::LoraText, Modality::Text)
                | (HeadKind::LoraVision, Modality::Vision)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Vision,
    Text,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Vision => "vision",
            Modality::Text => "text",
        }
    }
}

/// Shape and head configuration of a [`DualEncoder`](super::DualEncoder).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub class_count: usize,
    /// Hidden widths of each encoder stack; `None` means a single hidden
    /// layer of width `2 * embed_dim`. An empty list gives one d×d layer.
    pub hidden_dims: Option<Vec<usize>>,
    pub head_kind: HeadKind,
    pub lora_rank: usize,
    /// LoRA scale; `None` means `1 / rank`.
    pub lora_scale: Option<f64>,
    pub lora_dropout: f64,
    pub logit_scale: f64,
    pub prompt_len: usize,
    /// Std of the Gaussian perturbation (divided by sqrt(fan-in)) applied
    /// to the structured frozen weights.
    pub frozen_init_noise: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            class_count: 20,
            hidden_dims: None,
            head_kind: HeadKind::LoraBoth,
            lora_rank: 2,
            lora_scale: None,
            lora_dropout: 0.25,
            logit_scale: 100.0,
            prompt_len: 4,
            frozen_init_noise: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn widths(&self) -> Vec<usize> {
        let hidden = self
            .hidden_dims
            .clone()
            .unwrap_or_else(|| vec![2 * self.embed_dim]);
        let mut w = Vec::with_capacity(hidden.len() + 2);
        w.push(self.embed_dim);
        w.extend(hidden);
        w.push(self.embed_dim);
        w
    }

    pub fn effective_lora_scale(&self) -> f64 {
        self.lora_scale.unwrap_or(1.0 / self.lora_rank as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 {
            return fail("embed_dim must be at least 1".into());
        }
        if self.class_count == 0 {
            return fail("class_count must be at least 1".into());
        }
        if self.widths().contains(&0) {
            return fail("encoder widths must be positive".into());
        }
        if self.lora_rank == 0 {
            return fail("lora_rank must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.lora_dropout) {
            return fail(format!(
                "lora_dropout must be in [0, 1), got {}",
                self.lora_dropout
            ));
        }
        if !(self.logit_scale > 0.0) || !self.logit_scale.is_finite() {
            return fail(format!(
                "logit_scale must be positive, got {}",
                self.logit_scale
            ));
        }
        if let Some(s) = self.lora_scale {
            if !s.is_finite() {
                return fail("lora_scale must be finite".into());
            }
        }
        if self.prompt_len == 0 {
            return fail("prompt_len must be at least 1".into());
        }
        if !(self.frozen_init_noise >= 0.0) {
            return fail("frozen_init_noise must be non-negative".into());
        }
        Ok(())
    }
}
