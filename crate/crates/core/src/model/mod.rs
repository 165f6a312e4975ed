//! Desk-scale dual-encoder classifier with frozen backbone stacks and
//! pluggable trainable heads (prompt context, LoRA adapters, bias-only).

mod config;
mod dual;
mod layers;
mod params;

pub use config::{HeadKind, Modality, ModelConfig};
pub use dual::{DualEncoder, PromptContext};
pub use layers::{effective_weight, Activation, DenseLayer, EncoderStack, LayerId, LoraAdapter};
pub use params::{ParamSet, ParamTensor};
