use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ContextMlp,
    ContextRn,
    FullMlp,
    FullRn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::ContextMlp,
        Variant::ContextRn,
        Variant::FullMlp,
        Variant::FullRn,
    ];

    pub fn uses_relations(self) -> bool {
        matches!(self, Variant::ContextRn | Variant::FullRn)
    }

    pub fn uses_dialogue(self) -> bool {
        matches!(self, Variant::FullMlp | Variant::FullRn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::ContextMlp => "context-mlp",
            Variant::ContextRn => "context-rn",
            Variant::FullMlp => "full-mlp",
            Variant::FullRn => "full-rn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown variant {s:?} (expected context-mlp, context-rn, full-mlp or full-rn)"
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub dropout: f64,
    /// Parameters start uniform in `(-init_range, init_range)`.
    pub init_range: f64,
    pub lr: f64,
    /// Global L2 norm bound on the gradient.
    pub grad_clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once eval-mode training accuracy reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_train_accuracy: Option<f64>,
}

impl ModelConfig {
    pub fn new(variant: Variant, seed: u64) -> ModelConfig {
        ModelConfig {
            variant,
            hidden: 128,
            dropout: 0.5,
            init_range: 0.01,
            lr: 0.001,
            grad_clip: 0.1,
            epochs: 30,
            batch_size: 16,
            seed,
            stop_at_train_accuracy: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err("hidden, batch_size and epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0 && self.init_range > 0.0) {
            return Err("lr, grad_clip and init_range must be positive".into());
        }
        Ok(())
    }
}
