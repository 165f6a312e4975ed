use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the reduced warm-up learning rate is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupMode {
    /// The whole first round runs at the warm-up rate.
    #[default]
    FirstRound,
    /// Linear ramp from the warm-up rate to the base rate over the first
    /// round's local steps.
    Linear,
    None,
}

/// Round engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_lr: f64,
    pub warmup: WarmupMode,
    pub participation: f64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            local_epochs: 1,
            batch_size: 32,
            lr: 1e-3,
            warmup_lr: 1e-5,
            warmup: WarmupMode::FirstRound,
            participation: 0.1,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("federation.rounds must be at least 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config(
                "federation.local_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(
                "federation.batch_size must be at least 1".into(),
            ));
        }
        for (key, v) in [("lr", self.lr), ("warmup_lr", self.warmup_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "federation.{key} must be positive, got {v}"
                )));
            }
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config(format!(
                "federation.participation must be in (0, 1], got {}",
                self.participation
            )));
        }
        Ok(())
    }

    /// Learning rate for local step `step` (0-based) of `steps_in_round`.
    pub fn lr_at(&self, round: usize, step: usize, steps_in_round: usize) -> f64 {
        if round > 0 {
            return self.lr;
        }
        match self.warmup {
            WarmupMode::FirstRound => self.warmup_lr,
            WarmupMode::None => self.lr,
            WarmupMode::Linear => {
                if steps_in_round <= 1 {
                    return self.warmup_lr;
                }
                let t = step as f64 / (steps_in_round - 1) as f64;
                self.warmup_lr + t * (self.lr - self.warmup_lr)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    #[default]
    Fedavg,
    Fedprox,
    Feddyn,
    Fednova,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    pub mu_prox: f64,
    pub alpha_dyn: f64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            kind: AggregatorKind::Fedavg,
            mu_prox: 0.01,
            alpha_dyn: 0.01,
        }
    }
}

impl AggregatorConfig {
    pub fn of(kind: AggregatorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "aggregator.{key} must be positive, got {v}"
                )))
            }
        };
        match self.kind {
            AggregatorKind::Fedprox => check("mu_prox", self.mu_prox),
            AggregatorKind::Feddyn => check("alpha_dyn", self.alpha_dyn),
            _ => Ok(()),
        }
    }
}
