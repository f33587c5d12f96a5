//! Federated DP-SGD over secure aggregation: clients clip, noise and encode
//! per-example gradients, masking aggregation sums them, and the server
//! applies a momentum update.

mod data;
mod model;
mod train;

pub use data::{ingest_gradients, synthetic, Dataset, GradientFile, GradientSource, LocalModel};
pub use model::{Model, ModelKind};
pub use train::{
    noisy_batch_gradient_plain, noisy_batch_gradient_secure, noisy_client_vectors, train,
    Aggregator, EpochMetrics, SecureAggregation, SecureBatch, TrainingRun,
};

use crate::accountant::AccountantError;
use crate::codec::CodecError;
use crate::lwe::LweError;
use crate::protocol::ProtocolError;
use crate::sampler::Seed;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FedsimError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Lwe(#[from] LweError),
    #[error(transparent)]
    Accountant(#[from] AccountantError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Noise scales used in the reference experiments; 0 disables DP noise.
pub const SIGMA_PRESETS: [f64; 6] = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_c: f64,
    /// Aggregate noise scale; each client adds `N(0, σ²/b)` per coordinate.
    pub sigma: f64,
    pub delta: f64,
    pub seed: Seed,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 64,
            epochs: 1,
            learning_rate: 0.01,
            momentum: 0.9,
            clip_c: 5.0,
            sigma: 1.0,
            delta: 1e-5,
            seed: [0; 32],
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), FedsimError> {
        if !SIGMA_PRESETS.contains(&self.sigma) {
            return Err(FedsimError::Config(format!(
                "sigma {} is not one of {:?}",
                self.sigma, SIGMA_PRESETS
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(FedsimError::Config(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(FedsimError::Config(format!(
                "need learning rate > 0 and momentum in [0, 1), got {} and {}",
                self.learning_rate, self.momentum
            )));
        }
        if !(self.clip_c > 0.0) {
            return Err(FedsimError::Config(format!(
                "clip bound must be positive, got {}",
                self.clip_c
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(FedsimError::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Parameters and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub theta: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl ModelState {
    pub fn new(theta: Vec<f64>) -> Self {
        let velocity = vec![0.0; theta.len()];
        ModelState { theta, velocity }
    }

    /// `v ← μ·v + G/b`, `θ ← θ - η·v`.
    pub fn apply(&mut self, batch_sum: &[f64], b: usize, cfg: &TrainingConfig) {
        for ((t, v), g) in self
            .theta
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(batch_sum)
        {
            *v = cfg.momentum * *v + g / b as f64;
            *t -= cfg.learning_rate * *v;
        }
    }
}
