use super::data::{Dataset, GradientSource};
use super::model::Model;
use super::{FedsimError, ModelState, TrainingConfig};
use crate::accountant::{Analysis, DpConfig, PrivacyLedger};
use crate::codec::{clip, decode_sum, encode, CodecConfig, SCALE};
use crate::lwe::LweParams;
use crate::protocol::{
    measure_transcript, run_masking_aggregation, AbortReason, AdversarySpec, Behavior,
    CommunicationReport, ProtocolConfig, Routing, SecurityMode,
};
use crate::sampler::{derive_seed, sample_gaussian, Prg, Seed};
use std::collections::BTreeSet;

/// Clipped, noised client vectors for one batch. Client `i` draws its
/// `N(0, σ²/b)` noise from a seed tied to the batch and its index; clients
/// in `skip_noise` add none.
pub fn noisy_client_vectors(
    gradients: &[Vec<f64>],
    cfg: &TrainingConfig,
    batch_seed: &Seed,
    skip_noise: &BTreeSet<usize>,
) -> Result<Vec<Vec<f64>>, FedsimError> {
    let b = gradients.len();
    let sd = cfg.sigma / (b as f64).sqrt();
    gradients
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut v = clip(g, cfg.clip_c)?;
            if !skip_noise.contains(&i) {
                let mut rng = Prg::new(derive_seed(batch_seed, "dp-noise", i as u64), 0);
                let z = sample_gaussian(sd, v.len(), &mut rng)
                    .map_err(|e| FedsimError::Config(e.to_string()))?;
                v.iter_mut().zip(z).for_each(|(x, n)| *x += n);
            }
            Ok(v)
        })
        .collect()
}

/// Plaintext reference: the real-valued sum of the noisy clipped gradients.
pub fn noisy_batch_gradient_plain(
    gradients: &[Vec<f64>],
    cfg: &TrainingConfig,
    batch_seed: &Seed,
) -> Result<Vec<f64>, FedsimError> {
    let vs = noisy_client_vectors(gradients, cfg, batch_seed, &BTreeSet::new())?;
    let mut sum = vec![0.0; gradients.first().map_or(0, Vec::len)];
    for v in &vs {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
    }
    Ok(sum)
}

#[derive(Debug, Clone)]
pub struct SecureBatch {
    /// Decoded `Ĝ` or the protocol's abort reason.
    pub gradient: Result<Vec<f64>, AbortReason>,
    pub clamped: usize,
    pub participants: usize,
    pub report: CommunicationReport,
}

/// One batch through the full pipeline: clip, noise, encode, masking
/// aggregation, decode.
pub fn noisy_batch_gradient_secure(
    gradients: &[Vec<f64>],
    cfg: &TrainingConfig,
    proto: &ProtocolConfig,
    adversary: &AdversarySpec,
    batch_seed: &Seed,
) -> Result<SecureBatch, FedsimError> {
    let b = gradients.len();
    let protocol_seed = derive_seed(batch_seed, "protocol", 0);
    let schedule = adversary.schedule(b, &protocol_seed)?;
    let skip: BTreeSet<usize> = schedule
        .corrupt
        .iter()
        .copied()
        .filter(|&i| schedule.misbehaves(i, Behavior::NoNoise))
        .collect();
    let field = proto.lwe.field()?;
    let mut clamped = 0;
    let encoded = noisy_client_vectors(gradients, cfg, batch_seed, &skip)?
        .iter()
        .map(|v| {
            let e = encode(v, &field)?;
            clamped += e.clamped;
            Ok(e.elements)
        })
        .collect::<Result<Vec<_>, FedsimError>>()?;
    let outcome = run_masking_aggregation(&encoded, proto, adversary, &protocol_seed)?;
    let report = measure_transcript(&outcome);
    let participants = outcome.state.u2.len();
    let gradient = match outcome.result {
        Ok(v) => {
            let codec = CodecConfig {
                clip_c: cfg.clip_c,
                noise_sd: proto.lwe.sigma_chi() * (participants as f64).sqrt() / SCALE,
            };
            Ok(decode_sum(&v, participants, &codec, &field)?)
        }
        Err(reason) => Err(reason),
    };
    Ok(SecureBatch {
        gradient,
        clamped,
        participants,
        report,
    })
}

/// Masking-aggregation settings for a training run; the protocol is
/// instantiated per run with `k = b` and `m` = parameter count.
#[derive(Debug, Clone)]
pub struct SecureAggregation {
    pub lwe: LweParams,
    pub mode: SecurityMode,
    pub routing: Routing,
    pub adversary: AdversarySpec,
}

#[derive(Debug, Clone)]
pub enum Aggregator {
    /// Real-valued sum of the noisy clipped gradients, no cryptography.
    Plaintext,
    Secure(SecureAggregation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Batches attempted so far (released plus aborted).
    pub batch: usize,
    pub accuracy: f64,
    pub eps_continuous: f64,
    pub eps_discrete: f64,
    pub aborts: usize,
    pub clamp_count: usize,
}

impl EpochMetrics {
    pub const CSV_HEADER: [&'static str; 7] = [
        "epoch",
        "batch",
        "accuracy",
        "eps_continuous",
        "eps_discrete",
        "aborts",
        "clamp_count",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.epoch.to_string(),
            self.batch.to_string(),
            format!("{:.6}", self.accuracy),
            format!("{:.6}", self.eps_continuous),
            format!("{:.6}", self.eps_discrete),
            self.aborts.to_string(),
            self.clamp_count.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub state: ModelState,
    /// `None` when σ = 0 (no privacy guarantee).
    pub ledger: Option<PrivacyLedger>,
    pub metrics: Vec<EpochMetrics>,
    pub aborts: usize,
    pub released: usize,
    pub clamped: usize,
    /// Transcript summary of the last secure batch.
    pub last_report: Option<CommunicationReport>,
}

/// Momentum SGD over disjoint batches of `source`. Aborted batches are
/// skipped; an epoch is charged to the ledger only if at least one of its
/// batches was released. `on_batch` sees every batch's raw gradients (for
/// dumping them to a gradient file).
pub fn train(
    cfg: &TrainingConfig,
    source: &mut dyn GradientSource,
    init: Vec<f64>,
    validation: Option<(&Model, &Dataset)>,
    aggregator: &Aggregator,
    mut on_batch: Option<&mut dyn FnMut(&[Vec<f64>]) -> Result<(), FedsimError>>,
) -> Result<TrainingRun, FedsimError> {
    cfg.validate()?;
    let m = source.dim();
    if init.len() != m {
        return Err(FedsimError::Config(format!(
            "initial parameters have length {}, source yields {m}",
            init.len()
        )));
    }
    if source.examples() < cfg.batch_size {
        return Err(FedsimError::Config(format!(
            "{} examples cannot fill a batch of {}",
            source.examples(),
            cfg.batch_size
        )));
    }
    let proto = match aggregator {
        Aggregator::Plaintext => None,
        Aggregator::Secure(s) => Some(
            ProtocolConfig::for_clients(
                cfg.batch_size,
                s.lwe.clone().with_dim(m),
                s.mode,
                &s.adversary,
            )?
            .with_routing(s.routing),
        ),
    };
    let mut ledger = if cfg.sigma > 0.0 {
        Some(PrivacyLedger::new(DpConfig {
            sigma: cfg.sigma,
            clip_c: cfg.clip_c,
            batch_size: cfg.batch_size,
            epochs: 1,
            delta: cfg.delta,
            dimension: m,
            honest_fraction: 1.0,
        })?)
    } else {
        None
    };
    let mut state = ModelState::new(init);
    let mut run = TrainingRun {
        state: state.clone(),
        ledger: None,
        metrics: Vec::new(),
        aborts: 0,
        released: 0,
        clamped: 0,
        last_report: None,
    };
    let mut attempted = 0;
    for epoch in 0..cfg.epochs {
        source.start_epoch(epoch)?;
        let mut released_this_epoch = 0;
        let mut batch = 0u64;
        while let Some(grads) = source.next_batch(&state.theta, cfg.batch_size)? {
            if let Some(hook) = on_batch.as_mut() {
                hook(&grads)?;
            }
            let batch_seed = derive_seed(&cfg.seed, "batch", ((epoch as u64) << 32) | batch);
            batch += 1;
            attempted += 1;
            let g = match (aggregator, &proto) {
                (Aggregator::Secure(s), Some(proto)) => {
                    let out =
                        noisy_batch_gradient_secure(&grads, cfg, proto, &s.adversary, &batch_seed)?;
                    run.clamped += out.clamped;
                    run.last_report = Some(out.report);
                    match out.gradient {
                        Ok(g) => g,
                        Err(reason) => {
                            log::debug!(
                                "epoch {epoch} batch {batch}: abort ({reason}), batch skipped"
                            );
                            run.aborts += 1;
                            continue;
                        }
                    }
                }
                _ => noisy_batch_gradient_plain(&grads, cfg, &batch_seed)?,
            };
            state.apply(&g, cfg.batch_size, cfg);
            released_this_epoch += 1;
            run.released += 1;
        }
        if released_this_epoch > 0 {
            if let Some(l) = ledger.as_mut() {
                l.charge_epoch();
            }
        }
        let eps = |analysis| -> Result<f64, FedsimError> {
            Ok(match &ledger {
                Some(l) => l.epsilon(analysis)?.0,
                None if run.released == 0 => 0.0,
                None => f64::INFINITY,
            })
        };
        run.metrics.push(EpochMetrics {
            epoch,
            batch: attempted,
            accuracy: validation
                .map_or(f64::NAN, |(model, data)| data.accuracy(model, &state.theta)),
            eps_continuous: eps(Analysis::Continuous)?,
            eps_discrete: eps(Analysis::Discrete)?,
            aborts: run.aborts,
            clamp_count: run.clamped,
        });
    }
    run.state = state;
    run.ledger = ledger;
    Ok(run)
}
