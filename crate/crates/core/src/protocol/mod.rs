//! Round-structured simulation of masking aggregation and secure vector
//! addition over an in-process message bus, with dropout and malicious
//! behavior injection.

mod adversary;
mod bus;
mod masking;
mod report;
mod sagg;

pub use adversary::{AdversarySpec, Behavior, DropoutRound, Schedule};
pub use bus::{
    Bus, Envelope, MessageKind, MessageRecord, Party, Phase, PhaseTimes, Timings, Transcript,
};
pub use masking::{run_masking_aggregation, AggregationOutcome, RoundState};
pub use report::{measure_transcript, CommunicationReport};
pub use sagg::{run_sagg, SaggRun, SaggSum};

use crate::field::{FieldError, PrimeFieldCtx};
use crate::lwe::{LweError, LweParams};
use crate::shamir::{honest_majority_threshold, packing_width, ShamirError, SharingConfig};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("invalid adversary: {0}")]
    Adversary(String),
    #[error("input {index} has length {got}, expected {expected}")]
    Shape {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed message: {0}")]
    Wire(String),
    #[error(transparent)]
    Lwe(#[from] LweError),
    #[error(transparent)]
    Shamir(#[from] ShamirError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Why a run ended in ABORT. An abort is a protocol result, not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortReason {
    TooFewMasks { have: usize, t: usize },
    TooFewSharers { have: usize, t: usize },
    InsufficientShareSums { have: usize, need: usize },
    VerificationFailed,
    NoMajority,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::TooFewMasks { have, t } => write!(
                f,
                "only {have} masked vectors arrived (need more than t = {t})"
            ),
            AbortReason::TooFewSharers { have, t } => write!(
                f,
                "only {have} clients shared their secret (need more than t = {t})"
            ),
            AbortReason::InsufficientShareSums { have, need } => {
                write!(f, "{have} share-sums arrived, reconstruction needs {need}")
            }
            AbortReason::VerificationFailed => {
                f.write_str("verified reconstruction found inconsistent shares")
            }
            AbortReason::NoMajority => f.write_str("no majority among reported sums"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecurityMode {
    /// Plain reconstruction from the lowest `t + p` share-sums.
    #[default]
    SemiHonest,
    /// Verified reconstruction; any inconsistent share-sum aborts.
    Malicious,
}

impl FromStr for SecurityMode {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "semi-honest" | "semihonest" => Ok(SecurityMode::SemiHonest),
            "malicious" => Ok(SecurityMode::Malicious),
            other => Err(ProtocolError::Config(format!(
                "unknown security mode {other:?} (semi-honest, malicious)"
            ))),
        }
    }
}

impl fmt::Display for SecurityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SecurityMode::SemiHonest => "semi-honest",
            SecurityMode::Malicious => "malicious",
        })
    }
}

/// Where share-sums go after the summing round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Routing {
    /// Clients send share-sums to the server, which reconstructs.
    #[default]
    ServerAssisted,
    /// Clients broadcast share-sums to each other, each reconstructs and
    /// reports `(s, U2)`; the server takes the majority.
    Broadcast,
}

impl FromStr for Routing {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "server" | "server-assisted" => Ok(Routing::ServerAssisted),
            "broadcast" => Ok(Routing::Broadcast),
            other => Err(ProtocolError::Config(format!(
                "unknown routing {other:?} (server-assisted, broadcast)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixMode {
    /// Materialize `A` once per round and share it among simulated clients
    /// when it fits under the materialization limit.
    #[default]
    Auto,
    /// Every client streams `A` from its seed.
    Streamed,
}

#[derive(Debug, Clone)]
pub struct SaggConfig {
    pub sharing: Arc<SharingConfig>,
    pub mode: SecurityMode,
    pub routing: Routing,
    /// Run per-client computation on the rayon pool; message order and
    /// results are unchanged.
    pub parallel: bool,
}

impl SaggConfig {
    pub fn new(sharing: Arc<SharingConfig>, mode: SecurityMode) -> Self {
        SaggConfig {
            sharing,
            mode,
            routing: Routing::default(),
            parallel: false,
        }
    }

    /// Honest-majority threshold and the widest packing that still
    /// reconstructs after the adversary's dropouts (plus one surplus
    /// share-sum in malicious mode).
    pub fn for_clients(
        k: usize,
        field: PrimeFieldCtx,
        mode: SecurityMode,
        adversary: &AdversarySpec,
    ) -> Result<Self, ProtocolError> {
        if k < 2 {
            return Err(ProtocolError::Config(format!(
                "need at least 2 clients, got {k}"
            )));
        }
        let t = honest_majority_threshold(k);
        let missing = adversary.missing_share_sums(k);
        let p = packing_width(k, t, missing, mode == SecurityMode::Malicious);
        if p == 0 {
            return Err(ProtocolError::Config(format!(
                "k = {k} with t = {t} cannot absorb {missing} missing share-sums in {mode} mode"
            )));
        }
        Ok(Self::new(SharingConfig::lagrange(k, t, p, field)?, mode))
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub lwe: LweParams,
    pub sagg: SaggConfig,
    pub matrix: MatrixMode,
}

impl ProtocolConfig {
    pub fn new(lwe: LweParams, sagg: SaggConfig) -> Result<Self, ProtocolError> {
        if sagg.sharing.field().modulus() != lwe.q {
            return Err(ProtocolError::Config(format!(
                "sharing field q = {} differs from LWE q = {}",
                sagg.sharing.field().modulus(),
                lwe.q
            )));
        }
        Ok(ProtocolConfig {
            lwe,
            sagg,
            matrix: MatrixMode::default(),
        })
    }

    pub fn for_clients(
        k: usize,
        lwe: LweParams,
        mode: SecurityMode,
        adversary: &AdversarySpec,
    ) -> Result<Self, ProtocolError> {
        let sagg = SaggConfig::for_clients(k, lwe.field()?, mode, adversary)?;
        Self::new(lwe, sagg)
    }

    pub fn k(&self) -> usize {
        self.sagg.sharing.k()
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.sagg.routing = routing;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.sagg.parallel = parallel;
        self
    }

    pub fn with_matrix(mut self, matrix: MatrixMode) -> Self {
        self.matrix = matrix;
        self
    }
}

/// Runs `f` for every client index, on the rayon pool when `parallel`.
fn per_client<T: Send>(
    parallel: bool,
    ids: &[usize],
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    if parallel {
        use rayon::prelude::*;
        ids.par_iter().map(|&i| f(i)).collect()
    } else {
        ids.iter().map(|&i| f(i)).collect()
    }
}
