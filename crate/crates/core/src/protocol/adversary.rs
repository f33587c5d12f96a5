use super::ProtocolError;
use crate::sampler::{derive_seed, Prg, Seed};
use rand::seq::SliceRandom;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

/// The first protocol step a dropped client skips; it sends nothing from
/// that step onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum DropoutRound {
    /// Never sends its masked vector, so it is not in U1.
    #[default]
    BeforeMask,
    /// Sent `h` but never distributes shares of `s`: in U1, not in U2.
    BeforeShare,
    /// Distributed its shares (so it is in U2) but never sends a share-sum.
    BeforeSum,
    /// Vanishes only before reporting a reconstructed sum (broadcast routing).
    BeforeResult,
}

impl FromStr for DropoutRound {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mask" | "1" => Ok(DropoutRound::BeforeMask),
            "share" | "2" => Ok(DropoutRound::BeforeShare),
            "sum" | "3" => Ok(DropoutRound::BeforeSum),
            "result" | "4" => Ok(DropoutRound::BeforeResult),
            other => Err(ProtocolError::Adversary(format!(
                "unknown dropout round {other:?} (mask, share, sum, result)"
            ))),
        }
    }
}

impl fmt::Display for DropoutRound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropoutRound::BeforeMask => "mask",
            DropoutRound::BeforeShare => "share",
            DropoutRound::BeforeSum => "sum",
            DropoutRound::BeforeResult => "result",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    /// Masks with a zero LWE error vector (and skips DP noise in training).
    NoNoise,
    /// Adds a random nonzero offset to one coordinate of the share-sum it sends.
    BadShareSum,
    /// Deals one inconsistent share: a random recipient gets a share that is
    /// off the dealer's polynomial in one coordinate.
    WrongSecret,
}

impl FromStr for Behavior {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "honest" => Ok(Behavior::Honest),
            "no_noise" => Ok(Behavior::NoNoise),
            "bad_share_sum" => Ok(Behavior::BadShareSum),
            "wrong_secret" => Ok(Behavior::WrongSecret),
            other => Err(ProtocolError::Adversary(format!(
                "unknown behavior {other:?} (honest, no_noise, bad_share_sum, wrong_secret)"
            ))),
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::Honest => "honest",
            Behavior::NoNoise => "no_noise",
            Behavior::BadShareSum => "bad_share_sum",
            Behavior::WrongSecret => "wrong_secret",
        })
    }
}

/// Who drops out, who is corrupt, and how corrupt clients misbehave.
///
/// Text form (CLI `--adversary`): comma-separated `key=value` items, e.g.
/// `dropout=0.29,round=share,corrupt=3+5,behavior=bad_share_sum`. Keys:
/// `dropout`, `round`, `drop` (explicit `+`-separated indices), `corrupt`
/// (indices), `corrupt-count` (seeded random choice), `behavior`. The
/// words `none` and `honest` alone mean no adversary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdversarySpec {
    pub dropout_fraction: f64,
    pub dropout_round: DropoutRound,
    /// Overrides the seeded choice of `⌊dropout_fraction·k⌋` clients.
    pub dropout_clients: Option<BTreeSet<usize>>,
    pub corrupt_clients: BTreeSet<usize>,
    /// Corrupt this many clients chosen from the run seed, in addition to
    /// `corrupt_clients`.
    pub corrupt_count: usize,
    pub behavior: Behavior,
}

impl AdversarySpec {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn dropouts(fraction: f64, round: DropoutRound) -> Self {
        AdversarySpec {
            dropout_fraction: fraction,
            dropout_round: round,
            ..Self::default()
        }
    }

    pub fn corrupt(clients: impl IntoIterator<Item = usize>, behavior: Behavior) -> Self {
        AdversarySpec {
            corrupt_clients: clients.into_iter().collect(),
            behavior,
            ..Self::default()
        }
    }

    pub fn with_dropouts(mut self, fraction: f64, round: DropoutRound) -> Self {
        self.dropout_fraction = fraction;
        self.dropout_round = round;
        self
    }

    /// Number of clients that drop for a federation of `k`.
    pub fn dropout_count(&self, k: usize) -> usize {
        match &self.dropout_clients {
            Some(set) => set.len(),
            None => (self.dropout_fraction * k as f64 + 1e-9).floor() as usize,
        }
    }

    /// Dropped clients whose share-sums will be missing at reconstruction.
    pub fn missing_share_sums(&self, k: usize) -> usize {
        if self.dropout_round <= DropoutRound::BeforeSum {
            self.dropout_count(k)
        } else {
            0
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), ProtocolError> {
        if !(0.0..1.0).contains(&self.dropout_fraction) {
            return Err(ProtocolError::Adversary(format!(
                "dropout fraction {} outside [0, 1)",
                self.dropout_fraction
            )));
        }
        let out_of_range = |set: &BTreeSet<usize>| set.iter().find(|&&i| i >= k).copied();
        if let Some(i) = out_of_range(&self.corrupt_clients) {
            return Err(ProtocolError::Adversary(format!(
                "corrupt client {i} out of range for k = {k}"
            )));
        }
        if let Some(i) = self.dropout_clients.as_ref().and_then(out_of_range) {
            return Err(ProtocolError::Adversary(format!(
                "dropout client {i} out of range for k = {k}"
            )));
        }
        let corrupt = self.corrupt_clients.len() + self.corrupt_count;
        if corrupt >= k.div_ceil(2) && corrupt > 0 {
            return Err(ProtocolError::Adversary(format!(
                "{corrupt} corrupt clients break the honest majority for k = {k} (limit {})",
                k.div_ceil(2).saturating_sub(1)
            )));
        }
        if self.dropout_count(k) >= k {
            return Err(ProtocolError::Adversary("every client drops out".into()));
        }
        Ok(())
    }

    /// Resolves random choices against the run seed.
    pub fn schedule(&self, k: usize, seed: &Seed) -> Result<Schedule, ProtocolError> {
        self.validate(k)?;
        let mut rng = Prg::new(derive_seed(seed, "adversary", 0), 0);
        let dropped = match &self.dropout_clients {
            Some(set) => set.clone(),
            None => {
                let mut order: Vec<usize> = (0..k).collect();
                order.shuffle(&mut rng);
                order.into_iter().take(self.dropout_count(k)).collect()
            }
        };
        let mut corrupt = self.corrupt_clients.clone();
        if self.corrupt_count > 0 {
            let mut order: Vec<usize> = (0..k).filter(|i| !corrupt.contains(i)).collect();
            order.shuffle(&mut rng);
            corrupt.extend(order.into_iter().take(self.corrupt_count));
        }
        Ok(Schedule {
            dropped,
            round: self.dropout_round,
            corrupt,
            behavior: self.behavior,
        })
    }
}

impl FromStr for AdversarySpec {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = AdversarySpec::default();
        let s = s.trim();
        if s.is_empty() || s == "none" || s == "honest" {
            return Ok(spec);
        }
        let indices = |v: &str| -> Result<BTreeSet<usize>, ProtocolError> {
            v.split('+')
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|e| ProtocolError::Adversary(format!("bad index {x:?}: {e}")))
                })
                .collect()
        };
        for item in s.split(',') {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                ProtocolError::Adversary(format!("expected key=value, got {item:?}"))
            })?;
            let value = value.trim();
            match key.trim() {
                "dropout" => {
                    spec.dropout_fraction = value.parse().map_err(|e| {
                        ProtocolError::Adversary(format!("bad dropout {value:?}: {e}"))
                    })?
                }
                "round" => spec.dropout_round = value.parse()?,
                "drop" => spec.dropout_clients = Some(indices(value)?),
                "corrupt" => spec.corrupt_clients = indices(value)?,
                "corrupt-count" | "corrupt_count" => {
                    spec.corrupt_count = value.parse().map_err(|e| {
                        ProtocolError::Adversary(format!("bad corrupt-count {value:?}: {e}"))
                    })?
                }
                "behavior" => spec.behavior = value.parse()?,
                other => {
                    return Err(ProtocolError::Adversary(format!(
                        "unknown adversary key {other:?}"
                    )))
                }
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |set: &BTreeSet<usize>| {
            set.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("+")
        };
        write!(
            f,
            "dropout={},round={}",
            self.dropout_fraction, self.dropout_round
        )?;
        if let Some(set) = &self.dropout_clients {
            write!(f, ",drop={}", join(set))?;
        }
        if !self.corrupt_clients.is_empty() {
            write!(f, ",corrupt={}", join(&self.corrupt_clients))?;
        }
        if self.corrupt_count > 0 {
            write!(f, ",corrupt-count={}", self.corrupt_count)?;
        }
        write!(f, ",behavior={}", self.behavior)
    }
}

/// An [`AdversarySpec`] with its random choices fixed for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub dropped: BTreeSet<usize>,
    pub round: DropoutRound,
    pub corrupt: BTreeSet<usize>,
    pub behavior: Behavior,
}

impl Schedule {
    pub fn none() -> Self {
        Schedule {
            dropped: BTreeSet::new(),
            round: DropoutRound::BeforeMask,
            corrupt: BTreeSet::new(),
            behavior: Behavior::Honest,
        }
    }

    /// Whether client `i` still takes part in `step`.
    pub fn active(&self, i: usize, step: DropoutRound) -> bool {
        !(self.dropped.contains(&i) && step >= self.round)
    }

    pub fn misbehaves(&self, i: usize, behavior: Behavior) -> bool {
        self.behavior == behavior && self.corrupt.contains(&i)
    }
}
