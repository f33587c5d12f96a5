//! Masking aggregation: clients publish `h = v + A·s + e`, the federation
//! runs secure vector addition over the `s_i`, and the server unmasks
//! `Σ h - A·Σ s`.

use super::adversary::{Behavior, DropoutRound, Schedule};
use super::bus::{Bus, MessageKind, Party, Phase, Timings, Transcript};
use super::sagg::sagg_rounds;
use super::{per_client, AbortReason, AdversarySpec, MatrixMode, ProtocolConfig, ProtocolError};
use crate::lwe::{compute_b, mask, unmask_sum, MaskKey, MaskedVector, PublicMatrix};
use crate::sampler::{derive_seed, Seed};
use std::time::Instant;

/// Client sets and phase of one aggregation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundState {
    pub u: Vec<usize>,
    /// Clients whose masked vector reached the server.
    pub u1: Vec<usize>,
    /// Clients whose secret shares were distributed and summed.
    pub u2: Vec<usize>,
    pub phase: Phase,
}

impl RoundState {
    fn advance(&mut self, next: Phase) {
        debug_assert!(next > self.phase, "phase must advance");
        self.phase = next;
    }
}

#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    /// `Σ_{U2} v_i + Σ_{U2} e_i`, or the reason for ABORT.
    pub result: Result<Vec<u64>, AbortReason>,
    pub state: RoundState,
    pub transcript: Transcript,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub q: u64,
    pub dropout_fraction: f64,
}

impl AggregationOutcome {
    pub fn is_abort(&self) -> bool {
        self.result.is_err()
    }

    pub fn participants(&self) -> &[usize] {
        &self.state.u2
    }
}

/// Runs all four rounds for `inputs.len() = k` clients. Deterministic in
/// `seed` (message bytes; timings excepted).
pub fn run_masking_aggregation(
    inputs: &[Vec<u64>],
    cfg: &ProtocolConfig,
    adversary: &AdversarySpec,
    seed: &Seed,
) -> Result<AggregationOutcome, ProtocolError> {
    let k = inputs.len();
    let lwe = &cfg.lwe;
    let (m, n, q) = (lwe.m, lwe.n, lwe.q);
    if k < 2 {
        return Err(ProtocolError::Config(format!(
            "need at least 2 clients, got {k}"
        )));
    }
    if k != cfg.k() {
        return Err(ProtocolError::Config(format!(
            "{k} inputs for a sharing over k = {}",
            cfg.k()
        )));
    }
    for (index, v) in inputs.iter().enumerate() {
        if v.len() != m {
            return Err(ProtocolError::Shape {
                index,
                expected: m,
                got: v.len(),
            });
        }
        if let Some(&x) = v.iter().find(|&&x| x >= q) {
            return Err(ProtocolError::Config(format!(
                "input {index} holds {x}, not reduced mod {q}"
            )));
        }
    }
    let schedule = adversary.schedule(k, seed)?;
    let field = lwe.field()?;
    let t = cfg.sagg.sharing.t();
    let mut bus = Bus::new(k);
    let mut timings = Timings::new(k);
    let mut state = RoundState {
        u: (0..k).collect(),
        u1: Vec::new(),
        u2: Vec::new(),
        phase: Phase::R1,
    };
    let finish = |result, state, bus: Bus, timings| AggregationOutcome {
        result,
        state,
        transcript: bus.finish(k, timings),
        k,
        m,
        n,
        q,
        dropout_fraction: adversary.dropout_fraction,
    };

    let start = Instant::now();
    let a_seed = derive_seed(seed, "matrix", 0);
    let a = match cfg.matrix {
        MatrixMode::Auto => PublicMatrix::for_round(a_seed, m, n, &field),
        MatrixMode::Streamed => PublicMatrix::streamed(a_seed, m, n),
    };
    timings.server.setup += start.elapsed();

    // R1: mask and send h
    let maskers: Vec<usize> = (0..k)
        .filter(|&i| schedule.active(i, DropoutRound::BeforeMask))
        .collect();
    let masked = per_client(cfg.sagg.parallel, &maskers, |i| {
        client_mask(cfg, &schedule, &a, &field, seed, i, &inputs[i])
    });
    let mut secrets: Vec<Option<Vec<u64>>> = vec![None; k];
    for (&i, r) in maskers.iter().zip(masked) {
        let (s, bytes, elapsed) = r?;
        timings.clients[i].mask += elapsed;
        bus.send(
            Phase::R1,
            MessageKind::MaskedVector,
            Party::client(i),
            Party::Server,
            bytes,
        );
        secrets[i] = Some(s);
    }

    // R2: server fixes U1
    state.advance(Phase::R2);
    let start = Instant::now();
    let mut h: Vec<Option<Vec<u64>>> = vec![None; k];
    for env in bus.deliver(Party::Server) {
        let mv = MaskedVector::decode(&env.bytes, &field)?;
        if Party::client(mv.client_id as usize) != env.from || mv.h.len() != m {
            return Err(ProtocolError::Wire(format!(
                "unexpected masked vector from {:?}",
                env.from
            )));
        }
        h[mv.client_id as usize] = Some(mv.h);
    }
    state.u1 = (0..k).filter(|&i| h[i].is_some()).collect();
    timings.server.collect += start.elapsed();
    if state.u1.len() <= t {
        let reason = AbortReason::TooFewMasks {
            have: state.u1.len(),
            t,
        };
        state.advance(Phase::Aborted);
        return Ok(finish(Err(reason), state, bus, timings));
    }

    // R3: secure vector addition over s_i, i in U1
    state.advance(Phase::R3);
    let in_u1: Vec<Option<&[u64]>> = (0..k)
        .map(|i| {
            if h[i].is_some() {
                secrets[i].as_deref()
            } else {
                None
            }
        })
        .collect();
    let sagg = sagg_rounds(
        &cfg.sagg,
        &schedule,
        seed,
        &in_u1,
        n,
        &mut bus,
        &mut timings,
    )?;
    let sagg = match sagg {
        Ok(s) => s,
        Err(reason) => {
            state.advance(Phase::Aborted);
            return Ok(finish(Err(reason), state, bus, timings));
        }
    };
    state.u2 = sagg.participants;

    // R4: H over U2, V = H - A·s
    state.advance(Phase::R4);
    let start = Instant::now();
    let mut h_sum = vec![0u64; m];
    for &i in &state.u2 {
        // U2 ⊆ U1: only clients that sent h were offered to the sharing step
        field.add_assign_vec(&mut h_sum, h[i].as_ref().expect("U2 is a subset of U1"));
    }
    timings.server.collect += start.elapsed();
    let start = Instant::now();
    let v = unmask_sum(&field, &h_sum, &sagg.sum, &a)?;
    timings.server.unmask += start.elapsed();
    state.advance(Phase::Done);
    Ok(finish(Ok(v), state, bus, timings))
}

fn client_mask(
    cfg: &ProtocolConfig,
    schedule: &Schedule,
    a: &PublicMatrix,
    field: &crate::field::PrimeFieldCtx,
    seed: &Seed,
    i: usize,
    v: &[u64],
) -> Result<(Vec<u64>, Vec<u8>, std::time::Duration), ProtocolError> {
    let start = Instant::now();
    let mut key = MaskKey::sample(&cfg.lwe, &derive_seed(seed, "client", i as u64))?;
    if schedule.misbehaves(i, Behavior::NoNoise) {
        key.e.iter_mut().for_each(|e| *e = 0);
    }
    let b = compute_b(field, a, &key)?;
    let h = mask(field, v, &b)?;
    let bytes = MaskedVector {
        round: 0,
        client_id: i as u16,
        h,
    }
    .encode()?;
    Ok((key.s, bytes, start.elapsed()))
}
