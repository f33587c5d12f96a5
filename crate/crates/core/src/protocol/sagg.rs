//! Secure vector addition: packed sharing of each participant's vector,
//! local share-sums, and (verified) reconstruction of the total.

use super::adversary::{Behavior, DropoutRound, Schedule};
use super::bus::{Bus, MessageKind, Party, Phase, Timings, Transcript};
use super::Routing;
use super::{per_client, AbortReason, AdversarySpec, ProtocolError, SaggConfig, SecurityMode};
use crate::sampler::{derive_seed, Prg, Seed};
use crate::shamir::{
    share_packed, share_packed_fft, PointLayout, ReconstructionPlan, ShareMessage, ShareSet,
    SharingConfig, Verified,
};
use rand::Rng;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// `sharing_id` carried by share-sum messages.
const SHARE_SUM_ID: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaggSum {
    pub sum: Vec<u64>,
    /// U2: clients whose shares were distributed and summed, ascending.
    pub participants: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SaggRun {
    pub outcome: Result<SaggSum, AbortReason>,
    pub transcript: Transcript,
}

/// Standalone secure vector addition over all `k` clients' vectors.
/// Clients listed as dropping before the mask step never participate.
pub fn run_sagg(
    secret_vectors: &[Vec<u64>],
    cfg: &SaggConfig,
    adversary: &AdversarySpec,
    seed: &Seed,
) -> Result<SaggRun, ProtocolError> {
    let k = cfg.sharing.k();
    if secret_vectors.len() != k {
        return Err(ProtocolError::Config(format!(
            "{} vectors for a sharing over k = {k}",
            secret_vectors.len()
        )));
    }
    let n = secret_vectors[0].len();
    if n == 0 {
        return Err(ProtocolError::Config("vectors must be nonempty".into()));
    }
    let q = cfg.sharing.field().modulus();
    for (index, v) in secret_vectors.iter().enumerate() {
        if v.len() != n {
            return Err(ProtocolError::Shape {
                index,
                expected: n,
                got: v.len(),
            });
        }
        if let Some(&x) = v.iter().find(|&&x| x >= q) {
            return Err(ProtocolError::Config(format!(
                "vector {index} holds {x}, not reduced mod {q}"
            )));
        }
    }
    let schedule = adversary.schedule(k, seed)?;
    let secrets: Vec<Option<&[u64]>> = (0..k)
        .map(|i| {
            schedule
                .active(i, DropoutRound::BeforeMask)
                .then(|| secret_vectors[i].as_slice())
        })
        .collect();
    let mut bus = Bus::new(k);
    let mut timings = Timings::new(k);
    let outcome = sagg_rounds(cfg, &schedule, seed, &secrets, n, &mut bus, &mut timings)?;
    Ok(SaggRun {
        outcome,
        transcript: bus.finish(k, timings),
    })
}

struct Dealt {
    own: Vec<u64>,
    outgoing: Vec<(usize, Vec<u8>)>,
    elapsed: Duration,
}

fn deal(
    cfg: &SaggConfig,
    schedule: &Schedule,
    seed: &Seed,
    i: usize,
    s: &[u64],
) -> Result<Dealt, ProtocolError> {
    let start = Instant::now();
    let sharing = &cfg.sharing;
    let (k, p) = (sharing.k(), sharing.p());
    let f = sharing.field();
    let mut rng = Prg::new(derive_seed(seed, "share", i as u64), 0);
    let chunks = s.len().div_ceil(p);
    let mut per_recipient = vec![Vec::with_capacity(chunks); k];
    for chunk in s.chunks(p) {
        let set = match sharing.layout() {
            PointLayout::Fft => share_packed_fft(chunk, sharing, &mut rng)?,
            PointLayout::Lagrange => share_packed(chunk, sharing, &mut rng)?,
        };
        for (j, &v) in set.values().iter().enumerate() {
            per_recipient[j].push(v);
        }
    }
    if schedule.misbehaves(i, Behavior::WrongSecret) {
        let mut tamper = Prg::new(derive_seed(seed, "tamper", i as u64), 0);
        let j = (i + tamper.gen_range(1..k)) % k;
        let l = tamper.gen_range(0..chunks);
        let delta = tamper.gen_range(1..f.modulus());
        per_recipient[j][l] = f.add(per_recipient[j][l], delta);
    }
    let mut outgoing = Vec::with_capacity(k - 1);
    let mut own = Vec::new();
    for (j, payload) in per_recipient.into_iter().enumerate() {
        if j == i {
            own = payload;
        } else {
            let msg = ShareMessage {
                sharing_id: i as u32,
                client_index: j as u16,
                payload,
            };
            outgoing.push((j, msg.encode()?));
        }
    }
    Ok(Dealt {
        own,
        outgoing,
        elapsed: start.elapsed(),
    })
}

pub(super) fn sagg_rounds(
    cfg: &SaggConfig,
    schedule: &Schedule,
    seed: &Seed,
    secrets: &[Option<&[u64]>],
    n: usize,
    bus: &mut Bus,
    timings: &mut Timings,
) -> Result<Result<SaggSum, AbortReason>, ProtocolError> {
    let sharing = &cfg.sharing;
    let k = sharing.k();
    let f = sharing.field().clone();

    // input sharing
    let dealers: Vec<usize> = (0..k)
        .filter(|&i| secrets[i].is_some() && schedule.active(i, DropoutRound::BeforeShare))
        .collect();
    let dealt = per_client(cfg.parallel, &dealers, |i| {
        deal(cfg, schedule, seed, i, secrets[i].unwrap())
    });
    let mut own_shares: HashMap<usize, Vec<u64>> = HashMap::with_capacity(dealers.len());
    for (&i, d) in dealers.iter().zip(dealt) {
        let d = d?;
        timings.clients[i].share += d.elapsed;
        for (j, bytes) in d.outgoing {
            bus.send(
                Phase::R3,
                MessageKind::InputShares,
                Party::client(i),
                Party::client(j),
                bytes,
            );
        }
        own_shares.insert(i, d.own);
    }
    if dealers.len() <= sharing.t() {
        return Ok(Err(AbortReason::TooFewSharers {
            have: dealers.len(),
            t: sharing.t(),
        }));
    }

    // share-sums
    let summers: Vec<usize> = dealers
        .iter()
        .copied()
        .filter(|&j| schedule.active(j, DropoutRound::BeforeSum))
        .collect();
    let mut inboxes: HashMap<usize, Vec<super::Envelope>> = HashMap::new();
    for j in 0..k {
        let inbox = bus.deliver(Party::client(j));
        if summers.binary_search(&j).is_ok() {
            inboxes.insert(j, inbox);
        }
    }
    let sums = per_client(
        cfg.parallel,
        &summers,
        |j| -> Result<(Vec<u64>, Vec<u8>, Duration), ProtocolError> {
            let start = Instant::now();
            let mut sum = own_shares[&j].clone();
            for env in &inboxes[&j] {
                let msg = ShareMessage::decode(&env.bytes, &f)?;
                if msg.client_index as usize != j
                    || Party::client(msg.sharing_id as usize) != env.from
                    || msg.payload.len() != sum.len()
                {
                    return Err(ProtocolError::Wire(format!(
                        "unexpected share message at client {j}"
                    )));
                }
                f.add_assign_vec(&mut sum, &msg.payload);
            }
            if schedule.misbehaves(j, Behavior::BadShareSum) {
                let mut tamper = Prg::new(derive_seed(seed, "tamper", j as u64), 1);
                let l = tamper.gen_range(0..sum.len());
                sum[l] = f.add(sum[l], tamper.gen_range(1..f.modulus()));
            }
            let bytes = ShareMessage {
                sharing_id: SHARE_SUM_ID,
                client_index: j as u16,
                payload: sum.clone(),
            }
            .encode()?;
            Ok((sum, bytes, start.elapsed()))
        },
    );
    drop(inboxes);
    let mut own_sums: HashMap<usize, Vec<u64>> = HashMap::new();
    for (&j, r) in summers.iter().zip(sums) {
        let (sum, bytes, elapsed) = r?;
        timings.clients[j].share_sum += elapsed;
        match cfg.routing {
            Routing::ServerAssisted => bus.send(
                Phase::R3,
                MessageKind::ShareSum,
                Party::client(j),
                Party::Server,
                bytes,
            ),
            Routing::Broadcast => {
                for other in (0..k).filter(|&o| o != j) {
                    bus.send(
                        Phase::R3,
                        MessageKind::ShareSum,
                        Party::client(j),
                        Party::client(other),
                        bytes.clone(),
                    );
                }
            }
        }
        own_sums.insert(j, sum);
    }

    match cfg.routing {
        Routing::ServerAssisted => {
            let start = Instant::now();
            let mut received = Vec::new();
            for env in bus.deliver(Party::Server) {
                let msg = ShareMessage::decode(&env.bytes, &f)?;
                received.push((msg.client_index as usize, msg.payload));
            }
            let outcome = reconstruct_all(sharing, cfg.mode, received, n)?;
            timings.server.reconstruct += start.elapsed();
            Ok(outcome.map(|sum| SaggSum {
                sum,
                participants: dealers,
            }))
        }
        Routing::Broadcast => {
            let reporters: Vec<usize> = summers
                .iter()
                .copied()
                .filter(|&j| schedule.active(j, DropoutRound::BeforeResult))
                .collect();
            let mut inboxes: HashMap<usize, Vec<super::Envelope>> = HashMap::new();
            for j in 0..k {
                let inbox = bus.deliver(Party::client(j));
                if reporters.binary_search(&j).is_ok() {
                    inboxes.insert(j, inbox);
                }
            }
            let reports = per_client(
                cfg.parallel,
                &reporters,
                |j| -> Result<(Vec<u8>, Duration), ProtocolError> {
                    let start = Instant::now();
                    let mut received = vec![(j, own_sums[&j].clone())];
                    for env in &inboxes[&j] {
                        let msg = ShareMessage::decode(&env.bytes, &f)?;
                        received.push((msg.client_index as usize, msg.payload));
                    }
                    let outcome = reconstruct_all(sharing, cfg.mode, received, n)?;
                    let bytes = encode_result(
                        j,
                        k,
                        &outcome.map(|sum| SaggSum {
                            sum,
                            participants: dealers.clone(),
                        }),
                    );
                    Ok((bytes, start.elapsed()))
                },
            );
            for (&j, r) in reporters.iter().zip(reports) {
                let (bytes, elapsed) = r?;
                timings.clients[j].reconstruct += elapsed;
                bus.send(
                    Phase::R3,
                    MessageKind::SumResult,
                    Party::client(j),
                    Party::Server,
                    bytes,
                );
            }
            let start = Instant::now();
            let outcome = majority(
                &bus.deliver(Party::Server)
                    .into_iter()
                    .map(|e| e.bytes)
                    .collect::<Vec<_>>(),
                k,
                &f,
            )?;
            timings.server.reconstruct += start.elapsed();
            Ok(outcome)
        }
    }
}

/// Reconstructs all `⌈n/p⌉` packed sharings from the share-sums of the
/// listed clients; one interpolation plan serves every sharing.
fn reconstruct_all(
    sharing: &Arc<SharingConfig>,
    mode: SecurityMode,
    mut received: Vec<(usize, Vec<u64>)>,
    n: usize,
) -> Result<Result<Vec<u64>, AbortReason>, ProtocolError> {
    received.sort_by_key(|(i, _)| *i);
    received.dedup_by_key(|(i, _)| *i);
    let verified = mode == SecurityMode::Malicious;
    let need = sharing.threshold() + verified as usize;
    if received.len() < need {
        return Ok(Err(AbortReason::InsufficientShareSums {
            have: received.len(),
            need,
        }));
    }
    let indices: Vec<usize> = received.iter().map(|(i, _)| *i).collect();
    let plan = if verified {
        ReconstructionPlan::verified(sharing, &indices)?
    } else {
        ReconstructionPlan::new(sharing, &indices)?
    };
    let chunks = n.div_ceil(sharing.p());
    let mut out = Vec::with_capacity(chunks * sharing.p());
    for l in 0..chunks {
        let pairs = received.iter().map(|(i, v)| (*i, v[l])).collect();
        let set = ShareSet::from_pairs(sharing.clone(), pairs)?;
        if verified {
            match plan.reconstruct_verified(&set)? {
                Verified::Accepted(v) => out.extend(v),
                Verified::Abort => return Ok(Err(AbortReason::VerificationFailed)),
            }
        } else {
            out.extend(plan.reconstruct(&set)?);
        }
    }
    out.truncate(n);
    Ok(Ok(out))
}

// client u16 | status u8 | U2 bitmap ⌈k/8⌉ | len u32 | len × 4-byte elements
// status 0: sum follows; 1: verification abort; 2: too few share-sums (len = 2: have, need)
fn encode_result(client: usize, k: usize, outcome: &Result<SaggSum, AbortReason>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(client as u16).to_le_bytes());
    let mut bitmap = vec![0u8; k.div_ceil(8)];
    let (status, payload): (u8, Vec<u64>) = match outcome {
        Ok(s) => {
            for &i in &s.participants {
                bitmap[i / 8] |= 1 << (i % 8);
            }
            (0, s.sum.clone())
        }
        Err(AbortReason::InsufficientShareSums { have, need }) => {
            (2, vec![*have as u64, *need as u64])
        }
        Err(_) => (1, Vec::new()),
    };
    out.push(status);
    out.extend_from_slice(&bitmap);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    for v in payload {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out
}

fn decode_result(
    bytes: &[u8],
    k: usize,
    f: &crate::field::PrimeFieldCtx,
) -> Result<Result<SaggSum, AbortReason>, ProtocolError> {
    let bm = k.div_ceil(8);
    let bad = || ProtocolError::Wire("malformed sum report".into());
    if bytes.len() < 3 + bm + 4 {
        return Err(bad());
    }
    let status = bytes[2];
    let bitmap = &bytes[3..3 + bm];
    let len = u32::from_le_bytes(bytes[3 + bm..7 + bm].try_into().unwrap()) as usize;
    let body = &bytes[7 + bm..];
    if body.len() != 4 * len {
        return Err(bad());
    }
    let payload = body
        .chunks_exact(4)
        .map(|c| {
            f.checked_element(u32::from_le_bytes(c.try_into().unwrap()) as u64)
                .map(|e| e.value())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match status {
        0 => Ok(SaggSum {
            sum: payload,
            participants: (0..k)
                .filter(|&i| bitmap[i / 8] >> (i % 8) & 1 == 1)
                .collect(),
        }),
        1 => Err(AbortReason::VerificationFailed),
        2 if len == 2 => Err(AbortReason::InsufficientShareSums {
            have: payload[0] as usize,
            need: payload[1] as usize,
        }),
        _ => return Err(bad()),
    })
}

/// Strict majority over identical reports (client id excluded).
fn majority(
    reports: &[Vec<u8>],
    k: usize,
    f: &crate::field::PrimeFieldCtx,
) -> Result<Result<SaggSum, AbortReason>, ProtocolError> {
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for r in reports {
        if r.len() < 2 {
            return Err(ProtocolError::Wire("short sum report".into()));
        }
        *counts.entry(&r[2..]).or_default() += 1;
    }
    let Some((&body, &count)) = counts.iter().max_by_key(|(body, &c)| (c, *body)) else {
        return Ok(Err(AbortReason::NoMajority));
    };
    if 2 * count <= reports.len() {
        return Ok(Err(AbortReason::NoMajority));
    }
    let mut full = vec![0u8, 0u8];
    full.extend_from_slice(body);
    decode_result(&full, k, f)
}
