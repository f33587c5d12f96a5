//! Packed Shamir secret sharing over `F_q`.
//!
//! A sharing hides `p` secrets in one polynomial of degree `t + p - 1`: any
//! `t` shares are jointly uniform, any `r = t + p` shares determine the
//! secrets. Shares add pointwise, so share-sums reconstruct to secret-sums.
//!
//! Two point layouts are supported:
//!
//! * [`PointLayout::Lagrange`]: shares at `1..=k`, secrets at `q-1, q-2, ...`.
//!   Generation and reconstruction are plain Lagrange interpolation.
//! * [`PointLayout::Fft`]: secrets at the `p`-th roots of unity, shares on the
//!   coset `g·⟨ω_N⟩` with `N = next_pow2(k)`. Generation is
//!   `f = I + (x^p - 1)·R` (with `I` the inverse NTT of the secrets and `R`
//!   uniform of degree `< t`) evaluated by one coset NTT, `O(k log k)`.
//!
//! [`reconstruct_verified`] implements reconstruction with a surplus share:
//! interpolate from the lowest `r` shares and from the lowest `r + 1`, and
//! abort unless both agree. Remaining surplus shares are checked the same way.

use crate::field::{FieldError, PrimeFieldCtx};
use rand::Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShamirError {
    #[error("invalid sharing configuration: {0}")]
    Config(String),
    #[error("{len} secrets exceed the packing width {p}")]
    Capacity { len: usize, p: usize },
    #[error("share sets are not aligned (different configurations or client indices)")]
    Alignment,
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("k + p = {needed} exceeds the NTT capacity {capacity} of the field")]
    NttCapacity { needed: usize, capacity: usize },
    #[error("client index {index} out of range for k = {k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("operation requires the FFT point layout")]
    Layout,
    #[error("malformed share message: {0}")]
    Wire(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLayout {
    Lagrange,
    Fft,
}

/// Collusion threshold for an honest majority: `⌊k/2⌋ + 1`, capped so that
/// at least one share slot remains for a packed secret.
pub fn honest_majority_threshold(k: usize) -> usize {
    (k / 2 + 1).min(k.saturating_sub(1)).max(1)
}

/// Packing width that still reconstructs after `dropouts` missing shares,
/// keeping one surplus share when `verified` is set.
pub fn packing_width(k: usize, t: usize, dropouts: usize, verified: bool) -> usize {
    if t >= k {
        return 0;
    }
    let cap = if k - t >= 2 { k - t - 1 } else { k - t };
    (k - t)
        .saturating_sub(dropouts + verified as usize)
        .min(cap)
}

/// Parameters and precomputed generation plan of a packed sharing scheme.
#[derive(Debug)]
pub struct SharingConfig {
    k: usize,
    t: usize,
    p: usize,
    field: PrimeFieldCtx,
    layout: PointLayout,
    eval_points: Vec<u64>,
    secret_points: Vec<u64>,
    share_domain: usize,
    // Lagrange generation: rows for shares t..k over the r defining points
    gen_coeffs: Vec<Vec<u64>>,
}

impl SharingConfig {
    /// Lagrange layout: share points `1..=k`, secret points `q-1, ..., q-p`.
    pub fn lagrange(
        k: usize,
        t: usize,
        p: usize,
        field: PrimeFieldCtx,
    ) -> Result<Arc<Self>, ShamirError> {
        check_thresholds(k, t, p)?;
        let q = field.modulus();
        if (k + p) as u64 >= q {
            return Err(ShamirError::Config(format!(
                "k + p = {} does not fit in F_{q}",
                k + p
            )));
        }
        let eval_points = (1..=k as u64).collect();
        let secret_points = (1..=p as u64).map(|i| q - i).collect();
        Self::build(
            k,
            t,
            p,
            field,
            PointLayout::Lagrange,
            eval_points,
            secret_points,
            0,
        )
    }

    /// FFT layout; `p` must be a power of two and `k + p` must fit the
    /// field's power-of-two subgroup.
    pub fn fft(
        k: usize,
        t: usize,
        p: usize,
        field: PrimeFieldCtx,
    ) -> Result<Arc<Self>, ShamirError> {
        check_thresholds(k, t, p)?;
        if !p.is_power_of_two() {
            return Err(ShamirError::Config(format!(
                "FFT layout needs a power-of-two packing width, got {p}"
            )));
        }
        let capacity = field.ntt_capacity();
        let n = k.next_power_of_two();
        if k + p > capacity || n > capacity {
            return Err(ShamirError::NttCapacity {
                needed: k + p,
                capacity,
            });
        }
        let g = field.coset_shift().ok_or_else(|| {
            ShamirError::Config("q - 1 is a power of two; no coset for share points".into())
        })?;
        let w_n = field.root_of_unity_of_order(n)?;
        let w_p = field.root_of_unity_of_order(p)?;
        let mut eval_points = Vec::with_capacity(k);
        let mut x = g;
        for _ in 0..k {
            eval_points.push(x);
            x = field.mul(x, w_n);
        }
        let mut secret_points = Vec::with_capacity(p);
        let mut z = 1;
        for _ in 0..p {
            secret_points.push(z);
            z = field.mul(z, w_p);
        }
        Self::build(
            k,
            t,
            p,
            field,
            PointLayout::Fft,
            eval_points,
            secret_points,
            n,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        k: usize,
        t: usize,
        p: usize,
        field: PrimeFieldCtx,
        layout: PointLayout,
        eval_points: Vec<u64>,
        secret_points: Vec<u64>,
        share_domain: usize,
    ) -> Result<Arc<Self>, ShamirError> {
        let defining: Vec<u64> = secret_points
            .iter()
            .chain(&eval_points[..t])
            .copied()
            .collect();
        let gen_coeffs = lagrange_coefficients(&field, &defining, &eval_points[t..])?;
        Ok(Arc::new(SharingConfig {
            k,
            t,
            p,
            field,
            layout,
            eval_points,
            secret_points,
            share_domain,
            gen_coeffs,
        }))
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn p(&self) -> usize {
        self.p
    }
    /// Shares needed to reconstruct, `t + p`.
    pub fn threshold(&self) -> usize {
        self.t + self.p
    }
    pub fn field(&self) -> &PrimeFieldCtx {
        &self.field
    }
    pub fn layout(&self) -> PointLayout {
        self.layout
    }
    pub fn eval_points(&self) -> &[u64] {
        &self.eval_points
    }
    pub fn secret_points(&self) -> &[u64] {
        &self.secret_points
    }

    fn same_params(&self, other: &SharingConfig) -> bool {
        self.k == other.k
            && self.t == other.t
            && self.p == other.p
            && self.layout == other.layout
            && self.field.modulus() == other.field.modulus()
    }
}

fn check_thresholds(k: usize, t: usize, p: usize) -> Result<(), ShamirError> {
    if t == 0 || p == 0 {
        return Err(ShamirError::Config(format!(
            "t and p must be at least 1 (t = {t}, p = {p})"
        )));
    }
    if t + p > k {
        return Err(ShamirError::Config(format!(
            "reconstruction threshold t + p = {} exceeds k = {k}",
            t + p
        )));
    }
    if k > u16::MAX as usize + 1 {
        return Err(ShamirError::Config(format!(
            "k = {k} exceeds the 16-bit client index space"
        )));
    }
    Ok(())
}

/// `L_i(z)` for every target `z`, over interpolation nodes `xs`.
///
/// Barycentric form: `O(|xs|²)` for the weights, then `O(|xs|)` per target.
fn lagrange_coefficients(
    field: &PrimeFieldCtx,
    xs: &[u64],
    targets: &[u64],
) -> Result<Vec<Vec<u64>>, FieldError> {
    let r = xs.len();
    let mut denoms = Vec::with_capacity(r);
    for (i, &xi) in xs.iter().enumerate() {
        let mut d = 1u64;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                d = field.mul(d, field.sub(xi, xj));
            }
        }
        denoms.push(d);
    }
    let weights = field.batch_inv(&denoms)?;
    let mut out = Vec::with_capacity(targets.len());
    for &z in targets {
        if let Some(hit) = xs.iter().position(|&x| x == z) {
            let mut row = vec![0u64; r];
            row[hit] = 1;
            out.push(row);
            continue;
        }
        let diffs: Vec<u64> = xs.iter().map(|&x| field.sub(z, x)).collect();
        let ell = diffs.iter().fold(1u64, |acc, &d| field.mul(acc, d));
        let inv_diffs = field.batch_inv(&diffs)?;
        out.push(
            weights
                .iter()
                .zip(&inv_diffs)
                .map(|(&w, &d)| field.mul(ell, field.mul(w, d)))
                .collect(),
        );
    }
    Ok(out)
}

/// One packed sharing: share values held by a set of client indices.
#[derive(Debug, Clone)]
pub struct ShareSet {
    config: Arc<SharingConfig>,
    indices: Vec<usize>,
    values: Vec<u64>,
}

impl ShareSet {
    /// Builds a share set from `(index, value)` pairs; indices are sorted.
    pub fn from_pairs(
        config: Arc<SharingConfig>,
        mut pairs: Vec<(usize, u64)>,
    ) -> Result<Self, ShamirError> {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        pairs.dedup_by_key(|&mut (i, _)| i);
        let q = config.field.modulus();
        for &(i, v) in &pairs {
            if i >= config.k {
                return Err(ShamirError::IndexOutOfRange {
                    index: i,
                    k: config.k,
                });
            }
            if v >= q {
                return Err(FieldError::NonCanonical { value: v, q }.into());
            }
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(ShareSet {
            config,
            indices,
            values,
        })
    }

    pub fn config(&self) -> &Arc<SharingConfig> {
        &self.config
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn values(&self) -> &[u64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<u64> {
        self.indices
            .binary_search(&index)
            .ok()
            .map(|pos| self.values[pos])
    }

    /// Keeps only the shares whose index satisfies `keep`.
    pub fn retain(&self, mut keep: impl FnMut(usize) -> bool) -> ShareSet {
        let (indices, values) = self
            .indices
            .iter()
            .zip(&self.values)
            .filter(|(&i, _)| keep(i))
            .map(|(&i, &v)| (i, v))
            .unzip();
        ShareSet {
            config: self.config.clone(),
            indices,
            values,
        }
    }

    /// Replaces the share held by `index`.
    pub fn with_share(&self, index: usize, value: u64) -> Result<ShareSet, ShamirError> {
        let pos = self
            .indices
            .binary_search(&index)
            .map_err(|_| ShamirError::IndexOutOfRange {
                index,
                k: self.config.k,
            })?;
        let mut out = self.clone();
        out.values[pos] = self.config.field.reduce(value);
        Ok(out)
    }

    fn aligned(&self, other: &ShareSet) -> bool {
        (Arc::ptr_eq(&self.config, &other.config) || self.config.same_params(&other.config))
            && self.indices == other.indices
    }

    /// `[a] + [b]`, pointwise.
    pub fn add(&self, other: &ShareSet) -> Result<ShareSet, ShamirError> {
        if !self.aligned(other) {
            return Err(ShamirError::Alignment);
        }
        let f = &self.config.field;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f.add(a, b))
            .collect();
        Ok(ShareSet {
            config: self.config.clone(),
            indices: self.indices.clone(),
            values,
        })
    }

    /// `[a + c]`: adds the public constant `c` to every packed secret.
    pub fn add_const(&self, c: u64) -> ShareSet {
        let f = &self.config.field;
        let c = f.reduce(c);
        let values = self.values.iter().map(|&a| f.add(a, c)).collect();
        ShareSet {
            config: self.config.clone(),
            indices: self.indices.clone(),
            values,
        }
    }

    /// `[c·a]`.
    pub fn scale(&self, c: u64) -> ShareSet {
        let f = &self.config.field;
        let c = f.reduce(c);
        let values = self.values.iter().map(|&a| f.mul(a, c)).collect();
        ShareSet {
            config: self.config.clone(),
            indices: self.indices.clone(),
            values,
        }
    }
}

/// Convenience wrapper around [`ShareSet::add`].
pub fn add_shares(a: &ShareSet, b: &ShareSet) -> Result<ShareSet, ShamirError> {
    a.add(b)
}

fn padded_secrets(secrets: &[u64], config: &SharingConfig) -> Result<Vec<u64>, ShamirError> {
    if secrets.is_empty() || secrets.len() > config.p {
        return Err(ShamirError::Capacity {
            len: secrets.len(),
            p: config.p,
        });
    }
    let mut s: Vec<u64> = secrets.iter().map(|&x| config.field.reduce(x)).collect();
    s.resize(config.p, 0);
    Ok(s)
}

fn full_share_set(config: &Arc<SharingConfig>, values: Vec<u64>) -> ShareSet {
    ShareSet {
        config: config.clone(),
        indices: (0..config.k).collect(),
        values,
    }
}

/// Shares up to `p` secrets by Lagrange interpolation.
///
/// The polynomial takes the secrets at the secret points and fresh uniform
/// values at the first `t` share points; the other shares are its
/// evaluations. Works for either point layout.
pub fn share_packed<R: Rng + ?Sized>(
    secrets: &[u64],
    config: &Arc<SharingConfig>,
    rng: &mut R,
) -> Result<ShareSet, ShamirError> {
    let f = &config.field;
    let mut defining = padded_secrets(secrets, config)?;
    let q = f.modulus();
    let random: Vec<u64> = (0..config.t).map(|_| rng.gen_range(0..q)).collect();
    defining.extend_from_slice(&random);
    let mut values = random;
    values.extend(config.gen_coeffs.iter().map(|row| f.dot(row, &defining)));
    Ok(full_share_set(config, values))
}

/// Shares up to `p` secrets with the packed FFT method (FFT layout only).
pub fn share_packed_fft<R: Rng + ?Sized>(
    secrets: &[u64],
    config: &Arc<SharingConfig>,
    rng: &mut R,
) -> Result<ShareSet, ShamirError> {
    if config.layout != PointLayout::Fft {
        return Err(ShamirError::Layout);
    }
    let f = &config.field;
    let (t, p) = (config.t, config.p);
    let mut interp = padded_secrets(secrets, config)?;
    f.ntt_in_place(&mut interp, true)?;
    let q = f.modulus();
    let mask: Vec<u64> = (0..t).map(|_| rng.gen_range(0..q)).collect();
    // f(x) = I(x) + (x^p - 1) R(x), degree < t + p
    let mut coeffs = vec![0u64; t + p];
    coeffs[..p].copy_from_slice(&interp);
    for (i, &r) in mask.iter().enumerate() {
        coeffs[i] = f.sub(coeffs[i], r);
        coeffs[i + p] = f.add(coeffs[i + p], r);
    }
    let values = evaluate_on_share_domain(config, &coeffs)?;
    Ok(full_share_set(config, values))
}

/// Evaluates a polynomial (coefficients, lowest first) at every share point
/// of an FFT-layout config with one coset NTT.
pub fn evaluate_on_share_domain(
    config: &SharingConfig,
    coeffs: &[u64],
) -> Result<Vec<u64>, ShamirError> {
    if config.layout != PointLayout::Fft {
        return Err(ShamirError::Layout);
    }
    let f = &config.field;
    let n = config.share_domain;
    if coeffs.len() > n {
        return Err(ShamirError::Config(format!(
            "degree {} exceeds share domain {n}",
            coeffs.len()
        )));
    }
    let g = f.coset_shift().ok_or(ShamirError::Layout)?;
    let mut buf = vec![0u64; n];
    let mut gi = 1u64;
    for (b, &c) in buf.iter_mut().zip(coeffs) {
        *b = f.mul(c, gi);
        gi = f.mul(gi, g);
    }
    f.ntt_in_place(&mut buf, false)?;
    buf.truncate(config.k);
    Ok(buf)
}

/// Outcome of a verified reconstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verified<T> {
    Accepted(T),
    Abort,
}

impl<T> Verified<T> {
    pub fn is_abort(&self) -> bool {
        matches!(self, Verified::Abort)
    }
    pub fn accepted(self) -> Option<T> {
        match self {
            Verified::Accepted(v) => Some(v),
            Verified::Abort => None,
        }
    }
}

/// Interpolation coefficients for one set of share indices, reusable across
/// every sharing that holds shares at exactly those indices.
#[derive(Debug, Clone)]
pub struct ReconstructionPlan {
    config: Arc<SharingConfig>,
    indices: Vec<usize>,
    // p x r, over the lowest r indices
    secret_coeffs: Vec<Vec<u64>>,
    verify: Option<VerifyPlan>,
}

#[derive(Debug, Clone)]
struct VerifyPlan {
    // p x (r + 1), degree <= r interpolation over the lowest r + 1 indices
    superset_coeffs: Vec<Vec<u64>>,
    // positions (in the index list) of the remaining surplus shares and the
    // evaluation row of the size-r interpolant at each of their points
    surplus: Vec<(usize, Vec<u64>)>,
}

impl ReconstructionPlan {
    /// Plan for plain reconstruction from the lowest `t + p` indices.
    pub fn new(config: &Arc<SharingConfig>, indices: &[usize]) -> Result<Self, ShamirError> {
        Self::build(config, indices, false)
    }

    /// Plan for verified reconstruction; needs at least `t + p + 1` indices.
    pub fn verified(config: &Arc<SharingConfig>, indices: &[usize]) -> Result<Self, ShamirError> {
        Self::build(config, indices, true)
    }

    fn build(
        config: &Arc<SharingConfig>,
        indices: &[usize],
        verify: bool,
    ) -> Result<Self, ShamirError> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&i| i >= config.k) {
            return Err(ShamirError::IndexOutOfRange {
                index: bad,
                k: config.k,
            });
        }
        let r = config.threshold();
        let need = r + verify as usize;
        if sorted.len() < need {
            return Err(ShamirError::InsufficientShares {
                have: sorted.len(),
                need,
            });
        }
        let f = &config.field;
        let points: Vec<u64> = sorted.iter().map(|&i| config.eval_points[i]).collect();
        let secret_coeffs = lagrange_coefficients(f, &points[..r], &config.secret_points)?;
        let verify = if verify {
            let superset_coeffs = lagrange_coefficients(f, &points[..=r], &config.secret_points)?;
            let rows = lagrange_coefficients(f, &points[..r], &points[r + 1..])?;
            let surplus = (r + 1..sorted.len()).zip(rows).collect();
            Some(VerifyPlan {
                superset_coeffs,
                surplus,
            })
        } else {
            None
        };
        Ok(ReconstructionPlan {
            config: config.clone(),
            indices: sorted,
            secret_coeffs,
            verify,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn check(&self, shares: &ShareSet) -> Result<(), ShamirError> {
        let same_config =
            Arc::ptr_eq(&self.config, &shares.config) || self.config.same_params(&shares.config);
        if !same_config || shares.indices != self.indices {
            return Err(ShamirError::Alignment);
        }
        Ok(())
    }

    pub fn reconstruct(&self, shares: &ShareSet) -> Result<Vec<u64>, ShamirError> {
        self.check(shares)?;
        let r = self.config.threshold();
        let f = &self.config.field;
        Ok(self
            .secret_coeffs
            .iter()
            .map(|row| f.dot(row, &shares.values[..r]))
            .collect())
    }

    pub fn reconstruct_verified(
        &self,
        shares: &ShareSet,
    ) -> Result<Verified<Vec<u64>>, ShamirError> {
        let plan = self
            .verify
            .as_ref()
            .ok_or_else(|| ShamirError::Config("plan was not built for verification".into()))?;
        let from_subset = self.reconstruct(shares)?;
        let r = self.config.threshold();
        let f = &self.config.field;
        let from_superset: Vec<u64> = plan
            .superset_coeffs
            .iter()
            .map(|row| f.dot(row, &shares.values[..=r]))
            .collect();
        if from_subset != from_superset {
            return Ok(Verified::Abort);
        }
        // each further surplus share j: reconstruct(A ∪ {j}) == reconstruct(A)
        // exactly when share j lies on the polynomial interpolated from A
        for (pos, row) in &plan.surplus {
            if f.dot(row, &shares.values[..r]) != shares.values[*pos] {
                return Ok(Verified::Abort);
            }
        }
        Ok(Verified::Accepted(from_subset))
    }
}

/// Lagrange reconstruction from the lowest `t + p` shares.
pub fn reconstruct(shares: &ShareSet) -> Result<Vec<u64>, ShamirError> {
    ReconstructionPlan::new(&shares.config, &shares.indices)?.reconstruct(shares)
}

/// Reconstruction with verification: [`Verified::Abort`] unless every share
/// beyond the lowest `t + p` agrees with them.
pub fn reconstruct_verified(shares: &ShareSet) -> Result<Verified<Vec<u64>>, ShamirError> {
    ReconstructionPlan::verified(&shares.config, &shares.indices)?.reconstruct_verified(shares)
}

/// `O(k log k)` reconstruction for an FFT-layout sharing whose share domain
/// is fully populated (`k` a power of two, every share present).
pub fn reconstruct_fft(shares: &ShareSet) -> Result<Vec<u64>, ShamirError> {
    let config = &shares.config;
    if config.layout != PointLayout::Fft
        || config.share_domain != config.k
        || shares.len() != config.k
    {
        return Err(ShamirError::Layout);
    }
    let f = &config.field;
    let mut coeffs = shares.values.clone();
    f.ntt_in_place(&mut coeffs, true)?;
    let g_inv = f.inv(f.coset_shift().ok_or(ShamirError::Layout)?)?;
    let mut gi = 1u64;
    for c in coeffs.iter_mut() {
        *c = f.mul(*c, gi);
        gi = f.mul(gi, g_inv);
    }
    // evaluate at p-th roots of unity: fold modulo x^p - 1, then NTT of size p
    let p = config.p;
    let mut folded = vec![0u64; p];
    for (i, &c) in coeffs.iter().enumerate() {
        folded[i % p] = f.add(folded[i % p], c);
    }
    f.ntt_in_place(&mut folded, false)?;
    Ok(folded)
}

/// Wire form of a batch of shares addressed to one client:
/// `sharing id: u32 | client index: u16 | payload: 4-byte LE field elements`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareMessage {
    pub sharing_id: u32,
    pub client_index: u16,
    pub payload: Vec<u64>,
}

impl ShareMessage {
    pub const HEADER_BYTES: usize = 6;

    pub fn encoded_len(&self) -> usize {
        Self::HEADER_BYTES + 4 * self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, ShamirError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.sharing_id.to_le_bytes());
        out.extend_from_slice(&self.client_index.to_le_bytes());
        for &v in &self.payload {
            let v = u32::try_from(v)
                .map_err(|_| ShamirError::Wire(format!("element {v} exceeds 32 bits")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], field: &PrimeFieldCtx) -> Result<Self, ShamirError> {
        if bytes.len() < Self::HEADER_BYTES || (bytes.len() - Self::HEADER_BYTES) % 4 != 0 {
            return Err(ShamirError::Wire(format!(
                "length {} is not 6 + 4n",
                bytes.len()
            )));
        }
        let sharing_id = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let client_index = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        let payload = bytes[Self::HEADER_BYTES..]
            .chunks_exact(4)
            .map(|c| {
                field
                    .checked_element(u32::from_le_bytes(c.try_into().unwrap()) as u64)
                    .map(|e| e.value())
            })
            .collect::<Result<_, _>>()?;
        Ok(ShareMessage {
            sharing_id,
            client_index,
            payload,
        })
    }
}
