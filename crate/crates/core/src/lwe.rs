//! LWE masking: `b = A·s + e`, `h = v + b`, and the server-side unmask
//! `V = H - A·s_sum`, which leaves `Σ v + Σ e`.

use crate::field::{FieldError, PrimeFieldCtx};
use crate::sampler::{self, ChiParams, ChiWidth, Matrix, Prg, SamplerError, Seed, DEFAULT_BETA_Q};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

/// Field headroom reserved for accumulated noise when sizing the maximum
/// number of 16-bit contributions a modulus can hold.
pub const NOISE_MARGIN: u64 = 4096;

/// Public matrices up to this many entries are materialized once per round
/// and shared; larger ones are streamed row by row.
pub const MATERIALIZE_LIMIT: usize = 1 << 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LweError {
    #[error("invalid LWE parameters: {0}")]
    Params(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("malformed masked vector: {0}")]
    Wire(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Parameter sets rated at 128-bit security or more by external estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LwePreset {
    /// `n = 710, q = 31352833`
    A,
    /// `n = 730, q = 41057281`
    B,
    /// `n = 750, q = 71663617`
    C,
}

impl LwePreset {
    pub const ALL: [LwePreset; 3] = [LwePreset::A, LwePreset::B, LwePreset::C];

    pub fn n(self) -> usize {
        match self {
            LwePreset::A => 710,
            LwePreset::B => 730,
            LwePreset::C => 750,
        }
    }

    pub fn q(self) -> u64 {
        match self {
            LwePreset::A => 31_352_833,
            LwePreset::B => 41_057_281,
            LwePreset::C => 71_663_617,
        }
    }
}

impl FromStr for LwePreset {
    type Err = LweError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(LwePreset::A),
            "b" => Ok(LwePreset::B),
            "c" => Ok(LwePreset::C),
            other => Err(LweError::Params(format!(
                "unknown preset {other:?} (expected a, b or c)"
            ))),
        }
    }
}

impl fmt::Display for LwePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LwePreset::A => "a",
            LwePreset::B => "b",
            LwePreset::C => "c",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LweParams {
    pub n: usize,
    pub q: u64,
    pub beta_q: f64,
    pub m: usize,
    pub chi_width: ChiWidth,
    zero_error: bool,
}

impl LweParams {
    pub fn new(n: usize, q: u64, beta_q: f64, m: usize) -> Result<Self, LweError> {
        if n == 0 || m == 0 {
            return Err(LweError::Params(format!(
                "n and m must be positive (n = {n}, m = {m})"
            )));
        }
        PrimeFieldCtx::new(q)?;
        let params = LweParams {
            n,
            q,
            beta_q,
            m,
            chi_width: ChiWidth::default(),
            zero_error: false,
        };
        params.chi()?;
        Ok(params)
    }

    pub fn preset(preset: LwePreset, m: usize) -> Self {
        LweParams {
            n: preset.n(),
            q: preset.q(),
            beta_q: DEFAULT_BETA_Q,
            m,
            chi_width: ChiWidth::default(),
            zero_error: false,
        }
    }

    pub fn with_dim(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_chi_width(mut self, width: ChiWidth) -> Self {
        self.chi_width = width;
        self
    }

    /// Test hook: every error vector `e` becomes zero, so aggregates are
    /// exact. Never use outside tests and oracles.
    pub fn with_zero_error_for_testing(mut self) -> Self {
        log::warn!(
            "LWE zero-error test hook enabled: masks carry no error term and provide no security"
        );
        self.zero_error = true;
        self
    }

    pub fn zero_error(&self) -> bool {
        self.zero_error
    }

    pub fn field(&self) -> Result<PrimeFieldCtx, LweError> {
        Ok(PrimeFieldCtx::new(self.q)?)
    }

    pub fn chi(&self) -> Result<ChiParams, LweError> {
        Ok(ChiParams::from_beta_q(self.beta_q, self.chi_width, self.q)?)
    }

    pub fn sigma_chi(&self) -> f64 {
        self.chi().map(|c| c.sigma_chi()).unwrap_or(f64::NAN)
    }

    /// Largest number of 16-bit contributions whose sum stays below `q`
    /// with [`NOISE_MARGIN`] to spare.
    pub fn max_clients(&self) -> usize {
        max_clients_for_modulus(self.q)
    }
}

pub fn max_clients_for_modulus(q: u64) -> usize {
    (q.saturating_sub(NOISE_MARGIN) >> 16) as usize
}

/// A client's secret `s ∈ F_q^n` and error `e ∈ F_q^m`, both from `χ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskKey {
    pub s: Vec<u64>,
    pub e: Vec<u64>,
}

impl MaskKey {
    /// Samples `s` and `e` from the client's round seed (`s` on PRG stream 0,
    /// `e` on stream 1, so `s` can be regenerated alone).
    pub fn sample(params: &LweParams, client_seed: &Seed) -> Result<Self, LweError> {
        let s = Self::regenerate_secret(params, client_seed)?;
        let e = if params.zero_error {
            vec![0; params.m]
        } else {
            let chi = params.chi()?;
            sampler::sample_chi(&chi, params.m, &mut Prg::new(*client_seed, 1))
        };
        Ok(MaskKey { s, e })
    }

    pub fn regenerate_secret(params: &LweParams, client_seed: &Seed) -> Result<Vec<u64>, LweError> {
        let chi = params.chi()?;
        Ok(sampler::sample_chi(
            &chi,
            params.n,
            &mut Prg::new(*client_seed, 0),
        ))
    }
}

/// The public `m x n` matrix, either streamed from its seed or held in memory.
/// Both forms produce identical rows.
#[derive(Debug, Clone)]
pub enum PublicMatrix {
    Streamed { seed: Seed, m: usize, n: usize },
    Materialized { seed: Seed, matrix: Arc<Matrix> },
}

impl PublicMatrix {
    pub fn streamed(seed: Seed, m: usize, n: usize) -> Self {
        PublicMatrix::Streamed { seed, m, n }
    }

    pub fn materialized(seed: Seed, m: usize, n: usize, field: &PrimeFieldCtx) -> Self {
        PublicMatrix::Materialized {
            seed,
            matrix: Arc::new(sampler::expand_matrix(&seed, m, n, field)),
        }
    }

    /// Materializes when the matrix is at most [`MATERIALIZE_LIMIT`] entries.
    pub fn for_round(seed: Seed, m: usize, n: usize, field: &PrimeFieldCtx) -> Self {
        if m.saturating_mul(n) <= MATERIALIZE_LIMIT {
            Self::materialized(seed, m, n, field)
        } else {
            Self::streamed(seed, m, n)
        }
    }

    pub fn seed(&self) -> &Seed {
        match self {
            PublicMatrix::Streamed { seed, .. } | PublicMatrix::Materialized { seed, .. } => seed,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            PublicMatrix::Streamed { m, .. } => *m,
            PublicMatrix::Materialized { matrix, .. } => matrix.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            PublicMatrix::Streamed { n, .. } => *n,
            PublicMatrix::Materialized { matrix, .. } => matrix.cols(),
        }
    }

    /// `A·s`, one dot product per row with a single reduction each.
    pub fn mul_vec(&self, field: &PrimeFieldCtx, s: &[u64]) -> Result<Vec<u64>, LweError> {
        if s.len() != self.cols() {
            return Err(LweError::Shape {
                expected: self.cols(),
                got: s.len(),
            });
        }
        Ok(match self {
            PublicMatrix::Streamed { seed, m, n } => {
                let mut row = vec![0u64; *n];
                (0..*m)
                    .map(|i| {
                        sampler::matrix_row(seed, i, field, &mut row);
                        field.dot(&row, s)
                    })
                    .collect()
            }
            PublicMatrix::Materialized { matrix, .. } => (0..matrix.rows())
                .map(|i| field.dot(matrix.row(i), s))
                .collect(),
        })
    }
}

/// `b = A·s + e`.
pub fn compute_b(
    field: &PrimeFieldCtx,
    a: &PublicMatrix,
    key: &MaskKey,
) -> Result<Vec<u64>, LweError> {
    if key.e.len() != a.rows() {
        return Err(LweError::Shape {
            expected: a.rows(),
            got: key.e.len(),
        });
    }
    let mut b = a.mul_vec(field, &key.s)?;
    field.add_assign_vec(&mut b, &key.e);
    Ok(b)
}

/// Samples a client's key from its seed and computes its pad `b`, streaming
/// `A` from `a_seed` so memory stays `O(n)`.
pub fn gen_mask(
    params: &LweParams,
    a_seed: &Seed,
    client_seed: &Seed,
) -> Result<(MaskKey, Vec<u64>), LweError> {
    let field = params.field()?;
    let key = MaskKey::sample(params, client_seed)?;
    let b = compute_b(
        &field,
        &PublicMatrix::streamed(*a_seed, params.m, params.n),
        &key,
    )?;
    Ok((key, b))
}

/// `h = v + b`.
pub fn mask(field: &PrimeFieldCtx, v: &[u64], b: &[u64]) -> Result<Vec<u64>, LweError> {
    if v.len() != b.len() {
        return Err(LweError::Shape {
            expected: b.len(),
            got: v.len(),
        });
    }
    Ok(v.iter().zip(b).map(|(&x, &y)| field.add(x, y)).collect())
}

/// `V = H - A·s_sum`.
pub fn unmask_sum(
    field: &PrimeFieldCtx,
    h_sum: &[u64],
    s_sum: &[u64],
    a: &PublicMatrix,
) -> Result<Vec<u64>, LweError> {
    if h_sum.len() != a.rows() {
        return Err(LweError::Shape {
            expected: a.rows(),
            got: h_sum.len(),
        });
    }
    let a_s = a.mul_vec(field, s_sum)?;
    let mut v = h_sum.to_vec();
    field.sub_assign_vec(&mut v, &a_s);
    Ok(v)
}

/// A client's masked vector with its wire header
/// (`round: u32 | client: u16 | m: u32 | m × 4-byte LE elements`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedVector {
    pub round: u32,
    pub client_id: u16,
    pub h: Vec<u64>,
}

impl MaskedVector {
    pub const HEADER_BYTES: usize = 10;

    pub fn encoded_len(&self) -> usize {
        Self::HEADER_BYTES + 4 * self.h.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, LweError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.client_id.to_le_bytes());
        out.extend_from_slice(&(self.h.len() as u32).to_le_bytes());
        for &x in &self.h {
            let x = u32::try_from(x)
                .map_err(|_| LweError::Wire(format!("element {x} exceeds 32 bits")))?;
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], field: &PrimeFieldCtx) -> Result<Self, LweError> {
        if bytes.len() < Self::HEADER_BYTES {
            return Err(LweError::Wire(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        let round = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let client_id = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        let m = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let body = &bytes[Self::HEADER_BYTES..];
        if body.len() != 4 * m {
            return Err(LweError::Wire(format!(
                "header announces {m} elements, body holds {} bytes",
                body.len()
            )));
        }
        let h = body
            .chunks_exact(4)
            .map(|c| {
                field
                    .checked_element(u32::from_le_bytes(c.try_into().unwrap()) as u64)
                    .map(|e| e.value())
            })
            .collect::<Result<_, _>>()?;
        Ok(MaskedVector {
            round,
            client_id,
            h,
        })
    }
}
