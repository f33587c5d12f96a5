//! Randomness sources.
//!
//! Everything random in a protocol run descends from one 32-byte master seed:
//! [`derive_seed`] hashes `(master, label, index)` into independent child
//! seeds, and [`Prg`] expands a seed in counter mode with ChaCha20 (the
//! stream id is the message counter). The LWE error distribution is an exact
//! discrete Gaussian sampled by rejection from a discrete Laplace proposal.

use crate::field::PrimeFieldCtx;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use thiserror::Error;

pub type Seed = [u8; 32];

/// Default `βq`, the width of the LWE error distribution in field units.
pub const DEFAULT_BETA_Q: f64 = 3.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("discrete Gaussian sigma {0} is below the supported minimum of 1/2")]
    SigmaTooSmall(f64),
    #[error("noise scale must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
}

/// Hashes a master seed, a domain label and an index into a child seed.
pub fn derive_seed(master: &Seed, label: &str, index: u64) -> Seed {
    let mut h = Sha256::new();
    h.update(master);
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Parses a hex seed of up to 64 digits, left-padded with zeros.
pub fn seed_from_hex(hex: &str) -> Result<Seed, SamplerError> {
    let digits = hex.trim().trim_start_matches("0x");
    if digits.is_empty() || digits.len() > 64 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(SamplerError::InvalidSeed(hex.to_string()));
    }
    let padded = format!("{digits:0>64}");
    let mut seed = [0u8; 32];
    for (i, byte) in seed.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&padded[2 * i..2 * i + 2], 16)
            .map_err(|_| SamplerError::InvalidSeed(hex.to_string()))?;
    }
    Ok(seed)
}

pub fn seed_to_hex(seed: &Seed) -> String {
    seed.iter().map(|b| format!("{b:02x}")).collect()
}

/// Counter-mode expansion of a 32-byte seed.
///
/// `(seed, counter)` fixes the output stream completely.
#[derive(Debug, Clone)]
pub struct Prg {
    seed: Seed,
    counter: u64,
    rng: ChaCha20Rng,
}

impl Prg {
    pub fn new(seed: Seed, counter: u64) -> Self {
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_stream(counter);
        Prg { seed, counter, rng }
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform residue in `[0, q)` by masking to the bit length of `q - 1`
    /// and rejecting draws that land at or above `q`.
    #[inline]
    pub fn uniform_residue(&mut self, q: u64) -> u64 {
        uniform_below(&mut self.rng, q)
    }
}

impl RngCore for Prg {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

#[inline]
fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, q: u64) -> u64 {
    let bits = 64 - (q - 1).leading_zeros();
    if bits <= 32 {
        let mask = if bits == 32 {
            u32::MAX
        } else {
            (1u32 << bits) - 1
        };
        loop {
            let x = (rng.next_u32() & mask) as u64;
            if x < q {
                return x;
            }
        }
    } else {
        let mask = if bits == 64 {
            u64::MAX
        } else {
            (1u64 << bits) - 1
        };
        loop {
            let x = rng.next_u64() & mask;
            if x < q {
                return x;
            }
        }
    }
}

/// Writes row `row` of the public matrix expanded from `seed` into `out`.
///
/// Each row is its own PRG stream, so rows can be produced in any order.
pub fn matrix_row(seed: &Seed, row: usize, field: &PrimeFieldCtx, out: &mut [u64]) {
    let mut prg = Prg::new(*seed, row as u64);
    let q = field.modulus();
    for x in out.iter_mut() {
        *x = prg.uniform_residue(q);
    }
}

/// Row-major `m x n` matrix of residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl Matrix {
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }
}

/// Materializes the full public matrix. Prefer [`matrix_row`] when `m` is large.
pub fn expand_matrix(seed: &Seed, m: usize, n: usize, field: &PrimeFieldCtx) -> Matrix {
    let mut data = vec![0u64; m * n];
    for (i, row) in data.chunks_mut(n.max(1)).enumerate().take(m) {
        matrix_row(seed, i, field, row);
    }
    Matrix {
        rows: m,
        cols: n,
        data,
    }
}

/// How `βq` is turned into the standard deviation of `χ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChiWidth {
    /// `σ_χ = βq / √(2π)`.
    #[default]
    WidthOverSqrtTwoPi,
    /// `σ_χ = βq`.
    WidthIsStdDev,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiParams {
    sigma_chi: f64,
    q: u64,
}

impl ChiParams {
    pub fn from_beta_q(beta_q: f64, width: ChiWidth, q: u64) -> Result<Self, SamplerError> {
        let sigma_chi = match width {
            ChiWidth::WidthOverSqrtTwoPi => beta_q / (2.0 * PI).sqrt(),
            ChiWidth::WidthIsStdDev => beta_q,
        };
        Self::new(sigma_chi, q)
    }

    pub fn new(sigma_chi: f64, q: u64) -> Result<Self, SamplerError> {
        if !sigma_chi.is_finite() {
            return Err(SamplerError::InvalidSigma(sigma_chi));
        }
        if sigma_chi < 0.5 {
            return Err(SamplerError::SigmaTooSmall(sigma_chi));
        }
        Ok(ChiParams { sigma_chi, q })
    }

    pub fn sigma_chi(&self) -> f64 {
        self.sigma_chi
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }
}

/// Exact sampler for the discrete Gaussian `N_Z(0, σ²)`.
///
/// Proposal: discrete Laplace with scale `t = ⌊σ⌋ + 1`; a draw `y` is kept with
/// probability `exp(-(|y| - σ²/t)² / 2σ²)`, which leaves exactly the target
/// pmf `∝ exp(-y²/2σ²)`.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteGaussian {
    sigma: f64,
    t: f64,
    shift: f64,
    two_sigma_sq: f64,
}

impl DiscreteGaussian {
    pub fn new(sigma: f64) -> Result<Self, SamplerError> {
        if !sigma.is_finite() {
            return Err(SamplerError::InvalidSigma(sigma));
        }
        if sigma < 0.5 {
            return Err(SamplerError::SigmaTooSmall(sigma));
        }
        let t = sigma.floor() + 1.0;
        Ok(DiscreteGaussian {
            sigma,
            t,
            shift: sigma * sigma / t,
            two_sigma_sq: 2.0 * sigma * sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        loop {
            let y = self.discrete_laplace(rng);
            let d = y.unsigned_abs() as f64 - self.shift;
            let accept = (-(d * d) / self.two_sigma_sq).exp();
            if rng.gen::<f64>() < accept {
                return y;
            }
        }
    }

    fn discrete_laplace<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        loop {
            // u in (0, 1]; floor(-t ln u) is geometric with ratio e^{-1/t}
            let u = 1.0 - rng.gen::<f64>();
            let g = (-u.ln() * self.t).floor() as i64;
            let negative = rng.gen::<bool>();
            if negative && g == 0 {
                continue;
            }
            return if negative { -g } else { g };
        }
    }
}

/// Signed draws from `χ`.
pub fn sample_chi_signed<R: Rng + ?Sized>(
    params: &ChiParams,
    count: usize,
    rng: &mut R,
) -> Vec<i64> {
    // ChiParams already enforces sigma >= 1/2
    let dg = DiscreteGaussian::new(params.sigma_chi).expect("validated sigma");
    (0..count).map(|_| dg.sample(rng)).collect()
}

/// Draws from `χ` mapped into `F_q` (negative values become `q - |v|`).
pub fn sample_chi<R: Rng + ?Sized>(params: &ChiParams, count: usize, rng: &mut R) -> Vec<u64> {
    let dg = DiscreteGaussian::new(params.sigma_chi).expect("validated sigma");
    let q = params.q as i64;
    (0..count)
        .map(|_| dg.sample(rng).rem_euclid(q) as u64)
        .collect()
}

/// I.i.d. `N(0, σ²)` draws; `σ = 0` gives exact zeros.
pub fn sample_gaussian<R: Rng + ?Sized>(
    sigma: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(SamplerError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; count]);
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| SamplerError::InvalidSigma(sigma))?;
    Ok((0..count).map(|_| normal.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    const SIGMA_CHI: f64 = 1.276_615_297_284_584_8; // 3.2 / sqrt(2π)

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    /// Exact pmf of N_Z(0, σ²) on [-50, 50] by direct summation.
    fn discrete_gaussian_pmf(sigma: f64) -> Vec<(i64, f64)> {
        let w: Vec<(i64, f64)> = (-50..=50)
            .map(|x| (x, (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()))
            .collect();
        let z: f64 = w.iter().map(|(_, p)| p).sum();
        w.into_iter().map(|(x, p)| (x, p / z)).collect()
    }

    #[test]
    fn sigma_from_beta_q() {
        let p = ChiParams::from_beta_q(3.2, ChiWidth::WidthOverSqrtTwoPi, 7).unwrap();
        assert!((p.sigma_chi() - SIGMA_CHI).abs() < 1e-12);
        let alt = ChiParams::from_beta_q(3.2, ChiWidth::WidthIsStdDev, 7).unwrap();
        assert_eq!(alt.sigma_chi(), 3.2);
        assert_eq!(
            ChiParams::new(0.49, 7),
            Err(SamplerError::SigmaTooSmall(0.49))
        );
        assert!(DiscreteGaussian::new(0.3).is_err());
    }

    #[test]
    fn seed_hex_roundtrip_and_padding() {
        let s = seed_from_hex("ff").unwrap();
        assert_eq!(s[31], 0xff);
        assert!(s[..31].iter().all(|&b| b == 0));
        let full = seed_to_hex(&derive_seed(&s, "x", 3));
        assert_eq!(seed_from_hex(&full).unwrap(), derive_seed(&s, "x", 3));
        assert!(seed_from_hex("xyz").is_err());
        assert!(seed_from_hex("").is_err());
    }

    #[test]
    fn derived_seeds_are_label_and_index_separated() {
        let m = [7u8; 32];
        assert_ne!(derive_seed(&m, "a", 0), derive_seed(&m, "a", 1));
        assert_ne!(derive_seed(&m, "a", 0), derive_seed(&m, "b", 0));
        assert_eq!(derive_seed(&m, "a", 0), derive_seed(&m, "a", 0));
    }

    #[test]
    fn matrix_expansion_is_deterministic() {
        let f = PrimeFieldCtx::new(71_663_617).unwrap();
        let seed = [1u8; 32];
        assert_eq!(
            expand_matrix(&seed, 8, 5, &f),
            expand_matrix(&seed, 8, 5, &f)
        );
        let mut row = vec![0; 5];
        matrix_row(&seed, 3, &f, &mut row);
        assert_eq!(row.as_slice(), expand_matrix(&seed, 8, 5, &f).row(3));
    }

    #[test]
    fn matrix_entries_uniform_mod_7() {
        let f = PrimeFieldCtx::new(7).unwrap();
        let a = expand_matrix(&[9u8; 32], 1000, 1000, &f);
        let mut counts = [0f64; 7];
        for i in 0..1000 {
            for &x in a.row(i) {
                counts[x as usize] += 1.0;
            }
        }
        let expected = 1e6 / 7.0;
        let stat: f64 = counts
            .iter()
            .map(|c| (c - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(6.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi-square {stat} >= {critical}");
    }

    #[test]
    fn distinct_seeds_give_distinct_matrices() {
        let f = PrimeFieldCtx::new(71_663_617).unwrap();
        let a = expand_matrix(&[1u8; 32], 64, 64, &f);
        let b = expand_matrix(&[2u8; 32], 64, 64, &f);
        let differ = (0..64)
            .flat_map(|i| (0..64).map(move |j| (i, j)))
            .filter(|&(i, j)| a.get(i, j) != b.get(i, j))
            .count();
        assert!(differ as f64 >= 0.99 * 4096.0);
    }

    #[test]
    fn chi_moments_and_support() {
        let params = ChiParams::new(SIGMA_CHI, 71_663_617).unwrap();
        let draws = sample_chi_signed(&params, 100_000, &mut rng(4));
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<i64>() as f64 / n;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        let var = draws
            .iter()
            .map(|&x| (x as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let exact_var: f64 = discrete_gaussian_pmf(SIGMA_CHI)
            .iter()
            .map(|&(x, p)| (x * x) as f64 * p)
            .sum();
        assert!(
            (exact_var - 1.63).abs() < 0.01,
            "exact variance {exact_var}"
        );
        assert!(
            (var - exact_var).abs() / exact_var < 0.05,
            "variance {var} vs {exact_var}"
        );
        let bound = 10.0 * SIGMA_CHI;
        assert!(draws.iter().all(|&x| (x as f64).abs() <= bound));
    }

    #[test]
    fn chi_matches_exact_pmf_in_total_variation() {
        let dg = DiscreteGaussian::new(SIGMA_CHI).unwrap();
        let mut r = rng(5);
        let mut hist = vec![0u64; 101];
        let n = 1_000_000;
        for _ in 0..n {
            let x = dg.sample(&mut r);
            hist[(x + 50) as usize] += 1;
        }
        let tv: f64 = discrete_gaussian_pmf(SIGMA_CHI)
            .iter()
            .map(|&(x, p)| (hist[(x + 50) as usize] as f64 / n as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.005, "total variation {tv}");
    }

    #[test]
    fn chi_maps_negatives_to_top_of_field() {
        let params = ChiParams::new(SIGMA_CHI, 7).unwrap();
        let mut a = rng(6);
        let mut b = rng(6);
        let signed = sample_chi_signed(&params, 200, &mut a);
        let residues = sample_chi(&params, 200, &mut b);
        for (s, r) in signed.iter().zip(&residues) {
            assert_eq!(*r, s.rem_euclid(7) as u64);
        }
    }

    #[test]
    fn continuous_gaussian() {
        assert_eq!(sample_gaussian(0.0, 5, &mut rng(7)).unwrap(), vec![0.0; 5]);
        assert!(sample_gaussian(-1.0, 5, &mut rng(7)).is_err());
        let xs = sample_gaussian(1.0, 100_000, &mut rng(8)).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd =
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt();
        assert!((0.98..=1.02).contains(&sd), "sd {sd}");
        let wide = sample_gaussian(8.0, 100_000, &mut rng(9)).unwrap();
        let inside = wide.iter().filter(|x| x.abs() <= 24.0).count() as f64 / wide.len() as f64;
        assert!(inside >= 0.996, "fraction within 3 sigma {inside}");
    }

    #[test]
    fn prg_replays_by_seed_and_counter() {
        let mut a = Prg::new([3u8; 32], 11);
        let mut b = Prg::new([3u8; 32], 11);
        let mut c = Prg::new([3u8; 32], 12);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_eq!(a.counter(), 11);
    }
}
