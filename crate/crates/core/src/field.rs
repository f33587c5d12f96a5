//! Exact arithmetic in a prime field `F_q`.
//!
//! [`PrimeFieldCtx`] owns the modulus and the power-of-two root of unity used
//! by the number-theoretic transform. Bulk protocol code works on canonical
//! `u64` residues through the context (`ctx.add(a, b)` and friends); the
//! checked scalar type [`FieldElement`] carries its modulus so that mixing
//! values from different fields is reported instead of silently wrapping.
//!
//! Nothing here is constant time. This is a simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

/// Seed for the root-of-unity search, fixed so every run picks the same root.
const ROOT_SEARCH_SEED: u64 = 0x0f1e_1d5e_ed00_0001;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is outside the supported range [2, 2^63)")]
    ModulusOutOfRange(u64),
    #[error("operands belong to different fields (q = {left} vs q = {right})")]
    ContextMismatch { left: u64, right: u64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("transform length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("transform length {len} exceeds the 2-adic capacity {max} of the field")]
    NttCapacity { len: usize, max: usize },
    #[error("value {value} is not a canonical residue mod {q}")]
    NonCanonical { value: u64, q: u64 },
    #[error("modulus {0} does not fit the 4-byte wire encoding")]
    WireOverflow(u64),
}

/// An immutable prime-field context. Cheap to clone, safe to share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeFieldCtx {
    q: u64,
    two_adicity: u32,
    root_of_unity: u64,
    coset_shift: Option<u64>,
    fits_u32: bool,
}

impl PrimeFieldCtx {
    /// Builds the context for prime `q`, rejecting composites.
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if !(2..(1u64 << 63)).contains(&q) {
            return Err(FieldError::ModulusOutOfRange(q));
        }
        if !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        let two_adicity = (q - 1).trailing_zeros();
        let mut ctx = PrimeFieldCtx {
            q,
            two_adicity,
            root_of_unity: 1,
            coset_shift: None,
            fits_u32: q <= u32::MAX as u64 + 1,
        };
        if two_adicity > 0 {
            ctx.root_of_unity = ctx.find_root_of_unity();
        }
        ctx.coset_shift = ctx.find_coset_shift();
        Ok(ctx)
    }

    fn find_root_of_unity(&self) -> u64 {
        let s = self.two_adicity;
        let cofactor = (self.q - 1) >> s;
        let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEARCH_SEED);
        loop {
            let x = rng.gen_range(1..self.q);
            let w = self.pow(x, cofactor);
            if self.pow(w, 1u64 << (s - 1)) == self.q - 1 {
                return w;
            }
        }
    }

    /// Smallest element outside the 2-Sylow subgroup, used to shift FFT share
    /// points off the roots of unity that carry packed secrets.
    fn find_coset_shift(&self) -> Option<u64> {
        if (self.q - 1) >> self.two_adicity == 1 {
            return None;
        }
        (2..self.q).find(|&x| self.pow(x, 1u64 << self.two_adicity) != 1)
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Largest `s` with `2^s | q - 1`.
    #[inline]
    pub fn two_adicity(&self) -> u32 {
        self.two_adicity
    }

    /// Generator of the subgroup of order `2^two_adicity`.
    #[inline]
    pub fn root_of_unity(&self) -> u64 {
        self.root_of_unity
    }

    /// Largest power-of-two transform length the field supports.
    pub fn ntt_capacity(&self) -> usize {
        1usize << self.two_adicity.min(usize::BITS - 1)
    }

    pub fn coset_shift(&self) -> Option<u64> {
        self.coset_shift
    }

    /// Primitive root of unity of order `n` (a power of two).
    pub fn root_of_unity_of_order(&self, n: usize) -> Result<u64, FieldError> {
        if !n.is_power_of_two() {
            return Err(FieldError::NotPowerOfTwo(n));
        }
        if n > self.ntt_capacity() {
            return Err(FieldError::NttCapacity {
                len: n,
                max: self.ntt_capacity(),
            });
        }
        let log_n = n.trailing_zeros();
        Ok(self.pow(self.root_of_unity, 1u64 << (self.two_adicity - log_n)))
    }

    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.q,
            modulus: self.q,
        }
    }

    /// Wraps an already canonical residue, rejecting anything `>= q`.
    pub fn checked_element(&self, value: u64) -> Result<FieldElement, FieldError> {
        if value >= self.q {
            return Err(FieldError::NonCanonical { value, q: self.q });
        }
        Ok(FieldElement {
            value,
            modulus: self.q,
        })
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x % self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        if a >= b {
            a - b
        } else {
            self.q - (b - a)
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        if self.fits_u32 {
            // both operands < 2^32, so the product fits in u64
            (a * b) % self.q
        } else {
            ((a as u128 * b as u128) % self.q as u128) as u64
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        base %= self.q;
        let mut acc = 1 % self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64, FieldError> {
        let a = a % self.q;
        if a == 0 {
            return Err(FieldError::DivisionByZero);
        }
        Ok(self.pow(a, self.q - 2))
    }

    /// Montgomery's batch inversion: one exponentiation for the whole slice.
    pub fn batch_inv(&self, values: &[u64]) -> Result<Vec<u64>, FieldError> {
        let mut prefix = Vec::with_capacity(values.len());
        let mut acc = 1u64;
        for &v in values {
            if v % self.q == 0 {
                return Err(FieldError::DivisionByZero);
            }
            prefix.push(acc);
            acc = self.mul(acc, v);
        }
        let mut inv_acc = self.inv(acc)?;
        let mut out = vec![0u64; values.len()];
        for i in (0..values.len()).rev() {
            out[i] = self.mul(inv_acc, prefix[i]);
            inv_acc = self.mul(inv_acc, values[i]);
        }
        Ok(out)
    }

    /// Maps a signed integer to its residue; negative `v` becomes `q - |v|`.
    #[inline]
    pub fn from_i64(&self, v: i64) -> u64 {
        let r = v.rem_euclid(self.q as i64);
        r as u64
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn centered(&self, a: u64) -> i64 {
        if a > self.q / 2 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }

    /// Elementwise sum of two residue vectors, written into `acc`.
    pub fn add_assign_vec(&self, acc: &mut [u64], rhs: &[u64]) {
        debug_assert_eq!(acc.len(), rhs.len());
        for (a, &b) in acc.iter_mut().zip(rhs) {
            *a = self.add(*a, b);
        }
    }

    pub fn sub_assign_vec(&self, acc: &mut [u64], rhs: &[u64]) {
        debug_assert_eq!(acc.len(), rhs.len());
        for (a, &b) in acc.iter_mut().zip(rhs) {
            *a = self.sub(*a, b);
        }
    }

    /// Dot product of two residue vectors with a single final reduction when
    /// the sum of products cannot overflow 64 bits, 128-bit otherwise.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        debug_assert_eq!(a.len(), b.len());
        let max_prod = (self.q as u128 - 1) * (self.q as u128 - 1);
        if max_prod * (a.len() as u128) < u64::MAX as u128 {
            let s: u64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
            s % self.q
        } else {
            let s: u128 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (x as u128 * y as u128) % self.q as u128)
                .sum();
            (s % self.q as u128) as u64
        }
    }

    /// In-place radix-2 number-theoretic transform over residues.
    ///
    /// The forward transform evaluates the coefficient vector at the powers
    /// `w^0, w^1, ...` of the order-`len` root returned by
    /// [`root_of_unity_of_order`](Self::root_of_unity_of_order); the inverse
    /// undoes it including the `1/len` scaling.
    pub fn ntt_in_place(&self, values: &mut [u64], inverse: bool) -> Result<(), FieldError> {
        let n = values.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(FieldError::NotPowerOfTwo(n));
        }
        let mut w_n = self.root_of_unity_of_order(n)?;
        if n == 1 {
            return Ok(());
        }
        if inverse {
            w_n = self.inv(w_n)?;
        }
        let log_n = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - log_n);
            if i < j {
                values.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let w_len = self.pow(w_n, (n / len) as u64);
            let half = len / 2;
            let mut twiddles = Vec::with_capacity(half);
            let mut w = 1u64;
            for _ in 0..half {
                twiddles.push(w);
                w = self.mul(w, w_len);
            }
            for chunk in values.chunks_mut(len) {
                let (lo, hi) = chunk.split_at_mut(half);
                for ((u, v), &tw) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                    let t = self.mul(*v, tw);
                    let a = *u;
                    *u = self.add(a, t);
                    *v = self.sub(a, t);
                }
            }
            len <<= 1;
        }
        if inverse {
            let n_inv = self.inv(n as u64 % self.q)?;
            for v in values.iter_mut() {
                *v = self.mul(*v, n_inv);
            }
        }
        Ok(())
    }

    /// Checked NTT over [`FieldElement`]s.
    pub fn ntt(
        &self,
        values: &[FieldElement],
        inverse: bool,
    ) -> Result<Vec<FieldElement>, FieldError> {
        let mut raw = Vec::with_capacity(values.len());
        for v in values {
            self.check(v)?;
            raw.push(v.value);
        }
        self.ntt_in_place(&mut raw, inverse)?;
        Ok(raw
            .into_iter()
            .map(|value| FieldElement {
                value,
                modulus: self.q,
            })
            .collect())
    }

    fn check(&self, v: &FieldElement) -> Result<(), FieldError> {
        if v.modulus != self.q {
            return Err(FieldError::ContextMismatch {
                left: self.q,
                right: v.modulus,
            });
        }
        Ok(())
    }
}

/// A canonical residue tagged with its modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.modulus
    }

    fn same_field(self, rhs: FieldElement) -> Result<u64, FieldError> {
        if self.modulus != rhs.modulus {
            return Err(FieldError::ContextMismatch {
                left: self.modulus,
                right: rhs.modulus,
            });
        }
        Ok(self.modulus)
    }

    pub fn add(self, rhs: FieldElement) -> Result<FieldElement, FieldError> {
        let q = self.same_field(rhs)?;
        let s = self.value + rhs.value;
        Ok(FieldElement {
            value: if s >= q { s - q } else { s },
            modulus: q,
        })
    }

    pub fn sub(self, rhs: FieldElement) -> Result<FieldElement, FieldError> {
        let q = self.same_field(rhs)?;
        let value = if self.value >= rhs.value {
            self.value - rhs.value
        } else {
            q - (rhs.value - self.value)
        };
        Ok(FieldElement { value, modulus: q })
    }

    pub fn mul(self, rhs: FieldElement) -> Result<FieldElement, FieldError> {
        let q = self.same_field(rhs)?;
        let value = ((self.value as u128 * rhs.value as u128) % q as u128) as u64;
        Ok(FieldElement { value, modulus: q })
    }

    pub fn neg(self) -> FieldElement {
        let value = if self.value == 0 {
            0
        } else {
            self.modulus - self.value
        };
        FieldElement {
            value,
            modulus: self.modulus,
        }
    }

    pub fn inv(self) -> Result<FieldElement, FieldError> {
        if self.value == 0 {
            return Err(FieldError::DivisionByZero);
        }
        let q = self.modulus as u128;
        let (mut base, mut exp, mut acc) = (self.value as u128, q - 2, 1u128);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % q;
            }
            base = base * base % q;
            exp >>= 1;
        }
        Ok(FieldElement {
            value: acc as u64,
            modulus: self.modulus,
        })
    }

    /// Little-endian 4-byte wire encoding.
    pub fn to_le_bytes(self) -> Result<[u8; 4], FieldError> {
        let v = u32::try_from(self.value).map_err(|_| FieldError::WireOverflow(self.modulus))?;
        Ok(v.to_le_bytes())
    }

    pub fn from_le_bytes(ctx: &PrimeFieldCtx, bytes: [u8; 4]) -> Result<FieldElement, FieldError> {
        ctx.checked_element(u32::from_le_bytes(bytes) as u64)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
