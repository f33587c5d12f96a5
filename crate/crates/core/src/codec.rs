//! Real vectors to field elements and back: L2 clipping, 4-decimal fixed point
//! in a signed 16-bit range, offset to unsigned, and the inverse after
//! aggregation. Also the on-disk per-example gradient format.

use crate::field::PrimeFieldCtx;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCALE: f64 = 10_000.0;
pub const BITS: u32 = 16;
pub const OFFSET: i64 = 1 << 15;
const CODE_MIN: i64 = -(1 << 15);
const CODE_MAX: i64 = (1 << 15) - 1;

/// Largest magnitude an encoded coordinate can carry, in real units.
pub const REAL_LIMIT: f64 = (1u64 << 15) as f64 / SCALE;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("clipping bound must be positive and finite, got {0}")]
    ClipBound(f64),
    #[error("{k} contributions of {BITS} bits do not fit below q = {q}")]
    Capacity { k: usize, q: u64 },
    #[error("coordinate {index} decodes to {value}, beyond the bound {bound}; the field sum probably wrapped")]
    OverflowSuspect {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("shape manifest covers {expected} values but the vector has {got}")]
    Manifest { expected: usize, got: usize },
    #[error("tensor shape {shape:?} needs {expected} values, got {got}")]
    TensorShape {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("gradient file: {message} at byte {offset}")]
    Format { offset: u64, message: String },
    #[error("gradient record has {got} values, file declares {expected}")]
    RecordLength { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub clip_c: f64,
    /// Real-domain standard deviation of any noise riding on top of the
    /// encoded sum; widens the overflow-suspect bound in `decode_sum`.
    pub noise_sd: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            clip_c: 5.0,
            noise_sd: 0.0,
        }
    }
}

/// `g / max(1, ‖g‖₂ / C)`.
pub fn clip(g: &[f64], c: f64) -> Result<Vec<f64>, CodecError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(CodecError::ClipBound(c));
    }
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let factor = (norm / c).max(1.0);
    Ok(g.iter().map(|x| x / factor).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGradient {
    pub elements: Vec<u64>,
    /// Coordinates pushed into range (non-finite values count too).
    pub clamped: usize,
}

impl EncodedGradient {
    pub fn m(&self) -> usize {
        self.elements.len()
    }
}

/// Signed fixed-point code of one value and whether it had to be clamped.
pub fn quantize(x: f64) -> (i64, bool) {
    if x.is_nan() {
        return (0, true);
    }
    let scaled = (x * SCALE).round();
    if scaled < CODE_MIN as f64 {
        (CODE_MIN, true)
    } else if scaled > CODE_MAX as f64 {
        (CODE_MAX, true)
    } else {
        (scaled as i64, false)
    }
}

pub fn encode(g: &[f64], field: &PrimeFieldCtx) -> Result<EncodedGradient, CodecError> {
    if field.modulus() <= 1 << BITS {
        return Err(CodecError::Capacity {
            k: 1,
            q: field.modulus(),
        });
    }
    let mut clamped = 0;
    let elements = g
        .iter()
        .map(|&x| {
            let (code, hit) = quantize(x);
            clamped += hit as usize;
            (code + OFFSET) as u64
        })
        .collect();
    Ok(EncodedGradient { elements, clamped })
}

/// Whether `k` encoded contributions plus noise headroom fit below `q`.
pub fn check_capacity(k: usize, q: u64) -> Result<(), CodecError> {
    let need = (k as u128) << BITS;
    if need + crate::lwe::NOISE_MARGIN as u128 >= q as u128 {
        return Err(CodecError::Capacity { k, q });
    }
    Ok(())
}

/// Inverts `encode` for a sum of `k` contributions: subtract `k·2^15`, take
/// the centered representative and rescale.
pub fn decode_sum(
    v: &[u64],
    k: usize,
    cfg: &CodecConfig,
    field: &PrimeFieldCtx,
) -> Result<Vec<f64>, CodecError> {
    check_capacity(k, field.modulus())?;
    let shift = field.from_i64(k as i64 * OFFSET);
    let bound = k as f64 * REAL_LIMIT + 10.0 * cfg.noise_sd;
    v.iter()
        .enumerate()
        .map(|(index, &x)| {
            let value = field.centered(field.sub(x, shift)) as f64 / SCALE;
            if value.abs() > bound {
                Err(CodecError::OverflowSuspect {
                    index,
                    value,
                    bound,
                })
            } else {
                Ok(value)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, CodecError> {
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(CodecError::TensorShape {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }
}

/// Tensor shapes in flattening order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShapeManifest(pub Vec<Vec<usize>>);

impl ShapeManifest {
    pub fn total(&self) -> usize {
        self.0.iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// One line per tensor, dimensions separated by spaces; `-` marks a scalar.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for shape in &self.0 {
            if shape.is_empty() {
                out.push('-');
            } else {
                let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
                out.push_str(&dims.join(" "));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CodecError> {
        let mut shapes = Vec::new();
        let mut offset = 0u64;
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed == "-" {
                shapes.push(Vec::new());
            } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
                let dims = trimmed
                    .split_whitespace()
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CodecError::Format {
                        offset,
                        message: format!("bad shape line {trimmed:?}: {e}"),
                    })?;
                shapes.push(dims);
            }
            offset += line.len() as u64 + 1;
        }
        Ok(ShapeManifest(shapes))
    }
}

pub fn flatten(tensors: &[Tensor]) -> (Vec<f64>, ShapeManifest) {
    let flat = tensors
        .iter()
        .flat_map(|t| t.data.iter().copied())
        .collect();
    (
        flat,
        ShapeManifest(tensors.iter().map(|t| t.shape.clone()).collect()),
    )
}

pub fn unflatten(flat: &[f64], manifest: &ShapeManifest) -> Result<Vec<Tensor>, CodecError> {
    if manifest.total() != flat.len() {
        return Err(CodecError::Manifest {
            expected: manifest.total(),
            got: flat.len(),
        });
    }
    let mut rest = flat;
    Ok(manifest
        .0
        .iter()
        .map(|shape| {
            let (head, tail) = rest.split_at(shape.iter().product());
            rest = tail;
            Tensor {
                shape: shape.clone(),
                data: head.to_vec(),
            }
        })
        .collect())
}

pub const GRADIENT_MAGIC: &[u8; 8] = b"FLDPGRAD";
pub const GRADIENT_VERSION: u8 = 1;
pub const GRADIENT_HEADER_BYTES: u64 = 17;

/// Path of the shape manifest stored next to a gradient file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".shapes");
    PathBuf::from(s)
}

/// Writes `count` records of `m` little-endian `f32`s after the header. The
/// record count is fixed up front and checked by [`GradientFileWriter::finish`].
pub struct GradientFileWriter<W: Write> {
    inner: W,
    m: usize,
    count: usize,
    written: usize,
}

impl GradientFileWriter<BufWriter<File>> {
    pub fn create(path: &Path, m: usize, count: usize) -> Result<Self, CodecError> {
        Self::new(BufWriter::new(File::create(path)?), m, count)
    }
}

impl<W: Write> GradientFileWriter<W> {
    pub fn new(mut inner: W, m: usize, count: usize) -> Result<Self, CodecError> {
        let m32 = u32::try_from(m).map_err(|_| CodecError::Format {
            offset: 9,
            message: format!("m = {m} exceeds u32"),
        })?;
        let c32 = u32::try_from(count).map_err(|_| CodecError::Format {
            offset: 13,
            message: format!("count = {count} exceeds u32"),
        })?;
        inner.write_all(GRADIENT_MAGIC)?;
        inner.write_all(&[GRADIENT_VERSION])?;
        inner.write_all(&m32.to_le_bytes())?;
        inner.write_all(&c32.to_le_bytes())?;
        Ok(GradientFileWriter {
            inner,
            m,
            count,
            written: 0,
        })
    }

    pub fn write_record(&mut self, g: &[f32]) -> Result<(), CodecError> {
        if g.len() != self.m {
            return Err(CodecError::RecordLength {
                expected: self.m,
                got: g.len(),
            });
        }
        if self.written == self.count {
            return Err(CodecError::Format {
                offset: GRADIENT_HEADER_BYTES + (self.count * self.m * 4) as u64,
                message: format!("more than the declared {} records", self.count),
            });
        }
        for x in g {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, CodecError> {
        if self.written != self.count {
            return Err(CodecError::Format {
                offset: GRADIENT_HEADER_BYTES + (self.written * self.m * 4) as u64,
                message: format!("wrote {} of {} declared records", self.written, self.count),
            });
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader: holds one record at a time.
pub struct GradientFileReader<R: Read> {
    inner: R,
    m: usize,
    count: usize,
    read: usize,
    offset: u64,
    buf: Vec<u8>,
}

impl GradientFileReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, CodecError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> GradientFileReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CodecError> {
        let mut header = [0u8; GRADIENT_HEADER_BYTES as usize];
        let got = read_fully(&mut inner, &mut header)?;
        if got < 8 || &header[..8] != GRADIENT_MAGIC {
            return Err(CodecError::Format {
                offset: 0,
                message: "missing FLDPGRAD magic".into(),
            });
        }
        if got < header.len() {
            return Err(CodecError::Format {
                offset: got as u64,
                message: "truncated header".into(),
            });
        }
        if header[8] != GRADIENT_VERSION {
            return Err(CodecError::Format {
                offset: 8,
                message: format!("unsupported version {}", header[8]),
            });
        }
        let m = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(header[13..17].try_into().unwrap()) as usize;
        Ok(GradientFileReader {
            inner,
            m,
            count,
            read: 0,
            offset: GRADIENT_HEADER_BYTES,
            buf: vec![0; 4 * m],
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn record_count(&self) -> usize {
        self.count
    }

    pub fn remaining(&self) -> usize {
        self.count - self.read
    }

    /// Reads the next record into `out` (resized to `m`); `Ok(false)` once
    /// all declared records are consumed.
    pub fn read_into(&mut self, out: &mut Vec<f32>) -> Result<bool, CodecError> {
        if self.read == self.count {
            return Ok(false);
        }
        let got = read_fully(&mut self.inner, &mut self.buf)?;
        if got < self.buf.len() {
            return Err(CodecError::Format {
                offset: self.offset + got as u64,
                message: format!("truncated record {} of {}", self.read + 1, self.count),
            });
        }
        out.clear();
        out.extend(
            self.buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        self.offset += self.buf.len() as u64;
        self.read += 1;
        Ok(true)
    }
}

impl<R: Read> Iterator for GradientFileReader<R> {
    type Item = Result<Vec<f32>, CodecError>;
    fn next(&mut self) -> Option<Self::Item> {
        let mut out = Vec::with_capacity(self.m);
        match self.read_into(&mut out) {
            Ok(true) => Some(Ok(out)),
            Ok(false) => None,
            Err(e) => {
                self.read = self.count;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, proptest, ProptestConfig};
    use proptest::{prop_assert, prop_assert_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn field() -> PrimeFieldCtx {
        PrimeFieldCtx::new(31_352_833).unwrap()
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&[3.0, 4.0], 5.0).unwrap(), vec![3.0, 4.0]);
        assert_eq!(clip(&[6.0, 8.0], 5.0).unwrap(), vec![3.0, 4.0]);
        assert!(clip(&[1.0], 0.0).is_err());
        assert_eq!(clip(&[], 1.0).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn encode_examples() {
        let f = field();
        let e = encode(
            &[0.0, 0.1234, -3.2768, 3.2767, -0.00005, 10.0, f64::NAN],
            &f,
        )
        .unwrap();
        assert_eq!(
            e.elements,
            vec![32768, 34002, 0, 65535, 32767, 65535, 32768]
        );
        assert_eq!(e.clamped, 2);
        assert!(encode(&[0.0], &PrimeFieldCtx::new(65_537).unwrap()).is_ok());
        assert!(encode(&[0.0], &PrimeFieldCtx::new(65_521).unwrap()).is_err());
    }

    #[test]
    fn decode_single_and_offset_only() {
        let f = field();
        let cfg = CodecConfig::default();
        let g = [0.1234, -2.5, 3.2767, -3.2768, 0.00004];
        let back = decode_sum(&encode(&g, &f).unwrap().elements, 1, &cfg, &f).unwrap();
        for (a, b) in g.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5e-4 + 1e-12);
        }
        let zero = vec![(128 * OFFSET) as u64; 10];
        assert_eq!(decode_sum(&zero, 128, &cfg, &f).unwrap(), vec![0.0; 10]);
    }

    #[test]
    fn decode_sum_of_sixteen() {
        let f = field();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let m = 500;
        let mut acc = vec![0u64; m];
        let mut real = vec![0.0f64; m];
        for _ in 0..16 {
            let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.2768..3.2767)).collect();
            f.add_assign_vec(&mut acc, &encode(&g, &f).unwrap().elements);
            real.iter_mut().zip(&g).for_each(|(r, x)| *r += x);
        }
        let back = decode_sum(&acc, 16, &CodecConfig::default(), &f).unwrap();
        let worst = back
            .iter()
            .zip(&real)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 16.0 * 0.5e-4 + 1e-9, "{worst}");
    }

    #[test]
    fn decode_rejects_wrapped_sums_and_capacity() {
        let f = field();
        let cfg = CodecConfig::default();
        // one contribution far outside the 16-bit range
        let err = decode_sum(&[32768 + 200_000], 1, &cfg, &f).unwrap_err();
        assert!(matches!(err, CodecError::OverflowSuspect { index: 0, .. }));
        assert!(decode_sum(&[0], 478, &cfg, &f).is_ok());
        assert!(matches!(
            decode_sum(&[0], 479, &cfg, &f),
            Err(CodecError::Capacity { .. })
        ));
    }

    #[test]
    fn flatten_examples() {
        let t = vec![Tensor::vector(vec![1.0, 2.0]), Tensor::vector(vec![3.0])];
        let (flat, manifest) = flatten(&t);
        assert_eq!(flat, vec![1.0, 2.0, 3.0]);
        assert_eq!(manifest, ShapeManifest(vec![vec![2], vec![1]]));
        assert_eq!(unflatten(&flat, &manifest).unwrap(), t);
        assert_eq!(flatten(&[]), (vec![], ShapeManifest::default()));
        assert!(matches!(
            unflatten(&flat[..2], &manifest),
            Err(CodecError::Manifest {
                expected: 3,
                got: 2
            })
        ));
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        let m = ShapeManifest(vec![vec![3, 4], vec![], vec![7]]);
        assert_eq!(ShapeManifest::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn gradient_file_in_memory_roundtrip_and_truncation() {
        let mut w = GradientFileWriter::new(Vec::new(), 3, 2).unwrap();
        w.write_record(&[1.0, -2.5, 0.125]).unwrap();
        assert!(w.write_record(&[1.0]).is_err());
        w.write_record(&[0.0, f32::MIN_POSITIVE, 7.0]).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(bytes.len(), 17 + 24);
        let records: Vec<Vec<f32>> = GradientFileReader::new(&bytes[..])
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(
            records,
            vec![vec![1.0, -2.5, 0.125], vec![0.0, f32::MIN_POSITIVE, 7.0]]
        );

        let mut r = GradientFileReader::new(&bytes[..bytes.len() - 5]).unwrap();
        assert!(r.next().unwrap().is_ok());
        match r.next().unwrap() {
            Err(CodecError::Format { offset, .. }) => assert_eq!(offset, 17 + 12 + 7),
            other => panic!("{other:?}"),
        }
        assert!(r.next().is_none());
        assert!(matches!(
            GradientFileReader::new(&b"NOTGRAD!xxxxxxxxx"[..]),
            Err(CodecError::Format { offset: 0, .. })
        ));
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(matches!(
            GradientFileReader::new(&bad_version[..]),
            Err(CodecError::Format { offset: 8, .. })
        ));
        assert!(GradientFileWriter::new(Vec::new(), 1, 1)
            .unwrap()
            .finish()
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn clip_bounds_norm(g in prop::collection::vec(-1e3f64..1e3, 0..50), c in 1e-3f64..100.0) {
            let out = clip(&g, c).unwrap();
            prop_assert!(out.iter().map(|x| x * x).sum::<f64>().sqrt() <= c + 1e-12);
        }

        #[test]
        fn pairwise_homomorphism(a in -3.2768f64..3.2767, b in -3.2768f64..3.2767) {
            let f = field();
            let ea = encode(&[a], &f).unwrap().elements[0];
            let eb = encode(&[b], &f).unwrap().elements[0];
            let sum = decode_sum(&[f.add(ea, eb)], 2, &CodecConfig::default(), &f).unwrap()[0];
            prop_assert!((sum - (a + b)).abs() <= 2.0 * 0.5e-4 + 1e-12);
        }

        #[test]
        fn encoding_is_monotone(a in -3.2768f64..3.2767, b in -3.2768f64..3.2767) {
            let f = field();
            let e = encode(&[a, b], &f).unwrap().elements;
            if a < b { prop_assert!(e[0] <= e[1]); }
            if (a - b).abs() > 1e-4 { prop_assert_eq!(a < b, e[0] < e[1]); }
        }

        #[test]
        fn unflatten_inverts_flatten(shapes in prop::collection::vec(prop::collection::vec(0usize..4, 0..3), 0..6)) {
            let mut rng = ChaCha20Rng::seed_from_u64(shapes.len() as u64);
            let tensors: Vec<Tensor> = shapes
                .into_iter()
                .map(|s| {
                    let n = s.iter().product();
                    Tensor::new(s, (0..n).map(|_| rng.gen()).collect()).unwrap()
                })
                .collect();
            let (flat, manifest) = flatten(&tensors);
            prop_assert_eq!(unflatten(&flat, &manifest).unwrap(), tensors);
        }
    }
}
