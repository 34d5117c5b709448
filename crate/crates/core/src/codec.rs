//! Conditional arithmetic coding of `x_U` given `x_boundary`.
//!
//! Sites are coded in ascending node order with the exact tree-model
//! conditionals `p(x_k | x_<k, x_boundary)`. The coder is a 32-bit
//! low/high integer coder emitting single bits; straddling intervals are
//! resolved by counting pending opposite bits, which settle once the
//! carry is known. Probabilities are quantized to 30 bits and floored
//! at 1, identically on both sides.
//!
//! File layout: magic `MCDLAC1`, model digest (u64 LE), geometry digest
//! (u64 LE), bit count (u32 LE), payload bytes (MSB first).

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{SubsetGeometry, Tractability};
use crate::inference::fold_boundary;
use crate::model::{check_assignment, check_boundary, PairwiseModel, Spin};

pub const MAGIC: &[u8; 7] = b"MCDLAC1";
const HEADER_LEN: usize = 7 + 8 + 8 + 4;

const PROB_BITS: u32 = 30;
const PROB_ONE: u64 = 1 << PROB_BITS;
const TOP: u64 = (1 << 32) - 1;
const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;
const THREE_QUARTERS: u64 = HALF + QUARTER;

/// Quantized probability of +1 in `[1, 2^30 - 1]`.
pub fn quantize(p_plus: f64) -> u64 {
    let q = (p_plus * PROB_ONE as f64).round();
    if q.is_nan() {
        return PROB_ONE / 2;
    }
    (q as u64).clamp(1, PROB_ONE - 1)
}

#[derive(Debug, Default)]
struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().expect("byte allocated");
            *last |= 0x80 >> (self.bits % 8);
        }
        self.bits += 1;
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bits: u64,
    pos: u64,
}

impl BitReader<'_> {
    /// Bits past the end read as zero.
    fn next(&mut self) -> u64 {
        let bit = if self.pos < self.bits {
            let byte = self.bytes[(self.pos / 8) as usize];
            u64::from(byte >> (7 - self.pos % 8) & 1)
        } else {
            0
        };
        self.pos += 1;
        bit
    }
}

#[inline]
fn split_point(low: u64, high: u64, q_plus: u64) -> u64 {
    let range = high - low + 1;
    low + ((range * (PROB_ONE - q_plus)) >> PROB_BITS) - 1
}

struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl Encoder {
    fn new() -> Self {
        Encoder {
            low: 0,
            high: TOP,
            pending: 0,
            out: BitWriter::default(),
        }
    }

    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    fn encode(&mut self, plus: bool, q_plus: u64) {
        // -1 takes the lower part of the interval, +1 the upper.
        let split = split_point(self.low, self.high, q_plus);
        if plus {
            self.low = split + 1;
        } else {
            self.high = split;
        }
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    fn finish(mut self) -> BitWriter {
        // Two bits pick a quarter lying inside [low, high]; any tail decodes.
        self.pending += 1;
        let bit = self.low >= QUARTER;
        self.emit(bit);
        self.out
    }
}

struct Decoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    input: BitReader<'a>,
}

impl<'a> Decoder<'a> {
    fn new(payload: &'a [u8], bits: u64) -> Self {
        let mut input = BitReader {
            bytes: payload,
            bits,
            pos: 0,
        };
        let value = (0..32).fold(0u64, |v, _| (v << 1) | input.next());
        Decoder {
            low: 0,
            high: TOP,
            value,
            input,
        }
    }

    fn decode(&mut self, q_plus: u64) -> bool {
        let split = split_point(self.low, self.high, q_plus);
        let plus = self.value > split;
        if plus {
            self.low = split + 1;
        } else {
            self.high = split;
        }
        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.input.next();
        }
        plus
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub model_digest: u64,
    pub geometry_digest: u64,
    pub bit_len: u32,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.model_digest.to_le_bytes());
        out.extend_from_slice(&self.geometry_digest.to_le_bytes());
        out.extend_from_slice(&self.bit_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Bitstream(format!(
                "truncated header: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[..7] != MAGIC {
            return Err(Error::Bitstream("bad magic".into()));
        }
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        let bit_len = u32::from_le_bytes(bytes[23..27].try_into().expect("4 bytes"));
        let payload = bytes[HEADER_LEN..].to_vec();
        let needed = (bit_len as usize).div_ceil(8);
        if payload.len() < needed {
            return Err(Error::Bitstream(format!(
                "truncated payload: {} of {needed} bytes",
                payload.len()
            )));
        }
        Ok(Bitstream {
            model_digest: u64_at(7),
            geometry_digest: u64_at(15),
            bit_len,
            payload,
        })
    }
}

fn digest(parts: impl FnOnce(&mut Sha256)) -> u64 {
    let mut hasher = Sha256::new();
    parts(&mut hasher);
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Hash of the parameters the conditional distribution depends on.
pub fn model_digest(model: &PairwiseModel, geometry: &SubsetGeometry) -> u64 {
    let full = model.full_params();
    digest(|h| {
        h.update(b"mcdl-model-v1");
        for c in geometry.components() {
            let k = c.full_index(model.graph());
            h.update((k as u64).to_le_bytes());
            h.update(full[k].to_bits().to_le_bytes());
        }
    })
}

/// Hash of the subset, its boundary and the boundary values.
pub fn geometry_digest(geometry: &SubsetGeometry, boundary_values: &[Spin]) -> u64 {
    digest(|h| {
        h.update(b"mcdl-geometry-v1");
        for list in [geometry.subset(), geometry.boundary()] {
            h.update((list.len() as u64).to_le_bytes());
            for &n in list {
                h.update((n as u64).to_le_bytes());
            }
        }
        h.update(
            boundary_values
                .iter()
                .map(|&s| s as u8)
                .collect::<Vec<u8>>(),
        );
    })
}

fn require_tree(geometry: &SubsetGeometry) -> Result<()> {
    if geometry.tractability() == Tractability::Tree {
        Ok(())
    } else {
        Err(Error::NotATree)
    }
}

pub fn encode_conditional(
    model: &PairwiseModel,
    geometry: &SubsetGeometry,
    subset_values: &[Spin],
    boundary_values: &[Spin],
) -> Result<Bitstream> {
    require_tree(geometry)?;
    check_assignment(geometry, subset_values, boundary_values)?;
    let cond = fold_boundary(model, geometry, boundary_values)?;
    let mut clamp = vec![None; subset_values.len()];
    let mut enc = Encoder::new();
    for (k, &s) in subset_values.iter().enumerate() {
        let dist = cond.site_distribution(&mut clamp, k)?;
        enc.encode(s > 0, quantize(dist.plus()));
        clamp[k] = Some(s);
    }
    let out = enc.finish();
    let bit_len = u32::try_from(out.bits).map_err(|_| {
        Error::Bitstream(format!("{} bits exceed the 32-bit length field", out.bits))
    })?;
    Ok(Bitstream {
        model_digest: model_digest(model, geometry),
        geometry_digest: geometry_digest(geometry, boundary_values),
        bit_len,
        payload: out.bytes,
    })
}

pub fn decode_conditional(
    model: &PairwiseModel,
    geometry: &SubsetGeometry,
    boundary_values: &[Spin],
    stream: &Bitstream,
) -> Result<Vec<Spin>> {
    require_tree(geometry)?;
    check_boundary(geometry, boundary_values)?;
    let expected = geometry_digest(geometry, boundary_values);
    if stream.geometry_digest != expected {
        return Err(Error::DigestMismatch {
            which: "geometry",
            stream: stream.geometry_digest,
            expected,
        });
    }
    let expected = model_digest(model, geometry);
    if stream.model_digest != expected {
        return Err(Error::DigestMismatch {
            which: "model",
            stream: stream.model_digest,
            expected,
        });
    }
    if stream.payload.len() < (stream.bit_len as usize).div_ceil(8) {
        return Err(Error::Bitstream("truncated payload".into()));
    }
    let cond = fold_boundary(model, geometry, boundary_values)?;
    let size = geometry.subset().len();
    let mut clamp = vec![None; size];
    let mut dec = Decoder::new(&stream.payload, u64::from(stream.bit_len));
    let mut out = Vec::with_capacity(size);
    for k in 0..size {
        let dist = cond.site_distribution(&mut clamp, k)?;
        let s: Spin = if dec.decode(quantize(dist.plus())) {
            1
        } else {
            -1
        };
        clamp[k] = Some(s);
        out.push(s);
    }
    Ok(out)
}

/// Information content `-log2 p(x_U | x_boundary)` in bits.
pub fn information_bits(
    model: &PairwiseModel,
    geometry: &SubsetGeometry,
    subset_values: &[Spin],
    boundary_values: &[Spin],
) -> Result<f64> {
    Ok(
        -crate::inference::conditional_log_prob(model, geometry, subset_values, boundary_values)?
            / std::f64::consts::LN_2,
    )
}
