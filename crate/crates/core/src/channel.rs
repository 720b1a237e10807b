//! Bit-level transport: frame layout, binary symmetric channel and the
//! QPSK BER/SNR mapping.
//!
//! Frame bytes (big-endian):
//!
//! ```text
//! 0      version (1)
//! 1      split index
//! 2      bits per element q
//! 3..5   mask id
//! 5..9   payload bit length
//! 9..    payload, element-major, MSB first, zero-padded to a byte
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::quantizer::{BitWord, MAX_BITS};
use crate::{Error, Result};

pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub split: u8,
    pub bits: u8,
    pub mask_id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFrame {
    pub version: u8,
    pub meta: FrameMeta,
    pub payload_bit_len: u32,
    pub payload: Vec<u8>,
}

impl BitFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.version);
        out.push(self.meta.split);
        out.push(self.meta.bits);
        out.extend_from_slice(&self.meta.mask_id.to_be_bytes());
        out.extend_from_slice(&self.payload_bit_len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Frame(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let version = bytes[0];
        if version != FRAME_VERSION {
            return Err(Error::Frame(format!("unknown version {version:#04x}")));
        }
        let meta = FrameMeta {
            split: bytes[1],
            bits: bytes[2],
            mask_id: u16::from_be_bytes([bytes[3], bytes[4]]),
        };
        let payload_bit_len = u32::from_be_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]);
        let frame = Self { version, meta, payload_bit_len, payload: bytes[HEADER_LEN..].to_vec() };
        frame.check()?;
        Ok(frame)
    }

    fn check(&self) -> Result<()> {
        if self.version != FRAME_VERSION {
            return Err(Error::Frame(format!("unknown version {:#04x}", self.version)));
        }
        let need = (self.payload_bit_len as usize).div_ceil(8);
        if self.payload.len() < need {
            return Err(Error::Frame(format!(
                "truncated payload: {} bytes for {} bits",
                self.payload.len(),
                self.payload_bit_len
            )));
        }
        if self.payload.len() > need {
            return Err(Error::Frame(format!(
                "payload of {} bytes does not match declared {} bits",
                self.payload.len(),
                self.payload_bit_len
            )));
        }
        if self.payload_bit_len > 0 {
            let q = self.meta.bits as u32;
            if q == 0 || q > MAX_BITS as u32 || self.payload_bit_len % q != 0 {
                return Err(Error::Frame(format!(
                    "payload of {} bits is not a whole number of {q}-bit words",
                    self.payload_bit_len
                )));
            }
        }
        Ok(())
    }
}

/// Lays the words out element-major, MSB first. `budget` is the bandwidth
/// limit in bits, if one is enforced.
pub fn pack(words: &[BitWord], meta: FrameMeta, budget: Option<u64>) -> Result<BitFrame> {
    if meta.bits == 0 || meta.bits > MAX_BITS {
        return Err(Error::Frame(format!("q = {} outside 1..={MAX_BITS}", meta.bits)));
    }
    if let Some(w) = words.iter().find(|w| w.len() != meta.bits) {
        return Err(Error::Frame(format!("word {w} is not {} bits", meta.bits)));
    }
    let bits = words.len() as u64 * meta.bits as u64;
    if let Some(budget) = budget {
        if bits > budget {
            return Err(Error::Bandwidth { bits, budget });
        }
    }
    let bit_len = u32::try_from(bits).map_err(|_| Error::Frame(format!("{bits} bits overflow the length field")))?;
    let mut payload = vec![0u8; (bits as usize).div_ceil(8)];
    let mut pos = 0usize;
    for w in words {
        for b in w.bits() {
            if b {
                payload[pos / 8] |= 0x80 >> (pos % 8);
            }
            pos += 1;
        }
    }
    Ok(BitFrame { version: FRAME_VERSION, meta, payload_bit_len: bit_len, payload })
}

pub fn unpack(frame: &BitFrame) -> Result<Vec<BitWord>> {
    frame.check()?;
    if frame.payload_bit_len == 0 {
        return Ok(Vec::new());
    }
    let q = frame.meta.bits;
    let n = frame.payload_bit_len as usize / q as usize;
    let mut words = Vec::with_capacity(n);
    let mut pos = 0usize;
    for _ in 0..n {
        let mut v = 0u8;
        for _ in 0..q {
            let bit = (frame.payload[pos / 8] >> (7 - pos % 8)) & 1;
            v = (v << 1) | bit;
            pos += 1;
        }
        words.push(BitWord::new(v, q)?);
    }
    Ok(words)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub ber: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(ber: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&ber) {
            return Err(Error::InvalidParam(format!("ber {ber} outside [0, 0.5]")));
        }
        Ok(Self { ber, seed })
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based uniform in [0, 1): the `i`-th draw of stream
/// `(seed, frame_index)` is `mix(key + (i+1)·φ)` with
/// `key = mix(seed + frame_index·φ)`, keeping the top 53 bits.
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, frame_index: u64) -> Self {
        Self { key: splitmix64(seed.wrapping_add(frame_index.wrapping_mul(GOLDEN))) }
    }

    pub fn uniform(&self, i: u64) -> f64 {
        let r = splitmix64(self.key.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN)));
        (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Independent generator for per-frame analog noise, keyed like
/// [`CounterRng`].
pub fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(frame_index.wrapping_mul(GOLDEN))))
}

/// Flips each payload bit with probability `ch.ber`. The header travels
/// out-of-band and is never corrupted.
pub fn bsc_transmit(frame: &BitFrame, ch: &ChannelSpec, frame_index: u64) -> BitFrame {
    let mut out = frame.clone();
    if ch.ber > 0.0 {
        let rng = CounterRng::new(ch.seed, frame_index);
        for i in 0..frame.payload_bit_len as usize {
            if rng.uniform(i as u64) < ch.ber {
                out.payload[i / 8] ^= 0x80 >> (i % 8);
            }
        }
    }
    out
}

/// Number of payload bits that differ between two frames.
pub fn bit_errors(a: &BitFrame, b: &BitFrame) -> u64 {
    a.payload.iter().zip(&b.payload).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn q_inverse(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// SNR in dB at which uncoded QPSK over AWGN has per-bit error `ber`.
pub fn ber_to_snr_db(ber: f64) -> Result<f64> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(Error::InvalidParam(format!("ber {ber} outside (0, 0.5)")));
    }
    let x = q_inverse(ber);
    Ok(10.0 * (x * x / 2.0).log10())
}

pub fn snr_db_to_ber(snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidParam(format!("snr {snr_db} dB is not finite")));
    }
    let lin = 10f64.powf(snr_db / 10.0);
    Ok(q_function((2.0 * lin).sqrt()))
}

/// Adds white Gaussian noise at `snr_db` relative to the mean power of `x`.
/// Used for the analog baselines that skip the bit channel.
pub fn awgn<R: Rng>(x: &mut [f64], snr_db: f64, rng: &mut R) -> Result<()> {
    if x.is_empty() {
        return Ok(());
    }
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParam(e.to_string()))?;
    for v in x {
        *v += normal.sample(rng);
    }
    Ok(())
}
