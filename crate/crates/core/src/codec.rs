//! Binary sketch format, version 1.
//!
//! All multi-byte integers and floats are little-endian.
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `RQSK`                            |
//! | 4      | 1    | version `0x01`                          |
//! | 5      | 1    | mode (0 streaming, 1 mergeable, 2 highconf) |
//! | 6      | 1    | item type (0 = `f64`)                   |
//! | 7      | 1    | coin generator id                       |
//! | 8      | 8    | seed                                    |
//! | 16     | 8    | ε                                       |
//! | 24     | 8    | δ                                       |
//! | 32     | 8    | k̂ (0 outside mergeable mode)           |
//! | 40     | 8    | N                                       |
//! | 48     | 8    | n                                       |
//! | 56     | 4    | k                                       |
//! | 60     | 4    | B                                       |
//! | 64     | 2    | H                                       |
//! | 66     | 8    | coins consumed                          |
//! | 74     | …    | levels `0..=H`: σ (8), count (4), count × item (8), items ascending |

use thiserror::Error;

use crate::compactor::CompactorState;
use crate::order::F64Order;
use crate::params::{Mode, Params};
use crate::rng::{Coins, RNG_CHACHA8};
use crate::sketch::Sketch;

pub const MAGIC: [u8; 4] = *b"RQSK";
pub const VERSION: u8 = 1;
pub const ITEM_F64: u8 = 0;
pub const HEADER_LEN: usize = 74;
/// Decoder limit on `H`.
pub const MAX_HEIGHT: u16 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown mode {0}")]
    UnknownMode(u8),
    #[error("unsupported item type {0}")]
    UnsupportedItemType(u8),
    #[error("unknown coin generator {0}")]
    UnknownRng(u8),
    #[error("truncated input")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid level: {0}")]
    InvalidLevel(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decode error at byte {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

pub fn serialize(sketch: &Sketch) -> Vec<u8> {
    let p = sketch.params();
    let mut out = Vec::with_capacity(HEADER_LEN + sketch.levels().len() * 12 + sketch.stored_items() * 8);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(p.mode().code());
    out.push(ITEM_F64);
    out.push(RNG_CHACHA8);
    out.extend_from_slice(&sketch.seed().to_le_bytes());
    out.extend_from_slice(&p.eps().to_le_bytes());
    out.extend_from_slice(&p.delta().to_le_bytes());
    out.extend_from_slice(&p.k_hat().unwrap_or(0.0).to_le_bytes());
    out.extend_from_slice(&p.bound().to_le_bytes());
    out.extend_from_slice(&sketch.n().to_le_bytes());
    out.extend_from_slice(&(p.k() as u32).to_le_bytes());
    out.extend_from_slice(&(p.b() as u32).to_le_bytes());
    out.extend_from_slice(&(sketch.height() as u16).to_le_bytes());
    out.extend_from_slice(&sketch.coins_consumed().to_le_bytes());
    for level in sketch.levels() {
        out.extend_from_slice(&level.sigma().to_le_bytes());
        out.extend_from_slice(&(level.len() as u32).to_le_bytes());
        for x in level.sorted_items(&F64Order) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError { offset: self.pos, kind }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.buf.len()).ok_or_else(|| self.err(DecodeErrorKind::Truncated))?;
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Sketch, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take::<4>()? != MAGIC {
        return Err(DecodeError { offset: 0, kind: DecodeErrorKind::BadMagic });
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(DecodeError { offset: 4, kind: DecodeErrorKind::UnsupportedVersion(version) });
    }
    let mode_code = r.u8()?;
    let mode = Mode::from_code(mode_code).ok_or(DecodeError { offset: 5, kind: DecodeErrorKind::UnknownMode(mode_code) })?;
    let item_type = r.u8()?;
    if item_type != ITEM_F64 {
        return Err(DecodeError { offset: 6, kind: DecodeErrorKind::UnsupportedItemType(item_type) });
    }
    let rng_id = r.u8()?;
    if rng_id != RNG_CHACHA8 {
        return Err(DecodeError { offset: 7, kind: DecodeErrorKind::UnknownRng(rng_id) });
    }
    let seed = r.u64()?;
    let eps = r.f64()?;
    let delta = r.f64()?;
    let k_hat = r.f64()?;
    let bound = r.u64()?;
    let n = r.u64()?;
    let k = r.u32()?;
    let b = r.u32()?;
    let height = r.u16()?;
    let consumed = r.u64()?;

    let params = Params::from_parts(mode, eps, delta, k_hat, bound, k, b)
        .map_err(|e| DecodeError { offset: 16, kind: DecodeErrorKind::InvalidParams(e.to_string()) })?;
    if n > params.bound() {
        return Err(DecodeError { offset: 48, kind: DecodeErrorKind::InvalidParams(format!("n = {n} exceeds N = {bound}")) });
    }
    if height > MAX_HEIGHT {
        return Err(DecodeError { offset: 64, kind: DecodeErrorKind::InvalidParams(format!("H = {height} exceeds {MAX_HEIGHT}")) });
    }

    let mut levels = Vec::with_capacity(usize::from(height) + 1);
    for h in 0..=usize::from(height) {
        let level_start = r.pos;
        let sigma = r.u64()?;
        if sigma > params.sigma_limit() {
            return Err(DecodeError {
                offset: level_start,
                kind: DecodeErrorKind::InvalidLevel(format!("level {h}: sigma {sigma} > N/k = {}", params.sigma_limit())),
            });
        }
        let count_at = r.pos;
        let count = r.u32()? as usize;
        if count > params.b() {
            return Err(DecodeError {
                offset: count_at,
                kind: DecodeErrorKind::InvalidLevel(format!("level {h}: {count} items exceed B = {}", params.b())),
            });
        }
        if count.saturating_mul(8) > r.remaining() {
            return Err(r.err(DecodeErrorKind::Truncated));
        }
        let mut items = Vec::with_capacity(count);
        for _ in 0..count {
            let at = r.pos;
            let x = r.f64()?;
            if x.is_nan() {
                return Err(DecodeError { offset: at, kind: DecodeErrorKind::InvalidLevel(format!("level {h}: NaN item")) });
            }
            if items.last().is_some_and(|prev: &f64| prev.total_cmp(&x).is_gt()) {
                return Err(DecodeError { offset: at, kind: DecodeErrorKind::InvalidLevel(format!("level {h}: items not sorted")) });
            }
            items.push(x);
        }
        levels.push(CompactorState::from_sorted(h, sigma, items));
    }
    if r.remaining() != 0 {
        return Err(r.err(DecodeErrorKind::TrailingBytes(r.remaining())));
    }

    let sketch = Sketch::from_raw_parts(params, levels, n, Coins::restore(seed, consumed), F64Order);
    sketch
        .check_invariants()
        .map_err(|e| DecodeError { offset: HEADER_LEN, kind: DecodeErrorKind::Invariant(e.to_string()) })?;
    Ok(sketch)
}
