//! Sketch parameters.
//!
//! Three parameterizations are supported:
//!
//! * [`Mode::StreamingKnownN`]: the stream length bound `n` is known up front.
//!   `k = 2·⌈(4/ε)·√(ln(1/δ) / log₂(εn))⌉`, `B = 2·k·⌈log₂(n/k)⌉`.
//! * [`Mode::Mergeable`]: no length bound is needed. The sketch keeps an
//!   accuracy constant `k̂ = ε⁻¹·√(ln(1/δ))` and a current bound `N` from the
//!   sequence `N₀ = ⌈2⁸·k̂⌉, N_{i+1} = N_i²`, with
//!   `k(N) = 2⁵·⌈k̂ / √(log₂(N/k̂))⌉` and `B(N) = 2·k(N)·⌈log₂(N/k(N)) + 1⌉`.
//! * [`Mode::HighConfidence`]: for tiny δ, `k = 2⁴·⌈ε⁻¹·log₂ ln(1/δ)⌉` with
//!   the streaming `B`. Its deterministic limit ([`Params::deterministic`])
//!   uses `log₂(εn)` in place of `log₂ ln(1/δ)` and holds for every coin
//!   sequence.
//!
//! All ceilings are taken on `f64` intermediates with a relative tolerance
//! of `1e-9`, so values that are mathematically integral do not round up
//! because of floating-point noise.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::compactor::Capacity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Mode {
    StreamingKnownN = 0,
    Mergeable = 1,
    HighConfidence = 2,
}

impl Mode {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mode::StreamingKnownN),
            1 => Some(Mode::Mergeable),
            2 => Some(Mode::HighConfidence),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::StreamingKnownN => "streaming",
            Mode::Mergeable => "mergeable",
            Mode::HighConfidence => "highconf",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "streaming" => Ok(Mode::StreamingKnownN),
            "mergeable" => Ok(Mode::Mergeable),
            "highconf" => Ok(Mode::HighConfidence),
            other => Err(format!("unknown mode '{other}' (expected mergeable, streaming or highconf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} = {value} is out of range: expected {expected}")]
    OutOfRange { field: &'static str, value: f64, expected: &'static str },
    #[error("operation requires {expected} mode, got {actual}")]
    WrongMode { expected: Mode, actual: Mode },
    #[error("derived {field} = {value} does not fit in 32 bits")]
    TooLarge { field: &'static str, value: f64 },
    #[error("inconsistent parameters: {0}")]
    Inconsistent(String),
}

const CEIL_TOL: f64 = 1e-9;

fn ceil_tol(x: f64) -> f64 {
    (x - CEIL_TOL * x.abs().max(1.0)).ceil()
}

fn check_eps(eps: f64) -> Result<(), ParamError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { field: "eps", value: eps, expected: "0 < eps <= 1" })
    }
}

fn check_delta(delta: f64) -> Result<(), ParamError> {
    if delta > 0.0 && delta <= 0.5 {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { field: "delta", value: delta, expected: "0 < delta <= 0.5" })
    }
}

fn check_n(eps: f64, n: u64) -> Result<(), ParamError> {
    if n >= 1 && eps * n as f64 >= 2.0 {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { field: "n", value: n as f64, expected: "eps * n >= 2" })
    }
}

fn to_u32(field: &'static str, value: f64) -> Result<u32, ParamError> {
    if value.is_finite() && value >= 0.0 && value <= f64::from(u32::MAX) {
        Ok(value as u32)
    } else {
        Err(ParamError::TooLarge { field, value })
    }
}

/// `B = 2·k·⌈log₂(n/k)⌉`, floored at `2k`.
fn streaming_capacity(k: u32, n: u64) -> Result<u32, ParamError> {
    let sections = ceil_tol((n as f64 / f64::from(k)).log2()).max(1.0);
    to_u32("B", 2.0 * f64::from(k) * sections)
}

fn mergeable_k(k_hat: f64, bound: u64) -> Result<u32, ParamError> {
    let lg = (bound as f64 / k_hat).log2();
    to_u32("k", 32.0 * ceil_tol(k_hat / lg.sqrt()))
}

fn mergeable_capacity(k: u32, bound: u64) -> Result<u32, ParamError> {
    let sections = ceil_tol((bound as f64 / f64::from(k)).log2() + 1.0);
    to_u32("B", 2.0 * f64::from(k) * sections)
}

/// Derived sketch parameters. Construct through the mode-specific
/// constructors; the fields are read-only afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    mode: Mode,
    eps: f64,
    delta: f64,
    k_hat: Option<f64>,
    bound: u64,
    k: u32,
    b: u32,
}

impl Params {
    /// Known stream length `n`.
    pub fn streaming(eps: f64, delta: f64, n: u64) -> Result<Self, ParamError> {
        check_eps(eps)?;
        check_delta(delta)?;
        check_n(eps, n)?;
        let lg = (eps * n as f64).log2();
        let raw = 2.0 * ceil_tol((4.0 / eps) * ((1.0 / delta).ln() / lg).sqrt());
        let k = to_u32("k", raw.max(4.0))?;
        let b = streaming_capacity(k, n)?;
        Ok(Self { mode: Mode::StreamingKnownN, eps, delta, k_hat: None, bound: n, k, b })
    }

    /// Unknown stream length; fully mergeable. Starts at `N = N₀`.
    pub fn mergeable(eps: f64, delta: f64) -> Result<Self, ParamError> {
        check_eps(eps)?;
        check_delta(delta)?;
        let k_hat = (1.0 / delta).ln().sqrt() / eps;
        let n0 = ceil_tol(256.0 * k_hat);
        if n0 >= u64::MAX as f64 {
            return Err(ParamError::TooLarge { field: "N0", value: n0 });
        }
        Self::mergeable_at(eps, delta, k_hat, n0 as u64)
    }

    fn mergeable_at(eps: f64, delta: f64, k_hat: f64, bound: u64) -> Result<Self, ParamError> {
        let k = mergeable_k(k_hat, bound)?;
        let b = mergeable_capacity(k, bound)?;
        Ok(Self { mode: Mode::Mergeable, eps, delta, k_hat: Some(k_hat), bound, k, b })
    }

    /// Small-δ parameterization with known stream length `n`.
    /// Requires `ln(1/δ) ≥ 2`.
    pub fn high_confidence(eps: f64, delta: f64, n: u64) -> Result<Self, ParamError> {
        check_eps(eps)?;
        check_delta(delta)?;
        if n == 0 {
            return Err(ParamError::OutOfRange { field: "n", value: 0.0, expected: "n >= 1" });
        }
        let ln_inv = (1.0 / delta).ln();
        if ln_inv < 2.0 - 1e-12 {
            return Err(ParamError::OutOfRange {
                field: "delta",
                value: delta,
                expected: "ln(1/delta) >= 2 in high-confidence mode",
            });
        }
        let k = to_u32("k", 16.0 * ceil_tol(ln_inv.log2() / eps))?;
        let b = streaming_capacity(k, n)?;
        Ok(Self { mode: Mode::HighConfidence, eps, delta, k_hat: None, bound: n, k, b })
    }

    /// Deterministic limit of the high-confidence setting: the error bound
    /// holds for every coin sequence. Recorded with `delta = 0`.
    pub fn deterministic(eps: f64, n: u64) -> Result<Self, ParamError> {
        check_eps(eps)?;
        check_n(eps, n)?;
        let k = to_u32("k", 16.0 * ceil_tol((eps * n as f64).log2() / eps))?;
        let b = streaming_capacity(k, n)?;
        Ok(Self { mode: Mode::HighConfidence, eps, delta: 0.0, k_hat: None, bound: n, k, b })
    }

    /// Hand-picked section size and capacity for a stream of at most
    /// `bound` items. No accuracy guarantee is attached; ε and δ are
    /// recorded as 1 and 0.5.
    pub fn explicit(k: u32, b: u32, bound: u64) -> Result<Self, ParamError> {
        let p = Self { mode: Mode::StreamingKnownN, eps: 1.0, delta: 0.5, k_hat: None, bound, k, b };
        p.check_shape()?;
        Ok(p)
    }

    /// Dispatches on `mode`. `n` is required by the known-length modes and
    /// ignored by [`Mode::Mergeable`].
    pub fn derive(mode: Mode, eps: f64, delta: f64, n: Option<u64>) -> Result<Self, ParamError> {
        let need_n = || {
            n.ok_or(ParamError::OutOfRange { field: "n", value: 0.0, expected: "a stream length bound for this mode" })
        };
        match mode {
            Mode::StreamingKnownN => Self::streaming(eps, delta, need_n()?),
            Mode::Mergeable => Self::mergeable(eps, delta),
            Mode::HighConfidence => Self::high_confidence(eps, delta, need_n()?),
        }
    }

    /// Next parameters of a mergeable sketch: `N ← N²` (saturating at
    /// `u64::MAX`), with `k` and `B` recomputed.
    pub fn grow(&self) -> Result<Self, ParamError> {
        let k_hat = match (self.mode, self.k_hat) {
            (Mode::Mergeable, Some(k_hat)) => k_hat,
            _ => return Err(ParamError::WrongMode { expected: Mode::Mergeable, actual: self.mode }),
        };
        Self::mergeable_at(self.eps, self.delta, k_hat, self.bound.saturating_mul(self.bound))
    }

    /// Rebuilds parameters read back from storage and checks them.
    pub fn from_parts(
        mode: Mode,
        eps: f64,
        delta: f64,
        k_hat: f64,
        bound: u64,
        k: u32,
        b: u32,
    ) -> Result<Self, ParamError> {
        match mode {
            Mode::Mergeable => {
                let mut p = Self::mergeable(eps, delta)?;
                if p.k_hat.map(f64::to_bits) != Some(k_hat.to_bits()) {
                    return Err(ParamError::Inconsistent(format!("k_hat {k_hat} does not match eps/delta")));
                }
                while p.bound < bound && p.bound != u64::MAX {
                    p = p.grow()?;
                }
                if p.bound != bound || p.k != k || p.b != b {
                    return Err(ParamError::Inconsistent(format!(
                        "(N, k, B) = ({bound}, {k}, {b}) is not on the growth sequence"
                    )));
                }
                Ok(p)
            }
            Mode::StreamingKnownN | Mode::HighConfidence => {
                check_eps(eps)?;
                let deterministic = mode == Mode::HighConfidence && delta == 0.0;
                if !deterministic {
                    check_delta(delta)?;
                }
                if k_hat != 0.0 {
                    return Err(ParamError::Inconsistent("k_hat must be 0 outside mergeable mode".into()));
                }
                let p = Self { mode, eps, delta, k_hat: None, bound, k, b };
                p.check_shape()?;
                Ok(p)
            }
        }
    }

    /// `k` even and at least 4, `B` a positive multiple of `2k`, and enough
    /// sections for a stream of `bound` items.
    fn check_shape(&self) -> Result<(), ParamError> {
        if self.k < 4 || !self.k.is_multiple_of(2) {
            return Err(ParamError::Inconsistent(format!("k = {} must be even and >= 4", self.k)));
        }
        if self.b == 0 || !self.b.is_multiple_of(2 * self.k) {
            return Err(ParamError::Inconsistent(format!("B = {} must be a positive multiple of 2k", self.b)));
        }
        if self.bound == 0 {
            return Err(ParamError::Inconsistent("N must be positive".into()));
        }
        let sections = self.sections() as u32;
        if sections < 64 && u128::from(self.bound) > u128::from(self.k) << sections {
            return Err(ParamError::Inconsistent(format!(
                "{} sections cannot schedule a stream of {} items",
                sections, self.bound
            )));
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Failure probability; `0` for the deterministic setting.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k_hat(&self) -> Option<f64> {
        self.k_hat
    }

    /// Current upper bound `N` on the stream length.
    pub fn bound(&self) -> u64 {
        self.bound
    }

    /// Section size.
    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// Buffer capacity.
    pub fn b(&self) -> usize {
        self.b as usize
    }

    pub fn capacity(&self) -> Capacity {
        Capacity { k: self.k(), b: self.b() }
    }

    /// Number of `k`-sized sections in the compactible half of a buffer.
    pub fn sections(&self) -> usize {
        self.b() / (2 * self.k())
    }

    /// Largest schedule state allowed by `σ ≤ N/k`.
    pub fn sigma_limit(&self) -> u64 {
        self.bound / u64::from(self.k)
    }
}

/// Tightens `(ε, δ)` so that the guarantee holds for all queries at once:
/// `ε' = ε/3`, `δ' = δ·ε / (3·max(1, log₂(εn)))`.
pub fn all_quantiles_adjust(eps: f64, delta: f64, n: u64) -> Result<(f64, f64), ParamError> {
    check_eps(eps)?;
    check_delta(delta)?;
    if n == 0 {
        return Err(ParamError::OutOfRange { field: "n", value: 0.0, expected: "n >= 1" });
    }
    let support = (eps * n as f64).log2().max(1.0);
    Ok((eps / 3.0, delta * eps / (3.0 * support)))
}

/// The accuracy analysis assumes `ε ≤ 4 / (2·log₂ n)^{1/4}`. Violating it is
/// harmless in practice; callers may warn.
pub fn eps_assumption_holds(eps: f64, n: u64) -> bool {
    let lg = (n.max(2) as f64).log2();
    eps <= 4.0 / (2.0 * lg).powf(0.25)
}
