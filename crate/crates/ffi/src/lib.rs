//! C ABI for `relq` sketches over `double` items.
//!
//! Sketches are opaque `RqSketch*` handles created by `rq_sketch_new` or
//! `rq_sketch_deserialize` and released with `rq_sketch_free`. Every other
//! function returns an `RqStatus`; results are written through out-pointers
//! only on `RQ_STATUS_OK`. Panics never cross the boundary.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use relq::codec::{deserialize, serialize};
use relq::{Error, Mode, Sketch};

/// Opaque sketch handle.
pub struct RqSketch {
    inner: Sketch,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// NaN item.
    InvalidItem = 3,
    /// More items than the declared stream length.
    BoundExceeded = 4,
    Empty = 5,
    OutOfRange = 6,
    /// The two sketches cannot be merged.
    Incompatible = 7,
    Decode = 8,
    Panic = 9,
}

pub const RQ_MODE_STREAMING: u8 = 0;
pub const RQ_MODE_MERGEABLE: u8 = 1;
pub const RQ_MODE_HIGH_CONFIDENCE: u8 = 2;

impl From<&Error> for RqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Param(_) => RqStatus::InvalidArgument,
            Error::InvalidItem => RqStatus::InvalidItem,
            Error::BoundExceeded { .. } => RqStatus::BoundExceeded,
            Error::EmptySketch => RqStatus::Empty,
            Error::RankOutOfRange { .. } => RqStatus::OutOfRange,
            Error::Merge(_) => RqStatus::Incompatible,
        }
    }
}

fn guard(f: impl FnOnce() -> RqStatus) -> RqStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(RqStatus::Panic)
}

fn boxed(sketch: Sketch) -> *mut RqSketch {
    Box::into_raw(Box::new(RqSketch { inner: sketch }))
}

/// Creates a sketch. `n` is the stream length for the streaming and
/// high-confidence modes and is ignored by the mergeable mode.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_new(
    mode: u8,
    eps: f64,
    delta: f64,
    n: u64,
    seed: u64,
    out: *mut *mut RqSketch,
) -> RqStatus {
    if out.is_null() {
        return RqStatus::NullPointer;
    }
    guard(|| {
        let Some(mode) = Mode::from_code(mode) else {
            return RqStatus::InvalidArgument;
        };
        let len = (mode != Mode::Mergeable).then_some(n);
        match Sketch::with_mode(mode, eps, delta, len, seed) {
            Ok(s) => {
                *out = boxed(s);
                RqStatus::Ok
            }
            Err(e) => RqStatus::from(&e),
        }
    })
}

/// # Safety
/// `sketch` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_free(sketch: *mut RqSketch) {
    if !sketch.is_null() {
        drop(Box::from_raw(sketch));
    }
}

/// # Safety
/// `sketch` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_update(sketch: *mut RqSketch, item: f64) -> RqStatus {
    let Some(s) = sketch.as_mut() else {
        return RqStatus::NullPointer;
    };
    guard(|| match s.inner.update(item) {
        Ok(()) => RqStatus::Ok,
        Err(e) => RqStatus::from(&e),
    })
}

/// Estimated number of items `<= y`.
///
/// # Safety
/// `sketch` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_rank(sketch: *const RqSketch, y: f64, out: *mut u64) -> RqStatus {
    let (Some(s), false) = (sketch.as_ref(), out.is_null()) else {
        return RqStatus::NullPointer;
    };
    if y.is_nan() {
        return RqStatus::InvalidItem;
    }
    guard(|| {
        *out = s.inner.rank(&y);
        RqStatus::Ok
    })
}

/// Smallest stored item whose estimated rank is at least `r`, for `1 <= r <= n`.
///
/// # Safety
/// `sketch` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_quantile(sketch: *const RqSketch, r: u64, out: *mut f64) -> RqStatus {
    let (Some(s), false) = (sketch.as_ref(), out.is_null()) else {
        return RqStatus::NullPointer;
    };
    guard(|| match s.inner.quantile(r) {
        Ok(x) => {
            *out = x;
            RqStatus::Ok
        }
        Err(e) => RqStatus::from(&e),
    })
}

/// # Safety
/// `sketch` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_n(sketch: *const RqSketch, out: *mut u64) -> RqStatus {
    let (Some(s), false) = (sketch.as_ref(), out.is_null()) else {
        return RqStatus::NullPointer;
    };
    *out = s.inner.n();
    RqStatus::Ok
}

/// # Safety
/// `sketch` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_stored_items(sketch: *const RqSketch, out: *mut u64) -> RqStatus {
    let (Some(s), false) = (sketch.as_ref(), out.is_null()) else {
        return RqStatus::NullPointer;
    };
    *out = s.inner.stored_items() as u64;
    RqStatus::Ok
}

/// Merges `source` into `target`. `source` is left unchanged; on error
/// `target` is unchanged too.
///
/// # Safety
/// Both must be live handles; they may not be the same handle.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_merge(target: *mut RqSketch, source: *const RqSketch) -> RqStatus {
    if target.is_null() || source.is_null() {
        return RqStatus::NullPointer;
    }
    if ptr::eq(target, source) {
        return RqStatus::InvalidArgument;
    }
    let (t, s) = (&mut *target, &*source);
    guard(|| match t.inner.clone().merge(s.inner.clone()) {
        Ok(m) => {
            t.inner = m;
            RqStatus::Ok
        }
        Err(e) => RqStatus::from(&Error::Merge(e)),
    })
}

/// Serializes into a new buffer released with `rq_bytes_free`.
///
/// # Safety
/// `sketch` must be a live handle; `data` and `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_serialize(sketch: *const RqSketch, data: *mut *mut u8, len: *mut usize) -> RqStatus {
    let (Some(s), false, false) = (sketch.as_ref(), data.is_null(), len.is_null()) else {
        return RqStatus::NullPointer;
    };
    guard(|| {
        let bytes = serialize(&s.inner).into_boxed_slice();
        *len = bytes.len();
        *data = Box::into_raw(bytes).cast::<u8>();
        RqStatus::Ok
    })
}

/// # Safety
/// `data` and `len` must come from one `rq_sketch_serialize` call, or
/// `data` must be null.
#[no_mangle]
pub unsafe extern "C" fn rq_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

/// # Safety
/// `data` must be readable for `len` bytes and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rq_sketch_deserialize(data: *const u8, len: usize, out: *mut *mut RqSketch) -> RqStatus {
    if out.is_null() || (data.is_null() && len > 0) {
        return RqStatus::NullPointer;
    }
    let bytes: &[u8] = if len == 0 { &[] } else { std::slice::from_raw_parts(data, len) };
    guard(|| match deserialize(bytes) {
        Ok(s) => {
            *out = boxed(s);
            RqStatus::Ok
        }
        Err(_) => RqStatus::Decode,
    })
}

/// Static, NUL-terminated description of a status code.
#[no_mangle]
pub extern "C" fn rq_status_message(status: RqStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        RqStatus::Ok => b"ok\0",
        RqStatus::NullPointer => b"null pointer argument\0",
        RqStatus::InvalidArgument => b"invalid argument\0",
        RqStatus::InvalidItem => b"item is NaN\0",
        RqStatus::BoundExceeded => b"stream longer than the declared length\0",
        RqStatus::Empty => b"sketch is empty\0",
        RqStatus::OutOfRange => b"rank out of range\0",
        RqStatus::Incompatible => b"sketches cannot be merged\0",
        RqStatus::Decode => b"malformed sketch bytes\0",
        RqStatus::Panic => b"internal error\0",
    };
    msg.as_ptr().cast()
}
