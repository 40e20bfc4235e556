//! C ABI over the PQClean signature implementations bundled by the pqcrypto
//! crates. One numeric id per scheme; every call is panic-proof so garbage
//! bytes from the Python side can never abort the process.
//!
//! Return codes: 0 ok / signature valid, 1 signature invalid (verify only),
//! -1 unknown scheme id, -2 malformed input (wrong key/signature length),
//! -3 internal error.

use pqcrypto_dilithium::dilithium2;
use pqcrypto_falcon::falcon512;
use pqcrypto_sphincsplus::sphincssha2128fsimple;
use pqcrypto_traits::sign::{DetachedSignature, PublicKey, SecretKey};
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const SCHEME_DILITHIUM2: u32 = 0;
pub const SCHEME_FALCON512: u32 = 1;
pub const SCHEME_SPHINCS_SHA2_128F: u32 = 2;

const OK: i32 = 0;
const INVALID: i32 = 1;
const ERR_UNKNOWN_SCHEME: i32 = -1;
const ERR_MALFORMED: i32 = -2;
const ERR_INTERNAL: i32 = -3;

/// Empty-length inputs may arrive with a dangling pointer; never hand that
/// to `from_raw_parts`.
unsafe fn slice_from<'a>(ptr: *const u8, len: usize) -> Option<&'a [u8]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

macro_rules! dispatch {
    ($scheme:expr, $mod:ident, $body:expr) => {
        match $scheme {
            SCHEME_DILITHIUM2 => {
                use dilithium2 as $mod;
                $body
            }
            SCHEME_FALCON512 => {
                use falcon512 as $mod;
                $body
            }
            SCHEME_SPHINCS_SHA2_128F => {
                use sphincssha2128fsimple as $mod;
                $body
            }
            _ => return ERR_UNKNOWN_SCHEME,
        }
    };
}

#[no_mangle]
pub extern "C" fn pqfl_lengths(
    scheme: u32,
    pk_len: *mut usize,
    sk_len: *mut usize,
    sig_len: *mut usize,
) -> i32 {
    if pk_len.is_null() || sk_len.is_null() || sig_len.is_null() {
        return ERR_MALFORMED;
    }
    dispatch!(scheme, s, {
        unsafe {
            *pk_len = s::public_key_bytes();
            *sk_len = s::secret_key_bytes();
            *sig_len = s::signature_bytes();
        }
        OK
    })
}

/// Writes a fresh keypair into caller buffers of exactly the lengths reported
/// by `pqfl_lengths`. Key generation uses the OS RNG; it is not seedable.
#[no_mangle]
pub extern "C" fn pqfl_keypair(scheme: u32, pk_out: *mut u8, sk_out: *mut u8) -> i32 {
    if pk_out.is_null() || sk_out.is_null() {
        return ERR_MALFORMED;
    }
    dispatch!(scheme, s, {
        let result = catch_unwind(|| s::keypair());
        match result {
            Ok((pk, sk)) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(pk.as_bytes().as_ptr(), pk_out, pk.as_bytes().len());
                    std::ptr::copy_nonoverlapping(sk.as_bytes().as_ptr(), sk_out, sk.as_bytes().len());
                }
                OK
            }
            Err(_) => ERR_INTERNAL,
        }
    })
}

/// Detached signature over `msg`. `sig_out` must hold `signature_bytes()`;
/// the actual length (schemes like falcon emit variable-size signatures) is
/// written to `sig_len`.
#[no_mangle]
pub extern "C" fn pqfl_sign(
    scheme: u32,
    msg: *const u8,
    msg_len: usize,
    sk: *const u8,
    sk_len: usize,
    sig_out: *mut u8,
    sig_len: *mut usize,
) -> i32 {
    if sig_out.is_null() || sig_len.is_null() {
        return ERR_MALFORMED;
    }
    dispatch!(scheme, s, {
        let msg = match unsafe { slice_from(msg, msg_len) } {
            Some(m) => m,
            None => return ERR_MALFORMED,
        };
        let sk_bytes = match unsafe { slice_from(sk, sk_len) } {
            Some(b) => b,
            None => return ERR_MALFORMED,
        };
        let secret = match s::SecretKey::from_bytes(sk_bytes) {
            Ok(k) => k,
            Err(_) => return ERR_MALFORMED,
        };
        let result = catch_unwind(AssertUnwindSafe(|| s::detached_sign(msg, &secret)));
        match result {
            Ok(sig) => {
                let bytes = sig.as_bytes();
                if bytes.len() > s::signature_bytes() {
                    return ERR_INTERNAL;
                }
                unsafe {
                    std::ptr::copy_nonoverlapping(bytes.as_ptr(), sig_out, bytes.len());
                    *sig_len = bytes.len();
                }
                OK
            }
            Err(_) => ERR_INTERNAL,
        }
    })
}

/// Returns 0 iff `sig` is a valid signature over `msg` under `pk`. Malformed
/// key or signature bytes yield INVALID or ERR_MALFORMED, never a crash.
#[no_mangle]
pub extern "C" fn pqfl_verify(
    scheme: u32,
    msg: *const u8,
    msg_len: usize,
    sig: *const u8,
    sig_len: usize,
    pk: *const u8,
    pk_len: usize,
) -> i32 {
    dispatch!(scheme, s, {
        let msg = match unsafe { slice_from(msg, msg_len) } {
            Some(m) => m,
            None => return ERR_MALFORMED,
        };
        let sig_bytes = match unsafe { slice_from(sig, sig_len) } {
            Some(b) => b,
            None => return ERR_MALFORMED,
        };
        let pk_bytes = match unsafe { slice_from(pk, pk_len) } {
            Some(b) => b,
            None => return ERR_MALFORMED,
        };
        let public = match s::PublicKey::from_bytes(pk_bytes) {
            Ok(k) => k,
            Err(_) => return INVALID,
        };
        let signature = match s::DetachedSignature::from_bytes(sig_bytes) {
            Ok(sg) => sg,
            Err(_) => return INVALID,
        };
        let result = catch_unwind(AssertUnwindSafe(|| {
            s::verify_detached_signature(&signature, msg, &public).is_ok()
        }));
        match result {
            Ok(true) => OK,
            Ok(false) => INVALID,
            Err(_) => INVALID,
        }
    })
}
