//! Content hashes used for cache keys, probe ids and config fingerprints.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `text`.
pub fn text_hash(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 over several fields separated by a unit separator, so `("ab", "c")`
/// and `("a", "bc")` hash differently.
pub fn fields_digest(fields: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(f);
    }
    hasher.finalize().into()
}

pub fn short_id(fields: &[&[u8]]) -> String {
    hex(&fields_digest(fields)[..8])
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(DIGITS[(b >> 4) as usize] as char);
        out.push(DIGITS[(b & 0xf) as usize] as char);
    }
    out
}

/// Uniform value in `[0, 1)` from 8 bytes of a digest.
pub(crate) fn unit_interval(bytes: &[u8]) -> f64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&bytes[..8]);
    (u64::from_le_bytes(buf) >> 11) as f64 / (1u64 << 53) as f64
}
