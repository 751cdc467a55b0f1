//! Content hashing and seed-derivation helpers shared across the crate.

use sha2::{Digest, Sha256};

/// SHA-256 of `bytes` as a lowercase hex string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// SHA-256 of a file's contents as a lowercase hex string.
pub fn sha256_file_hex(path: &std::path::Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

/// Derives a 32-byte RNG seed from a list of byte-string parts.
///
/// Parts are length-prefixed before hashing so that the derivation is
/// unambiguous (`["ab", "c"]` and `["a", "bc"]` hash differently).
pub fn derive_seed(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Derives a 32-byte RNG seed from an integer seed plus a domain label.
///
/// The label keeps independent random streams (shuffling, dropout, weight
/// init) decorrelated even when they share one user-facing seed.
pub fn seed_for(seed: u64, label: &str) -> [u8; 32] {
    derive_seed(&[&seed.to_le_bytes(), label.as_bytes()])
}
