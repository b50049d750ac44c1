//! Child seed derivation.
//!
//! `derive_seed(master, tag, index)` is the first eight bytes (little endian)
//! of `SHA-256(master_le8 || tag_utf8 || 0x00 || index_le8)`. Tags in use:
//! `graph`, `costs`, `partition`, `scheduler`, `loss`.

use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
