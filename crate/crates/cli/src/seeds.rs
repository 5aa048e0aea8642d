//! Named random sub-streams.
//!
//! Every consumer of randomness derives its own seed from the run seed and a
//! fixed name, so adding a consumer never perturbs the others.

use sha2::{Digest, Sha256};

pub const DRIVER: &str = "driver";
pub const MESH: &str = "mesh";
pub const PROBES: &str = "probes";

/// First eight bytes of `SHA-256(seed_le ‖ name)`.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Seed of the `index`-th member of a named family.
pub fn member(seed: u64, name: &str, index: u64) -> u64 {
    substream(substream(seed, name), &index.to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_ne!(substream(7, DRIVER), substream(7, MESH));
        assert_ne!(substream(7, DRIVER), substream(8, DRIVER));
        assert_eq!(substream(7, PROBES), substream(7, PROBES));
        assert_ne!(member(7, DRIVER, 0), member(7, DRIVER, 1));
    }

    #[test]
    fn hex_digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
