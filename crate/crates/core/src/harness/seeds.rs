use sha2::{Digest, Sha256};

/// Child seed for `path` below `master`.
///
/// Labels are length-prefixed before hashing, so `["ab", "c"]` and
/// `["a", "bc"]` give different seeds. Adding a label to one branch never
/// changes the seeds of another.
pub fn derive_seed(master: u64, path: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for label in path {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Short hex digest of a config's canonical text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
