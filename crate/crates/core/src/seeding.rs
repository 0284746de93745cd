//! Deterministic seed derivation.
//!
//! Every stochastic component (mock embeddings, pad placement, rollouts,
//! tie-breaking) derives its stream from a user seed plus fixed salts, so a
//! run is reproducible from its recorded configuration alone. FNV-1a plus a
//! splitmix finalizer keeps the derivation platform-independent.

/// FNV-1a over raw bytes.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// FNV-1a over UTF-8 text.
pub fn hash_text(text: &str) -> u64 {
    hash_bytes(text.as_bytes())
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold a sequence of words into one seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x45d9_f3b3_3559_5b4d;
    for p in parts {
        acc = splitmix(acc ^ splitmix(*p));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(&[1, 2]), mix(&[2, 1]));
        assert_ne!(mix(&[0]), mix(&[0, 0]));
    }

    #[test]
    fn hash_text_is_stable() {
        // Frozen value so accidental algorithm changes show up in review.
        assert_eq!(hash_text("blocks"), hash_bytes(b"blocks"));
        assert_eq!(hash_text(""), 0xcbf2_9ce4_8422_2325);
    }
}
