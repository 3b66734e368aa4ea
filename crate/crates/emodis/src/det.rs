//! Deterministic hashing used for every random-looking corpus decision.
//!
//! All synthetic-corpus randomness (durations, phone draws, timbre shapes,
//! shuffles, tie-breaking) flows through these splitmix64-based helpers so
//! regeneration is bit-identical across runs and platforms.

/// One round of splitmix64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a seed with a sequence of parts into a single well-mixed value.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    h
}

/// Hash a string tag together with a seed.
pub fn mix_str(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for b in tag.as_bytes() {
        h = splitmix64(h ^ *b as u64);
    }
    for &p in parts {
        h = splitmix64(h ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    h
}

/// Uniform value in `[0, 1)` from a hash.
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform value in `[lo, hi)` from a hash.
pub fn range_f64(h: u64, lo: f64, hi: f64) -> f64 {
    lo + unit_f64(h) * (hi - lo)
}

/// Uniform integer in `[0, n)` without modulo bias (multiply-shift).
pub fn range_u64(h: u64, n: u64) -> u64 {
    ((h as u128 * n as u128) >> 64) as u64
}

/// Deterministic Fisher-Yates permutation of `0..n`.
pub fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = range_u64(mix(seed, &[i as u64]), (i + 1) as u64) as usize;
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_stable() {
        // Frozen values guard against accidental changes to the hash chain,
        // which would silently regenerate every corpus differently.
        assert_eq!(splitmix64(0), 0xE220A8397B1DCDAF);
        assert_eq!(mix(7, &[1, 2, 3]), mix(7, &[1, 2, 3]));
        assert_ne!(mix(7, &[1, 2, 3]), mix(8, &[1, 2, 3]));
        assert_ne!(mix_str(7, "a", &[]), mix_str(7, "b", &[]));
    }

    #[test]
    fn unit_range_bounds() {
        for i in 0..1000u64 {
            let u = unit_f64(splitmix64(i));
            assert!((0.0..1.0).contains(&u));
            let r = range_u64(splitmix64(i), 7);
            assert!(r < 7);
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let p = permutation(42, 100);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_eq!(p, permutation(42, 100));
        assert_ne!(p, permutation(43, 100));
    }
}
