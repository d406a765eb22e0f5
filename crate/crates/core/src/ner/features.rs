//! Position features for the sequence tagger: character unigrams and
//! bigrams from a 5-character window, hashed into D buckets.

/// FNV-1a 64-bit, the published offset-basis/prime pair. Feature identity
/// must be stable across platforms and releases, so the hash is pinned here
/// rather than delegated to the standard library's randomized hasher.
pub const FNV_OFFSET: u64 = 0xcbf29ce484222325;
pub const FNV_PRIME: u64 = 0x100000001b3;

pub const DEFAULT_FEATURE_DIM: usize = 1 << 16;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn bucket(kind: u8, offset: i32, chars: &[char], dim: usize) -> usize {
    let mut bytes = vec![kind, (offset + 2) as u8];
    let mut buf = [0u8; 4];
    for c in chars {
        bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
    }
    (fnv1a(&bytes) % dim as u64) as usize
}

/// Feature-id set for one character position. Unigram features cover
/// offsets −2..=2, bigram features the four adjacent pairs inside the same
/// window; features falling off either sentence end are omitted. The result
/// is sorted and deduplicated (hash collisions inside one window collapse).
pub fn featurize(sentence: &[char], position: usize, dim: usize) -> Vec<usize> {
    debug_assert!(position < sentence.len());
    let n = sentence.len() as i32;
    let p = position as i32;
    let mut ids = Vec::with_capacity(9);
    for off in -2i32..=2 {
        let i = p + off;
        if i >= 0 && i < n {
            ids.push(bucket(b'u', off, &[sentence[i as usize]], dim));
        }
    }
    for off in -2i32..=1 {
        let i = p + off;
        if i >= 0 && i + 1 < n {
            ids.push(bucket(
                b'b',
                off,
                &[sentence[i as usize], sentence[(i + 1) as usize]],
                dim,
            ));
        }
    }
    ids.sort_unstable();
    ids.dedup();
    ids
}
