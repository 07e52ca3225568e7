//! Keyed derivation of independent RNG seeds from one master seed.

const WORKER_DOMAIN: u64 = 0x776f_726b_6572_0001;
const BUCKET_DOMAIN: u64 = 0x6275_636b_6574_0002;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one word at a time.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(master), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    })
}

pub fn worker_seed(master: u64, worker_id: usize) -> u64 {
    derive_seed(master, &[WORKER_DOMAIN, worker_id as u64])
}

pub fn bucket_seed(master: u64, round: usize) -> u64 {
    derive_seed(master, &[BUCKET_DOMAIN, round as u64])
}
