//! Reproducible random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream keyed by
//! `(seed, domain, index)`. The seed and domain select the key, the index
//! selects the ChaCha stream id, so path `i` of an experiment sees the same
//! numbers no matter how the paths are batched across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent uses of one experiment seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Environment = 1,
    Context = 2,
    Walk = 3,
    Excursion = 4,
    Search = 5,
    Auxiliary = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; used when one experiment fans out into
/// sub-experiments (one environment per replicate, say).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain as u64));
    rng.set_stream(index);
    rng
}
