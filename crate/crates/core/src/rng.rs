//! Counter-derived random streams.
//!
//! Every random draw in a run is a pure function of `(master seed, stream,
//! index)`, so parallel sampling gives identical results for any worker
//! count and any scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named streams keep independent uses of one master seed apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Circuit = 1,
    Outcome = 2,
    EntanglementFeature = 3,
    Bootstrap = 4,
    Hamiltonian = 5,
    State = 6,
    FramePairs = 7,
    Instance = 8,
    /// Points and repeats of an experiment sweep.
    Sweep = 9,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of `stream`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(master ^ splitmix(stream as u64)).wrapping_add(index))
}

/// Mix an arbitrary 64-bit tag into a seed, for nested streams.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, stream, index))
}
