//! Deterministic RNG streams derived from the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    InitialCloud = 1,
    Measurement = 2,
    EmInit = 3,
    Resample = 4,
    Run = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64, extra: u64) -> u64 {
    [stream as u64, index, extra]
        .into_iter()
        .fold(splitmix64(master), |acc, part| splitmix64(acc ^ splitmix64(part)))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64, extra: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index, extra))
}
