//! Counter-based derivation of independent random streams.
//!
//! Every random quantity is drawn from a ChaCha20 stream whose 256-bit key is
//! a pure function of `(master_seed, purpose, index)`:
//!
//! ```text
//! s0 = master_seed
//! s1 = splitmix64(s0 ^ PURPOSE_TAG[purpose])
//! s2 = splitmix64(s1 ^ index)
//! key = splitmix64^1(s2) || splitmix64^2(s2) || splitmix64^3(s2) || splitmix64^4(s2)
//! ```
//!
//! Streams for different replicates or Monte-Carlo draws therefore never
//! depend on the order in which they are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for. Each purpose owns a disjoint family of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Replicate,
    DesignPre,
    DesignFt,
    Parameters,
    NoisePre,
    NoiseFt,
    McDraw,
    TestSet,
    EigenTrial,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Replicate => 0x5265_706c_6963_6174,
            Purpose::DesignPre => 0x4465_7369_676e_5072,
            Purpose::DesignFt => 0x4465_7369_676e_4674,
            Purpose::Parameters => 0x5061_7261_6d65_7465,
            Purpose::NoisePre => 0x4e6f_6973_6550_7265,
            Purpose::NoiseFt => 0x4e6f_6973_6546_7421,
            Purpose::McDraw => 0x4d6f_6e74_6543_6172,
            Purpose::TestSet => 0x5465_7374_5365_7421,
            Purpose::EigenTrial => 0x4569_6765_6e54_7269,
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit token identifying `(master_seed, purpose, index)`.
pub fn derive_seed(master_seed: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed ^ purpose.tag()) ^ index)
}

/// Independent ChaCha20 stream for `(master_seed, purpose, index)`.
pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> ChaCha20Rng {
    let mut state = derive_seed(master_seed, purpose, index);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}
