//! Keyed pseudorandom streams.
//!
//! Every random decision in a run draws from a stream addressed by
//! `(master_seed, cycle, purpose, owner)`. Streams are independent of the
//! order in which they are opened, so owner trainings can run on any number
//! of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init,
    Train,
    Pairing,
    SwapPositions,
    Split,
    Partition,
    Generate,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Train => 2,
            Purpose::Pairing => 3,
            Purpose::SwapPositions => 4,
            Purpose::Split => 5,
            Purpose::Partition => 6,
            Purpose::Generate => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub master_seed: u64,
    pub cycle: u64,
    pub purpose: Purpose,
    pub owner: u64,
}

impl StreamId {
    pub fn new(master_seed: u64, cycle: u64, purpose: Purpose, owner: u64) -> Self {
        Self {
            master_seed,
            cycle,
            purpose,
            owner,
        }
    }

    /// Stream for a one-off use that is not tied to a cycle or owner.
    pub fn root(master_seed: u64, purpose: Purpose) -> Self {
        Self::new(master_seed, 0, purpose, 0)
    }

    pub fn seed(&self) -> u64 {
        let mut h = splitmix64(self.master_seed);
        for word in [self.cycle, self.purpose.tag(), self.owner] {
            h = splitmix64(h ^ word.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        h
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
