//! Keyed random substreams.
//!
//! Every replication owns one root seed. Each consumer of randomness (the
//! equilibrium draw of a server, its reversed-time arrival gaps, its forward
//! extension durations, ...) gets its own ChaCha stream selected by a
//! [`StreamKey`], so extending one server's path never shifts the numbers
//! seen by another server or by another purpose.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Reversed,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Equilibrium,
    Gaps,
    Durations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub server: usize,
    pub direction: Direction,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(server: usize, direction: Direction, purpose: Purpose) -> Self {
        Self { server, direction, purpose }
    }

    fn encode(self) -> u64 {
        let direction = match self.direction {
            Direction::Reversed => 0u64,
            Direction::Forward => 1,
        };
        let purpose = match self.purpose {
            Purpose::Equilibrium => 0u64,
            Purpose::Gaps => 1,
            Purpose::Durations => 2,
        };
        ((self.server as u64) << 8) | (direction << 4) | purpose
    }
}

/// Independent stream for `key` under `root`.
pub fn substream(root: u64, key: StreamKey) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(key.encode());
    rng
}

/// SplitMix64 finaliser; maps a base seed and replication index to a root seed.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
