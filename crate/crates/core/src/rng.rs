//! Seeded random streams.
//!
//! Every stochastic choice draws from ChaCha8 keyed by the master seed. Each
//! replication and each role inside a replication (regrouping, one stream per
//! agent) gets its own stream id, so streams never interact and any one of
//! them can be regenerated without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SessionRng = ChaCha8Rng;

/// Name recorded in log headers.
pub const RNG_NAME: &str = "chacha8";

const ROLE_BITS: u32 = 20;

/// Stream used for regrouping within a replication.
pub const GROUPING_STREAM: u64 = 0;

/// Stream owned by agent `subject`.
pub fn agent_stream(subject: usize) -> u64 {
    1 + subject as u64
}

pub fn stream_id(replication: u64, role: u64) -> u64 {
    debug_assert!(role < (1 << ROLE_BITS));
    (replication << ROLE_BITS) | role
}

pub fn stream_rng(seed: u64, replication: u64, role: u64) -> SessionRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(replication, role));
    rng
}

/// Serializable position of a stream; restores the generator exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// Position in 32-bit words. Stored as a string because JSON numbers cap at 64 bits.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(seed: u64, rng: &SessionRng) -> Self {
        RngState { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> SessionRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
