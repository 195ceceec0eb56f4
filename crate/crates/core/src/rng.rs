//! Deterministic per-trial random substreams.
//!
//! Every trial draws from independent ChaCha12 streams keyed by the audit's
//! base seed. The 256-bit key is the base seed expanded with SplitMix64, and
//! the 64-bit ChaCha stream id is `trial_index * SUBSTREAM_SLOTS + substream`.
//! No generator state is shared between trials, so trials can run in any order
//! on any number of workers and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Concrete generator handed to mechanisms, samplers and adversaries.
pub type StreamRng = ChaCha12Rng;

/// Number of stream ids reserved per trial.
pub const SUBSTREAM_SLOTS: u64 = 8;

/// Purpose of a per-trial substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Substream {
    Sampling = 0,
    Target = 1,
    Mechanism = 2,
    Adversary = 3,
    /// Mechanism draws for the false-positive half of a symmetric trial.
    FpMechanism = 4,
    /// Adversary draws for the false-positive half of a symmetric trial.
    FpAdversary = 5,
}

/// Identifies a reproducible stream of random draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiates the generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::from_seed(expand_seed(self.seed));
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Stream for one (trial, purpose) pair.
pub fn derive_trial_rng(base_seed: u64, trial_index: u64, substream: Substream) -> RngStream {
    debug_assert!(trial_index < u64::MAX / SUBSTREAM_SLOTS);
    RngStream::new(
        base_seed,
        trial_index * SUBSTREAM_SLOTS + substream as u64,
    )
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn expand_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}
