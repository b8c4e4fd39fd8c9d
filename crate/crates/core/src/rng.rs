//! Counter-based random streams.
//!
//! Every random quantity in the library is drawn from a ChaCha stream whose
//! identity is a path of integers (purpose tag, iteration, observation key,
//! ...) hashed together with the master seed. A computation therefore depends
//! only on *what* it is, never on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod tag {
    pub const POOL: u64 = 0x706f_6f6c;
    pub const ESTEP: u64 = 0x6573_7465;
    pub const IMPORTANCE: u64 = 0x696d_7073;
    pub const CENSOR: u64 = 0x6365_6e73;
    pub const GMM_INIT: u64 = 0x676d_6d69;
    pub const DATAGEN: u64 = 0x6461_7461;
    pub const PREDICT: u64 = 0x7072_6564;
    pub const MCMC: u64 = 0x6d63_6d63;
    pub const LIKELIHOOD: u64 = 0x6c69_6b65;
    pub const THEORY: u64 = 0x7468_656f;
    pub const SPLIT: u64 = 0x7370_6c74;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of a path of words.
pub fn fold_path(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Opens the stream identified by `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(master ^ 0x5851_f42d_4c95_7f2d);
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(fold_path(path));
    rng
}

/// FNV-1a over 64-bit words, used to key observations and parameter sets by
/// content.
#[derive(Clone, Debug)]
pub struct ContentHasher(u64);

impl Default for ContentHasher {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl ContentHasher {
    pub fn write_u64(&mut self, word: u64) {
        for byte in word.to_le_bytes() {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_f64(&mut self, x: f64) {
        // +0.0 and -0.0 must hash alike.
        self.write_u64(if x == 0.0 { 0 } else { x.to_bits() });
    }

    pub fn finish(&self) -> u64 {
        splitmix64(self.0)
    }
}
