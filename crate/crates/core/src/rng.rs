//! Labeled random streams.
//!
//! Every stochastic consumer draws from its own ChaCha stream whose key is
//! derived from `(seed, label, coordinates)`. Two consumers with different
//! labels never share randomness, and adding a new consumer never shifts the
//! draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Builder for a stream key. Feed the label and any coordinates, then call
/// [`StreamKey::rng`].
#[derive(Debug, Clone)]
pub struct StreamKey {
    state: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut key = Self {
            state: splitmix(seed ^ FNV_OFFSET),
        };
        key.absorb_bytes(label.as_bytes());
        key
    }

    fn absorb_bytes(&mut self, bytes: &[u8]) {
        let mut h = FNV_OFFSET;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        // length-prefix so ("ab","c") and ("a","bc") differ
        self.state = splitmix(self.state ^ splitmix(h ^ (bytes.len() as u64)));
    }

    pub fn with_u64(mut self, v: u64) -> Self {
        self.absorb_bytes(&v.to_le_bytes());
        self
    }

    pub fn with_f64(self, v: f64) -> Self {
        self.with_u64(v.to_bits())
    }

    pub fn with_str(mut self, s: &str) -> Self {
        self.absorb_bytes(s.as_bytes());
        self
    }

    /// A derived 64-bit seed, for handing to consumers that take an integer seed.
    pub fn seed(&self) -> u64 {
        splitmix(self.state)
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut bytes = [0u8; 32];
        let mut s = self.state;
        for chunk in bytes.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha20Rng::from_seed(bytes)
    }
}
