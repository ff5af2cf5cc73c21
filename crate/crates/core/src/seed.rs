//! Counter-based seed derivation.
//!
//! A [`Seed`] is a root value plus a path of child indices. The derived key is
//! a hash of the whole path, so the stream for scene `i` never depends on how
//! many other scenes were generated before it or on which thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub root: u64,
    #[serde(default)]
    pub path: Vec<u32>,
}

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed {
            root,
            path: Vec::new(),
        }
    }

    pub fn child(&self, index: u32) -> Seed {
        let mut path = self.path.clone();
        path.push(index);
        Seed { root: self.root, path }
    }

    /// 64-bit digest of `(root, path)`.
    pub fn key(&self) -> u64 {
        let mut h = splitmix64(self.root);
        for (depth, &idx) in self.path.iter().enumerate() {
            // Mixing the depth in keeps [0, 5] and [5] style paths apart.
            let tagged = (u64::from(idx) << 8) ^ (depth as u64 + 1);
            h = splitmix64(h ^ splitmix64(tagged.wrapping_mul(GOLDEN)));
        }
        h
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        let mut s = self.key();
        for chunk in bytes.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

pub fn derive_seed(root: &Seed, index: u32) -> Seed {
    root.child(index)
}
