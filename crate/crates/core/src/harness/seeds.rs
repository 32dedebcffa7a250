use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives independent named random streams from one root seed, so adding
/// a consumer never shifts the draws of another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn seed(&self, name: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update(name.as_bytes());
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(name))
    }

    /// A subtree for an indexed component (e.g. one agent of many).
    pub fn child(&self, name: &str, index: usize) -> SeedTree {
        SeedTree::new(self.seed(&format!("{name}/{index}")))
    }
}
