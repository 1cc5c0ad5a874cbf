//! Named random sub-streams derived from a single master seed.
//!
//! Every consumer of randomness asks for a stream by name (and optionally an
//! index, e.g. the trial number). Streams are ChaCha8 generators seeded from
//! SHA-256 of `(master, name, index)`, so two different names never share a
//! prefix and results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

pub const INGEST_SPLIT: &str = "ingest/split";
pub const PCD_DATA: &str = "pcd-data";
pub const PCD_INIT: &str = "pcd-init";
pub const GNN_DATA: &str = "gnn-data";
pub const GNN_INIT: &str = "gnn-init";
pub const EVAL_H0: &str = "eval-h0";
pub const EVAL_H1: &str = "eval-h1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn seed_bytes(&self, name: &str, index: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.master.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(index.to_le_bytes());
        h.finalize().into()
    }

    /// A 64-bit seed for a named sub-stream; used where an integer seed is stored.
    pub fn seed(&self, name: &str, index: u64) -> u64 {
        let b = self.seed_bytes(name, index);
        u64::from_le_bytes(b[..8].try_into().unwrap())
    }

    pub fn stream(&self, name: &str, index: u64) -> Stream {
        ChaCha8Rng::from_seed(self.seed_bytes(name, index))
    }

    /// A child tree, for components that derive their own named streams.
    pub fn child(&self, name: &str, index: u64) -> SeedTree {
        SeedTree::new(self.seed(name, index))
    }
}

pub fn stream_from_seed(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}
