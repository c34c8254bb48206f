//! Deterministic derived random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A seed plus a path of integers; equal `(seed, path)` pairs give equal draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub path: Vec<u64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            path: Vec::new(),
        }
    }

    pub fn child(&self, i: u64) -> Self {
        let mut path = self.path.clone();
        path.push(i);
        RngStream {
            seed: self.seed,
            path,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((self.path.len() as u64).to_le_bytes());
        for p in &self.path {
            h.update(p.to_le_bytes());
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_draws() {
        let a: Vec<u64> = (0..8)
            .map({
                let mut r = RngStream::new(7).child(1).child(2).rng();
                move |_| r.gen()
            })
            .collect();
        let b: Vec<u64> = (0..8)
            .map({
                let mut r = RngStream::new(7).child(1).child(2).rng();
                move |_| r.gen()
            })
            .collect();
        assert_eq!(a, b);
        let mut c = RngStream::new(7).child(2).child(1).rng();
        assert_ne!(a[0], c.gen::<u64>());
    }
}
