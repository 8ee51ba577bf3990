//! Keyed random streams.
//!
//! A stream is identified by `(master seed, label, indices)`. The key is
//! hashed with SHA-256 into a ChaCha8 seed, so a stream can be materialised
//! on demand, in any order, and always yields the same sequence.

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::units::Units;
use crate::water::{Resolution, WaterAmount};

/// Stream labels used by the engine. Distinct roles never share a stream.
pub mod labels {
    pub const SMOOTHED_OFFSET: &str = "smoothed-offset";
    pub const THRESHOLD: &str = "threshold";
    pub const FILLER: &str = "filler";
    pub const EMPTIER: &str = "emptier";
    pub const RECOVERY: &str = "recovery";
}

/// A deterministic pseudo-random stream derived from a key.
#[derive(Clone, Debug)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(seed: u64, label: &str, indices: &[u64]) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update((indices.len() as u64).to_le_bytes());
        for i in indices {
            h.update(i.to_le_bytes());
        }
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        RngStream(ChaCha8Rng::from_seed(key))
    }

    /// Uniform integer in `[0, bound)`. Panics if `bound` is zero.
    pub fn below(&mut self, bound: &Units) -> Units {
        match bound.to_u64() {
            Some(b) => Units::from_u64(self.0.gen_range(0..b)),
            None => {
                let b: BigUint = bound.to_biguint();
                Units::from_biguint(self.0.gen_biguint_below(&b))
            }
        }
    }

    pub fn below_u64(&mut self, bound: u64) -> u64 {
        self.0.gen_range(0..bound)
    }

    /// A uniformly random odd unit count in `{1, 3, ..., D - 1}`, i.e. one
    /// of the values `(2k - 1) / D` strictly inside `(0, 1)`.
    pub fn uniform_threshold(&mut self, d: &Resolution) -> WaterAmount {
        let k = self.below(&d.half());
        let mut v = &k * 2;
        v += &Units::from_u64(1);
        WaterAmount::from_units(v)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// First threshold drawn from the stream with the given key.
pub fn uniform_threshold(seed: u64, label: &str, indices: &[u64], d: &Resolution) -> WaterAmount {
    RngStream::new(seed, label, indices).uniform_threshold(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_two_always_gives_half() {
        let d = Resolution::from_u64(2).unwrap();
        for i in 0..50 {
            assert_eq!(uniform_threshold(9, "t", &[i], &d), WaterAmount::from_u64(1));
        }
    }

    #[test]
    fn resolution_four_splits_evenly() {
        let d = Resolution::from_u64(4).unwrap();
        let mut ones = 0u32;
        let trials = 20_000;
        for i in 0..trials {
            let v = uniform_threshold(1, "t", &[i], &d);
            assert!(v == WaterAmount::from_u64(1) || v == WaterAmount::from_u64(3));
            if v == WaterAmount::from_u64(1) {
                ones += 1;
            }
        }
        let frac = ones as f64 / trials as f64;
        // 5 sigma at p = 1/2 over 20k draws is about 0.0177
        assert!((frac - 0.5).abs() < 0.018, "{frac}");
    }

    #[test]
    fn same_key_same_value_distinct_keys_differ() {
        let d = Resolution::from_u64(1 << 40).unwrap();
        let a = uniform_threshold(5, "x", &[1, 2], &d);
        assert_eq!(a, uniform_threshold(5, "x", &[1, 2], &d));
        assert_ne!(a, uniform_threshold(5, "x", &[2, 1], &d));
        assert_ne!(a, uniform_threshold(5, "y", &[1, 2], &d));
        assert_ne!(a, uniform_threshold(6, "x", &[1, 2], &d));
    }

    #[test]
    fn thresholds_are_odd_and_below_one_at_huge_resolution() {
        let d = Resolution::new("1000000000000000000000000000000000000000".parse().unwrap()).unwrap();
        for i in 0..200 {
            let v = uniform_threshold(3, "big", &[i], &d);
            assert!(v.units().is_odd());
            assert!(v.units() < d.units());
        }
    }
}
