//! Random-hyperplane signatures over the label space.
//!
//! Hyperplane normals are Gaussian and never materialized: the component for
//! `(set, bit, label)` is derived from a keyed hash, so the label space is
//! unbounded and every peer computes identical hyperplanes from the shared
//! seed. Bit `j` of a signature is set iff the profile's dot product with
//! normal `j` is non-negative; two profiles at angle `theta` disagree on each
//! bit with probability `theta / pi`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::id::{Key, ID_BYTES};
use crate::profile::Profile;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit_open(bits: u64) -> f64 {
    // (0, 1]: 53 random bits, shifted off zero.
    ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

/// Standard normal component of hyperplane `bit` in signature set `set`.
pub fn hyperplane_component(seed: u64, set: u32, bit: u32, label: u32) -> f64 {
    let base = splitmix64(seed ^ splitmix64(((set as u64) << 32) | bit as u64));
    let h1 = splitmix64(base ^ (label as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    let h2 = splitmix64(h1 ^ 0xa076_1d64_78bd_642f);
    let u1 = unit_open(h1);
    let u2 = unit_open(h2);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureScheme {
    pub seed: u64,
    pub sets: u32,
    pub bits: u32,
}

impl SignatureScheme {
    pub fn new(seed: u64, sets: u32, bits: u32) -> Self {
        assert!(sets >= 1, "need at least one signature set");
        assert!((1..=64).contains(&bits), "signature width must be 1..=64 bits");
        SignatureScheme { seed, sets, bits }
    }

    /// Signature of `p` under hyperplane set `set`.
    pub fn signature(&self, p: &Profile, set: u32) -> u64 {
        let mut sig = 0u64;
        for bit in 0..self.bits {
            let dot: f64 = p
                .weights()
                .iter()
                .map(|&(l, w)| w * hyperplane_component(self.seed, set, bit, l))
                .sum();
            if dot >= 0.0 {
                sig |= 1 << bit;
            }
        }
        sig
    }

    /// One signature per set.
    pub fn signatures(&self, p: &Profile) -> Vec<u64> {
        (0..self.sets).map(|s| self.signature(p, s)).collect()
    }

    /// DHT key of `signature` in set `set`.
    ///
    /// Layout: 4-byte hash prefix of the set index, then the signature bits
    /// left-aligned in the next 8 bytes, then zeros. Each set owns a disjoint
    /// key region, and signatures one bit apart stay close in XOR distance, so
    /// all multiprobe keys of a set resolve to the same replica neighbourhood.
    pub fn key(&self, set: u32, signature: u64) -> Key {
        let mut h = Sha256::new();
        h.update(b"set:");
        h.update(self.seed.to_be_bytes());
        h.update(set.to_be_bytes());
        let digest = h.finalize();
        let mut out = [0u8; ID_BYTES];
        out[..4].copy_from_slice(&digest[..4]);
        let aligned = signature << (64 - self.bits);
        out[4..12].copy_from_slice(&aligned.to_be_bytes());
        Key::from_bytes(out)
    }
}

impl Key {
    pub fn from_bytes(bytes: [u8; ID_BYTES]) -> Self {
        super::id::NodeId(bytes)
    }
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Every `bits`-wide signature within Hamming distance `radius` of `sig`,
/// ordered by distance, then by flipped positions.
pub fn probe_signatures(sig: u64, bits: u32, radius: u32) -> Vec<u64> {
    fn rec(sig: u64, bits: u32, start: u32, left: u32, out: &mut Vec<u64>) {
        if left == 0 {
            out.push(sig);
            return;
        }
        for i in start..bits {
            rec(sig ^ (1 << i), bits, i + 1, left - 1, out);
        }
    }
    let mut out = Vec::new();
    for d in 0..=radius.min(bits) {
        rec(sig, bits, 0, d, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_scale_invariant() {
        let s = SignatureScheme::new(42, 4, 16);
        let p = Profile::new(vec![(1, 0.3), (5, 1.2), (9, 0.7)]).unwrap();
        assert_eq!(s.signatures(&p), s.signatures(&p));
        assert_eq!(s.signatures(&p), s.signatures(&p.scaled(37.5)));
        assert!(s.signature(&p, 0) < 1 << 16);
    }

    #[test]
    fn orthogonal_profiles_split_half_the_bits() {
        // E[hamming] = b * (pi/2) / pi = 32 for b = 64.
        let p = Profile::new(vec![(1, 1.0), (2, 1.0)]).unwrap();
        let q = Profile::new(vec![(3, 1.0), (4, 1.0)]).unwrap();
        let s = SignatureScheme::new(7, 200, 64);
        let total: u32 = (0..200).map(|set| hamming(s.signature(&p, set), s.signature(&q, set))).sum();
        let mean = total as f64 / 200.0;
        assert!((mean - 32.0).abs() <= 4.0, "mean hamming {mean}");
    }

    #[test]
    fn gaussian_components() {
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|l| hyperplane_component(3, 0, 0, l)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn probes() {
        assert_eq!(probe_signatures(0b101, 3, 0), vec![0b101]);
        let r1 = probe_signatures(0b101, 3, 1);
        assert_eq!(r1, vec![0b101, 0b100, 0b111, 0b001]);
        let r2 = probe_signatures(0, 16, 2);
        assert_eq!(r2.len(), 1 + 16 + 120);
        assert!(r2.iter().all(|&s| hamming(s, 0) <= 2));
        let mut d = r2.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), r2.len());
    }

    #[test]
    fn keys_keep_sets_apart_and_neighbours_close() {
        let s = SignatureScheme::new(1, 4, 16);
        let k0 = s.key(0, 0xbeef);
        let k1 = s.key(1, 0xbeef);
        assert_ne!(k0.0[..4], k1.0[..4]);
        let near = s.key(0, 0xbeef ^ 1);
        assert_eq!(k0.0[..4], near.0[..4]);
        let d = k0.distance(&near);
        assert!(d.highest_bit().unwrap() < 160 - 32);
    }
}
