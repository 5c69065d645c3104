use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ids::PeerId;

pub const ID_BYTES: usize = 20;
pub const ID_BITS: usize = ID_BYTES * 8;

/// 160-bit position in the key space; node ids and record keys share it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub [u8; ID_BYTES]);

/// Record keys live in the same space as node ids.
pub type Key = NodeId;

/// XOR distance, ordered as an unsigned big-endian integer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Distance(pub [u8; ID_BYTES]);

impl NodeId {
    pub const ZERO: NodeId = NodeId([0; ID_BYTES]);

    /// SHA-256 of the peer id, truncated to 160 bits.
    pub fn for_peer(peer: PeerId) -> Self {
        let mut h = Sha256::new();
        h.update(b"node:");
        h.update(peer.0.to_be_bytes());
        let digest = h.finalize();
        let mut out = [0u8; ID_BYTES];
        out.copy_from_slice(&digest[..ID_BYTES]);
        NodeId(out)
    }

    /// Id whose low 64 bits are `v`.
    pub fn from_u64(v: u64) -> Self {
        let mut out = [0u8; ID_BYTES];
        out[ID_BYTES - 8..].copy_from_slice(&v.to_be_bytes());
        NodeId(out)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut out = [0u8; ID_BYTES];
        rng.fill(&mut out[..]);
        NodeId(out)
    }

    pub fn distance(&self, other: &NodeId) -> Distance {
        xor_distance(self, other)
    }

    /// Index of the k-bucket `other` falls into relative to `self`: the
    /// position of the highest set bit of the XOR distance (0 = lowest bit).
    /// `None` when the ids are equal.
    pub fn bucket_index(&self, other: &NodeId) -> Option<usize> {
        self.distance(other).highest_bit()
    }

    pub fn bit(&self, i: usize) -> bool {
        let byte = ID_BYTES - 1 - i / 8;
        (self.0[byte] >> (i % 8)) & 1 == 1
    }

    pub fn flip_bit(mut self, i: usize) -> Self {
        let byte = ID_BYTES - 1 - i / 8;
        self.0[byte] ^= 1 << (i % 8);
        self
    }

    /// Random id in bucket `j` of `self`: same bits above `j`, bit `j`
    /// flipped, random bits below.
    pub fn random_in_bucket<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Self {
        let noise = NodeId::random(rng);
        let mut out = self.flip_bit(j);
        for i in 0..j {
            if noise.bit(i) != out.bit(i) {
                out = out.flip_bit(i);
            }
        }
        out
    }
}

pub fn xor_distance(a: &NodeId, b: &NodeId) -> Distance {
    let mut out = [0u8; ID_BYTES];
    for (i, o) in out.iter_mut().enumerate() {
        *o = a.0[i] ^ b.0[i];
    }
    Distance(out)
}

impl Distance {
    pub const ZERO: Distance = Distance([0; ID_BYTES]);

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    pub fn highest_bit(&self) -> Option<usize> {
        self.0.iter().enumerate().find(|(_, &b)| b != 0).map(|(i, &b)| {
            let within = 7 - b.leading_zeros() as usize;
            (ID_BYTES - 1 - i) * 8 + within
        })
    }

    pub fn xor(&self, other: &Distance) -> Distance {
        let mut out = [0u8; ID_BYTES];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] ^ other.0[i];
        }
        Distance(out)
    }

    /// Low 64 bits, for tests and diagnostics.
    pub fn low_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[ID_BYTES - 8..].try_into().expect("8 bytes"))
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "…")
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Distance(")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}
