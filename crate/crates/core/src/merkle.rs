//! Binary SHA-256 Merkle trees with audit paths.
//!
//! Leaves and interior nodes use distinct one-byte prefixes, and an odd node
//! at any level is paired with a copy of itself. Roots of nested trees are
//! ordinary items of their parent tree, so an audit path through several
//! trees is just the concatenation of the per-tree paths.

use sha2::{Digest as _, Sha256};

use crate::group::DecodeError;

pub type Digest = [u8; 32];

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;
const EMPTY_TAG: &[u8] = b"cosi-v1/empty-tree";

pub fn sha256(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

pub fn leaf_hash(data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_PREFIX]);
    h.update(data);
    h.finalize().into()
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_PREFIX]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Root of a tree with no items.
pub fn empty_root() -> Digest {
    sha256(EMPTY_TAG)
}

/// Which side of the running hash the sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub sibling: Digest,
    pub side: Side,
}

/// An audit path from an item up to a root.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InclusionProof {
    pub path: Vec<PathStep>,
}

impl InclusionProof {
    /// Position of the item, read from the sides of the path (bit `k` is set
    /// when the sibling at step `k` is on the left). `None` past 64 steps.
    pub fn leaf_index(&self) -> Option<u64> {
        if self.path.len() > 64 {
            return None;
        }
        Some(
            self.path
                .iter()
                .enumerate()
                .filter(|(_, s)| s.side == Side::Left)
                .fold(0u64, |acc, (k, _)| acc | (1 << k)),
        )
    }

    pub fn fold(&self, item: Digest) -> Digest {
        self.path.iter().fold(item, |acc, step| match step.side {
            Side::Left => node_hash(&step.sibling, &acc),
            Side::Right => node_hash(&acc, &step.sibling),
        })
    }

    pub fn verify(&self, root: &Digest, item: Digest) -> bool {
        self.fold(item) == *root
    }

    /// Path for the same item through `self` and then `outer`.
    pub fn then(mut self, outer: &InclusionProof) -> InclusionProof {
        self.path.extend_from_slice(&outer.path);
        self
    }

    pub fn encoded_len(&self) -> usize {
        2 + 33 * self.path.len()
    }

    /// `count (u16 BE) || { side (0 = left, 1 = right) || sibling }*`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend((self.path.len() as u16).to_be_bytes());
        for step in &self.path {
            out.push(match step.side {
                Side::Left => 0,
                Side::Right => 1,
            });
            out.extend(step.sibling);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<InclusionProof, DecodeError> {
        let (proof, rest) = Self::decode_prefix(bytes)?;
        if !rest.is_empty() {
            return Err(DecodeError::Malformed("trailing bytes after proof"));
        }
        Ok(proof)
    }

    pub(crate) fn decode_prefix(bytes: &[u8]) -> Result<(InclusionProof, &[u8]), DecodeError> {
        if bytes.len() < 2 {
            return Err(DecodeError::Truncated);
        }
        let count = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        let body = &bytes[2..];
        if body.len() < count * 33 {
            return Err(DecodeError::Truncated);
        }
        let mut path = Vec::with_capacity(count);
        for chunk in body[..count * 33].chunks_exact(33) {
            let side = match chunk[0] {
                0 => Side::Left,
                1 => Side::Right,
                _ => return Err(DecodeError::Malformed("proof side byte")),
            };
            path.push(PathStep { sibling: chunk[1..].try_into().expect("33-byte chunk"), side });
        }
        Ok((InclusionProof { path }, &body[count * 33..]))
    }
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_hash(l, r),
            [only] => node_hash(only, only),
            _ => unreachable!(),
        })
        .collect()
}

/// Root over already-hashed items. A single item is its own root.
pub fn root(items: &[Digest]) -> Digest {
    match items.len() {
        0 => empty_root(),
        _ => {
            let mut level = items.to_vec();
            while level.len() > 1 {
                level = next_level(&level);
            }
            level[0]
        }
    }
}

/// Audit path for `items[index]`. Panics if `index` is out of range.
pub fn prove(items: &[Digest], index: usize) -> InclusionProof {
    assert!(index < items.len(), "merkle index {index} out of range {}", items.len());
    let mut path = Vec::new();
    let mut level = items.to_vec();
    let mut pos = index;
    while level.len() > 1 {
        let sibling_pos = pos ^ 1;
        let sibling = level.get(sibling_pos).copied().unwrap_or(level[pos]);
        let side = if pos & 1 == 1 { Side::Left } else { Side::Right };
        path.push(PathStep { sibling, side });
        level = next_level(&level);
        pos /= 2;
    }
    InclusionProof { path }
}

/// Checks that `proof` places `item` exactly at `index` in a flat tree of
/// `len` items under `root`.
pub fn verify_at(root: &Digest, len: usize, index: usize, item: Digest, proof: &InclusionProof) -> bool {
    if index >= len {
        return false;
    }
    let mut expected_steps = 0;
    let mut width = len;
    while width > 1 {
        width = width.div_ceil(2);
        expected_steps += 1;
    }
    proof.path.len() == expected_steps
        && proof.leaf_index() == Some(index as u64)
        && proof.verify(root, item)
}
