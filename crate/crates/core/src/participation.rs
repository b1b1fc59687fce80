//! Which witnesses took part in a signature, how that is encoded, and the
//! verifier-side predicates evaluated over it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::DecodeError;

const TAG_ABSENT: u8 = 0;
const TAG_PRESENT: u8 = 1;
const TAG_BITMAP: u8 = 2;
const HEADER_LEN: usize = 5;

/// Maximum nesting of [`Predicate`] trees.
pub const MAX_PREDICATE_DEPTH: usize = 16;

/// Per-witness participation in one signature.
///
/// `commit` is the set whose commits entered the aggregate commit;
/// `response` is the set whose responses entered the aggregate response.
/// The latter is always a subset of the former.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipationSet {
    response: Vec<bool>,
    commit: Vec<bool>,
}

impl ParticipationSet {
    pub fn all(witness_count: u32) -> Self {
        let v = vec![true; witness_count as usize];
        ParticipationSet { response: v.clone(), commit: v }
    }

    pub fn from_present(witness_count: u32, present: impl IntoIterator<Item = u32>) -> Self {
        let mut v = vec![false; witness_count as usize];
        for i in present {
            v[i as usize] = true;
        }
        ParticipationSet { response: v.clone(), commit: v }
    }

    pub fn from_absent(witness_count: u32, absent: impl IntoIterator<Item = u32>) -> Self {
        let mut v = vec![true; witness_count as usize];
        for i in absent {
            v[i as usize] = false;
        }
        ParticipationSet { response: v.clone(), commit: v }
    }

    pub fn witness_count(&self) -> u32 {
        self.response.len() as u32
    }

    pub fn is_present(&self, index: u32) -> bool {
        self.response.get(index as usize).copied().unwrap_or(false)
    }

    pub fn committed(&self, index: u32) -> bool {
        self.commit.get(index as usize).copied().unwrap_or(false)
    }

    /// Marks a witness that committed but did not respond.
    pub fn mark_commit_only(&mut self, index: u32) {
        self.commit[index as usize] = true;
        self.response[index as usize] = false;
    }

    pub fn present(&self) -> impl Iterator<Item = u32> + '_ {
        self.response.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i as u32)
    }

    pub fn absent(&self) -> impl Iterator<Item = u32> + '_ {
        self.response.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i as u32)
    }

    pub fn present_count(&self) -> u32 {
        self.response.iter().filter(|&&p| p).count() as u32
    }

    pub fn commit_only(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.witness_count()).filter(|&i| self.committed(i) && !self.is_present(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingKind {
    AbsentList,
    PresentList,
    Bitmap,
}

impl EncodingKind {
    /// Encoded size in bytes including the 5-byte header.
    pub fn size(self, witness_count: u32, present: u32) -> usize {
        HEADER_LEN
            + match self {
                EncodingKind::AbsentList => 4 * (witness_count - present) as usize,
                EncodingKind::PresentList => 4 * present as usize,
                EncodingKind::Bitmap => (witness_count as usize).div_ceil(8),
            }
    }
}

/// Smallest encoding of the response set; ties prefer absent-list, then
/// bitmap, then present-list.
pub fn choose_smallest(set: &ParticipationSet) -> EncodingKind {
    let (w, p) = (set.witness_count(), set.present_count());
    [EncodingKind::AbsentList, EncodingKind::Bitmap, EncodingKind::PresentList]
        .into_iter()
        .min_by_key(|k| k.size(w, p))
        .expect("non-empty")
}

/// `tag (1) || count (u32 BE) || payload`. Only the response set is encoded.
pub fn encode_as(set: &ParticipationSet, kind: EncodingKind) -> Vec<u8> {
    let mut out = Vec::with_capacity(kind.size(set.witness_count(), set.present_count()));
    let list = |out: &mut Vec<u8>, tag: u8, idx: Vec<u32>| {
        out.push(tag);
        out.extend((idx.len() as u32).to_be_bytes());
        for i in idx {
            out.extend(i.to_be_bytes());
        }
    };
    match kind {
        EncodingKind::AbsentList => list(&mut out, TAG_ABSENT, set.absent().collect()),
        EncodingKind::PresentList => list(&mut out, TAG_PRESENT, set.present().collect()),
        EncodingKind::Bitmap => {
            let len = (set.witness_count() as usize).div_ceil(8);
            let mut bytes = vec![0u8; len];
            for i in set.present() {
                bytes[i as usize / 8] |= 1 << (i % 8);
            }
            out.push(TAG_BITMAP);
            out.extend((len as u32).to_be_bytes());
            out.extend(bytes);
        }
    }
    out
}

pub fn encode_smallest(set: &ParticipationSet) -> Vec<u8> {
    encode_as(set, choose_smallest(set))
}

/// Decodes a prefix of `bytes`; returns the set, its encoding and the rest.
pub fn decode_prefix(
    bytes: &[u8],
    witness_count: u32,
) -> Result<(ParticipationSet, EncodingKind, &[u8]), DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated);
    }
    let tag = bytes[0];
    let count = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    let read_list = |body: &[u8]| -> Result<Vec<u32>, DecodeError> {
        let need = count.checked_mul(4).ok_or(DecodeError::Truncated)?;
        if body.len() < need {
            return Err(DecodeError::Truncated);
        }
        let idx: Vec<u32> = body[..need]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if idx.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DecodeError::Malformed("participation indices unsorted or duplicated"));
        }
        if idx.last().is_some_and(|&i| i >= witness_count) {
            return Err(DecodeError::Malformed("participation index out of range"));
        }
        Ok(idx)
    };
    match tag {
        TAG_ABSENT => {
            let idx = read_list(body)?;
            Ok((ParticipationSet::from_absent(witness_count, idx), EncodingKind::AbsentList, &body[count * 4..]))
        }
        TAG_PRESENT => {
            let idx = read_list(body)?;
            Ok((ParticipationSet::from_present(witness_count, idx), EncodingKind::PresentList, &body[count * 4..]))
        }
        TAG_BITMAP => {
            let expected = (witness_count as usize).div_ceil(8);
            if count != expected {
                return Err(DecodeError::Malformed("bitmap length does not match witness count"));
            }
            if body.len() < count {
                return Err(DecodeError::Truncated);
            }
            let bits = &body[..count];
            let present = (0..witness_count).filter(|&i| bits[i as usize / 8] >> (i % 8) & 1 == 1);
            let set = ParticipationSet::from_present(witness_count, present);
            // Padding bits past the witness count must be clear.
            if encode_as(&set, EncodingKind::Bitmap)[HEADER_LEN..] != *bits {
                return Err(DecodeError::Malformed("bitmap padding bits set"));
            }
            Ok((set, EncodingKind::Bitmap, &body[count..]))
        }
        _ => Err(DecodeError::Malformed("participation encoding tag")),
    }
}

pub fn decode(bytes: &[u8], witness_count: u32) -> Result<ParticipationSet, DecodeError> {
    let (set, _, rest) = decode_prefix(bytes, witness_count)?;
    if !rest.is_empty() {
        return Err(DecodeError::Malformed("trailing bytes after participation"));
    }
    Ok(set)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredicateError {
    #[error("predicate references witness {index} but only {count} exist")]
    IndexOutOfRange { index: u32, count: u32 },
    #[error("predicate nesting exceeds {MAX_PREDICATE_DEPTH}")]
    TooDeep,
    #[error("weights cover {weights} witnesses, participation covers {count}")]
    WeightMismatch { weights: usize, count: u32 },
}

/// Verifier policy over a participation set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// At least this many witnesses responded.
    Threshold(u32),
    /// Responding witnesses carry at least this much total weight.
    WeightedThreshold(u64),
    /// This witness must have responded.
    Mandatory(u32),
    AllOf(Vec<Predicate>),
    AnyOf(Vec<Predicate>),
    /// Evaluates `inner` over the participation restricted to `members`.
    Group { members: Vec<u32>, inner: Box<Predicate> },
}

impl Predicate {
    pub fn evaluate(&self, set: &ParticipationSet, weights: &[u64]) -> Result<bool, PredicateError> {
        let count = set.witness_count();
        if weights.len() != count as usize {
            return Err(PredicateError::WeightMismatch { weights: weights.len(), count });
        }
        let scope = vec![true; count as usize];
        self.eval(set, weights, &scope, 0)
    }

    fn eval(&self, set: &ParticipationSet, weights: &[u64], scope: &[bool], depth: usize) -> Result<bool, PredicateError> {
        if depth >= MAX_PREDICATE_DEPTH {
            return Err(PredicateError::TooDeep);
        }
        let count = set.witness_count();
        let check = |index: u32| {
            if index >= count {
                Err(PredicateError::IndexOutOfRange { index, count })
            } else {
                Ok(())
            }
        };
        let in_scope = |i: u32| scope[i as usize] && set.is_present(i);
        Ok(match self {
            Predicate::Threshold(min) => (0..count).filter(|&i| in_scope(i)).count() as u64 >= *min as u64,
            Predicate::WeightedThreshold(min) => {
                (0..count).filter(|&i| in_scope(i)).map(|i| weights[i as usize]).sum::<u64>() >= *min
            }
            Predicate::Mandatory(i) => {
                check(*i)?;
                in_scope(*i)
            }
            Predicate::AllOf(ps) => {
                let mut ok = true;
                for p in ps {
                    ok &= p.eval(set, weights, scope, depth + 1)?;
                }
                ok
            }
            Predicate::AnyOf(ps) => {
                let mut ok = false;
                for p in ps {
                    ok |= p.eval(set, weights, scope, depth + 1)?;
                }
                ok
            }
            Predicate::Group { members, inner } => {
                let mut narrowed = vec![false; count as usize];
                for &m in members {
                    check(m)?;
                    narrowed[m as usize] = scope[m as usize];
                }
                inner.eval(set, weights, &narrowed, depth + 1)?
            }
        })
    }

    /// Every index the predicate mentions.
    pub fn referenced(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<u32>) {
        match self {
            Predicate::Mandatory(i) => {
                out.insert(*i);
            }
            Predicate::AllOf(ps) | Predicate::AnyOf(ps) => ps.iter().for_each(|p| p.collect(out)),
            Predicate::Group { members, inner } => {
                out.extend(members);
                inner.collect(out);
            }
            Predicate::Threshold(_) | Predicate::WeightedThreshold(_) => {}
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("predicate serializes")
    }

    pub fn from_json(s: &str) -> Result<Predicate, serde_json::Error> {
        serde_json::from_str(s)
    }
}
