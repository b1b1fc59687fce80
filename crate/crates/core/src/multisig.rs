//! Schnorr multisignature aggregation, the collective signature format and
//! its verification, and the commit tree used by rounds that do not restart.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::group::{challenge_hash_parts, DecodeError, Group, TAG_COLLECTIVE, TAG_COLLECTIVE_TREE};
use crate::merkle::{self, Digest, InclusionProof};
use crate::participation::{self, ParticipationSet, Predicate, PredicateError};
use crate::topology::TreeTopology;
use crate::wire::Reader;

pub const SIGNATURE_MAGIC: &[u8; 4] = b"CSG1";

/// How a round handles witnesses lost after the commit phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Lost witnesses force a new round without them.
    Restart,
    /// Individual commits are bound by a commit tree, so lost witnesses are
    /// listed as commit exceptions and the round completes.
    NoRestart,
}

impl Mode {
    pub fn byte(self) -> u8 {
        match self {
            Mode::Restart => 0,
            Mode::NoRestart => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, DecodeError> {
        match b {
            0 => Ok(Mode::Restart),
            1 => Ok(Mode::NoRestart),
            _ => Err(DecodeError::Malformed("signature mode")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MultisigError {
    #[error("no participants")]
    NoParticipants,
    #[error("index {index} outside roster of {len}")]
    IndexOutOfRange { index: u32, len: u32 },
    #[error("no commit for participant {0}")]
    MissingCommit(u32),
}

/// Why a collective signature was rejected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("malformed signature: {0}")]
    Decode(#[from] DecodeError),
    #[error("signature covers {sig} witnesses but the roster has {roster}")]
    WitnessCount { sig: u32, roster: u32 },
    #[error("no witness responded")]
    NoParticipants,
    #[error("commit exception for witness {0} has an invalid inclusion proof")]
    ExceptionProof(u32),
    #[error("commit exception for witness {0} is invalid")]
    ExceptionIndex(u32),
    #[error("restart-mode signature carries commit exceptions")]
    UnexpectedExceptions,
    #[error("cryptographic check failed")]
    Crypto,
    #[error("predicate not satisfied: present {present}/{witnesses}, absent: {absent:?}")]
    Predicate { present: u32, witnesses: u32, absent: Vec<u32> },
    #[error("predicate could not be evaluated: {0}")]
    PredicateEval(#[from] PredicateError),
    #[error("key evidence rejected: {0}")]
    KeyEvidence(String),
}

impl VerifyError {
    /// True for failures of the signature itself rather than of the policy.
    pub fn is_crypto(&self) -> bool {
        !matches!(self, VerifyError::Predicate { .. } | VerifyError::PredicateEval(_))
    }
}

/// Summary of an accepted signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verified {
    pub witnesses: u32,
    pub present: u32,
    pub absent: Vec<u32>,
    pub exceptions: Vec<u32>,
}

impl std::fmt::Display for Verified {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "present {}/{}, absent: {:?}", self.present, self.witnesses, self.absent)?;
        if !self.exceptions.is_empty() {
            write!(f, ", commit exceptions: {:?}", self.exceptions)?;
        }
        Ok(())
    }
}

/// Product of `elems`; the identity when empty.
pub fn aggregate_elements<G: Group>(elems: &[G::Element]) -> G::Element {
    elems.iter().fold(G::identity(), |acc, e| G::op(&acc, e))
}

/// Product of the keys at the `present` indices.
pub fn aggregate_public_key<G: Group>(
    keys: &[G::Element],
    present: impl IntoIterator<Item = u32>,
) -> Result<G::Element, MultisigError> {
    let mut acc = None;
    for i in present {
        let k = keys
            .get(i as usize)
            .ok_or(MultisigError::IndexOutOfRange { index: i, len: keys.len() as u32 })?;
        acc = Some(match acc {
            None => *k,
            Some(a) => G::op(&a, k),
        });
    }
    acc.ok_or(MultisigError::NoParticipants)
}

/// `full * prod(absent)^-1`.
pub fn adjust_key_for_absent<G: Group>(full: &G::Element, absent: &[G::Element]) -> G::Element {
    G::op(full, &G::invert(&aggregate_elements::<G>(absent)))
}

/// `H(V0 || S)` without a commit tree, `H(V0 || H0 || S)` with one, under
/// distinct tags.
pub fn collective_challenge<G: Group>(
    aggregate_commit: &G::Element,
    commit_root: Option<&Digest>,
    statement: &[u8],
) -> G::Scalar {
    match commit_root {
        None => challenge_hash_parts::<G>(TAG_COLLECTIVE, aggregate_commit, &[statement]),
        Some(h) => challenge_hash_parts::<G>(TAG_COLLECTIVE_TREE, aggregate_commit, &[h, statement]),
    }
}

/// `r = v - c*x`.
pub fn response_share<G: Group>(v: &G::Scalar, c: &G::Scalar, x: &G::Scalar) -> G::Scalar {
    G::scalar_sub(v, &G::scalar_mul(c, x))
}

pub fn aggregate_responses<G: Group>(responses: &[G::Scalar]) -> G::Scalar {
    responses.iter().fold(G::scalar_zero(), |acc, r| G::scalar_add(&acc, r))
}

/// A witness that committed but did not respond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitException<G: Group> {
    pub index: u32,
    pub commit: G::Element,
    pub proof: InclusionProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectiveSignature<G: Group> {
    pub mode: Mode,
    pub challenge: G::Scalar,
    pub response: G::Scalar,
    /// Commit tree root; present exactly in no-restart mode.
    pub commit_root: Option<Digest>,
    pub participation: ParticipationSet,
    pub exceptions: Vec<CommitException<G>>,
}

impl<G: Group> CollectiveSignature<G> {
    /// `"CSG1" || group || mode || c || r || [H0] || participation ||
    /// count (u16) || { index (u32) || V || proof length (u16) || proof }*`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(80);
        out.extend_from_slice(SIGNATURE_MAGIC);
        out.push(G::ID);
        out.push(self.mode.byte());
        out.extend(G::encode_scalar(&self.challenge));
        out.extend(G::encode_scalar(&self.response));
        if let Some(h) = &self.commit_root {
            out.extend_from_slice(h);
        }
        out.extend(participation::encode_smallest(&self.participation));
        out.extend((self.exceptions.len() as u16).to_be_bytes());
        for e in &self.exceptions {
            out.extend(e.index.to_be_bytes());
            out.extend(G::encode_element(&e.commit));
            let proof = e.proof.encode();
            out.extend((proof.len() as u16).to_be_bytes());
            out.extend(proof);
        }
        out
    }

    /// Decoding needs the roster size to read the participation set.
    pub fn decode(bytes: &[u8], witness_count: u32) -> Result<Self, DecodeError> {
        let (sig, rest) = Self::decode_prefix(bytes, witness_count)?;
        if !rest.is_empty() {
            return Err(DecodeError::Malformed("trailing bytes after signature"));
        }
        Ok(sig)
    }

    /// Decodes a signature at the start of `bytes`, returning the rest.
    pub fn decode_prefix(bytes: &[u8], witness_count: u32) -> Result<(Self, &[u8]), DecodeError> {
        let mut r = Reader(bytes);
        if r.take(4)? != SIGNATURE_MAGIC {
            return Err(DecodeError::Malformed("signature magic"));
        }
        let gid = r.u8()?;
        if gid != G::ID {
            return Err(DecodeError::UnknownGroup(gid));
        }
        let mode = Mode::from_byte(r.u8()?)?;
        let challenge = r.scalar::<G>()?;
        let response = r.scalar::<G>()?;
        let commit_root = match mode {
            Mode::Restart => None,
            Mode::NoRestart => Some(r.digest()?),
        };
        let (mut set, _, rest) = participation::decode_prefix(r.0, witness_count)?;
        r.0 = rest;
        let count = r.u16()?;
        let mut exceptions = Vec::with_capacity(count as usize);
        let mut last = None;
        for _ in 0..count {
            let index = r.u32()?;
            if index >= witness_count || set.is_present(index) || last.is_some_and(|l| index <= l) {
                return Err(DecodeError::Malformed("commit exception index"));
            }
            last = Some(index);
            let commit = r.element::<G>()?;
            let len = r.u16()? as usize;
            let proof = InclusionProof::decode(r.take(len)?)?;
            set.mark_commit_only(index);
            exceptions.push(CommitException { index, commit, proof });
        }
        let sig = CollectiveSignature { mode, challenge, response, commit_root, participation: set, exceptions };
        Ok((sig, r.0))
    }
}

/// Checks the signature against `key`, which must be the aggregate of the
/// keys of exactly the responding witnesses.
pub fn verify_with_key<G: Group>(
    key: &G::Element,
    statement: &[u8],
    sig: &CollectiveSignature<G>,
) -> Result<(), VerifyError> {
    let v_resp = G::multi_pow(&[(sig.response, G::generator()), (sig.challenge, *key)]);
    let expected = match (sig.mode, &sig.commit_root) {
        (Mode::Restart, None) => {
            if !sig.exceptions.is_empty() {
                return Err(VerifyError::UnexpectedExceptions);
            }
            collective_challenge::<G>(&v_resp, None, statement)
        }
        (Mode::NoRestart, Some(root)) => {
            let mut seen = BTreeSet::new();
            let mut v0 = v_resp;
            for e in &sig.exceptions {
                if sig.participation.is_present(e.index) || !seen.insert(e.index) {
                    return Err(VerifyError::ExceptionIndex(e.index));
                }
                if !e.proof.verify(root, commit_leaf::<G>(e.index, &e.commit)) {
                    return Err(VerifyError::ExceptionProof(e.index));
                }
                v0 = G::op(&v0, &e.commit);
            }
            collective_challenge::<G>(&v0, Some(root), statement)
        }
        _ => return Err(DecodeError::Malformed("commit root does not match mode").into()),
    };
    if expected == sig.challenge {
        Ok(())
    } else {
        Err(VerifyError::Crypto)
    }
}

/// Evaluates `predicate` over the participation set and reports it.
pub fn check_predicate<G: Group>(
    sig: &CollectiveSignature<G>,
    predicate: &Predicate,
    weights: &[u64],
) -> Result<Verified, VerifyError> {
    let set = &sig.participation;
    let summary = Verified {
        witnesses: set.witness_count(),
        present: set.present_count(),
        absent: set.absent().collect(),
        exceptions: sig.exceptions.iter().map(|e| e.index).collect(),
    };
    if predicate.evaluate(set, weights)? {
        Ok(summary)
    } else {
        Err(VerifyError::Predicate { present: summary.present, witnesses: summary.witnesses, absent: summary.absent })
    }
}

/// Full verification against the roster's keys and weights.
pub fn verify_collective<G: Group>(
    keys: &[G::Element],
    weights: &[u64],
    statement: &[u8],
    sig: &CollectiveSignature<G>,
    predicate: &Predicate,
) -> Result<Verified, VerifyError> {
    let w = sig.participation.witness_count();
    if w as usize != keys.len() {
        return Err(VerifyError::WitnessCount { sig: w, roster: keys.len() as u32 });
    }
    let key = aggregate_public_key::<G>(keys, sig.participation.present()).map_err(|_| VerifyError::NoParticipants)?;
    verify_with_key(&key, statement, sig)?;
    check_predicate(sig, predicate, weights)
}

/// Commit-tree leaf for witness `index`: the index is bound so a commit
/// cannot be replayed under another witness's slot.
pub fn commit_leaf<G: Group>(index: u32, commit: &G::Element) -> Digest {
    let mut data = index.to_be_bytes().to_vec();
    data.extend(G::encode_element(commit));
    merkle::leaf_hash(&data)
}

/// Items of a node's commit tree: its own leaf followed by its children's
/// subtree hashes, in child order.
pub fn commit_items(leaf: Digest, child_hashes: &[Digest]) -> Vec<Digest> {
    std::iter::once(leaf).chain(child_hashes.iter().copied()).collect()
}

/// Commit Merkle tree shaped like the spanning tree: `H_i` is the root over
/// `[leaf_i, H_child1, H_child2, ..]`.
#[derive(Debug, Clone)]
pub struct CommitTree {
    root_node: u32,
    items: Vec<Vec<Digest>>,
    hashes: Vec<Option<Digest>>,
    position: Vec<(u32, usize)>,
}

impl CommitTree {
    /// Every live node of `topology` needs a commit.
    pub fn build<G: Group>(topology: &TreeTopology, commits: &[Option<G::Element>]) -> Result<Self, MultisigError> {
        let n = topology.len() as usize;
        let mut items = vec![Vec::new(); n];
        let mut hashes = vec![None; n];
        let mut position = vec![(u32::MAX, 0); n];
        for &v in topology.bfs().iter().rev() {
            let commit = commits.get(v as usize).copied().flatten().ok_or(MultisigError::MissingCommit(v))?;
            let kids: Vec<Digest> = topology.children(v).iter().map(|&c| hashes[c as usize].expect("child first")).collect();
            for (k, &c) in topology.children(v).iter().enumerate() {
                position[c as usize] = (v, k + 1);
            }
            let it = commit_items(commit_leaf::<G>(v, &commit), &kids);
            hashes[v as usize] = Some(merkle::root(&it));
            items[v as usize] = it;
        }
        Ok(CommitTree { root_node: topology.root(), items, hashes, position })
    }

    pub fn root(&self) -> Digest {
        self.hashes[self.root_node as usize].expect("root built")
    }

    pub fn subtree_hash(&self, node: u32) -> Option<Digest> {
        self.hashes.get(node as usize).copied().flatten()
    }

    /// Path from `H_node` up to the root.
    pub fn subtree_proof(&self, node: u32) -> InclusionProof {
        let mut proof = InclusionProof::default();
        let mut v = node;
        while v != self.root_node {
            let (p, pos) = self.position[v as usize];
            proof = proof.then(&merkle::prove(&self.items[p as usize], pos));
            v = p;
        }
        proof
    }

    /// Path from `node`'s own commit leaf up to the root.
    pub fn prove(&self, node: u32) -> InclusionProof {
        merkle::prove(&self.items[node as usize], 0).then(&self.subtree_proof(node))
    }
}

pub fn verify_commit<G: Group>(root: &Digest, index: u32, commit: &G::Element, proof: &InclusionProof) -> bool {
    proof.verify(root, commit_leaf::<G>(index, commit))
}
