//! Witness rosters, authority certificates, key trees and roster-change
//! chains.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{verify_possession, DecodeError, Group, SelfSignedKey, Signature};
use crate::merkle::{self, sha256, Digest, InclusionProof};
use crate::multisig::{self, adjust_key_for_absent, CollectiveSignature, Verified, VerifyError};
use crate::participation::{ParticipationSet, Predicate};

const TAG_ROSTER_CHANGE: &[u8] = b"cosi-v1/roster-change\0";

#[derive(Debug, Error)]
pub enum RosterError {
    #[error("roster has no entries")]
    Empty,
    #[error("duplicate witness id {0}")]
    DuplicateId(String),
    #[error("possession proof of entry {0} does not verify")]
    BadPossession(u32),
    #[error("leader index {leader} outside roster of {len}")]
    LeaderOutOfRange { leader: u32, len: u32 },
    #[error("roster is for group {found}, expected {expected}")]
    GroupMismatch { expected: &'static str, found: String },
    #[error("bad hex in field {0}")]
    Hex(&'static str),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterEntry<G: Group> {
    pub id: Vec<u8>,
    pub key: SelfSignedKey<G>,
    pub weight: u64,
    /// Network address the witness listens on, if it is deployed.
    pub endpoint: Option<String>,
}

impl<G: Group> RosterEntry<G> {
    pub fn new(id: impl Into<Vec<u8>>, key: SelfSignedKey<G>) -> Self {
        RosterEntry { id: id.into(), key, weight: 1, endpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessRoster<G: Group> {
    version: u64,
    leader: u32,
    entries: Vec<RosterEntry<G>>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    id: String,
    key: String,
    proof: String,
    weight: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    endpoint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RosterJson {
    version: u64,
    group: String,
    leader: u32,
    entries: Vec<EntryJson>,
}

impl<G: Group> WitnessRoster<G> {
    /// Validates id uniqueness, possession proofs and the leader index.
    pub fn new(version: u64, entries: Vec<RosterEntry<G>>, leader: u32) -> Result<Self, RosterError> {
        if entries.is_empty() {
            return Err(RosterError::Empty);
        }
        if leader as usize >= entries.len() {
            return Err(RosterError::LeaderOutOfRange { leader, len: entries.len() as u32 });
        }
        let mut ids = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !ids.insert(&e.id) {
                return Err(RosterError::DuplicateId(hex::encode(&e.id)));
            }
            if !verify_possession(&e.key) {
                return Err(RosterError::BadPossession(i as u32));
            }
        }
        Ok(WitnessRoster { version, leader, entries })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn leader(&self) -> u32 {
        self.leader
    }

    pub fn entries(&self) -> &[RosterEntry<G>] {
        &self.entries
    }

    pub fn len(&self) -> u32 {
        self.entries.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> Vec<G::Element> {
        self.entries.iter().map(|e| e.key.public).collect()
    }

    pub fn weights(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn aggregate_key(&self) -> G::Element {
        multisig::aggregate_elements::<G>(&self.keys())
    }

    pub fn index_of(&self, public: &G::Element) -> Option<u32> {
        self.entries.iter().position(|e| e.key.public == *public).map(|i| i as u32)
    }

    /// Canonical JSON: fixed field order, no whitespace, lowercase hex.
    pub fn to_json(&self) -> String {
        let doc = RosterJson {
            version: self.version,
            group: G::NAME.to_string(),
            leader: self.leader,
            entries: self
                .entries
                .iter()
                .map(|e| EntryJson {
                    id: hex::encode(&e.id),
                    key: hex::encode(G::encode_element(&e.key.public)),
                    proof: hex::encode(e.key.proof.encode()),
                    weight: e.weight,
                    endpoint: e.endpoint.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("roster serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        let v: serde_json::Value = serde_json::from_str(&self.to_json()).expect("own output parses");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RosterError> {
        let doc: RosterJson = serde_json::from_str(s)?;
        if doc.group != G::NAME {
            return Err(RosterError::GroupMismatch { expected: G::NAME, found: doc.group });
        }
        let mut entries = Vec::with_capacity(doc.entries.len());
        for e in doc.entries {
            let public = G::decode_element(&hex::decode(&e.key).map_err(|_| RosterError::Hex("key"))?)?;
            let proof = Signature::decode(&hex::decode(&e.proof).map_err(|_| RosterError::Hex("proof"))?)?;
            entries.push(RosterEntry {
                id: hex::decode(&e.id).map_err(|_| RosterError::Hex("id"))?,
                key: SelfSignedKey { public, proof },
                weight: e.weight,
                endpoint: e.endpoint,
            });
        }
        WitnessRoster::new(doc.version, entries, doc.leader)
    }

    pub fn digest(&self) -> Digest {
        sha256(self.to_json().as_bytes())
    }

    /// Same roster at `version` with a different leader.
    pub fn with_leader(&self, leader: u32) -> Result<Self, RosterError> {
        WitnessRoster::new(self.version, self.entries.clone(), leader)
    }

    pub fn key_tree(&self) -> KeyTree {
        KeyTree::build::<G>(&self.keys())
    }

    /// Checks a signature against the full roster.
    pub fn verify(
        &self,
        statement: &[u8],
        sig: &CollectiveSignature<G>,
        predicate: &Predicate,
    ) -> Result<Verified, VerifyError> {
        multisig::verify_collective(&self.keys(), &self.weights(), statement, sig, predicate)
    }
}

/// Merkle tree over encoded public keys in roster order.
#[derive(Debug, Clone)]
pub struct KeyTree {
    leaves: Vec<Digest>,
    root: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyInclusionProof {
    pub index: u32,
    pub proof: InclusionProof,
}

fn key_leaf<G: Group>(key: &G::Element) -> Digest {
    merkle::leaf_hash(&G::encode_element(key))
}

impl KeyTree {
    pub fn build<G: Group>(keys: &[G::Element]) -> Self {
        let leaves: Vec<Digest> = keys.iter().map(key_leaf::<G>).collect();
        let root = merkle::root(&leaves);
        KeyTree { leaves, root }
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn len(&self) -> u32 {
        self.leaves.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn prove(&self, index: u32) -> KeyInclusionProof {
        KeyInclusionProof { index, proof: merkle::prove(&self.leaves, index as usize) }
    }
}

pub fn verify_key<G: Group>(
    root: &Digest,
    witness_count: u32,
    index: u32,
    key: &G::Element,
    proof: &KeyInclusionProof,
) -> bool {
    proof.index == index
        && merkle::verify_at(root, witness_count as usize, index as usize, key_leaf::<G>(key), &proof.proof)
}

/// What a verifier trusts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrustAnchor<G: Group> {
    Full(WitnessRoster<G>),
    Compact { aggregate: G::Element, key_root: Digest, witness_count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorityCertificate<G: Group> {
    pub authority: SelfSignedKey<G>,
    pub anchor: TrustAnchor<G>,
}

/// Keys accompanying a signature checked against a compact certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyEvidence<G: Group> {
    Absent(Vec<(G::Element, KeyInclusionProof)>),
    Present(Vec<(G::Element, KeyInclusionProof)>),
}

impl<G: Group> KeyEvidence<G> {
    /// Evidence for `set` using whichever list is shorter.
    pub fn for_participation(roster: &WitnessRoster<G>, set: &ParticipationSet) -> Self {
        let tree = roster.key_tree();
        let keys = roster.keys();
        let pick = |idx: Vec<u32>| idx.into_iter().map(|i| (keys[i as usize], tree.prove(i))).collect();
        let absent: Vec<u32> = set.absent().collect();
        if absent.len() <= set.present_count() as usize {
            KeyEvidence::Absent(pick(absent))
        } else {
            KeyEvidence::Present(pick(set.present().collect()))
        }
    }
}

impl<G: Group> AuthorityCertificate<G> {
    pub fn full(authority: SelfSignedKey<G>, roster: WitnessRoster<G>) -> Self {
        AuthorityCertificate { authority, anchor: TrustAnchor::Full(roster) }
    }

    /// Compact certificate committing to `roster` through its key tree.
    pub fn compact(authority: SelfSignedKey<G>, roster: &WitnessRoster<G>) -> Self {
        AuthorityCertificate {
            authority,
            anchor: TrustAnchor::Compact {
                aggregate: roster.aggregate_key(),
                key_root: roster.key_tree().root(),
                witness_count: roster.len(),
            },
        }
    }

    /// Compact certificate from its parts; `keys` must be the committed
    /// leaves so the aggregate can be checked.
    pub fn compact_from_parts(
        authority: SelfSignedKey<G>,
        aggregate: G::Element,
        key_root: Digest,
        keys: &[G::Element],
    ) -> Option<Self> {
        let ok = KeyTree::build::<G>(keys).root() == key_root && multisig::aggregate_elements::<G>(keys) == aggregate;
        ok.then_some(AuthorityCertificate {
            authority,
            anchor: TrustAnchor::Compact { aggregate, key_root, witness_count: keys.len() as u32 },
        })
    }

    pub fn witness_count(&self) -> u32 {
        match &self.anchor {
            TrustAnchor::Full(r) => r.len(),
            TrustAnchor::Compact { witness_count, .. } => *witness_count,
        }
    }

    /// Verifies against either anchor. Compact anchors need `evidence` and
    /// weigh every witness as 1.
    pub fn verify(
        &self,
        statement: &[u8],
        sig: &CollectiveSignature<G>,
        predicate: &Predicate,
        evidence: Option<&KeyEvidence<G>>,
    ) -> Result<Verified, VerifyError> {
        match &self.anchor {
            TrustAnchor::Full(roster) => roster.verify(statement, sig, predicate),
            TrustAnchor::Compact { witness_count, .. } => {
                let evidence =
                    evidence.ok_or_else(|| VerifyError::KeyEvidence("compact certificate needs key proofs".into()))?;
                if sig.participation.witness_count() != *witness_count {
                    return Err(VerifyError::WitnessCount { sig: sig.participation.witness_count(), roster: *witness_count });
                }
                let key = verify_compact(&self.anchor, &sig.participation, evidence)?;
                multisig::verify_with_key(&key, statement, sig)?;
                multisig::check_predicate(sig, predicate, &vec![1; *witness_count as usize])
            }
        }
    }
}

/// Aggregate key of the responders of `set`, from proven keys: multiplied
/// together for a present list, divided out of the certificate's aggregate
/// for an absent list. The listed indices must be exactly that list.
pub fn verify_compact<G: Group>(
    anchor: &TrustAnchor<G>,
    set: &ParticipationSet,
    evidence: &KeyEvidence<G>,
) -> Result<G::Element, VerifyError> {
    let TrustAnchor::Compact { aggregate, key_root, witness_count } = anchor else {
        return Err(VerifyError::KeyEvidence("not a compact certificate".into()));
    };
    let (items, expected): (_, Vec<u32>) = match evidence {
        KeyEvidence::Absent(items) => (items, set.absent().collect()),
        KeyEvidence::Present(items) => (items, set.present().collect()),
    };
    let listed: Vec<u32> = items.iter().map(|(_, p)| p.index).collect();
    if listed != expected {
        return Err(VerifyError::KeyEvidence(format!("key list {listed:?} does not match {expected:?}")));
    }
    for (key, proof) in items {
        if !verify_key::<G>(key_root, *witness_count, proof.index, key, proof) {
            return Err(VerifyError::KeyEvidence(format!("key proof for witness {} fails", proof.index)));
        }
    }
    let keys: Vec<G::Element> = items.iter().map(|(k, _)| *k).collect();
    match evidence {
        KeyEvidence::Absent(_) => Ok(adjust_key_for_absent::<G>(aggregate, &keys)),
        KeyEvidence::Present(_) if keys.is_empty() => Err(VerifyError::NoParticipants),
        KeyEvidence::Present(_) => Ok(multisig::aggregate_elements::<G>(&keys)),
    }
}

/// Moves trust from one roster version to the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterChangeRecord<G: Group> {
    pub old_version: u64,
    pub new_version: u64,
    pub new_roster: WitnessRoster<G>,
    pub signature: CollectiveSignature<G>,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("record moves from version {found} but the chain is at {expected}")]
    VersionGap { expected: u64, found: u64 },
    #[error("record for version {0} does not advance by exactly one")]
    NotSequential(u64),
    #[error("record for version {version} is not signed by its predecessor: {source}")]
    Signature { version: u64, source: VerifyError },
}

/// Statement cosigned by the old roster.
pub fn change_statement<G: Group>(old_version: u64, new_roster: &WitnessRoster<G>) -> Vec<u8> {
    let mut s = TAG_ROSTER_CHANGE.to_vec();
    s.extend(old_version.to_be_bytes());
    s.extend(new_roster.version().to_be_bytes());
    s.extend(new_roster.digest());
    s
}

/// Strictly more than two thirds of `n`.
pub fn change_threshold(n: u32) -> u32 {
    2 * n / 3 + 1
}

/// Builds a change record, with `sign` running a round of the old roster
/// over the given statement.
pub fn make_change_record<G: Group, E>(
    old: &WitnessRoster<G>,
    new: &WitnessRoster<G>,
    sign: impl FnOnce(&[u8]) -> Result<CollectiveSignature<G>, E>,
) -> Result<RosterChangeRecord<G>, E> {
    let statement = change_statement(old.version(), new);
    Ok(RosterChangeRecord {
        old_version: old.version(),
        new_version: new.version(),
        new_roster: new.clone(),
        signature: sign(&statement)?,
    })
}

/// Walks `records` forward from `start`, returning the last roster.
pub fn verify_roster_chain<G: Group>(
    start: &WitnessRoster<G>,
    records: &[RosterChangeRecord<G>],
) -> Result<WitnessRoster<G>, ChainError> {
    let mut current = start.clone();
    for rec in records {
        if rec.old_version != current.version() {
            return Err(ChainError::VersionGap { expected: current.version(), found: rec.old_version });
        }
        if rec.new_version != rec.old_version + 1 || rec.new_roster.version() != rec.new_version {
            return Err(ChainError::NotSequential(rec.new_version));
        }
        let statement = change_statement(rec.old_version, &rec.new_roster);
        let predicate = Predicate::Threshold(change_threshold(current.len()));
        current
            .verify(&statement, &rec.signature, &predicate)
            .map_err(|source| ChainError::Signature { version: rec.new_version, source })?;
        current = rec.new_roster.clone();
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{prove_possession, KeyPair, Ristretto255, ToyGroup};
    use crate::multisig::{aggregate_elements, aggregate_responses, collective_challenge, response_share, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type T = ToyGroup;
    type P = Ristretto255;

    fn make<G: Group>(n: usize, version: u64, rng: &mut ChaCha20Rng) -> (Vec<KeyPair<G>>, WitnessRoster<G>) {
        let kps: Vec<KeyPair<G>> = (0..n).map(|_| KeyPair::generate(rng)).collect();
        let entries = kps
            .iter()
            .enumerate()
            .map(|(i, k)| RosterEntry::new(format!("w{version}-{i}"), prove_possession(k, rng)))
            .collect();
        (kps, WitnessRoster::new(version, entries, 0).unwrap())
    }

    fn sign<G: Group>(
        kps: &[KeyPair<G>],
        present: &[u32],
        statement: &[u8],
        rng: &mut ChaCha20Rng,
    ) -> CollectiveSignature<G> {
        let vs: Vec<G::Scalar> = present.iter().map(|_| G::random_scalar(rng)).collect();
        let commits: Vec<G::Element> = vs.iter().map(G::base_pow).collect();
        let c = collective_challenge::<G>(&aggregate_elements::<G>(&commits), None, statement);
        let rs: Vec<G::Scalar> =
            present.iter().zip(&vs).map(|(&i, v)| response_share::<G>(v, &c, kps[i as usize].secret())).collect();
        CollectiveSignature {
            mode: Mode::Restart,
            challenge: c,
            response: aggregate_responses::<G>(&rs),
            commit_root: None,
            participation: ParticipationSet::from_present(kps.len() as u32, present.iter().copied()),
            exceptions: vec![],
        }
    }

    #[test]
    fn build_roster_validation() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (_, r) = make::<P>(1, 0, &mut rng);
        assert_eq!(r.len(), 1);
        let (_, r3) = make::<P>(3, 0, &mut rng);
        let mut dup = r3.entries().to_vec();
        dup[2].id = dup[0].id.clone();
        assert!(matches!(WitnessRoster::new(0, dup, 0), Err(RosterError::DuplicateId(_))));
        let mut swapped = r3.entries().to_vec();
        swapped[1].key.proof = swapped[0].key.proof;
        assert!(matches!(WitnessRoster::new(0, swapped, 0), Err(RosterError::BadPossession(1))));
        assert!(matches!(WitnessRoster::new(0, r3.entries().to_vec(), 3), Err(RosterError::LeaderOutOfRange { .. })));
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (_, mut r) = make::<P>(3, 4, &mut rng);
        r.entries[1].endpoint = Some("127.0.0.1:7001".into());
        r.entries[2].weight = 0;
        let s = r.to_json();
        let back = WitnessRoster::<P>::from_json(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), s);
        assert_eq!(WitnessRoster::<P>::from_json(&r.to_json_pretty()).unwrap().digest(), r.digest());
        assert!(matches!(WitnessRoster::<T>::from_json(&s), Err(RosterError::GroupMismatch { .. })));
    }

    #[test]
    fn key_tree_proofs() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, one) = make::<P>(1, 0, &mut rng);
        assert_eq!(one.key_tree().root(), merkle::leaf_hash(&P::encode_element(&one.keys()[0])));
        let (_, r) = make::<P>(5, 0, &mut rng);
        let t = r.key_tree();
        let keys = r.keys();
        for i in 0..5 {
            assert!(verify_key::<P>(&t.root(), 5, i, &keys[i as usize], &t.prove(i)));
            let mut wrong = t.prove(i);
            wrong.index = (i + 1) % 5;
            assert!(!verify_key::<P>(&t.root(), 5, (i + 1) % 5, &keys[i as usize], &wrong));
        }
    }

    #[test]
    fn key_tree_root_changes_with_any_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (_, r) = make::<P>(6, 0, &mut rng);
        let keys = r.keys();
        let root = KeyTree::build::<P>(&keys).root();
        for i in 0..keys.len() {
            let mut k = keys.clone();
            k[i] += P::generator();
            assert_ne!(KeyTree::build::<P>(&k).root(), root);
        }
    }

    #[test]
    fn compact_matches_full_for_every_subset() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (kps, r) = make::<T>(5, 0, &mut rng);
        let auth = prove_possession(&KeyPair::<T>::generate(&mut rng), &mut rng);
        let full = AuthorityCertificate::full(auth, r.clone());
        let compact = AuthorityCertificate::compact(auth, &r);
        for mask in 1u32..32 {
            let present: Vec<u32> = (0..5).filter(|i| mask >> i & 1 == 1).collect();
            let sig = sign(&kps, &present, b"s", &mut rng);
            for ev in [
                KeyEvidence::for_participation(&r, &sig.participation),
                KeyEvidence::Present(present.iter().map(|&i| (r.keys()[i as usize], r.key_tree().prove(i))).collect()),
            ] {
                let a = full.verify(b"s", &sig, &Predicate::Threshold(0), None);
                let b = compact.verify(b"s", &sig, &Predicate::Threshold(0), Some(&ev));
                assert_eq!(a.is_ok(), b.is_ok(), "mask {mask}");
                let adjusted = verify_compact(&compact.anchor, &sig.participation, &ev).unwrap();
                assert_eq!(adjusted, multisig::aggregate_public_key::<T>(&r.keys(), present.clone()).unwrap());
            }
        }
    }

    #[test]
    fn compact_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (_, r) = make::<T>(3, 0, &mut rng);
        let auth = prove_possession(&KeyPair::<T>::generate(&mut rng), &mut rng);
        let c = AuthorityCertificate::compact(auth, &r);
        let all = ParticipationSet::all(3);
        assert_eq!(verify_compact(&c.anchor, &all, &KeyEvidence::Absent(vec![])).unwrap(), r.aggregate_key());
        let one_out = ParticipationSet::from_absent(3, [1]);
        let ev = KeyEvidence::for_participation(&r, &one_out);
        assert_eq!(
            verify_compact(&c.anchor, &one_out, &ev).unwrap(),
            multisig::aggregate_public_key::<T>(&r.keys(), [0, 2]).unwrap()
        );
        assert!(verify_compact(&c.anchor, &one_out, &KeyEvidence::Absent(vec![])).is_err());
        let mut forged = ev.clone();
        if let KeyEvidence::Absent(items) = &mut forged {
            items[0].1.proof.path.clear();
        }
        assert!(verify_compact(&c.anchor, &one_out, &forged).is_err());
        assert!(AuthorityCertificate::compact_from_parts(auth, r.aggregate_key(), r.key_tree().root(), &r.keys()).is_some());
        assert!(AuthorityCertificate::compact_from_parts(auth, T::generator(), r.key_tree().root(), &r.keys()).is_none());
    }

    #[test]
    fn change_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (k0, r0) = make::<P>(4, 0, &mut rng);
        let (k1, r1) = make::<P>(5, 1, &mut rng);
        let (_, r2) = make::<P>(3, 2, &mut rng);
        let rec1 = make_change_record(&r0, &r1, |s| Ok::<_, ()>(sign(&k0, &[0, 1, 2], s, &mut rng))).unwrap();
        let rec2 = make_change_record(&r1, &r2, |s| Ok::<_, ()>(sign(&k1, &[0, 1, 2, 4], s, &mut rng))).unwrap();
        assert_eq!(verify_roster_chain(&r0, &[]).unwrap(), r0);
        assert_eq!(verify_roster_chain(&r0, std::slice::from_ref(&rec1)).unwrap(), r1);
        assert_eq!(verify_roster_chain(&r0, &[rec1.clone(), rec2.clone()]).unwrap(), r2);
        assert!(matches!(verify_roster_chain(&r0, std::slice::from_ref(&rec2)), Err(ChainError::VersionGap { .. })));

        let weak = make_change_record(&r0, &r1, |s| Ok::<_, ()>(sign(&k0, &[0, 1], s, &mut rng))).unwrap();
        assert!(matches!(
            verify_roster_chain(&r0, &[weak]),
            Err(ChainError::Signature { source: VerifyError::Predicate { .. }, .. })
        ));
        let mut tampered = rec1.clone();
        tampered.new_roster = r2.clone();
        assert!(verify_roster_chain(&r0, &[tampered]).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(change_threshold(3), 3);
        assert_eq!(change_threshold(4), 3);
        assert_eq!(change_threshold(6), 5);
        assert_eq!(change_threshold(7), 5);
    }
}
