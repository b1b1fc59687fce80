//! Timestamping on top of collective signing: items are batched into a
//! Merkle tree, the tree root goes into a record, and the record is the
//! statement the cothority signs.

use thiserror::Error;

use crate::engine::StatementSource;
use crate::group::{DecodeError, Group};
use crate::merkle::{self, sha256, Digest, InclusionProof};
use crate::multisig::{CollectiveSignature, Verified, VerifyError};
use crate::participation::Predicate;
use crate::roster::{AuthorityCertificate, KeyEvidence, WitnessRoster};
use crate::wire::Reader;

const RECEIPT_MAGIC: &[u8; 4] = b"TSR1";
pub const RECORD_LEN: usize = 80;

#[derive(Debug, Error)]
pub enum TimestampError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("item is not in the signed batch")]
    NotInBatch,
    #[error("signature: {0}")]
    Signature(#[from] VerifyError),
    #[error("signed time {signed} is more than {tolerance}s from {claimed}")]
    TimeMismatch { signed: u64, claimed: u64, tolerance: u64 },
    #[error("record {0} does not extend its predecessor")]
    ChainBreak(u64),
}

/// The statement signed for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimestampRecord {
    pub round: u64,
    /// Seconds since the Unix epoch, per the leader's clock.
    pub wall_time: u64,
    /// Root over `leaf_hash(item)` for every item in the batch.
    pub root: Digest,
    /// Hash of the previous record, zero for the first.
    pub prev: Digest,
}

impl TimestampRecord {
    /// `round (u64) || wall_time (u64) || root || prev`, big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RECORD_LEN);
        out.extend(self.round.to_be_bytes());
        out.extend(self.wall_time.to_be_bytes());
        out.extend_from_slice(&self.root);
        out.extend_from_slice(&self.prev);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() != RECORD_LEN {
            return Err(DecodeError::Length { expected: RECORD_LEN, actual: bytes.len() });
        }
        let mut r = Reader(bytes);
        Ok(TimestampRecord { round: r.u64()?, wall_time: r.u64()?, root: r.digest()?, prev: r.digest()? })
    }

    pub fn hash(&self) -> Digest {
        sha256(&self.encode())
    }
}

/// Proof that an item was signed in a given record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt<G: Group> {
    pub record: TimestampRecord,
    pub signature: CollectiveSignature<G>,
    /// Path from `leaf_hash(item)` to `record.root`.
    pub proof: InclusionProof,
}

impl<G: Group> Receipt<G> {
    /// `"TSR1" || record || signature || proof`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = RECEIPT_MAGIC.to_vec();
        out.extend(self.record.encode());
        out.extend(self.signature.encode());
        out.extend(self.proof.encode());
        out
    }

    pub fn decode(bytes: &[u8], witness_count: u32) -> Result<Self, DecodeError> {
        let mut r = Reader(bytes);
        if r.take(4)? != RECEIPT_MAGIC {
            return Err(DecodeError::Malformed("not a timestamp receipt"));
        }
        let record = TimestampRecord::decode(r.take(RECORD_LEN)?)?;
        let (signature, rest) = CollectiveSignature::decode_prefix(r.0, witness_count)?;
        let proof = InclusionProof::decode(rest)?;
        Ok(Receipt { record, signature, proof })
    }

    /// Checks inclusion of `item` and the collective signature on the record.
    pub fn verify(
        &self,
        item: &Digest,
        roster: &WitnessRoster<G>,
        predicate: &Predicate,
    ) -> Result<Verified, TimestampError> {
        if !self.proof.verify(&self.record.root, merkle::leaf_hash(item)) {
            return Err(TimestampError::NotInBatch);
        }
        Ok(roster.verify(&self.record.encode(), &self.signature, predicate)?)
    }

    /// Whether the signed time is within `tolerance` seconds of `claimed`.
    pub fn time_check(&self, claimed: u64, tolerance: u64) -> Result<(), TimestampError> {
        let signed = self.record.wall_time;
        if signed.abs_diff(claimed) <= tolerance {
            Ok(())
        } else {
            Err(TimestampError::TimeMismatch { signed, claimed, tolerance })
        }
    }
}

/// Leader-side batching of timestamp requests into records.
#[derive(Debug, Default)]
pub struct Batcher {
    next_ticket: u64,
    next_round: u64,
    head: Option<Digest>,
    pending: Vec<(u64, Digest)>,
    in_flight: Option<(TimestampRecord, Vec<(u64, Digest)>)>,
}

impl Batcher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues an item and returns its ticket.
    pub fn submit(&mut self, item: Digest) -> u64 {
        let t = self.next_ticket;
        self.next_ticket += 1;
        self.pending.push((t, item));
        t
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Hash of the last signed record.
    pub fn head(&self) -> Option<Digest> {
        self.head
    }

    /// Seals the pending items into the record to sign next; an empty queue
    /// gives a record over the empty-tree root. Returns `None` while a batch
    /// is in flight.
    pub fn close(&mut self, wall_time: u64) -> Option<TimestampRecord> {
        if self.in_flight.is_some() {
            return None;
        }
        let items = std::mem::take(&mut self.pending);
        let record = TimestampRecord {
            round: self.next_round,
            wall_time,
            root: batch_root(items.iter().map(|(_, d)| d)),
            prev: self.head.unwrap_or([0; 32]),
        };
        self.in_flight = Some((record, items));
        Some(record)
    }

    /// Issues receipts for the in-flight batch, keyed by ticket.
    pub fn signed<G: Group>(&mut self, signature: &CollectiveSignature<G>) -> Vec<(u64, Receipt<G>)> {
        let Some((record, items)) = self.in_flight.take() else { return Vec::new() };
        self.head = Some(record.hash());
        self.next_round += 1;
        let leaves: Vec<Digest> = items.iter().map(|(_, d)| merkle::leaf_hash(d)).collect();
        items
            .iter()
            .enumerate()
            .map(|(i, (t, _))| {
                (*t, Receipt { record, signature: signature.clone(), proof: merkle::prove(&leaves, i) })
            })
            .collect()
    }

    /// Returns the in-flight items to the front of the queue.
    pub fn failed(&mut self) {
        if let Some((_, mut items)) = self.in_flight.take() {
            items.append(&mut self.pending);
            self.pending = items;
        }
    }
}

/// Checks a receipt against a certificate and, when given, the record that
/// preceded it.
pub fn verify_receipt<G: Group>(
    cert: &AuthorityCertificate<G>,
    receipt: &Receipt<G>,
    item: &Digest,
    predicate: &Predicate,
    evidence: Option<&KeyEvidence<G>>,
    prior: Option<&TimestampRecord>,
) -> Result<Verified, TimestampError> {
    if !receipt.proof.verify(&receipt.record.root, merkle::leaf_hash(item)) {
        return Err(TimestampError::NotInBatch);
    }
    let verified = cert.verify(&receipt.record.encode(), &receipt.signature, predicate, evidence)?;
    if let Some(p) = prior {
        verify_chain(&[*p, receipt.record])?;
    }
    Ok(verified)
}

/// Accepts a receipt for a fresh `nonce` if it verifies, commits the nonce
/// and was signed within `tolerance` seconds of `local_clock`.
pub fn time_check<G: Group>(
    nonce: &Digest,
    receipt: &Receipt<G>,
    roster: &WitnessRoster<G>,
    predicate: &Predicate,
    local_clock: u64,
    tolerance: u64,
) -> Result<(), TimestampError> {
    receipt.verify(nonce, roster, predicate)?;
    receipt.time_check(local_clock, tolerance)
}

/// Statement source for a leader stamping batches gathered from witnesses
/// during the commit phase.
pub fn record_source(round: u64, wall_time: u64, prev: Digest) -> StatementSource {
    Box::new(move |root| TimestampRecord { round, wall_time, root: root.unwrap_or_else(merkle::empty_root), prev }.encode())
}

/// Receipts for a witness's local batch once its round was signed.
pub fn receipts_from_batch<G: Group>(
    statement: &[u8],
    signature: &CollectiveSignature<G>,
    items: &[(u64, Digest)],
    proofs: &[InclusionProof],
) -> Result<Vec<(u64, Receipt<G>)>, DecodeError> {
    let record = TimestampRecord::decode(statement)?;
    Ok(items
        .iter()
        .zip(proofs)
        .map(|((t, _), p)| (*t, Receipt { record, signature: signature.clone(), proof: p.clone() }))
        .collect())
}

pub fn batch_root<'a>(items: impl IntoIterator<Item = &'a Digest>) -> Digest {
    let leaves: Vec<Digest> = items.into_iter().map(|d| merkle::leaf_hash(d)).collect();
    merkle::root(&leaves)
}

/// Checks that each record links to the previous one and that rounds and
/// times do not go backwards.
pub fn verify_chain(records: &[TimestampRecord]) -> Result<(), TimestampError> {
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.prev != a.hash() || b.round <= a.round || b.wall_time < a.wall_time {
            return Err(TimestampError::ChainBreak(b.round));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{prove_possession, KeyPair, Ristretto255};
    use crate::multisig::{aggregate_responses, collective_challenge, response_share, Mode};
    use crate::participation::ParticipationSet;
    use crate::roster::RosterEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type G = Ristretto255;

    fn roster(n: u32) -> (Vec<KeyPair<G>>, WitnessRoster<G>) {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kps: Vec<KeyPair<G>> = (0..n).map(|_| KeyPair::generate(&mut rng)).collect();
        let entries =
            kps.iter().enumerate().map(|(i, k)| RosterEntry::new(format!("w{i}"), prove_possession(k, &mut rng))).collect();
        (kps.clone(), WitnessRoster::new(1, entries, 0).unwrap())
    }

    fn sign_all(kps: &[KeyPair<G>], statement: &[u8]) -> CollectiveSignature<G> {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let nonces: Vec<_> = kps.iter().map(|_| G::random_scalar(&mut rng)).collect();
        let v = nonces.iter().fold(G::identity(), |a, n| G::op(&a, &G::base_pow(n)));
        let c = collective_challenge::<G>(&v, None, statement);
        let rs: Vec<_> = nonces.iter().zip(kps).map(|(n, k)| response_share::<G>(n, &c, k.secret())).collect();
        CollectiveSignature {
            mode: Mode::Restart,
            challenge: c,
            response: aggregate_responses::<G>(&rs),
            commit_root: None,
            participation: ParticipationSet::all(kps.len() as u32),
            exceptions: Vec::new(),
        }
    }

    #[test]
    fn empty_and_single_batches() {
        let mut b = Batcher::new();
        let empty = b.close(5).unwrap();
        assert_eq!(empty.root, merkle::empty_root());
        let (kps, _) = roster(3);
        assert!(b.signed(&sign_all(&kps, &empty.encode())).is_empty());
        let item = sha256(b"one");
        b.submit(item);
        let rec = b.close(6).unwrap();
        assert_eq!(rec.root, merkle::leaf_hash(&item));
        assert_eq!(rec.prev, empty.hash());
        let receipts = b.signed(&sign_all(&kps, &rec.encode()));
        assert!(receipts[0].1.proof.path.is_empty());
    }

    #[test]
    fn certificate_receipts_and_nonces() {
        let (kps, roster) = roster(4);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let authority = prove_possession(&KeyPair::<G>::generate(&mut rng), &mut rng);
        let cert = AuthorityCertificate::full(authority, roster.clone());
        let mut b = Batcher::new();
        let nonce = sha256(b"nonce-1");
        b.submit(nonce);
        let r1 = b.close(100).unwrap();
        let (_, first) = b.signed(&sign_all(&kps, &r1.encode())).remove(0);
        b.submit(sha256(b"other"));
        let r2 = b.close(110).unwrap();
        let (_, second) = b.signed(&sign_all(&kps, &r2.encode())).remove(0);
        let pred = Predicate::Threshold(3);
        verify_receipt(&cert, &second, &sha256(b"other"), &pred, None, Some(&r1)).unwrap();
        assert!(verify_receipt(&cert, &second, &sha256(b"other"), &pred, None, Some(&r2)).is_err());
        let mut swapped = second.clone();
        swapped.record = r1;
        assert!(verify_receipt(&cert, &swapped, &sha256(b"other"), &pred, None, None).is_err(), "cross-round swap");
        let high = Predicate::Threshold(5);
        assert!(matches!(
            verify_receipt(&cert, &second, &sha256(b"other"), &high, None, None),
            Err(TimestampError::Signature(VerifyError::Predicate { .. }))
        ));
        time_check(&nonce, &first, &roster, &pred, 130, 60).unwrap();
        assert!(time_check(&sha256(b"nonce-2"), &first, &roster, &pred, 130, 60).is_err(), "replayed receipt");
        assert!(time_check(&nonce, &first, &roster, &pred, 161, 60).is_err());
        time_check(&nonce, &first, &roster, &pred, 160, 60).unwrap();
    }

    #[test]
    fn record_round_trip() {
        let r = TimestampRecord { round: 7, wall_time: 1_700_000_000, root: [3; 32], prev: [4; 32] };
        let enc = r.encode();
        assert_eq!(enc.len(), RECORD_LEN);
        assert_eq!(TimestampRecord::decode(&enc).unwrap(), r);
        assert!(TimestampRecord::decode(&enc[1..]).is_err());
    }

    #[test]
    fn receipts_verify_and_requeue() {
        let (kps, roster) = roster(4);
        let mut b = Batcher::new();
        let items: Vec<Digest> = (0..5u8).map(|i| sha256(&[i])).collect();
        for it in &items {
            b.submit(*it);
        }
        let first = b.close(1000).unwrap();
        assert!(b.close(1000).is_none(), "one batch in flight");
        b.failed();
        assert_eq!(b.pending_len(), 5);
        let rec = b.close(1001).unwrap();
        assert_eq!(rec.root, first.root);
        let sig = sign_all(&kps, &rec.encode());
        let receipts = b.signed(&sig);
        assert_eq!(receipts.len(), 5);
        let pred = Predicate::Threshold(3);
        for ((t, rc), item) in receipts.iter().zip(&items) {
            let bytes = rc.encode();
            let back = Receipt::<G>::decode(&bytes, 4).unwrap();
            assert_eq!(&back, rc, "ticket {t}");
            back.verify(item, &roster, &pred).unwrap();
            back.time_check(1003, 5).unwrap();
            assert!(back.time_check(1010, 5).is_err());
        }
        assert!(matches!(receipts[0].1.verify(&items[1], &roster, &pred), Err(TimestampError::NotInBatch)));
        b.submit(sha256(b"next"));
        let next = b.close(1002).unwrap();
        assert_eq!(next.prev, rec.hash());
        verify_chain(&[rec, next]).unwrap();
        assert!(verify_chain(&[next, rec]).is_err());
    }
}
