//! Protocol messages and their framed binary encoding.
//!
//! A frame is `length (u32 BE) || tag (u8) || fields`, where `length` counts
//! the tag and fields. Every protocol message starts with `round || view`.

use crate::group::{DecodeError, Group, Signature};
use crate::merkle::{Digest, InclusionProof};
use crate::multisig::{CommitException, Mode};
use crate::wire::{put_u32_list, put_var_bytes, Reader};

const TAG_ANNOUNCE: u8 = 1;
const TAG_COMMIT: u8 = 2;
const TAG_CHALLENGE: u8 = 3;
const TAG_RESPONSE: u8 = 4;
const TAG_VIEW_CHANGE: u8 = 5;
const TAG_DONE: u8 = 6;
const TAG_HELLO: u8 = 7;
const TAG_STAMP_REQUEST: u8 = 8;
const TAG_STAMP_REPLY: u8 = 9;

/// Largest frame a reader will accept.
pub const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Announce {
    pub round: u64,
    pub view: u64,
    pub mode: Mode,
    /// Nodes pruned from the tree for this round.
    pub excluded: Vec<u32>,
    pub topology: Digest,
    /// Whether witnesses contribute their local batch roots.
    pub collect: bool,
    /// Present when the statement is bound at announcement.
    pub statement: Option<Vec<u8>>,
}

/// A child's commit as relayed by its parent, enough to rebuild the
/// parent's commit-tree items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KidCommit<G: Group> {
    pub index: u32,
    pub agg: G::Element,
    pub hash: Digest,
    pub batch_root: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commit<G: Group> {
    pub round: u64,
    pub view: u64,
    /// Aggregate commit of the sender's subtree.
    pub agg: G::Element,
    /// Sender's commit-tree hash (no-restart mode).
    pub hash: Option<Digest>,
    /// Sender's own commit (no-restart mode, when it committed).
    pub own: Option<G::Element>,
    /// Sender's children in commit-tree order (no-restart mode).
    pub kids: Vec<KidCommit<G>>,
    /// Subtree members not in `agg`.
    pub absent: Vec<u32>,
    /// Subtree members detected as failed.
    pub failed: Vec<u32>,
    /// Subtree members that declined the statement.
    pub refused: Vec<u32>,
    /// Root over the sender's local batch and its children's batch roots.
    pub batch_root: Option<Digest>,
    /// Root of the sender's own local batch (no-restart mode).
    pub local_batch: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge<G: Group> {
    pub round: u64,
    pub view: u64,
    pub challenge: G::Scalar,
    pub agg_commit: G::Element,
    pub commit_root: Option<Digest>,
    /// Present when the statement is bound at challenge.
    pub statement: Option<Vec<u8>>,
    /// Path from the receiver's commit-tree hash to the root.
    pub proof: InclusionProof,
    /// Global batch root and the path from the receiver's batch root to it.
    pub batch: Option<(Digest, InclusionProof)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response<G: Group> {
    pub round: u64,
    pub view: u64,
    pub response: G::Scalar,
    pub exceptions: Vec<CommitException<G>>,
    /// Committed subtree members whose response is not included.
    pub missing: Vec<u32>,
    pub failed: Vec<u32>,
    pub refused: Vec<u32>,
    /// Missing members without a commit exception.
    pub unresolved: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewChange<G: Group> {
    pub round: u64,
    pub view: u64,
    pub signer: u32,
    pub signature: Signature<G>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Done {
    pub round: u64,
    pub view: u64,
    pub statement: Vec<u8>,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message<G: Group> {
    Announce(Announce),
    Commit(Commit<G>),
    Challenge(Challenge<G>),
    Response(Response<G>),
    ViewChange(ViewChange<G>),
    Done(Done),
    /// First frame on a connection: who is speaking.
    Hello { index: u32 },
    StampRequest { hash: Digest },
    /// An encoded receipt, or empty when the stamp failed.
    StampReply { receipt: Vec<u8> },
}

impl<G: Group> Message<G> {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Announce(_) => "announce",
            Message::Commit(_) => "commit",
            Message::Challenge(_) => "challenge",
            Message::Response(_) => "response",
            Message::ViewChange(_) => "view-change",
            Message::Done(_) => "done",
            Message::Hello { .. } => "hello",
            Message::StampRequest { .. } => "stamp-request",
            Message::StampReply { .. } => "stamp-reply",
        }
    }

    pub fn round(&self) -> Option<u64> {
        match self {
            Message::Announce(m) => Some(m.round),
            Message::Commit(m) => Some(m.round),
            Message::Challenge(m) => Some(m.round),
            Message::Response(m) => Some(m.round),
            Message::ViewChange(m) => Some(m.round),
            Message::Done(m) => Some(m.round),
            _ => None,
        }
    }

    /// Tag and fields, without the length prefix.
    pub fn encode_body(&self) -> Vec<u8> {
        let mut o = Vec::with_capacity(128);
        match self {
            Message::Announce(m) => {
                o.push(TAG_ANNOUNCE);
                head(&mut o, m.round, m.view);
                o.push(m.mode.byte());
                o.push(u8::from(m.collect) | u8::from(m.statement.is_some()) << 1);
                put_u32_list(&mut o, &m.excluded);
                o.extend_from_slice(&m.topology);
                if let Some(s) = &m.statement {
                    put_var_bytes(&mut o, s);
                }
            }
            Message::Commit(m) => {
                o.push(TAG_COMMIT);
                head(&mut o, m.round, m.view);
                o.extend(G::encode_element(&m.agg));
                o.push(
                    u8::from(m.hash.is_some())
                        | u8::from(m.own.is_some()) << 1
                        | u8::from(m.batch_root.is_some()) << 2
                        | u8::from(m.local_batch.is_some()) << 3,
                );
                if let Some(h) = &m.hash {
                    o.extend_from_slice(h);
                }
                if let Some(v) = &m.own {
                    o.extend(G::encode_element(v));
                }
                if let Some(b) = &m.batch_root {
                    o.extend_from_slice(b);
                }
                if let Some(b) = &m.local_batch {
                    o.extend_from_slice(b);
                }
                o.extend((m.kids.len() as u16).to_be_bytes());
                for k in &m.kids {
                    o.extend(k.index.to_be_bytes());
                    o.extend(G::encode_element(&k.agg));
                    o.extend_from_slice(&k.hash);
                    match &k.batch_root {
                        Some(b) => {
                            o.push(1);
                            o.extend_from_slice(b);
                        }
                        None => o.push(0),
                    }
                }
                put_u32_list(&mut o, &m.absent);
                put_u32_list(&mut o, &m.failed);
                put_u32_list(&mut o, &m.refused);
            }
            Message::Challenge(m) => {
                o.push(TAG_CHALLENGE);
                head(&mut o, m.round, m.view);
                o.extend(G::encode_scalar(&m.challenge));
                o.extend(G::encode_element(&m.agg_commit));
                o.push(
                    u8::from(m.commit_root.is_some())
                        | u8::from(m.statement.is_some()) << 1
                        | u8::from(m.batch.is_some()) << 2,
                );
                if let Some(h) = &m.commit_root {
                    o.extend_from_slice(h);
                }
                if let Some(s) = &m.statement {
                    put_var_bytes(&mut o, s);
                }
                o.extend(m.proof.encode());
                if let Some((root, proof)) = &m.batch {
                    o.extend_from_slice(root);
                    o.extend(proof.encode());
                }
            }
            Message::Response(m) => {
                o.push(TAG_RESPONSE);
                head(&mut o, m.round, m.view);
                o.extend(G::encode_scalar(&m.response));
                o.extend((m.exceptions.len() as u16).to_be_bytes());
                for e in &m.exceptions {
                    o.extend(e.index.to_be_bytes());
                    o.extend(G::encode_element(&e.commit));
                    o.extend(e.proof.encode());
                }
                put_u32_list(&mut o, &m.missing);
                put_u32_list(&mut o, &m.failed);
                put_u32_list(&mut o, &m.refused);
                put_u32_list(&mut o, &m.unresolved);
            }
            Message::ViewChange(m) => {
                o.push(TAG_VIEW_CHANGE);
                head(&mut o, m.round, m.view);
                o.extend(m.signer.to_be_bytes());
                o.extend(m.signature.encode());
            }
            Message::Done(m) => {
                o.push(TAG_DONE);
                head(&mut o, m.round, m.view);
                put_var_bytes(&mut o, &m.statement);
                put_var_bytes(&mut o, &m.signature);
            }
            Message::Hello { index } => {
                o.push(TAG_HELLO);
                o.extend(index.to_be_bytes());
            }
            Message::StampRequest { hash } => {
                o.push(TAG_STAMP_REQUEST);
                o.extend_from_slice(hash);
            }
            Message::StampReply { receipt } => {
                o.push(TAG_STAMP_REPLY);
                put_var_bytes(&mut o, receipt);
            }
        }
        o
    }

    /// Length-prefixed frame.
    pub fn encode(&self) -> Vec<u8> {
        let body = self.encode_body();
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend((body.len() as u32).to_be_bytes());
        out.extend(body);
        out
    }

    pub fn encoded_len(&self) -> usize {
        4 + self.encode_body().len()
    }

    pub fn decode_body(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader(bytes);
        let msg = match r.u8()? {
            TAG_ANNOUNCE => {
                let (round, view) = (r.u64()?, r.u64()?);
                let mode = Mode::from_byte(r.u8()?)?;
                let flags = r.u8()?;
                let excluded = r.u32_list()?;
                let topology = r.digest()?;
                let statement = if flags & 2 != 0 { Some(r.var_bytes()?) } else { None };
                Message::Announce(Announce { round, view, mode, excluded, topology, collect: flags & 1 != 0, statement })
            }
            TAG_COMMIT => {
                let (round, view) = (r.u64()?, r.u64()?);
                let agg = r.element::<G>()?;
                let flags = r.u8()?;
                let hash = if flags & 1 != 0 { Some(r.digest()?) } else { None };
                let own = if flags & 2 != 0 { Some(r.element::<G>()?) } else { None };
                let batch_root = if flags & 4 != 0 { Some(r.digest()?) } else { None };
                let local_batch = if flags & 8 != 0 { Some(r.digest()?) } else { None };
                let n = r.u16()?;
                let mut kids = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let index = r.u32()?;
                    let agg = r.element::<G>()?;
                    let hash = r.digest()?;
                    let batch_root = match r.u8()? {
                        0 => None,
                        1 => Some(r.digest()?),
                        _ => return Err(DecodeError::Malformed("kid batch flag")),
                    };
                    kids.push(KidCommit { index, agg, hash, batch_root });
                }
                Message::Commit(Commit {
                    round,
                    view,
                    agg,
                    hash,
                    own,
                    kids,
                    absent: r.u32_list()?,
                    failed: r.u32_list()?,
                    refused: r.u32_list()?,
                    batch_root,
                    local_batch,
                })
            }
            TAG_CHALLENGE => {
                let (round, view) = (r.u64()?, r.u64()?);
                let challenge = r.scalar::<G>()?;
                let agg_commit = r.element::<G>()?;
                let flags = r.u8()?;
                let commit_root = if flags & 1 != 0 { Some(r.digest()?) } else { None };
                let statement = if flags & 2 != 0 { Some(r.var_bytes()?) } else { None };
                let proof = r.proof()?;
                let batch = if flags & 4 != 0 { Some((r.digest()?, r.proof()?)) } else { None };
                Message::Challenge(Challenge { round, view, challenge, agg_commit, commit_root, statement, proof, batch })
            }
            TAG_RESPONSE => {
                let (round, view) = (r.u64()?, r.u64()?);
                let response = r.scalar::<G>()?;
                let n = r.u16()?;
                let mut exceptions = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    exceptions.push(CommitException { index: r.u32()?, commit: r.element::<G>()?, proof: r.proof()? });
                }
                Message::Response(Response {
                    round,
                    view,
                    response,
                    exceptions,
                    missing: r.u32_list()?,
                    failed: r.u32_list()?,
                    refused: r.u32_list()?,
                    unresolved: r.u32_list()?,
                })
            }
            TAG_VIEW_CHANGE => {
                let (round, view) = (r.u64()?, r.u64()?);
                let signer = r.u32()?;
                let signature = Signature::decode(r.take(2 * G::SCALAR_LEN)?)?;
                Message::ViewChange(ViewChange { round, view, signer, signature })
            }
            TAG_DONE => {
                let (round, view) = (r.u64()?, r.u64()?);
                Message::Done(Done { round, view, statement: r.var_bytes()?, signature: r.var_bytes()? })
            }
            TAG_HELLO => Message::Hello { index: r.u32()? },
            TAG_STAMP_REQUEST => Message::StampRequest { hash: r.digest()? },
            TAG_STAMP_REPLY => Message::StampReply { receipt: r.var_bytes()? },
            _ => return Err(DecodeError::Malformed("message tag")),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Decodes one whole frame.
    pub fn decode(frame: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader(frame);
        let len = r.u32()? as usize;
        if len != r.0.len() {
            return Err(DecodeError::Length { expected: len, actual: r.0.len() });
        }
        Self::decode_body(r.0)
    }
}

fn head(o: &mut Vec<u8>, round: u64, view: u64) {
    o.extend(round.to_be_bytes());
    o.extend(view.to_be_bytes());
}

/// Reads one frame from a stream.
pub fn read_frame<G: Group>(r: &mut impl std::io::Read) -> std::io::Result<Message<G>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Message::decode_body(&body).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn write_frame<G: Group>(w: &mut impl std::io::Write, msg: &Message<G>) -> std::io::Result<()> {
    w.write_all(&msg.encode())?;
    w.flush()
}
