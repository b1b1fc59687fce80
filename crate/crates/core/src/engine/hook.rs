//! Statement validation run by witnesses before they cosign.

use crate::merkle::{sha256, Digest};
use crate::timestamp::TimestampRecord;

/// What a witness knows when it is asked to cosign.
#[derive(Debug, Clone, Copy)]
pub struct HookContext {
    pub round: u64,
    /// The witness's own clock, in seconds.
    pub now_secs: u64,
}

pub trait ValidationHook: Send {
    /// Whether to cosign `statement`. Rejection is a value, not an error.
    fn validate(&mut self, statement: &[u8], ctx: &HookContext) -> bool;

    /// Called when a statement this witness saw was collectively signed.
    fn signed(&mut self, _statement: &[u8]) {}
}

pub struct AcceptAll;

impl ValidationHook for AcceptAll {
    fn validate(&mut self, _: &[u8], _: &HookContext) -> bool {
        true
    }
}

/// Accepts timestamp records whose wall time is within `skew_secs` of the
/// witness clock.
pub struct TimestampWindow {
    pub skew_secs: u64,
}

impl ValidationHook for TimestampWindow {
    fn validate(&mut self, statement: &[u8], ctx: &HookContext) -> bool {
        match TimestampRecord::decode(statement) {
            Ok(rec) => rec.wall_time.abs_diff(ctx.now_secs) <= self.skew_secs,
            Err(_) => false,
        }
    }
}

/// A hash-chained log record: `sequence (u64 BE) || prev-hash (32) || payload`.
pub fn log_record(sequence: u64, prev: &Digest, payload: &[u8]) -> Vec<u8> {
    let mut out = sequence.to_be_bytes().to_vec();
    out.extend_from_slice(prev);
    out.extend_from_slice(payload);
    out
}

/// Accepts only the log record that extends the local head by one.
#[derive(Debug, Clone, Default)]
pub struct HashChain {
    /// Sequence number and hash of the last signed record.
    pub head: Option<(u64, Digest)>,
}

impl HashChain {
    fn parse(statement: &[u8]) -> Option<(u64, Digest)> {
        if statement.len() < 40 {
            return None;
        }
        let seq = u64::from_be_bytes(statement[..8].try_into().ok()?);
        Some((seq, statement[8..40].try_into().ok()?))
    }
}

impl ValidationHook for HashChain {
    fn validate(&mut self, statement: &[u8], _: &HookContext) -> bool {
        let Some((seq, prev)) = Self::parse(statement) else { return false };
        match self.head {
            None => seq == 0 && prev == [0; 32],
            Some((head_seq, head_hash)) => seq == head_seq + 1 && prev == head_hash,
        }
    }

    fn signed(&mut self, statement: &[u8]) {
        if let Some((seq, _)) = Self::parse(statement) {
            if self.validate(statement, &HookContext { round: 0, now_secs: 0 }) {
                self.head = Some((seq, sha256(statement)));
            }
        }
    }
}

/// Hook selection for configuration files and flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookSpec {
    AcceptAll,
    TimestampWindow { skew_secs: u64 },
    HashChain,
}

impl HookSpec {
    pub fn build(self) -> Box<dyn ValidationHook> {
        match self {
            HookSpec::AcceptAll => Box::new(AcceptAll),
            HookSpec::TimestampWindow { skew_secs } => Box::new(TimestampWindow { skew_secs }),
            HookSpec::HashChain => Box::new(HashChain::default()),
        }
    }
}
