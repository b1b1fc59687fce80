//! Deterministic leader schedule and view-change vote counting.

use std::collections::{BTreeMap, BTreeSet};

use crate::merkle::Digest;

const TAG_VIEW: &[u8] = b"cosi-v1/view-change\0";

/// Bytes each voter signs: `tag || view (u64 BE) || roster digest`.
pub fn vote_statement(view: u64, roster_digest: &Digest) -> Vec<u8> {
    let mut s = TAG_VIEW.to_vec();
    s.extend(view.to_be_bytes());
    s.extend_from_slice(roster_digest);
    s
}

/// `2f + 1` with `f = floor((n - 1) / 3)`.
pub fn quorum(n: u32) -> u32 {
    2 * (n.saturating_sub(1) / 3) + 1
}

/// Leader of `view`, counting from the roster's designated leader.
pub fn leader_of(view: u64, base_leader: u32, n: u32) -> u32 {
    ((base_leader as u64 + view) % n as u64) as u32
}

#[derive(Debug, Clone)]
pub struct ViewState {
    view: u64,
    threshold: u32,
    votes: BTreeMap<u64, BTreeSet<u32>>,
}

impl ViewState {
    pub fn new(threshold: u32) -> Self {
        ViewState { view: 0, threshold, votes: BTreeMap::new() }
    }

    pub fn current(&self) -> u64 {
        self.view
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn votes_for(&self, view: u64) -> usize {
        self.votes.get(&view).map_or(0, |s| s.len())
    }

    /// Counts a verified vote; returns the view it activated, if any.
    pub fn record(&mut self, view: u64, signer: u32) -> Option<u64> {
        if view <= self.view {
            return None;
        }
        let set = self.votes.entry(view).or_default();
        set.insert(signer);
        if set.len() as u32 >= self.threshold {
            self.view = view;
            self.votes = self.votes.split_off(&(view + 1));
            Some(view)
        } else {
            None
        }
    }
}
