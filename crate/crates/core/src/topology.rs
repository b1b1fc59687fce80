//! Deterministic spanning trees over a roster and the binomial swap schedule.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::merkle::{sha256, Digest};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("branching factor must be at least 1")]
    ZeroBranching,
    #[error("roster is empty")]
    Empty,
    #[error("root {root} is outside a roster of {n}")]
    RootOutOfRange { root: u32, n: u32 },
    #[error("the root {0} failed")]
    RootFailed(u32),
}

/// A rooted spanning tree over roster indices `0..n`.
///
/// Nodes excluded by [`TreeTopology::prune_and_reconnect`] stay in the index
/// space but have no parent, no children and are not live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    n: u32,
    branching: u32,
    root: u32,
    parent: Vec<Option<u32>>,
    children: Vec<Vec<u32>>,
    live: Vec<bool>,
    depth: Vec<u32>,
    descendants: Vec<u32>,
    height: Vec<u32>,
}

impl TreeTopology {
    /// Regular `branching`-ary tree in breadth-first order over
    /// `[root, 0, 1, ..]` (root listed once). The node at position `k` has
    /// children at positions `k*B + 1 ..= k*B + B`.
    pub fn bary(n: u32, branching: u32, root: u32) -> Result<Self, TopologyError> {
        if branching == 0 {
            return Err(TopologyError::ZeroBranching);
        }
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        if root >= n {
            return Err(TopologyError::RootOutOfRange { root, n });
        }
        let order: Vec<u32> = std::iter::once(root).chain((0..n).filter(|&i| i != root)).collect();
        let mut parent = vec![None; n as usize];
        let mut children = vec![Vec::new(); n as usize];
        for (pos, &node) in order.iter().enumerate().skip(1) {
            let p = order[(pos - 1) / branching as usize];
            parent[node as usize] = Some(p);
            children[p as usize].push(node);
        }
        let mut t = TreeTopology {
            n,
            branching,
            root,
            parent,
            children,
            live: vec![true; n as usize],
            depth: vec![0; n as usize],
            descendants: vec![0; n as usize],
            height: vec![0; n as usize],
        };
        t.recompute();
        Ok(t)
    }

    fn recompute(&mut self) {
        let order = self.bfs();
        self.depth.iter_mut().for_each(|d| *d = 0);
        for &v in &order {
            if let Some(p) = self.parent[v as usize] {
                self.depth[v as usize] = self.depth[p as usize] + 1;
            }
        }
        self.descendants.iter_mut().for_each(|d| *d = 0);
        self.height.iter_mut().for_each(|h| *h = 0);
        for &v in order.iter().rev() {
            let kids = &self.children[v as usize];
            self.descendants[v as usize] = 1 + kids.iter().map(|&c| self.descendants[c as usize]).sum::<u32>();
            self.height[v as usize] = kids.iter().map(|&c| self.height[c as usize] + 1).max().unwrap_or(0);
        }
    }

    /// Live nodes in breadth-first order from the root.
    pub fn bfs(&self) -> Vec<u32> {
        let mut out = vec![self.root];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.children[out[i] as usize]);
            i += 1;
        }
        out
    }

    /// Removes `failed` nodes; children of a failed node re-attach to its
    /// nearest live ancestor, appended after that ancestor's own children.
    pub fn prune_and_reconnect(&self, failed: &BTreeSet<u32>) -> Result<Self, TopologyError> {
        if failed.contains(&self.root) {
            return Err(TopologyError::RootFailed(self.root));
        }
        let mut t = self.clone();
        for v in t.bfs() {
            if !failed.contains(&v) {
                continue;
            }
            let anc = {
                let mut a = t.parent[v as usize].expect("non-root has a parent");
                while failed.contains(&a) {
                    a = t.parent[a as usize].expect("root is live");
                }
                a
            };
            let orphans = std::mem::take(&mut t.children[v as usize]);
            let p = t.parent[v as usize].take().expect("non-root has a parent");
            t.children[p as usize].retain(|&c| c != v);
            for &o in &orphans {
                t.parent[o as usize] = Some(anc);
            }
            t.children[anc as usize].extend(orphans);
            t.live[v as usize] = false;
        }
        t.recompute();
        Ok(t)
    }

    pub fn len(&self) -> u32 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn branching(&self) -> u32 {
        self.branching
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        self.parent[v as usize]
    }

    pub fn children(&self, v: u32) -> &[u32] {
        &self.children[v as usize]
    }

    pub fn is_live(&self, v: u32) -> bool {
        self.live[v as usize]
    }

    pub fn live_count(&self) -> u32 {
        self.live.iter().filter(|&&l| l).count() as u32
    }

    /// Tree depth: the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> u32 {
        self.height[self.root as usize]
    }

    pub fn node_depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    /// Longest path from `v` down to a leaf, in edges.
    pub fn height(&self, v: u32) -> u32 {
        self.height[v as usize]
    }

    /// Size of the subtree rooted at `v`, including `v`.
    pub fn descendant_count(&self, v: u32) -> u32 {
        self.descendants[v as usize]
    }

    /// Members of the subtree rooted at `v`, preorder.
    pub fn subtree(&self, v: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.descendants[v as usize] as usize);
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x as usize].iter().rev());
        }
        out
    }

    /// True when every interior node has exactly `branching` children and all
    /// leaves sit at the same depth.
    pub fn is_full(&self) -> bool {
        let d = self.depth();
        self.bfs().iter().all(|&v| {
            let k = self.children[v as usize].len() as u32;
            (k == 0 && self.depth[v as usize] == d) || k == self.branching
        })
    }

    /// Canonical encoding: `n || B || root || parent[i]` (u32 BE, none = MAX).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.n as usize);
        out.extend(self.n.to_be_bytes());
        out.extend(self.branching.to_be_bytes());
        out.extend(self.root.to_be_bytes());
        for p in &self.parent {
            out.extend(p.unwrap_or(u32::MAX).to_be_bytes());
        }
        // Child order matters for adopted orphans, so it is committed too.
        for v in self.bfs() {
            out.extend((self.children[v as usize].len() as u32).to_be_bytes());
            for c in &self.children[v as usize] {
                out.extend(c.to_be_bytes());
            }
        }
        out
    }

    pub fn digest(&self) -> Digest {
        sha256(&self.encode())
    }

    /// Indented text, one node per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((v, indent)) = stack.pop() {
            let _ = writeln!(
                s,
                "{:indent$}{} (subtree {})",
                "",
                v,
                self.descendants[v as usize],
                indent = indent * 2
            );
            for &c in self.children[v as usize].iter().rev() {
                stack.push((c, indent + 1));
            }
        }
        s
    }
}

/// Number of label bits for `n` witnesses.
pub fn label_bits(n: u32) -> u32 {
    if n <= 1 {
        0
    } else {
        32 - (n - 1).leading_zeros()
    }
}

/// Labels a node may swap with at `step`: equal above bit `step`, flipped at
/// bit `step`, anything below. Ascending.
pub fn swap_partners(label: u32, step: u32) -> Vec<u32> {
    let high = (label >> (step + 1)) << (step + 1);
    let flipped = high | ((!label) & (1 << step));
    (0..1u32 << step).map(|low| flipped | low).collect()
}

/// Runs the binomial swap schedule over `values` (one per label `0..n`),
/// returning what each node holds at the end. At each step a node swaps
/// with the first existing candidate in label order; if none exists that
/// half is empty and the step is skipped.
pub fn swap_forest_aggregate<T: Clone>(values: &[T], combine: impl Fn(&T, &T) -> T) -> Vec<T> {
    let n = values.len() as u32;
    let mut held: Vec<T> = values.to_vec();
    for step in 0..label_bits(n) {
        let snapshot = held.clone();
        for (label, slot) in held.iter_mut().enumerate() {
            if let Some(p) = swap_partners(label as u32, step).into_iter().find(|&p| p < n) {
                *slot = combine(&snapshot[label], &snapshot[p as usize]);
            }
        }
    }
    held
}
