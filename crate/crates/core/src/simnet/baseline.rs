//! Comparison schemes that collect individual Schnorr signatures: at the
//! leader directly, or up a tree with every ancestor checking its subtree.

use rand::{CryptoRng, RngCore};

use super::{Deployment, NetParams, NodeMetrics};
use crate::group::{schnorr_sign, schnorr_verify, Group, Signature};
use crate::topology::{TopologyError, TreeTopology};

/// Frame length, tag and round number.
const HEADER: u64 = 4 + 1 + 8;

fn request_bytes(statement: &[u8]) -> u64 {
    HEADER + 4 + statement.len() as u64
}

fn signature_list_bytes<G: Group>(count: u64) -> u64 {
    HEADER + 4 + count * (4 + 2 * G::SCALAR_LEN as u64)
}

/// One round of a baseline scheme.
#[derive(Debug, Clone)]
pub struct BaselineRound<G: Group> {
    pub latency_us: u64,
    pub metrics: Vec<NodeMetrics>,
    /// Individual signatures, by signer.
    pub signatures: Vec<Signature<G>>,
    /// Every signature passed verification.
    pub verified: bool,
}

impl<G: Group> BaselineRound<G> {
    pub fn root(&self) -> NodeMetrics {
        self.metrics[0]
    }

    pub fn totals(&self) -> NodeMetrics {
        let mut t = NodeMetrics::default();
        self.metrics.iter().for_each(|m| t.add(m));
        t
    }
}

fn sign_all<G: Group, R: RngCore + CryptoRng>(dep: &Deployment<G>, statement: &[u8], rng: &mut R) -> Vec<Signature<G>> {
    dep.keypairs.iter().map(|k| schnorr_sign(k, statement, rng)).collect()
}

fn all_verify<G: Group>(dep: &Deployment<G>, statement: &[u8], sigs: &[Signature<G>]) -> bool {
    dep.keypairs.iter().zip(sigs).all(|(k, s)| schnorr_verify(k.public(), statement, s))
}

/// Node 0 asks every other node for a signature and checks all of them,
/// its own included.
pub fn naive_round<G: Group, R: RngCore + CryptoRng>(
    dep: &Deployment<G>,
    statement: &[u8],
    params: &NetParams,
    rng: &mut R,
) -> BaselineRound<G> {
    let n = dep.keypairs.len() as u64;
    let u = params.unit_us;
    let signatures = sign_all(dep, statement, rng);
    let verified = all_verify(dep, statement, &signatures);
    let req = request_bytes(statement);
    let resp = signature_list_bytes::<G>(1);
    let mut metrics = vec![NodeMetrics::default(); n as usize];
    for m in metrics.iter_mut().skip(1) {
        *m = NodeMetrics { msgs_sent: 1, bytes_sent: resp, msgs_recv: 1, bytes_recv: req, compute: 1 };
    }
    metrics[0] = NodeMetrics {
        msgs_sent: n - 1,
        bytes_sent: (n - 1) * req,
        msgs_recv: n - 1,
        bytes_recv: (n - 1) * resp,
        compute: 1 + 2 * n,
    };
    let ready = if n > 1 { params.rtt_us + u } else { u };
    BaselineRound { latency_us: ready + 2 * u * n, metrics, signatures, verified }
}

/// Signatures travel up the tree; each node checks every signature from
/// its subtree before passing the list on.
pub fn ntree_round<G: Group, R: RngCore + CryptoRng>(
    dep: &Deployment<G>,
    branching: u32,
    statement: &[u8],
    params: &NetParams,
    rng: &mut R,
) -> Result<BaselineRound<G>, TopologyError> {
    let n = dep.keypairs.len() as u32;
    let tree = TreeTopology::bary(n, branching, 0)?;
    let u = params.unit_us;
    let hop = params.one_way_us();
    let signatures = sign_all(dep, statement, rng);
    // Each signature is checked once here; the cost model charges every
    // ancestor that checks it.
    let verified = all_verify(dep, statement, &signatures);
    let req = request_bytes(statement);
    let mut metrics = vec![NodeMetrics::default(); n as usize];
    let mut finish = vec![0u64; n as usize];
    for &v in tree.bfs().iter().rev() {
        let below = tree.descendant_count(v) as u64 - 1;
        let arrive = tree.node_depth(v) as u64 * hop;
        let kids_in = tree.children(v).iter().map(|&k| finish[k as usize] + hop).max().unwrap_or(0);
        finish[v as usize] = (arrive + u).max(kids_in) + 2 * u * below;
        let m = &mut metrics[v as usize];
        m.compute = 1 + 2 * below;
        for &k in tree.children(v) {
            let up = signature_list_bytes::<G>(tree.descendant_count(k) as u64);
            m.msgs_sent += 1;
            m.bytes_sent += req;
            m.msgs_recv += 1;
            m.bytes_recv += up;
        }
        if v != 0 {
            m.msgs_sent += 1;
            m.bytes_sent += signature_list_bytes::<G>(below + 1);
            m.msgs_recv += 1;
            m.bytes_recv += req;
        }
    }
    Ok(BaselineRound { latency_us: finish[0], metrics, signatures, verified })
}
