//! Deterministic discrete-event simulation of a cothority on a virtual
//! clock, plus the comparison schemes and CSV reporting.

pub mod baseline;
pub mod jvss;
pub mod report;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::engine::{
    Cothority, Effects, Event, Message, Node, RoundConfig, RoundFailure, RoundOutput, StatementSource, Timer,
    ValidationHook,
};
use crate::group::{prove_possession, Group, KeyPair};
use crate::roster::{RosterEntry, WitnessRoster};

/// Link and processing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetParams {
    /// Round-trip time of every link.
    pub rtt_us: u64,
    /// Simulated time per abstract compute unit.
    pub unit_us: u64,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams { rtt_us: 200_000, unit_us: 50 }
    }
}

impl NetParams {
    pub fn one_way_us(&self) -> u64 {
        self.rtt_us / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultPhase {
    /// Before the run starts.
    Start,
    /// On receiving the first announcement.
    Announce,
    /// On receiving the first challenge.
    Challenge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    /// Stops processing anything.
    Crash,
    /// Ignores messages of the phase's kind but stays up.
    Omit,
    /// Sends a corrupted commit (announce phase) or response (challenge
    /// phase); both when scripted from the start.
    Lie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Fault {
    pub node: u32,
    pub phase: FaultPhase,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeMetrics {
    pub msgs_sent: u64,
    pub bytes_sent: u64,
    pub msgs_recv: u64,
    pub bytes_recv: u64,
    pub compute: u64,
}

impl NodeMetrics {
    pub fn add(&mut self, o: &NodeMetrics) {
        self.msgs_sent += o.msgs_sent;
        self.bytes_sent += o.bytes_sent;
        self.msgs_recv += o.msgs_recv;
        self.bytes_recv += o.bytes_recv;
        self.compute += o.compute;
    }
}

/// Key pairs and roster for a simulated deployment; index 0 leads view 0.
#[derive(Debug, Clone)]
pub struct Deployment<G: Group> {
    pub keypairs: Vec<KeyPair<G>>,
    pub roster: WitnessRoster<G>,
}

impl<G: Group> Deployment<G> {
    pub fn generate(n: u32, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keypairs: Vec<KeyPair<G>> = (0..n).map(|_| KeyPair::generate(&mut rng)).collect();
        let entries = keypairs
            .iter()
            .enumerate()
            .map(|(i, k)| RosterEntry::new(format!("w{i}"), prove_possession(k, &mut rng)))
            .collect();
        let roster = WitnessRoster::new(1, entries, 0).expect("generated roster is valid");
        Deployment { keypairs, roster }
    }

    pub fn cothority(&self, branching: u32) -> Arc<Cothority<G>> {
        Arc::new(Cothority::new(&self.roster, branching))
    }

    /// One engine node per key, each with its own hook and nonce seed.
    pub fn nodes(
        &self,
        config: &RoundConfig,
        seed: u64,
        mut hook: impl FnMut(u32) -> Box<dyn ValidationHook>,
    ) -> Vec<Node<G>> {
        let co = self.cothority(config.branching);
        self.keypairs
            .iter()
            .enumerate()
            .map(|(i, kp)| {
                let i = i as u32;
                let node_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1);
                Node::new(i, *kp, co.clone(), config.clone(), hook(i), node_seed)
            })
            .collect()
    }
}

enum Item<G: Group> {
    Deliver { to: u32, from: u32, msg: Message<G>, bytes: u64 },
    Timer { node: u32, timer: Timer },
}

struct Queued<G: Group> {
    time: u64,
    seq: u64,
    item: Item<G>,
}

impl<G: Group> PartialEq for Queued<G> {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}

impl<G: Group> Eq for Queued<G> {}

impl<G: Group> PartialOrd for Queued<G> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl<G: Group> Ord for Queued<G> {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(o.time, o.seq))
    }
}

/// Result of [`Simulator::run_round`].
#[derive(Debug, Clone)]
pub struct RoundReport<G: Group> {
    pub outcome: Result<RoundOutput<G>, RoundFailure>,
    pub latency_us: u64,
    pub root: NodeMetrics,
    pub totals: NodeMetrics,
}

pub struct Simulator<G: Group> {
    nodes: Vec<Node<G>>,
    params: NetParams,
    queue: BinaryHeap<Reverse<Queued<G>>>,
    seq: u64,
    now: u64,
    busy: Vec<u64>,
    metrics: Vec<NodeMetrics>,
    faults: Vec<Fault>,
    crashed: Vec<bool>,
    events: Vec<(u64, u32, Event<G>)>,
    in_flight: usize,
}

impl<G: Group> Simulator<G> {
    pub fn new(nodes: Vec<Node<G>>, params: NetParams) -> Self {
        let n = nodes.len();
        Simulator {
            nodes,
            params,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            busy: vec![0; n],
            metrics: vec![NodeMetrics::default(); n],
            faults: Vec::new(),
            crashed: vec![false; n],
            events: Vec::new(),
            in_flight: 0,
        }
    }

    pub fn add_fault(&mut self, f: Fault) {
        if f.phase == FaultPhase::Start && f.behavior != Behavior::Lie {
            self.crashed[f.node as usize] = true;
        }
        self.faults.push(f);
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: u32) -> &Node<G> {
        &self.nodes[i as usize]
    }

    pub fn node_mut(&mut self, i: u32) -> &mut Node<G> {
        &mut self.nodes[i as usize]
    }

    pub fn is_crashed(&self, i: u32) -> bool {
        self.crashed[i as usize]
    }

    /// Every event so far as `(time, node, event)`.
    pub fn events(&self) -> &[(u64, u32, Event<G>)] {
        &self.events
    }

    pub fn metrics(&self) -> &[NodeMetrics] {
        &self.metrics
    }

    pub fn reset_metrics(&mut self) {
        self.metrics.iter_mut().for_each(|m| *m = NodeMetrics::default());
    }

    pub fn totals(&self) -> NodeMetrics {
        let mut t = NodeMetrics::default();
        self.metrics.iter().for_each(|m| t.add(m));
        t
    }

    /// Arms every live node's timers.
    pub fn start_all(&mut self) {
        for i in 0..self.nodes.len() as u32 {
            if !self.crashed[i as usize] {
                let mut fx = Effects::new();
                self.nodes[i as usize].start(&mut fx);
                self.apply(i, self.now, fx);
            }
        }
    }

    fn push(&mut self, time: u64, item: Item<G>) {
        self.seq += 1;
        self.queue.push(Reverse(Queued { time, seq: self.seq, item }));
    }

    fn lies(&self, node: u32, phase: FaultPhase) -> bool {
        self.faults
            .iter()
            .any(|f| f.node == node && f.behavior == Behavior::Lie && (f.phase == phase || f.phase == FaultPhase::Start))
    }

    fn apply(&mut self, node: u32, start: u64, fx: Effects<G>) {
        let finish = start + fx.compute * self.params.unit_us;
        let n = node as usize;
        self.busy[n] = finish;
        self.metrics[n].compute += fx.compute;
        for (to, mut msg) in fx.sends {
            match &mut msg {
                Message::Commit(c) if self.lies(node, FaultPhase::Announce) => c.agg = G::op(&c.agg, &G::generator()),
                Message::Response(r) if self.lies(node, FaultPhase::Challenge) => {
                    r.response = G::scalar_add(&r.response, &G::scalar_one())
                }
                _ => {}
            }
            let bytes = msg.encoded_len() as u64;
            self.metrics[n].msgs_sent += 1;
            self.metrics[n].bytes_sent += bytes;
            self.in_flight += 1;
            self.push(finish + self.params.one_way_us(), Item::Deliver { to, from: node, msg, bytes });
        }
        for (delay, timer) in fx.timers {
            self.push(finish + delay, Item::Timer { node, timer });
        }
        self.events.extend(fx.events.into_iter().map(|e| (finish, node, e)));
    }

    /// Whether a fault script swallows this delivery.
    fn intercept(&mut self, to: u32, msg: &Message<G>) -> bool {
        let phase = match msg {
            Message::Announce(_) => FaultPhase::Announce,
            Message::Challenge(_) => FaultPhase::Challenge,
            _ => return false,
        };
        let mut drop = false;
        for f in self.faults.iter().filter(|f| f.node == to && f.phase == phase) {
            match f.behavior {
                Behavior::Crash => {
                    self.crashed[to as usize] = true;
                    drop = true;
                }
                Behavior::Omit => drop = true,
                Behavior::Lie => {}
            }
        }
        drop
    }

    /// Processes the next queued item; false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(q)) = self.queue.pop() else { return false };
        self.now = self.now.max(q.time);
        match q.item {
            Item::Deliver { to, from, msg, bytes } => {
                self.in_flight -= 1;
                let t = to as usize;
                self.metrics[t].msgs_recv += 1;
                self.metrics[t].bytes_recv += bytes;
                if self.crashed[t] || self.intercept(to, &msg) {
                    return true;
                }
                let start = q.time.max(self.busy[t]);
                let mut fx = Effects::new();
                self.nodes[t].handle(start, from, msg, &mut fx);
                self.apply(to, start, fx);
            }
            Item::Timer { node, timer } => {
                let n = node as usize;
                if self.crashed[n] {
                    return true;
                }
                let start = q.time.max(self.busy[n]);
                let mut fx = Effects::new();
                self.nodes[n].on_timer(start, timer, &mut fx);
                self.apply(node, start, fx);
            }
        }
        true
    }

    fn next_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(q)| q.time)
    }

    /// Runs until `stop` matches a new event or the clock would pass
    /// `deadline`; returns the index of the matching event.
    pub fn run_until(&mut self, deadline: u64, stop: impl FnMut(u32, &Event<G>) -> bool) -> Option<usize> {
        self.run_until_from(self.events.len(), deadline, stop)
    }

    fn run_until_from(
        &mut self,
        mut seen: usize,
        deadline: u64,
        mut stop: impl FnMut(u32, &Event<G>) -> bool,
    ) -> Option<usize> {
        while seen < self.events.len() {
            let (_, node, e) = &self.events[seen];
            if stop(*node, e) {
                return Some(seen);
            }
            seen += 1;
        }
        while self.next_time().is_some_and(|t| t <= deadline) {
            self.step();
            while seen < self.events.len() {
                let (_, node, e) = &self.events[seen];
                if stop(*node, e) {
                    return Some(seen);
                }
                seen += 1;
            }
        }
        self.now = self.now.max(deadline);
        None
    }

    /// Delivers every message in flight, leaving only timers queued.
    pub fn settle(&mut self, deadline: u64) {
        while self.in_flight > 0 && self.next_time().is_some_and(|t| t <= deadline) {
            self.step();
        }
    }

    /// Starts a round at `leader` and runs it to completion, failure or
    /// `limit_us` of simulated time.
    pub fn run_round(&mut self, leader: u32, source: StatementSource, limit_us: u64) -> RoundReport<G> {
        self.reset_metrics();
        let t0 = self.now;
        let deadline = t0 + limit_us;
        let report = |sim: &Self, outcome, at: u64| RoundReport {
            outcome,
            latency_us: at - t0,
            root: sim.metrics[leader as usize],
            totals: sim.totals(),
        };
        if self.crashed[leader as usize] {
            self.run_until(deadline, |_, _| false);
            return report(self, Err(RoundFailure::Timeout), deadline);
        }
        let l = leader as usize;
        let start = t0.max(self.busy[l]);
        let mut fx = Effects::new();
        if let Err(e) = self.nodes[l].start_round(start, source, &mut fx) {
            return report(self, Err(e), t0);
        }
        let seen = self.events.len();
        self.apply(leader, start, fx);
        let done = self.run_until_from(seen, deadline, |n, e| {
            n == leader && matches!(e, Event::RoundComplete(_) | Event::RoundFailed { .. })
        });
        let Some(i) = done else {
            return report(self, Err(RoundFailure::Timeout), deadline);
        };
        let (at, _, event) = &self.events[i];
        let outcome = match event {
            Event::RoundComplete(out) => Ok(out.clone()),
            Event::RoundFailed { reason, .. } => Err(reason.clone()),
            _ => unreachable!("filtered above"),
        };
        let r = report(self, outcome, *at);
        self.settle(deadline);
        r
    }
}

/// Closed-form failure-free latency: two tree traversals of `depth` hops
/// each way.
pub fn cosi_latency_model(depth: u32, params: &NetParams) -> u64 {
    2 * depth as u64 * params.rtt_us
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::hook::{AcceptAll, HookSpec};
    use crate::engine::Binding;
    use crate::group::{Ristretto255, ToyGroup};
    use crate::multisig::{verify_collective, Mode};
    use crate::participation::Predicate;

    fn statement(s: &'static [u8]) -> StatementSource {
        Box::new(move |_| s.to_vec())
    }

    fn sim<G: Group>(n: u32, b: u32, mode: Mode) -> (Deployment<G>, Simulator<G>) {
        let dep = Deployment::<G>::generate(n, 7);
        let cfg = RoundConfig { mode, branching: b, ..RoundConfig::default() };
        let nodes = dep.nodes(&cfg, 7, |_| Box::new(AcceptAll));
        (dep, Simulator::new(nodes, NetParams::default()))
    }

    fn verifies<G: Group>(dep: &Deployment<G>, out: &RoundOutput<G>) -> bool {
        let r = &dep.roster;
        verify_collective(&r.keys(), &r.weights(), &out.statement, &out.signature, &Predicate::Threshold(1)).is_ok()
    }

    #[test]
    fn three_toy_witnesses() {
        let (dep, mut s) = sim::<ToyGroup>(3, 2, Mode::Restart);
        let rep = s.run_round(0, statement(b"hello"), 10_000_000);
        let out = rep.outcome.unwrap();
        assert!(verifies(&dep, &out));
        assert_eq!(out.signature.participation.present_count(), 3);
        // 4 one-way hops at depth 1, plus compute on the critical path.
        assert!(rep.latency_us >= 400_000 && rep.latency_us < 401_000, "{}", rep.latency_us);
        let t = rep.totals;
        assert_eq!(t.bytes_sent, t.bytes_recv);
        assert_eq!(rep.root.msgs_sent, 4);
        assert_eq!(rep.root.msgs_recv, 4);
    }

    #[test]
    fn restart_after_crash_before_commit() {
        let (dep, mut s) = sim::<Ristretto255>(7, 2, Mode::Restart);
        s.add_fault(Fault { node: 3, phase: FaultPhase::Announce, behavior: Behavior::Crash });
        let out = s.run_round(0, statement(b"x"), 30_000_000).outcome.unwrap();
        assert!(verifies(&dep, &out));
        assert_eq!(out.restarts, 1);
        assert_eq!(out.signature.participation.present_count(), 6);
        assert!(!out.signature.participation.is_present(3));
    }

    #[test]
    fn no_restart_single_exception() {
        let (dep, mut s) = sim::<Ristretto255>(7, 2, Mode::NoRestart);
        s.add_fault(Fault { node: 1, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
        let out = s.run_round(0, statement(b"x"), 30_000_000).outcome.unwrap();
        assert!(verifies(&dep, &out));
        assert_eq!(out.restarts, 0);
        let exc: Vec<u32> = out.signature.exceptions.iter().map(|e| e.index).collect();
        assert_eq!(exc, vec![1]);
        assert_eq!(out.signature.participation.present_count(), 6);
    }

    #[test]
    fn lying_child_is_reported() {
        let (dep, mut s) = sim::<Ristretto255>(7, 2, Mode::Restart);
        s.add_fault(Fault { node: 2, phase: FaultPhase::Challenge, behavior: Behavior::Lie });
        let out = s.run_round(0, statement(b"x"), 30_000_000).outcome.unwrap();
        assert!(verifies(&dep, &out));
        assert!(s.events().iter().any(|(_, n, e)| *n == 0 && matches!(e, Event::Misbehavior { node: 2, .. })));
        assert!(!out.signature.participation.is_present(2));
        assert_eq!(out.failed, vec![2]);
    }

    #[test]
    fn crashed_leader_reports_failure() {
        let (_, mut s) = sim::<ToyGroup>(3, 2, Mode::Restart);
        s.add_fault(Fault { node: 0, phase: FaultPhase::Start, behavior: Behavior::Crash });
        assert!(matches!(s.run_round(0, statement(b"x"), 5_000_000).outcome, Err(RoundFailure::Timeout)));
    }

    #[test]
    fn refusal_counts_as_absence() {
        let dep = Deployment::<Ristretto255>::generate(4, 3);
        let cfg = RoundConfig { branching: 2, binding: Binding::Announce, ..RoundConfig::default() };
        let nodes = dep.nodes(&cfg, 3, |i| if i == 2 { HookSpec::HashChain.build() } else { Box::new(AcceptAll) });
        let mut s = Simulator::new(nodes, NetParams::default());
        let out = s.run_round(0, statement(b"not a log record at all, long enough"), 30_000_000).outcome.unwrap();
        assert!(!out.signature.participation.is_present(2));
        assert_eq!(out.refused, vec![2]);
        assert!(s.events().iter().any(|(_, n, e)| *n == 2 && matches!(e, Event::Refused { .. })));
    }
}
