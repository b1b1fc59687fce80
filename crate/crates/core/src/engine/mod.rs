//! Message-driven leader and witness state machines for collective signing
//! rounds, including failure handling and view changes.
//!
//! A [`Node`] is purely reactive: the host feeds it messages and expired
//! timers, and it returns sends, timer requests, compute costs and events in
//! an [`Effects`] value. The simulator and the TCP runner are two such hosts.

pub mod hook;
pub mod message;
pub mod view;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::group::{sign_tagged, verify_tagged, Group, KeyPair};
use crate::merkle::{self, Digest, InclusionProof};
use crate::multisig::{
    self, collective_challenge, commit_items, commit_leaf, response_share, CollectiveSignature, CommitException,
    Mode, VerifyError,
};
use crate::participation::{ParticipationSet, Predicate};
use crate::roster::WitnessRoster;
use crate::topology::{TopologyError, TreeTopology};

pub use hook::{HookContext, HookSpec, ValidationHook};
pub use message::{Announce, Challenge, Commit, Done, KidCommit, Message, Response, ViewChange};
pub use view::{leader_of, quorum, ViewState};

const TAG_VIEW_VOTE: &[u8] = b"cosi-v1/view-vote\0";

/// When the statement reaches the witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    /// With the announcement, before witnesses commit.
    Announce,
    /// With the challenge, so the leader can fold in the commit-phase
    /// batch roots.
    Challenge,
}

#[derive(Debug, Clone)]
pub struct RoundConfig {
    pub mode: Mode,
    pub binding: Binding,
    pub branching: u32,
    /// Per-level timeout unit in microseconds; a node of height `h` waits
    /// about `h` units per phase.
    pub hop_timeout_us: u64,
    pub max_restarts: u32,
    /// The leader abandons a round with fewer participants.
    pub min_participants: u32,
    /// Witnesses vote to replace a leader silent for this long.
    pub view_timeout_us: Option<u64>,
    /// Votes needed to change view; `None` means `2f + 1`.
    pub view_quorum: Option<u32>,
    /// Send the final signature back down the tree.
    pub broadcast_done: bool,
    /// Gather per-witness batch roots during the commit phase.
    pub collect: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            mode: Mode::Restart,
            binding: Binding::Announce,
            branching: 8,
            hop_timeout_us: 4 * 200_000,
            max_restarts: 3,
            min_participants: 1,
            view_timeout_us: None,
            view_quorum: None,
            broadcast_done: false,
            collect: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoundFailure {
    #[error("gave up after {0} restarts")]
    TooManyRestarts(u32),
    #[error("only {present} participants, {required} required")]
    BelowMinimum { present: u32, required: u32 },
    #[error("round output does not verify: {0}")]
    InvalidOutput(VerifyError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("node is not the leader of the current view")]
    NotLeader,
    #[error("a round is already running")]
    Busy,
    #[error("round timed out")]
    Timeout,
}

/// Output of a successful round.
#[derive(Debug, Clone)]
pub struct RoundOutput<G: Group> {
    pub round: u64,
    pub statement: Vec<u8>,
    pub signature: CollectiveSignature<G>,
    pub restarts: u32,
    pub failed: Vec<u32>,
    pub refused: Vec<u32>,
}

#[derive(Debug, Clone)]
pub enum Event<G: Group> {
    RoundComplete(RoundOutput<G>),
    RoundFailed { round: u64, reason: RoundFailure },
    Restarted { from: u64, to: u64, excluded: Vec<u32> },
    /// This node declined to cosign.
    Refused { round: u64 },
    /// A child sent a response that does not verify.
    Misbehavior { round: u64, node: u32 },
    ViewActivated { view: u64, leader: u32 },
    /// The round that carried this node's local batch was signed.
    BatchSigned {
        round: u64,
        statement: Vec<u8>,
        signature: CollectiveSignature<G>,
        items: Vec<(u64, Digest)>,
        proofs: Vec<InclusionProof>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timer {
    Commit { round: u64, stage: u8 },
    Response { round: u64, stage: u8 },
    Liveness { epoch: u64 },
}

/// What a node wants done after handling one input.
#[derive(Debug)]
pub struct Effects<G: Group> {
    pub sends: Vec<(u32, Message<G>)>,
    /// Delay in microseconds and the timer to fire.
    pub timers: Vec<(u64, Timer)>,
    /// Abstract compute units spent.
    pub compute: u64,
    pub events: Vec<Event<G>>,
}

impl<G: Group> Default for Effects<G> {
    fn default() -> Self {
        Effects { sends: Vec::new(), timers: Vec::new(), compute: 0, events: Vec::new() }
    }
}

impl<G: Group> Effects<G> {
    pub fn new() -> Self {
        Self::default()
    }

    fn send(&mut self, to: u32, msg: Message<G>) {
        self.sends.push((to, msg));
    }
}

/// A spanning tree for one round plus per-subtree aggregate keys.
#[derive(Debug)]
pub struct TopoInfo<G: Group> {
    pub tree: TreeTopology,
    pub digest: Digest,
    subtree_key: Vec<G::Element>,
}

impl<G: Group> TopoInfo<G> {
    fn new(tree: TreeTopology, keys: &[G::Element]) -> Self {
        let mut subtree_key = vec![G::identity(); keys.len()];
        for &v in tree.bfs().iter().rev() {
            let mut k = keys[v as usize];
            for &c in tree.children(v) {
                k = G::op(&k, &subtree_key[c as usize]);
            }
            subtree_key[v as usize] = k;
        }
        TopoInfo { digest: tree.digest(), tree, subtree_key }
    }

    pub fn subtree_key(&self, v: u32) -> G::Element {
        self.subtree_key[v as usize]
    }

    /// Whether `x` is in the subtree rooted at `root`.
    pub fn in_subtree(&self, root: u32, x: u32) -> bool {
        let mut v = Some(x);
        while let Some(u) = v {
            if u == root {
                return true;
            }
            v = self.tree.parent(u);
        }
        false
    }

    fn is_ancestor(&self, a: u32, x: u32) -> bool {
        a != x && self.in_subtree(a, x)
    }
}

/// Trees by `(leader, excluded)`.
type TopoCache<G> = Mutex<HashMap<(u32, Vec<u32>), Arc<TopoInfo<G>>>>;

/// Roster facts every node of a deployment shares.
#[derive(Debug)]
pub struct Cothority<G: Group> {
    keys: Vec<G::Element>,
    weights: Vec<u64>,
    base_leader: u32,
    digest: Digest,
    branching: u32,
    cache: TopoCache<G>,
}

impl<G: Group> Cothority<G> {
    pub fn new(roster: &WitnessRoster<G>, branching: u32) -> Self {
        Self::from_parts(roster.keys(), roster.weights(), roster.leader(), roster.digest(), branching)
    }

    pub fn from_parts(
        keys: Vec<G::Element>,
        weights: Vec<u64>,
        base_leader: u32,
        digest: Digest,
        branching: u32,
    ) -> Self {
        Cothority { keys, weights, base_leader, digest, branching, cache: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> u32 {
        self.keys.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[G::Element] {
        &self.keys
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn leader_of(&self, view: u64) -> u32 {
        leader_of(view, self.base_leader, self.len())
    }

    /// Tree rooted at `leader` with `excluded` pruned, cached.
    pub fn topology(&self, leader: u32, excluded: &[u32]) -> Result<Arc<TopoInfo<G>>, TopologyError> {
        let key = (leader, excluded.to_vec());
        if let Some(t) = self.cache.lock().expect("topology cache").get(&key) {
            return Ok(t.clone());
        }
        let base = TreeTopology::bary(self.len(), self.branching, leader)?;
        let tree = if excluded.is_empty() {
            base
        } else {
            base.prune_and_reconnect(&excluded.iter().copied().collect())?
        };
        let info = Arc::new(TopoInfo::new(tree, &self.keys));
        self.cache.lock().expect("topology cache").insert(key, info.clone());
        Ok(info)
    }
}

/// Produces the statement to sign, given the round's batch root when one
/// was collected.
pub type StatementSource = Box<dyn FnMut(Option<Digest>) -> Vec<u8> + Send>;

/// Local batch of `(ticket, digest)` items a witness contributes to rounds.
pub type BatchQueue = Arc<Mutex<Vec<(u64, Digest)>>>;

/// Time budget for a subtree of height `h` to finish one phase.
fn budget(mode: Mode, h: i64, hop: u64) -> u64 {
    if h <= 0 {
        return 0;
    }
    match mode {
        Mode::Restart => hop + budget(mode, h - 1, hop),
        Mode::NoRestart => 2 * hop + budget(mode, h - 1, hop) + budget(mode, h - 2, hop),
    }
}

fn stage_wait(mode: Mode, h: u32, hop: u64, stage: u8) -> u64 {
    hop + budget(mode, h as i64 - 1 - stage as i64, hop)
}

#[derive(Debug, Clone)]
struct KidState<G: Group> {
    agg: G::Element,
    hash: Option<Digest>,
    own: Option<G::Element>,
    kids: Vec<KidCommit<G>>,
    absent: Vec<u32>,
    batch_root: Option<Digest>,
    local_batch: Option<Digest>,
}

/// Someone whose response this node aggregates.
#[derive(Debug, Clone)]
struct Target<G: Group> {
    agg: G::Element,
    hash: Option<Digest>,
    own: Option<G::Element>,
    /// `None` when the target's children are unknown.
    kids: Option<Vec<KidCommit<G>>>,
    absent: Vec<u32>,
    local_batch: Option<Digest>,
    proof: InclusionProof,
    batch_proof: Option<InclusionProof>,
}

#[derive(Debug, Clone)]
struct ChallengeInfo<G: Group> {
    c: G::Scalar,
    agg_commit: G::Element,
    commit_root: Option<Digest>,
    proof: InclusionProof,
    batch: Option<(Digest, InclusionProof)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Announced,
    Committed,
    Challenged,
    Responded,
    Done,
}

struct RoundState<G: Group> {
    announce: Announce,
    parent: Option<u32>,
    topo: Arc<TopoInfo<G>>,
    phase: Phase,
    statement: Option<Vec<u8>>,
    refused: bool,
    nonce: Option<G::Scalar>,
    own: Option<G::Element>,
    order: Vec<u32>,
    waiting: BTreeSet<u32>,
    commit_stage: u8,
    kids: BTreeMap<u32, KidState<G>>,
    absent: BTreeSet<u32>,
    failed: BTreeSet<u32>,
    refused_set: BTreeSet<u32>,
    commit_msg: Option<Commit<G>>,
    agg: G::Element,
    items: Vec<Digest>,
    item_pos: BTreeMap<u32, usize>,
    batch_local: Vec<(u64, Digest)>,
    local_root: Option<Digest>,
    batch_items: Vec<Digest>,
    batch_pos: BTreeMap<u32, usize>,
    ch: Option<ChallengeInfo<G>>,
    targets: BTreeMap<u32, Target<G>>,
    resp_waiting: BTreeSet<u32>,
    resp_stage: u8,
    r_acc: G::Scalar,
    exceptions: Vec<CommitException<G>>,
    missing: BTreeSet<u32>,
    unresolved: BTreeSet<u32>,
    resp_refused: BTreeSet<u32>,
    response_msg: Option<Response<G>>,
}

impl<G: Group> RoundState<G> {
    fn mode(&self) -> Mode {
        self.announce.mode
    }

    fn subtree_members(&self, root: u32) -> Vec<u32> {
        self.topo.tree.subtree(root)
    }

    /// Members of `root`'s subtree that committed, per `absent`.
    fn committed_members(&self, root: u32, absent: &[u32]) -> Vec<u32> {
        let absent: BTreeSet<u32> = absent.iter().copied().collect();
        self.subtree_members(root).into_iter().filter(|m| !absent.contains(m)).collect()
    }
}

struct LeaderState {
    source: StatementSource,
    restarts: u32,
    excluded: BTreeSet<u32>,
    failed: BTreeSet<u32>,
    refused: BTreeSet<u32>,
    round: u64,
}

/// One cothority member, acting as leader or witness per the current view.
pub struct Node<G: Group> {
    index: u32,
    keypair: KeyPair<G>,
    co: Arc<Cothority<G>>,
    config: RoundConfig,
    hook: Box<dyn ValidationHook>,
    rng: ChaCha20Rng,
    clock_epoch_secs: u64,
    clock_skew_secs: i64,
    view: ViewState,
    voted: u64,
    last_round: u64,
    rounds: BTreeMap<u64, RoundState<G>>,
    leader: Option<LeaderState>,
    batch: Option<BatchQueue>,
    nonce_log: Vec<(u64, G::Element, G::Scalar)>,
    liveness_epoch: u64,
}

impl<G: Group> Node<G> {
    pub fn new(
        index: u32,
        keypair: KeyPair<G>,
        co: Arc<Cothority<G>>,
        config: RoundConfig,
        hook: Box<dyn ValidationHook>,
        seed: u64,
    ) -> Self {
        let threshold = config.view_quorum.unwrap_or_else(|| quorum(co.len()));
        Node {
            index,
            keypair,
            co,
            config,
            hook,
            rng: ChaCha20Rng::seed_from_u64(seed),
            clock_epoch_secs: 0,
            clock_skew_secs: 0,
            view: ViewState::new(threshold),
            voted: 0,
            last_round: 0,
            rounds: BTreeMap::new(),
            leader: None,
            batch: None,
            nonce_log: Vec::new(),
            liveness_epoch: 0,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn view(&self) -> u64 {
        self.view.current()
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    pub fn current_leader(&self) -> u32 {
        self.co.leader_of(self.view.current())
    }

    pub fn is_leader(&self) -> bool {
        self.current_leader() == self.index
    }

    /// Sets the wall clock: host time 0 corresponds to `epoch_secs`, and
    /// this node's clock runs `skew_secs` off it.
    pub fn set_clock(&mut self, epoch_secs: u64, skew_secs: i64) {
        self.clock_epoch_secs = epoch_secs;
        self.clock_skew_secs = skew_secs;
    }

    pub fn now_secs(&self, now_us: u64) -> u64 {
        (self.clock_epoch_secs as i64 + (now_us / 1_000_000) as i64 + self.clock_skew_secs).max(0) as u64
    }

    /// Replaces the nonce generator seed; hosts outside the simulator
    /// should pass fresh OS randomness.
    pub fn reseed(&mut self, seed: [u8; 32]) {
        self.rng = ChaCha20Rng::from_seed(seed);
    }

    pub fn set_batch(&mut self, queue: BatchQueue) {
        self.batch = Some(queue);
    }

    /// `(round, commit, challenge)` for every response this node produced.
    pub fn nonce_log(&self) -> &[(u64, G::Element, G::Scalar)] {
        &self.nonce_log
    }

    /// Arms the leader-liveness timer.
    pub fn start(&mut self, fx: &mut Effects<G>) {
        self.arm_liveness(fx);
    }

    fn arm_liveness(&mut self, fx: &mut Effects<G>) {
        if let Some(t) = self.config.view_timeout_us {
            self.liveness_epoch += 1;
            fx.timers.push((t, Timer::Liveness { epoch: self.liveness_epoch }));
        }
    }

    /// Starts a round as leader of the current view.
    pub fn start_round(&mut self, now: u64, source: StatementSource, fx: &mut Effects<G>) -> Result<u64, RoundFailure> {
        if !self.is_leader() {
            return Err(RoundFailure::NotLeader);
        }
        if self.leader.is_some() {
            return Err(RoundFailure::Busy);
        }
        self.leader = Some(LeaderState {
            source,
            restarts: 0,
            excluded: BTreeSet::new(),
            failed: BTreeSet::new(),
            refused: BTreeSet::new(),
            round: 0,
        });
        self.leader_attempt(now, fx)
    }

    fn leader_fail(&mut self, round: u64, reason: RoundFailure, fx: &mut Effects<G>) {
        warn!("node {}: round {round} failed: {reason}", self.index);
        self.leader = None;
        fx.events.push(Event::RoundFailed { round, reason });
    }

    fn leader_attempt(&mut self, now: u64, fx: &mut Effects<G>) -> Result<u64, RoundFailure> {
        let round = self.last_round + 1;
        let leader = self.leader.as_mut().expect("leading");
        leader.round = round;
        let excluded: Vec<u32> = leader.excluded.iter().copied().collect();
        let live = self.co.len() - excluded.len() as u32;
        if live < self.config.min_participants {
            let reason = RoundFailure::BelowMinimum { present: live, required: self.config.min_participants };
            self.leader_fail(round, reason.clone(), fx);
            return Err(reason);
        }
        let topo = match self.co.topology(self.index, &excluded) {
            Ok(t) => t,
            Err(e) => {
                self.leader_fail(round, e.clone().into(), fx);
                return Err(e.into());
            }
        };
        let statement = match self.config.binding {
            Binding::Announce => Some((leader.source)(None)),
            Binding::Challenge => None,
        };
        let announce = Announce {
            round,
            view: self.view.current(),
            mode: self.config.mode,
            excluded,
            topology: topo.digest,
            collect: self.config.collect,
            statement,
        };
        info!("node {}: leading round {round} over {} nodes", self.index, topo.tree.live_count());
        self.begin_round(now, None, announce, topo, fx);
        Ok(round)
    }

    fn leader_restart(&mut self, now: u64, round: u64, add: BTreeSet<u32>, fx: &mut Effects<G>) {
        self.drop_round(round);
        let Some(leader) = self.leader.as_mut() else { return };
        leader.restarts += 1;
        leader.excluded.extend(add.iter().copied().filter(|&i| i != self.index));
        if leader.restarts > self.config.max_restarts {
            let n = leader.restarts - 1;
            self.leader_fail(round, RoundFailure::TooManyRestarts(n), fx);
            return;
        }
        let excluded: Vec<u32> = leader.excluded.iter().copied().collect();
        info!("node {}: restarting round {round} without {excluded:?}", self.index);
        if let Ok(to) = self.leader_attempt(now, fx) {
            fx.events.push(Event::Restarted { from: round, to, excluded });
        }
    }

    /// Feeds one incoming message.
    pub fn handle(&mut self, now: u64, from: u32, msg: Message<G>, fx: &mut Effects<G>) {
        match msg {
            Message::Announce(a) => self.on_announce(now, from, a, fx),
            Message::Commit(c) => self.on_commit(now, from, c, fx),
            Message::Challenge(c) => self.on_challenge(now, from, c, fx),
            Message::Response(r) => self.on_response(now, from, r, fx),
            Message::ViewChange(v) => self.on_view_change(now, v, fx),
            Message::Done(d) => self.on_done(from, d, fx),
            other => debug!("node {}: ignoring {} from {from}", self.index, other.kind()),
        }
    }

    /// Feeds one expired timer.
    pub fn on_timer(&mut self, now: u64, timer: Timer, fx: &mut Effects<G>) {
        match timer {
            Timer::Commit { round, stage } => self.commit_timeout(now, round, stage, fx),
            Timer::Response { round, stage } => self.response_timeout(now, round, stage, fx),
            Timer::Liveness { epoch } => {
                if epoch == self.liveness_epoch && !self.is_leader() {
                    self.vote_view_change(fx);
                    self.arm_liveness(fx);
                }
            }
        }
    }

    fn hook_ctx(&self, now: u64, round: u64) -> HookContext {
        HookContext { round, now_secs: self.now_secs(now) }
    }

    /// Removes a round's state, returning its unsigned batch to the queue.
    fn drop_round(&mut self, round: u64) {
        if let Some(st) = self.rounds.remove(&round) {
            if st.phase != Phase::Done && !st.batch_local.is_empty() {
                if let Some(q) = &self.batch {
                    let mut q = q.lock().expect("batch queue");
                    let mut items = st.batch_local;
                    items.append(&mut q);
                    *q = items;
                }
            }
        }
    }

    fn on_announce(&mut self, now: u64, from: u32, a: Announce, fx: &mut Effects<G>) {
        if a.view != self.view.current() {
            debug!("node {}: announce for view {} in view {}", self.index, a.view, self.view.current());
            return;
        }
        let leader = self.co.leader_of(a.view);
        if let Some(st) = self.rounds.get_mut(&a.round) {
            // Adoption by an ancestor whose child (our parent) failed.
            if st.topo.is_ancestor(from, self.index) && st.parent != Some(from) {
                debug!("node {}: round {} re-parented to {from}", self.index, a.round);
                st.parent = Some(from);
                if let Some(c) = &st.commit_msg {
                    fx.send(from, Message::Commit(c.clone()));
                }
            }
            return;
        }
        if a.round <= self.last_round {
            return;
        }
        let topo = match self.co.topology(leader, &a.excluded) {
            Ok(t) => t,
            Err(e) => {
                warn!("node {}: bad topology in announce: {e}", self.index);
                return;
            }
        };
        if topo.digest != a.topology || !topo.tree.is_live(self.index) || !topo.is_ancestor(from, self.index) {
            warn!("node {}: announce from {from} does not match the expected tree", self.index);
            return;
        }
        if from == leader {
            self.arm_liveness(fx);
        }
        self.begin_round(now, Some(from), a, topo, fx);
    }

    /// Commit phase entry for both leader (no parent) and witnesses.
    fn begin_round(&mut self, now: u64, parent: Option<u32>, a: Announce, topo: Arc<TopoInfo<G>>, fx: &mut Effects<G>) {
        let stale: Vec<u64> = self.rounds.keys().copied().collect();
        for r in stale {
            self.drop_round(r);
        }
        self.last_round = a.round;
        let round = a.round;
        let mut refused = false;
        if parent.is_some() {
            if let Some(s) = &a.statement {
                let ctx = self.hook_ctx(now, round);
                if !self.hook.validate(s, &ctx) {
                    info!("node {}: refusing statement of round {round}", self.index);
                    fx.events.push(Event::Refused { round });
                    refused = true;
                }
            }
        }
        let (nonce, own) = if refused {
            (None, None)
        } else {
            let v = G::random_scalar(&mut self.rng);
            fx.compute += 1;
            (Some(v), Some(G::base_pow(&v)))
        };
        let batch_local = match (&self.batch, a.collect) {
            (Some(q), true) => std::mem::take(&mut *q.lock().expect("batch queue")),
            _ => Vec::new(),
        };
        let local_root = a.collect.then(|| {
            let leaves: Vec<Digest> = batch_local.iter().map(|(_, d)| merkle::leaf_hash(d)).collect();
            merkle::root(&leaves)
        });
        let kids: Vec<u32> = topo.tree.children(self.index).to_vec();
        for &k in &kids {
            fx.send(k, Message::Announce(a.clone()));
        }
        let mut refused_set = BTreeSet::new();
        let mut absent = BTreeSet::new();
        if refused {
            refused_set.insert(self.index);
            absent.insert(self.index);
        }
        let st = RoundState {
            statement: a.statement.clone(),
            announce: a,
            parent,
            topo,
            phase: Phase::Announced,
            refused,
            nonce,
            own,
            order: kids.clone(),
            waiting: kids.iter().copied().collect(),
            commit_stage: 0,
            kids: BTreeMap::new(),
            absent,
            failed: BTreeSet::new(),
            refused_set,
            commit_msg: None,
            agg: G::identity(),
            items: Vec::new(),
            item_pos: BTreeMap::new(),
            batch_local,
            local_root,
            batch_items: Vec::new(),
            batch_pos: BTreeMap::new(),
            ch: None,
            targets: BTreeMap::new(),
            resp_waiting: BTreeSet::new(),
            resp_stage: 0,
            r_acc: G::scalar_zero(),
            exceptions: Vec::new(),
            missing: BTreeSet::new(),
            unresolved: BTreeSet::new(),
            resp_refused: BTreeSet::new(),
            response_msg: None,
        };
        let height = st.topo.tree.height(self.index);
        self.rounds.insert(round, st);
        if kids.is_empty() {
            self.finish_commit(now, round, fx);
        } else {
            let wait = stage_wait(self.config.mode, height, self.config.hop_timeout_us, 0);
            fx.timers.push((wait, Timer::Commit { round, stage: 0 }));
        }
    }

    fn on_commit(&mut self, now: u64, from: u32, c: Commit<G>, fx: &mut Effects<G>) {
        let index = self.index;
        let Some(st) = self.rounds.get_mut(&c.round) else { return };
        if c.view != st.announce.view || st.phase != Phase::Announced || !st.waiting.remove(&from) {
            return;
        }
        let no_restart = st.mode() == Mode::NoRestart;
        // Reported indices must lie in the sender's subtree, and in no-restart
        // mode the aggregate and hash must match the parts they summarize.
        let outside = !c.absent.iter().chain(&c.failed).chain(&c.refused).all(|&i| st.topo.in_subtree(from, i))
            || !c.kids.iter().all(|k| k.index != from && st.topo.in_subtree(from, k.index));
        let consistent = !no_restart || {
            let agg = c.kids.iter().fold(c.own.unwrap_or_else(G::identity), |a, k| G::op(&a, &k.agg));
            let leaf = c.own.map(|v| commit_leaf::<G>(from, &v));
            let items: Vec<Digest> = leaf.into_iter().chain(c.kids.iter().map(|k| k.hash)).collect();
            agg == c.agg && c.hash == (!items.is_empty()).then(|| merkle::root(&items))
        };
        if outside || !consistent {
            warn!("node {index}: inconsistent commit from {from} in round {}", c.round);
            fx.events.push(Event::Misbehavior { round: c.round, node: from });
            st.failed.insert(from);
            if no_restart {
                st.absent.insert(from);
                for &g in st.topo.tree.children(from) {
                    st.order.push(g);
                    st.waiting.insert(g);
                    fx.send(g, Message::Announce(st.announce.clone()));
                }
            } else {
                st.absent.extend(st.topo.tree.subtree(from));
            }
        } else {
            st.absent.extend(&c.absent);
            st.failed.extend(&c.failed);
            st.refused_set.extend(&c.refused);
            st.kids.insert(
                from,
                KidState {
                    agg: c.agg,
                    hash: c.hash,
                    own: c.own,
                    kids: c.kids,
                    absent: c.absent,
                    batch_root: c.batch_root,
                    local_batch: c.local_batch,
                },
            );
        }
        if st.waiting.is_empty() {
            self.finish_commit(now, c.round, fx);
        }
    }

    fn commit_timeout(&mut self, now: u64, round: u64, stage: u8, fx: &mut Effects<G>) {
        let index = self.index;
        let hop = self.config.hop_timeout_us;
        let Some(st) = self.rounds.get_mut(&round) else { return };
        if st.phase != Phase::Announced || st.commit_stage != stage || st.waiting.is_empty() {
            return;
        }
        let late: Vec<u32> = std::mem::take(&mut st.waiting).into_iter().collect();
        warn!("node {index}: round {round} commit timeout waiting for {late:?}");
        let mut adopt = Vec::new();
        for &k in &late {
            st.failed.insert(k);
            if st.mode() == Mode::NoRestart && stage == 0 {
                st.absent.insert(k);
                adopt.extend_from_slice(st.topo.tree.children(k));
            } else {
                st.absent.extend(st.topo.tree.subtree(k));
            }
        }
        if adopt.is_empty() {
            self.finish_commit(now, round, fx);
            return;
        }
        debug!("node {index}: round {round} adopting {adopt:?}");
        st.commit_stage = 1;
        for &g in &adopt {
            st.order.push(g);
            st.waiting.insert(g);
            fx.send(g, Message::Announce(st.announce.clone()));
        }
        let wait = stage_wait(st.mode(), st.topo.tree.height(index), hop, 1);
        fx.timers.push((wait, Timer::Commit { round, stage: 1 }));
    }

    fn finish_commit(&mut self, now: u64, round: u64, fx: &mut Effects<G>) {
        let index = self.index;
        let Some(st) = self.rounds.get_mut(&round) else { return };
        st.phase = Phase::Committed;
        let no_restart = st.mode() == Mode::NoRestart;
        let mut agg = st.own.unwrap_or_else(G::identity);
        let mut items = Vec::new();
        let mut kid_list = Vec::new();
        if let Some(v) = &st.own {
            items.push(commit_leaf::<G>(index, v));
        }
        let mut batch_items: Vec<Digest> = st.local_root.into_iter().collect();
        for &k in &st.order {
            let Some(ks) = st.kids.get(&k) else { continue };
            agg = G::op(&agg, &ks.agg);
            if let Some(h) = ks.hash {
                st.item_pos.insert(k, items.len());
                items.push(h);
                if no_restart {
                    kid_list.push(KidCommit { index: k, agg: ks.agg, hash: h, batch_root: ks.batch_root });
                }
            }
            if let Some(b) = ks.batch_root {
                st.batch_pos.insert(k, batch_items.len());
                batch_items.push(b);
            }
        }
        st.agg = agg;
        let hash = (no_restart && !items.is_empty()).then(|| merkle::root(&items));
        st.items = items;
        let batch_root = st.announce.collect.then(|| merkle::root(&batch_items));
        st.batch_items = batch_items;
        let msg = Commit {
            round,
            view: st.announce.view,
            agg,
            hash,
            own: if no_restart { st.own } else { None },
            kids: kid_list,
            absent: st.absent.iter().copied().collect(),
            failed: st.failed.iter().copied().collect(),
            refused: st.refused_set.iter().copied().collect(),
            batch_root,
            local_batch: if no_restart { st.local_root } else { None },
        };
        match st.parent {
            Some(p) => {
                st.commit_msg = Some(msg.clone());
                fx.send(p, Message::Commit(msg));
            }
            None => self.leader_after_commit(now, round, msg, fx),
        }
    }

    fn leader_after_commit(&mut self, now: u64, round: u64, commit: Commit<G>, fx: &mut Effects<G>) {
        let Some(leader) = self.leader.as_mut() else { return };
        if leader.round != round {
            return;
        }
        leader.failed.extend(&commit.failed);
        leader.refused.extend(&commit.refused);
        let st = self.rounds.get(&round).expect("leader round state");
        if st.mode() == Mode::Restart && !commit.failed.is_empty() {
            self.leader_restart(now, round, commit.failed.iter().copied().collect(), fx);
            return;
        }
        let present = st.topo.tree.live_count() - commit.absent.len() as u32;
        if present < self.config.min_participants {
            let reason = RoundFailure::BelowMinimum { present, required: self.config.min_participants };
            self.drop_round(round);
            self.leader_fail(round, reason, fx);
            return;
        }
        let statement = match &st.statement {
            Some(s) => s.clone(),
            None => (leader.source)(commit.batch_root),
        };
        let commit_root = commit.hash;
        let c = collective_challenge::<G>(&commit.agg, commit_root.as_ref(), &statement);
        let late = self.config.binding == Binding::Challenge;
        let ch = Challenge {
            round,
            view: commit.view,
            challenge: c,
            agg_commit: commit.agg,
            commit_root,
            statement: late.then(|| statement.clone()),
            proof: InclusionProof::default(),
            batch: commit.batch_root.map(|b| (b, InclusionProof::default())),
        };
        let st = self.rounds.get_mut(&round).expect("leader round state");
        st.statement = Some(statement);
        self.begin_response(now, round, ch, fx);
    }

    fn on_challenge(&mut self, now: u64, from: u32, ch: Challenge<G>, fx: &mut Effects<G>) {
        let index = self.index;
        let Some(st) = self.rounds.get_mut(&ch.round) else { return };
        if ch.view != st.announce.view || st.phase < Phase::Committed {
            return;
        }
        let from_parent = st.parent == Some(from);
        if !from_parent && !st.topo.is_ancestor(from, index) {
            return;
        }
        if let Some(prev) = &st.ch {
            if prev.c != ch.challenge {
                warn!("node {index}: round {} second challenge with a different value ignored", ch.round);
                return;
            }
            st.parent = Some(from);
            if let Some(r) = &st.response_msg {
                fx.send(from, Message::Response(r.clone()));
            }
            return;
        }
        st.parent = Some(from);
        let mut accept = !st.refused;
        if let Some(s) = &ch.statement {
            if st.statement.is_none() {
                st.statement = Some(s.clone());
                if accept {
                    let ctx = HookContext { round: ch.round, now_secs: self.now_secs(now) };
                    if !self.hook.validate(s, &ctx) {
                        info!("node {index}: refusing statement of round {}", ch.round);
                        fx.events.push(Event::Refused { round: ch.round });
                        accept = false;
                    }
                }
            }
        }
        let st = self.rounds.get_mut(&ch.round).expect("present");
        if accept {
            let ok_c = st.statement.as_ref().is_some_and(|s| {
                collective_challenge::<G>(&ch.agg_commit, ch.commit_root.as_ref(), s) == ch.challenge
            });
            let ok_proof = match (&ch.commit_root, &st.own) {
                (Some(root), Some(v)) => {
                    merkle::prove(&st.items, 0).then(&ch.proof).verify(root, commit_leaf::<G>(index, v))
                }
                (None, _) => true,
                (Some(_), None) => false,
            };
            if !ok_c || !ok_proof {
                warn!("node {index}: round {} challenge fails checks (challenge {ok_c}, proof {ok_proof})", ch.round);
                fx.events.push(Event::Refused { round: ch.round });
                accept = false;
            }
        }
        if !accept && !st.refused {
            st.refused = true;
            st.resp_refused.insert(index);
        }
        self.begin_response(now, ch.round, ch, fx);
    }

    /// Response phase entry: own share, then challenges to each child.
    fn begin_response(&mut self, now: u64, round: u64, ch: Challenge<G>, fx: &mut Effects<G>) {
        let index = self.index;
        let secret = *self.keypair.secret();
        let hop = self.config.hop_timeout_us;
        let Some(st) = self.rounds.get_mut(&round) else { return };
        st.phase = Phase::Challenged;
        let info = ChallengeInfo {
            c: ch.challenge,
            agg_commit: ch.agg_commit,
            commit_root: ch.commit_root,
            proof: ch.proof.clone(),
            batch: ch.batch.clone(),
        };
        if let Some(v) = st.nonce.take() {
            if st.refused {
                // The unused commit is listed so the parent can divide it out;
                // the proof only matters under a commit tree.
                if let Some(own) = st.own {
                    let proof = match info.commit_root {
                        Some(_) => merkle::prove(&st.items, 0).then(&info.proof),
                        None => InclusionProof::default(),
                    };
                    st.exceptions.push(CommitException { index, commit: own, proof });
                }
                st.missing.insert(index);
            } else {
                st.r_acc = response_share::<G>(&v, &info.c, &secret);
                self.nonce_log.push((round, G::base_pow(&v), info.c));
            }
        }
        let st = self.rounds.get_mut(&round).expect("present");
        let kids: Vec<u32> = st.order.iter().copied().filter(|k| st.kids.contains_key(k)).collect();
        for k in kids {
            let ks = st.kids[&k].clone();
            let proof = match st.item_pos.get(&k) {
                Some(&p) => merkle::prove(&st.items, p).then(&info.proof),
                None => InclusionProof::default(),
            };
            let batch_proof = match (st.batch_pos.get(&k), &info.batch) {
                (Some(&p), Some((_, bp))) => Some(merkle::prove(&st.batch_items, p).then(bp)),
                _ => None,
            };
            if st.committed_members(k, &ks.absent).is_empty() && ks.batch_root.is_none() {
                continue;
            }
            let t = Target {
                agg: ks.agg,
                hash: ks.hash,
                own: ks.own,
                kids: Some(ks.kids),
                absent: ks.absent,
                local_batch: ks.local_batch,
                proof,
                batch_proof,
            };
            Self::challenge_target(st, &ch, &info, k, t, fx);
        }
        let waiting = !st.resp_waiting.is_empty();
        let height = st.topo.tree.height(index);
        let mode = st.mode();
        st.ch = Some(info);
        if waiting {
            fx.timers.push((stage_wait(mode, height, hop, 0), Timer::Response { round, stage: 0 }));
        } else {
            self.finish_response(now, round, fx);
        }
    }

    fn challenge_target(
        st: &mut RoundState<G>,
        ch: &Challenge<G>,
        info: &ChallengeInfo<G>,
        k: u32,
        t: Target<G>,
        fx: &mut Effects<G>,
    ) {
        let msg = Challenge {
            round: ch.round,
            view: ch.view,
            challenge: info.c,
            agg_commit: info.agg_commit,
            commit_root: info.commit_root,
            statement: ch.statement.clone(),
            proof: t.proof.clone(),
            batch: match (&info.batch, &t.batch_proof) {
                (Some((root, _)), Some(p)) => Some((*root, p.clone())),
                _ => None,
            },
        };
        st.targets.insert(k, t);
        st.resp_waiting.insert(k);
        fx.send(k, Message::Challenge(msg));
    }

    fn on_response(&mut self, now: u64, from: u32, r: Response<G>, fx: &mut Effects<G>) {
        let index = self.index;
        let Some(st) = self.rounds.get_mut(&r.round) else { return };
        if r.view != st.announce.view || st.phase != Phase::Challenged || !st.resp_waiting.contains(&from) {
            return;
        }
        let info = st.ch.clone().expect("challenged");
        let t = st.targets[&from].clone();
        fx.compute += 2;
        if Self::check_partial(self.co.keys(), st, &info, from, &t, &r) {
            st.resp_waiting.remove(&from);
            st.r_acc = G::scalar_add(&st.r_acc, &r.response);
            st.exceptions.extend(r.exceptions);
            st.missing.extend(&r.missing);
            st.failed.extend(&r.failed);
            st.resp_refused.extend(&r.refused);
            st.unresolved.extend(&r.unresolved);
        } else {
            warn!("node {index}: round {} response from {from} does not verify", r.round);
            fx.events.push(Event::Misbehavior { round: r.round, node: from });
            st.resp_waiting.remove(&from);
            self.drop_target(r.round, from, fx);
        }
        let st = self.rounds.get_mut(&r.round).expect("present");
        if st.resp_waiting.is_empty() {
            self.finish_response(now, r.round, fx);
        }
    }

    /// `G^r * X^c == V * prod(exceptions)^-1` for the target's subtree.
    fn check_partial(keys: &[G::Element], st: &RoundState<G>, info: &ChallengeInfo<G>, from: u32, t: &Target<G>, r: &Response<G>) -> bool {
        let in_sub = |i: &u32| st.topo.in_subtree(from, *i);
        if !r.missing.iter().all(in_sub) || !r.unresolved.iter().all(|u| r.missing.contains(u)) {
            return false;
        }
        let mut seen = BTreeSet::new();
        for e in &r.exceptions {
            if !r.missing.contains(&e.index) || !seen.insert(e.index) {
                return false;
            }
            if let Some(root) = &info.commit_root {
                if !e.proof.verify(root, commit_leaf::<G>(e.index, &e.commit)) {
                    return false;
                }
            }
        }
        let removed: BTreeSet<u32> = t.absent.iter().chain(&r.missing).copied().collect();
        let mut key = st.topo.subtree_key(from);
        let keys: Vec<G::Element> = removed.iter().map(|&i| keys[i as usize]).collect();
        key = multisig::adjust_key_for_absent::<G>(&key, &keys);
        let mut v = t.agg;
        let exc: Vec<G::Element> = r.exceptions.iter().map(|e| e.commit).collect();
        v = multisig::adjust_key_for_absent::<G>(&v, &exc);
        G::multi_pow(&[(r.response, G::generator()), (info.c, key)]) == v
    }

    fn response_timeout(&mut self, now: u64, round: u64, stage: u8, fx: &mut Effects<G>) {
        let index = self.index;
        let hop = self.config.hop_timeout_us;
        let Some(st) = self.rounds.get_mut(&round) else { return };
        if st.phase != Phase::Challenged || st.resp_stage != stage || st.resp_waiting.is_empty() {
            return;
        }
        let late: Vec<u32> = std::mem::take(&mut st.resp_waiting).into_iter().collect();
        warn!("node {index}: round {round} response timeout waiting for {late:?}");
        st.resp_stage = stage + 1;
        for k in late {
            self.drop_target(round, k, fx);
        }
        let st = self.rounds.get_mut(&round).expect("present");
        if st.resp_waiting.is_empty() {
            self.finish_response(now, round, fx);
        } else {
            let wait = stage_wait(st.mode(), st.topo.tree.height(index), hop, 1);
            fx.timers.push((wait, Timer::Response { round, stage: st.resp_stage }));
        }
    }

    /// Gives up on target `k`'s response: records an exception for its own
    /// commit and, in the first stage, challenges its children directly.
    fn drop_target(&mut self, round: u64, k: u32, fx: &mut Effects<G>) {
        let st = self.rounds.get_mut(&round).expect("present");
        let t = st.targets[&k].clone();
        let info = st.ch.clone().expect("challenged");
        st.failed.insert(k);
        let committed = st.committed_members(k, &t.absent);
        if st.mode() == Mode::Restart {
            if !committed.is_empty() {
                st.exceptions.push(CommitException { index: k, commit: t.agg, proof: InclusionProof::default() });
                st.missing.extend(committed);
            }
            return;
        }
        let leaf_own = t.own.or_else(|| {
            let agg = t.agg;
            (t.hash == Some(commit_leaf::<G>(k, &agg))).then_some(agg)
        });
        let root = info.commit_root.expect("no-restart root");
        match leaf_own {
            Some(v) => {
                let own_proof = if t.own.is_some() {
                    let items = commit_items(commit_leaf::<G>(k, &v), &kid_hashes(&t));
                    merkle::prove(&items, 0).then(&t.proof)
                } else {
                    t.proof.clone()
                };
                if own_proof.verify(&root, commit_leaf::<G>(k, &v)) {
                    st.exceptions.push(CommitException { index: k, commit: v, proof: own_proof });
                    st.missing.insert(k);
                } else {
                    st.missing.insert(k);
                    st.unresolved.insert(k);
                }
            }
            None if committed.contains(&k) => {
                st.missing.insert(k);
                st.unresolved.insert(k);
            }
            None => {}
        }
        match &t.kids {
            Some(kids) if !kids.is_empty() => {
                let own_leaf = t.own.map(|v| commit_leaf::<G>(k, &v));
                let items: Vec<Digest> = own_leaf.into_iter().chain(kids.iter().map(|g| g.hash)).collect();
                let offset = usize::from(own_leaf.is_some());
                let batch_items: Vec<Digest> =
                    t.local_batch.into_iter().chain(kids.iter().filter_map(|g| g.batch_root)).collect();
                let ch = Challenge {
                    round,
                    view: st.announce.view,
                    challenge: info.c,
                    agg_commit: info.agg_commit,
                    commit_root: info.commit_root,
                    statement: st.announce.statement.is_none().then(|| st.statement.clone()).flatten(),
                    proof: InclusionProof::default(),
                    batch: None,
                };
                let mut bpos = usize::from(t.local_batch.is_some());
                for (i, g) in kids.iter().enumerate() {
                    let absent: Vec<u32> =
                        t.absent.iter().copied().filter(|&a| st.topo.in_subtree(g.index, a)).collect();
                    let batch_proof = match (&t.batch_proof, g.batch_root) {
                        (Some(bp), Some(_)) if t.local_batch.is_some() => {
                            let p = merkle::prove(&batch_items, bpos).then(bp);
                            bpos += 1;
                            Some(p)
                        }
                        _ => None,
                    };
                    let gt = Target {
                        agg: g.agg,
                        hash: Some(g.hash),
                        own: None,
                        kids: None,
                        absent,
                        local_batch: None,
                        proof: merkle::prove(&items, offset + i).then(&t.proof),
                        batch_proof,
                    };
                    debug!("node {}: round {round} adopting {} after {k} failed", self.index, g.index);
                    Self::challenge_target(st, &ch, &info, g.index, gt, fx);
                }
            }
            Some(_) => {}
            None => {
                // Descendants are unreachable without the target's tree.
                for m in committed.into_iter().filter(|&m| m != k) {
                    st.missing.insert(m);
                    st.unresolved.insert(m);
                }
            }
        }
    }

    fn finish_response(&mut self, now: u64, round: u64, fx: &mut Effects<G>) {
        let Some(st) = self.rounds.get_mut(&round) else { return };
        st.phase = Phase::Responded;
        st.exceptions.sort_by_key(|e| e.index);
        let msg = Response {
            round,
            view: st.announce.view,
            response: st.r_acc,
            exceptions: st.exceptions.clone(),
            missing: st.missing.iter().copied().collect(),
            failed: st.failed.iter().copied().collect(),
            refused: st.resp_refused.iter().copied().collect(),
            unresolved: st.unresolved.iter().copied().collect(),
        };
        match st.parent {
            Some(p) => {
                st.response_msg = Some(msg.clone());
                fx.send(p, Message::Response(msg));
            }
            None => self.leader_after_response(now, round, msg, fx),
        }
    }

    fn leader_after_response(&mut self, now: u64, round: u64, resp: Response<G>, fx: &mut Effects<G>) {
        let Some(leader) = self.leader.as_mut() else { return };
        if leader.round != round {
            return;
        }
        leader.failed.extend(&resp.failed);
        leader.refused.extend(&resp.refused);
        let st = self.rounds.get(&round).expect("leader round state");
        let mode = st.mode();
        if mode == Mode::Restart && (!resp.missing.is_empty() || !resp.failed.is_empty()) {
            let mut add: BTreeSet<u32> = resp.failed.iter().chain(&resp.refused).copied().collect();
            if add.is_empty() {
                add.extend(&resp.missing);
            }
            self.leader_restart(now, round, add, fx);
            return;
        }
        if mode == Mode::NoRestart && !resp.unresolved.is_empty() {
            // Unresolved members are usually live nodes stranded under a
            // failed one; they rejoin under the pruned tree.
            let mut add: BTreeSet<u32> = resp.failed.iter().chain(&resp.refused).copied().collect();
            if add.is_empty() {
                add.extend(&resp.unresolved);
            }
            self.leader_restart(now, round, add, fx);
            return;
        }
        let n = self.co.len();
        let absent: BTreeSet<u32> = st.absent.iter().chain(&st.announce.excluded).chain(&resp.missing).copied().collect();
        let mut participation = ParticipationSet::from_absent(n, absent.iter().copied());
        for e in &resp.exceptions {
            participation.mark_commit_only(e.index);
        }
        let ch = st.ch.as_ref().expect("challenged");
        let statement = st.statement.clone().expect("statement bound");
        let signature = CollectiveSignature {
            mode,
            challenge: ch.c,
            response: resp.response,
            commit_root: ch.commit_root,
            participation,
            exceptions: resp.exceptions,
        };
        fx.compute += 2;
        let checked =
            multisig::verify_collective(self.co.keys(), self.co.weights(), &statement, &signature, &Predicate::Threshold(0));
        if let Err(e) = checked {
            self.drop_round(round);
            self.leader_fail(round, RoundFailure::InvalidOutput(e), fx);
            return;
        }
        let present = signature.participation.present_count();
        if present < self.config.min_participants {
            self.drop_round(round);
            self.leader_fail(
                round,
                RoundFailure::BelowMinimum { present, required: self.config.min_participants },
                fx,
            );
            return;
        }
        let leader = self.leader.take().expect("leading");
        info!("node {}: round {round} signed, present {present}/{n}", self.index);
        let out = RoundOutput {
            round,
            statement: statement.clone(),
            signature: signature.clone(),
            restarts: leader.restarts,
            failed: leader.failed.into_iter().collect(),
            refused: leader.refused.into_iter().collect(),
        };
        fx.events.push(Event::RoundComplete(out));
        if self.config.broadcast_done {
            let done = Done { round, view: self.view.current(), statement, signature: signature.encode() };
            self.on_done(self.index, done, fx);
        }
    }

    fn on_done(&mut self, from: u32, d: Done, fx: &mut Effects<G>) {
        let index = self.index;
        let leader = self.co.leader_of(self.view.current());
        let Some(st) = self.rounds.get_mut(&d.round) else { return };
        if st.phase == Phase::Done || (from != index && st.parent != Some(from) && !st.topo.is_ancestor(from, index)) {
            return;
        }
        let Ok(signature) = CollectiveSignature::<G>::decode(&d.signature, self.co.len()) else {
            warn!("node {index}: undecodable final signature for round {}", d.round);
            return;
        };
        if st.statement.as_deref() != Some(&d.statement) {
            warn!("node {index}: final statement for round {} differs", d.round);
            return;
        }
        st.phase = Phase::Done;
        for k in st.order.clone() {
            if st.kids.contains_key(&k) {
                fx.send(k, Message::Done(d.clone()));
            }
        }
        if let (false, Some((_, bp))) = (st.batch_local.is_empty(), st.ch.as_ref().and_then(|c| c.batch.clone())) {
            let leaves: Vec<Digest> = st.batch_local.iter().map(|(_, h)| merkle::leaf_hash(h)).collect();
            let up = merkle::prove(&st.batch_items, 0).then(&bp);
            let proofs = (0..leaves.len()).map(|i| merkle::prove(&leaves, i).then(&up)).collect();
            fx.events.push(Event::BatchSigned {
                round: d.round,
                statement: d.statement.clone(),
                signature,
                items: std::mem::take(&mut st.batch_local),
                proofs,
            });
        }
        self.hook.signed(&d.statement);
        if from == leader && from != index {
            self.arm_liveness(fx);
        }
    }

    fn vote_view_change(&mut self, fx: &mut Effects<G>) {
        let target = self.view.current().max(self.voted) + 1;
        self.voted = target;
        let statement = view::vote_statement(target, &self.co.digest());
        let signature = sign_tagged(&self.keypair, &statement, TAG_VIEW_VOTE, &mut self.rng);
        fx.compute += 1;
        info!("node {}: voting for view {target}", self.index);
        let msg = ViewChange { round: self.last_round, view: target, signer: self.index, signature };
        for i in 0..self.co.len() {
            if i != self.index {
                fx.send(i, Message::ViewChange(msg.clone()));
            }
        }
        self.count_vote(target, self.index, fx);
    }

    fn on_view_change(&mut self, _now: u64, v: ViewChange<G>, fx: &mut Effects<G>) {
        let Some(key) = self.co.keys().get(v.signer as usize) else { return };
        fx.compute += 2;
        let statement = view::vote_statement(v.view, &self.co.digest());
        if !verify_tagged(key, &statement, TAG_VIEW_VOTE, &v.signature) {
            warn!("node {}: invalid view-change vote from {}", self.index, v.signer);
            return;
        }
        self.count_vote(v.view, v.signer, fx);
    }

    fn count_vote(&mut self, view: u64, signer: u32, fx: &mut Effects<G>) {
        if let Some(activated) = self.view.record(view, signer) {
            let leader = self.co.leader_of(activated);
            info!("node {}: view {activated} active, leader {leader}", self.index);
            let rounds: Vec<u64> = self.rounds.keys().copied().collect();
            for r in rounds {
                self.drop_round(r);
            }
            self.leader = None;
            self.voted = self.voted.max(activated);
            fx.events.push(Event::ViewActivated { view: activated, leader });
            self.arm_liveness(fx);
        }
    }
}

fn kid_hashes<G: Group>(t: &Target<G>) -> Vec<Digest> {
    t.kids.as_ref().map(|ks| ks.iter().map(|g| g.hash).collect()).unwrap_or_default()
}
