//! Framed-TCP host for one engine node.
//!
//! A listener thread accepts connections and starts a reader per
//! connection; each peer gets a writer thread that owns the outbound
//! connection. One driver thread owns the [`Node`] and serializes every
//! message, timer and local request through a single channel.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use cosi_core::engine::hook::HookSpec;
use cosi_core::engine::message::{read_frame, write_frame};
use cosi_core::engine::{
    BatchQueue, Cothority, Effects, Event, Message, Node, RoundConfig, RoundFailure, RoundOutput, Timer,
};
use cosi_core::group::{Group, KeyPair};
use cosi_core::merkle::Digest;
use cosi_core::roster::WitnessRoster;
use cosi_core::timestamp::{receipts_from_batch, record_source, TimestampRecord};
use log::{debug, info, warn};
use rand::RngCore;
use thiserror::Error;

const CONNECT_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum HostError {
    #[error("round failed: {0}")]
    Round(#[from] RoundFailure),
    #[error("no result within {0:?}")]
    Timeout(Duration),
    #[error("host stopped")]
    Stopped,
}

pub struct HostConfig<G: Group> {
    pub index: u32,
    pub keypair: KeyPair<G>,
    pub roster: WitnessRoster<G>,
    pub round: RoundConfig,
    pub hook: HookSpec,
    pub listen: String,
    /// Lead a timestamp round this often while this node is the leader.
    pub stamp_interval: Option<Duration>,
}

type SignReply<G> = Sender<Result<RoundOutput<G>, RoundFailure>>;

enum Input<G: Group> {
    Peer(u32, Message<G>),
    Sign(Vec<u8>, SignReply<G>),
    Stamp(Digest, Sender<Vec<u8>>),
    Shutdown,
}

/// A running node; dropping it stops the driver.
pub struct Host<G: Group> {
    addr: SocketAddr,
    tx: Sender<Input<G>>,
    stop: Arc<AtomicBool>,
    driver: Option<JoinHandle<()>>,
}

impl<G: Group> Host<G> {
    pub fn spawn(cfg: HostConfig<G>) -> io::Result<Self> {
        let listener = TcpListener::bind(&cfg.listen)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let n = cfg.roster.len();
        {
            let (tx, stop) = (tx.clone(), stop.clone());
            thread::Builder::new().name(format!("listen-{}", cfg.index)).spawn(move || accept_loop(listener, tx, stop, n))?;
        }
        let driver = Driver::new(cfg);
        let handle = thread::Builder::new().name("driver".into()).spawn(move || driver.run(rx))?;
        info!("listening on {addr}");
        Ok(Host { addr, tx, stop, driver: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Leads one round over `statement`.
    pub fn sign(&self, statement: Vec<u8>, timeout: Duration) -> Result<RoundOutput<G>, HostError> {
        let (rtx, rrx) = mpsc::channel();
        self.tx.send(Input::Sign(statement, rtx)).map_err(|_| HostError::Stopped)?;
        match rrx.recv_timeout(timeout) {
            Ok(r) => Ok(r?),
            Err(RecvTimeoutError::Timeout) => Err(HostError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(HostError::Stopped),
        }
    }

    /// Blocks until the driver exits.
    pub fn join(mut self) {
        if let Some(h) = self.driver.take() {
            let _ = h.join();
        }
    }

    fn stop(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = self.tx.send(Input::Shutdown);
        // Wakes the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, CONNECT_TIMEOUT);
        if let Some(h) = self.driver.take() {
            let _ = h.join();
        }
    }
}

impl<G: Group> Drop for Host<G> {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop<G: Group>(listener: TcpListener, tx: Sender<Input<G>>, stop: Arc<AtomicBool>, n: u32) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match stream {
            Ok(s) => {
                let tx = tx.clone();
                thread::spawn(move || serve(s, tx, n));
            }
            Err(e) => warn!("accept: {e}"),
        }
    }
}

/// Reads frames from one inbound connection. Peers open with `Hello`;
/// clients send stamp requests and wait for each reply.
fn serve<G: Group>(mut stream: TcpStream, tx: Sender<Input<G>>, n: u32) {
    let _ = stream.set_nodelay(true);
    let mut peer = None;
    loop {
        let msg = match read_frame::<G>(&mut stream) {
            Ok(m) => m,
            Err(e) => {
                if e.kind() != io::ErrorKind::UnexpectedEof {
                    debug!("connection closed: {e}");
                }
                return;
            }
        };
        match (msg, peer) {
            (Message::Hello { index }, None) if index < n => peer = Some(index),
            (Message::StampRequest { hash }, _) => {
                let (rtx, rrx) = mpsc::channel();
                if tx.send(Input::Stamp(hash, rtx)).is_err() {
                    return;
                }
                let receipt = rrx.recv().unwrap_or_default();
                if write_frame(&mut stream, &Message::<G>::StampReply { receipt }).is_err() {
                    return;
                }
            }
            (msg, Some(from)) => {
                if tx.send(Input::Peer(from, msg)).is_err() {
                    return;
                }
            }
            (msg, None) => {
                warn!("dropping connection that opened with {}", msg.kind());
                return;
            }
        }
    }
}

fn connect(endpoint: &str) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotFound, "endpoint resolves to nothing");
    for addr in endpoint.to_socket_addrs()? {
        match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Owns the outbound connection to one peer; messages that cannot be
/// delivered after one reconnect are dropped and left to engine timeouts.
fn writer<G: Group>(own: u32, peer: u32, endpoint: String, rx: Receiver<Message<G>>) {
    let mut conn: Option<TcpStream> = None;
    for msg in rx {
        for _ in 0..2 {
            if conn.is_none() {
                conn = connect(&endpoint)
                    .and_then(|mut s| write_frame(&mut s, &Message::<G>::Hello { index: own }).map(|_| s))
                    .map_err(|e| debug!("node {own}: cannot reach {peer} at {endpoint}: {e}"))
                    .ok();
            }
            let Some(c) = conn.as_mut() else { break };
            if write_frame(c, &msg).is_ok() {
                break;
            }
            conn = None;
        }
    }
}

struct StampState {
    interval: Duration,
    next_at: Instant,
    round: u64,
    prev: Digest,
    running: bool,
}

struct Driver<G: Group> {
    node: Node<G>,
    index: u32,
    endpoints: Vec<Option<String>>,
    peers: HashMap<u32, Sender<Message<G>>>,
    start: Instant,
    timers: BinaryHeap<Reverse<(u64, u64)>>,
    timer_kinds: HashMap<u64, Timer>,
    timer_seq: u64,
    batch: BatchQueue,
    next_ticket: u64,
    stamp_waiters: HashMap<u64, Sender<Vec<u8>>>,
    sign_waiter: Option<SignReply<G>>,
    stamp: Option<StampState>,
}

impl<G: Group> Driver<G> {
    fn new(cfg: HostConfig<G>) -> Self {
        let co = Arc::new(Cothority::new(&cfg.roster, cfg.round.branching));
        let mut node = Node::new(cfg.index, cfg.keypair, co, cfg.round, cfg.hook.build(), 0);
        let mut seed = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut seed);
        node.reseed(seed);
        let epoch = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        node.set_clock(epoch, 0);
        let batch: BatchQueue = Arc::new(Mutex::new(Vec::new()));
        node.set_batch(batch.clone());
        let start = Instant::now();
        Driver {
            node,
            index: cfg.index,
            endpoints: cfg.roster.entries().iter().map(|e| e.endpoint.clone()).collect(),
            peers: HashMap::new(),
            start,
            timers: BinaryHeap::new(),
            timer_kinds: HashMap::new(),
            timer_seq: 0,
            batch,
            next_ticket: 0,
            stamp_waiters: HashMap::new(),
            sign_waiter: None,
            stamp: cfg.stamp_interval.map(|interval| StampState {
                interval,
                next_at: start + interval,
                round: 0,
                prev: [0; 32],
                running: false,
            }),
        }
    }

    fn now(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn run(mut self, rx: Receiver<Input<G>>) {
        let mut fx = Effects::new();
        self.node.start(&mut fx);
        self.apply(fx);
        loop {
            let wait = self.next_deadline().saturating_duration_since(Instant::now());
            match rx.recv_timeout(wait) {
                Ok(Input::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Ok(input) => self.input(input),
                Err(RecvTimeoutError::Timeout) => {}
            }
            self.fire_due();
        }
        debug!("node {}: driver stopped", self.index);
    }

    fn next_deadline(&self) -> Instant {
        let mut at = Instant::now() + Duration::from_secs(3600);
        if let Some(Reverse((due, _))) = self.timers.peek() {
            at = at.min(self.start + Duration::from_micros(*due));
        }
        if let Some(s) = &self.stamp {
            if !s.running {
                at = at.min(s.next_at);
            }
        }
        at
    }

    fn fire_due(&mut self) {
        loop {
            let now = self.now();
            match self.timers.peek() {
                Some(Reverse((due, seq))) if *due <= now => {
                    let seq = *seq;
                    self.timers.pop();
                    if let Some(t) = self.timer_kinds.remove(&seq) {
                        let mut fx = Effects::new();
                        self.node.on_timer(now, t, &mut fx);
                        self.apply(fx);
                    }
                }
                _ => break,
            }
        }
        let due = self.stamp.as_ref().is_some_and(|s| !s.running && Instant::now() >= s.next_at);
        if due {
            self.start_stamp_round();
        }
    }

    fn start_stamp_round(&mut self) {
        let now = self.now();
        let wall = self.node.now_secs(now);
        let s = self.stamp.as_mut().expect("stamping");
        s.next_at = Instant::now() + s.interval;
        if !self.node.is_leader() || self.sign_waiter.is_some() {
            return;
        }
        let source = record_source(s.round, wall, s.prev);
        let mut fx = Effects::new();
        match self.node.start_round(now, source, &mut fx) {
            Ok(_) => s.running = true,
            Err(e) => debug!("node {}: no stamp round: {e}", self.index),
        }
        self.apply(fx);
    }

    fn input(&mut self, input: Input<G>) {
        let now = self.now();
        let mut fx = Effects::new();
        match input {
            Input::Peer(from, msg) => self.node.handle(now, from, msg, &mut fx),
            Input::Sign(statement, reply) => {
                if self.sign_waiter.is_some() || self.stamp.as_ref().is_some_and(|s| s.running) {
                    let _ = reply.send(Err(RoundFailure::Busy));
                    return;
                }
                match self.node.start_round(now, Box::new(move |_| statement.clone()), &mut fx) {
                    Ok(_) => self.sign_waiter = Some(reply),
                    Err(e) => {
                        let _ = reply.send(Err(e));
                    }
                }
            }
            Input::Stamp(item, reply) => {
                let t = self.next_ticket;
                self.next_ticket += 1;
                self.batch.lock().expect("batch lock").push((t, item));
                self.stamp_waiters.insert(t, reply);
            }
            Input::Shutdown => {}
        }
        self.apply(fx);
    }

    fn apply(&mut self, fx: Effects<G>) {
        let now = self.now();
        for (delay, timer) in fx.timers {
            self.timer_seq += 1;
            self.timers.push(Reverse((now + delay, self.timer_seq)));
            self.timer_kinds.insert(self.timer_seq, timer);
        }
        for (to, msg) in fx.sends {
            self.send(to, msg);
        }
        for e in fx.events {
            self.event(e);
        }
    }

    fn send(&mut self, to: u32, msg: Message<G>) {
        if !self.peers.contains_key(&to) {
            let Some(Some(endpoint)) = self.endpoints.get(to as usize).cloned() else {
                warn!("node {}: no endpoint for {to}", self.index);
                return;
            };
            let (tx, rx) = mpsc::channel();
            let own = self.index;
            thread::spawn(move || writer(own, to, endpoint, rx));
            self.peers.insert(to, tx);
        }
        let _ = self.peers[&to].send(msg);
    }

    fn event(&mut self, e: Event<G>) {
        match e {
            Event::RoundComplete(out) => {
                if let Some(w) = self.sign_waiter.take() {
                    let _ = w.send(Ok(out));
                } else if let Some(s) = self.stamp.as_mut() {
                    s.running = false;
                    if let Ok(r) = TimestampRecord::decode(&out.statement) {
                        s.prev = r.hash();
                        s.round = r.round + 1;
                    }
                }
            }
            Event::RoundFailed { round, reason } => {
                debug!("node {}: round {round} failed", self.index);
                if let Some(w) = self.sign_waiter.take() {
                    let _ = w.send(Err(reason));
                } else if let Some(s) = self.stamp.as_mut() {
                    s.running = false;
                }
            }
            Event::BatchSigned { statement, signature, items, proofs, .. } => {
                match receipts_from_batch(&statement, &signature, &items, &proofs) {
                    Ok(receipts) => {
                        for (t, r) in receipts {
                            if let Some(w) = self.stamp_waiters.remove(&t) {
                                let _ = w.send(r.encode());
                            }
                        }
                    }
                    Err(e) => warn!("node {}: signed batch is not a timestamp record: {e}", self.index),
                }
            }
            other => debug!("node {}: {other:?}", self.index),
        }
    }
}

/// Sends one stamp request and waits for the encoded receipt.
pub fn request_stamp<G: Group>(endpoint: &str, item: Digest, timeout: Duration) -> io::Result<Vec<u8>> {
    let mut s = connect(endpoint)?;
    s.set_read_timeout(Some(timeout))?;
    write_frame(&mut s, &Message::<G>::StampRequest { hash: item })?;
    match read_frame::<G>(&mut s)? {
        Message::StampReply { receipt } if !receipt.is_empty() => Ok(receipt),
        Message::StampReply { .. } => Err(io::Error::other("stamp failed")),
        other => Err(io::Error::new(io::ErrorKind::InvalidData, format!("unexpected {} frame", other.kind()))),
    }
}
