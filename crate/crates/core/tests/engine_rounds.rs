use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use cosi_core::engine::hook::{AcceptAll, TimestampWindow};
use cosi_core::engine::{Binding, Event, RoundConfig, RoundOutput, StatementSource};
use cosi_core::group::{Group, Ristretto255};
use cosi_core::merkle::{sha256, Digest};
use cosi_core::multisig::{verify_collective, Mode};
use cosi_core::participation::Predicate;
use cosi_core::simnet::{Behavior, Deployment, Fault, FaultPhase, NetParams, Simulator};
use cosi_core::timestamp::{receipts_from_batch, record_source, TimestampRecord};

type G = Ristretto255;

const LIMIT: u64 = 120_000_000;

fn fixed(s: &'static [u8]) -> StatementSource {
    Box::new(move |_| s.to_vec())
}

fn setup(n: u32, cfg: RoundConfig, seed: u64) -> (Deployment<G>, Simulator<G>) {
    let dep = Deployment::<G>::generate(n, seed);
    let nodes = dep.nodes(&cfg, seed, |_| Box::new(AcceptAll));
    (dep, Simulator::new(nodes, NetParams::default()))
}

fn verifies(dep: &Deployment<G>, out: &RoundOutput<G>, predicate: &Predicate) -> bool {
    let r = &dep.roster;
    verify_collective(&r.keys(), &r.weights(), &out.statement, &out.signature, predicate).is_ok()
}

/// No node answered two different challenges with the same nonce.
fn nonces_fresh(sim: &Simulator<G>, n: u32) {
    for i in 0..n {
        let mut seen: BTreeMap<Vec<u8>, Vec<u8>> = BTreeMap::new();
        for (_, v, c) in sim.node(i).nonce_log() {
            let c = G::encode_scalar(c);
            if let Some(prev) = seen.insert(G::encode_element(v), c.clone()) {
                assert_eq!(prev, c, "node {i} reused a nonce");
            }
        }
    }
}

#[test]
fn failure_free_rounds() {
    for mode in [Mode::Restart, Mode::NoRestart] {
        for n in [1, 2, 3, 7, 15, 40] {
            let (dep, mut sim) = setup(n, RoundConfig { mode, branching: 3, ..RoundConfig::default() }, n as u64);
            for _ in 0..2 {
                let rep = sim.run_round(0, fixed(b"all present"), LIMIT);
                let out = rep.outcome.unwrap();
                assert!(verifies(&dep, &out, &Predicate::Threshold(n)), "{mode:?} n={n}");
                assert!(out.signature.exceptions.is_empty());
            }
            nonces_fresh(&sim, n);
        }
    }
}

#[test]
fn single_failure_matrix() {
    let phases = [FaultPhase::Announce, FaultPhase::Challenge];
    let behaviors = [Behavior::Crash, Behavior::Omit, Behavior::Lie];
    for mode in [Mode::Restart, Mode::NoRestart] {
        for n in [3u32, 7, 15] {
            for node in 1..n {
                for phase in phases {
                    for behavior in behaviors {
                        let cfg = RoundConfig { mode, branching: 2, ..RoundConfig::default() };
                        let (dep, mut sim) = setup(n, cfg, 11);
                        sim.add_fault(Fault { node, phase, behavior });
                        let ctx = format!("{mode:?} n={n} node={node} {phase:?} {behavior:?}");
                        let out = sim.run_round(0, fixed(b"matrix"), LIMIT).outcome.unwrap_or_else(|e| panic!("{ctx}: {e}"));
                        assert!(verifies(&dep, &out, &Predicate::Threshold(1)), "{ctx}");
                        assert!(!out.signature.participation.is_present(node), "{ctx}");
                        assert_eq!(out.signature.participation.present_count(), n - 1, "{ctx}");
                        nonces_fresh(&sim, n);
                    }
                }
            }
        }
    }
}

#[test]
fn no_restart_drop_becomes_exception() {
    for n in [3u32, 7, 15] {
        for node in 1..n {
            let cfg = RoundConfig { mode: Mode::NoRestart, branching: 2, ..RoundConfig::default() };
            let (dep, mut sim) = setup(n, cfg, 5);
            sim.add_fault(Fault { node, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
            let out = sim.run_round(0, fixed(b"drop"), LIMIT).outcome.unwrap();
            assert!(verifies(&dep, &out, &Predicate::Threshold(1)));
            assert_eq!(out.restarts, 0);
            let exc: Vec<u32> = out.signature.exceptions.iter().map(|e| e.index).collect();
            assert_eq!(exc, vec![node], "n={n}");
        }
    }
}

#[test]
fn restart_mode_retries_without_failed_node() {
    let cfg = RoundConfig { mode: Mode::Restart, branching: 2, ..RoundConfig::default() };
    let (dep, mut sim) = setup(7, cfg, 2);
    sim.add_fault(Fault { node: 1, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
    let out = sim.run_round(0, fixed(b"r"), LIMIT).outcome.unwrap();
    assert_eq!(out.restarts, 1);
    assert_eq!(out.failed, vec![1]);
    assert!(verifies(&dep, &out, &Predicate::Threshold(6)));
    assert!(sim.events().iter().any(|(_, _, e)| matches!(e, Event::Restarted { excluded, .. } if excluded == &vec![1])));
    nonces_fresh(&sim, 7);
}

#[test]
fn too_many_restarts_and_minimum() {
    let cfg = RoundConfig { branching: 2, max_restarts: 0, ..RoundConfig::default() };
    let (_, mut sim) = setup(7, cfg, 3);
    sim.add_fault(Fault { node: 2, phase: FaultPhase::Announce, behavior: Behavior::Crash });
    let err = sim.run_round(0, fixed(b"r"), LIMIT).outcome.unwrap_err();
    assert!(matches!(err, cosi_core::engine::RoundFailure::TooManyRestarts(0)), "{err}");

    let cfg = RoundConfig { mode: Mode::NoRestart, branching: 2, min_participants: 7, ..RoundConfig::default() };
    let (_, mut sim) = setup(7, cfg, 3);
    sim.add_fault(Fault { node: 5, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
    let err = sim.run_round(0, fixed(b"r"), LIMIT).outcome.unwrap_err();
    assert!(matches!(err, cosi_core::engine::RoundFailure::BelowMinimum { present: 6, required: 7 }), "{err}");
}

#[test]
fn double_failure_in_no_restart_mode() {
    // A node and its parent both lost after committing.
    let cfg = RoundConfig { mode: Mode::NoRestart, branching: 2, ..RoundConfig::default() };
    let (dep, mut sim) = setup(15, cfg, 9);
    sim.add_fault(Fault { node: 1, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
    sim.add_fault(Fault { node: 3, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
    let out = sim.run_round(0, fixed(b"two"), LIMIT).outcome.unwrap();
    // Node 3's children cannot be separated from its aggregate once 1 is
    // gone too, so the round restarts without the two failed nodes.
    assert_eq!(out.restarts, 1);
    assert!(verifies(&dep, &out, &Predicate::Threshold(13)));
    assert_eq!(out.signature.participation.absent().collect::<Vec<_>>(), vec![1, 3]);
    assert!(out.signature.exceptions.is_empty());
}

#[test]
fn view_change_after_leader_crash() {
    let cfg = RoundConfig { branching: 2, view_timeout_us: Some(1_000_000), ..RoundConfig::default() };
    let (dep, mut sim) = setup(4, cfg, 4);
    sim.add_fault(Fault { node: 0, phase: FaultPhase::Start, behavior: Behavior::Crash });
    sim.start_all();
    let activated = sim.run_until(5_000_000, |n, e| n == 1 && matches!(e, Event::ViewActivated { .. }));
    let i = activated.expect("view 1 activates");
    assert!(matches!(sim.events()[i].2, Event::ViewActivated { view: 1, leader: 1 }));
    assert!(sim.node(1).is_leader());
    let out = sim.run_round(1, fixed(b"after view change"), 5_000_000).outcome.unwrap();
    assert_eq!(out.signature.participation.present_count(), 3);
    assert!(verifies(&dep, &out, &Predicate::Threshold(3)));
    assert!(sim.now() < 5_000_000, "{}", sim.now());
}

#[test]
fn two_votes_do_not_change_view() {
    let cfg = RoundConfig { branching: 2, view_timeout_us: Some(1_000_000), ..RoundConfig::default() };
    let (_, mut sim) = setup(4, cfg, 4);
    sim.add_fault(Fault { node: 0, phase: FaultPhase::Start, behavior: Behavior::Crash });
    sim.add_fault(Fault { node: 3, phase: FaultPhase::Start, behavior: Behavior::Crash });
    sim.start_all();
    assert!(sim.run_until(10_000_000, |_, e| matches!(e, Event::ViewActivated { .. })).is_none());
    assert_eq!(sim.node(1).view(), 0);
}

#[test]
fn back_dated_statement_is_refused() {
    let delta = 10;
    let epoch = 1_700_000_000;
    let dep = Deployment::<G>::generate(4, 8);
    let cfg = RoundConfig { branching: 2, binding: Binding::Challenge, ..RoundConfig::default() };
    let mut nodes = dep.nodes(&cfg, 8, |_| Box::new(TimestampWindow { skew_secs: delta }));
    nodes.iter_mut().for_each(|n| n.set_clock(epoch, 0));
    let mut sim = Simulator::new(nodes, NetParams::default());
    let honest = sim.run_round(0, record_source(0, epoch, [0; 32]), LIMIT).outcome.unwrap();
    assert!(verifies(&dep, &honest, &Predicate::Threshold(3)));
    let back = sim.run_round(0, record_source(1, epoch - 2 * delta, honest_hash(&honest)), LIMIT);
    let sig = back.outcome.unwrap();
    assert_eq!(sig.refused, vec![1, 2, 3]);
    assert!(!verifies(&dep, &sig, &Predicate::Threshold(3)));
}

fn honest_hash(out: &RoundOutput<G>) -> Digest {
    sha256(&out.statement)
}

#[test]
fn scalable_collection_gives_receipts() {
    let dep = Deployment::<G>::generate(7, 12);
    let cfg = RoundConfig {
        branching: 2,
        binding: Binding::Challenge,
        collect: true,
        broadcast_done: true,
        ..RoundConfig::default()
    };
    let mut nodes = dep.nodes(&cfg, 12, |_| Box::new(AcceptAll));
    let items: Vec<Digest> = (0..7u8).map(|i| sha256(&[b'r', i])).collect();
    for (i, n) in nodes.iter_mut().enumerate() {
        n.set_batch(Arc::new(Mutex::new(vec![(i as u64, items[i])])));
    }
    let mut sim = Simulator::new(nodes, NetParams::default());
    let out = sim.run_round(0, record_source(0, 100, [0; 32]), LIMIT).outcome.unwrap();
    let record = TimestampRecord::decode(&out.statement).unwrap();
    let mut count = 0;
    for (_, node, e) in sim.events() {
        if let Event::BatchSigned { statement, signature, items: its, proofs, .. } = e {
            for (t, receipt) in receipts_from_batch(statement, signature, its, proofs).unwrap() {
                assert_eq!(receipt.record, record);
                receipt.verify(&items[t as usize], &dep.roster, &Predicate::Threshold(7)).unwrap();
                assert_eq!(t, *node as u64);
                count += 1;
            }
        }
    }
    assert_eq!(count, 7);
}

#[test]
fn collected_requests_survive_a_failed_parent() {
    let dep = Deployment::<G>::generate(7, 13);
    let cfg = RoundConfig {
        mode: Mode::Restart,
        branching: 2,
        binding: Binding::Challenge,
        collect: true,
        broadcast_done: true,
        ..RoundConfig::default()
    };
    let mut nodes = dep.nodes(&cfg, 13, |_| Box::new(AcceptAll));
    // Node 3 is a leaf under node 1.
    let item = sha256(b"leaf request");
    let queue = Arc::new(Mutex::new(vec![(42, item)]));
    nodes[3].set_batch(queue.clone());
    let mut sim = Simulator::new(nodes, NetParams::default());
    sim.add_fault(Fault { node: 1, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
    let out = sim.run_round(0, record_source(0, 100, [0; 32]), LIMIT).outcome.unwrap();
    assert_eq!(out.restarts, 1);
    let signed = sim.events().iter().find_map(|(_, n, e)| match e {
        Event::BatchSigned { statement, signature, items, proofs, .. } if *n == 3 => {
            Some(receipts_from_batch(statement, signature, items, proofs).unwrap())
        }
        _ => None,
    });
    let receipts = signed.expect("leaf batch signed after restart");
    assert_eq!(receipts.len(), 1);
    assert_eq!(receipts[0].0, 42);
    receipts[0].1.verify(&item, &dep.roster, &Predicate::Threshold(6)).unwrap();
    assert!(queue.lock().unwrap().is_empty());
}

