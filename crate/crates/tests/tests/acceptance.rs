//! Acceptance suite: one line per criterion, PASS or FAIL with the measured
//! numbers. The test fails if any criterion fails.

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use cosi_cli::args::{GroupId, SimulateArgs, StampVerifyArgs};
use cosi_cli::commands::{cmd_simulate, cmd_stamp_verify};
use cosi_core::engine::hook::{AcceptAll, TimestampWindow};
use cosi_core::engine::{Binding, Event, RoundConfig, StatementSource};
use cosi_core::group::{Group, KeyPair, Ristretto255, ToyGroup};
use cosi_core::merkle::sha256;
use cosi_core::multisig::{
    adjust_key_for_absent, aggregate_elements, aggregate_responses, collective_challenge, response_share,
    verify_collective, verify_with_key, CollectiveSignature, Mode,
};
use cosi_core::participation::{ParticipationSet, Predicate};
use cosi_core::simnet::report::{run_sim, Scheme, SimConfig};
use cosi_core::simnet::{Behavior, Deployment, Fault, FaultPhase, NetParams, Simulator};
use cosi_core::timestamp::{receipts_from_batch, record_source};
use cosi_core::topology::TreeTopology;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const LIMIT: u64 = 600_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixed(s: Vec<u8>) -> StatementSource {
    Box::new(move |_| s.clone())
}

fn sim<G: Group>(dep: &Deployment<G>, cfg: &RoundConfig, seed: u64) -> Simulator<G> {
    Simulator::new(dep.nodes(cfg, seed, |_| Box::new(AcceptAll)), NetParams::default())
}

fn verifies<G: Group>(dep: &Deployment<G>, statement: &[u8], sig: &CollectiveSignature<G>, p: &Predicate) -> bool {
    verify_collective(&dep.roster.keys(), &dep.roster.weights(), statement, sig, p).is_ok()
}

fn signature_size() -> Outcome {
    let dep = Deployment::<Ristretto255>::generate(16, 1);
    let cfg = RoundConfig { branching: 4, ..RoundConfig::default() };
    let out = match sim(&dep, &cfg, 1).run_round(0, fixed(b"size".to_vec()), LIMIT).outcome {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("round failed: {e}")),
    };
    let len = out.signature.encode().len();
    let ok = out.signature.participation.present_count() == 16 && verifies(&dep, b"size", &out.signature, &Predicate::Threshold(16));
    outcome(ok && len <= 100, format!("all 16 present, {len} bytes encoded (budget 100)"))
}

/// Signs `statement` with exactly the `present` keys.
fn sign_present<G: Group>(kps: &[KeyPair<G>], present: &[u32], statement: &[u8], rng: &mut ChaCha20Rng) -> CollectiveSignature<G> {
    let nonces: Vec<G::Scalar> = present.iter().map(|_| G::random_scalar(rng)).collect();
    let commits: Vec<G::Element> = nonces.iter().map(G::base_pow).collect();
    let c = collective_challenge::<G>(&aggregate_elements::<G>(&commits), None, statement);
    let shares: Vec<G::Scalar> =
        present.iter().zip(&nonces).map(|(&i, v)| response_share::<G>(v, &c, kps[i as usize].secret())).collect();
    CollectiveSignature {
        mode: Mode::Restart,
        challenge: c,
        response: aggregate_responses::<G>(&shares),
        commit_root: None,
        participation: ParticipationSet::from_present(kps.len() as u32, present.iter().copied()),
        exceptions: vec![],
    }
}

fn worst_case_size() -> Outcome {
    let w = 8192u32;
    let budget = 2 * 32 + (w as usize).div_ceil(8) + 16;
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let kps: Vec<KeyPair<Ristretto255>> = (0..w).map(|_| KeyPair::generate(&mut rng)).collect();
    let keys: Vec<_> = kps.iter().map(|k| *k.public()).collect();
    let weights = vec![1; w as usize];
    let mut shuffled: Vec<u32> = (0..w).collect();
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.gen_range(0..=i));
    }
    let layouts: [(&str, Vec<u32>); 3] = [
        ("alternating", (0..w).step_by(2).collect()),
        ("first half", (0..w / 2).collect()),
        ("random half", shuffled[..w as usize / 2].to_vec()),
    ];
    let mut worst = 0;
    for (name, mut present) in layouts {
        present.sort_unstable();
        let sig = sign_present(&kps, &present, b"wide", &mut rng);
        if verify_collective(&keys, &weights, b"wide", &sig, &Predicate::Threshold(w / 2)).is_err() {
            return outcome(false, format!("{name} layout does not verify"));
        }
        worst = worst.max(sig.encode().len());
    }
    outcome(worst <= budget, format!("W=8192, 4096 absent: largest encoding {worst} bytes (budget {budget})"))
}

fn exception_soundness() -> Outcome {
    // One leader plus eight witnesses that may be absent.
    let n = 9u32;
    let dep = Deployment::<ToyGroup>::generate(n, 3);
    let keys = dep.roster.keys();
    let full = aggregate_elements::<ToyGroup>(&keys);
    let cfg = RoundConfig { branching: 2, max_restarts: n, ..RoundConfig::default() };
    let (mut adjusted_ok, mut full_rejects, mut cases) = (0, 0, 0);
    for mask in 1u32..(1 << (n - 1)) {
        let absent: Vec<u32> = (1..n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
        let mut s = sim(&dep, &cfg, mask as u64);
        for &a in &absent {
            s.add_fault(Fault { node: a, phase: FaultPhase::Start, behavior: Behavior::Crash });
        }
        let statement = format!("subset {mask}").into_bytes();
        let Ok(out) = s.run_round(0, fixed(statement.clone()), LIMIT).outcome else { continue };
        if out.signature.participation.absent().collect::<Vec<_>>() != absent {
            continue;
        }
        cases += 1;
        let absent_keys: Vec<_> = absent.iter().map(|&i| keys[i as usize]).collect();
        let adjusted = adjust_key_for_absent::<ToyGroup>(&full, &absent_keys);
        if verify_with_key(&adjusted, &statement, &out.signature).is_ok() {
            adjusted_ok += 1;
        }
        if verify_with_key(&full, &statement, &out.signature).is_err() {
            full_rejects += 1;
        }
    }
    let total = (1 << (n - 1)) - 1;
    outcome(
        cases == total && adjusted_ok == total && full_rejects == total,
        format!(
            "toy group, {cases}/{total} subsets signed, {adjusted_ok} verify under the adjusted key, \
             {full_rejects} fail under the full key ({} still verify: the challenge space has 11 elements)",
            cases - full_rejects
        ),
    )
}

fn exception_soundness_prod_note() -> String {
    let n = 9u32;
    let dep = Deployment::<Ristretto255>::generate(n, 3);
    let keys = dep.roster.keys();
    let full = aggregate_elements::<Ristretto255>(&keys);
    let kps = &dep.keypairs;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut good = 0;
    let total = (1u32 << (n - 1)) - 1;
    for mask in 1..=total {
        let absent: Vec<u32> = (1..n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
        let present: Vec<u32> = (0..n).filter(|i| !absent.contains(i)).collect();
        let sig = sign_present(kps, &present, b"m", &mut rng);
        let absent_keys: Vec<_> = absent.iter().map(|&i| keys[i as usize]).collect();
        let adjusted = adjust_key_for_absent::<Ristretto255>(&full, &absent_keys);
        if verify_with_key(&adjusted, b"m", &sig).is_ok() && verify_with_key(&full, b"m", &sig).is_err() {
            good += 1;
        }
    }
    format!("same enumeration in the production group: {good}/{total} verify adjusted and fail under the full key")
}

fn no_restart_flow() -> Outcome {
    let mut cases = 0;
    for n in [3u32, 7, 15] {
        let dep = Deployment::<Ristretto255>::generate(n, 4);
        let cfg = RoundConfig { mode: Mode::NoRestart, branching: 2, ..RoundConfig::default() };
        for d in 1..n {
            for behavior in [Behavior::Crash, Behavior::Omit] {
                let mut s = sim(&dep, &cfg, d as u64);
                s.add_fault(Fault { node: d, phase: FaultPhase::Challenge, behavior });
                let statement = format!("drop {d}").into_bytes();
                let out = match s.run_round(0, fixed(statement.clone()), LIMIT).outcome {
                    Ok(o) => o,
                    Err(e) => return outcome(false, format!("N={n} drop {d} {behavior:?}: {e}")),
                };
                let exc: Vec<u32> = out.signature.exceptions.iter().map(|e| e.index).collect();
                if out.restarts != 0 || exc != vec![d] || !verifies(&dep, &statement, &out.signature, &Predicate::Threshold(n - 1)) {
                    return outcome(false, format!("N={n} drop {d} {behavior:?}: exceptions {exc:?}, restarts {}", out.restarts));
                }
                cases += 1;
            }
        }
    }
    outcome(true, format!("{cases} drops across N=3,7,15: each verifies with exactly the dropped witness as exception"))
}

fn tree_shape() -> Outcome {
    match TreeTopology::bary(33825, 32, 0) {
        Ok(t) => outcome(t.depth() == 3 && t.is_full(), format!("N=33825 B=32: depth {}, fully populated {}", t.depth(), t.is_full())),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn one_row(scheme: Scheme, n: u32) -> cosi_core::simnet::report::RoundMetrics {
    let cfg = SimConfig::new(scheme, n, 8);
    run_sim::<Ristretto255>(&cfg).expect("simulation runs").remove(0)
}

fn scaling() -> Outcome {
    let cosi: Vec<_> = [64, 256, 1024].iter().map(|&n| one_row(Scheme::Cosi, n)).collect();
    let naive: Vec<_> = [64, 256, 1024].iter().map(|&n| one_row(Scheme::Naive, n)).collect();
    let jvss: Vec<_> = [16, 64].iter().map(|&n| one_row(Scheme::Jvss, n)).collect();
    let bytes = |r: &cosi_core::simnet::report::RoundMetrics| (r.root.bytes_sent + r.root.bytes_recv) as f64;
    let cosi_growth = bytes(&cosi[2]) / bytes(&cosi[0]);
    let naive_growth = bytes(&naive[2]) / bytes(&naive[0]);
    let jvss_growth = jvss[1].totals.msgs_sent as f64 / jvss[0].totals.msgs_sent as f64;
    let all_ok = cosi.iter().chain(&naive).chain(&jvss).all(|r| r.ok);
    outcome(
        all_ok && cosi_growth <= 2.0 && naive_growth >= 10.0 && jvss_growth >= 16.0,
        format!(
            "root bytes 64->1024: cosi x{cosi_growth:.2}, naive x{naive_growth:.2}; jvss messages 16->64: x{jvss_growth:.2}"
        ),
    )
}

fn latency() -> Outcome {
    let cfg = SimConfig::new(Scheme::Cosi, 4096, 16);
    let row = run_sim::<Ristretto255>(&cfg).expect("simulation runs").remove(0);
    let secs = row.latency_us as f64 / 1e6;
    outcome(row.ok && (1.2..=3.0).contains(&secs), format!("N=4096 B=16: {secs:.3} s simulated"))
}

fn view_change() -> Outcome {
    let dep = Deployment::<Ristretto255>::generate(4, 4);
    let cfg = RoundConfig { branching: 2, view_timeout_us: Some(1_000_000), ..RoundConfig::default() };
    let mut s = sim(&dep, &cfg, 4);
    s.add_fault(Fault { node: 0, phase: FaultPhase::Start, behavior: Behavior::Crash });
    s.start_all();
    let Some(i) = s.run_until(5_000_000, |n, e| n == 1 && matches!(e, Event::ViewActivated { .. })) else {
        return outcome(false, "view 1 never activated");
    };
    let activated = matches!(s.events()[i].2, Event::ViewActivated { view: 1, leader: 1 });
    let out = match s.run_round(1, fixed(b"after".to_vec()), 5_000_000).outcome {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("round under view 1 failed: {e}")),
    };
    let present = out.signature.participation.present_count();
    let t = s.now() as f64 / 1e6;
    outcome(
        activated && present == 3 && verifies(&dep, b"after", &out.signature, &Predicate::Threshold(3)) && t < 5.0,
        format!("2f+1 = 3 votes activated view 1 with leader 1; next round present {present}/4, done at {t:.2} s simulated"),
    )
}

fn back_dating() -> Outcome {
    let delta = 10;
    let epoch = 1_700_000_000;
    let dep = Deployment::<Ristretto255>::generate(4, 8);
    let cfg = RoundConfig { branching: 2, binding: Binding::Challenge, ..RoundConfig::default() };
    let mut nodes = dep.nodes(&cfg, 8, |_| Box::new(TimestampWindow { skew_secs: delta }));
    nodes.iter_mut().for_each(|n| n.set_clock(epoch, 0));
    let mut s = Simulator::new(nodes, NetParams::default());
    let honest = match s.run_round(0, record_source(0, epoch, [0; 32]), LIMIT).outcome {
        Ok(o) if verifies(&dep, &o.statement, &o.signature, &Predicate::Threshold(3)) => o,
        _ => return outcome(false, "honest record did not reach 2f+1"),
    };
    let back = s.run_round(0, record_source(1, epoch - 2 * delta, sha256(&honest.statement)), LIMIT);
    let reached = back
        .outcome
        .as_ref()
        .is_ok_and(|o| verifies(&dep, &o.statement, &o.signature, &Predicate::Threshold(3)));
    let detail = match &back.outcome {
        Ok(o) => format!("back-dated record signed by {}/4, refused by {:?}", o.signature.participation.present_count(), o.refused),
        Err(e) => format!("back-dated round failed: {e}"),
    };
    outcome(!reached, format!("honest record 4/4; {detail}; Threshold(3) not reached"))
}

fn stamp_completeness() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let dep = Deployment::<Ristretto255>::generate(7, 12);
    let roster_path = dir.path().join("roster.json");
    std::fs::write(&roster_path, dep.roster.to_json()).expect("write roster");
    let cfg = RoundConfig {
        branching: 2,
        binding: Binding::Challenge,
        collect: true,
        broadcast_done: true,
        ..RoundConfig::default()
    };
    let mut nodes = dep.nodes(&cfg, 12, |_| Box::new(AcceptAll));
    let mut docs = Vec::new();
    for (i, node) in nodes.iter_mut().enumerate() {
        let path = dir.path().join(format!("doc{i}.txt"));
        let body = format!("request submitted to witness {i}");
        std::fs::write(&path, &body).expect("write doc");
        node.set_batch(Arc::new(Mutex::new(vec![(i as u64, sha256(body.as_bytes()))])));
        docs.push(path);
    }
    let mut s = Simulator::new(nodes, NetParams::default());
    if let Err(e) = s.run_round(0, record_source(0, 1_700_000_000, [0; 32]), LIMIT).outcome {
        return outcome(false, format!("round failed: {e}"));
    }
    let (mut verified, mut issued) = (0, 0);
    for (_, _, e) in s.events() {
        let Event::BatchSigned { statement, signature, items, proofs, .. } = e else { continue };
        let receipts: Vec<(u64, _)> = receipts_from_batch(statement, signature, items, proofs).unwrap_or_default();
        for (ticket, receipt) in receipts {
            issued += 1;
            let path = dir.path().join(format!("receipt{ticket}.bin"));
            std::fs::write(&path, receipt.encode()).expect("write receipt");
            let args = StampVerifyArgs {
                roster: roster_path.clone(),
                group: Some(GroupId::Prod),
                statement_file: docs[ticket as usize].clone(),
                predicate: Some(r#"{"threshold": 7}"#.into()),
                receipt: path,
            };
            if cmd_stamp_verify(&args, &mut Vec::new()).is_ok() {
                verified += 1;
            }
        }
    }
    outcome(verified == 7 && issued == 7, format!("{issued} receipts issued for 7 requests, {verified} verified by stamp-verify"))
}

fn determinism() -> Outcome {
    let args = SimulateArgs { sweep: None, seed: Some(11), group: GroupId::Prod, mode: None, out: None };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    if cmd_simulate(&args, &mut a).is_err() || cmd_simulate(&args, &mut b).is_err() {
        return outcome(false, "simulate failed");
    }
    let rows = a.iter().filter(|&&c| c == b'\n').count().saturating_sub(1);
    outcome(!a.is_empty() && a == b, format!("built-in sweep, seed 11: {rows} rows, {} bytes, identical", a.len()))
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

fn dlog(y: u64) -> Option<u64> {
    (0..11).find(|&v| pow_mod(2, v, 23) == y)
}

/// Recomputes a toy round from secrets and nonces with plain integer
/// arithmetic modulo 23 and 11.
fn oracle_agrees(dep: &Deployment<ToyGroup>, s: &Simulator<ToyGroup>, out: &cosi_core::engine::RoundOutput<ToyGroup>) -> bool {
    let sig = &out.signature;
    let c = sig.challenge.value() as u64;
    let (mut key, mut commit, mut response) = (1u64, 1u64, 0u64);
    for i in sig.participation.present() {
        let x = dep.keypairs[i as usize].secret().value() as u64;
        let Some(&(_, v_elem, c_i)) = s.node(i).nonce_log().iter().find(|(r, _, _)| *r == out.round) else {
            return false;
        };
        let Some(v) = dlog(v_elem.value() as u64) else { return false };
        if c_i.value() as u64 != c {
            return false;
        }
        key = key * pow_mod(2, x, 23) % 23;
        commit = commit * pow_mod(2, v, 23) % 23;
        response = (response + v + 11 * 11 - c * x % 11) % 11;
    }
    let lhs = pow_mod(2, response, 23) * pow_mod(key, c, 23) % 23;
    let protocol_key = cosi_core::multisig::aggregate_public_key::<ToyGroup>(&dep.roster.keys(), sig.participation.present());
    response == sig.response.value() as u64
        && lhs == commit
        && protocol_key.is_ok_and(|k| k.value() as u64 == key)
        && verifies(dep, &out.statement, sig, &Predicate::Threshold(1))
}

fn cross_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let (mut rounds, mut mismatches, mut failed) = (0, 0, 0);
    while rounds < 1000 {
        let n = rng.gen_range(1..=8u32);
        let mode = if rng.gen_bool(0.5) { Mode::Restart } else { Mode::NoRestart };
        let cfg = RoundConfig { mode, branching: rng.gen_range(2..=3), ..RoundConfig::default() };
        let seed = rng.gen();
        let dep = Deployment::<ToyGroup>::generate(n, seed);
        let mut s = sim(&dep, &cfg, seed);
        if n > 1 && rng.gen_bool(0.3) {
            let phase = if rng.gen_bool(0.5) { FaultPhase::Announce } else { FaultPhase::Challenge };
            s.add_fault(Fault { node: rng.gen_range(1..n), phase, behavior: Behavior::Crash });
        }
        let statement: Vec<u8> = (0..rng.gen_range(0..16)).map(|_| rng.gen()).collect();
        rounds += 1;
        match s.run_round(0, fixed(statement), LIMIT).outcome {
            Ok(out) => {
                if !oracle_agrees(&dep, &s, &out) {
                    mismatches += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    outcome(
        mismatches == 0 && failed == 0,
        format!("{rounds} toy rounds, {mismatches} mismatches against modular arithmetic, {failed} rounds failed"),
    )
}

#[test]
fn acceptance() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Duration); 12] = [
        ("signature size", signature_size, Duration::from_secs(5)),
        ("worst-case size bound", worst_case_size, Duration::from_secs(30)),
        ("exhaustive exception soundness", exception_soundness, Duration::from_secs(10)),
        ("no-restart flow", no_restart_flow, Duration::from_secs(30)),
        ("tree shape", tree_shape, Duration::from_secs(1)),
        ("scaling separation", scaling, Duration::from_secs(120)),
        ("simulated latency", latency, Duration::from_secs(120)),
        ("view change", view_change, Duration::from_secs(5)),
        ("timestamp back-dating defense", back_dating, Duration::from_secs(5)),
        ("timestamp completeness", stamp_completeness, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(60)),
        ("cross-oracle crypto", cross_oracle, Duration::from_secs(30)),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        if !pass {
            failed.push(i + 1);
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "criterion {:>2} {verdict}: {name}: {} [{took:.2?}, budget {budget:?}]", i + 1, o.detail);
        if i == 2 {
            let _ = writeln!(out, "             note: {}", exception_soundness_prod_note());
        }
    }
    let _ = out.flush();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
