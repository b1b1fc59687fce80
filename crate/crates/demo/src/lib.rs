//! WebAssembly bindings for the browser demo in `www/`. Every export
//! returns a JSON string so the page needs no generated type glue.

use cosi_core::engine::hook::AcceptAll;
use cosi_core::engine::{RoundConfig, StatementSource};
use cosi_core::group::Ristretto255;
use cosi_core::multisig::{verify_collective, Mode};
use cosi_core::participation::{choose_smallest, EncodingKind, ParticipationSet, Predicate};
use cosi_core::simnet::baseline::naive_round;
use cosi_core::simnet::{Behavior, Deployment, Fault, FaultPhase, NetParams, Simulator};
use cosi_core::topology::TreeTopology;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest roster the page may simulate.
pub const MAX_SIM: u32 = 512;
/// Largest tree the page may lay out.
pub const MAX_LAYOUT: u32 = 2048;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Node positions for drawing the communication tree: `x` in `[0, 1]`
/// from an in-order walk, `depth` as the row.
#[wasm_bindgen]
pub fn tree_layout(n: u32, branching: u32) -> String {
    if n == 0 || n > MAX_LAYOUT {
        return error(format!("N must be between 1 and {MAX_LAYOUT}"));
    }
    let tree = match TreeTopology::bary(n, branching, 0) {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    // Leaves get consecutive slots; parents sit over their children.
    let mut x = vec![0f64; n as usize];
    let mut next = 0f64;
    let mut stack = vec![(tree.root(), false)];
    while let Some((v, done)) = stack.pop() {
        let kids = tree.children(v);
        if kids.is_empty() {
            x[v as usize] = next;
            next += 1.0;
        } else if done {
            x[v as usize] = (x[kids[0] as usize] + x[kids[kids.len() - 1] as usize]) / 2.0;
        } else {
            stack.push((v, true));
            stack.extend(kids.iter().rev().map(|&k| (k, false)));
        }
    }
    let width = (next - 1.0).max(1.0);
    let nodes: Vec<Value> = (0..n)
        .map(|v| {
            json!({
                "id": v,
                "parent": tree.parent(v),
                "depth": tree.node_depth(v),
                "x": x[v as usize] / width,
            })
        })
        .collect();
    json!({ "n": n, "branching": branching, "depth": tree.depth(), "full": tree.is_full(), "nodes": nodes }).to_string()
}

fn parse_failed(failed: &str, n: u32) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in failed.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty()) {
        let i: u32 = part.parse().map_err(|_| format!("not a witness index: {part:?}"))?;
        if i == 0 || i >= n {
            return Err(format!("failed witnesses must be between 1 and {}", n.saturating_sub(1)));
        }
        out.push(i);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Runs one simulated signing round. `failed` lists witnesses (comma
/// separated) that crash after committing; `no_restart` selects the
/// commit-tree mode that absorbs them without restarting.
#[wasm_bindgen]
pub fn simulate_round(n: u32, branching: u32, rtt_ms: u32, failed: &str, no_restart: bool, seed: u32) -> String {
    if n == 0 || n > MAX_SIM {
        return error(format!("N must be between 1 and {MAX_SIM}"));
    }
    if branching == 0 {
        return error("branching must be positive");
    }
    let failed = match parse_failed(failed, n) {
        Ok(f) => f,
        Err(e) => return error(e),
    };
    let net = NetParams { rtt_us: rtt_ms as u64 * 1000, ..NetParams::default() };
    let mode = if no_restart { Mode::NoRestart } else { Mode::Restart };
    let cfg = RoundConfig { mode, branching, hop_timeout_us: 4 * net.rtt_us.max(1000), ..RoundConfig::default() };
    let dep = Deployment::<Ristretto255>::generate(n, seed as u64);
    let mut sim = Simulator::new(dep.nodes(&cfg, seed as u64, |_| Box::new(AcceptAll)), net);
    for &node in &failed {
        sim.add_fault(Fault { node, phase: FaultPhase::Challenge, behavior: Behavior::Crash });
    }
    let statement = b"demo statement".to_vec();
    let source: StatementSource = Box::new(move |_| statement.clone());
    let report = sim.run_round(0, source, 600_000_000);
    let naive = naive_round(&dep, b"demo statement", &net, &mut ChaCha20Rng::seed_from_u64(seed as u64));
    let naive = json!({
        "latency_ms": naive.latency_us as f64 / 1000.0,
        "root_msgs": naive.root().msgs_sent + naive.root().msgs_recv,
        "root_bytes": naive.root().bytes_sent + naive.root().bytes_recv,
    });
    let out = match report.outcome {
        Ok(o) => o,
        Err(e) => return json!({ "error": e.to_string(), "naive": naive }).to_string(),
    };
    let sig = &out.signature;
    let verified =
        verify_collective(&dep.roster.keys(), &dep.roster.weights(), &out.statement, sig, &Predicate::Threshold(1)).is_ok();
    json!({
        "latency_ms": report.latency_us as f64 / 1000.0,
        "root_msgs": report.root.msgs_sent + report.root.msgs_recv,
        "root_bytes": report.root.bytes_sent + report.root.bytes_recv,
        "total_msgs": report.totals.msgs_sent,
        "restarts": out.restarts,
        "present": sig.participation.present_count(),
        "absent": sig.participation.absent().collect::<Vec<_>>(),
        "exceptions": sig.exceptions.iter().map(|e| e.index).collect::<Vec<_>>(),
        "signature_bytes": sig.encode().len(),
        "verified": verified,
        "naive": naive,
    })
    .to_string()
}

/// Sizes of the three participation encodings when `absent` of `w`
/// witnesses are missing, either as one block or spread evenly.
#[wasm_bindgen]
pub fn participation_sizes(w: u32, absent: u32, spread: bool) -> String {
    if w == 0 || absent > w {
        return error("need 0 <= absent <= W and W > 0");
    }
    let missing: Vec<u32> = if spread && absent > 0 {
        (0..absent).map(|i| (i as u64 * w as u64 / absent as u64) as u32).collect()
    } else {
        (0..absent).collect()
    };
    let set = ParticipationSet::from_absent(w, missing);
    let p = set.present_count();
    let best = choose_smallest(&set);
    let name = |k: EncodingKind| match k {
        EncodingKind::AbsentList => "absent list",
        EncodingKind::PresentList => "present list",
        EncodingKind::Bitmap => "bitmap",
    };
    let sizes: Vec<Value> = [EncodingKind::AbsentList, EncodingKind::PresentList, EncodingKind::Bitmap]
        .into_iter()
        .map(|k| json!({ "kind": name(k), "bytes": k.size(w, p), "chosen": k == best }))
        .collect();
    // Magic, group, mode, challenge, response and the exception count in
    // a restart-mode signature with no exceptions.
    let fixed = 4 + 1 + 1 + 2 * 32 + 2;
    json!({ "w": w, "present": p, "sizes": sizes, "signature_bytes": fixed + best.size(w, p) }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn layout_covers_every_node() {
        let v = parse(tree_layout(21, 4));
        assert_eq!(v["depth"], 2);
        assert_eq!(v["full"], true);
        let nodes = v["nodes"].as_array().unwrap();
        assert_eq!(nodes.len(), 21);
        assert!(nodes[0]["parent"].is_null());
        assert!(nodes.iter().all(|n| (0.0..=1.0).contains(&n["x"].as_f64().unwrap())));
        assert!(parse(tree_layout(0, 4))["error"].is_string());
    }

    #[test]
    fn round_without_failures_verifies() {
        let v = parse(simulate_round(16, 4, 100, "", false, 1));
        assert_eq!(v["present"], 16);
        assert_eq!(v["verified"], true);
        assert_eq!(v["signature_bytes"], 77);
        assert!(v["naive"]["root_msgs"].as_u64().unwrap() > v["root_msgs"].as_u64().unwrap());
    }

    #[test]
    fn crashed_witnesses_are_absent() {
        for no_restart in [false, true] {
            let v = parse(simulate_round(16, 4, 100, "5, 9", no_restart, 2));
            assert_eq!(v["verified"], true, "{v}");
            assert_eq!(v["absent"], json!([5, 9]), "{v}");
        }
        assert!(parse(simulate_round(8, 2, 100, "0", false, 1))["error"].is_string());
        assert!(parse(simulate_round(8, 2, 100, "x", false, 1))["error"].is_string());
    }

    #[test]
    fn sizes_pick_the_smallest() {
        let v = parse(participation_sizes(8192, 4096, true));
        let chosen: Vec<_> = v["sizes"].as_array().unwrap().iter().filter(|s| s["chosen"] == true).collect();
        assert_eq!(chosen.len(), 1);
        assert_eq!(chosen[0]["kind"], "bitmap");
        assert_eq!(chosen[0]["bytes"], 5 + 1024);
        assert_eq!(parse(participation_sizes(16, 0, false))["signature_bytes"], 77);
    }
}
