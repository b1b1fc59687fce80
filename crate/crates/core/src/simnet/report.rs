//! Sweep configuration, per-round metrics for every scheme, and CSV output.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::baseline::{naive_round, ntree_round};
use super::jvss::{jvss_setup, jvss_sign_round, JvssError};
use super::{Deployment, Fault, NetParams, NodeMetrics, Simulator};
use crate::engine::hook::AcceptAll;
use crate::engine::RoundConfig;
use crate::group::Group;
use crate::multisig::{verify_collective, Mode};
use crate::participation::Predicate;
use crate::topology::{TopologyError, TreeTopology};

pub const CSV_HEADER: &str = "scheme,N,B,round,latency_ms,root_msgs,root_bytes,root_compute";

/// Simulated time a cosi round may take before it counts as failed.
const ROUND_LIMIT_US: u64 = 600_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cosi,
    Naive,
    Ntree,
    Jvss,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cosi => "cosi",
            Scheme::Naive => "naive",
            Scheme::Ntree => "ntree",
            Scheme::Jvss => "jvss",
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Jvss(#[from] JvssError),
    #[error("sweep file: {0}")]
    Sweep(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub n: u32,
    pub branching: u32,
    pub net: NetParams,
    pub faults: Vec<Fault>,
    pub scheme: Scheme,
    pub rounds: u32,
    pub mode: Mode,
}

impl SimConfig {
    pub fn new(scheme: Scheme, n: u32, branching: u32) -> Self {
        SimConfig {
            seed: 1,
            n,
            branching,
            net: NetParams::default(),
            faults: Vec::new(),
            scheme,
            rounds: 1,
            mode: Mode::Restart,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundMetrics {
    pub scheme: Scheme,
    pub n: u32,
    pub branching: u32,
    pub round: u32,
    pub latency_us: u64,
    pub root: NodeMetrics,
    pub totals: NodeMetrics,
    /// The round produced a signature that verifies.
    pub ok: bool,
}

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}.{:03},{},{},{}",
            self.scheme.name(),
            self.n,
            self.branching,
            self.round,
            self.latency_us / 1000,
            self.latency_us % 1000,
            self.root.msgs_sent + self.root.msgs_recv,
            self.root.bytes_sent + self.root.bytes_recv,
            self.root.compute
        )
    }
}

/// Runs `cfg.rounds` rounds of one scheme.
pub fn run_sim<G: Group>(cfg: &SimConfig) -> Result<Vec<RoundMetrics>, SimError> {
    if cfg.n == 0 {
        return Err(SimError::Config("N must be positive".into()));
    }
    let dep = Deployment::<G>::generate(cfg.n, cfg.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let row = |round, latency_us, root, totals, ok| RoundMetrics {
        scheme: cfg.scheme,
        n: cfg.n,
        branching: cfg.branching,
        round,
        latency_us,
        root,
        totals,
        ok,
    };
    let statement = |r: u32| format!("simulated round {r}").into_bytes();
    let mut out = Vec::new();
    match cfg.scheme {
        Scheme::Cosi => {
            TreeTopology::bary(cfg.n, cfg.branching, 0)?;
            let rc = RoundConfig { mode: cfg.mode, branching: cfg.branching, ..RoundConfig::default() };
            let nodes = dep.nodes(&rc, cfg.seed, |_| Box::new(AcceptAll));
            let mut sim = Simulator::new(nodes, cfg.net);
            cfg.faults.iter().for_each(|f| sim.add_fault(*f));
            let (keys, weights) = (dep.roster.keys(), dep.roster.weights());
            for r in 0..cfg.rounds {
                let s = statement(r);
                let rep = sim.run_round(0, Box::new(move |_| s.clone()), ROUND_LIMIT_US);
                let ok = rep.outcome.as_ref().is_ok_and(|o| {
                    verify_collective(&keys, &weights, &o.statement, &o.signature, &Predicate::Threshold(1)).is_ok()
                });
                out.push(row(r, rep.latency_us, rep.root, rep.totals, ok));
            }
        }
        Scheme::Naive => {
            for r in 0..cfg.rounds {
                let b = naive_round(&dep, &statement(r), &cfg.net, &mut rng);
                out.push(row(r, b.latency_us, b.root(), b.totals(), b.verified));
            }
        }
        Scheme::Ntree => {
            for r in 0..cfg.rounds {
                let b = ntree_round(&dep, cfg.branching, &statement(r), &cfg.net, &mut rng)?;
                out.push(row(r, b.latency_us, b.root(), b.totals(), b.verified));
            }
        }
        Scheme::Jvss => {
            let t = cfg.n / 2;
            let (keys, _) = jvss_setup::<G, _>(cfg.n, t, &cfg.net, &mut rng)?;
            let signers: Vec<u32> = (0..=t).collect();
            for r in 0..cfg.rounds {
                let s = statement(r);
                let (sig, cost) = jvss_sign_round(&keys, &s, &signers, &cfg.net, &mut rng)?;
                let ok = crate::group::schnorr_verify(&keys[0].public(), &s, &sig);
                out.push(row(r, cost.latency_us, cost.root(), cost.totals(), ok));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRun {
    pub scheme: Scheme,
    pub sizes: Vec<u32>,
}

/// A set of simulations sharing seed and network model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub seed: u64,
    pub rounds: u32,
    #[serde(default = "default_rtt_ms")]
    pub rtt_ms: u64,
    #[serde(default = "default_unit_us")]
    pub unit_us: u64,
    pub branching: u32,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub runs: Vec<SweepRun>,
}

fn default_rtt_ms() -> u64 {
    200
}

fn default_unit_us() -> u64 {
    50
}

fn default_mode() -> Mode {
    Mode::Restart
}

impl Sweep {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for run in &self.runs {
            for &n in &run.sizes {
                out.push(SimConfig {
                    seed: self.seed,
                    n,
                    branching: self.branching,
                    net: NetParams { rtt_us: self.rtt_ms * 1000, unit_us: self.unit_us },
                    faults: Vec::new(),
                    scheme: run.scheme,
                    rounds: self.rounds,
                    mode: self.mode,
                });
            }
        }
        out
    }

    pub fn run<G: Group>(&self) -> Result<Vec<RoundMetrics>, SimError> {
        let mut rows = Vec::new();
        for cfg in self.configs() {
            log::info!("simulating {} N={} B={}", cfg.scheme.name(), cfg.n, cfg.branching);
            rows.extend(run_sim::<G>(&cfg)?);
        }
        Ok(rows)
    }
}

pub fn to_csv(rows: &[RoundMetrics]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
