use std::io::Write;
use std::time::Duration;

use cosi_core::engine::hook::HookSpec;
use cosi_core::engine::{quorum, Binding, RoundConfig};
use cosi_core::group::{prove_possession, Group, KeyPair, Ristretto255, ToyGroup};
use cosi_core::merkle::sha256;
use cosi_core::multisig::{CollectiveSignature, Mode};
use cosi_core::roster::{RosterEntry, WitnessRoster};
use cosi_core::simnet::report::{to_csv, SimError, Sweep};
use cosi_core::timestamp::Receipt;
use cosi_core::topology::TreeTopology;
use rand::rngs::{OsRng, StdRng};
use rand::SeedableRng;

use crate::args::*;
use crate::files::{self, detect_group, load_predicate, load_roster, malformed, CliError, KeyFile};
use crate::net::{request_stamp, Host, HostConfig};

/// Sweep used when `simulate` is given no file.
pub const DEFAULT_SWEEP: &str = include_str!("../sweeps/default.json");

macro_rules! with_group {
    ($g:expr, $f:ident($($arg:expr),*)) => {
        match $g {
            GroupId::Prod => $f::<Ristretto255>($($arg),*),
            GroupId::Toy => $f::<ToyGroup>($($arg),*),
        }
    };
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Keygen(a) => cmd_keygen(a, out),
        Command::RosterInit(a) => cmd_roster_init(a, out),
        Command::RunWitness(a) => cmd_run_witness(a, out),
        Command::RunLeader(a) => cmd_run_leader(a, out),
        Command::Sign(a) => cmd_sign(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Stamp(a) => cmd_stamp(a, out),
        Command::StampVerify(a) => cmd_stamp_verify(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::TreeDump(a) => cmd_tree_dump(a, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

pub fn cmd_keygen(a: &KeygenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn go<G: Group>(a: &KeygenArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let kp = match a.seed {
            Some(s) => KeyPair::<G>::generate(&mut StdRng::seed_from_u64(s)),
            None => KeyPair::<G>::generate(&mut OsRng),
        };
        let f = KeyFile::new(&kp);
        f.save(&a.out)?;
        say(out, format_args!("public {}", f.public))
    }
    with_group!(a.group, go(a, out))
}

pub fn cmd_roster_init(a: &RosterInitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !a.listen.is_empty() && a.listen.len() != a.keys.len() {
        return Err(CliError::Usage(format!("{} keys but {} --listen addresses", a.keys.len(), a.listen.len())));
    }
    let group = detect_group(&a.keys[0], a.group)?;
    fn go<G: Group>(a: &RosterInitArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let mut entries = Vec::with_capacity(a.keys.len());
        for (i, path) in a.keys.iter().enumerate() {
            let kp = KeyFile::load(path)?.keypair::<G>().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let mut e = RosterEntry::new(format!("w{i}"), prove_possession(&kp, &mut OsRng));
            e.endpoint = a.listen.get(i).cloned();
            entries.push(e);
        }
        let roster = WitnessRoster::new(a.roster_version, entries, a.leader)
            .map_err(|e| CliError::Usage(format!("roster: {e}")))?;
        files::write(&a.out, roster.to_json_pretty() + "\n")?;
        say(out, format_args!("roster of {} witnesses, digest {}", roster.len(), hex::encode(roster.digest())))
    }
    with_group!(group, go(a, out))
}

struct NodeSetup<G: Group> {
    roster: WitnessRoster<G>,
    keypair: KeyPair<G>,
    index: u32,
    listen: String,
    hook: HookSpec,
}

fn node_setup<G: Group>(a: &NodeArgs) -> Result<NodeSetup<G>, CliError> {
    if a.branching == 0 {
        return Err(CliError::Usage("--branching must be positive".into()));
    }
    let roster = load_roster::<G>(&a.roster)?;
    let keypair = KeyFile::load(&a.key)?.keypair::<G>()?;
    let index = roster
        .index_of(keypair.public())
        .ok_or_else(|| CliError::Usage(format!("{}: key is not in the roster", a.key.display())))?;
    let listen = match (&a.listen, &roster.entries()[index as usize].endpoint) {
        (Some(l), _) => l.clone(),
        (None, Some(e)) => e.clone(),
        (None, None) => return Err(CliError::Usage(format!("no --listen and witness {index} has no endpoint"))),
    };
    if roster.entries().iter().enumerate().any(|(i, e)| i as u32 != index && e.endpoint.is_none()) {
        return Err(CliError::Usage("every other witness needs an endpoint in the roster".into()));
    }
    let hook = match a.window_secs {
        Some(skew_secs) => HookSpec::TimestampWindow { skew_secs },
        None => HookSpec::AcceptAll,
    };
    Ok(NodeSetup { roster, keypair, index, listen, hook })
}

fn round_config(a: &NodeArgs, mode: Mode) -> RoundConfig {
    RoundConfig {
        mode,
        branching: a.branching,
        hop_timeout_us: a.hop_timeout_ms * 1000,
        view_timeout_us: a.view_timeout_ms.map(|ms| ms * 1000),
        ..RoundConfig::default()
    }
}

fn spawn<G: Group>(s: NodeSetup<G>, round: RoundConfig, stamp_interval: Option<Duration>) -> Result<Host<G>, CliError> {
    let listen = s.listen.clone();
    Host::spawn(HostConfig {
        index: s.index,
        keypair: s.keypair,
        roster: s.roster,
        round,
        hook: s.hook,
        listen: s.listen,
        stamp_interval,
    })
    .map_err(|source| CliError::Io { path: listen, source })
}

pub fn cmd_run_witness(a: &WitnessArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn go<G: Group>(a: &WitnessArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let s = node_setup::<G>(&a.node)?;
        let index = s.index;
        let host = spawn(s, round_config(&a.node, Mode::Restart), None)?;
        say(out, format_args!("witness {index} listening on {}", host.addr()))?;
        out.flush().ok();
        host.join();
        Ok(())
    }
    with_group!(detect_group(&a.node.roster, a.node.group)?, go(a, out))
}

pub fn cmd_run_leader(a: &LeaderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn go<G: Group>(a: &LeaderArgs, out: &mut dyn Write) -> Result<(), CliError> {
        if a.interval_ms == 0 {
            return Err(CliError::Usage("--interval-ms must be positive".into()));
        }
        let s = node_setup::<G>(&a.node)?;
        let (index, n) = (s.index, s.roster.len());
        if index != s.roster.leader() {
            log::warn!("witness {index} is not the initial leader; it stamps only after a view change");
        }
        let round = RoundConfig {
            binding: Binding::Challenge,
            collect: true,
            broadcast_done: true,
            min_participants: a.min_participants.unwrap_or_else(|| quorum(n)),
            ..round_config(&a.node, a.mode.into())
        };
        let host = spawn(s, round, Some(Duration::from_millis(a.interval_ms)))?;
        say(out, format_args!("leader {index} listening on {}", host.addr()))?;
        out.flush().ok();
        host.join();
        Ok(())
    }
    with_group!(detect_group(&a.node.roster, a.node.group)?, go(a, out))
}

pub fn cmd_sign(a: &SignArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn go<G: Group>(a: &SignArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let statement = files::read(&a.statement_file)?;
        let s = node_setup::<G>(&a.node)?;
        let n = s.roster.len();
        let min = a.min_participants.unwrap_or_else(|| quorum(n));
        if min > n {
            return Err(CliError::Usage(format!("--min-participants {min} exceeds the roster size {n}")));
        }
        let round = RoundConfig { min_participants: min, ..round_config(&a.node, a.mode.into()) };
        let host = spawn(s, round, None)?;
        let result = host.sign(statement, Duration::from_secs(a.timeout_secs));
        drop(host);
        let output = result.map_err(|e| CliError::Protocol(e.to_string()))?;
        files::write(&a.out, output.signature.encode())?;
        let set = &output.signature.participation;
        say(
            out,
            format_args!(
                "signed round {}: present {}/{}, absent: {:?}",
                output.round,
                set.present_count(),
                set.witness_count(),
                set.absent().collect::<Vec<_>>()
            ),
        )
    }
    with_group!(detect_group(&a.node.roster, a.node.group)?, go(a, out))
}

fn participation_line<G: Group>(sig: &CollectiveSignature<G>) -> String {
    let set = &sig.participation;
    let mut s = format!(
        "present {}/{}, absent: {:?}",
        set.present_count(),
        set.witness_count(),
        set.absent().collect::<Vec<_>>()
    );
    if !sig.exceptions.is_empty() {
        s += &format!(", commit exceptions: {:?}", sig.exceptions.iter().map(|e| e.index).collect::<Vec<_>>());
    }
    s
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn go<G: Group>(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let roster = load_roster::<G>(&a.roster)?;
        let statement = files::read(&a.statement_file)?;
        let predicate = load_predicate(a.predicate.as_deref())?;
        let bytes = files::read(&a.signature)?;
        let sig = CollectiveSignature::<G>::decode(&bytes, roster.len()).map_err(|e| malformed("signature", e))?;
        say(out, participation_line(&sig))?;
        roster.verify(&statement, &sig, &predicate).map_err(|e| CliError::Verify(e.to_string()))?;
        say(out, "signature valid")
    }
    with_group!(detect_group(&a.roster, a.group)?, go(a, out))
}

pub fn cmd_stamp(a: &StampArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let item = sha256(&files::read(&a.statement_file)?);
    // Stamp frames carry no group elements, so either group frames them.
    let receipt = request_stamp::<Ristretto255>(&a.connect, item, Duration::from_secs(a.timeout_secs))
        .map_err(|e| CliError::Protocol(format!("{}: {e}", a.connect)))?;
    files::write(&a.out, &receipt)?;
    say(out, format_args!("receipt for {} written to {}", hex::encode(item), a.out.display()))
}

pub fn cmd_stamp_verify(a: &StampVerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn go<G: Group>(a: &StampVerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let roster = load_roster::<G>(&a.roster)?;
        let item = sha256(&files::read(&a.statement_file)?);
        let predicate = load_predicate(a.predicate.as_deref())?;
        let bytes = files::read(&a.receipt)?;
        let receipt = Receipt::<G>::decode(&bytes, roster.len()).map_err(|e| malformed("receipt", e))?;
        say(
            out,
            format_args!(
                "round {}, wall time {}, {}",
                receipt.record.round,
                receipt.record.wall_time,
                participation_line(&receipt.signature)
            ),
        )?;
        receipt.verify(&item, &roster, &predicate).map_err(|e| CliError::Verify(e.to_string()))?;
        say(out, "receipt valid")
    }
    with_group!(detect_group(&a.roster, a.group)?, go(a, out))
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = match &a.sweep {
        Some(p) => files::read_string(p)?,
        None => DEFAULT_SWEEP.to_string(),
    };
    let mut sweep = Sweep::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(seed) = a.seed {
        sweep.seed = seed;
    }
    if let Some(m) = a.mode {
        sweep.mode = m.into();
    }
    let rows = match a.group {
        GroupId::Prod => sweep.run::<Ristretto255>(),
        GroupId::Toy => sweep.run::<ToyGroup>(),
    }
    .map_err(|e| match e {
        SimError::Jvss(_) => CliError::Protocol(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let csv = to_csv(&rows);
    match &a.out {
        Some(p) => files::write(p, csv),
        None => out.write_all(csv.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

pub fn cmd_tree_dump(a: &TreeDumpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    fn roster_shape<G: Group>(p: &std::path::Path) -> Result<(u32, u32), CliError> {
        let r = load_roster::<G>(p)?;
        Ok((r.len(), r.leader()))
    }
    let (n, leader) = match (&a.roster, a.n) {
        (Some(p), _) => with_group!(detect_group(p, None)?, roster_shape(p))?,
        (None, Some(n)) => (n, 0),
        (None, None) => return Err(CliError::Usage("give --roster or --n".into())),
    };
    let leader = a.leader.unwrap_or(leader);
    let tree = TreeTopology::bary(n, a.branching, leader).map_err(|e| CliError::Usage(e.to_string()))?;
    say(
        out,
        format_args!(
            "N={} B={} leader={} depth={} full={}",
            n,
            a.branching,
            leader,
            tree.depth(),
            tree.is_full()
        ),
    )?;
    if !a.summary {
        out.write_all(tree.dump().as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
    }
    Ok(())
}
