use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cosi_core::multisig::Mode;

#[derive(Debug, Parser)]
#[command(name = "cosi", version, about = "Witness cothority: collective signing, timestamping and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupId {
    /// Ristretto255.
    Prod,
    /// Order-11 subgroup of Z*_23, for tests only.
    Toy,
}

impl GroupId {
    pub fn name(self) -> &'static str {
        match self {
            GroupId::Prod => "prod",
            GroupId::Toy => "toy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Restart,
    Norestart,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Restart => Mode::Restart,
            ModeArg::Norestart => Mode::NoRestart,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair.
    Keygen(KeygenArgs),
    /// Build a roster from key files.
    RosterInit(RosterInitArgs),
    /// Serve as a witness until killed.
    RunWitness(WitnessArgs),
    /// Lead periodic timestamp rounds until killed.
    RunLeader(LeaderArgs),
    /// Lead one signing round over a statement.
    Sign(SignArgs),
    /// Verify a collective signature.
    Verify(VerifyArgs),
    /// Ask a running node to timestamp a file.
    Stamp(StampArgs),
    /// Verify a timestamp receipt.
    StampVerify(StampVerifyArgs),
    /// Run a simulation sweep and print CSV.
    Simulate(SimulateArgs),
    /// Print the communication tree.
    TreeDump(TreeDumpArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long, value_enum, default_value = "prod")]
    pub group: GroupId,
    /// Derive the key from this seed instead of OS randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RosterInitArgs {
    /// Key files in roster order.
    #[arg(long = "key", required = true)]
    pub keys: Vec<PathBuf>,
    /// Endpoints in roster order; give none or one per key.
    #[arg(long = "listen")]
    pub listen: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub leader: u32,
    #[arg(long = "roster-version", default_value_t = 1)]
    pub roster_version: u64,
    #[arg(long, value_enum)]
    pub group: Option<GroupId>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags shared by every process that runs an engine node.
#[derive(Debug, Args)]
pub struct NodeArgs {
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    /// Bind address; defaults to this node's roster endpoint.
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long, value_enum)]
    pub group: Option<GroupId>,
    #[arg(long, default_value_t = 8)]
    pub branching: u32,
    /// Per-level phase timeout.
    #[arg(long, default_value_t = 800)]
    pub hop_timeout_ms: u64,
    /// Vote to replace a leader that stays silent this long.
    #[arg(long)]
    pub view_timeout_ms: Option<u64>,
    /// Only cosign timestamp records within this many seconds of the local clock.
    #[arg(long)]
    pub window_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub node: NodeArgs,
}

#[derive(Debug, Args)]
pub struct LeaderArgs {
    #[command(flatten)]
    pub node: NodeArgs,
    #[arg(long, value_enum, default_value = "restart")]
    pub mode: ModeArg,
    /// Time between timestamp rounds.
    #[arg(long, default_value_t = 1000)]
    pub interval_ms: u64,
    /// Abandon rounds with fewer participants; defaults to 2f+1.
    #[arg(long)]
    pub min_participants: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SignArgs {
    #[command(flatten)]
    pub node: NodeArgs,
    #[arg(long, value_enum, default_value = "restart")]
    pub mode: ModeArg,
    #[arg(long)]
    pub statement_file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fail with fewer participants; defaults to 2f+1.
    #[arg(long)]
    pub min_participants: Option<u32>,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long, value_enum)]
    pub group: Option<GroupId>,
    #[arg(long)]
    pub statement_file: PathBuf,
    /// Predicate as a JSON file or inline JSON; defaults to one present witness.
    #[arg(long)]
    pub predicate: Option<String>,
    pub signature: PathBuf,
}

#[derive(Debug, Args)]
pub struct StampArgs {
    /// Address of a leader or witness.
    #[arg(long)]
    pub connect: String,
    #[arg(long)]
    pub statement_file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct StampVerifyArgs {
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long, value_enum)]
    pub group: Option<GroupId>,
    #[arg(long)]
    pub statement_file: PathBuf,
    #[arg(long)]
    pub predicate: Option<String>,
    pub receipt: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sweep description; defaults to the built-in sweep.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "prod")]
    pub group: GroupId,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TreeDumpArgs {
    /// Take size and leader from a roster.
    #[arg(long, conflicts_with = "n")]
    pub roster: Option<PathBuf>,
    #[arg(long, short)]
    pub n: Option<u32>,
    #[arg(long, default_value_t = 8)]
    pub branching: u32,
    #[arg(long)]
    pub leader: Option<u32>,
    /// Only print the summary line.
    #[arg(long)]
    pub summary: bool,
}
