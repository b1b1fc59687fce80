//! On-disk formats: key files, rosters, predicates and binary artifacts.

use std::fs;
use std::path::Path;

use cosi_core::group::{DecodeError, Group, KeyPair};
use cosi_core::participation::Predicate;
use cosi_core::roster::{RosterError, WitnessRoster};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::args::GroupId;

/// Failures, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Roster { path: String, source: RosterError },
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("protocol failure: {0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } | CliError::Roster { .. } => 2,
            CliError::Protocol(_) => 3,
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

pub fn read_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

pub fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, data).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub group: String,
    pub secret: String,
    pub public: String,
}

impl KeyFile {
    pub fn new<G: Group>(kp: &KeyPair<G>) -> Self {
        KeyFile {
            group: G::NAME.to_string(),
            secret: hex::encode(G::encode_scalar(kp.secret())),
            public: hex::encode(G::encode_element(kp.public())),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let s = read_string(path)?;
        serde_json::from_str(&s).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write(path, serde_json::to_string_pretty(self).expect("key file serializes") + "\n")
    }

    /// The key pair, checked against the stored public key.
    pub fn keypair<G: Group>(&self) -> Result<KeyPair<G>, CliError> {
        if self.group != G::NAME {
            return Err(CliError::Usage(format!("key is for group {}, expected {}", self.group, G::NAME)));
        }
        let bad = |what: &str| CliError::Usage(format!("key file: bad {what}"));
        let secret = hex::decode(&self.secret).map_err(|_| bad("secret"))?;
        let secret = G::decode_scalar(&secret).map_err(|_| bad("secret"))?;
        let kp = KeyPair::<G>::from_secret(secret).ok_or_else(|| bad("secret"))?;
        if hex::encode(G::encode_element(kp.public())) != self.public {
            return Err(bad("public key"));
        }
        Ok(kp)
    }
}

#[derive(Deserialize)]
struct GroupOnly {
    group: String,
}

/// Group named by a roster or key file, checked against an explicit flag.
pub fn detect_group(path: &Path, flag: Option<GroupId>) -> Result<GroupId, CliError> {
    let s = read_string(path)?;
    let doc: GroupOnly =
        serde_json::from_str(&s).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let found = match doc.group.as_str() {
        "prod" => GroupId::Prod,
        "toy" => GroupId::Toy,
        other => return Err(CliError::Usage(format!("{}: unknown group {other:?}", path.display()))),
    };
    match flag {
        Some(f) if f != found => Err(CliError::Usage(format!(
            "{} uses group {}, but --group {} was given",
            path.display(),
            found.name(),
            f.name()
        ))),
        _ => Ok(found),
    }
}

pub fn load_roster<G: Group>(path: &Path) -> Result<WitnessRoster<G>, CliError> {
    WitnessRoster::from_json(&read_string(path)?)
        .map_err(|source| CliError::Roster { path: path.display().to_string(), source })
}

/// Inline JSON when the argument starts with `{`, a file otherwise.
pub fn load_predicate(arg: Option<&str>) -> Result<Predicate, CliError> {
    let Some(arg) = arg else { return Ok(Predicate::Threshold(1)) };
    let text = if arg.trim_start().starts_with('{') { arg.to_string() } else { read_string(Path::new(arg))? };
    Predicate::from_json(&text).map_err(|e| CliError::Usage(format!("predicate: {e}")))
}

/// Decoding a file under verification fails the verification.
pub fn malformed(what: &str, e: DecodeError) -> CliError {
    CliError::Verify(format!("malformed {what}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cosi_core::group::{Ristretto255, ToyGroup};
    use rand::SeedableRng;

    #[test]
    fn key_file_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let kp = KeyPair::<Ristretto255>::generate(&mut rng);
        let f = KeyFile::new(&kp);
        let back: KeyFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back.keypair::<Ristretto255>().unwrap().public(), kp.public());
        assert!(back.keypair::<ToyGroup>().is_err());
        let mut tampered = back.clone();
        tampered.public = KeyFile::new(&KeyPair::<Ristretto255>::generate(&mut rng)).public;
        assert!(tampered.keypair::<Ristretto255>().is_err());
    }

    #[test]
    fn predicate_forms() {
        assert_eq!(load_predicate(None).unwrap(), Predicate::Threshold(1));
        assert_eq!(load_predicate(Some(r#"{"threshold": 3}"#)).unwrap(), Predicate::Threshold(3));
        assert_eq!(load_predicate(Some("{nope")).unwrap_err().exit_code(), 2);
    }
}
