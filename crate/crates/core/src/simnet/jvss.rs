//! Threshold Schnorr signing over a jointly dealt key: every node deals a
//! Shamir polynomial with Feldman commitments to every other node, once for
//! the key and again for each round's nonce.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use super::{NetParams, NodeMetrics};
use crate::group::{challenge_hash, Group, Signature, TAG_SIGNATURE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JvssError {
    #[error("threshold {t} needs more than {n} nodes")]
    Threshold { t: u32, n: u32 },
    #[error("share from dealer {dealer} to node {recipient} fails its commitments")]
    BadShare { dealer: u32, recipient: u32 },
    #[error("{got} signers, {need} required")]
    NotEnoughSigners { got: usize, need: usize },
    #[error("signer index {0} out of range or repeated")]
    BadSigner(u32),
    #[error("evaluation points collide in this group")]
    Degenerate,
}

/// `f(x) = sum coeffs[k] x^k`.
pub fn eval_poly<G: Group>(coeffs: &[G::Scalar], x: u64) -> G::Scalar {
    let x = G::scalar_from_u64(x);
    coeffs.iter().rev().fold(G::scalar_zero(), |acc, c| G::scalar_add(&G::scalar_mul(&acc, &x), c))
}

/// `G^share == prod commitments[k]^(x^k)`.
pub fn feldman_check<G: Group>(commitments: &[G::Element], x: u64, share: &G::Scalar) -> bool {
    let xs = G::scalar_from_u64(x);
    let mut pow = G::scalar_one();
    let mut terms = Vec::with_capacity(commitments.len());
    for c in commitments {
        terms.push((pow, *c));
        pow = G::scalar_mul(&pow, &xs);
    }
    G::multi_pow(&terms) == G::base_pow(share)
}

/// Lagrange coefficients for evaluating at zero from points `xs`.
pub fn lagrange_at_zero<G: Group>(xs: &[u64]) -> Option<Vec<G::Scalar>> {
    xs.iter()
        .map(|&xi| {
            let (mut num, mut den) = (G::scalar_one(), G::scalar_one());
            for &xj in xs.iter().filter(|&&xj| xj != xi) {
                num = G::scalar_mul(&num, &G::scalar_from_u64(xj));
                den = G::scalar_mul(&den, &G::scalar_sub(&G::scalar_from_u64(xj), &G::scalar_from_u64(xi)));
            }
            Some(G::scalar_mul(&num, &G::scalar_invert(&den)?))
        })
        .collect()
}

pub fn interpolate_at_zero<G: Group>(points: &[(u64, G::Scalar)]) -> Option<G::Scalar> {
    let xs: Vec<u64> = points.iter().map(|p| p.0).collect();
    let l = lagrange_at_zero::<G>(&xs)?;
    Some(points.iter().zip(l).fold(G::scalar_zero(), |acc, ((_, y), li)| G::scalar_add(&acc, &G::scalar_mul(y, &li))))
}

/// One dealer's polynomial commitments and the share for each node; node
/// `j` evaluates at `x = j + 1`.
#[derive(Debug, Clone)]
pub struct Dealing<G: Group> {
    pub commitments: Vec<G::Element>,
    pub shares: Vec<G::Scalar>,
}

impl<G: Group> Dealing<G> {
    pub fn from_poly(coeffs: &[G::Scalar], n: u32) -> Self {
        Dealing {
            commitments: coeffs.iter().map(G::base_pow).collect(),
            shares: (1..=n as u64).map(|x| eval_poly::<G>(coeffs, x)).collect(),
        }
    }

    pub fn random<R: RngCore + CryptoRng>(t: u32, n: u32, rng: &mut R) -> Self {
        let coeffs: Vec<G::Scalar> = (0..=t).map(|_| G::random_scalar(rng)).collect();
        Self::from_poly(&coeffs, n)
    }
}

/// What node `index` keeps from one joint dealing.
#[derive(Debug, Clone)]
pub struct JvssState<G: Group> {
    pub index: u32,
    pub t: u32,
    /// Sum of the shares dealt to this node.
    pub share: G::Scalar,
    /// Coefficient-wise product of every dealer's commitments.
    pub commitments: Vec<G::Element>,
}

impl<G: Group> JvssState<G> {
    /// The joint public value, `G^(sum of dealer secrets)`.
    pub fn public(&self) -> G::Element {
        self.commitments[0]
    }
}

/// Checks every share and combines the dealings into per-node states. The
/// sum of shares is checked against the product of commitments first; a
/// failure falls back to per-dealer checks to name the culprit.
pub fn combine_dealings<G: Group>(t: u32, dealings: &[Dealing<G>]) -> Result<Vec<JvssState<G>>, JvssError> {
    let n = dealings.len() as u32;
    if t >= n {
        return Err(JvssError::Threshold { t, n });
    }
    let mut commitments = vec![G::identity(); t as usize + 1];
    for d in dealings {
        for (acc, c) in commitments.iter_mut().zip(&d.commitments) {
            *acc = G::op(acc, c);
        }
    }
    (0..n)
        .map(|j| {
            let share = dealings.iter().fold(G::scalar_zero(), |a, d| G::scalar_add(&a, &d.shares[j as usize]));
            if !feldman_check::<G>(&commitments, j as u64 + 1, &share) {
                let dealer = dealings
                    .iter()
                    .position(|d| !feldman_check::<G>(&d.commitments, j as u64 + 1, &d.shares[j as usize]))
                    .unwrap_or(0) as u32;
                return Err(JvssError::BadShare { dealer, recipient: j });
            }
            Ok(JvssState { index: j, t, share, commitments: commitments.clone() })
        })
        .collect()
}

/// Simulated cost of a JVSS phase.
#[derive(Debug, Clone)]
pub struct JvssCost {
    pub latency_us: u64,
    pub metrics: Vec<NodeMetrics>,
}

impl JvssCost {
    pub fn root(&self) -> NodeMetrics {
        self.metrics[0]
    }

    pub fn totals(&self) -> NodeMetrics {
        let mut t = NodeMetrics::default();
        self.metrics.iter().for_each(|m| t.add(m));
        t
    }
}

fn dealing_msg_bytes<G: Group>(t: u32) -> u64 {
    4 + 1 + 8 + 4 + (t as u64 + 1) * G::ELEMENT_LEN as u64 + G::SCALAR_LEN as u64
}

/// Cost of everyone dealing to everyone: `t + 1` exponentiations to
/// commit, then `t + 2` per received share to check it.
fn dealing_cost<G: Group>(n: u32, t: u32, params: &NetParams) -> JvssCost {
    let n64 = n as u64;
    let bytes = dealing_msg_bytes::<G>(t);
    let deal_units = t as u64 + 1;
    let check_units = (n64 - 1) * (t as u64 + 2);
    let m = NodeMetrics {
        msgs_sent: n64 - 1,
        bytes_sent: (n64 - 1) * bytes,
        msgs_recv: n64 - 1,
        bytes_recv: (n64 - 1) * bytes,
        compute: deal_units + check_units,
    };
    let hop = if n > 1 { params.one_way_us() } else { 0 };
    JvssCost {
        latency_us: deal_units * params.unit_us + hop + check_units * params.unit_us,
        metrics: vec![m; n as usize],
    }
}

/// Key generation among `n` nodes with threshold `t`.
pub fn jvss_setup<G: Group, R: RngCore + CryptoRng>(
    n: u32,
    t: u32,
    params: &NetParams,
    rng: &mut R,
) -> Result<(Vec<JvssState<G>>, JvssCost), JvssError> {
    if t >= n {
        return Err(JvssError::Threshold { t, n });
    }
    let dealings: Vec<Dealing<G>> = (0..n).map(|_| Dealing::random(t, n, rng)).collect();
    Ok((combine_dealings(t, &dealings)?, dealing_cost::<G>(n, t, params)))
}

/// One signing round: a fresh joint nonce is dealt (rounds are started on
/// a shared schedule, and node 0 includes the statement in its dealing),
/// then `signers` send partial responses to node 0, which combines them.
pub fn jvss_sign_round<G: Group, R: RngCore + CryptoRng>(
    keys: &[JvssState<G>],
    statement: &[u8],
    signers: &[u32],
    params: &NetParams,
    rng: &mut R,
) -> Result<(Signature<G>, JvssCost), JvssError> {
    let n = keys.len() as u32;
    let t = keys[0].t;
    let need = t as usize + 1;
    if signers.len() < need {
        return Err(JvssError::NotEnoughSigners { got: signers.len(), need });
    }
    let signers = &signers[..need];
    let mut seen = std::collections::BTreeSet::new();
    for &s in signers {
        if s >= n || !seen.insert(s) {
            return Err(JvssError::BadSigner(s));
        }
    }
    let dealings: Vec<Dealing<G>> = (0..n).map(|_| Dealing::random(t, n, rng)).collect();
    let nonces = combine_dealings(t, &dealings)?;
    let commit = nonces[0].public();
    let c = challenge_hash::<G>(&commit, statement, TAG_SIGNATURE);
    let partials: Vec<(u64, G::Scalar)> = signers
        .iter()
        .map(|&s| {
            let (v, x) = (&nonces[s as usize].share, &keys[s as usize].share);
            (s as u64 + 1, G::scalar_sub(v, &G::scalar_mul(&c, x)))
        })
        .collect();
    let response = interpolate_at_zero::<G>(&partials).ok_or(JvssError::Degenerate)?;
    let mut cost = dealing_cost::<G>(n, t, params);
    let stmt = statement.len() as u64;
    cost.metrics[0].bytes_sent += (n as u64 - 1) * stmt;
    for m in cost.metrics.iter_mut().skip(1) {
        m.bytes_recv += stmt;
    }
    let partial_bytes = 4 + 1 + 8 + 4 + G::SCALAR_LEN as u64;
    let mut remote = 0;
    for &s in signers.iter().filter(|&&s| s != 0) {
        let m = &mut cost.metrics[s as usize];
        m.compute += 1;
        m.msgs_sent += 1;
        m.bytes_sent += partial_bytes;
        remote += 1;
    }
    let root = &mut cost.metrics[0];
    root.msgs_recv += remote;
    root.bytes_recv += remote * partial_bytes;
    // Own partial, interpolation and a final verification.
    root.compute += 1 + need as u64 + 2;
    let hop = if remote > 0 { params.one_way_us() } else { 0 };
    cost.latency_us += params.unit_us + hop + (need as u64 + 2) * params.unit_us;
    Ok((Signature { challenge: c, response }, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{schnorr_verify, Ristretto255, ToyGroup, ToyScalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type T = ToyGroup;

    #[test]
    fn toy_shares_and_interpolation() {
        let poly = [ToyScalar::new(5), ToyScalar::new(3)];
        let d = Dealing::<T>::from_poly(&poly, 3);
        assert_eq!(d.shares, vec![ToyScalar::new(8), ToyScalar::new(0), ToyScalar::new(3)]);
        for pair in [[0usize, 1], [0, 2], [1, 2]] {
            let pts: Vec<_> = pair.iter().map(|&i| (i as u64 + 1, d.shares[i])).collect();
            assert_eq!(interpolate_at_zero::<T>(&pts), Some(ToyScalar::new(5)));
        }
        for (j, s) in d.shares.iter().enumerate() {
            assert!(feldman_check::<T>(&d.commitments, j as u64 + 1, s));
        }
        assert!(!feldman_check::<T>(&d.commitments, 1, &ToyScalar::new(9)));
    }

    #[test]
    fn bad_dealer_is_flagged() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut ds: Vec<Dealing<Ristretto255>> = (0..4).map(|_| Dealing::random(1, 4, &mut rng)).collect();
        ds[2].shares[1] = Ristretto255::scalar_add(&ds[2].shares[1], &Ristretto255::scalar_one());
        assert_eq!(combine_dealings(1, &ds).unwrap_err(), JvssError::BadShare { dealer: 2, recipient: 1 });
    }

    #[test]
    fn degenerate_threshold_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let ds: Vec<Dealing<T>> = (0..3).map(|_| Dealing::random(0, 3, &mut rng)).collect();
        let states = combine_dealings(0, &ds).unwrap();
        let product = ds.iter().fold(T::identity(), |a, d| T::op(&a, &d.commitments[0]));
        assert_eq!(states[0].public(), product);
        assert!(states.iter().all(|s| s.share == states[0].share));
    }

    #[test]
    fn threshold_signature_verifies() {
        let p = NetParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (keys, setup) = jvss_setup::<Ristretto255, _>(7, 3, &p, &mut rng).unwrap();
        assert_eq!(setup.totals().msgs_sent, 42);
        for signers in [vec![0, 1, 2, 3], vec![6, 4, 2, 0], vec![5, 3, 1, 6, 0]] {
            let (sig, cost) = jvss_sign_round(&keys, b"stmt", &signers, &p, &mut rng).unwrap();
            assert!(schnorr_verify(&keys[0].public(), b"stmt", &sig));
            assert!(!schnorr_verify(&keys[0].public(), b"other", &sig));
            let t = cost.totals();
            assert_eq!(t.bytes_sent, t.bytes_recv);
        }
        assert!(jvss_sign_round(&keys, b"s", &[0, 1], &p, &mut rng).is_err());
        assert!(jvss_sign_round(&keys, b"s", &[0, 1, 1, 2], &p, &mut rng).is_err());
        let (tk, _) = jvss_setup::<T, _>(3, 1, &p, &mut rng).unwrap();
        let (sig, _) = jvss_sign_round(&tk, b"toy", &[0, 2], &p, &mut rng).unwrap();
        assert!(schnorr_verify(&tk[0].public(), b"toy", &sig));
    }

    #[test]
    fn quadratic_messages() {
        let p = NetParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let msgs = |n: u32, rng: &mut ChaCha20Rng| {
            let t = n / 2;
            let (k, _) = jvss_setup::<Ristretto255, _>(n, t, &p, rng).unwrap();
            let signers: Vec<u32> = (0..=t).collect();
            jvss_sign_round(&k, b"s", &signers, &p, rng).unwrap().1.totals().msgs_sent
        };
        let (a, b) = (msgs(16, &mut rng), msgs(64, &mut rng));
        assert!(b as f64 / a as f64 >= 16.0, "{a} -> {b}");
    }
}
