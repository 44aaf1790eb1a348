//! Message authentication for state records.
//!
//! A signature binds the exact triple `(origin, value, marker)` — the value
//! as its raw bit pattern, so even a 1-ulp perturbation or a sign flip on
//! zero invalidates it, and the marker so stale state cannot be re-stamped
//! as fresh. Schemes are pluggable behind [`AuthScheme`]; the default
//! [`KeyedHashScheme`] MACs with per-node secret keys and verifies through
//! the scheme object itself as trust root, which is the right trade for a
//! single-process simulator: adversary code is handed its own signing keys
//! and the verify capability, never honest secrets, so unforgeability holds
//! by construction. A real asymmetric scheme drops into the same trait for
//! multi-process deployments.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("refusing to sign a non-finite value")]
    NonFiniteValue,
    #[error("no key material for node {0}")]
    UnknownSigner(NodeId),
}

/// Opaque signature bytes; length is scheme-defined.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(pub Vec<u8>);

/// A node's secret signing material. The engine hands each byzantine
/// strategy only its own `SigningKey`s.
#[derive(Clone)]
pub struct SigningKey {
    pub node: NodeId,
    secret: [u8; 32],
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKey(node {}, secret <redacted>)", self.node)
    }
}

/// A signature scheme: sign claims an origin (a dishonest signer may claim
/// any origin — verification is what catches the mismatch), verify checks a
/// record against the claimed origin's genuine key material.
pub trait AuthScheme: Send + Sync {
    fn sign(
        &self,
        key: &SigningKey,
        origin: NodeId,
        value: f64,
        marker: i64,
    ) -> Result<Signature, AuthError>;

    fn verify(&self, origin: NodeId, value: f64, marker: i64, signature: &Signature) -> bool;
}

/// Deterministic MAC over `(origin, value bits, marker)` with a per-node
/// 32-byte secret; verification recomputes with the claimed origin's true
/// key. Fast, dependency-light, and unforgeable to anyone not holding the
/// origin's secret.
pub struct KeyedHashScheme {
    keys: Vec<[u8; 32]>,
}

impl KeyedHashScheme {
    /// Derives all `m` node keys from one seed.
    pub fn from_seed(seed: u64, m: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = (0..m)
            .map(|_| {
                let mut k = [0u8; 32];
                rng.fill_bytes(&mut k);
                k
            })
            .collect();
        Self { keys }
    }

    pub fn signing_key(&self, node: NodeId) -> Result<SigningKey, AuthError> {
        let secret = *self.keys.get(node).ok_or(AuthError::UnknownSigner(node))?;
        Ok(SigningKey { node, secret })
    }

    fn mac(secret: &[u8; 32], origin: NodeId, value: f64, marker: i64) -> Signature {
        let mut hasher = Sha256::new();
        hasher.update(secret);
        hasher.update((origin as u64).to_le_bytes());
        hasher.update(value.to_bits().to_le_bytes());
        hasher.update(marker.to_le_bytes());
        Signature(hasher.finalize().to_vec())
    }
}

impl AuthScheme for KeyedHashScheme {
    fn sign(
        &self,
        key: &SigningKey,
        origin: NodeId,
        value: f64,
        marker: i64,
    ) -> Result<Signature, AuthError> {
        if !value.is_finite() {
            return Err(AuthError::NonFiniteValue);
        }
        Ok(Self::mac(&key.secret, origin, value, marker))
    }

    fn verify(&self, origin: NodeId, value: f64, marker: i64, signature: &Signature) -> bool {
        match self.keys.get(origin) {
            Some(secret) => Self::mac(secret, origin, value, marker) == *signature,
            None => false,
        }
    }
}

/// Accept-everything scheme. Exists so tests can demonstrate that
/// authentication is load-bearing (forged records flow freely under it) and
/// that the engine is generic over [`AuthScheme`]. Never use it for real
/// runs with byzantine nodes.
pub struct NullScheme;

impl AuthScheme for NullScheme {
    fn sign(
        &self,
        _key: &SigningKey,
        _origin: NodeId,
        value: f64,
        _marker: i64,
    ) -> Result<Signature, AuthError> {
        if !value.is_finite() {
            return Err(AuthError::NonFiniteValue);
        }
        Ok(Signature(Vec::new()))
    }

    fn verify(&self, _origin: NodeId, _value: f64, _marker: i64, _signature: &Signature) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scheme() -> KeyedHashScheme {
        KeyedHashScheme::from_seed(7, 4)
    }

    #[test]
    fn sign_then_verify_roundtrips() {
        let s = scheme();
        let key = s.signing_key(2).unwrap();
        let sig = s.sign(&key, 2, 1.25, 9).unwrap();
        assert!(s.verify(2, 1.25, 9, &sig));
    }

    #[test]
    fn signing_is_deterministic() {
        let s = scheme();
        let key = s.signing_key(1).unwrap();
        assert_eq!(s.sign(&key, 1, 0.1, 3).unwrap(), s.sign(&key, 1, 0.1, 3).unwrap());
    }

    #[test]
    fn claiming_an_origin_with_a_foreign_key_fails_verification() {
        let s = scheme();
        let foreign = s.signing_key(3).unwrap();
        let sig = s.sign(&foreign, 2, 1.25, 9).unwrap();
        assert!(!s.verify(2, 1.25, 9, &sig), "forged origin claim must not verify");
    }

    #[test]
    fn one_ulp_value_perturbation_fails_verification() {
        let s = scheme();
        let key = s.signing_key(0).unwrap();
        let value = 1.25f64;
        let sig = s.sign(&key, 0, value, 4).unwrap();
        let nudged = f64::from_bits(value.to_bits() + 1);
        assert!(!s.verify(0, nudged, 4, &sig));
    }

    #[test]
    fn marker_change_fails_verification() {
        let s = scheme();
        let key = s.signing_key(0).unwrap();
        let sig = s.sign(&key, 0, 2.0, 4).unwrap();
        assert!(!s.verify(0, 2.0, 5, &sig), "re-stamping a marker must not verify");
        assert!(!s.verify(0, 2.0, 3, &sig));
    }

    #[test]
    fn signature_binds_the_exact_bit_pattern_of_zero() {
        let s = scheme();
        let key = s.signing_key(0).unwrap();
        let sig = s.sign(&key, 0, 0.0, 1).unwrap();
        assert!(s.verify(0, 0.0, 1, &sig));
        assert!(!s.verify(0, -0.0, 1, &sig));
    }

    #[test]
    fn non_finite_values_are_rejected_at_signing() {
        let s = scheme();
        let key = s.signing_key(0).unwrap();
        assert_eq!(s.sign(&key, 0, f64::NAN, 1), Err(AuthError::NonFiniteValue));
        assert_eq!(s.sign(&key, 0, f64::INFINITY, 1), Err(AuthError::NonFiniteValue));
    }

    #[test]
    fn distinct_seeds_give_distinct_keys() {
        let a = KeyedHashScheme::from_seed(1, 2);
        let b = KeyedHashScheme::from_seed(2, 2);
        let sig_a = a.sign(&a.signing_key(0).unwrap(), 0, 5.0, 2).unwrap();
        assert!(!b.verify(0, 5.0, 2, &sig_a));
    }

    #[test]
    fn null_scheme_accepts_forgeries() {
        let s = NullScheme;
        assert!(s.verify(0, 123.0, 5, &Signature(vec![1, 2, 3])));
    }

    proptest! {
        #[test]
        fn roundtrip_holds_and_any_field_mutation_falsifies(
            origin in 0usize..4,
            value in proptest::num::f64::NORMAL | proptest::num::f64::ZERO,
            marker in -1i64..10_000,
        ) {
            let s = scheme();
            let key = s.signing_key(origin).unwrap();
            let sig = s.sign(&key, origin, value, marker).unwrap();
            prop_assert!(s.verify(origin, value, marker, &sig));
            prop_assert!(!s.verify((origin + 1) % 4, value, marker, &sig));
            prop_assert!(!s.verify(origin, f64::from_bits(value.to_bits() ^ 1), marker, &sig));
            prop_assert!(!s.verify(origin, value, marker + 1, &sig));
            let mut bad = sig.clone();
            bad.0[0] ^= 0x80;
            prop_assert!(!s.verify(origin, value, marker, &bad));
        }
    }
}
