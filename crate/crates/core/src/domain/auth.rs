use std::fmt;

use rand::distr::Alphanumeric;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DomainError;

const PREFIX: &str = "ebk_";
const SECRET_LEN: usize = 32;

/// Raw API key as handed to an instructor: `ebk_<key_id>_<secret>`.
///
/// Only ever held in memory; the store keeps a salted digest.
#[derive(Clone, PartialEq, Eq)]
pub struct RawApiKey(String);

impl RawApiKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Splits into `(key_id, secret)`.
    pub fn parse(raw: &str) -> Option<(&str, &str)> {
        let rest = raw.strip_prefix(PREFIX)?;
        let (id, secret) = rest.split_once('_')?;
        if id.is_empty() || secret.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return None;
        }
        Some((id, secret))
    }
}

impl fmt::Debug for RawApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RawApiKey(..)")
    }
}

impl fmt::Display for RawApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A stored API key principal. `secret_hash` is `hex(salt)$hex(sha256(salt || secret))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiKey {
    pub key_id: String,
    pub secret_hash: String,
    pub label: String,
    pub enabled: bool,
}

impl ApiKey {
    /// Mints a fresh key. The raw form is returned once and not retained.
    pub fn generate<R: Rng + ?Sized>(
        key_id: &str,
        label: &str,
        rng: &mut R,
    ) -> Result<(Self, RawApiKey), DomainError> {
        if key_id.is_empty() || !key_id.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(DomainError::InvalidInput(format!(
                "key id {key_id:?} must be non-empty and alphanumeric"
            )));
        }
        let secret: String = (0..SECRET_LEN)
            .map(|_| rng.sample(Alphanumeric) as char)
            .collect();
        let salt: [u8; 16] = rng.random();
        let key = Self {
            key_id: key_id.to_owned(),
            secret_hash: format!("{}${}", hex::encode(salt), hex::encode(digest(&salt, &secret))),
            label: label.to_owned(),
            enabled: true,
        };
        Ok((key, RawApiKey(format!("{PREFIX}{key_id}_{secret}"))))
    }

    /// Checks a presented secret against the stored digest.
    pub fn verify(&self, secret: &str) -> bool {
        let Some((salt_hex, hash_hex)) = self.secret_hash.split_once('$') else {
            return false;
        };
        let (Ok(salt), Ok(expected)) = (hex::decode(salt_hex), hex::decode(hash_hex)) else {
            return false;
        };
        let actual = digest(&salt, secret);
        // fixed-time comparison
        expected.len() == actual.len()
            && expected
                .iter()
                .zip(actual.iter())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

fn digest(salt: &[u8], secret: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(secret.as_bytes());
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_key_verifies() {
        let mut rng = rand::rng();
        let (key, raw) = ApiKey::generate("alice", "Alice", &mut rng).unwrap();
        let (id, secret) = RawApiKey::parse(raw.as_str()).unwrap();
        assert_eq!(id, "alice");
        assert!(key.verify(secret));
        assert!(!key.verify("nope"));
        assert!(!key.secret_hash.contains(secret));
    }

    #[test]
    fn salts_differ_between_keys() {
        let mut rng = rand::rng();
        let (a, _) = ApiKey::generate("a", "A", &mut rng).unwrap();
        let (b, _) = ApiKey::generate("a", "A", &mut rng).unwrap();
        assert_ne!(a.secret_hash, b.secret_hash);
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(RawApiKey::parse("ebk_alice_secret").is_some());
        assert!(RawApiKey::parse("alice_secret").is_none());
        assert!(RawApiKey::parse("ebk__secret").is_none());
        assert!(RawApiKey::parse("ebk_alice").is_none());
        assert!(RawApiKey::parse("ebk_al-ice_x").is_none());
        assert!(ApiKey::generate("bad id", "x", &mut rand::rng()).is_err());
    }
}
