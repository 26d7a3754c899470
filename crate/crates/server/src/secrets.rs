//! Access to the encrypted secrets file: API keys and bot tokens.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use edubot_core::domain::{ApiKey, RawApiKey, TokenRef};
use edubot_core::persistence::{load_secrets, save_secrets, KdfParams, SecretsError, SecretsFile};
use rand::distr::Alphanumeric;
use rand::Rng;

const API_KEY_PREFIX: &str = "api_key:";

/// The decrypted secrets held in memory, written back on every change.
pub struct SecretStore {
    path: PathBuf,
    passphrase: String,
    kdf: KdfParams,
    file: Mutex<SecretsFile>,
}

impl SecretStore {
    /// Opens the file, or starts an empty store if it does not exist yet.
    pub fn open(path: impl Into<PathBuf>, passphrase: &str, kdf: KdfParams) -> Result<Self, SecretsError> {
        let path = path.into();
        let file = if path.exists() {
            load_secrets(&path, passphrase)?
        } else {
            SecretsFile::new()
        };
        Ok(Self {
            path,
            passphrase: passphrase.to_owned(),
            kdf,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, name: &str) -> Option<String> {
        self.file.lock().unwrap().entries.get(name).cloned()
    }

    pub fn set(&self, name: &str, value: String) -> Result<(), SecretsError> {
        let mut file = self.file.lock().unwrap();
        file.entries.insert(name.to_owned(), value);
        save_secrets(&self.path, &file, &self.passphrase, self.kdf)
    }

    pub fn remove(&self, name: &str) -> Result<(), SecretsError> {
        let mut file = self.file.lock().unwrap();
        if file.entries.remove(name).is_some() {
            save_secrets(&self.path, &file, &self.passphrase, self.kdf)?;
        }
        Ok(())
    }

    pub fn set_bot_token(&self, token: &TokenRef, value: String) -> Result<(), SecretsError> {
        self.set(token.as_str(), value)
    }

    /// Every stored API key by key id. Malformed entries are skipped.
    pub fn api_keys(&self) -> BTreeMap<String, ApiKey> {
        self.file
            .lock()
            .unwrap()
            .entries
            .iter()
            .filter(|(name, _)| name.starts_with(API_KEY_PREFIX))
            .filter_map(|(name, json)| match serde_json::from_str::<ApiKey>(json) {
                Ok(key) => Some((key.key_id.clone(), key)),
                Err(e) => {
                    tracing::warn!(entry = %name, error = %e, "skipping malformed API key entry");
                    None
                }
            })
            .collect()
    }

    /// Mints and stores a key. A key id is generated when none is given.
    pub fn add_api_key(&self, label: &str, key_id: Option<&str>) -> Result<(ApiKey, RawApiKey), AddKeyError> {
        let mut rng = rand::rng();
        let key_id = match key_id {
            Some(id) => id.to_owned(),
            None => (0..8).map(|_| rng.sample(Alphanumeric) as char).collect::<String>().to_lowercase(),
        };
        if self.get(&entry_name(&key_id)).is_some() {
            return Err(AddKeyError::Exists(key_id));
        }
        let (key, raw) = ApiKey::generate(&key_id, label, &mut rng).map_err(|e| AddKeyError::Invalid(e.to_string()))?;
        let json = serde_json::to_string(&key).expect("api key serializes");
        self.set(&entry_name(&key_id), json)?;
        Ok((key, raw))
    }
}

fn entry_name(key_id: &str) -> String {
    format!("{API_KEY_PREFIX}{key_id}")
}

#[derive(Debug, thiserror::Error)]
pub enum AddKeyError {
    #[error("an API key with id {0} already exists")]
    Exists(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Secrets(#[from] SecretsError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_survive_reopen_and_hash_only_is_stored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(".secrets.json");
        let store = SecretStore::open(&path, "pw", KdfParams::insecure_fast()).unwrap();
        let (key, raw) = store.add_api_key("Instructor A", Some("k1")).unwrap();
        assert!(matches!(store.add_api_key("again", Some("k1")), Err(AddKeyError::Exists(_))));
        let (_, generated) = store.add_api_key("Instructor B", None).unwrap();
        assert!(RawApiKey::parse(generated.as_str()).is_some());

        let on_disk = std::fs::read_to_string(&path).unwrap();
        let (_, secret) = RawApiKey::parse(raw.as_str()).unwrap();
        assert!(!on_disk.contains(secret));
        assert!(!on_disk.contains("Instructor A"));

        let reopened = SecretStore::open(&path, "pw", KdfParams::insecure_fast()).unwrap();
        let keys = reopened.api_keys();
        assert_eq!(keys.len(), 2);
        assert_eq!(keys["k1"], key);
        assert!(keys["k1"].verify(secret));
        assert!(SecretStore::open(&path, "wrong", KdfParams::insecure_fast()).is_err());
    }
}
