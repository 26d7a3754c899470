use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BotId, DomainError, GuildId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BotMode {
    #[default]
    Development,
    Production,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotState {
    Stopped,
    Starting,
    Running,
    Error,
}

impl BotState {
    pub fn as_str(self) -> &'static str {
        match self {
            BotState::Stopped => "stopped",
            BotState::Starting => "starting",
            BotState::Running => "running",
            BotState::Error => "error",
        }
    }

    /// stopped→starting→running→stopped, plus any→error→stopped.
    pub fn can_transition(self, to: BotState) -> bool {
        use BotState::*;
        matches!(
            (self, to),
            (Stopped, Starting) | (Starting, Running) | (Running, Stopped) | (Error, Stopped)
        ) || (to == Error && self != Error)
    }
}

impl fmt::Display for BotState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name of the secrets-store entry holding a bot's platform token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenRef(String);

impl TokenRef {
    pub fn for_bot(id: &BotId) -> Self {
        Self(format!("bot-token:{id}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// A registered bot. The token reference is never serialized; it is derived
/// from the id again when a record is loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BotInstanceRepr", into = "BotInstanceRepr")]
pub struct BotInstance {
    pub id: BotId,
    pub name: String,
    pub token_ref: TokenRef,
    pub guild_id: GuildId,
    pub mode: BotMode,
    pub state: BotState,
    pub created_at: Timestamp,
}

#[derive(Serialize, Deserialize)]
struct BotInstanceRepr {
    id: BotId,
    name: String,
    guild_id: GuildId,
    mode: BotMode,
    state: BotState,
    created_at: Timestamp,
}

impl From<BotInstanceRepr> for BotInstance {
    fn from(r: BotInstanceRepr) -> Self {
        Self {
            token_ref: TokenRef::for_bot(&r.id),
            id: r.id,
            name: r.name,
            guild_id: r.guild_id,
            mode: r.mode,
            state: r.state,
            created_at: r.created_at,
        }
    }
}

impl From<BotInstance> for BotInstanceRepr {
    fn from(b: BotInstance) -> Self {
        Self {
            id: b.id,
            name: b.name,
            guild_id: b.guild_id,
            mode: b.mode,
            state: b.state,
            created_at: b.created_at,
        }
    }
}

impl BotInstance {
    pub fn new(id: BotId, name: String, guild_id: GuildId, mode: BotMode, at: Timestamp) -> Self {
        Self {
            token_ref: TokenRef::for_bot(&id),
            id,
            name,
            guild_id,
            mode,
            state: BotState::Stopped,
            created_at: at,
        }
    }

    pub fn transition(&mut self, to: BotState) -> Result<(), DomainError> {
        if !self.state.can_transition(to) {
            return Err(DomainError::InvalidTransition {
                from: self.state.to_string(),
                to: to.to_string(),
            });
        }
        self.state = to;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn bot() -> BotInstance {
        BotInstance::new(
            "b1".into(),
            "Tutorials".into(),
            "guild-1".into(),
            BotMode::Development,
            Utc.with_ymd_and_hms(2025, 4, 1, 9, 0, 0).unwrap(),
        )
    }

    #[test]
    fn lifecycle_transitions() {
        let mut b = bot();
        b.transition(BotState::Starting).unwrap();
        b.transition(BotState::Running).unwrap();
        assert!(b.transition(BotState::Running).is_err());
        assert!(b.transition(BotState::Starting).is_err());
        b.transition(BotState::Stopped).unwrap();
        b.transition(BotState::Error).unwrap();
        assert!(b.transition(BotState::Running).is_err());
        b.transition(BotState::Stopped).unwrap();
    }

    #[test]
    fn token_ref_is_not_serialized() {
        let b = bot();
        let json = serde_json::to_string(&b).unwrap();
        assert!(!json.contains("token"));
        assert!(!json.contains(b.token_ref.as_str()));
    }

    proptest! {
        #[test]
        fn serialized_instance_roundtrips(
            name in "[a-zA-Z0-9 ]{0,20}",
            id in "b[0-9]{1,4}",
            production in any::<bool>(),
            state in 0usize..4,
            secs in 0i64..2_000_000_000,
        ) {
            let b = BotInstance {
                token_ref: TokenRef::for_bot(&BotId::new(id.clone())),
                id: id.into(),
                name,
                guild_id: "g".into(),
                mode: if production { BotMode::Production } else { BotMode::Development },
                state: [BotState::Stopped, BotState::Starting, BotState::Running, BotState::Error][state],
                created_at: Utc.timestamp_opt(secs, 0).unwrap(),
            };
            let back: BotInstance = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
