use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineState {
    Online,
    Offline,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceSnapshot {
    pub online: u64,
    pub offline: u64,
    pub total: u64,
}

/// Summarizes member presence into online/offline/total counts.
pub fn presence_of<'a, I>(states: I) -> PresenceSnapshot
where
    I: IntoIterator<Item = &'a OnlineState>,
{
    let mut snap = PresenceSnapshot::default();
    for s in states {
        match s {
            OnlineState::Online => snap.online += 1,
            OnlineState::Offline => snap.offline += 1,
        }
        snap.total += 1;
    }
    snap
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn examples() {
        let empty: BTreeMap<String, OnlineState> = BTreeMap::new();
        assert_eq!(presence_of(empty.values()), PresenceSnapshot::default());

        let m = BTreeMap::from([
            ("a", OnlineState::Online),
            ("b", OnlineState::Offline),
            ("c", OnlineState::Online),
        ]);
        let snap = presence_of(m.values());
        // filter-count oracle
        let online = m.values().filter(|s| **s == OnlineState::Online).count() as u64;
        assert_eq!(snap, PresenceSnapshot { online, offline: 1, total: 3 });
        assert_eq!(online, 2);

        let big = vec![OnlineState::Online; 150];
        assert_eq!(
            presence_of(&big),
            PresenceSnapshot { online: 150, offline: 0, total: 150 }
        );
    }
}
