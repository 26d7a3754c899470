use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelId, DomainError, GroupId, MemberId, SessionId, Timestamp};

/// True iff `code` is exactly four ASCII decimal digits.
pub fn validate_attendance_code(code: &str) -> bool {
    code.len() == 4 && code.bytes().all(|b| b.is_ascii_digit())
}

/// A validated 4-digit attendance code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AttendanceCode(String);

impl AttendanceCode {
    pub fn parse(code: &str) -> Result<Self, DomainError> {
        if validate_attendance_code(code) {
            Ok(Self(code.to_owned()))
        } else {
            Err(DomainError::InvalidCode(code.to_owned()))
        }
    }

    /// Uniform over `0000..=9999`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(format!("{:04}", rng.random_range(0..10_000u32)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AttendanceCode {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<AttendanceCode> for String {
    fn from(code: AttendanceCode) -> Self {
        code.0
    }
}

impl fmt::Display for AttendanceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A tutorial group bound to one channel.
///
/// An empty roster admits every guild member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub channel_id: ChannelId,
    #[serde(default)]
    pub roster: BTreeSet<MemberId>,
}

impl Group {
    pub fn new(id: impl Into<GroupId>, channel_id: impl Into<ChannelId>) -> Self {
        Self {
            id: id.into(),
            channel_id: channel_id.into(),
            roster: BTreeSet::new(),
        }
    }

    pub fn with_roster<I, M>(mut self, members: I) -> Self
    where
        I: IntoIterator<Item = M>,
        M: Into<MemberId>,
    {
        self.roster = members.into_iter().map(Into::into).collect();
        self
    }

    pub fn admits(&self, member: &MemberId) -> bool {
        self.roster.is_empty() || self.roster.contains(member)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.id.is_empty() {
            return Err(DomainError::InvalidInput("group id must not be empty".into()));
        }
        if self.channel_id.is_empty() {
            return Err(DomainError::InvalidInput(format!(
                "group {} has no channel",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckIn {
    pub student_id: MemberId,
    pub display_name: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckInOutcome {
    Recorded,
    AlreadyCheckedIn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendanceSession {
    pub id: SessionId,
    pub group_id: GroupId,
    pub code: AttendanceCode,
    pub state: SessionState,
    pub opened_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Timestamp>,
    #[serde(default)]
    pub checkins: Vec<CheckIn>,
}

impl AttendanceSession {
    pub fn open(id: SessionId, group_id: GroupId, code: AttendanceCode, at: Timestamp) -> Self {
        Self {
            id,
            group_id,
            code,
            state: SessionState::Open,
            opened_at: at,
            closed_at: None,
            checkins: Vec::new(),
        }
    }

    pub fn is_open(&self) -> bool {
        self.state == SessionState::Open
    }

    pub fn has_checked_in(&self, student: &MemberId) -> bool {
        self.checkins.iter().any(|c| &c.student_id == student)
    }

    /// Records a check-in. Idempotent per student.
    pub fn check_in(&mut self, checkin: CheckIn) -> Result<CheckInOutcome, DomainError> {
        if !self.is_open() {
            return Err(DomainError::SessionClosed(self.id.to_string()));
        }
        if checkin.student_id.is_empty() {
            return Err(DomainError::InvalidInput("student id must not be empty".into()));
        }
        if checkin.at < self.opened_at {
            return Err(DomainError::InvalidInput(format!(
                "check-in at {} precedes session start {}",
                checkin.at, self.opened_at
            )));
        }
        if self.has_checked_in(&checkin.student_id) {
            return Ok(CheckInOutcome::AlreadyCheckedIn);
        }
        self.checkins.push(checkin);
        Ok(CheckInOutcome::Recorded)
    }

    pub fn close(&mut self, at: Timestamp) -> Result<(), DomainError> {
        if !self.is_open() {
            return Err(DomainError::SessionClosed(self.id.to_string()));
        }
        let latest = self.checkins.iter().map(|c| c.at).max();
        self.closed_at = Some(latest.map_or(at, |l| l.max(at)).max(self.opened_at));
        self.state = SessionState::Closed;
        Ok(())
    }

    pub fn present_count(&self) -> usize {
        self.checkins.len()
    }

    pub fn summary(&self, roster_size: usize) -> AttendanceSummary {
        AttendanceSummary {
            session_id: self.id.clone(),
            group_id: self.group_id.clone(),
            state: self.state,
            present_count: self.present_count(),
            roster_size,
            opened_at: self.opened_at,
            closed_at: self.closed_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendanceSummary {
    pub session_id: SessionId,
    pub group_id: GroupId,
    pub state: SessionState,
    pub present_count: usize,
    pub roster_size: usize,
    pub opened_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Timestamp>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2025, 4, 1, 10, 0, 0).unwrap()
    }

    fn session() -> AttendanceSession {
        AttendanceSession::open(
            "b1-a0001".into(),
            "g1".into(),
            AttendanceCode::parse("1423").unwrap(),
            t0(),
        )
    }

    fn checkin(id: &str, secs: i64) -> CheckIn {
        CheckIn {
            student_id: id.into(),
            display_name: id.to_uppercase(),
            at: t0() + Duration::seconds(secs),
        }
    }

    #[test]
    fn code_examples() {
        assert!(validate_attendance_code("1423"));
        assert!(!validate_attendance_code(""));
        assert!(!validate_attendance_code("12a4"));
        assert!(!validate_attendance_code("12"));
        assert!(!validate_attendance_code("14235"));
        // Non-ASCII digits are not decimal digits for our purposes.
        assert!(!validate_attendance_code("١٢٣٤"));
    }

    #[test]
    fn code_matches_regex_oracle_over_all_alphanumerics() {
        let oracle = regex::Regex::new(r"^[0-9]{4}$").unwrap();
        let alphabet: Vec<char> = ('0'..='9').chain('a'..='z').collect();
        let mut buf = String::with_capacity(4);
        let mut accepted = 0usize;
        for a in &alphabet {
            for b in &alphabet {
                for c in &alphabet {
                    for d in &alphabet {
                        buf.clear();
                        buf.extend([*a, *b, *c, *d]);
                        let expected = oracle.is_match(&buf);
                        assert_eq!(validate_attendance_code(&buf), expected, "{buf}");
                        accepted += usize::from(expected);
                    }
                }
            }
        }
        assert_eq!(accepted, 10_000);
    }

    #[test]
    fn random_codes_are_valid() {
        let mut rng = rand::rng();
        for _ in 0..1000 {
            let code = AttendanceCode::random(&mut rng);
            assert!(validate_attendance_code(code.as_str()));
        }
    }

    #[test]
    fn code_deserialization_validates() {
        assert!(serde_json::from_str::<AttendanceCode>("\"1423\"").is_ok());
        assert!(serde_json::from_str::<AttendanceCode>("\"14a3\"").is_err());
    }

    #[test]
    fn duplicate_checkin_is_idempotent() {
        let mut s = session();
        assert_eq!(s.check_in(checkin("s1", 5)).unwrap(), CheckInOutcome::Recorded);
        assert_eq!(
            s.check_in(checkin("s1", 9)).unwrap(),
            CheckInOutcome::AlreadyCheckedIn
        );
        assert_eq!(s.present_count(), 1);
        assert_eq!(s.checkins[0].at, t0() + Duration::seconds(5));
    }

    #[test]
    fn closed_session_rejects_checkins() {
        let mut s = session();
        s.close(t0() + Duration::seconds(60)).unwrap();
        assert!(matches!(
            s.check_in(checkin("s1", 61)),
            Err(DomainError::SessionClosed(_))
        ));
        assert!(s.close(t0()).is_err());
    }

    #[test]
    fn close_immediately_has_zero_present() {
        let mut s = session();
        s.close(t0()).unwrap();
        assert_eq!(s.summary(30).present_count, 0);
        assert_eq!(s.closed_at, Some(t0()));
    }

    #[test]
    fn empty_roster_admits_everyone() {
        let open = Group::new("g1", "c1");
        assert!(open.admits(&"anyone".into()));
        let closed = Group::new("g1", "c1").with_roster(["s1"]);
        assert!(closed.admits(&"s1".into()));
        assert!(!closed.admits(&"s2".into()));
    }

    proptest! {
        #[test]
        fn dedup_holds_for_any_insert_sequence(ids in proptest::collection::vec(0u8..20, 0..200)) {
            let mut s = session();
            for (i, id) in ids.iter().enumerate() {
                s.check_in(checkin(&format!("s{id}"), i as i64)).unwrap();
            }
            let distinct: std::collections::BTreeSet<_> = ids.iter().collect();
            prop_assert_eq!(s.present_count(), distinct.len());
            s.close(t0() + Duration::seconds(ids.len() as i64)).unwrap();
            let closed = s.closed_at.unwrap();
            for c in &s.checkins {
                prop_assert!(c.at >= s.opened_at && c.at <= closed);
            }
        }
    }
}
