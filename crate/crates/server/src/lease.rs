//! Session table and the single-operator control lease.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// 128-bit random session token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub u128);

impl SessionId {
    pub fn random() -> Self {
        Self(rand::random())
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for SessionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SessionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        u128::from_str_radix(&text, 16)
            .map(SessionId)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Operator,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionInfo {
    pub role: Role,
    pub connected_at: f64,
    pub last_activity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseCause {
    Disconnect,
    Released,
    Idle,
}

/// Everything that changed who may command the robot, in the order it
/// happened. Forwarded commands are recorded too so gating can be audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum JournalEntry {
    Granted { epoch: u64, session: SessionId, at: f64 },
    Released { epoch: u64, session: SessionId, at: f64, cause: ReleaseCause },
    Forwarded { session: SessionId, server_seq: u64, at: f64 },
}

/// Lease state. Times are seconds on the caller's monotone clock.
#[derive(Debug)]
pub struct LeaseTable {
    timeout: f64,
    sessions: BTreeMap<SessionId, SessionInfo>,
    holder: Option<SessionId>,
    epoch: u64,
    journal: Vec<JournalEntry>,
    journal_enabled: bool,
}

impl LeaseTable {
    pub fn new(timeout: f64) -> Self {
        Self {
            timeout,
            sessions: BTreeMap::new(),
            holder: None,
            epoch: 0,
            journal: Vec::new(),
            journal_enabled: true,
        }
    }

    /// Stop recording journal entries, for long-running servers.
    pub fn without_journal(mut self) -> Self {
        self.journal_enabled = false;
        self
    }

    pub fn holder(&self) -> Option<SessionId> {
        self.holder
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn timeout(&self) -> f64 {
        self.timeout
    }

    pub fn expires_at(&self) -> Option<f64> {
        let h = self.holder?;
        Some(self.sessions[&h].last_activity + self.timeout)
    }

    pub fn session(&self, id: SessionId) -> Option<&SessionInfo> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&SessionId, &SessionInfo)> {
        self.sessions.iter()
    }

    pub fn role(&self, id: SessionId) -> Option<Role> {
        self.sessions.get(&id).map(|s| s.role)
    }

    pub fn is_holder(&self, id: SessionId) -> bool {
        self.holder == Some(id)
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    fn log(&mut self, entry: JournalEntry) {
        if self.journal_enabled {
            self.journal.push(entry);
        }
    }

    fn grant(&mut self, id: SessionId, now: f64) {
        debug_assert!(self.holder.is_none());
        self.epoch += 1;
        self.holder = Some(id);
        let s = self.sessions.get_mut(&id).expect("granting to a known session");
        s.role = Role::Operator;
        s.last_activity = now;
        let epoch = self.epoch;
        self.log(JournalEntry::Granted { epoch, session: id, at: now });
    }

    fn release(&mut self, now: f64, cause: ReleaseCause) -> Option<SessionId> {
        let id = self.holder.take()?;
        if let Some(s) = self.sessions.get_mut(&id) {
            s.role = Role::Observer;
        }
        let epoch = self.epoch;
        self.log(JournalEntry::Released { epoch, session: id, at: now, cause });
        Some(id)
    }

    /// Register a session. The first session while the lease is free becomes
    /// the operator.
    pub fn connect(&mut self, id: SessionId, now: f64) -> Role {
        self.sessions.insert(
            id,
            SessionInfo {
                role: Role::Observer,
                connected_at: now,
                last_activity: now,
            },
        );
        if self.holder.is_none() {
            self.grant(id, now);
        }
        self.sessions[&id].role
    }

    /// Remove a session; returns whether it held the lease.
    pub fn disconnect(&mut self, id: SessionId, now: f64) -> bool {
        let held = self.is_holder(id);
        if held {
            self.release(now, ReleaseCause::Disconnect);
        }
        self.sessions.remove(&id);
        held
    }

    /// Ask for the lease. Granted only when nobody holds it; a holder asking
    /// again just refreshes its activity.
    pub fn request(&mut self, id: SessionId, now: f64) -> Option<Role> {
        if !self.sessions.contains_key(&id) {
            return None;
        }
        match self.holder {
            None => self.grant(id, now),
            Some(h) if h == id => self.touch(id, now),
            Some(_) => {}
        }
        self.role(id)
    }

    /// Give the lease up voluntarily. Returns whether anything changed.
    pub fn give_up(&mut self, id: SessionId, now: f64) -> bool {
        if self.is_holder(id) {
            self.release(now, ReleaseCause::Released);
            true
        } else {
            false
        }
    }

    pub fn touch(&mut self, id: SessionId, now: f64) {
        if let Some(s) = self.sessions.get_mut(&id) {
            s.last_activity = s.last_activity.max(now);
        }
    }

    /// Revoke an idle lease. Returns the session that lost it.
    pub fn expire(&mut self, now: f64) -> Option<SessionId> {
        let due = self.expires_at()?;
        if now >= due {
            self.release(now, ReleaseCause::Idle)
        } else {
            None
        }
    }

    pub fn record_forward(&mut self, session: SessionId, server_seq: u64, now: f64) {
        self.log(JournalEntry::Forwarded {
            session,
            server_seq,
            at: now,
        });
    }
}

/// Findings from replaying a journal.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct JournalAudit {
    pub grants: usize,
    pub releases: usize,
    pub forwarded: usize,
    /// Grants issued while another session still held the lease.
    pub overlapping_grants: usize,
    /// Forwarded commands whose sender did not hold the lease at that point.
    pub forwarded_from_non_holders: usize,
}

/// Replay a journal independently of [`LeaseTable`] and count violations.
pub fn audit_journal(journal: &[JournalEntry]) -> JournalAudit {
    let mut audit = JournalAudit::default();
    let mut holder: Option<SessionId> = None;
    for entry in journal {
        match entry {
            JournalEntry::Granted { session, .. } => {
                audit.grants += 1;
                if holder.is_some() {
                    audit.overlapping_grants += 1;
                }
                holder = Some(*session);
            }
            JournalEntry::Released { session, .. } => {
                audit.releases += 1;
                if holder == Some(*session) {
                    holder = None;
                }
            }
            JournalEntry::Forwarded { session, .. } => {
                audit.forwarded += 1;
                if holder != Some(*session) {
                    audit.forwarded_from_non_holders += 1;
                }
            }
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u128) -> SessionId {
        SessionId(n)
    }

    #[test]
    fn first_session_operates_second_observes() {
        let mut t = LeaseTable::new(30.0);
        assert_eq!(t.connect(id(1), 0.0), Role::Operator);
        assert_eq!(t.connect(id(2), 0.1), Role::Observer);
        assert_eq!(t.request(id(2), 0.2), Some(Role::Observer));
        assert!(t.is_holder(id(1)));
    }

    #[test]
    fn observer_promoted_after_operator_leaves() {
        let mut t = LeaseTable::new(30.0);
        t.connect(id(1), 0.0);
        t.connect(id(2), 0.0);
        assert!(t.disconnect(id(1), 1.0));
        assert_eq!(t.holder(), None);
        assert_eq!(t.request(id(2), 1.1), Some(Role::Operator));
        assert_eq!(t.epoch(), 2);
    }

    #[test]
    fn idle_operator_loses_lease() {
        let mut t = LeaseTable::new(30.0);
        t.connect(id(1), 0.0);
        t.touch(id(1), 10.0);
        assert_eq!(t.expire(39.9), None);
        assert_eq!(t.expire(40.0), Some(id(1)));
        assert_eq!(t.role(id(1)), Some(Role::Observer));
        assert_eq!(t.request(id(1), 41.0), Some(Role::Operator));
    }

    #[test]
    fn voluntary_release() {
        let mut t = LeaseTable::new(30.0);
        t.connect(id(1), 0.0);
        assert!(!t.give_up(id(2), 0.5));
        assert!(t.give_up(id(1), 1.0));
        assert_eq!(t.holder(), None);
    }

    #[test]
    fn unknown_sessions_cannot_request() {
        let mut t = LeaseTable::new(30.0);
        assert_eq!(t.request(id(9), 0.0), None);
        assert_eq!(t.holder(), None);
    }

    #[test]
    fn audit_flags_overlaps_and_stray_forwards() {
        let j = vec![
            JournalEntry::Granted { epoch: 1, session: id(1), at: 0.0 },
            JournalEntry::Forwarded { session: id(1), server_seq: 1, at: 0.1 },
            JournalEntry::Granted { epoch: 2, session: id(2), at: 0.2 },
            JournalEntry::Forwarded { session: id(1), server_seq: 2, at: 0.3 },
        ];
        let a = audit_journal(&j);
        assert_eq!(a.overlapping_grants, 1);
        assert_eq!(a.forwarded_from_non_holders, 1);
    }

    #[test]
    fn session_id_text_round_trip() {
        let s = SessionId(0xdead_beef);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "\"000000000000000000000000deadbeef\"");
        assert_eq!(serde_json::from_str::<SessionId>(&text).unwrap(), s);
    }
}
